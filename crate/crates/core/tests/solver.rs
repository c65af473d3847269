use nlperim_core::domain::{indicator_halfspace, symdiff_measure};
use nlperim_core::solver::minimize;
use nlperim_core::*;

fn halfspace_problem(h: f64) -> (ScalarField, KernelSpec) {
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 1.0).unwrap(), h).unwrap();
    (indicator_halfspace(&g, &[0.0, 1.0], 0.0).unwrap(), KernelSpec::indicator(2, 1.0).unwrap())
}

#[test]
fn recovers_halfspace_from_one_half() {
    let h = 1.0 / 32.0;
    let (datum, k) = halfspace_problem(h);
    let mut opts = SolveOptions::for_spacing(h);
    opts.reference = Some(Reference::Halfspace {
        normal: vec![0.0, 1.0],
        offset: 0.0,
    });
    let rep = minimize(&datum, &k, &opts).unwrap();
    assert!(symdiff_measure(&rep.rounded, &datum).unwrap() <= 6.0 * h);
    assert!(rep.monotonicity_defect.unwrap() <= 1e-2);
    let j_star = energy::energy(&datum, &k).unwrap().total;
    assert!(rep.rounded_perimeter <= j_star + 1e-9);
    assert!(rep.energy <= j_star + rep.smoothing_gap + 1e-6);
}

#[test]
fn accepted_iterates_decrease_and_random_starts_agree() {
    let h = 1.0 / 16.0;
    let (datum, k) = halfspace_problem(h);
    let j_star = energy::energy(&datum, &k).unwrap().total;
    for seed in 0..3 {
        let mut opts = SolveOptions::for_spacing(h);
        opts.init = Init::Random;
        opts.seed = seed;
        let rep = minimize(&datum, &k, &opts).unwrap();
        for w in rep.trace.windows(2).filter(|w| w[0].stage == w[1].stage) {
            assert!(w[1].smoothed <= w[0].smoothed + 1e-12 * w[0].smoothed.abs());
        }
        assert!((rep.rounded_perimeter - j_star).abs() <= 1e-9 * j_star, "seed {seed}");
    }
}

#[test]
fn stage_rescaling_and_plain_warm_starts_reach_the_same_minimum() {
    let h = 1.0 / 16.0;
    let (datum, k) = halfspace_problem(h);
    let mut a = SolveOptions::for_spacing(h);
    let mut b = a.clone();
    a.rescale_stages = true;
    b.rescale_stages = false;
    let ra = minimize(&datum, &k, &a).unwrap();
    let rb = minimize(&datum, &k, &b).unwrap();
    let gap = ra.smoothing_gap.max(rb.smoothing_gap);
    assert!((ra.energy - rb.energy).abs() <= 2.0 * gap + 1e-6);
    assert_eq!(symdiff_measure(&ra.rounded, &rb.rounded).unwrap(), 0.0);
}

#[test]
fn fractional_kernel_stays_near_halfspace() {
    let h = 1.0 / 16.0;
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.5).unwrap(), h).unwrap();
    let datum = indicator_halfspace(&g, &[0.6, 0.8], 0.0).unwrap();
    let k = KernelSpec::fractional_isotropic(2, 0.5).unwrap();
    let mut opts = SolveOptions::for_spacing(h);
    opts.init = Init::Datum;
    let rep = minimize(&datum, &k, &opts).unwrap();
    assert!(symdiff_measure(&rep.rounded, &datum).unwrap() <= 6.0 * h);
    assert!(rep.rounded_perimeter <= energy::energy(&datum, &k).unwrap().total + 1e-9);
}
