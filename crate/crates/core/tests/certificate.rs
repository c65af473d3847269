use nlperim_core::calibration::certificate;
use nlperim_core::domain::indicator_halfspace;
use nlperim_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn halfspace_certificate_bounds_random_competitors() {
    let h = 1.0 / 24.0;
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 1.0).unwrap(), h).unwrap();
    let k = KernelSpec::indicator(2, 1.0).unwrap();
    let n = [0.6, 0.8];
    let u = indicator_halfspace(&g, &n, 0.0).unwrap();
    let e = Energy::new(&g, &k).unwrap();
    let cal = Calibration::halfspace_sign(&n).unwrap();
    let sharp = certificate(&cal, &u, &u, &e).unwrap();
    assert!(sharp.gap.abs() <= 1e-6 * sharp.b0);
    assert!(sharp.normal_violation_fraction == 0.0);
    let cert = Certifier::new(&cal, &e, &u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let v = ScalarField::with_datum(&u, |_, _| rng.gen::<f64>()).unwrap();
        let r = cert.certify(&v).unwrap();
        assert!(r.lower_bound_holds());
        assert!(r.identity_residual <= 1e-9 * (r.a.abs() + r.b1.abs() + 1.0));
        assert!(r.energy_of_candidate >= sharp.b0 - 1e-9);
    }
}

#[test]
fn tree_reduction_stays_close_to_ordered() {
    let h = 1.0 / 32.0;
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.5).unwrap(), h).unwrap();
    let k = KernelSpec::indicator(2, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = ScalarField::from_fn(g.clone(), |_| rng.gen::<f64>()).unwrap();
    let a = Energy::new(&g, &k).unwrap().evaluate(&u).unwrap().total;
    let b = Energy::new(&g, &k).unwrap().with_reduction(Reduction::Tree).evaluate(&u).unwrap().total;
    assert!((a - b).abs() <= 1e-13 * a);
}
