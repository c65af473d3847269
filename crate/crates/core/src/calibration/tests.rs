use super::*;
use crate::domain::{indicator_halfspace, DomainSpec, Grid};
use crate::kernels::KernelSpec;
use alloc::vec;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc_energy(h: f64) -> Energy {
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 0.5, 0.3).unwrap(), h).unwrap();
    Energy::new(&g, &KernelSpec::indicator(2, 0.3).unwrap()).unwrap()
}

fn cell_near(energy: &Energy, p: [f64; 2]) -> usize {
    let g = energy.grid();
    (0..g.len())
        .min_by(|&a, &b| {
            let da = (g.center(a)[0] - p[0]).powi(2) + (g.center(a)[1] - p[1]).powi(2);
            let db = (g.center(b)[0] - p[0]).powi(2) + (g.center(b)[1] - p[1]).powi(2);
            da.total_cmp(&db)
        })
        .unwrap()
}

fn random_competitor(datum: &ScalarField, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::with_datum(datum, |_, _| rng.gen::<f64>()).unwrap()
}

/// `y − x` from integer cell offsets.
fn offset(g: &Grid, x: usize, y: usize) -> [f64; 2] {
    let (ix, iy) = (g.multi_index(x), g.multi_index(y));
    let h = g.spacing();
    [
        (iy[0] as f64 - ix[0] as f64) * h,
        (iy[1] as f64 - ix[1] as f64) * h,
    ]
}

/// Direct double loop with midpoint kernel values.
fn brute_force_ab(cal: &Calibration, energy: &Energy, v: &ScalarField) -> (f64, f64, f64) {
    let g = energy.grid();
    let k = energy.kernel();
    let (mut a, mut b1, mut b0) = (0.0, 0.0, 0.0);
    for x in 0..g.len() {
        if g.tag(x) != CellTag::Interior {
            continue;
        }
        let cx = g.center(x);
        for y in 0..g.len() {
            if y == x {
                continue;
            }
            let cy = g.center(y);
            let z = offset(g, x, y);
            let kz = k.eval(&[cy[0] - cx[0], cy[1] - cx[1]]).unwrap() * cal.eval(&[0.0, 0.0], &z);
            match g.tag(y) {
                CellTag::Interior => a += 0.5 * kz * (v.value(y) - v.value(x)),
                CellTag::Exterior => {
                    b1 -= kz * v.value(x);
                    b0 += kz * v.value(y);
                }
            }
        }
    }
    let s = g.cell_volume() * g.cell_volume();
    (a * s, b1 * s, b0 * s)
}

#[test]
fn halfspace_sign_is_bounded_and_odd() {
    let en = disc_energy(0.05);
    let cal = Calibration::halfspace_sign(&[0.6, 0.8]).unwrap();
    assert!(cal.max_abs_sampled(&en).unwrap() <= 1.0 + 1e-12);
    assert_eq!(cal.antisymmetry_defect(&en).unwrap(), 0.0);
    assert!(matches!(Calibration::halfspace_sign(&[1.0, 1.0]), Err(Error::NonUnitNormal(_))));
}

#[test]
fn antisymmetrize_examples() {
    let x = [0.1, -0.2];
    let ys = [[0.3, 0.4], [-0.5, 0.0], [0.1, -0.2], [0.0, 0.7]];
    let one = Calibration::general(2, "one", false, |_, _| 1.0).antisymmetrize();
    assert!(one.is_antisymmetric());
    let hs = Calibration::halfspace_sign(&[0.0, 1.0]).unwrap();
    let hs2 = hs.antisymmetrize();
    let skew = Calibration::general(2, "skew", false, |x, y| 0.3 * x[0] - 0.7 * y[1]);
    let once = skew.antisymmetrize();
    let twice = once.antisymmetrize();
    for y in ys {
        assert_eq!(one.eval(&x, &y), 0.0);
        assert_eq!(hs2.eval(&x, &y), hs.eval(&x, &y));
        assert_eq!(twice.eval(&x, &y), once.eval(&x, &y));
        assert_eq!(once.eval(&x, &y), -once.eval(&y, &x));
    }
}

#[test]
fn divergence_of_zero_and_halfspace_vanishes() {
    let en = disc_energy(0.05);
    let radii = default_radii(0.05);
    let zero = Calibration::general(2, "zero", true, |_, _| 0.0);
    let c = cell_near(&en, [0.1, 0.2]);
    assert!(check_divergence(&zero, &en, c, &radii).unwrap().residuals.iter().all(|r| *r == 0.0));
    for n in [[0.0, 1.0], [0.6, 0.8], [-0.28, 0.96]] {
        let cal = Calibration::halfspace_sign(&n).unwrap();
        for chk in check_divergence_all(&cal, &en, &radii).unwrap() {
            assert!(chk.residuals.iter().all(|r| *r == 0.0));
            assert!(chk.trend_ok());
        }
    }
}

#[test]
fn broken_calibration_has_divergence() {
    let en = disc_energy(0.025);
    let g = en.grid().clone();
    let broken = Calibration::general(2, "broken", false, |x, y| {
        math::sign(y[0] - x[0]) * if y[0] > 0.0 { 1.0 } else { 0.0 }
    });
    let radii = default_radii(g.spacing());
    let c = cell_near(&en, [0.1, 0.0]);
    let chk = check_divergence(&broken, &en, c, &radii).unwrap();
    // direct quadrature over all cells at distance >= r
    let cx = g.center(c);
    for (r, res) in radii.iter().zip(&chk.residuals) {
        let mut acc = 0.0;
        for y in 0..g.len() {
            let cy = g.center(y);
            let z = offset(&g, c, y);
            if y == c || math::norm(&z) < *r {
                continue;
            }
            let k = en.kernel().eval(&z).unwrap();
            acc += k * (broken.eval(&cy[..2], &cx[..2]) - broken.eval(&cx[..2], &cy[..2]));
        }
        assert_relative_eq!(*res, acc * g.cell_volume(), max_relative = 1e-12);
    }
    assert!(chk.last().abs() > 0.05);
    assert!(!chk.trend_ok());
}

#[test]
fn radii_are_validated() {
    let en = disc_energy(0.05);
    let cal = Calibration::halfspace_sign(&[0.0, 1.0]).unwrap();
    for radii in [vec![], vec![0.1, 0.2], vec![0.1, -0.05], vec![0.1, 0.1]] {
        assert!(matches!(
            check_divergence(&cal, &en, 0, &radii),
            Err(Error::InvalidCalibration(_))
        ));
    }
}

#[test]
fn normal_condition_examples() {
    let en = disc_energy(0.05);
    let g = en.grid().clone();
    let n = [0.6, 0.8];
    let cal = Calibration::halfspace_sign(&n).unwrap();
    let flipped = Calibration::halfspace_sign(&[-0.6, -0.8]).unwrap();
    let c = ScalarField::from_fn(g.clone(), |_| 0.3).unwrap();
    assert_eq!(check_normal_condition(&cal, &en, &c).unwrap().violation_fraction, 0.0);
    let chi = indicator_halfspace(&g, &n, 0.05).unwrap();
    let ok = check_normal_condition(&cal, &en, &chi).unwrap();
    assert_eq!(ok.violation_fraction, 0.0);
    assert!(ok.worst_pair.unwrap().2 <= 0.0);
    let bad = check_normal_condition(&flipped, &en, &chi).unwrap();
    assert_eq!(bad.violation_fraction, 1.0);
    assert_relative_eq!(bad.worst_pair.unwrap().2, 2.0);
}

#[test]
fn halfspace_certificate_is_sharp() {
    let en = disc_energy(0.05);
    let n = [0.6, 0.8];
    let cal = Calibration::halfspace_sign(&n).unwrap();
    let chi = indicator_halfspace(en.grid(), &n, 0.05).unwrap();
    let rep = certificate(&cal, &chi, &chi, &en).unwrap();
    assert!(rep.gap.abs() <= rep.tol);
    assert!(rep.gap <= 1e-6 * rep.b0);
    assert_eq!(rep.normal_violation_fraction, 0.0);
    assert!(rep.divergence_residuals.iter().all(|(_, r)| *r == 0.0));
    assert!(rep.b0 > 0.0);
}

#[test]
fn perturbed_competitor_has_positive_gap() {
    let en = disc_energy(0.05);
    let n = [0.0, 1.0];
    let cal = Calibration::halfspace_sign(&n).unwrap();
    let chi = indicator_halfspace(en.grid(), &n, 0.0).unwrap();
    let cert = Certifier::new(&cal, &en, &chi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut v = chi.clone();
    let interior = en.grid().interior_cells().to_vec();
    for _ in 0..interior.len() / 20 {
        let c = interior[rng.gen_range(0..interior.len())];
        v.set(c, 1.0 - chi.value(c)).unwrap();
    }
    let rep = cert.certify(&v).unwrap();
    let direct = en.evaluate(&v).unwrap().total - cert.certify(&chi).unwrap().b0;
    assert!(rep.gap > 0.0);
    assert_relative_eq!(rep.gap, direct, max_relative = 1e-12);
}

#[test]
fn identity_matches_direct_summation() {
    let en = disc_energy(0.05);
    let n = [0.6, 0.8];
    let cal = Calibration::halfspace_sign(&n).unwrap();
    let chi = indicator_halfspace(en.grid(), &n, -0.1).unwrap();
    let cert = Certifier::new(&cal, &en, &chi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let v = random_competitor(&chi, &mut rng);
        let rep = cert.certify(&v).unwrap();
        let (a, b1, b0) = brute_force_ab(&cal, &en, &v);
        assert_relative_eq!(rep.a, a, max_relative = 1e-11);
        assert_relative_eq!(rep.b1, b1, max_relative = 1e-11);
        assert_relative_eq!(rep.b0, b0, max_relative = 1e-11);
        assert!(rep.identity_residual.abs() <= 1e-9 * (a.abs() + b1.abs() + 1.0));
        assert!(rep.lower_bound_holds());
    }
}

#[test]
fn general_and_displacement_forms_agree() {
    let en = disc_energy(0.05);
    let chi = indicator_halfspace(en.grid(), &[0.0, 1.0], 0.0).unwrap();
    let disp = Calibration::halfspace_sign(&[0.0, 1.0]).unwrap();
    let gen = Calibration::general(2, "g", true, |x, y| math::sign(y[1] - x[1]));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = random_competitor(&chi, &mut rng);
    let a = certificate(&disp, &chi, &v, &en).unwrap();
    let b = certificate(&gen, &chi, &v, &en).unwrap();
    assert_eq!(a.a, b.a);
    assert_eq!(a.b1, b.b1);
    assert_eq!(a.b0, b.b0);
}

#[test]
fn rejects_bad_inputs() {
    let en = disc_energy(0.05);
    let chi = indicator_halfspace(en.grid(), &[0.0, 1.0], 0.0).unwrap();
    let two = Calibration::general(2, "two", false, |_, _| 2.0);
    assert!(matches!(Certifier::new(&two, &en, &chi), Err(Error::InvalidCalibration(_))));
    let cal = Calibration::halfspace_sign(&[0.0, 1.0]).unwrap();
    let other = indicator_halfspace(en.grid(), &[1.0, 0.0], 0.0).unwrap();
    assert!(matches!(
        certificate(&cal, &chi, &other, &en),
        Err(Error::ExteriorMismatch(_))
    ));
    let one_d = Calibration::halfspace_sign(&[1.0]).unwrap();
    assert!(matches!(
        check_normal_condition(&one_d, &en, &chi),
        Err(Error::DimensionMismatch { .. })
    ));
}
