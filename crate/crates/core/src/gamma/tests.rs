use super::*;
use crate::domain::{indicator_halfspace, DomainSpec, Grid};
use crate::kernels::{DecayBound, PointFn};
use alloc::sync::Arc;
use alloc::vec;
use approx::assert_relative_eq;
use core::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(1 + x₀²/(2|x|²)) 1{|x| <= 1}`: even, compact, not radial.
fn anisotropic(dim: usize) -> KernelSpec {
    let f: PointFn = Arc::new(|x: &[f64]| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        if r2 > 1.0 || r2 == 0.0 {
            0.0
        } else {
            1.0 + 0.5 * x[0] * x[0] / r2
        }
    });
    let decay = DecayBound {
        exponent: 4.0,
        constant: 0.0,
        from_radius: 1.0,
        exact: false,
    };
    KernelSpec::custom(dim, f, Some(1.0), 0.0, decay).unwrap()
}

#[test]
fn sigma_of_indicator_kernels() {
    let k1 = KernelSpec::indicator(1, 1.0).unwrap();
    // ½ ∫_{-1}^{1} |z| dz
    assert!((sigma_k(&k1, &[1.0]).unwrap() - 0.5).abs() <= 1e-10);
    assert!((sigma_k(&k1, &[-1.0]).unwrap() - 0.5).abs() <= 1e-10);
    let k2 = KernelSpec::indicator(2, 1.0).unwrap();
    for i in 0..16 {
        let t = 2.0 * PI * i as f64 / 16.0;
        let s = sigma_k(&k2, &[t.cos(), t.sin()]).unwrap();
        assert!((s - 2.0 / 3.0).abs() <= 1e-10, "{s}");
    }
    // ∫_{B₁} |z₃| dz = π/2 in d = 3
    let k3 = KernelSpec::indicator(3, 1.0).unwrap();
    assert_relative_eq!(sigma_k(&k3, &[0.0, 0.6, 0.8]).unwrap(), PI / 4.0, max_relative = 1e-10);
}

#[test]
fn radial_closed_forms() {
    let k1 = KernelSpec::indicator(1, 1.0).unwrap();
    assert_relative_eq!(sigma_k_radial(&k1).unwrap(), 0.5, max_relative = 1e-12);
    // M = 2π/3, average of |e·e₂| over the circle = 2/π
    let k2 = KernelSpec::indicator(2, 1.0).unwrap();
    assert_relative_eq!(sigma_k_radial(&k2).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
    let norm = LimitNorm::new(&k2, 16).unwrap();
    assert!(norm.isotropy_defect().unwrap() <= 1e-3);
    assert_relative_eq!(norm.omega, 2.0, max_relative = 1e-12);
    assert_relative_eq!(norm.first_moment, 2.0 * PI / 3.0, max_relative = 1e-12);
    assert!(matches!(sigma_k_radial(&anisotropic(2)), Err(Error::NotRadial)));
}

#[test]
fn anisotropic_sigma_matches_polar_oracle() {
    let k = anisotropic(2);
    // (1/6) ∫ |sin θ| (1 + cos²θ / 2) dθ and the same with |cos θ|
    assert_relative_eq!(sigma_k(&k, &[0.0, 1.0]).unwrap(), 7.0 / 9.0, max_relative = 1e-10);
    assert_relative_eq!(sigma_k(&k, &[1.0, 0.0]).unwrap(), 8.0 / 9.0, max_relative = 1e-10);
}

#[test]
fn sigma_is_even_homogeneous_and_convex() {
    let k = anisotropic(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let sp = sigma_k(&k, &p).unwrap();
        let sq = sigma_k(&k, &q).unwrap();
        assert_relative_eq!(sigma_k(&k, &[2.0 * p[0], 2.0 * p[1]]).unwrap(), 2.0 * sp, max_relative = 1e-12);
        assert_relative_eq!(sigma_k(&k, &[-p[0], -p[1]]).unwrap(), sp, max_relative = 1e-12);
        let mid = sigma_k(&k, &[0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]).unwrap();
        assert!(mid <= 0.5 * (sp + sq) + 1e-12);
    }
    assert_eq!(sigma_k(&k, &[0.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn non_integrable_first_moment_is_rejected() {
    let k = KernelSpec::fractional_isotropic(2, 0.5).unwrap();
    assert!(matches!(sigma_k(&k, &[1.0, 0.0]), Err(Error::InfiniteFirstMoment)));
    assert!(matches!(LimitNorm::new(&k, 4), Err(Error::InfiniteFirstMoment)));
}

#[test]
fn polyhedral_limit() {
    let k = KernelSpec::indicator(2, 1.0).unwrap();
    assert_eq!(j0_polyhedral(&[], &k).unwrap(), 0.0);
    let chord = Facet::halfspace_in_ball(&[0.0, 1.0], 0.0, 1.0).unwrap();
    assert_relative_eq!(chord.area, 2.0, max_relative = 1e-12);
    assert_relative_eq!(j0_polyhedral(&[chord], &k).unwrap(), 4.0 / 3.0, max_relative = 1e-10);
    let side = 0.4;
    let square: Vec<Facet> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
        .iter()
        .map(|n| Facet {
            normal: n.to_vec(),
            area: side,
        })
        .collect();
    assert_relative_eq!(j0_polyhedral(&square, &k).unwrap(), 4.0 * side * 2.0 / 3.0, max_relative = 1e-10);
}

#[test]
fn one_dimensional_sweep_is_exact() {
    let eps = [0.5, 0.25, 0.125];
    let h = 0.125 / 8.0;
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0], 1.0, 0.5).unwrap(), h).unwrap();
    let set = indicator_halfspace(&g, &[1.0], 0.0).unwrap();
    let k = KernelSpec::indicator(1, 1.0).unwrap();
    let j0 = j0_polyhedral(&[Facet::halfspace_in_ball(&[1.0], 0.0, 1.0).unwrap()], &k).unwrap();
    let rep = gamma_sweep(&set, "H", j0, &k, &eps).unwrap();
    for row in &rep.rows {
        assert!(row.relative_error <= 1e-9, "{row:?}");
        assert_eq!(row.j2, 0.0);
    }
}

#[test]
fn sweep_preconditions() {
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.25).unwrap(), 0.05).unwrap();
    let set = indicator_halfspace(&g, &[0.0, 1.0], 0.0).unwrap();
    let k = KernelSpec::indicator(2, 1.0).unwrap();
    assert!(matches!(
        gamma_sweep(&set, "H", 4.0 / 3.0, &k, &[0.4, 0.3]),
        Err(Error::GridTooCoarse { .. })
    ));
    assert!(matches!(
        gamma_sweep(&set, "H", 4.0 / 3.0, &k, &[0.2, 0.4]),
        Err(Error::InvalidSweep(_))
    ));
    let fine = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.25).unwrap(), 0.025).unwrap();
    let set = indicator_halfspace(&fine, &[0.0, 1.0], 0.0).unwrap();
    assert!(matches!(
        gamma_sweep(&set, "H", 4.0 / 3.0, &k, &[0.3, 0.2]),
        Err(Error::MarginTooSmall { .. })
    ));
}

#[test]
fn rate_fit_recovers_power_law() {
    let rows: Vec<GammaRow> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&e| GammaRow {
            eps: e,
            j1: 0.0,
            j2: 0.0,
            j: 0.0,
            j0: 1.0,
            relative_error: 3.0 * e * e,
        })
        .collect();
    assert_relative_eq!(fit_rate(&rows).unwrap(), 2.0, max_relative = 1e-12);
    assert_eq!(fit_rate(&rows[..1]), None);
}

#[test]
fn cross_term_difference_respects_bound() {
    let h = 1.0 / 80.0;
    let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.2).unwrap(), h).unwrap();
    let k = KernelSpec::indicator(2, 1.0).unwrap();
    let href = indicator_halfspace(&g, &[0.0, 1.0], 0.0).unwrap();
    let mut pert = href.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for &c in g.interior_cells() {
        let x = g.center(c);
        if x[0] * x[0] + x[1] * x[1] < 0.75 * 0.75 && rng.gen::<f64>() < 0.1 {
            pert.set(c, 1.0 - href.value(c)).unwrap();
        }
    }
    for row in cross_term_check(&href, &pert, &k, &[0.2, 0.1], 0.25).unwrap() {
        assert!(row.measured <= row.bound + 1e-6);
    }
}
