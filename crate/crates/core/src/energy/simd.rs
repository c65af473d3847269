//! Inner pair loops over one contiguous partner segment.
//!
//! Both loops keep eight interleaved partial sums (lane `l` takes elements
//! `i ≡ l mod 8`), fold them as `((s0 + s4) + (s1 + s5)) + ((s2 + s6) + (s3 + s7))`
//! and avoid fused multiply-add, so the vector and portable versions round
//! identically and results do not depend on which one the CPU selects.

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Isa {
    Portable,
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    Avx2,
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    Avx512,
}

impl Isa {
    pub(crate) fn detect() -> Self {
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        {
            if std::is_x86_feature_detected!("avx512f") {
                return Isa::Avx512;
            }
            if std::is_x86_feature_detected!("avx2") {
                return Isa::Avx2;
            }
        }
        Isa::Portable
    }
}

#[inline(always)]
fn fold(v: [f64; LANES]) -> f64 {
    ((v[0] + v[4]) + (v[1] + v[5])) + ((v[2] + v[6]) + (v[3] + v[7]))
}

/// `(Σ w·pw·|u − ux|, Σ w·ext·|u − ux|)`.
#[inline(always)]
pub(crate) fn abs_sums(isa: Isa, w: &[f64], u: &[f64], pw: &[f64], ext: &[f64], ux: f64) -> [f64; 2] {
    let n = w.len();
    let (u, pw, ext) = (&u[..n], &pw[..n], &ext[..n]);
    match isa {
        Isa::Portable => abs_sums_portable(w, u, pw, ext, ux),
        // SAFETY: the variants are only constructed after detecting the
        // feature, and all slices have length `n`.
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        Isa::Avx2 => unsafe { x86::abs_sums_avx2(w, u, pw, ext, ux) },
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        Isa::Avx512 => unsafe { x86::abs_sums_avx512(w, u, pw, ext, ux) },
    }
}

#[inline(always)]
fn abs_tail(a: &mut [f64; LANES], b: &mut [f64; LANES], w: &[f64], u: &[f64], pw: &[f64], ext: &[f64], ux: f64, from: usize) {
    for (l, i) in (from..w.len()).enumerate() {
        let t = w[i] * (u[i] - ux).abs();
        a[l] += t * pw[i];
        b[l] += t * ext[i];
    }
}

fn abs_sums_portable(w: &[f64], u: &[f64], pw: &[f64], ext: &[f64], ux: f64) -> [f64; 2] {
    let n = w.len();
    let split = n - n % LANES;
    let mut a = [0.0; LANES];
    let mut b = [0.0; LANES];
    for i in (0..split).step_by(LANES) {
        for l in 0..LANES {
            let t = w[i + l] * (u[i + l] - ux).abs();
            a[l] += t * pw[i + l];
            b[l] += t * ext[i + l];
        }
    }
    abs_tail(&mut a, &mut b, w, u, pw, ext, ux, split);
    [fold(a), fold(b)]
}

/// `[Σ w·pw·φ_δ(ux − u), Σ w·pw·|ux − u|, Σ w·φ'_δ(ux − u)]` with
/// `inv = 1/δ`.
#[inline(always)]
pub(crate) fn huber_sums(isa: Isa, w: &[f64], u: &[f64], pw: &[f64], ux: f64, delta: f64, inv: f64) -> [f64; 3] {
    let n = w.len();
    let (u, pw) = (&u[..n], &pw[..n]);
    match isa {
        Isa::Portable => huber_sums_portable(w, u, pw, ux, delta, inv),
        // SAFETY: as in `abs_sums`.
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        Isa::Avx2 => unsafe { x86::huber_sums_avx2(w, u, pw, ux, delta, inv) },
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        Isa::Avx512 => unsafe { x86::huber_sums_avx512(w, u, pw, ux, delta, inv) },
    }
}

#[inline(always)]
fn huber_terms(w: f64, u: f64, pw: f64, ux: f64, delta: f64, inv: f64, half_inv: f64) -> [f64; 3] {
    let t = ux - u;
    let a = t.abs();
    let c = a.min(delta);
    let wp = w * pw;
    let phi = (c * c) * half_inv + (a - c);
    let g = (t * inv).min(1.0).max(-1.0);
    [wp * phi, wp * a, w * g]
}

#[inline(always)]
fn huber_tail(s: &mut [[f64; LANES]; 3], w: &[f64], u: &[f64], pw: &[f64], ux: f64, delta: f64, inv: f64, from: usize) {
    let half_inv = 0.5 * inv;
    for (l, i) in (from..w.len()).enumerate() {
        let r = huber_terms(w[i], u[i], pw[i], ux, delta, inv, half_inv);
        for k in 0..3 {
            s[k][l] += r[k];
        }
    }
}

fn huber_sums_portable(w: &[f64], u: &[f64], pw: &[f64], ux: f64, delta: f64, inv: f64) -> [f64; 3] {
    let n = w.len();
    let split = n - n % LANES;
    let half_inv = 0.5 * inv;
    let mut s = [[0.0; LANES]; 3];
    for i in (0..split).step_by(LANES) {
        for l in 0..LANES {
            let r = huber_terms(w[i + l], u[i + l], pw[i + l], ux, delta, inv, half_inv);
            for k in 0..3 {
                s[k][l] += r[k];
            }
        }
    }
    huber_tail(&mut s, w, u, pw, ux, delta, inv, split);
    [fold(s[0]), fold(s[1]), fold(s[2])]
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod x86 {
    use super::{abs_tail, fold, huber_tail, LANES};
    use core::arch::x86_64::*;

    #[inline(always)]
    unsafe fn lanes2(lo: __m256d, hi: __m256d) -> [f64; LANES] {
        let mut out = [0.0; LANES];
        _mm256_storeu_pd(out.as_mut_ptr(), lo);
        _mm256_storeu_pd(out.as_mut_ptr().add(4), hi);
        out
    }

    #[inline(always)]
    unsafe fn lanes8(v: __m512d) -> [f64; LANES] {
        let mut out = [0.0; LANES];
        _mm512_storeu_pd(out.as_mut_ptr(), v);
        out
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn abs_sums_avx2(w: &[f64], u: &[f64], pw: &[f64], ext: &[f64], ux: f64) -> [f64; 2] {
        let n = w.len();
        let split = n - n % LANES;
        let sign = _mm256_set1_pd(-0.0);
        let vx = _mm256_set1_pd(ux);
        let mut acc = [_mm256_setzero_pd(); 4];
        let mut i = 0;
        while i < split {
            for h in 0..2 {
                let j = i + 4 * h;
                let wv = _mm256_loadu_pd(w.as_ptr().add(j));
                let uv = _mm256_loadu_pd(u.as_ptr().add(j));
                let t = _mm256_mul_pd(wv, _mm256_andnot_pd(sign, _mm256_sub_pd(uv, vx)));
                acc[h] = _mm256_add_pd(acc[h], _mm256_mul_pd(t, _mm256_loadu_pd(pw.as_ptr().add(j))));
                acc[2 + h] = _mm256_add_pd(acc[2 + h], _mm256_mul_pd(t, _mm256_loadu_pd(ext.as_ptr().add(j))));
            }
            i += LANES;
        }
        let (mut a, mut b) = (lanes2(acc[0], acc[1]), lanes2(acc[2], acc[3]));
        abs_tail(&mut a, &mut b, w, u, pw, ext, ux, split);
        [fold(a), fold(b)]
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn abs_sums_avx512(w: &[f64], u: &[f64], pw: &[f64], ext: &[f64], ux: f64) -> [f64; 2] {
        let n = w.len();
        let split = n - n % LANES;
        let vx = _mm512_set1_pd(ux);
        let mut a = _mm512_setzero_pd();
        let mut b = _mm512_setzero_pd();
        let mut i = 0;
        while i < split {
            let wv = _mm512_loadu_pd(w.as_ptr().add(i));
            let uv = _mm512_loadu_pd(u.as_ptr().add(i));
            let t = _mm512_mul_pd(wv, _mm512_abs_pd(_mm512_sub_pd(uv, vx)));
            a = _mm512_add_pd(a, _mm512_mul_pd(t, _mm512_loadu_pd(pw.as_ptr().add(i))));
            b = _mm512_add_pd(b, _mm512_mul_pd(t, _mm512_loadu_pd(ext.as_ptr().add(i))));
            i += LANES;
        }
        let (mut a, mut b) = (lanes8(a), lanes8(b));
        abs_tail(&mut a, &mut b, w, u, pw, ext, ux, split);
        [fold(a), fold(b)]
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn huber_sums_avx2(w: &[f64], u: &[f64], pw: &[f64], ux: f64, delta: f64, inv: f64) -> [f64; 3] {
        let n = w.len();
        let split = n - n % LANES;
        let sign = _mm256_set1_pd(-0.0);
        let vx = _mm256_set1_pd(ux);
        let vd = _mm256_set1_pd(delta);
        let vi = _mm256_set1_pd(inv);
        let vh = _mm256_set1_pd(0.5 * inv);
        let one = _mm256_set1_pd(1.0);
        let minus_one = _mm256_set1_pd(-1.0);
        let mut s = [[_mm256_setzero_pd(); 2]; 3];
        let mut i = 0;
        while i < split {
            for h in 0..2 {
                let j = i + 4 * h;
                let wv = _mm256_loadu_pd(w.as_ptr().add(j));
                let t = _mm256_sub_pd(vx, _mm256_loadu_pd(u.as_ptr().add(j)));
                let a = _mm256_andnot_pd(sign, t);
                // operand order matches `f64::min`/`max` on non-NaN input
                let c = _mm256_min_pd(a, vd);
                let wp = _mm256_mul_pd(wv, _mm256_loadu_pd(pw.as_ptr().add(j)));
                let phi = _mm256_add_pd(_mm256_mul_pd(_mm256_mul_pd(c, c), vh), _mm256_sub_pd(a, c));
                s[0][h] = _mm256_add_pd(s[0][h], _mm256_mul_pd(wp, phi));
                s[1][h] = _mm256_add_pd(s[1][h], _mm256_mul_pd(wp, a));
                let g = _mm256_max_pd(_mm256_min_pd(_mm256_mul_pd(t, vi), one), minus_one);
                s[2][h] = _mm256_add_pd(s[2][h], _mm256_mul_pd(wv, g));
            }
            i += LANES;
        }
        let mut out = [lanes2(s[0][0], s[0][1]), lanes2(s[1][0], s[1][1]), lanes2(s[2][0], s[2][1])];
        huber_tail(&mut out, w, u, pw, ux, delta, inv, split);
        [fold(out[0]), fold(out[1]), fold(out[2])]
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn huber_sums_avx512(w: &[f64], u: &[f64], pw: &[f64], ux: f64, delta: f64, inv: f64) -> [f64; 3] {
        let n = w.len();
        let split = n - n % LANES;
        let vx = _mm512_set1_pd(ux);
        let vd = _mm512_set1_pd(delta);
        let vi = _mm512_set1_pd(inv);
        let vh = _mm512_set1_pd(0.5 * inv);
        let one = _mm512_set1_pd(1.0);
        let minus_one = _mm512_set1_pd(-1.0);
        let mut s0 = _mm512_setzero_pd();
        let mut s1 = _mm512_setzero_pd();
        let mut s2 = _mm512_setzero_pd();
        let mut i = 0;
        while i < split {
            let wv = _mm512_loadu_pd(w.as_ptr().add(i));
            let t = _mm512_sub_pd(vx, _mm512_loadu_pd(u.as_ptr().add(i)));
            let a = _mm512_abs_pd(t);
            let c = _mm512_min_pd(a, vd);
            let wp = _mm512_mul_pd(wv, _mm512_loadu_pd(pw.as_ptr().add(i)));
            let phi = _mm512_add_pd(_mm512_mul_pd(_mm512_mul_pd(c, c), vh), _mm512_sub_pd(a, c));
            s0 = _mm512_add_pd(s0, _mm512_mul_pd(wp, phi));
            s1 = _mm512_add_pd(s1, _mm512_mul_pd(wp, a));
            let g = _mm512_max_pd(_mm512_min_pd(_mm512_mul_pd(t, vi), one), minus_one);
            s2 = _mm512_add_pd(s2, _mm512_mul_pd(wv, g));
            i += LANES;
        }
        let mut out = [lanes8(s0), lanes8(s1), lanes8(s2)];
        huber_tail(&mut out, w, u, pw, ux, delta, inv, split);
        [fold(out[0]), fold(out[1]), fold(out[2])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dispatch_paths_round_identically() {
        let mut isas = vec![Isa::detect()];
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        if std::is_x86_feature_detected!("avx2") {
            isas.push(Isa::Avx2);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [0usize, 1, 3, 4, 7, 8, 15, 64, 129] {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let pw: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 0.5 } else { 1.0 }).collect();
            let ext: Vec<f64> = pw.iter().map(|p| if *p == 1.0 { 1.0 } else { 0.0 }).collect();
            let ux = rng.gen::<f64>();
            for &isa in &isas {
                assert_eq!(
                    abs_sums(isa, &w, &u, &pw, &ext, ux),
                    abs_sums_portable(&w, &u, &pw, &ext, ux)
                );
                for delta in [1.0, 0.05, 1e-4] {
                    assert_eq!(
                        huber_sums(isa, &w, &u, &pw, ux, delta, 1.0 / delta),
                        huber_sums_portable(&w, &u, &pw, ux, delta, 1.0 / delta)
                    );
                }
            }
        }
    }
}
