use alloc::vec::Vec;

use crate::domain::Grid;
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::math;
use crate::MAX_DIM;

/// Offsets closer than this many cells use the refined pair quadrature.
const NEAR_CELLS: i64 = 3;

/// Runs are padded with zero weights to a multiple of this length.
const PAD: usize = 8;

/// A contiguous run of offsets along the last axis sharing the leading
/// offset components.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Run {
    pub prefix: [i32; MAX_DIM - 1],
    pub lo: i32,
    pub len: u32,
    pub start: usize,
}

/// Translation-invariant pair weights `K̄(o)` indexed by integer offsets `o`.
///
/// Pairs at distance `>= 3h` use the midpoint value `K(h o)`; closer distinct
/// pairs average `K` over the `3^d × 3^d` sub-point pairs of the two cells.
/// The same-cell weight is zero. Weights carry no `h` factors.
#[derive(Debug, Clone)]
pub struct PairStencil {
    dim: usize,
    h: f64,
    reach: [usize; MAX_DIM],
    runs: Vec<Run>,
    weights: Vec<f64>,
    /// Nonzero offsets ordered in `(o, -o)` pairs.
    pairs: Vec<([i32; MAX_DIM], f64)>,
}

fn pair_weight(kernel: &KernelSpec, offset: &[i64], h: f64) -> f64 {
    let dim = offset.len();
    let r2: i64 = offset.iter().map(|o| o * o).sum();
    if r2 == 0 {
        return 0.0;
    }
    let mut x = [0.0; MAX_DIM];
    if r2 >= NEAR_CELLS * NEAR_CELLS {
        for k in 0..dim {
            x[k] = offset[k] as f64 * h;
        }
        return kernel.eval_unchecked(&x[..dim]);
    }
    // differences of sub-points (a - b)/3 with a, b ∈ {-1, 0, 1}
    const SHIFT: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
    const MULT: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];
    let combos = 5usize.pow(dim as u32);
    let mut acc = 0.0;
    for c in 0..combos {
        let mut rest = c;
        let mut w = 1.0;
        for k in 0..dim {
            let j = rest % 5;
            rest /= 5;
            x[k] = (offset[k] as f64 + SHIFT[j] / 3.0) * h;
            w *= MULT[j];
        }
        acc += w * kernel.eval_unchecked(&x[..dim]);
    }
    acc / math::powi(9.0, dim as i32)
}

impl PairStencil {
    pub fn new(grid: &Grid, kernel: &KernelSpec) -> Result<Self> {
        let dim = grid.dim();
        let h = grid.spacing();
        let mut reach = [0usize; MAX_DIM];
        for k in 0..dim {
            let full = grid.counts()[k] - 1;
            reach[k] = match kernel.support_radius() {
                Some(rho) => ((math::floor(rho / h) as usize) + 1).min(full),
                None => full,
            };
        }
        let last = dim - 1;
        let span = reach[last] as i64;
        let lead_count: usize = (0..last).map(|k| 2 * reach[k] + 1).product();
        let mut runs = Vec::new();
        let mut weights = Vec::new();
        let mut offset = [0i64; MAX_DIM];
        let mut row = Vec::with_capacity(2 * span as usize + 1);
        for code in 0..lead_count {
            let mut rest = code;
            for k in (0..last).rev() {
                let width = 2 * reach[k] + 1;
                offset[k] = (rest % width) as i64 - reach[k] as i64;
                rest /= width;
            }
            row.clear();
            for c in -span..=span {
                offset[last] = c;
                row.push(pair_weight(kernel, &offset[..dim], h));
            }
            let first = row.iter().position(|w| *w != 0.0);
            let end = row.iter().rposition(|w| *w != 0.0);
            if let (Some(f), Some(e)) = (first, end) {
                let mut prefix = [0i32; MAX_DIM - 1];
                for (k, p) in prefix.iter_mut().enumerate().take(last) {
                    *p = offset[k] as i32;
                }
                // zero padding to whole vector blocks keeps the inner loops
                // free of scalar remainders
                let len = (e - f + 1).div_ceil(PAD) * PAD;
                runs.push(Run {
                    prefix,
                    lo: f as i32 - span as i32,
                    len: len as u32,
                    start: weights.len(),
                });
                weights.extend_from_slice(&row[f..=e]);
                weights.resize(weights.len() + len - (e - f + 1), 0.0);
            }
        }
        let padded = runs
            .iter()
            .map(|r| (r.lo.unsigned_abs() as usize).max((r.lo + r.len as i32 - 1).unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        reach[last] = reach[last].max(padded);
        let mut st = PairStencil {
            dim,
            h,
            reach,
            runs,
            weights,
            pairs: Vec::new(),
        };
        st.build_pairs();
        Ok(st)
    }

    fn build_pairs(&mut self) {
        let mut pairs = Vec::new();
        let last = self.dim - 1;
        for run in &self.runs {
            for j in 0..run.len as usize {
                let w = self.weights[run.start + j];
                if w == 0.0 {
                    continue;
                }
                let mut o = [0i32; MAX_DIM];
                o[..last].copy_from_slice(&run.prefix[..last]);
                o[last] = run.lo + j as i32;
                // keep offsets whose first nonzero component is positive
                let lead = o[..self.dim].iter().find(|&&c| c != 0).copied().unwrap_or(0);
                if lead > 0 {
                    let mut m = [0i32; MAX_DIM];
                    for k in 0..self.dim {
                        m[k] = -o[k];
                    }
                    pairs.push((o, w));
                    pairs.push((m, w));
                }
            }
        }
        self.pairs = pairs;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Largest offset magnitude per axis, in cells.
    pub fn reach(&self) -> &[usize] {
        &self.reach[..self.dim]
    }

    pub(crate) fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nonzero offsets and their weights, ordered so that each `o` is
    /// immediately followed by `-o`.
    pub fn symmetric_pairs(&self) -> &[([i32; MAX_DIM], f64)] {
        &self.pairs
    }

    /// `Σ_o K̄(o) h^d`, the lattice approximation of `∫ K` (excluding the
    /// origin cell).
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * math::powi(self.h, self.dim as i32)
    }

    /// `f(h o)` for every weight slot, zero where `K̄(o) = 0`.
    pub(crate) fn sampled<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        let last = self.dim - 1;
        let mut out = alloc::vec![0.0; self.weights.len()];
        let mut z = [0.0; MAX_DIM];
        for run in &self.runs {
            for k in 0..last {
                z[k] = run.prefix[k] as f64 * self.h;
            }
            for j in 0..run.len as usize {
                z[last] = (run.lo + j as i32) as f64 * self.h;
                if self.weights[run.start + j] != 0.0 {
                    out[run.start + j] = f(&z[..self.dim]);
                }
            }
        }
        out
    }

    /// Weights `f(h o) · K̄(o)` in the same layout.
    pub(crate) fn weighted_by<F: FnMut(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = self.sampled(f);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o *= w;
        }
        out
    }
}

/// Partner segments of one cell: `(weight range start, partner base cell,
/// segment length)` for each run clipped to the grid.
#[inline]
pub(crate) fn for_each_segment<F: FnMut(usize, usize, usize)>(
    stencil: &PairStencil,
    grid: &Grid,
    cell: usize,
    mut f: F,
) {
    let dim = grid.dim();
    let last = dim - 1;
    let idx = grid.multi_index(cell);
    let counts = grid.counts();
    let strides = grid.strides();
    let interior_fit = (0..dim).all(|k| {
        idx[k] >= stencil.reach[k] && idx[k] + stencil.reach[k] < counts[k]
    });
    'runs: for run in stencil.runs() {
        let mut base: isize = 0;
        for k in 0..last {
            let p = idx[k] as isize + run.prefix[k] as isize;
            if !interior_fit && (p < 0 || p >= counts[k] as isize) {
                continue 'runs;
            }
            base += p * strides[k] as isize;
        }
        let mut j0 = 0isize;
        let mut j1 = run.len as isize;
        let first = idx[last] as isize + run.lo as isize;
        if !interior_fit {
            j0 = j0.max(-first);
            j1 = j1.min(counts[last] as isize - first);
            if j0 >= j1 {
                continue;
            }
        }
        let y0 = (base + first + j0) as usize;
        f(run.start + j0 as usize, y0, (j1 - j0) as usize);
    }
}
