//! Cell-partitioned maps. Results are always collected in cell order, so
//! ordered reductions over them are reproducible for any thread count.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
pub(crate) fn map_cells<T, F>(cells: &[usize], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    cells.par_iter().map(|&c| f(c)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_cells<T, F>(cells: &[usize], f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    cells.iter().map(|&c| f(c)).collect()
}

/// Unordered tree reduction of per-cell results.
#[cfg(feature = "parallel")]
pub(crate) fn tree_sum<F>(cells: &[usize], f: F) -> [f64; 2]
where
    F: Fn(usize) -> [f64; 2] + Sync + Send,
{
    use rayon::prelude::*;
    cells
        .par_iter()
        .map(|&c| f(c))
        .reduce(|| [0.0; 2], |a, b| [a[0] + b[0], a[1] + b[1]])
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn tree_sum<F>(cells: &[usize], f: F) -> [f64; 2]
where
    F: Fn(usize) -> [f64; 2],
{
    // pairwise halving keeps the same tree shape as the parallel variant
    fn go<F: Fn(usize) -> [f64; 2]>(cells: &[usize], f: &F) -> [f64; 2] {
        if cells.len() <= 64 {
            return cells.iter().fold([0.0; 2], |a, &c| {
                let b = f(c);
                [a[0] + b[0], a[1] + b[1]]
            });
        }
        let (l, r) = cells.split_at(cells.len() / 2);
        let (a, b) = (go(l, f), go(r, f));
        [a[0] + b[0], a[1] + b[1]]
    }
    go(cells, &f)
}
