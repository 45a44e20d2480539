//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix};

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number<T>(m: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with the usual `max(rows, cols)·ε·σ_max` cutoff.
pub fn rank<T>(m: &DMatrix<T>) -> usize
where
    T: ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * max;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Column order chosen by Householder-free pivoted Gram–Schmidt: at each step
/// the column with the largest norm after removing the span of the columns
/// already chosen. Returns the first `count` pivots in selection order.
///
/// Ties go to the lower column index. Fails with the step at which every
/// remaining residual fell below `tol · (largest initial column norm)`.
pub fn pivoted_columns(m: &DMatrix<f64>, count: usize, tol: f64) -> Result<Vec<usize>, usize> {
    let mut residual = m.clone();
    let scale = (0..m.ncols())
        .map(|j| m.column(j).norm())
        .fold(0.0_f64, f64::max);
    let mut chosen = Vec::with_capacity(count);
    for step in 0..count {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..residual.ncols() {
            if chosen.contains(&j) {
                continue;
            }
            let norm = residual.column(j).norm();
            if best.is_none_or(|(_, b)| norm > b) {
                best = Some((j, norm));
            }
        }
        let Some((pivot, norm)) = best else {
            return Err(step);
        };
        if !(norm > tol * scale) || scale == 0.0 {
            return Err(step);
        }
        chosen.push(pivot);
        let q = residual.column(pivot) / norm;
        // Two passes keep the remaining residuals orthogonal to q.
        for _ in 0..2 {
            for j in 0..residual.ncols() {
                if chosen.contains(&j) {
                    continue;
                }
                let proj = q.dot(&residual.column(j));
                let mut col = residual.column_mut(j);
                col.axpy(-proj, &q, 1.0);
            }
        }
    }
    Ok(chosen)
}
