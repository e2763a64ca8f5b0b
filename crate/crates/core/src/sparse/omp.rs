//! Orthogonal Matching Pursuit.
//!
//! [`omp`] recomputes `Dᵀr` from the explicit residual at every step.
//! [`batch_omp`] precomputes the Gram matrix `DᵀD` once and tracks the
//! correlations as `Dᵀx - G_I γ`, which is what makes coding every pixel of an
//! image affordable. Both re-solve the normal equations on the accumulated
//! support with a Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::dictionary::{Dictionary, SparseCode};
use crate::error::{Error, Result};

/// Relative residual norm below which pursuit stops early.
const RESIDUAL_TOL: f64 = 1e-10;
const FALLBACK_RIDGE: f64 = 1e-12;

fn check(dict: &Dictionary, dim: usize, sparsity: usize) -> Result<()> {
    if dim != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "signal of length {dim} for a dictionary of dimension {}",
            dict.dim()
        )));
    }
    if sparsity == 0 {
        return Err(Error::InvalidArgument("sparsity must be at least 1".into()));
    }
    if sparsity > dict.n_atoms() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {sparsity} exceeds the {} available atoms",
            dict.n_atoms()
        )));
    }
    Ok(())
}

fn factor(mut gram: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(gram.clone()) {
        return Some(ch);
    }
    for i in 0..gram.nrows() {
        gram[(i, i)] += FALLBACK_RIDGE;
    }
    Cholesky::new(gram)
}

fn argmax_unselected(corr: &[f64], selected: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in corr.iter().enumerate() {
        if selected[j] {
            continue;
        }
        let a = c.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((j, a));
        }
    }
    best
}

/// Shared greedy loop; `correlations` fills `Dᵀr` given the current support
/// and coefficients.
fn pursue(
    dict: &Dictionary,
    signal: &[f64],
    dtx: &[f64],
    sparsity: usize,
    gram: Option<&DMatrix<f64>>,
    mut correlations: impl FnMut(&[usize], &[f64], &[f64], &mut [f64]),
) -> SparseCode {
    let n_atoms = dict.n_atoms();
    let atoms = dict.atoms();
    let signal_norm = signal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut code = SparseCode::zeros(n_atoms);
    if signal_norm == 0.0 {
        return code;
    }

    let mut selected = vec![false; n_atoms];
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut gamma: Vec<f64> = Vec::new();
    let mut residual = signal.to_vec();
    let mut corr = dtx.to_vec();

    while support.len() < sparsity {
        let rnorm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm < RESIDUAL_TOL * signal_norm {
            break;
        }
        let Some((j, best)) = argmax_unselected(&corr, &selected) else {
            break;
        };
        if best == 0.0 {
            break;
        }
        support.push(j);
        selected[j] = true;

        let s = support.len();
        let sub = DMatrix::from_fn(s, s, |a, b| match gram {
            Some(g) => g[(support[a], support[b])],
            None => atoms.column(support[a]).dot(&atoms.column(support[b])),
        });
        let Some(chol) = factor(sub) else {
            support.pop();
            selected[j] = false;
            break;
        };
        let rhs = DVector::from_iterator(s, support.iter().map(|&i| dtx[i]));
        gamma = chol.solve(&rhs).iter().copied().collect();

        residual.copy_from_slice(signal);
        for (&i, &g) in support.iter().zip(&gamma) {
            for (r, d) in residual.iter_mut().zip(atoms.column(i).iter()) {
                *r -= g * d;
            }
        }
        correlations(&support, &gamma, &residual, &mut corr);
    }

    for (&i, &g) in support.iter().zip(&gamma) {
        code.coefficients[i] = g;
    }
    code.support = support;
    code
}

/// Greedy sparse approximation of one signal with at most `sparsity` atoms.
pub fn omp(dict: &Dictionary, signal: &[f64], sparsity: usize) -> Result<SparseCode> {
    check(dict, signal.len(), sparsity)?;
    let atoms = dict.atoms();
    let x = DVector::from_column_slice(signal);
    let dtx: Vec<f64> = atoms.tr_mul(&x).iter().copied().collect();
    Ok(pursue(
        dict,
        signal,
        &dtx,
        sparsity,
        None,
        |_, _, residual, corr| {
            let r = DVector::from_column_slice(residual);
            corr.copy_from_slice(atoms.tr_mul(&r).as_slice());
        },
    ))
}

/// Precomputed `DᵀD` for repeated Batch-OMP calls against one dictionary.
#[derive(Debug, Clone)]
pub struct GramCache {
    pub gram: DMatrix<f64>,
}

impl GramCache {
    pub fn new(dict: &Dictionary) -> Self {
        Self {
            gram: dict.atoms().tr_mul(dict.atoms()),
        }
    }
}

fn batch_code(
    dict: &Dictionary,
    gram: &DMatrix<f64>,
    signal: &[f64],
    dtx: &[f64],
    sparsity: usize,
) -> SparseCode {
    pursue(
        dict,
        signal,
        dtx,
        sparsity,
        Some(gram),
        |support, gamma, _, corr| {
            corr.copy_from_slice(dtx);
            for (&i, &g) in support.iter().zip(gamma) {
                for (c, gi) in corr.iter_mut().zip(gram.column(i).iter()) {
                    *c -= g * gi;
                }
            }
        },
    )
}

/// Codes every column of `signals` (`k x N`); returns one [`SparseCode`]
/// per column.
pub fn batch_omp_codes(
    dict: &Dictionary,
    signals: &DMatrix<f64>,
    sparsity: usize,
    cache: Option<&GramCache>,
) -> Result<Vec<SparseCode>> {
    check(dict, signals.nrows(), sparsity)?;
    if signals.ncols() == 0 {
        return Ok(Vec::new());
    }
    let owned;
    let gram = match cache {
        Some(c) => &c.gram,
        None => {
            owned = GramCache::new(dict);
            &owned.gram
        }
    };
    let dtx_all = dict.atoms().tr_mul(signals);
    Ok((0..signals.ncols())
        .map(|n| {
            batch_code(
                dict,
                gram,
                signals.column(n).as_slice(),
                dtx_all.column(n).as_slice(),
                sparsity,
            )
        })
        .collect())
}

/// Batch-OMP returning the dense `K x N` coefficient matrix.
pub fn batch_omp(
    dict: &Dictionary,
    signals: &DMatrix<f64>,
    sparsity: usize,
) -> Result<DMatrix<f64>> {
    let codes = batch_omp_codes(dict, signals, sparsity, None)?;
    let mut a = DMatrix::zeros(dict.n_atoms(), signals.ncols());
    for (n, code) in codes.iter().enumerate() {
        for &j in &code.support {
            a[(j, n)] = code.coefficients[j];
        }
    }
    Ok(a)
}
