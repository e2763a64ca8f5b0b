//! KSVD dictionary learning.
//!
//! Each iteration codes every training signal with Batch-OMP, then sweeps the
//! atoms in order. Atom `j` is refit to the residual restricted to the signals
//! that use it, `R = M_ω - D A_ω + d_j a_j,ω`, by its leading singular pair.
//! The singular pair comes from power iteration started at the current atom,
//! so a sweep never increases `‖M - DA‖_F`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dictionary::Dictionary;
use super::omp::batch_omp;
use crate::error::{Error, Result};
use crate::imaging::PatchGeometry;

const POWER_ITERATIONS: usize = 100;
const POWER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomInit {
    /// `K` distinct training signals, normalized.
    RandomSamples,
    /// Gaussian random directions.
    RandomUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_atoms: usize,
    pub sparsity: usize,
    pub iterations: usize,
    pub init: AtomInit,
    pub seed: u64,
    /// Atoms used by fewer signals than this are replaced between iterations.
    pub unused_atom_threshold: usize,
    /// Atoms whose absolute correlation with an earlier atom exceeds this are
    /// replaced between iterations.
    pub duplicate_threshold: f64,
    /// Stop once the relative change of the objective drops below this.
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_atoms: 128,
            sparsity: 8,
            iterations: 30,
            init: AtomInit::RandomSamples,
            seed: 0,
            unused_atom_threshold: 1,
            duplicate_threshold: 0.99,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdResult {
    pub dictionary: Dictionary,
    /// `K x N` coefficients consistent with `dictionary`.
    pub codes: DMatrix<f64>,
    /// `‖M - DA‖_F` after the dictionary update of each iteration.
    pub objective_trace: Vec<f64>,
    pub replaced_atoms: usize,
    pub warnings: Vec<String>,
}

/// `‖M - DA‖_F`.
pub fn objective(signals: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &DMatrix<f64>) -> f64 {
    (signals - atoms * codes).norm()
}

/// Leading left singular vector of `r`, refined from `start`.
fn leading_direction(r: &DMatrix<f64>, start: DVector<f64>) -> Option<DVector<f64>> {
    let mut u = start;
    if r.tr_mul(&u).norm() == 0.0 {
        let (best, norm) = r
            .column_iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if norm == 0.0 {
            return None;
        }
        u = r.column(best) / norm;
    }
    for _ in 0..POWER_ITERATIONS {
        let mut next = r * r.tr_mul(&u);
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        next /= norm;
        let delta = (&next - &u).norm();
        u = next;
        if delta < POWER_TOL {
            break;
        }
    }
    Some(u)
}

/// Refits atom `j` given the running residual `E = M - DA` (updated in place).
/// Returns false when no signal uses the atom.
fn refit_atom(
    residual: &mut DMatrix<f64>,
    atoms: &mut DMatrix<f64>,
    codes: &mut DMatrix<f64>,
    j: usize,
) -> bool {
    let users: Vec<usize> = (0..codes.ncols())
        .filter(|&n| codes[(j, n)] != 0.0)
        .collect();
    if users.is_empty() {
        return false;
    }
    let k = atoms.nrows();
    let atom = atoms.column(j).into_owned();
    let mut r = DMatrix::zeros(k, users.len());
    for (c, &n) in users.iter().enumerate() {
        let a = codes[(j, n)];
        let mut col = r.column_mut(c);
        col.copy_from(&residual.column(n));
        col.axpy(a, &atom, 1.0);
    }
    let Some(u) = leading_direction(&r, atom) else {
        // the restricted residual vanishes: drop the atom's contribution
        for (c, &n) in users.iter().enumerate() {
            residual.column_mut(n).copy_from(&r.column(c));
            codes[(j, n)] = 0.0;
        }
        return true;
    };
    let coeffs = r.tr_mul(&u);
    atoms.column_mut(j).copy_from(&u);
    for (c, &n) in users.iter().enumerate() {
        codes[(j, n)] = coeffs[c];
        let mut col = residual.column_mut(n);
        col.copy_from(&r.column(c));
        col.axpy(-coeffs[c], &u, 1.0);
    }
    true
}

/// Refits one atom from scratch; exposed so the per-atom descent property
/// can be checked directly.
pub fn update_atom(
    signals: &DMatrix<f64>,
    atoms: &mut DMatrix<f64>,
    codes: &mut DMatrix<f64>,
    j: usize,
) -> bool {
    let mut residual = signals - &*atoms * &*codes;
    refit_atom(&mut residual, atoms, codes, j)
}

/// One full dictionary-update sweep for fixed supports. Returns the atoms no
/// signal used.
pub fn dictionary_update(
    signals: &DMatrix<f64>,
    atoms: &mut DMatrix<f64>,
    codes: &mut DMatrix<f64>,
) -> Vec<usize> {
    let mut residual = signals - &*atoms * &*codes;
    (0..atoms.ncols())
        .filter(|&j| !refit_atom(&mut residual, atoms, codes, j))
        .collect()
}

fn initial_atoms(
    signals: &DMatrix<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let k = signals.nrows();
    let mut atoms = DMatrix::zeros(k, cfg.n_atoms);
    match cfg.init {
        AtomInit::RandomUnit => {
            for mut col in atoms.column_iter_mut() {
                loop {
                    col.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                    let norm = col.norm();
                    if norm > 0.0 {
                        col /= norm;
                        break;
                    }
                }
            }
        }
        AtomInit::RandomSamples => {
            let mut order: Vec<usize> = (0..signals.ncols()).collect();
            order.shuffle(rng);
            let mut filled = 0;
            for n in order {
                if filled == cfg.n_atoms {
                    break;
                }
                let norm = signals.column(n).norm();
                if norm == 0.0 {
                    continue;
                }
                let candidate = signals.column(n) / norm;
                if (0..filled).any(|j| atoms.column(j) == candidate) {
                    continue;
                }
                atoms.column_mut(filled).copy_from(&candidate);
                filled += 1;
            }
            if filled < cfg.n_atoms {
                return Err(Error::InvalidArgument(format!(
                    "only {filled} distinct nonzero training signals for {} atoms",
                    cfg.n_atoms
                )));
            }
        }
    }
    Ok(atoms)
}

/// Atoms to replace: under-used ones, then later members of near-duplicate
/// pairs.
fn atoms_to_replace(atoms: &DMatrix<f64>, codes: &DMatrix<f64>, cfg: &TrainConfig) -> Vec<usize> {
    let n_atoms = atoms.ncols();
    let mut replace = vec![false; n_atoms];
    for (j, flag) in replace.iter_mut().enumerate() {
        let usage = codes.row(j).iter().filter(|v| **v != 0.0).count();
        *flag = usage < cfg.unused_atom_threshold;
    }
    let gram = atoms.tr_mul(atoms);
    for j in 1..n_atoms {
        if replace[j] {
            continue;
        }
        if (0..j).any(|i| !replace[i] && gram[(i, j)].abs() > cfg.duplicate_threshold) {
            replace[j] = true;
        }
    }
    (0..n_atoms).filter(|&j| replace[j]).collect()
}

fn replace_atoms(
    signals: &DMatrix<f64>,
    residual: &DMatrix<f64>,
    atoms: &mut DMatrix<f64>,
    codes: &mut DMatrix<f64>,
    which: &[usize],
) -> usize {
    let mut order: Vec<(usize, f64)> = residual
        .column_iter()
        .enumerate()
        .map(|(n, c)| (n, c.norm_squared()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut candidates = order.into_iter().map(|(n, _)| n);
    let mut replaced = 0;
    for &j in which {
        let Some(n) = candidates
            .by_ref()
            .find(|&n| signals.column(n).norm() > 0.0)
        else {
            break;
        };
        let col = signals.column(n) / signals.column(n).norm();
        atoms.column_mut(j).copy_from(&col);
        codes.row_mut(j).fill(0.0);
        replaced += 1;
    }
    replaced
}

/// Learns a dictionary for the columns of `signals` (`k x N`).
pub fn ksvd_train(
    signals: &DMatrix<f64>,
    geometry: PatchGeometry,
    cfg: &TrainConfig,
) -> Result<KsvdResult> {
    let k = signals.nrows();
    if k != geometry.dim() {
        return Err(Error::DimensionMismatch(format!(
            "signals of dimension {k} for patch dimension {}",
            geometry.dim()
        )));
    }
    if signals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training signals"));
    }
    if cfg.n_atoms == 0 || cfg.iterations == 0 {
        return Err(Error::InvalidArgument(
            "need at least one atom and one iteration".into(),
        ));
    }
    if cfg.sparsity == 0 || cfg.sparsity > k.min(cfg.n_atoms) {
        return Err(Error::InvalidArgument(format!(
            "sparsity {} outside 1..={}",
            cfg.sparsity,
            k.min(cfg.n_atoms)
        )));
    }

    let mut warnings = Vec::new();
    if signals.ncols() < cfg.n_atoms {
        warnings.push(format!(
            "{} training signals for {} atoms",
            signals.ncols(),
            cfg.n_atoms
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut atoms = initial_atoms(signals, cfg, &mut rng)?;
    let mut codes = DMatrix::zeros(cfg.n_atoms, signals.ncols());
    let mut trace: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let mut replaced_atoms = 0;

    for it in 0..cfg.iterations {
        let dict = Dictionary::new(atoms.clone(), geometry)?;
        codes = batch_omp(&dict, signals, cfg.sparsity)?;
        let mut residual = signals - &atoms * &codes;
        for j in 0..cfg.n_atoms {
            refit_atom(&mut residual, &mut atoms, &mut codes, j);
        }
        let obj = residual.norm();
        let converged = match trace.last() {
            Some(&prev) => {
                obj == 0.0
                    || (prev - obj).abs() <= cfg.tolerance * f64::max(prev, f64::MIN_POSITIVE)
            }
            None => obj == 0.0,
        };
        trace.push(obj);
        if converged || it + 1 == cfg.iterations {
            break;
        }
        let which = atoms_to_replace(&atoms, &codes, cfg);
        if !which.is_empty() {
            replaced_atoms += replace_atoms(signals, &residual, &mut atoms, &mut codes, &which);
        }
    }

    Ok(KsvdResult {
        dictionary: Dictionary::new(atoms, geometry)?,
        codes,
        objective_trace: trace,
        replaced_atoms,
        warnings,
    })
}
