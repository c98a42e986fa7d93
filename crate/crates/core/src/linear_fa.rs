//! Linear value-function approximation over sampled states.
//!
//! For a sample set `D` the least-squares reconstruction map is
//! `M = Phi (Phi_D^T Phi_D)^{-1} Phi_D^T P_D`, materialized here as an
//! `|S| x |D|` matrix whenever its sup-norm is needed.

use std::collections::BTreeSet;
use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy, ValueVec};

/// Relative singular-value threshold below which a matrix counts as rank-deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Redraw budget for resampled sets that fail the rank condition.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// Default cap on `|A|^|S|` for exhaustive policy enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 4096;

/// Weights `theta` of a linear approximation `J = Phi theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVec(Vec<f64>);

impl WeightVec {
    pub fn new(theta: Vec<f64>) -> Self {
        WeightVec(theta)
    }

    pub fn zeros(d: usize) -> Self {
        WeightVec(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Euclidean distance. Panics on length mismatch.
    pub fn l2_distance(&self, other: &WeightVec) -> f64 {
        assert_eq!(self.len(), other.len(), "weight vectors differ in length");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl Deref for WeightVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for WeightVec {
    fn from(theta: Vec<f64>) -> Self {
        WeightVec(theta)
    }
}

fn is_rank_deficient(matrix: &DMatrix<f64>) -> bool {
    if matrix.nrows() < matrix.ncols() {
        return true;
    }
    let sv = matrix.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    !(max > 0.0 && min > RANK_TOL * max)
}

fn inf_norm(matrix: &DMatrix<f64>) -> f64 {
    matrix
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The feature matrix `Phi` (`|S| x d`, one feature vector per row).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSystem {
    phi: DMatrix<f64>,
}

impl FeatureSystem {
    /// Builds from a row-major `|S| x d` buffer. `Phi` must have full column rank.
    pub fn new(num_states: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || num_states == 0 {
            return Err(Error::InvalidInput(
                "feature matrix must be non-empty".into(),
            ));
        }
        if rows.len() != num_states * dim {
            return Err(Error::InvalidInput(format!(
                "feature buffer has {} entries, expected {num_states} x {dim}",
                rows.len()
            )));
        }
        if dim > num_states {
            return Err(Error::InvalidInput(format!(
                "feature dimension {dim} exceeds the number of states {num_states}"
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "feature matrix has non-finite entries".into(),
            ));
        }
        let phi = DMatrix::from_row_slice(num_states, dim, &rows);
        if is_rank_deficient(&phi) {
            return Err(Error::InvalidInput(
                "feature matrix does not have full column rank".into(),
            ));
        }
        Ok(FeatureSystem { phi })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput(
                "feature rows have unequal lengths".into(),
            ));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Tabular features, `Phi = I`.
    pub fn identity(num_states: usize) -> Self {
        FeatureSystem {
            phi: DMatrix::identity(num_states, num_states),
        }
    }

    pub fn num_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn feature(&self, state: usize) -> Vec<f64> {
        self.phi.row(state).iter().copied().collect()
    }

    /// `J = Phi theta`.
    pub fn values(&self, theta: &WeightVec) -> ValueVec {
        assert_eq!(theta.len(), self.dim(), "weight dimension mismatch");
        let j = &self.phi * theta.to_dvector();
        ValueVec::new(j.iter().copied().collect())
    }

    /// `||Phi||_inf`, the max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.phi)
    }

    /// `sigma_min(Phi) = sqrt(lambda_min(Phi^T Phi))`.
    pub fn sigma_min(&self) -> Result<f64> {
        let gram = self.phi.transpose() * &self.phi;
        let eig = symmetric_eigenvalues(gram)?;
        Ok(eig
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
            .sqrt())
    }

    fn rows_of(&self, indices: &[usize]) -> DMatrix<f64> {
        self.phi.select_rows(indices)
    }
}

fn symmetric_eigenvalues(matrix: DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(matrix);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// How the per-iteration sample sets `D_k` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    All,
    Fixed,
    Resample,
}

/// A validated set of sampled states `D_k` whose features span `R^d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    indices: Vec<usize>,
    mode: SelectionMode,
}

impl SampleSet {
    pub fn new(fs: &FeatureSystem, indices: Vec<usize>, mode: SelectionMode) -> Result<Self> {
        let n = fs.num_states();
        if let Some(i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "sample index {i} out of range (num_states = {n})"
            )));
        }
        let distinct: BTreeSet<_> = indices.iter().collect();
        if distinct.len() != indices.len() {
            return Err(Error::InvalidInput(
                "sample indices are not distinct".into(),
            ));
        }
        if is_rank_deficient(&fs.rows_of(&indices)) {
            return Err(Error::Assumption1(format!(
                "features of states {indices:?} do not span dimension {}",
                fs.dim()
            )));
        }
        Ok(SampleSet { indices, mode })
    }

    pub fn all(fs: &FeatureSystem) -> Result<Self> {
        Self::new(fs, (0..fs.num_states()).collect(), SelectionMode::All)
    }

    /// Draws `size` distinct states uniformly, redrawing until the rank condition holds.
    pub fn draw<R: Rng + ?Sized>(fs: &FeatureSystem, size: usize, rng: &mut R) -> Result<Self> {
        let n = fs.num_states();
        if size > n || size < fs.dim() {
            return Err(Error::Config(format!(
                "sample size {size} must lie in [d, |S|] = [{}, {n}]",
                fs.dim()
            )));
        }
        for _ in 0..MAX_RESAMPLE_ATTEMPTS {
            let mut indices = index::sample(rng, n, size).into_vec();
            indices.sort_unstable();
            match Self::new(fs, indices, SelectionMode::Resample) {
                Ok(set) => return Ok(set),
                Err(Error::Assumption1(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Assumption1(format!(
            "no rank-{} sample of size {size} found in {MAX_RESAMPLE_ATTEMPTS} draws",
            fs.dim()
        )))
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The factored least-squares problem on one sample set.
#[derive(Debug, Clone)]
pub struct Projection<'a> {
    fs: &'a FeatureSystem,
    indices: Vec<usize>,
    phi_d: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Projection<'a> {
    pub fn new(fs: &'a FeatureSystem, ds: &SampleSet) -> Result<Self> {
        let n = fs.num_states();
        if ds.indices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidInput(
                "sample set does not belong to this feature system".into(),
            ));
        }
        let phi_d = fs.rows_of(&ds.indices);
        let gram = phi_d.transpose() * &phi_d;
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::Assumption1("Phi_D^T Phi_D is not positive definite".into()))?;
        Ok(Projection {
            fs,
            indices: ds.indices.clone(),
            phi_d,
            gram,
            chol,
        })
    }

    /// `Phi_D^T Phi_D`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn check_targets(&self, targets: &ValueVec) -> Result<()> {
        if targets.len() != self.fs.num_states() {
            return Err(Error::InvalidInput(format!(
                "target vector has length {}, expected {}",
                targets.len(),
                self.fs.num_states()
            )));
        }
        Ok(())
    }

    /// `Phi_D^T targets_D`.
    fn moment(&self, targets: &ValueVec) -> DVector<f64> {
        let sampled =
            DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| targets[i]));
        self.phi_d.transpose() * sampled
    }

    /// Solves the normal equations `(Phi_D^T Phi_D) theta = Phi_D^T targets_D`.
    pub fn fit(&self, targets: &ValueVec) -> Result<WeightVec> {
        self.check_targets(targets)?;
        let theta = self.chol.solve(&self.moment(targets));
        Ok(WeightVec(theta.iter().copied().collect()))
    }

    /// `M targets`.
    pub fn apply(&self, targets: &ValueVec) -> Result<ValueVec> {
        Ok(self.fs.values(&self.fit(targets)?))
    }

    /// The reconstruction map as an explicit `|S| x |D|` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let inv_gram_phi_dt = self.chol.solve(&self.phi_d.transpose());
        self.fs.phi() * inv_gram_phi_dt
    }

    /// `||M||_inf`.
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.matrix())
    }

    /// Eigenvalues of `Phi_D^T Phi_D`, largest first.
    pub fn gram_eigenvalues(&self) -> Result<Vec<f64>> {
        symmetric_eigenvalues(self.gram.clone())
    }

    /// Exactly `eta` steps of `theta <- theta - gamma (G theta - Phi_D^T targets_D)`.
    pub fn gradient_descent(
        &self,
        targets: &ValueVec,
        start: &WeightVec,
        gamma: f64,
        eta: usize,
    ) -> Result<WeightVec> {
        self.check_targets(targets)?;
        if start.len() != self.fs.dim() {
            return Err(Error::InvalidInput(
                "starting weights have wrong dimension".into(),
            ));
        }
        if !(gamma > 0.0) || eta == 0 {
            return Err(Error::InvalidInput(format!(
                "gradient descent needs gamma > 0 and eta >= 1 (got {gamma}, {eta})"
            )));
        }
        let moment = self.moment(targets);
        let mut theta = start.to_dvector();
        for step in 1..=eta {
            let gradient = &self.gram * &theta - &moment;
            theta -= gamma * gradient;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::GradientDivergence { iteration: step });
            }
        }
        Ok(WeightVec(theta.iter().copied().collect()))
    }
}

/// Weights minimizing the squared error on the sampled states.
pub fn least_squares_fit(
    fs: &FeatureSystem,
    ds: &SampleSet,
    targets: &ValueVec,
) -> Result<WeightVec> {
    Projection::new(fs, ds)?.fit(targets)
}

/// `M targets = Phi least_squares_fit(targets)`.
pub fn projector_apply(fs: &FeatureSystem, ds: &SampleSet, targets: &ValueVec) -> Result<ValueVec> {
    Projection::new(fs, ds)?.apply(targets)
}

pub fn gradient_descent_fit(
    fs: &FeatureSystem,
    ds: &SampleSet,
    targets: &ValueVec,
    theta_start: &WeightVec,
    gamma: f64,
    eta: usize,
) -> Result<WeightVec> {
    Projection::new(fs, ds)?.gradient_descent(targets, theta_start, gamma, eta)
}

fn unique_sets(sets: &[SampleSet]) -> Vec<&SampleSet> {
    let mut seen = BTreeSet::new();
    sets.iter()
        .filter(|s| seen.insert(s.indices.clone()))
        .collect()
}

/// `delta_FV = sup_k ||M_k||_inf` over the given sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaFv {
    pub value: f64,
    /// Set when any set was resampled, so the sup is over realized draws only.
    pub empirical: bool,
}

pub fn compute_delta_fv(fs: &FeatureSystem, sets: &[SampleSet]) -> Result<DeltaFv> {
    if sets.is_empty() {
        return Err(Error::InvalidInput(
            "delta_FV needs at least one sample set".into(),
        ));
    }
    let mut value: f64 = 0.0;
    for set in unique_sets(sets) {
        value = value.max(Projection::new(fs, set)?.inf_norm());
    }
    Ok(DeltaFv {
        value,
        empirical: sets.iter().any(|s| s.mode == SelectionMode::Resample),
    })
}

/// How `delta_app` is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum DeltaAppMode<'p> {
    /// Every deterministic policy, refused when `|A|^|S|` exceeds `cap`.
    Exhaustive { cap: u64 },
    /// Only the supplied policies; a lower estimate of the true sup.
    Encountered(&'p [Policy]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaAppKind {
    Exhaustive,
    LowerEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaApp {
    pub value: f64,
    pub kind: DeltaAppKind,
}

/// `delta_app = sup_{k, mu} ||M_k J^mu - J^mu||_inf`.
pub fn compute_delta_app(
    mdp: &Mdp,
    fs: &FeatureSystem,
    sets: &[SampleSet],
    mode: DeltaAppMode<'_>,
) -> Result<DeltaApp> {
    if sets.is_empty() {
        return Err(Error::InvalidInput(
            "delta_app needs at least one sample set".into(),
        ));
    }
    if fs.num_states() != mdp.num_states() {
        return Err(Error::InvalidInput(
            "feature system and MDP disagree on |S|".into(),
        ));
    }
    let projections = unique_sets(sets)
        .into_iter()
        .map(|s| Projection::new(fs, s))
        .collect::<Result<Vec<_>>>()?;
    let worst = |policy: &Policy| -> Result<f64> {
        let j = mdp.evaluate_policy(policy)?;
        let mut gap: f64 = 0.0;
        for p in &projections {
            gap = gap.max(p.apply(&j)?.sup_distance(&j));
        }
        Ok(gap)
    };
    let mut value: f64 = 0.0;
    let kind = match mode {
        DeltaAppMode::Exhaustive { cap } => {
            match mdp.policy_count() {
                Some(count) if count <= cap => {}
                Some(count) => {
                    return Err(Error::EnumerationCap {
                        needed: count.to_string(),
                        cap,
                    })
                }
                None => {
                    return Err(Error::EnumerationCap {
                        needed: format!("{}^{}", mdp.num_actions(), mdp.num_states()),
                        cap,
                    })
                }
            }
            for policy in mdp.policies() {
                value = value.max(worst(&policy)?);
            }
            DeltaAppKind::Exhaustive
        }
        DeltaAppMode::Encountered(policies) => {
            let distinct: BTreeSet<&[usize]> = policies.iter().map(|p| p.as_slice()).collect();
            for actions in distinct {
                value = value.max(worst(&Policy::new(actions.to_vec()))?);
            }
            DeltaAppKind::LowerEstimate
        }
    };
    Ok(DeltaApp { value, kind })
}

/// Spectral data of one sample set used by the gradient-descent analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralQuantities {
    /// `sigma_min(Phi)` over all states.
    pub sigma_min_phi: f64,
    /// `max_i |1 - gamma lambda_i(Phi_D^T Phi_D)|`.
    pub alpha_gd: f64,
    /// Eigenvalues of `Phi_D^T Phi_D`, largest first.
    pub eigenvalues: Vec<f64>,
}

pub fn spectral_quantities(
    fs: &FeatureSystem,
    ds: &SampleSet,
    gamma: f64,
) -> Result<SpectralQuantities> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "stepsize {gamma} must be positive"
        )));
    }
    let eigenvalues = Projection::new(fs, ds)?.gram_eigenvalues()?;
    Ok(SpectralQuantities {
        sigma_min_phi: fs.sigma_min()?,
        alpha_gd: gd_contraction(&eigenvalues, gamma),
        eigenvalues,
    })
}

fn gd_contraction(eigenvalues: &[f64], gamma: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|l| (1.0 - gamma * l).abs())
        .fold(0.0, f64::max)
}

/// `alpha_GD,gamma = sup_k max_i |1 - gamma lambda_i(Phi_{D_k}^T Phi_{D_k})|`.
pub fn alpha_gd_sup(fs: &FeatureSystem, sets: &[SampleSet], gamma: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for set in unique_sets(sets) {
        let eig = Projection::new(fs, set)?.gram_eigenvalues()?;
        sup = sup.max(gd_contraction(&eig, gamma));
    }
    Ok(sup)
}

/// The stepsize bound `1 / (d inf_k ||Phi_{D_k}^T Phi_{D_k}||_inf^2)`.
pub fn stepsize_threshold(fs: &FeatureSystem, sets: &[SampleSet]) -> Result<f64> {
    let mut inf_gram = f64::INFINITY;
    for set in unique_sets(sets) {
        inf_gram = inf_gram.min(inf_norm(Projection::new(fs, set)?.gram()));
    }
    if !inf_gram.is_finite() {
        return Err(Error::InvalidInput(
            "stepsize threshold needs a sample set".into(),
        ));
    }
    Ok(1.0 / (fs.dim() as f64 * inf_gram * inf_gram))
}
