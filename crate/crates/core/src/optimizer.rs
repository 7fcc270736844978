//! Outer maximization of the penalized profiled objective.
//!
//! Each outer step linearizes the moments (Gauss–Newton curvature `Γ̂ᵀΣ̂⁻¹Γ̂`),
//! replaces the penalty by its local quadratic approximation and backtracks on
//! the true penalized objective. Small coordinates are frozen at zero.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ActiveSet, Dataset};
use crate::dual::{self, weighted_gram, DualKind, DualOptions, DualSolution};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MomentModel, SemModel};
use crate::penalty::{lqa_coefficient, total_penalty, PenaltySpec};

/// When to append the pseudo-observation `−(a/n) Σ g_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjustPolicy {
    Never,
    /// Only if the plain dual is infeasible at the starting value.
    Auto,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// The model's own starting value (sample mean, least squares, ...).
    ModelDefault,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub zero_threshold: f64,
    /// Sup-norm step tolerance.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Maximum number of nonzero coordinates.
    pub sieve_cap: Option<usize>,
    pub adjust: AdjustPolicy,
    pub init: InitStrategy,
    pub dual: DualOptions,
    pub max_backtracks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            zero_threshold: 1e-3,
            outer_tol: 1e-6,
            max_outer: 200,
            sieve_cap: None,
            adjust: AdjustPolicy::Auto,
            init: InitStrategy::ModelDefault,
            dual: DualOptions::default(),
            max_backtracks: 40,
        }
    }
}

impl FitOptions {
    pub fn with_init(mut self, theta: Vec<f64>) -> Self {
        self.init = InitStrategy::Explicit(theta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zero_threshold >= 0.0) {
            return Err(Error::InvalidArgument("zero_threshold must be >= 0".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        if self.sieve_cap == Some(0) {
            return Err(Error::InvalidArgument("sieve_cap must be at least 1".into()));
        }
        self.dual.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub theta: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetFit {
    pub theta: Vec<f64>,
    pub active: ActiveSet,
    pub dual: DualSolution,
    pub objective_unpenalized: f64,
    pub objective_penalized: f64,
    pub gamma: f64,
    pub penalty: PenaltySpec,
    pub outer_iterations: usize,
    pub trace: Vec<TracePoint>,
    pub adjusted: bool,
    pub converged: bool,
}

impl PetFit {
    pub fn kind(&self) -> DualKind {
        self.dual.kind
    }

    /// Number of nonzero coordinates.
    pub fn df(&self) -> usize {
        self.active.len()
    }
}

/// `a = max{1, ln(n)/2}`.
pub fn adjustment_constant(n: usize) -> f64 {
    ((n as f64).ln() / 2.0).max(1.0)
}

/// Append the row `−(a/n) Σ g_i` with `a = max{1, ln(n)/2}`.
pub fn adjusted_moments(g: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = g.shape();
    let a = adjustment_constant(n);
    let sums = g.row_sum();
    let mut out = g.clone().insert_row(n, 0.0);
    for k in 0..r {
        out[(n, k)] = -a / n as f64 * sums[k];
    }
    out
}

/// `{j : |θ̂_j| > γ}`.
pub fn apply_selection(fit: &PetFit, gamma: f64) -> ActiveSet {
    let idx = fit
        .theta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > gamma)
        .map(|(j, _)| j)
        .collect();
    ActiveSet::new(idx, fit.theta.len()).expect("indices come from the vector itself")
}

/// Unpenalized profiled ET objective with the raw moments.
pub fn profiled_objective(
    model: &dyn MomentModel,
    data: &Dataset,
    theta: &[f64],
    opts: &DualOptions,
) -> Result<(f64, DualSolution)> {
    let problem = Problem::new(model, data, PenaltySpec::none(), DualKind::ExponentialTilting, false, *opts);
    let ev = problem.eval(theta, None)?;
    Ok((ev.ell, ev.dual))
}

/// Profiled objective and penalized objective with an explicit dual kind and
/// adjustment, recomputed from scratch.
pub fn evaluate_penalized(
    model: &dyn MomentModel,
    data: &Dataset,
    theta: &[f64],
    penalty: &PenaltySpec,
    kind: DualKind,
    adjusted: bool,
    opts: &DualOptions,
) -> Result<(f64, f64, DualSolution)> {
    let problem = Problem::new(model, data, *penalty, kind, adjusted, *opts);
    let ev = problem.eval(theta, None)?;
    Ok((ev.ell, ev.ellp, ev.dual))
}

/// Derivative of the profiled objective in θ, by the envelope property.
///
/// The adjustment is inferred from the number of weights in `dual`.
pub fn theta_gradient(model: &dyn MomentModel, data: &Dataset, theta: &[f64], dual: &DualSolution) -> Result<Vec<f64>> {
    if !dual.converged {
        return Err(Error::StaleDual);
    }
    let adjusted = match dual.weights.len() {
        n if n == data.n() => false,
        n if n == data.n() + 1 => true,
        n => return Err(Error::Layout { expected: data.n(), got: n }),
    };
    let gamma_hat = weighted_jacobian(model, data, theta, &dual.weights, adjusted)?;
    Ok(envelope_gradient(&gamma_hat, dual).iter().copied().collect())
}

pub(crate) fn effective_weights(weights: &[f64], n: usize, adjusted: bool) -> Vec<f64> {
    if adjusted {
        let shift = weights[n] * adjustment_constant(n) / n as f64;
        weights[..n].iter().map(|w| w - shift).collect()
    } else {
        weights.to_vec()
    }
}

pub(crate) fn weighted_jacobian(
    model: &dyn MomentModel,
    data: &Dataset,
    theta: &[f64],
    weights: &[f64],
    adjusted: bool,
) -> Result<DMatrix<f64>> {
    let w = effective_weights(weights, data.n(), adjusted);
    model.weighted_jacobian(data, theta, &w)
}

fn envelope_gradient(gamma_hat: &DMatrix<f64>, dual: &DualSolution) -> DVector<f64> {
    let nu = DVector::from_column_slice(&dual.nu);
    let g = gamma_hat.tr_mul(&nu);
    match dual.kind {
        DualKind::ExponentialTilting => g,
        DualKind::EmpiricalLikelihood => -g,
    }
}

/// Evaluated state of the outer problem at one θ.
#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub theta: Vec<f64>,
    pub g: DMatrix<f64>,
    pub dual: DualSolution,
    pub ell: f64,
    pub ellp: f64,
}

/// Objective, penalty and dual settings shared by every evaluation of one fit.
pub(crate) struct Problem<'a> {
    pub model: &'a dyn MomentModel,
    pub data: &'a Dataset,
    pub penalty: PenaltySpec,
    pub penalized: Vec<usize>,
    pub kind: DualKind,
    pub adjusted: bool,
    pub dual_opts: DualOptions,
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a dyn MomentModel,
        data: &'a Dataset,
        penalty: PenaltySpec,
        kind: DualKind,
        adjusted: bool,
        dual_opts: DualOptions,
    ) -> Self {
        Problem { model, data, penalty, penalized: model.penalized_indices(), kind, adjusted, dual_opts }
    }

    pub fn penalty_total(&self, theta: &[f64]) -> f64 {
        if self.penalty.is_active() {
            total_penalty(&self.penalty, theta, &self.penalized)
        } else {
            0.0
        }
    }

    pub fn eval(&self, theta: &[f64], start: Option<&[f64]>) -> Result<Eval> {
        self.model.check_domain(theta)?;
        let raw = self.model.moment_matrix(self.data, theta)?;
        let g = if self.adjusted { adjusted_moments(&raw) } else { raw };
        let dual = dual::solve(self.kind, &g, start, &self.dual_opts)?;
        let ell = dual.objective;
        let ellp = ell - self.penalty_total(theta);
        Ok(Eval { theta: theta.to_vec(), g, dual, ell, ellp })
    }

    /// Envelope gradient and Gauss–Newton curvature `Γ̂ᵀΣ̂⁻¹Γ̂` (both in θ).
    pub fn gradient_and_curvature(&self, ev: &Eval) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let gamma_hat = weighted_jacobian(self.model, self.data, &ev.theta, &ev.dual.weights, self.adjusted)?;
        let grad = envelope_gradient(&gamma_hat, &ev.dual);
        let curv = information(&gamma_hat, &weighted_gram(&ev.g, &ev.dual.weights))?;
        Ok((grad, curv))
    }

    /// `Γ̂ᵀΣ̂⁻¹Γ̂` at an evaluated point.
    pub fn information(&self, ev: &Eval) -> Result<DMatrix<f64>> {
        Ok(self.gradient_and_curvature(ev)?.1)
    }
}

fn information(gamma_hat: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let solved = match linalg::cholesky_with_ridge(sigma, linalg::diag_scale(sigma)) {
        Some(ch) => ch.solve(gamma_hat),
        None => linalg::pinv_symmetric(sigma, 1e-12) * gamma_hat,
    };
    let h = gamma_hat.tr_mul(&solved);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curvature"));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Free directions of the outer search.
#[derive(Debug, Clone)]
pub(crate) enum Search {
    /// Move the listed coordinates; the rest stay at their current values.
    /// Coordinates may be frozen at zero and removed.
    Coordinates(Vec<usize>),
    /// Move within `θ₀ + span(basis)`; nothing is frozen.
    Affine(DMatrix<f64>),
}

impl Search {
    fn basis(&self, p: usize) -> DMatrix<f64> {
        match self {
            Search::Coordinates(free) => {
                let mut b = DMatrix::zeros(p, free.len());
                for (c, &j) in free.iter().enumerate() {
                    b[(j, c)] = 1.0;
                }
                b
            }
            Search::Affine(b) => b.clone(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Search::Coordinates(free) => free.len(),
            Search::Affine(b) => b.ncols(),
        }
    }
}

pub(crate) struct EngineOutcome {
    pub best: Eval,
    pub search: Search,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    /// True when the loop ended on a line-search failure with a non-negligible predicted gain.
    pub stalled: bool,
}

fn is_rejection(e: &Error) -> bool {
    e.is_numerical() || matches!(e, Error::Domain(_) | Error::NonFinite(_))
}

impl<'a> Problem<'a> {
    /// Zero small free coordinates and enforce the sieve cap.
    fn project(&self, theta: &mut [f64], search: &Search, opts: &FitOptions) {
        let Search::Coordinates(free) = search else {
            return;
        };
        let freezable: Vec<usize> = free.iter().copied().filter(|j| self.penalized.contains(j)).collect();
        if self.penalty.is_active() && opts.zero_threshold > 0.0 {
            for &j in &freezable {
                if theta[j].abs() < opts.zero_threshold {
                    theta[j] = 0.0;
                }
            }
        }
        if let Some(cap) = opts.sieve_cap {
            let nonzero = theta.iter().filter(|v| **v != 0.0).count();
            if nonzero > cap {
                let mut cands: Vec<usize> = freezable.iter().copied().filter(|&j| theta[j] != 0.0).collect();
                // smallest magnitude first; among ties the highest index goes first
                cands.sort_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()).then(b.cmp(&a)));
                for &j in cands.iter().take(nonzero - cap) {
                    theta[j] = 0.0;
                }
            }
        }
    }

    fn lqa(&self, theta: &[f64]) -> DVector<f64> {
        let mut c = DVector::zeros(theta.len());
        if self.penalty.is_active() {
            for &j in &self.penalized {
                c[j] = lqa_coefficient(&self.penalty, theta[j]);
            }
        }
        c
    }

    fn try_eval(&self, theta: &[f64], start: &[f64]) -> Result<Option<Eval>> {
        match self.eval(theta, Some(start)) {
            Ok(ev) if ev.dual.converged || ev.dual.grad_norm <= 1e-6 => Ok(Some(ev)),
            Ok(_) => Ok(None),
            Err(e) if is_rejection(&e) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Monotone LQA / Gauss–Newton ascent from an evaluated starting point.
    pub fn run(&self, start: Eval, mut search: Search, opts: &FitOptions) -> Result<EngineOutcome> {
        let p = start.theta.len();
        let mut cur = start;
        let mut trace = vec![TracePoint { theta: cur.theta.clone(), objective: cur.ellp }];
        let mut converged = false;
        let mut stalled = false;
        let mut iterations = 0;

        if let Search::Coordinates(free) = &mut search {
            if self.penalty.is_active() && opts.zero_threshold > 0.0 {
                free.retain(|&j| !(self.penalized.contains(&j) && cur.theta[j] == 0.0));
            }
        }

        while iterations < opts.max_outer {
            if search.dim() == 0 {
                converged = true;
                break;
            }
            iterations += 1;
            let (grad, curv) = self.gradient_and_curvature(&cur)?;
            let c = self.lqa(&cur.theta);
            let theta_v = DVector::from_column_slice(&cur.theta);
            let rhs = &grad - c.component_mul(&theta_v);
            let basis = search.basis(p);
            let mut h = curv;
            for j in 0..p {
                h[(j, j)] += c[j];
            }
            let reduced = basis.tr_mul(&(&h * &basis));
            let b = basis.tr_mul(&rhs);
            let delta_beta = linalg::solve_spd(&reduced, &b)
                .unwrap_or_else(|| linalg::pinv_symmetric(&reduced, 1e-12) * &b);
            let delta = &basis * &delta_beta;
            let predicted = 0.5 * b.dot(&delta_beta);

            let mut t = 1.0;
            let mut accepted: Option<Eval> = None;
            for _ in 0..=opts.max_backtracks {
                let raw: Vec<f64> = cur.theta.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
                let mut projected = raw.clone();
                self.project(&mut projected, &search, opts);
                if let Some(ev) = self.try_eval(&projected, &cur.dual.nu)? {
                    if ev.ellp >= cur.ellp {
                        accepted = Some(ev);
                        break;
                    }
                }
                if projected != raw {
                    if let Some(ev) = self.try_eval(&raw, &cur.dual.nu)? {
                        if ev.ellp >= cur.ellp {
                            accepted = Some(ev);
                            break;
                        }
                    }
                }
                t *= 0.5;
            }

            let Some(next) = accepted else {
                if predicted <= 1e-10 * cur.ellp.abs().max(1.0) || delta.amax() < opts.outer_tol {
                    converged = true;
                } else {
                    debug!("line search failed: predicted gain {predicted:.3e}, step {:.3e}", delta.amax());
                    stalled = true;
                }
                break;
            };
            let step = cur
                .theta
                .iter()
                .zip(&next.theta)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            cur = next;
            if let Search::Coordinates(free) = &mut search {
                if self.penalty.is_active() || opts.sieve_cap.is_some() {
                    free.retain(|&j| !(self.penalized.contains(&j) && cur.theta[j] == 0.0));
                }
            }
            trace.push(TracePoint { theta: cur.theta.clone(), objective: cur.ellp });
            if step < opts.outer_tol {
                converged = true;
                break;
            }
        }
        Ok(EngineOutcome { best: cur, search, iterations, trace, converged, stalled })
    }

    /// Evaluate at `theta`, deciding the adjustment by `policy` when it is `Auto`.
    pub fn start(&mut self, theta: &[f64], policy: AdjustPolicy) -> Result<Eval> {
        match policy {
            AdjustPolicy::Never => {
                self.adjusted = false;
                self.eval(theta, None)
            }
            AdjustPolicy::Always => {
                self.adjusted = true;
                self.eval(theta, None)
            }
            AdjustPolicy::Auto => {
                self.adjusted = false;
                match self.eval(theta, None) {
                    Err(Error::ConvexHullViolation) => {
                        debug!("dual infeasible at start; switching to adjusted moments");
                        self.adjusted = true;
                        self.eval(theta, None)
                    }
                    other => other,
                }
            }
        }
    }

    pub fn into_fit(&self, outcome: &EngineOutcome) -> PetFit {
        let best = &outcome.best;
        PetFit {
            theta: best.theta.clone(),
            active: ActiveSet::support(&best.theta),
            dual: best.dual.clone(),
            objective_unpenalized: best.ell,
            objective_penalized: best.ellp,
            gamma: self.penalty.gamma,
            penalty: self.penalty,
            outer_iterations: outcome.iterations,
            trace: outcome.trace.clone(),
            adjusted: self.adjusted,
            converged: outcome.converged,
        }
    }
}

fn initial_theta(model: &dyn MomentModel, data: &Dataset, init: &InitStrategy) -> Result<Vec<f64>> {
    let theta = match init {
        InitStrategy::ModelDefault => model.default_init(data),
        InitStrategy::Explicit(v) => v.clone(),
    };
    if theta.len() != model.n_params() {
        return Err(Error::InvalidDimension(format!(
            "initial value has length {} but model has {} parameters",
            theta.len(),
            model.n_params()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial value"));
    }
    Ok(theta)
}

/// Penalized fit with the chosen inner problem.
pub fn fit_with_kind(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    opts: &FitOptions,
    kind: DualKind,
) -> Result<PetFit> {
    penalty.validate()?;
    opts.validate()?;
    if data.dim() != model.obs_dim() {
        return Err(Error::Layout { expected: model.obs_dim(), got: data.dim() });
    }
    let theta0 = initial_theta(model, data, &opts.init)?;
    let mut problem = Problem::new(model, data, *penalty, kind, false, opts.dual);
    let start = problem.start(&theta0, opts.adjust)?;
    let search = Search::Coordinates((0..model.n_params()).collect());
    let outcome = problem.run(start, search, opts)?;
    let fit = problem.into_fit(&outcome);
    if outcome.stalled {
        return Err(Error::Stalled { best: Box::new(fit) });
    }
    Ok(fit)
}

/// Penalized exponentially tilted fit.
pub fn fit_pet(model: &dyn MomentModel, data: &Dataset, penalty: &PenaltySpec, opts: &FitOptions) -> Result<PetFit> {
    fit_with_kind(model, data, penalty, opts, DualKind::ExponentialTilting)
}

/// Fit over the affine set `offset + span(basis)` (columns orthonormal).
pub(crate) fn fit_affine(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    opts: &FitOptions,
    kind: DualKind,
    adjusted: bool,
    offset: &[f64],
    basis: DMatrix<f64>,
) -> Result<PetFit> {
    let mut problem = Problem::new(model, data, *penalty, kind, adjusted, opts.dual);
    let start = problem.start(offset, if adjusted { AdjustPolicy::Always } else { AdjustPolicy::Never })?;
    let outcome = problem.run(start, Search::Affine(basis), opts)?;
    let fit = problem.into_fit(&outcome);
    if outcome.stalled {
        return Err(Error::Stalled { best: Box::new(fit) });
    }
    Ok(fit)
}

/// Maximum number of block cycles in [`fit_pet_blockwise`].
pub const MAX_CYCLES: usize = 50;

/// Blockwise iterates with any natural-scale entry above this are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e4;

/// Cyclic block fit of a structural equation model: loadings, couplings,
/// measurement variances, latent variances, then one joint pass per cycle. Adjusted moments are always used
/// and only the couplings are penalized. Variances move on the log scale.
///
/// An explicit initial value is given on the natural scale.
pub fn fit_pet_blockwise(sem: &SemModel, data: &Dataset, penalty: &PenaltySpec, opts: &FitOptions) -> Result<PetFit> {
    penalty.validate()?;
    opts.validate()?;
    if data.dim() != sem.obs_dim() {
        return Err(Error::Layout { expected: sem.obs_dim(), got: data.dim() });
    }
    let internal = sem.log_variances();
    let natural0 = match &opts.init {
        InitStrategy::ModelDefault => sem.identification_start(),
        InitStrategy::Explicit(v) => v.clone(),
    };
    if natural0.len() != sem.n_params() {
        return Err(Error::InvalidDimension(format!(
            "initial value has length {} but model has {} parameters",
            natural0.len(),
            sem.n_params()
        )));
    }
    let mut theta = internal.from_natural(&natural0);
    let problem = Problem::new(&internal, data, *penalty, DualKind::ExponentialTilting, true, opts.dual);
    let mut cur = problem.eval(&theta, None)?;
    let mut frozen: Vec<usize> = Vec::new();
    let mut trace = vec![TracePoint { theta: sem.to_natural(&theta).clone(), objective: cur.ellp }];
    let mut converged = false;
    let mut cycles = 0;
    while cycles < MAX_CYCLES {
        cycles += 1;
        let before = theta.clone();
        for block in internal.blocks() {
            let free: Vec<usize> = block.filter(|j| !frozen.contains(j)).collect();
            if free.is_empty() {
                continue;
            }
            let outcome = problem.run(cur.clone(), Search::Coordinates(free.clone()), opts)?;
            if outcome.stalled {
                debug!("block stalled in cycle {cycles}; keeping its best iterate");
            }
            if let Search::Coordinates(left) = &outcome.search {
                frozen.extend(free.iter().filter(|j| !left.contains(j)));
            }
            cur = outcome.best;
        }
        // joint pass over everything still free; removes the slow zig-zag of
        // strongly coupled blocks
        let free: Vec<usize> = (0..internal.n_params()).filter(|j| !frozen.contains(j)).collect();
        let outcome = problem.run(cur.clone(), Search::Coordinates(free.clone()), opts)?;
        if let Search::Coordinates(left) = &outcome.search {
            frozen.extend(free.iter().filter(|j| !left.contains(j)));
        }
        cur = outcome.best;
        theta = cur.theta.clone();
        let natural = internal.to_natural(&theta);
        if natural.iter().any(|v| !(v.abs() <= DIVERGENCE_BOUND)) {
            return Err(Error::Domain(format!("blockwise iterate diverged in cycle {cycles}")));
        }
        trace.push(TracePoint { theta: natural, objective: cur.ellp });
        let change = before.iter().zip(&theta).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if change < opts.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("blockwise fit did not converge after {cycles} cycles");
    }
    let natural = internal.to_natural(&theta);
    let reporting = Problem::new(sem, data, *penalty, DualKind::ExponentialTilting, true, opts.dual);
    let fin = reporting.eval(&natural, Some(&cur.dual.nu))?;
    Ok(PetFit {
        active: ActiveSet::support(&natural),
        theta: natural,
        dual: fin.dual,
        objective_unpenalized: fin.ell,
        objective_penalized: fin.ellp,
        gamma: penalty.gamma,
        penalty: *penalty,
        outer_iterations: cycles,
        trace,
        adjusted: true,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_model;
    use approx::assert_abs_diff_eq;

    fn two_point() -> Dataset {
        Dataset::from_rows(&[vec![-1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn adjustment_constant_examples() {
        assert_abs_diff_eq!(adjustment_constant(50), 50_f64.ln() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(adjustment_constant(50), 1.95601, epsilon = 1e-5);
        assert_eq!(adjustment_constant(7), 1.0);
        let g = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let aug = adjusted_moments(&g);
        assert_eq!(aug.nrows(), 3);
        assert_eq!(aug[(2, 0)], 0.0);
    }

    #[test]
    fn profiled_objective_examples() {
        let m = mean_model(1).unwrap();
        let d = two_point();
        let opts = DualOptions::default();
        let (v, s) = profiled_objective(m.as_ref(), &d, &[0.0], &opts).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(s.nu, vec![0.0]);
        let (v, s) = profiled_objective(m.as_ref(), &d, &[0.2], &opts).unwrap();
        assert_abs_diff_eq!(s.nu[0], 0.5 * 1.5_f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(v, -0.020135, epsilon = 1e-6);
        assert!(v < 0.0);
    }

    #[test]
    fn gradient_examples() {
        let m = mean_model(1).unwrap();
        let d = two_point();
        let opts = DualOptions::default();
        let (_, s) = profiled_objective(m.as_ref(), &d, &[0.2], &opts).unwrap();
        let g = theta_gradient(m.as_ref(), &d, &[0.2], &s).unwrap();
        assert_abs_diff_eq!(g[0], -s.nu[0], epsilon = 1e-12);
        let mut stale = s.clone();
        stale.converged = false;
        assert!(matches!(theta_gradient(m.as_ref(), &d, &[0.2], &stale), Err(Error::StaleDual)));
    }

    #[test]
    fn selection_examples() {
        let fit_theta = vec![1.0, 0.6, 0.3, 0.0, 0.0];
        let m = mean_model(5).unwrap();
        let rows: Vec<Vec<f64>> = vec![fit_theta.clone(), fit_theta.iter().map(|v| v * 1.0).collect()];
        let data = Dataset::from_rows(&rows).unwrap();
        let fit = fit_pet(m.as_ref(), &data, &PenaltySpec::none(), &FitOptions::default().with_init(fit_theta.clone()));
        // degenerate data: every row equals θ; the dual is trivially zero
        let fit = fit.unwrap();
        assert_eq!(apply_selection(&fit, 0.1).indices(), &[0, 1, 2]);
        assert_eq!(apply_selection(&fit, 0.0).indices(), &[0, 1, 2]);
        assert!(apply_selection(&fit, 1.0).is_empty());
    }

    #[test]
    fn unpenalized_mean_fit_is_sample_mean() {
        let m = mean_model(2).unwrap();
        let data = Dataset::from_rows(&[
            vec![0.3, 1.0],
            vec![-0.4, 2.5],
            vec![1.1, 0.2],
            vec![0.9, -0.7],
            vec![0.0, 0.4],
        ])
        .unwrap();
        let fit = fit_pet(m.as_ref(), &data, &PenaltySpec::none(), &FitOptions::default().with_init(vec![0.0, 0.0])).unwrap();
        let mean = data.column_means();
        assert_abs_diff_eq!(fit.theta[0], mean[0], epsilon = 1e-8);
        assert_abs_diff_eq!(fit.theta[1], mean[1], epsilon = 1e-8);
        assert!(fit.converged);
    }
}
