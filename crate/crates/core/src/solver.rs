//! Discrete residual and linearization, the damped Newton corrector, the
//! zeta continuation from the subsolution and the sweep over tau.

use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{
    check_sandwich, margin_from_chi, margin_from_hessians, normal_derivative_monitor,
    AdmissibilityMargin, BarrierPair, NormalDerivativeReport, SandwichReport,
};
use crate::error::{Endpoint, Error, Result};
use crate::fields::{
    hessian_stencil, scaled_hessian_operator, BoundaryData, BoundaryPair, ChiField, CylinderField,
    CylinderGrid, TimeScaling, TorusGrid,
};
use crate::linalg::{bicgstab, BandedLu, CsrMatrix};
use crate::spectral::{arctan_sum_jet, ArctanSumJet, PhaseBranch, SymmetricMatrix};

/// Smallest admissible eigenvalue of the linearization coefficients.
pub const ELLIPTICITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    pub zeta_steps: Vec<f64>,
    pub tau_sequence: Vec<f64>,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self {
            zeta_steps: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tau_sequence: vec![1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0],
        }
    }
}

impl ContinuationSchedule {
    pub fn new(zeta_steps: Vec<f64>, tau_sequence: Vec<f64>) -> Result<Self> {
        let s = Self {
            zeta_steps,
            tau_sequence,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let z = &self.zeta_steps;
        if z.len() < 2 || z[0] != 0.0 || *z.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput(
                "zeta steps must start at 0 and end at 1".into(),
            ));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("zeta steps must increase strictly".into()));
        }
        let t = &self.tau_sequence;
        if t.is_empty() {
            return Err(Error::InvalidInput("tau sequence is empty".into()));
        }
        if t.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::InvalidInput("tau values must lie in (0, 1]".into()));
        }
        if t.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("tau sequence must decrease strictly".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolverKind {
    /// Banded LU for one space dimension, BiCGSTAB otherwise.
    Auto,
    Banded,
    Krylov,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonSettings {
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub backtrack_factor: f64,
    pub min_step: f64,
    pub linear_tolerance: f64,
    pub max_linear_iterations: usize,
    pub linear_solver: LinearSolverKind,
    /// Start each zeta step from the tangent extrapolation of the previous
    /// solution.
    pub predictor: bool,
    pub max_bisections: usize,
    /// Start each tau from the previous tau's solution at zeta = 1.
    pub warm_start_tau: bool,
    /// Solve independent tau entries concurrently (ignored with warm start).
    pub parallel_tau: bool,
    /// Seed for the random Jacobian consistency direction.
    pub seed: u64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-10,
            max_iterations: 50,
            backtrack_factor: 0.5,
            min_step: 2f64.powi(-20),
            linear_tolerance: 1e-10,
            max_linear_iterations: 20_000,
            linear_solver: LinearSolverKind::Auto,
            predictor: true,
            max_bisections: 8,
            warm_start_tau: false,
            parallel_tau: false,
            seed: 0,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::InvalidInput("residual tolerance must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput("backtrack factor must lie in (0, 1)".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::InvalidInput("minimum step must lie in (0, 1]".into()));
        }
        if !(self.linear_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidInput("linear tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

fn target_phase(sub_phase: f64, zeta: f64, big_theta: f64) -> f64 {
    (1.0 - zeta) * sub_phase + zeta * big_theta
}

fn check_grids(v: &CylinderField, chi: &ChiField, barriers: &BarrierPair) -> Result<()> {
    let g = v.grid();
    if !g.same_nodes(chi.grid()) || g.tau() != chi.grid().tau() {
        return Err(Error::InvalidInput("field and chi live on different grids".into()));
    }
    if barriers.sub_phase.len() != g.interior_count() {
        return Err(Error::InvalidInput("barriers built on a different grid".into()));
    }
    Ok(())
}

fn jets(v: &CylinderField, chi: &ChiField) -> Result<Vec<ArctanSumJet>> {
    scaled_hessian_operator(v, chi)?
        .par_iter()
        .map(arctan_sum_jet)
        .collect()
}

fn residual_from_jets(
    jets: &[ArctanSumJet],
    zeta: f64,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
) -> Vec<f64> {
    jets.iter()
        .zip(&barriers.sub_phase)
        .map(|(j, &s)| j.value - target_phase(s, zeta, branch.big_theta))
        .collect()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `arctan_sum(chi + D^2 v) - phi` at interior nodes, with
/// `phi = (1 - zeta) arctan_sum(chi + D^2 v_sub) + zeta big_theta`. Faces
/// of the result are zero.
pub fn residual(
    v: &CylinderField,
    chi: &ChiField,
    zeta: f64,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
) -> Result<CylinderField> {
    check_grids(v, chi, barriers)?;
    let r = residual_from_jets(&jets(v, chi)?, zeta, barriers, branch);
    CylinderField::from_interior(v.grid(), &r)
}

/// Linearization of the residual at `v` applied to `w`:
/// `(I + M^2)^{-1} : D^2 w` with the same time scaling as the operator.
pub fn linearize_apply(v: &CylinderField, chi: &ChiField, w: &CylinderField) -> Result<CylinderField> {
    if !v.grid().same_nodes(w.grid()) {
        return Err(Error::InvalidInput("direction lives on a different grid".into()));
    }
    let grid = *v.grid();
    let scaling = TimeScaling::cylinder(grid.tau());
    let ns = grid.slice_len();
    let js = jets(v, chi)?;
    let out: Vec<f64> = js
        .par_iter()
        .enumerate()
        .map(|(i, jet)| {
            let (k, j) = grid.split(ns + i);
            jet.gradient
                .contract(&hessian_stencil(w.values(), &grid, k, j, 1, scaling))
        })
        .collect();
    CylinderField::from_interior(&grid, &out)
}

/// Row of the Jacobian for interior index `i`, with face columns dropped.
fn jacobian_row(grid: &CylinderGrid, i: usize, g: &SymmetricMatrix) -> Vec<(usize, f64)> {
    let space = grid.space();
    let n = space.n();
    let ns = grid.slice_len();
    let nt = grid.time_points();
    let scaling = TimeScaling::cylinder(grid.tau());
    let ht = grid.time_step();
    let hx = space.spacing();
    let (k, j) = grid.split(ns + i);
    let mut row = Vec::with_capacity(1 + 2 * (n + 1) + 4 * n * (n + 1));
    let mut push = |kk: usize, jj: usize, w: f64| {
        if kk >= 1 && kk + 1 < nt {
            row.push((grid.node(kk, jj) - ns, w));
        }
    };

    let a = g.get(0, 0) * scaling.tt / (ht * ht);
    push(k + 1, j, a);
    push(k - 1, j, a);
    push(k, j, -2.0 * a);
    for ax in 0..n {
        let jp = space.shift(j, ax, 1);
        let jm = space.shift(j, ax, -1);
        let b = 2.0 * g.get(0, ax + 1) * scaling.tx / (4.0 * ht * hx);
        push(k + 1, jp, b);
        push(k + 1, jm, -b);
        push(k - 1, jp, -b);
        push(k - 1, jm, b);
        let c = g.get(ax + 1, ax + 1) / (hx * hx);
        push(k, jp, c);
        push(k, jm, c);
        push(k, j, -2.0 * c);
        for bx in ax + 1..n {
            let d = 2.0 * g.get(ax + 1, bx + 1) / (4.0 * hx * hx);
            push(k, space.shift(jp, bx, 1), d);
            push(k, space.shift(jp, bx, -1), -d);
            push(k, space.shift(jm, bx, 1), -d);
            push(k, space.shift(jm, bx, -1), d);
        }
    }
    row
}

fn assemble_from_jets(grid: &CylinderGrid, jets: &[ArctanSumJet]) -> CsrMatrix {
    let rows: Vec<_> = jets
        .par_iter()
        .enumerate()
        .map(|(i, jet)| jacobian_row(grid, i, &jet.gradient))
        .collect();
    CsrMatrix::from_rows(grid.interior_count(), rows)
}

/// Sparse Jacobian of the residual at `v` over interior unknowns.
pub fn assemble_jacobian(v: &CylinderField, chi: &ChiField) -> Result<CsrMatrix> {
    Ok(assemble_from_jets(v.grid(), &jets(v, chi)?))
}

fn solve_linear(
    a: &CsrMatrix,
    rhs: &[f64],
    n: usize,
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, usize)> {
    let banded = match settings.linear_solver {
        LinearSolverKind::Auto => n == 1,
        LinearSolverKind::Banded => true,
        LinearSolverKind::Krylov => false,
    };
    if banded {
        Ok((BandedLu::factor(a)?.solve(rhs), 1))
    } else {
        let (x, out) = bicgstab(a, rhs, settings.linear_tolerance, settings.max_linear_iterations)?;
        Ok((x, out.iterations))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonRecord {
    pub zeta: f64,
    pub iterations: usize,
    /// Residual norm before the first and after each accepted step.
    pub residual_norms: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub halvings: usize,
    /// Trial iterates found outside the barriers during the line search.
    pub transient_sandwich_violations: usize,
    pub final_residual: f64,
}

struct NewtonOutcome {
    v: CylinderField,
    record: NewtonRecord,
    jets: Vec<ArctanSumJet>,
}

fn newton_core(
    v0: &CylinderField,
    chi: &ChiField,
    zeta: f64,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    settings: &NewtonSettings,
) -> Result<NewtonOutcome> {
    check_grids(v0, chi, barriers)?;
    if !v0.faces_are_zero() {
        return Err(Error::InvalidInput("initial guess must vanish on both faces".into()));
    }
    let grid = *v0.grid();
    let n = grid.n();
    let mut v = v0.clone();
    let mut js = jets(&v, chi)?;
    let mut r = residual_from_jets(&js, zeta, barriers, branch);
    let mut norm = inf_norm(&r);
    let mut record = NewtonRecord {
        zeta,
        iterations: 0,
        residual_norms: vec![norm],
        linear_iterations: Vec::new(),
        halvings: 0,
        transient_sandwich_violations: 0,
        final_residual: norm,
    };
    loop {
        if norm <= settings.residual_tolerance {
            record.final_residual = norm;
            return Ok(NewtonOutcome { v, record, jets: js });
        }
        if record.iterations == settings.max_iterations || !norm.is_finite() {
            return Err(Error::NoConvergence {
                iterations: record.iterations,
                residual: norm,
            });
        }
        let jac = assemble_from_jets(&grid, &js);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let (dv, lin_its) = solve_linear(&jac, &rhs, n, settings)?;
        record.linear_iterations.push(lin_its);

        let mut alpha = 1.0;
        loop {
            let mut trial = v.clone();
            for (t, d) in trial.interior_mut().iter_mut().zip(&dv) {
                *t += alpha * d;
            }
            let accepted = match jets(&trial, chi) {
                Ok(tj) => {
                    let tr = residual_from_jets(&tj, zeta, barriers, branch);
                    let tn = inf_norm(&tr);
                    if tn.is_finite() && tn < norm {
                        Some((trial, tj, tr, tn))
                    } else {
                        None
                    }
                }
                Err(_) => None,
            };
            if let Some((trial, tj, tr, tn)) = accepted {
                if !check_sandwich(&trial, barriers).passed {
                    record.transient_sandwich_violations += 1;
                }
                v = trial;
                js = tj;
                r = tr;
                norm = tn;
                break;
            }
            alpha *= settings.backtrack_factor;
            record.halvings += 1;
            if alpha < settings.min_step {
                return Err(Error::StepCollapse {
                    iterations: record.iterations,
                    residual: norm,
                });
            }
        }
        record.iterations += 1;
        record.residual_norms.push(norm);
    }
}

/// Damped Newton for the zeta equation from `v0`, which must vanish on both
/// faces. Fails with `NoConvergence` or `StepCollapse`.
pub fn newton_solve(
    v0: &CylinderField,
    chi: &ChiField,
    zeta: f64,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    settings: &NewtonSettings,
) -> Result<(CylinderField, NewtonRecord)> {
    settings.validate()?;
    let out = newton_core(v0, chi, zeta, barriers, branch, settings)?;
    Ok((out.v, out.record))
}

#[derive(Debug, Clone, Serialize)]
pub struct ZetaStepRecord {
    pub zeta: f64,
    pub newton: NewtonRecord,
    pub sandwich: SandwichReport,
    /// Smallest eigenvalue of `(I + M^2)^{-1}` over interior nodes.
    pub min_gradient_eigenvalue: f64,
    /// Smallest eigenvalue of `M`.
    pub min_eigenvalue: f64,
    /// Nodes whose phase is on the convex branch but whose `M` is not
    /// positive definite.
    pub branch_violations: usize,
    pub predicted: bool,
}

#[derive(Debug, Clone)]
pub struct ZetaPath {
    pub v: CylinderField,
    pub steps: Vec<ZetaStepRecord>,
    pub bisections: usize,
    /// Final `chi + D^2 v` spectra data at each interior node.
    pub jets: Vec<ArctanSumJet>,
}

fn step_record(
    zeta: f64,
    outcome: &NewtonOutcome,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    predicted: bool,
) -> ZetaStepRecord {
    let convex_floor = branch.big_theta - std::f64::consts::FRAC_PI_2;
    let js = &outcome.jets;
    ZetaStepRecord {
        zeta,
        newton: outcome.record.clone(),
        sandwich: check_sandwich(&outcome.v, barriers),
        min_gradient_eigenvalue: js
            .iter()
            .map(|j| j.min_gradient_eigenvalue)
            .fold(f64::INFINITY, f64::min),
        min_eigenvalue: js.iter().map(|j| j.min_eigenvalue).fold(f64::INFINITY, f64::min),
        branch_violations: js
            .iter()
            .filter(|j| j.value >= convex_floor + std::f64::consts::FRAC_PI_2 && j.min_eigenvalue <= 0.0)
            .count(),
        predicted,
    }
}

/// Tangent of the solution curve: `J v' = big_theta - arctan_sum(chi + D^2 v_sub)`.
fn tangent(
    grid: &CylinderGrid,
    js: &[ArctanSumJet],
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    settings: &NewtonSettings,
) -> Result<Vec<f64>> {
    let jac = assemble_from_jets(grid, js);
    let rhs: Vec<f64> = barriers.sub_phase.iter().map(|s| branch.big_theta - s).collect();
    Ok(solve_linear(&jac, &rhs, grid.n(), settings)?.0)
}

/// Newton along `zeta_steps` from `v_sub`, bisecting a step whose solve
/// fails. Each converged iterate must lie between the barriers.
pub fn run_zeta_path(
    chi: &ChiField,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    zeta_steps: &[f64],
    settings: &NewtonSettings,
) -> Result<ZetaPath> {
    settings.validate()?;
    if zeta_steps.first() != Some(&0.0) || zeta_steps.last() != Some(&1.0) {
        return Err(Error::InvalidInput("zeta steps must run from 0 to 1".into()));
    }
    let grid = *chi.grid();
    let start = newton_core(&barriers.v_sub, chi, 0.0, barriers, branch, settings)?;
    let mut steps = vec![step_record(0.0, &start, barriers, branch, false)];
    let mut current = start;
    let mut zeta = 0.0;
    let mut pending: Vec<f64> = zeta_steps[1..].iter().rev().copied().collect();
    let mut bisections = 0;
    let mut depth = 0;

    while let Some(&target) = pending.last() {
        let mut guess = current.v.clone();
        let mut predicted = false;
        if settings.predictor {
            if let Ok(dv) = tangent(&grid, &current.jets, barriers, branch, settings) {
                for (g, d) in guess.interior_mut().iter_mut().zip(&dv) {
                    *g += (target - zeta) * d;
                }
                predicted = true;
            }
        }
        match newton_core(&guess, chi, target, barriers, branch, settings) {
            Ok(outcome) => {
                let rec = step_record(target, &outcome, barriers, branch, predicted);
                if !rec.sandwich.passed {
                    return Err(Error::SandwichViolation {
                        violation: rec.sandwich.violation(),
                    });
                }
                steps.push(rec);
                current = outcome;
                zeta = target;
                pending.pop();
                depth = 0;
            }
            Err(e) if e.is_solver_failure() && depth < settings.max_bisections => {
                pending.push(0.5 * (zeta + target));
                bisections += 1;
                depth += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ZetaPath {
        v: current.v,
        steps,
        bisections,
        jets: current.jets,
    })
}

/// Where `chi` comes from: boundary potentials or a fixed matrix.
#[derive(Debug, Clone)]
pub enum ChiSource {
    Boundary(BoundaryData),
    Uniform(SymmetricMatrix),
}

impl ChiSource {
    pub fn n(&self) -> usize {
        match self {
            ChiSource::Boundary(d) => d.space.n(),
            ChiSource::Uniform(m) => m.dim() - 1,
        }
    }

    pub fn chi(&self, grid: &CylinderGrid) -> Result<ChiField> {
        match self {
            ChiSource::Boundary(d) => ChiField::from_boundary_data(d, grid),
            ChiSource::Uniform(m) => ChiField::uniform(grid, *m),
        }
    }

    pub fn margin(&self, space: &TorusGrid, branch: &PhaseBranch) -> Result<AdmissibilityMargin> {
        match self {
            ChiSource::Boundary(d) => margin_from_hessians(&d.hess0, &d.hess1, branch),
            ChiSource::Uniform(m) => {
                let grid = CylinderGrid::new(*space, 3, 1.0)?;
                margin_from_chi(&ChiField::uniform(&grid, *m)?, branch)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRecord {
    pub tau: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub lambda_sub: f64,
    pub lambda_super: f64,
    /// `sup |v_hat|`.
    pub sup_norm: f64,
    /// `sup |D v_hat|` in `(t, x)`.
    pub gradient_norm: f64,
    pub c1_norm: f64,
    pub final_residual: f64,
    pub newton_iterations: usize,
    pub steps: Vec<ZetaStepRecord>,
    pub bisections: usize,
    pub normal_derivative: Option<NormalDerivativeReport>,
    pub min_eigenvalue: f64,
    pub min_gradient_eigenvalue: f64,
    /// Relative mismatch between the linearization and a central difference
    /// of the residual along a random direction, at the final solution.
    pub jacobian_check: f64,
    pub warm_started: bool,
    pub wall_time_s: f64,
}

impl SolveRecord {
    fn failed(tau: f64, error: &Error, wall_time_s: f64) -> Self {
        Self {
            tau,
            converged: false,
            error: Some(error.to_string()),
            lambda_sub: f64::NAN,
            lambda_super: f64::NAN,
            sup_norm: f64::NAN,
            gradient_norm: f64::NAN,
            c1_norm: f64::NAN,
            final_residual: f64::NAN,
            newton_iterations: 0,
            steps: Vec::new(),
            bisections: 0,
            normal_derivative: None,
            min_eigenvalue: f64::NAN,
            min_gradient_eigenvalue: f64::NAN,
            jacobian_check: f64::NAN,
            warm_started: false,
            wall_time_s,
        }
    }

    /// True when every accepted step kept the linearization uniformly
    /// elliptic and respected the convex branch.
    pub fn monitors_pass(&self) -> bool {
        self.converged
            && self.min_gradient_eigenvalue >= ELLIPTICITY_FLOOR
            && self.steps.iter().all(|s| {
                s.sandwich.passed
                    && s.branch_violations == 0
                    && s.min_gradient_eigenvalue >= ELLIPTICITY_FLOOR
            })
    }
}

/// Solution data for one tau.
#[derive(Debug, Clone)]
pub struct TauSolution {
    pub tau: f64,
    pub v_hat: CylinderField,
    pub chi: ChiField,
    pub barriers: BarrierPair,
    pub jets: Vec<ArctanSumJet>,
}

#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub margin: AdmissibilityMargin,
    pub records: Vec<SolveRecord>,
    pub solutions: Vec<TauSolution>,
    /// `sup |v_hat^{tau_{k+1}} - v_hat^{tau_k}|` over consecutive solved taus.
    pub cauchy_gaps: Vec<f64>,
}

impl GeodesicResult {
    pub fn all_converged(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.converged)
    }

    /// Solution at the smallest solved tau.
    pub fn finest(&self) -> Option<&TauSolution> {
        self.solutions.last()
    }

    pub fn max_c1_norm(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.c1_norm)
            .fold(0.0, f64::max)
    }
}

/// Relative mismatch of `linearize_apply` against the central difference
/// quotient of the residual along a random direction.
pub fn jacobian_consistency(
    v: &CylinderField,
    chi: &ChiField,
    zeta: f64,
    barriers: &BarrierPair,
    branch: &PhaseBranch,
    seed: u64,
) -> Result<f64> {
    let grid = *v.grid();
    let mut rng = StdRng::seed_from_u64(seed);
    // Scale so the scaled Hessian of the direction is O(1).
    let ht = grid.time_step();
    let hx = grid.space().spacing();
    let scale = (ht * ht * grid.tau()).min(hx * hx);
    let dir: Vec<f64> = (0..grid.interior_count())
        .map(|_| scale * rng.gen_range(-1.0..1.0))
        .collect();
    let w = CylinderField::from_interior(&grid, &dir)?;
    let eps = 1e-6;
    let shifted = |sign: f64| -> Result<CylinderField> {
        let mut p = v.clone();
        for (a, b) in p.interior_mut().iter_mut().zip(&dir) {
            *a += sign * eps * b;
        }
        residual(&p, chi, zeta, barriers, branch)
    };
    let rp = shifted(1.0)?;
    let rm = shifted(-1.0)?;
    let lw = linearize_apply(v, chi, &w)?;
    let mut diff = 0.0_f64;
    for ((p, m), l) in rp.interior().iter().zip(rm.interior()).zip(lw.interior()) {
        diff = diff.max(((p - m) / (2.0 * eps) - l).abs());
    }
    Ok(diff / inf_norm(lw.interior()).max(f64::MIN_POSITIVE))
}

struct TauOutcome {
    record: SolveRecord,
    solution: Option<TauSolution>,
}

fn solve_one_tau(
    source: &ChiSource,
    base: &CylinderGrid,
    tau: f64,
    delta: f64,
    branch: &PhaseBranch,
    zeta_steps: &[f64],
    settings: &NewtonSettings,
    warm: Option<&CylinderField>,
    seed: u64,
) -> TauOutcome {
    let clock = Instant::now();
    let attempt = || -> Result<TauOutcome> {
        let grid = base.with_tau(tau)?;
        let chi = source.chi(&grid)?;
        let barriers = BarrierPair::build(delta, &chi, branch)?;
        let mut warm_started = false;
        let path = match warm {
            Some(prev) => {
                let guess = prev.regrid(&grid)?;
                match newton_core(&guess, &chi, 1.0, &barriers, branch, settings) {
                    Ok(out) => {
                        let rec = step_record(1.0, &out, &barriers, branch, false);
                        if rec.sandwich.passed {
                            warm_started = true;
                            Some(ZetaPath {
                                v: out.v,
                                steps: vec![rec],
                                bisections: 0,
                                jets: out.jets,
                            })
                        } else {
                            None
                        }
                    }
                    Err(e) if e.is_solver_failure() => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };
        let path = match path {
            Some(p) => p,
            None => run_zeta_path(&chi, &barriers, branch, zeta_steps, settings)?,
        };
        let v = &path.v;
        let sup_norm = v.sup_norm();
        let gradient_norm = v.gradient_sup_norm();
        let jacobian_check = jacobian_consistency(v, &chi, 1.0, &barriers, branch, seed)?;
        let last = path.steps.last().expect("path has at least one step");
        let record = SolveRecord {
            tau,
            converged: true,
            error: None,
            lambda_sub: barriers.lambda_sub,
            lambda_super: barriers.lambda_super,
            sup_norm,
            gradient_norm,
            c1_norm: sup_norm + gradient_norm,
            final_residual: last.newton.final_residual,
            newton_iterations: path.steps.iter().map(|s| s.newton.iterations).sum(),
            normal_derivative: Some(normal_derivative_monitor(v, &barriers)),
            min_eigenvalue: last.min_eigenvalue,
            min_gradient_eigenvalue: path
                .steps
                .iter()
                .map(|s| s.min_gradient_eigenvalue)
                .fold(f64::INFINITY, f64::min),
            steps: path.steps.clone(),
            bisections: path.bisections,
            jacobian_check,
            warm_started,
            wall_time_s: 0.0,
        };
        Ok(TauOutcome {
            record,
            solution: Some(TauSolution {
                tau,
                v_hat: path.v,
                chi,
                barriers,
                jets: path.jets,
            }),
        })
    };
    match attempt() {
        Ok(mut out) => {
            out.record.wall_time_s = clock.elapsed().as_secs_f64();
            out
        }
        Err(e) => TauOutcome {
            record: SolveRecord::failed(tau, &e, clock.elapsed().as_secs_f64()),
            solution: None,
        },
    }
}

/// Solves the zeta path for every tau of the schedule on `base` (whose own
/// tau is ignored). Admissibility is checked once, before any solve; per-tau
/// failures are recorded and end the sweep.
pub fn run_tau_sweep(
    source: &ChiSource,
    base: &CylinderGrid,
    branch: &PhaseBranch,
    schedule: &ContinuationSchedule,
    settings: &NewtonSettings,
) -> Result<GeodesicResult> {
    schedule.validate()?;
    settings.validate()?;
    if source.n() != base.n() || branch.n != base.n() {
        return Err(Error::InvalidInput("dimension mismatch between data, grid and branch".into()));
    }
    let margin = source.margin(base.space(), branch)?;
    let delta = margin.delta;
    let zetas = &schedule.zeta_steps;
    let taus = &schedule.tau_sequence;

    let mut outcomes: Vec<TauOutcome> = Vec::new();
    if settings.parallel_tau && !settings.warm_start_tau {
        let all: Vec<TauOutcome> = taus
            .par_iter()
            .enumerate()
            .map(|(k, &tau)| {
                solve_one_tau(source, base, tau, delta, branch, zetas, settings, None, settings.seed + k as u64)
            })
            .collect();
        for out in all {
            let ok = out.record.converged;
            outcomes.push(out);
            if !ok {
                break;
            }
        }
    } else {
        for (k, &tau) in taus.iter().enumerate() {
            let warm = if settings.warm_start_tau {
                outcomes.last().and_then(|o| o.solution.as_ref()).map(|s| &s.v_hat)
            } else {
                None
            };
            let out = solve_one_tau(source, base, tau, delta, branch, zetas, settings, warm, settings.seed + k as u64);
            let ok = out.record.converged;
            outcomes.push(out);
            if !ok {
                break;
            }
        }
    }

    let mut records = Vec::new();
    let mut solutions = Vec::new();
    for o in outcomes {
        records.push(o.record);
        if let Some(s) = o.solution {
            solutions.push(s);
        }
    }
    let cauchy_gaps = solutions
        .windows(2)
        .map(|w| w[1].v_hat.max_abs_difference(&w[0].v_hat))
        .collect();
    Ok(GeodesicResult {
        margin,
        records,
        solutions,
        cauchy_gaps,
    })
}

/// A path of potentials `u(t, x) = x^T Q x / 2 + w(t, x)` with `w`
/// periodic, kept apart so spatial differences of `w` can wrap.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub quadratic: SymmetricMatrix,
    pub periodic: CylinderField,
}

impl GeodesicPath {
    /// `u = (1 - t) u0 + t u1 + v_hat`.
    pub fn from_solution(pair: &BoundaryPair, v_hat: &CylinderField) -> Result<Self> {
        if pair.n() != v_hat.grid().n() {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        let u0 = pair.endpoint(Endpoint::Start);
        let u1 = pair.endpoint(Endpoint::End);
        let mut periodic = CylinderField::from_fn(v_hat.grid(), |t, x| {
            (1.0 - t) * u0.periodic_value_at(x) + t * u1.periodic_value_at(x)
        });
        for (p, v) in periodic.values_mut().iter_mut().zip(v_hat.values()) {
            *p += v;
        }
        Ok(Self {
            quadratic: *u0.quadratic(),
            periodic,
        })
    }

    pub fn grid(&self) -> &CylinderGrid {
        self.periodic.grid()
    }

    /// Full values of `u` at every node.
    pub fn values(&self) -> CylinderField {
        let grid = *self.grid();
        let q = self.quadratic;
        let n = grid.n();
        let values = (0..grid.node_count())
            .map(|node| {
                let x = grid.space().position(grid.split(node).1);
                let mut quad = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        quad += x[i] * q.get(i, j) * x[j];
                    }
                }
                0.5 * quad + self.periodic.values()[node]
            })
            .collect();
        CylinderField::from_values(&grid, values).expect("same grid")
    }

    /// Space-time Hessian in plain `(t, x)` coordinates at interior node
    /// `(k, j)`, stencil stride `step`.
    pub fn hessian(&self, k: usize, j: usize, step: usize) -> SymmetricMatrix {
        let mut h = hessian_stencil(self.periodic.values(), self.grid(), k, j, step, TimeScaling::unit());
        let n = self.quadratic.dim();
        for a in 0..n {
            for b in a..n {
                h.add_to(a + 1, b + 1, self.quadratic.get(a, b));
            }
        }
        h
    }
}

/// `u(t, x) = (1 - t) u0(x) + t u1(x) + v_hat(t, x)` at every node.
pub fn extract_potential(pair: &BoundaryPair, v_hat: &CylinderField) -> Result<CylinderField> {
    Ok(GeodesicPath::from_solution(pair, v_hat)?.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PotentialSpec, TorusGrid};
    use crate::spectral::select_branch;

    fn constant_case(points: usize, nt: usize, tau: f64) -> (ChiField, BarrierPair, PhaseBranch) {
        let q = SymmetricMatrix::from_diagonal(&[2.0, 2.0]);
        let pair = BoundaryPair::new(PotentialSpec::quadratic_only(q), PotentialSpec::quadratic_only(q)).unwrap();
        let branch = select_branch(2).unwrap();
        let grid = CylinderGrid::new(TorusGrid::new(2, points).unwrap(), nt, tau).unwrap();
        let chi = crate::fields::assemble_chi(&pair, &grid).unwrap();
        let margin = crate::barrier::margin_from_chi(&chi, &branch).unwrap();
        let barriers = BarrierPair::build(margin.delta, &chi, &branch).unwrap();
        (chi, barriers, branch)
    }

    #[test]
    fn anchor_residual_vanishes() {
        let (chi, barriers, branch) = constant_case(8, 9, 0.25);
        let r = residual(&barriers.v_sub, &chi, 0.0, &barriers, &branch).unwrap();
        assert_eq!(r.sup_norm(), 0.0);
    }

    #[test]
    fn closed_form_has_tiny_residual() {
        let (chi, barriers, branch) = constant_case(8, 9, 1.0);
        let v = CylinderField::from_fn(chi.grid(), |t, _| 2.0 / 3.0 * t * (t - 1.0));
        let r = residual(&v, &chi, 1.0, &barriers, &branch).unwrap();
        assert!(r.sup_norm() <= 1e-12, "{}", r.sup_norm());
    }

    #[test]
    fn zero_direction_linearizes_to_zero() {
        let (chi, barriers, _) = constant_case(6, 7, 1.0);
        let w = CylinderField::zeros(chi.grid());
        assert_eq!(linearize_apply(&barriers.v_sub, &chi, &w).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn assembled_jacobian_matches_matrix_free_apply() {
        let (chi, barriers, _) = constant_case(5, 6, 0.5);
        let grid = *chi.grid();
        let v = CylinderField::from_fn(&grid, |t, x| {
            t * (1.0 - t) * (0.3 + 0.1 * (std::f64::consts::TAU * x[0]).sin() * (std::f64::consts::TAU * x[1]).cos())
        });
        let w = CylinderField::from_fn(&grid, |t, x| t * (1.0 - t) * (1.0 + x[0] - 0.5 * x[1] * x[1]));
        let jac = assemble_jacobian(&v, &chi).unwrap();
        let mut y = vec![0.0; grid.interior_count()];
        jac.matvec(w.interior(), &mut y);
        let lw = linearize_apply(&v, &chi, &w).unwrap();
        let scale = inf_norm(lw.interior());
        for (a, b) in y.iter().zip(lw.interior()) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
        let _ = barriers;
    }

    #[test]
    fn newton_from_exact_solution_takes_no_steps() {
        let (chi, barriers, branch) = constant_case(6, 9, 1.0);
        let v = CylinderField::from_fn(chi.grid(), |t, _| 2.0 / 3.0 * t * (t - 1.0));
        let (_, rec) = newton_solve(&v, &chi, 1.0, &barriers, &branch, &NewtonSettings::default()).unwrap();
        assert!(rec.iterations <= 1);
    }

    #[test]
    fn schedule_validation() {
        assert!(ContinuationSchedule::default().validate().is_ok());
        assert!(ContinuationSchedule::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(ContinuationSchedule::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(ContinuationSchedule::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0]).is_err());
        assert!(ContinuationSchedule::new(vec![0.0, 1.0], vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn zeta_path_reaches_closed_form() {
        let (chi, barriers, branch) = constant_case(8, 17, 1.0);
        let path = run_zeta_path(&chi, &barriers, &branch, &[0.0, 0.25, 0.5, 0.75, 1.0], &NewtonSettings::default()).unwrap();
        let exact = CylinderField::from_fn(chi.grid(), |t, _| 2.0 / 3.0 * t * (t - 1.0));
        assert!(path.v.max_abs_difference(&exact) <= 1e-9);
        assert_eq!(path.steps.len(), 5);
        assert!(path.steps.iter().all(|s| s.sandwich.passed));
    }
}
