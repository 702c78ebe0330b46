//! Independent checks on the numerics: eigenvalue asymptotics of arrow
//! matrices, the sigma-k/determinant identity, the one-dimensional
//! Monge-Ampere oracle, convexity, the path energy, the degenerate residual
//! trend and endpoint admissibility.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{rngs::StdRng, Rng, SeedableRng};
use serde::Serialize;

use crate::error::{Endpoint, Error, Result};
use crate::fields::{hessian_stencil, BoundaryData, BoundaryPair, ChiField, CylinderField, TimeScaling, TorusGrid};
use crate::solver::GeodesicPath;
use crate::spectral::{
    arctan_sum, arctan_sum_gradient, eigenvalues, geodesic_operator_det, geodesic_operator_sigma,
    PhaseBranch, SymmetricMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub summary: String,
    pub details: serde_json::Value,
}

/// Named check results, kept sorted by name with each name at most once.
#[derive(Debug, Clone, Default, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn add(
        &mut self,
        name: &str,
        status: CheckStatus,
        summary: impl Into<String>,
        details: impl Serialize,
    ) -> Result<()> {
        let pos = match self.checks.binary_search_by(|c| c.name.as_str().cmp(name)) {
            Ok(_) => {
                return Err(Error::InvalidInput(format!("check {name} reported twice")));
            }
            Err(pos) => pos,
        };
        let details = serde_json::to_value(details)
            .map_err(|e| Error::InvalidInput(format!("check {name}: {e}")))?;
        self.checks.insert(
            pos,
            CheckResult {
                name: name.to_string(),
                status,
                summary: summary.into(),
                details,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Worst status over all checks; `Pass` when empty.
    pub fn status(&self) -> CheckStatus {
        self.checks.iter().map(|c| c.status).max().unwrap_or(CheckStatus::Pass)
    }

    pub fn failed(&self) -> bool {
        self.status() == CheckStatus::Fail
    }
}

/// Least-squares slope of `log y` against `log x`, skipping non-positive
/// entries. `None` with fewer than two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// The arrow matrix `[[a / tau, a_vec / sqrt(tau)], [a_vec^T / sqrt(tau), diag(lambda')]]`.
pub fn arrow_matrix(lambda_prime: &[f64], a_vec: &[f64], a: f64, tau: f64) -> Result<SymmetricMatrix> {
    if lambda_prime.len() != a_vec.len() || lambda_prime.is_empty() {
        return Err(Error::InvalidInput("lambda' and a_vec must have equal positive length".into()));
    }
    let n = lambda_prime.len();
    let s = tau.sqrt();
    Ok(SymmetricMatrix::from_fn(n + 1, |i, j| match (i, j) {
        (0, 0) => a / tau,
        (0, j) => a_vec[j - 1] / s,
        (i, j) if i == j => lambda_prime[i - 1],
        _ => 0.0,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaRow {
    pub a: f64,
    pub tau: f64,
    /// `max_i |lambda_i - lambda'_i|` over the bounded eigenvalues.
    pub small_deviation: f64,
    pub large_eigenvalue: f64,
    /// `|lambda_{n+1} - a / tau| / (a / tau)`.
    pub large_relative_error: f64,
    pub large_within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    /// Per tau, the log-log slope of the small deviation against `a`
    /// (`None` when the deviations vanish).
    pub slopes: Vec<(f64, Option<f64>)>,
    pub passed: bool,
}

/// Eigenvalue asymptotics of arrow matrices as the corner entry grows. The
/// bounded eigenvalues must approach `lambda'` at rate `1 / a`, and the
/// large one must lie within relative `10 / a` of `a / tau`.
pub fn lemma_asymptotics_check(
    lambda_prime: &[f64],
    a_vec: &[f64],
    a_values: &[f64],
    tau_values: &[f64],
) -> Result<LemmaReport> {
    let mut sorted_prime = lambda_prime.to_vec();
    sorted_prime.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let mut passed = true;
    for &tau in tau_values {
        let mut devs = Vec::new();
        for &a in a_values {
            let ev = eigenvalues(&arrow_matrix(lambda_prime, a_vec, a, tau)?)?;
            let target = a / tau;
            let big = ev
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))
                .map(|(i, _)| i)
                .unwrap();
            let rest: Vec<f64> = ev
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != big)
                .map(|(_, v)| *v)
                .collect();
            let small_deviation = rest
                .iter()
                .zip(&sorted_prime)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let large_relative_error = (ev[big] - target).abs() / target.abs();
            let large_within_bound = large_relative_error <= 10.0 / a.abs();
            passed &= large_within_bound;
            devs.push(small_deviation);
            rows.push(LemmaRow {
                a,
                tau,
                small_deviation,
                large_eigenvalue: ev[big],
                large_relative_error,
                large_within_bound,
            });
        }
        let slope = if a_values.len() >= 2 {
            loglog_slope(&a_values.iter().map(|a| a.abs()).collect::<Vec<_>>(), &devs)
        } else {
            None
        };
        let all_zero = devs.iter().all(|&d| d == 0.0);
        match slope {
            Some(s) => passed &= (s + 1.0).abs() <= 0.2,
            None => passed &= all_zero || a_values.len() < 2,
        }
        slopes.push((tau, slope));
    }
    Ok(LemmaReport {
        rows,
        slopes,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub n: usize,
    pub samples: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the determinant and sigma-k forms of the geodesic operator on
/// random space-time Hessians and random `tau in [0, 1]`.
pub fn sigma_det_identity_sweep(branch: &PhaseBranch, samples: usize, seed: u64) -> Result<IdentityReport> {
    let n = branch.n;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let u_tt = rng.gen_range(-3.0..3.0);
        let grad: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hess = SymmetricMatrix::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let tau = rng.gen_range(0.0..=1.0);
        let d = geodesic_operator_det(u_tt, &grad, &hess, tau, branch)?;
        let s = geodesic_operator_sigma(u_tt, &grad, &hess, tau, branch)?;
        worst = worst.max((d - s).abs() / d.abs().max(s.abs()).max(1.0));
    }
    let tolerance = 1e-10;
    Ok(IdentityReport {
        n,
        samples,
        max_relative_error: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

/// Relative mismatch of `arctan_sum_gradient` against central differences on
/// random symmetric matrices of size `dim`.
pub fn gradient_oracle_sweep(dim: usize, samples: usize, seed: u64) -> Result<IdentityReport> {
    let mut rng = StdRng::seed_from_u64(seed);
    let eps = 1e-6;
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let a = SymmetricMatrix::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
        let g = arctan_sum_gradient(&a)?;
        let e = SymmetricMatrix::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let fd = (arctan_sum(&a.plus(&e.scaled(eps)))? - arctan_sum(&a.plus(&e.scaled(-eps)))?) / (2.0 * eps);
        let exact = g.contract(&e);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-3));
    }
    let tolerance = 1e-6;
    Ok(IdentityReport {
        n: dim,
        samples,
        max_relative_error: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MongeAmpereReport {
    pub points: usize,
    pub nodes_checked: usize,
    pub max_deviation: f64,
    pub worst_node: usize,
}

/// `max |det(chi + D^2 v) - 1|` over interior nodes at least two cells from
/// the faces, with `D^2 v` from a stencil of stride two (so the discrete
/// equation the solver satisfied is not reproduced). Only for `n = 1`, where
/// the equation forces the determinant to be one.
pub fn monge_ampere_oracle(v_hat: &CylinderField, chi: &ChiField) -> Result<MongeAmpereReport> {
    let grid = *v_hat.grid();
    if grid.n() != 1 {
        return Err(Error::InvalidInput(format!(
            "the determinant oracle needs n = 1, got n = {}",
            grid.n()
        )));
    }
    if !grid.same_nodes(chi.grid()) || grid.tau() != chi.grid().tau() {
        return Err(Error::InvalidInput("field and chi live on different grids".into()));
    }
    let nt = grid.time_points();
    if nt < 5 {
        return Err(Error::InvalidInput("need at least five time points".into()));
    }
    let scaling = TimeScaling::cylinder(grid.tau());
    let mut max_deviation = 0.0_f64;
    let mut worst_node = 0;
    let mut nodes_checked = 0;
    for k in 2..nt - 2 {
        for j in 0..grid.slice_len() {
            let node = grid.node(k, j);
            let m = chi.at(node).plus(&hessian_stencil(v_hat.values(), &grid, k, j, 2, scaling));
            let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(0, 1);
            let dev = (det - 1.0).abs();
            nodes_checked += 1;
            if !(dev <= max_deviation) {
                max_deviation = dev;
                worst_node = node;
            }
        }
    }
    Ok(MongeAmpereReport {
        points: grid.space().points(),
        nodes_checked,
        max_deviation,
        worst_node,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub spacings: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: Option<f64>,
}

/// Observed order of `errors` against grid spacings.
pub fn refinement_order(spacings: &[f64], errors: &[f64]) -> RefinementReport {
    RefinementReport {
        spacings: spacings.to_vec(),
        errors: errors.to_vec(),
        order: loglog_slope(spacings, errors),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub min_eigenvalue: f64,
    pub worst_node: usize,
    pub passed: bool,
}

/// Smallest eigenvalue of the given matrices; passes iff it is positive.
pub fn convexity_check(matrices: &[SymmetricMatrix]) -> Result<ConvexityReport> {
    let mut min_eigenvalue = f64::INFINITY;
    let mut worst_node = 0;
    for (i, m) in matrices.iter().enumerate() {
        let lo = eigenvalues(m)?[0];
        if lo < min_eigenvalue {
            min_eigenvalue = lo;
            worst_node = i;
        }
    }
    Ok(ConvexityReport {
        min_eigenvalue,
        worst_node,
        passed: min_eigenvalue > 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub duration: f64,
    pub min_weight: f64,
    /// Nodes where `Re(e^{-i theta} det(I + i D^2_x u))` is negative.
    pub negative_weight_nodes: usize,
}

/// `Re(e^{-i theta} det(I + i H))` from the eigenvalues of `H`.
pub fn volume_weight(hess_x: &SymmetricMatrix, theta: f64) -> Result<f64> {
    let det = eigenvalues(hess_x)?
        .into_iter()
        .fold(Complex64::new(1.0, 0.0), |acc, l| acc * Complex64::new(1.0, l));
    Ok((Complex64::from_polar(1.0, -theta) * det).re)
}

/// `1/2 int_0^T avg_x (du/dt)^2 Re(e^{-i theta} det(I + i D^2_x u)) dt` with
/// the grid's `t in [0, 1]` stretched to `[0, duration]`. Trapezoid rule in
/// time, plain average over the torus.
pub fn energy_functional(path: &GeodesicPath, branch: &PhaseBranch, duration: f64) -> Result<EnergyReport> {
    if !(duration > 0.0) {
        return Err(Error::InvalidInput("duration must be positive".into()));
    }
    let grid = *path.grid();
    let nt = grid.time_points();
    let ns = grid.slice_len();
    let ht = grid.time_step();
    let w = path.periodic.values();
    let space = grid.space();
    let mut min_weight = f64::INFINITY;
    let mut negative_weight_nodes = 0;
    let mut total = 0.0;
    for k in 0..nt {
        let mut slice = 0.0;
        for j in 0..ns {
            let at = |kk: usize| w[grid.node(kk, j)];
            let u_t = if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * ht)
            } else if k + 1 == nt {
                (3.0 * at(k) - 4.0 * at(k - 1) + at(k - 2)) / (2.0 * ht)
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * ht)
            } / duration;
            let hess = spatial_hessian(path, space, k, j);
            let weight = volume_weight(&hess, branch.theta)?;
            min_weight = min_weight.min(weight);
            if weight < 0.0 {
                negative_weight_nodes += 1;
            }
            slice += u_t * u_t * weight;
        }
        slice /= ns as f64;
        let edge = k == 0 || k + 1 == nt;
        total += if edge { 0.5 * slice } else { slice };
    }
    Ok(EnergyReport {
        energy: 0.5 * total * ht * duration,
        duration,
        min_weight,
        negative_weight_nodes,
    })
}

fn spatial_hessian(path: &GeodesicPath, space: &TorusGrid, k: usize, j: usize) -> SymmetricMatrix {
    let grid = path.grid();
    let w = path.periodic.values();
    let n = space.n();
    let h = space.spacing();
    let c = grid.node(k, j);
    let base = c - j;
    let mut out = path.quadratic;
    for a in 0..n {
        let jp = space.shift(j, a, 1);
        let jm = space.shift(j, a, -1);
        out.add_to(a, a, (w[base + jp] - 2.0 * w[c] + w[base + jm]) / (h * h));
        for b in a + 1..n {
            let mixed = (w[base + space.shift(jp, b, 1)] - w[base + space.shift(jp, b, -1)]
                - w[base + space.shift(jm, b, 1)]
                + w[base + space.shift(jm, b, -1)])
                / (4.0 * h * h);
            out.add_to(a, b, mixed);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualTrendReport {
    pub taus: Vec<f64>,
    /// Sup over interior nodes of the `tau = 0` operator at each path.
    pub residuals: Vec<f64>,
    pub slope: Option<f64>,
    pub nonincreasing: bool,
    pub insufficient_data: bool,
}

/// Sup-norm of the degenerate (`tau = 0`) geodesic operator on a path.
pub fn degenerate_residual(path: &GeodesicPath, branch: &PhaseBranch) -> Result<Vec<f64>> {
    let grid = path.grid();
    let n = grid.n();
    let ns = grid.slice_len();
    (0..grid.interior_count())
        .map(|i| {
            let (k, j) = grid.split(ns + i);
            let h = path.hessian(k, j, 1);
            let grad: Vec<f64> = (0..n).map(|a| h.get(0, a + 1)).collect();
            geodesic_operator_sigma(h.get(0, 0), &grad, &h.lower_block(), 0.0, branch)
        })
        .collect()
}

/// Degenerate residual of each reconstructed path, in the given order.
pub fn geodesic_residual_trend(paths: &[(f64, GeodesicPath)], branch: &PhaseBranch) -> Result<ResidualTrendReport> {
    let taus: Vec<f64> = paths.iter().map(|p| p.0).collect();
    let residuals = paths
        .iter()
        .map(|(_, p)| Ok(degenerate_residual(p, branch)?.iter().fold(0.0_f64, |m, r| m.max(r.abs()))))
        .collect::<Result<Vec<f64>>>()?;
    let insufficient_data = paths.len() < 2;
    Ok(ResidualTrendReport {
        slope: if insufficient_data { None } else { loglog_slope(&taus, &residuals) },
        nonincreasing: residuals.windows(2).all(|w| w[1] <= w[0]),
        taus,
        residuals,
        insufficient_data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityStatus {
    Pass,
    /// Both endpoints lie below `-(n - 1) pi / 2`; solve the negated pair.
    NegativeBranch,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub status: AdmissibilityStatus,
    /// `[u0, u1]` extremes of the raw arctan sum of the spatial Hessian.
    pub min_phase: [f64; 2],
    pub max_phase: [f64; 2],
    /// `min phase - (n - 1) pi / 2`.
    pub raw_margin: f64,
    pub worst_endpoint: Endpoint,
    pub instruction: Option<String>,
}

/// Endpoint phase bounds against `(n - 1) pi / 2`, and the mirrored bound
/// for the negative branch.
pub fn phase_admissibility_report(
    pair: &BoundaryPair,
    branch: &PhaseBranch,
    grid: &TorusGrid,
) -> Result<AdmissibilityReport> {
    let data = BoundaryData::from_pair(pair, grid)?;
    let mut min_phase = [f64::INFINITY; 2];
    let mut max_phase = [f64::NEG_INFINITY; 2];
    for (e, which) in [Endpoint::Start, Endpoint::End].into_iter().enumerate() {
        for h in data.hessians(which) {
            let p = arctan_sum(h)?;
            min_phase[e] = min_phase[e].min(p);
            max_phase[e] = max_phase[e].max(p);
        }
    }
    let bound = branch.big_theta - FRAC_PI_2;
    let worst = if min_phase[1] < min_phase[0] { 1 } else { 0 };
    let raw_margin = min_phase[worst] - bound;
    let (status, instruction) = if raw_margin > 0.0 {
        (AdmissibilityStatus::Pass, None)
    } else if max_phase[0] < -bound && max_phase[1] < -bound {
        (
            AdmissibilityStatus::NegativeBranch,
            Some("solve with -u0 and -u1, then negate the resulting path".to_string()),
        )
    } else {
        (AdmissibilityStatus::Fail, None)
    };
    Ok(AdmissibilityReport {
        status,
        min_phase,
        max_phase,
        raw_margin,
        worst_endpoint: if worst == 0 { Endpoint::Start } else { Endpoint::End },
        instruction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CylinderGrid, PotentialSpec, TrigMode};
    use crate::spectral::select_branch;

    fn quad(diag: &[f64]) -> PotentialSpec {
        PotentialSpec::quadratic_only(SymmetricMatrix::from_diagonal(diag))
    }

    #[test]
    fn report_keeps_names_sorted_and_unique() {
        let mut r = VerificationReport::default();
        r.add("b", CheckStatus::Pass, "", ()).unwrap();
        r.add("a", CheckStatus::Warn, "", ()).unwrap();
        assert!(r.add("a", CheckStatus::Pass, "", ()).is_err());
        assert_eq!(r.checks[0].name, "a");
        assert_eq!(r.status(), CheckStatus::Warn);
        r.add("c", CheckStatus::Fail, "", ()).unwrap();
        assert!(r.failed());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn arrow_with_zero_coupling_is_exact() {
        let r = lemma_asymptotics_check(&[1.0, 2.0, 3.0], &[0.0; 3], &[1e2, 1e3, 1e4], &[1.0, 0.25]).unwrap();
        assert!(r.passed);
        assert!(r.rows.iter().all(|row| row.small_deviation == 0.0));
    }

    #[test]
    fn admissibility_statuses() {
        let branch = select_branch(2).unwrap();
        let grid = TorusGrid::new(2, 8).unwrap();
        let pass = phase_admissibility_report(&BoundaryPair::new(quad(&[2.0, 2.0]), quad(&[2.0, 2.0])).unwrap(), &branch, &grid).unwrap();
        assert_eq!(pass.status, AdmissibilityStatus::Pass);
        assert!((pass.raw_margin - (2.0 * 2f64.atan() - FRAC_PI_2)).abs() < 1e-12);
        let fail = phase_admissibility_report(&BoundaryPair::new(quad(&[1.0, 1.0]), quad(&[1.0, 1.0])).unwrap(), &branch, &grid).unwrap();
        assert_eq!(fail.status, AdmissibilityStatus::Fail);
        let neg = phase_admissibility_report(&BoundaryPair::new(quad(&[-2.0, -2.0]), quad(&[-2.0, -2.0])).unwrap(), &branch, &grid).unwrap();
        assert_eq!(neg.status, AdmissibilityStatus::NegativeBranch);
        assert!(neg.instruction.is_some());
    }

    #[test]
    fn oracle_rejects_two_dimensions() {
        let grid = CylinderGrid::new(TorusGrid::new(2, 4).unwrap(), 5, 1.0).unwrap();
        let chi = ChiField::uniform(&grid, SymmetricMatrix::identity(3)).unwrap();
        assert!(monge_ampere_oracle(&CylinderField::zeros(&grid), &chi).is_err());
    }

    #[test]
    fn oracle_exact_on_constant_hessian_solution() {
        let c = 3.0;
        let mu = 1.0 / c;
        let tau = 0.5;
        let grid = CylinderGrid::new(TorusGrid::new(1, 8).unwrap(), 9, tau).unwrap();
        let pair = BoundaryPair::new(quad(&[c]), quad(&[c])).unwrap();
        let chi = crate::fields::assemble_chi(&pair, &grid).unwrap();
        let v = CylinderField::from_fn(&grid, |t, _| 0.5 * mu * tau * t * (t - 1.0));
        assert!(monge_ampere_oracle(&v, &chi).unwrap().max_deviation <= 1e-10);
        let off = monge_ampere_oracle(&CylinderField::zeros(&grid), &chi).unwrap();
        assert!(off.max_deviation > 0.5);
    }

    #[test]
    fn energy_of_linear_shift() {
        let branch = select_branch(2).unwrap();
        let grid = CylinderGrid::new(TorusGrid::new(2, 6).unwrap(), 9, 1.0).unwrap();
        let path = GeodesicPath {
            quadratic: SymmetricMatrix::from_diagonal(&[2.0, 2.0]),
            periodic: CylinderField::from_fn(&grid, |t, _| t),
        };
        let e = energy_functional(&path, &branch, 1.0).unwrap();
        assert!((e.energy - 1.5).abs() < 1e-12);
        let e2 = energy_functional(&path, &branch, 2.0).unwrap();
        assert!((e2.energy - 0.75).abs() < 1e-12);
        let still = GeodesicPath {
            quadratic: path.quadratic,
            periodic: CylinderField::from_fn(&grid, |_, x| (std::f64::consts::TAU * x[0]).cos() * 0.1),
        };
        assert!(energy_functional(&still, &branch, 1.0).unwrap().energy.abs() < 1e-28);
    }

    #[test]
    fn volume_weight_matches_scalar_arithmetic() {
        let w = volume_weight(&SymmetricMatrix::from_diagonal(&[2.0, 2.0]), std::f64::consts::PI).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_is_insufficient() {
        let branch = select_branch(1).unwrap();
        let grid = CylinderGrid::new(TorusGrid::new(1, 8).unwrap(), 9, 1.0).unwrap();
        let pair = BoundaryPair::new(
            quad(&[3.0]),
            PotentialSpec::new(SymmetricMatrix::from_diagonal(&[3.0]), vec![TrigMode { wave: vec![1], cos_amp: 0.05, sin_amp: 0.0 }]).unwrap(),
        )
        .unwrap();
        let path = GeodesicPath::from_solution(&pair, &CylinderField::zeros(&grid)).unwrap();
        let r = geodesic_residual_trend(&[(1.0, path)], &branch).unwrap();
        assert!(r.insufficient_data);
        assert!(r.slope.is_none());
    }
}
