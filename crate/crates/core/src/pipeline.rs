//! Orchestration behind the command line: admissibility, the tau sweep,
//! verification checks, and the report and CSV files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::barrier::{admissibility_margin, AdmissibilityMargin};
use crate::config::{ProblemData, RunConfig};
use crate::error::{Error, Result};
use crate::fields::{scaled_hessian_operator, BoundaryData, BoundaryPair, CylinderGrid, TorusGrid};
use crate::solver::{run_tau_sweep, ChiSource, GeodesicPath, GeodesicResult, SolveRecord, TauSolution};
use crate::spectral::{select_branch, PhaseBranch};
use crate::verify::{
    convexity_check, degenerate_residual, energy_functional, geodesic_residual_trend,
    gradient_oracle_sweep, lemma_asymptotics_check, loglog_slope, monge_ampere_oracle,
    phase_admissibility_report, refinement_order, sigma_det_identity_sweep, AdmissibilityReport,
    AdmissibilityStatus, CheckStatus, VerificationReport,
};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ADMISSIBILITY: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

/// Tolerance on the random-direction linearization check.
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Admissibility { .. } => EXIT_ADMISSIBILITY,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Tau,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Verify,
    Sweep(SweepKind),
    Selftest,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tau_schedule: Option<Vec<f64>>,
    pub grid: Option<usize>,
    pub time_grid: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(t) = &self.tau_schedule {
            cfg.schedule.tau = t.clone();
        }
        if let Some(g) = self.grid {
            cfg.grid.points = g;
        }
        if let Some(t) = self.time_grid {
            cfg.grid.time_points = t;
        }
        if let Some(s) = self.seed {
            cfg.newton.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub passed: bool,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config: Option<RunConfig>,
    pub branch: Option<PhaseBranch>,
    /// The pair was negated, solved and the result negated back.
    pub negative_branch: bool,
    pub admissibility: Option<AdmissibilityReport>,
    pub margin: Option<AdmissibilityMargin>,
    pub records: Vec<SolveRecord>,
    pub cauchy_gaps: Vec<f64>,
    pub verification: VerificationReport,
    pub trends: Option<serde_json::Value>,
    /// Files written next to the report, by name.
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    fn new(command: Command, config: Option<RunConfig>) -> Self {
        Self {
            command,
            passed: false,
            exit_code: EXIT_SUCCESS,
            error: None,
            config,
            branch: None,
            negative_branch: false,
            admissibility: None,
            margin: None,
            records: Vec::new(),
            cauchy_gaps: Vec::new(),
            verification: VerificationReport::default(),
            trends: None,
            files: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    fn fail(&mut self, err: &Error) {
        self.exit_code = exit_code(err);
        self.error = Some(err.to_string());
    }
}

/// Result of the admissibility gate and the tau sweep, oriented as solved.
pub struct SolveOutcome {
    pub branch: PhaseBranch,
    pub negated: bool,
    /// Pair actually solved (after any negation).
    pub pair: Option<BoundaryPair>,
    pub admissibility: Option<AdmissibilityReport>,
    pub result: GeodesicResult,
}

fn base_grid(cfg: &RunConfig) -> Result<CylinderGrid> {
    CylinderGrid::new(TorusGrid::new(cfg.n, cfg.grid.points)?, cfg.grid.time_points, 1.0)
}

/// Admissibility gate followed by the tau sweep. Pairs on the negative
/// branch are negated before solving.
pub fn solve_stage(cfg: &RunConfig) -> Result<SolveOutcome> {
    let branch = cfg.branch()?;
    let grid = base_grid(cfg)?;
    let schedule = cfg.schedule()?;
    let (source, pair, negated, admissibility) = match cfg.problem()? {
        ProblemData::Synthetic(m) => (ChiSource::Uniform(m), None, false, None),
        ProblemData::Pair(pair) => {
            let report = phase_admissibility_report(&pair, &branch, grid.space())?;
            let (pair, negated) = match report.status {
                AdmissibilityStatus::Pass => (pair, false),
                AdmissibilityStatus::NegativeBranch => (pair.negated(), true),
                AdmissibilityStatus::Fail => {
                    return Err(match admissibility_margin(&pair, &branch, grid.space()) {
                        Err(e) => e,
                        Ok(_) => Error::Admissibility {
                            endpoint: report.worst_endpoint,
                            node: 0,
                            phase: report.min_phase[0].min(report.min_phase[1]),
                            bound: branch.big_theta - std::f64::consts::FRAC_PI_2,
                        },
                    })
                }
            };
            let data = BoundaryData::from_pair(&pair, grid.space())?;
            (ChiSource::Boundary(data), Some(pair), negated, Some(report))
        }
    };
    let result = run_tau_sweep(&source, &grid, &branch, &schedule, &cfg.newton)?;
    Ok(SolveOutcome {
        branch,
        negated,
        pair,
        admissibility,
        result,
    })
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn paths(outcome: &SolveOutcome) -> Result<Vec<(f64, GeodesicPath)>> {
    match &outcome.pair {
        Some(pair) => outcome
            .result
            .solutions
            .iter()
            .map(|s| Ok((s.tau, GeodesicPath::from_solution(pair, &s.v_hat)?)))
            .collect(),
        None => Ok(Vec::new()),
    }
}

/// Checks on a finished sweep, added to `report`.
pub fn solution_checks(cfg: &RunConfig, outcome: &SolveOutcome, report: &mut VerificationReport) -> Result<()> {
    let checks = &cfg.checks;
    let res = &outcome.result;
    let records: Vec<&SolveRecord> = res.records.iter().filter(|r| r.converged).collect();

    if checks.admissibility {
        if let Some(a) = &outcome.admissibility {
            let summary = match a.status {
                AdmissibilityStatus::Pass => format!("raw margin {:.6}", a.raw_margin),
                AdmissibilityStatus::NegativeBranch => "negative branch, solved the negated pair".into(),
                AdmissibilityStatus::Fail => format!("raw margin {:.6}", a.raw_margin),
            };
            report.add("admissibility", status(a.status != AdmissibilityStatus::Fail), summary, a)?;
        }
    }
    if checks.jacobian {
        let worst = records.iter().map(|r| r.jacobian_check).fold(0.0, f64::max);
        report.add(
            "jacobian_consistency",
            status(!records.is_empty() && worst <= JACOBIAN_TOLERANCE),
            format!("max relative mismatch {worst:.3e}"),
            records.iter().map(|r| (r.tau, r.jacobian_check)).collect::<Vec<_>>(),
        )?;
    }
    if checks.monitors {
        let ok = records.iter().all(|r| r.monitors_pass());
        let transient: usize = records
            .iter()
            .flat_map(|r| r.steps.iter())
            .map(|s| s.newton.transient_sandwich_violations)
            .sum();
        let normal: usize = records
            .iter()
            .filter_map(|r| r.normal_derivative.as_ref())
            .map(|n| n.warnings)
            .sum();
        let st = if !ok {
            CheckStatus::Fail
        } else if transient + normal > 0 {
            CheckStatus::Warn
        } else {
            CheckStatus::Pass
        };
        report.add(
            "solver_monitors",
            st,
            format!("sandwich, ellipticity and branch checks; {transient} transient sandwich warnings, {normal} face slope warnings"),
            serde_json::json!({ "transient_sandwich": transient, "normal_derivative_warnings": normal }),
        )?;
    }
    if checks.convexity {
        let mut rows = Vec::new();
        let mut ok = !res.solutions.is_empty();
        for s in &res.solutions {
            let c = convexity_check(&scaled_hessian_operator(&s.v_hat, &s.chi)?)?;
            ok &= c.passed;
            rows.push((s.tau, c));
        }
        let min = rows.iter().map(|r| r.1.min_eigenvalue).fold(f64::INFINITY, f64::min);
        report.add("convexity", status(ok), format!("min eigenvalue {min:.6e}"), rows)?;
    }
    if checks.c1_bound && !records.is_empty() {
        let first = records[0].c1_norm;
        let max = res.max_c1_norm();
        report.add(
            "c1_bound",
            status(max <= 2.0 * first),
            format!("max {max:.6e} against twice the first entry {first:.6e}"),
            records.iter().map(|r| (r.tau, r.c1_norm)).collect::<Vec<_>>(),
        )?;
    }
    if checks.cauchy_trend {
        let gaps = &res.cauchy_gaps;
        let (st, summary) = if gaps.len() < 2 {
            (CheckStatus::Warn, "fewer than two gaps".to_string())
        } else {
            let ok = gaps.windows(2).all(|w| w[1] <= w[0]);
            (status(ok), format!("gaps {gaps:?}"))
        };
        report.add("cauchy_trend", st, summary, gaps)?;
    }
    let paths = paths(outcome)?;
    if checks.residual_trend && !paths.is_empty() {
        let t = geodesic_residual_trend(&paths, &outcome.branch)?;
        let st = if t.insufficient_data {
            CheckStatus::Warn
        } else {
            status(t.nonincreasing)
        };
        report.add("residual_trend", st, format!("residuals {:?}", t.residuals), &t)?;
    }
    if checks.energy {
        if let Some((_, path)) = paths.last() {
            let e = energy_functional(path, &outcome.branch, 1.0)?;
            let st = if e.negative_weight_nodes > 0 {
                CheckStatus::Warn
            } else {
                CheckStatus::Pass
            };
            report.add("energy", st, format!("energy {:.6e}", e.energy), &e)?;
        }
    }
    if checks.monge_ampere && cfg.n == 1 {
        // Stencil truncation in the time-time entry is amplified by 1 / tau,
        // so only the largest tau is gated; the rest are reported.
        let rows = res
            .solutions
            .iter()
            .map(|s| Ok((s.tau, monge_ampere_oracle(&s.v_hat, &s.chi)?)))
            .collect::<Result<Vec<_>>>()?;
        let gate = rows.first().map(|r| r.1.max_deviation);
        let ok = gate.is_some_and(|d| d <= checks.monge_ampere_tolerance);
        report.add(
            "monge_ampere",
            status(ok),
            format!(
                "max |det M - 1| = {:.3e} at tau = {}",
                gate.unwrap_or(f64::NAN),
                rows.first().map_or(f64::NAN, |r| r.0)
            ),
            rows,
        )?;
    }
    Ok(())
}

/// Seed-driven algebraic checks that need no boundary data.
pub fn algebraic_checks(seed: u64, samples: usize, report: &mut VerificationReport) -> Result<()> {
    let mut rows = Vec::new();
    let mut ok = true;
    for n in 1..=4 {
        let r = sigma_det_identity_sweep(&select_branch(n)?, samples, seed + n as u64)?;
        ok &= r.passed;
        rows.push(r);
    }
    let worst = rows.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    report.add(
        "identity_sigma_det",
        status(ok),
        format!("max relative error {worst:.3e} over n = 1..4"),
        rows,
    )?;

    let g = gradient_oracle_sweep(4, 100, seed)?;
    report.add(
        "gradient_oracle",
        status(g.passed),
        format!("max relative error {:.3e}", g.max_relative_error),
        &g,
    )?;
    Ok(())
}

pub fn lemma_check(seed: u64, report: &mut VerificationReport) -> Result<()> {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let a_vec: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    let r = lemma_asymptotics_check(&[1.0, 2.0, 3.0], &a_vec, &[1e2, 1e3, 1e4], &[1.0, 0.25])?;
    report.add(
        "lemma_asymptotics",
        status(r.passed),
        format!("slopes {:?}", r.slopes),
        serde_json::json!({ "a_vec": a_vec, "table": r }),
    )?;
    Ok(())
}

fn fmt(x: f64) -> String {
    // Adding zero turns -0.0 into 0.0.
    let x = x + 0.0;
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_fields(
    path: &Path,
    sol: &TauSolution,
    pair: Option<&BoundaryPair>,
    branch: &PhaseBranch,
    sign: f64,
) -> Result<()> {
    let grid = *sol.v_hat.grid();
    let n = grid.n();
    let ns = grid.slice_len();
    let gp = pair.map(|p| GeodesicPath::from_solution(p, &sol.v_hat)).transpose()?;
    let u = gp.as_ref().map(|g| g.values());
    let degen = gp.as_ref().map(|g| degenerate_residual(g, branch)).transpose()?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["v_hat", "u", "phase", "min_eig", "degenerate_residual"].map(String::from));
    let rows = (0..grid.node_count()).map(|node| {
        let (k, j) = grid.split(node);
        let mut row = vec![fmt(grid.time(k))];
        row.extend(grid.space().position(j).into_iter().map(fmt));
        row.push(fmt(sign * sol.v_hat.values()[node]));
        row.push(fmt(u.as_ref().map_or(f64::NAN, |u| sign * u.values()[node])));
        if grid.is_face(node) {
            row.extend(["nan", "nan", "nan"].map(String::from));
        } else {
            let jet = &sol.jets[node - ns];
            row.push(fmt(jet.value));
            row.push(fmt(jet.min_eigenvalue));
            row.push(fmt(degen.as_ref().map_or(f64::NAN, |d| d[node - ns])));
        }
        row
    });
    write_csv(path, &header, rows)
}

fn degenerate_norms(outcome: &SolveOutcome) -> Result<Vec<f64>> {
    let paths = paths(outcome)?;
    if paths.is_empty() {
        return Ok(vec![f64::NAN; outcome.result.solutions.len()]);
    }
    paths
        .iter()
        .map(|(_, p)| Ok(degenerate_residual(p, &outcome.branch)?.iter().fold(0.0_f64, |m, r| m.max(r.abs()))))
        .collect()
}

fn write_tau_trend(path: &Path, outcome: &SolveOutcome) -> Result<serde_json::Value> {
    let res = &outcome.result;
    let degen = degenerate_norms(outcome)?;
    let header: Vec<String> = [
        "tau",
        "sup_norm",
        "gradient_norm",
        "c1_norm",
        "cauchy_gap",
        "degenerate_residual",
        "final_residual",
        "newton_iterations",
    ]
    .map(String::from)
    .to_vec();
    let solved: Vec<&SolveRecord> = res.records.iter().filter(|r| r.converged).collect();
    let rows = solved.iter().enumerate().map(|(i, r)| {
        vec![
            fmt(r.tau),
            fmt(r.sup_norm),
            fmt(r.gradient_norm),
            fmt(r.c1_norm),
            fmt(if i == 0 { f64::NAN } else { res.cauchy_gaps[i - 1] }),
            fmt(degen[i]),
            fmt(r.final_residual),
            r.newton_iterations.to_string(),
        ]
    });
    write_csv(path, &header, rows)?;
    let taus: Vec<f64> = solved.iter().map(|r| r.tau).collect();
    let sups: Vec<f64> = solved.iter().map(|r| r.sup_norm).collect();
    let gap_taus: Vec<f64> = taus.iter().skip(1).copied().collect();
    let ratios: Vec<f64> = res.cauchy_gaps.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(serde_json::json!({
        "sup_norm_slope": loglog_slope(&taus, &sups),
        "cauchy_gap_slope": loglog_slope(&gap_taus, &res.cauchy_gaps),
        "cauchy_gap_ratios": ratios,
        "degenerate_residual_slope": loglog_slope(&taus, &degen),
    }))
}

fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), text)?;
    Ok(())
}

fn finish(mut report: RunReport, dir: &Path, clock: Instant) -> RunReport {
    if report.exit_code == EXIT_SUCCESS && report.verification.failed() {
        report.exit_code = if report.records.iter().any(|r| !r.converged) {
            EXIT_SOLVER
        } else {
            EXIT_VERIFICATION
        };
    }
    if report.exit_code == EXIT_SUCCESS && report.records.iter().any(|r| !r.converged) {
        report.exit_code = EXIT_SOLVER;
    }
    report.passed = report.exit_code == EXIT_SUCCESS;
    report.wall_time_s = clock.elapsed().as_secs_f64();
    if let Err(e) = std::fs::create_dir_all(dir).map_err(Error::from).and_then(|_| write_report(dir, &report)) {
        report.passed = false;
        report.exit_code = EXIT_IO;
        report.error = Some(format!("writing report: {e}"));
    }
    report
}

fn solve_into(cfg: &RunConfig, dir: &Path, report: &mut RunReport, write_all: bool) -> Result<Option<SolveOutcome>> {
    report.branch = Some(cfg.branch()?);
    let outcome = solve_stage(cfg)?;
    report.negative_branch = outcome.negated;
    report.admissibility = outcome.admissibility.clone();
    report.margin = Some(outcome.result.margin.clone());
    report.records = outcome.result.records.clone();
    report.cauchy_gaps = outcome.result.cauchy_gaps.clone();
    solution_checks(cfg, &outcome, &mut report.verification)?;
    std::fs::create_dir_all(dir)?;
    if write_all {
        let sign = if outcome.negated { -1.0 } else { 1.0 };
        for (k, sol) in outcome.result.solutions.iter().enumerate() {
            let name = format!("fields_tau{k}.csv");
            write_fields(&dir.join(&name), sol, outcome.pair.as_ref(), &outcome.branch, sign)?;
            report.files.push(name);
        }
    }
    report.trends = Some(write_tau_trend(&dir.join("trend_tau.csv"), &outcome)?);
    report.files.push("trend_tau.csv".into());
    Ok(Some(outcome))
}

/// Admissibility, tau sweep, solution checks and all output files.
pub fn cmd_solve(cfg: &RunConfig) -> RunReport {
    let clock = Instant::now();
    let dir = cfg.output.dir.clone();
    let mut report = RunReport::new(Command::Solve, Some(cfg.clone()));
    if let Err(e) = solve_into(cfg, &dir, &mut report, true) {
        report.fail(&e);
    }
    finish(report, &dir, clock)
}

/// The algebraic checks and, if the data are admissible, the solution
/// checks. Inadmissible data fail the admissibility check.
pub fn cmd_verify(cfg: &RunConfig) -> RunReport {
    let clock = Instant::now();
    let dir = cfg.output.dir.clone();
    let mut report = RunReport::new(Command::Verify, Some(cfg.clone()));
    let run = |report: &mut RunReport| -> Result<()> {
        let seed = cfg.newton.seed;
        if cfg.checks.identities {
            algebraic_checks(seed, cfg.checks.identity_samples, &mut report.verification)?;
        }
        if cfg.checks.lemma {
            lemma_check(seed, &mut report.verification)?;
        }
        if let ProblemData::Pair(pair) = cfg.problem()? {
            let branch = cfg.branch()?;
            let a = phase_admissibility_report(&pair, &branch, &TorusGrid::new(cfg.n, cfg.grid.points)?)?;
            if a.status == AdmissibilityStatus::Fail {
                report.verification.add(
                    "admissibility",
                    CheckStatus::Fail,
                    format!("raw margin {:.6}", a.raw_margin),
                    &a,
                )?;
                report.admissibility = Some(a);
                return Ok(());
            }
        }
        solve_into(cfg, &dir, report, false)?;
        Ok(())
    };
    if let Err(e) = run(&mut report) {
        report.fail(&e);
    }
    finish(report, &dir, clock)
}

/// Algebraic checks only; needs no configuration.
pub fn selftest(seed: u64, out: &Path) -> RunReport {
    let clock = Instant::now();
    let mut report = RunReport::new(Command::Selftest, None);
    let run = |report: &mut RunReport| -> Result<()> {
        algebraic_checks(seed, 1000, &mut report.verification)?;
        lemma_check(seed, &mut report.verification)
    };
    if let Err(e) = run(&mut report) {
        report.fail(&e);
    }
    finish(report, out, clock)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridLevel {
    pub points: usize,
    pub time_points: usize,
    pub spacing: f64,
    pub converged: bool,
    pub sup_norm: f64,
    pub c1_norm: f64,
    pub monge_ampere_deviation: f64,
    pub newton_iterations: usize,
}

fn grid_sweep(cfg: &RunConfig, dir: &Path, report: &mut RunReport) -> Result<()> {
    report.branch = Some(cfg.branch()?);
    let mut levels = Vec::new();
    for &points in &cfg.schedule.grid_levels {
        let mut c = cfg.clone();
        c.grid.points = points;
        c.grid.time_points = points + 1;
        c.schedule.tau = vec![cfg.schedule.tau[0]];
        let outcome = solve_stage(&c)?;
        let rec = outcome.result.records[0].clone();
        let dev = match (cfg.n, outcome.result.solutions.first()) {
            (1, Some(s)) => monge_ampere_oracle(&s.v_hat, &s.chi)?.max_deviation,
            _ => f64::NAN,
        };
        levels.push(GridLevel {
            points,
            time_points: points + 1,
            spacing: 1.0 / points as f64,
            converged: rec.converged,
            sup_norm: rec.sup_norm,
            c1_norm: rec.c1_norm,
            monge_ampere_deviation: dev,
            newton_iterations: rec.newton_iterations,
        });
        report.records.push(rec);
    }
    std::fs::create_dir_all(dir)?;
    let header: Vec<String> = [
        "points",
        "time_points",
        "spacing",
        "sup_norm",
        "c1_norm",
        "monge_ampere_deviation",
        "newton_iterations",
    ]
    .map(String::from)
    .to_vec();
    write_csv(
        &dir.join("trend_grid.csv"),
        &header,
        levels.iter().map(|l| {
            vec![
                l.points.to_string(),
                l.time_points.to_string(),
                fmt(l.spacing),
                fmt(l.sup_norm),
                fmt(l.c1_norm),
                fmt(l.monge_ampere_deviation),
                l.newton_iterations.to_string(),
            ]
        }),
    )?;
    report.files.push("trend_grid.csv".into());
    let h: Vec<f64> = levels.iter().map(|l| l.spacing).collect();
    let devs: Vec<f64> = levels.iter().map(|l| l.monge_ampere_deviation).collect();
    let order = refinement_order(&h, &devs);
    if cfg.n == 1 && cfg.checks.monge_ampere {
        let ok = levels.len() >= 3 && order.order.is_some_and(|o| (o - 2.0).abs() <= 0.3);
        report.verification.add(
            "monge_ampere_order",
            status(ok),
            format!("observed order {:?}", order.order),
            &order,
        )?;
    }
    report.trends = Some(serde_json::json!({ "levels": levels, "monge_ampere": order }));
    Ok(())
}

/// Trend tables over the tau schedule or over `schedule.grid_levels`.
pub fn cmd_sweep(cfg: &RunConfig, kind: SweepKind) -> RunReport {
    let clock = Instant::now();
    let dir = cfg.output.dir.clone();
    let mut report = RunReport::new(Command::Sweep(kind), Some(cfg.clone()));
    let run = |report: &mut RunReport| -> Result<()> {
        match kind {
            SweepKind::Tau => {
                solve_into(cfg, &dir, report, false)?;
            }
            SweepKind::Grid => grid_sweep(cfg, &dir, report)?,
        }
        Ok(())
    };
    if let Err(e) = run(&mut report) {
        report.fail(&e);
    }
    finish(report, &dir, clock)
}
