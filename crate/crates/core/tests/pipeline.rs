use lgeo::barrier::{margin_from_chi, BarrierPair};
use lgeo::config::RunConfig;
use lgeo::fields::{assemble_chi, BoundaryPair, CylinderField, CylinderGrid, PotentialSpec, TorusGrid, TrigMode};
use lgeo::pipeline::{self, Command, EXIT_ADMISSIBILITY, EXIT_CONFIG, EXIT_SUCCESS};
use lgeo::solver::jacobian_consistency;
use lgeo::spectral::{select_branch, SymmetricMatrix};
use lgeo::verify::{monge_ampere_oracle, CheckStatus};
use std::f64::consts::TAU;

fn perturbed_pair(n: usize) -> BoundaryPair {
    let q = SymmetricMatrix::from_diagonal(&vec![3.0; n]);
    let mut wave = vec![0; n];
    wave[0] = 1;
    let u1 = PotentialSpec::new(
        q,
        vec![TrigMode {
            wave,
            cos_amp: 0.05,
            sin_amp: 0.02,
        }],
    )
    .unwrap();
    BoundaryPair::new(PotentialSpec::quadratic_only(q), u1).unwrap()
}

#[test]
fn linearization_matches_finite_differences() {
    for (n, points) in [(1, 12), (2, 6)] {
        let pair = perturbed_pair(n);
        let branch = select_branch(n).unwrap();
        for tau in [1.0, 0.1] {
            let grid = CylinderGrid::new(TorusGrid::new(n, points).unwrap(), 9, tau).unwrap();
            let chi = assemble_chi(&pair, &grid).unwrap();
            let margin = margin_from_chi(&chi, &branch).unwrap();
            let barriers = BarrierPair::build(margin.delta, &chi, &branch).unwrap();
            let v = CylinderField::from_fn(&grid, |t, x| t * (1.0 - t) * (0.2 * (TAU * x[0]).cos() - 0.1));
            for seed in 0..3 {
                let rel = jacobian_consistency(&v, &chi, 0.5, &barriers, &branch, seed).unwrap();
                assert!(rel <= 1e-6, "n {n} tau {tau}: {rel:.3e}");
            }
        }
    }
}

#[test]
fn determinant_oracle_flags_non_solution() {
    let pair = perturbed_pair(1);
    let grid = CylinderGrid::new(TorusGrid::new(1, 16).unwrap(), 17, 1.0).unwrap();
    let chi = assemble_chi(&pair, &grid).unwrap();
    let r = monge_ampere_oracle(&CylinderField::zeros(&grid), &chi).unwrap();
    assert!(r.max_deviation > 0.5, "{}", r.max_deviation);
}

const N1_EXACT: &str = r#"
n = 1
[grid]
points = 16
time_points = 17
[u0]
quadratic = [[3.0]]
[u1]
quadratic = [[3.0]]
[schedule]
tau = [1.0, 0.25]
"#;

#[test]
fn determinant_oracle_exact_on_constant_hessian_solve() {
    let cfg = RunConfig::from_toml(N1_EXACT).unwrap();
    let run = pipeline::solve_stage(&cfg).unwrap();
    for sol in &run.result.solutions {
        let r = monge_ampere_oracle(&sol.v_hat, &sol.chi).unwrap();
        assert!(r.max_deviation <= 1e-10, "tau {}: {}", sol.tau, r.max_deviation);
    }
}

#[test]
fn verify_passes_on_constant_hessian_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_toml(N1_EXACT).unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let report = pipeline::cmd_verify(&cfg);
    assert_eq!(report.command, Command::Verify);
    assert_eq!(report.exit_code, EXIT_SUCCESS, "{:?}", report.error);
    let ma = report.verification.get("monge_ampere").expect("n = 1 runs the determinant check");
    assert_eq!(ma.status, CheckStatus::Pass);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("trend_tau.csv").exists());
}

#[test]
fn inadmissible_pair_reports_admissibility_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = N1_EXACT
        .replace("n = 1", "n = 2")
        .replace("points = 16", "points = 8")
        .replace("[[3.0]]", "[[1.0, 0.0], [0.0, 1.0]]");
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let report = pipeline::cmd_solve(&cfg);
    assert!(!report.passed);
    assert_eq!(report.exit_code, EXIT_ADMISSIBILITY);
}

#[test]
fn bad_inputs_are_config_errors() {
    for text in [
        N1_EXACT.replace("tau = [1.0, 0.25]", "tau = []"),
        N1_EXACT.replace("tau = [1.0, 0.25]", "tau = [0.25, 1.0]"),
        N1_EXACT.replace("points = 16", "points = 16\nbogus = 1"),
        N1_EXACT.replace("n = 1", "n = 2"),
    ] {
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert_eq!(pipeline::exit_code(&err), EXIT_CONFIG, "{err}");
    }
}
