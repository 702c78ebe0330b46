//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{BoundaryPair, PotentialSpec, TrigMode};
use crate::solver::{ContinuationSchedule, NewtonSettings};
use crate::spectral::{select_branch, PhaseBranch, SymmetricMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub time_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub theta: f64,
    pub big_theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub wave: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub quadratic: Vec<Vec<f64>>,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
}

impl PotentialConfig {
    fn to_spec(&self) -> Result<PotentialSpec> {
        let q = SymmetricMatrix::from_rows(&self.quadratic)
            .map_err(|e| Error::Config(format!("quadratic: {e}")))?;
        let modes = self
            .modes
            .iter()
            .map(|m| TrigMode {
                wave: m.wave.clone(),
                cos_amp: m.cos,
                sin_amp: m.sin,
            })
            .collect();
        PotentialSpec::new(q, modes).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticChiConfig {
    /// `(n + 1) x (n + 1)` matrix used as `chi` at every node and every tau.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub zeta: Vec<f64>,
    pub tau: Vec<f64>,
    /// Spatial point counts for grid sweeps.
    pub grid_levels: Vec<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let d = ContinuationSchedule::default();
        Self {
            zeta: d.zeta_steps,
            tau: d.tau_sequence,
            grid_levels: vec![16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    pub identities: bool,
    pub lemma: bool,
    pub admissibility: bool,
    pub jacobian: bool,
    pub monitors: bool,
    pub convexity: bool,
    pub c1_bound: bool,
    pub cauchy_trend: bool,
    pub residual_trend: bool,
    pub energy: bool,
    pub monge_ampere: bool,
    /// Bound on `max |det M - 1|` for the single-grid determinant check.
    pub monge_ampere_tolerance: f64,
    /// Samples per dimension in the identity sweeps.
    pub identity_samples: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            identities: true,
            lemma: true,
            admissibility: true,
            jacobian: true,
            monitors: true,
            convexity: true,
            c1_bound: true,
            cauchy_trend: true,
            residual_trend: true,
            energy: true,
            monge_ampere: true,
            monge_ampere_tolerance: 1e-2,
            identity_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub grid: GridConfig,
    #[serde(default)]
    pub branch: Option<BranchConfig>,
    #[serde(default)]
    pub u0: Option<PotentialConfig>,
    #[serde(default)]
    pub u1: Option<PotentialConfig>,
    #[serde(default)]
    pub synthetic_chi: Option<SyntheticChiConfig>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Boundary data of a run: a potential pair or a fixed `chi`.
#[derive(Debug, Clone)]
pub enum ProblemData {
    Pair(BoundaryPair),
    Synthetic(SymmetricMatrix),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        if self.n == 0 || self.n > crate::fields::MAX_SPATIAL_DIM {
            return Err(cfg(format!("n = {} outside 1..={}", self.n, crate::fields::MAX_SPATIAL_DIM)));
        }
        let pair = self.u0.is_some() || self.u1.is_some();
        match (pair, self.synthetic_chi.is_some()) {
            (true, true) => return Err(cfg("give either [u0]/[u1] or [synthetic_chi], not both".into())),
            (false, false) => return Err(cfg("missing [u0]/[u1] or [synthetic_chi]".into())),
            (true, false) if self.u0.is_none() || self.u1.is_none() => {
                return Err(cfg("both [u0] and [u1] are required".into()))
            }
            _ => {}
        }
        self.schedule().map_err(|e| cfg(e.to_string()))?;
        if self.schedule.grid_levels.iter().any(|&p| p < 4) {
            return Err(cfg("grid levels need at least 4 points".into()));
        }
        self.newton.validate().map_err(|e| cfg(e.to_string()))?;
        self.branch()?;
        self.problem()?;
        crate::fields::TorusGrid::new(self.n, self.grid.points).map_err(|e| cfg(e.to_string()))?;
        if self.grid.time_points < 5 {
            return Err(cfg("grid.time_points must be at least 5".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<ContinuationSchedule> {
        ContinuationSchedule::new(self.schedule.zeta.clone(), self.schedule.tau.clone())
    }

    pub fn branch(&self) -> Result<PhaseBranch> {
        match &self.branch {
            Some(b) => PhaseBranch::new(self.n, b.theta, b.big_theta),
            None => select_branch(self.n),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<ProblemData> {
        if let Some(s) = &self.synthetic_chi {
            let m = SymmetricMatrix::from_rows(&s.matrix)
                .map_err(|e| Error::Config(format!("synthetic_chi: {e}")))?;
            if m.dim() != self.n + 1 {
                return Err(Error::Config(format!(
                    "synthetic_chi must be {0}x{0}",
                    self.n + 1
                )));
            }
            return Ok(ProblemData::Synthetic(m));
        }
        let u0 = self.u0.as_ref().expect("validated").to_spec()?;
        let u1 = self.u1.as_ref().expect("validated").to_spec()?;
        if u0.n() != self.n || u1.n() != self.n {
            return Err(Error::Config(format!("potentials must be {}-dimensional", self.n)));
        }
        BoundaryPair::new(u0, u1)
            .map(ProblemData::Pair)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
n = 2
[grid]
points = 8
time_points = 9
[u0]
quadratic = [[2.0, 0.0], [0.0, 2.0]]
[u1]
quadratic = [[2.0, 0.0], [0.0, 2.0]]
modes = [{ wave = [1, 0], cos = 0.05 }]
"#;

    #[test]
    fn parses_pair_with_defaults() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(c.schedule.tau.len(), 5);
        assert!(c.newton.predictor);
        assert!(matches!(c.problem().unwrap(), ProblemData::Pair(_)));
        assert!((c.branch().unwrap().big_theta - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let err = RunConfig::from_toml(&format!("{BASE}\n[newton]\nbogus = 1\n")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn rejects_empty_schedule() {
        let err = RunConfig::from_toml(&format!("{BASE}\n[schedule]\ntau = []\n")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_both_sources() {
        let text = format!("{BASE}\n[synthetic_chi]\nmatrix = [[1.0,0,0],[0,2,0],[0,0,2]]\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn rejects_mismatched_quadratics() {
        let text = BASE.replacen("[[2.0, 0.0], [0.0, 2.0]]", "[[3.0, 0.0], [0.0, 2.0]]", 1);
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }
}
