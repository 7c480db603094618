//! Experiment configuration files (TOML).
//!
//! Every field has a default, so a config only names what it changes.
//! Unknown keys are rejected.
//!
//! ```toml
//! experiment = "homog-regret"
//! clients = 100
//! arms = 5
//! horizon = 20000
//! replications = 20
//! seed = 7
//!
//! [means]
//! gaps = [0.0, 0.1, 0.2, 0.3, 0.4]
//! top = 0.5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::estimators::MomMode;
use crate::graph::EdgeSampling;
use crate::params::{AlgoParams, ParamInputs};
use crate::sampling::{RewardKind, RewardModel, WeightLaw};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mom,
    HubSize,
    HubRecurrence,
    BroadcastDelay,
    HomogRegret,
    HeterogRegret,
    CalibrateKappa,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Mom,
        ExperimentKind::HubSize,
        ExperimentKind::HubRecurrence,
        ExperimentKind::BroadcastDelay,
        ExperimentKind::HomogRegret,
        ExperimentKind::HeterogRegret,
        ExperimentKind::CalibrateKappa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Mom => "mom",
            ExperimentKind::HubSize => "hub-size",
            ExperimentKind::HubRecurrence => "hub-recurrence",
            ExperimentKind::BroadcastDelay => "broadcast-delay",
            ExperimentKind::HomogRegret => "homog-regret",
            ExperimentKind::HeterogRegret => "heterog-regret",
            ExperimentKind::CalibrateKappa => "calibrate-kappa",
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            ExperimentKind::Mom => "coverage of the median-of-means confidence radius",
            ExperimentKind::HubSize => "size of the persistent hub around the first-round center",
            ExperimentKind::HubRecurrence => "longest wait between rounds with a large hub",
            ExperimentKind::BroadcastDelay => "broadcast cover times against the calibrated bound",
            ExperimentKind::HomogRegret => "cooperative UCB with identical means, plus baseline",
            ExperimentKind::HeterogRegret => "cooperative UCB with client-specific means, plus baseline",
            ExperimentKind::CalibrateKappa => "estimate the broadcast constant and store it",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            config_err(format!(
                "unknown experiment {s:?}; valid kinds: {}",
                valid.join(", ")
            ))
        })
    }
}

/// One group of clients sharing a mean vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansGroup {
    pub count: usize,
    pub means: Vec<f64>,
}

/// Exactly one of `matrix`, `gaps` or `groups`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansSpec {
    /// Full `clients x arms` matrix.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Arm means `top - gaps[i]`, identical for every client.
    pub gaps: Option<Vec<f64>>,
    #[serde(default = "default_top")]
    pub top: f64,
    /// Client groups in order; counts must add up to `clients`.
    pub groups: Option<Vec<MeansGroup>>,
}

fn default_top() -> f64 {
    0.5
}

impl Default for MeansSpec {
    fn default() -> Self {
        Self {
            matrix: None,
            gaps: None,
            top: default_top(),
            groups: None,
        }
    }
}

impl MeansSpec {
    pub fn build(&self, clients: usize, arms: usize) -> Result<Vec<Vec<f64>>> {
        let given = [self.matrix.is_some(), self.gaps.is_some(), self.groups.is_some()];
        let rows = match (&self.matrix, &self.gaps, &self.groups) {
            _ if given.iter().filter(|&&g| g).count() > 1 => {
                return Err(config_err("[means] takes only one of matrix, gaps, groups"))
            }
            (Some(mx), _, _) => mx.clone(),
            (_, Some(g), _) => vec![g.iter().map(|d| self.top - d).collect(); clients],
            (_, _, Some(groups)) => {
                let mut rows = Vec::with_capacity(clients);
                for g in groups {
                    rows.extend(std::iter::repeat_n(g.means.clone(), g.count));
                }
                rows
            }
            // Default: arm i has mean top - 0.1 i.
            _ => vec![(0..arms).map(|i| self.top - 0.1 * i as f64).collect(); clients],
        };
        if rows.len() != clients {
            return Err(config_err(format!(
                "means describe {} clients but clients = {clients}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != arms) {
            return Err(config_err(format!(
                "means rows have {} arms but arms = {arms}",
                bad.len()
            )));
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomSection {
    /// Samples per trial.
    pub samples: u64,
    pub delta: f64,
    pub trials: u64,
    pub mean: f64,
}

impl Default for MomSection {
    fn default() -> Self {
        Self {
            samples: 1024,
            delta: 0.01,
            trials: 10_000,
            mean: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BroadcastSection {
    /// Bound on cover time is `factor * kappa * (log M)^2`.
    pub factor: f64,
    /// Give up on a broadcast after this many rounds.
    pub max_rounds: u64,
    /// Share of timeouts above which calibration fails.
    pub max_timeout_share: f64,
}

impl Default for BroadcastSection {
    fn default() -> Self {
        Self {
            factor: 1.5,
            max_rounds: 10_000,
            max_timeout_share: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub clients: usize,
    pub arms: usize,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    /// Directory receiving the output files.
    pub output: PathBuf,

    pub alpha: f64,
    pub c_h: f64,
    pub edge_sampling: EdgeSampling,

    pub reward: RewardKind,
    pub epsilon: f64,
    pub rho: f64,
    pub reward_scale: Option<f64>,
    pub reward_dof: Option<f64>,
    pub means: MeansSpec,

    pub zeta: f64,
    /// Fixed broadcast constant; wins over `kappa_file` and calibration.
    pub kappa: Option<f64>,
    /// Calibration artifact, used when present and `kappa` is unset.
    pub kappa_file: Option<PathBuf>,
    /// Replications used when the constant is estimated on the fly.
    pub kappa_replications: u64,
    pub gate: bool,
    pub mom_mode: MomMode,
    /// Run the no-communication baseline on the same replications.
    pub baseline: bool,

    pub write_edges: bool,
    pub write_messages: bool,

    pub mom: MomSection,
    pub broadcast: BroadcastSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::HomogRegret,
            clients: 20,
            arms: 3,
            horizon: 2000,
            replications: 3,
            seed: 0,
            output: PathBuf::from("banditmesh-out"),
            alpha: 1.5,
            c_h: 1.0,
            edge_sampling: EdgeSampling::Auto,
            reward: RewardKind::ParetoShifted,
            epsilon: 1.0,
            rho: 1.0,
            reward_scale: None,
            reward_dof: None,
            means: MeansSpec::default(),
            zeta: 0.1,
            kappa: None,
            kappa_file: None,
            kappa_replications: 200,
            gate: false,
            mom_mode: MomMode::Contiguous,
            baseline: true,
            write_edges: false,
            write_messages: false,
            mom: MomSection::default(),
            broadcast: BroadcastSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        // Name the valid kinds instead of serde's generic variant error.
        if let Ok(raw) = s.parse::<toml::Table>() {
            if let Some(toml::Value::String(kind)) = raw.get("experiment") {
                kind.parse::<ExperimentKind>()?;
            }
        }
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.arms == 0 || self.horizon == 0 {
            return Err(config_err("clients, arms and horizon must all be at least 1"));
        }
        if self.replications == 0 {
            return Err(config_err("replications must be at least 1"));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(config_err(format!("zeta must lie in (0, 1), got {}", self.zeta)));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(config_err(format!(
                "alpha must lie in (1, 2), got {}",
                self.alpha
            )));
        }
        if !(self.c_h > 0.0 && self.c_h.is_finite()) {
            return Err(config_err(format!("c_h must be positive, got {}", self.c_h)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(config_err(format!("kappa must be positive, got {k}")));
            }
        }
        if self.kappa_replications == 0 {
            return Err(config_err("kappa_replications must be at least 1"));
        }
        let b = &self.broadcast;
        if !(b.factor > 0.0) || b.max_rounds == 0 || !(0.0..=1.0).contains(&b.max_timeout_share) {
            return Err(config_err(
                "[broadcast] needs factor > 0, max_rounds >= 1 and max_timeout_share in [0, 1]",
            ));
        }
        if self.mom.samples == 0 || self.mom.trials == 0 || !(self.mom.delta > 0.0 && self.mom.delta < 1.0) {
            return Err(config_err(
                "[mom] needs samples >= 1, trials >= 1 and delta in (0, 1)",
            ));
        }
        match self.experiment {
            ExperimentKind::HubSize if self.zeta >= 2.0 - self.alpha => Err(config_err(format!(
                "hub-size needs zeta < 2 - alpha = {}",
                2.0 - self.alpha
            ))),
            ExperimentKind::CalibrateKappa if self.clients < 10 => {
                Err(config_err("calibrate-kappa needs at least 10 clients"))
            }
            ExperimentKind::HomogRegret | ExperimentKind::HeterogRegret => self.reward_model().map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn law(&self) -> Result<WeightLaw> {
        WeightLaw::new(self.alpha, self.c_h)
    }

    pub fn reward_model(&self) -> Result<RewardModel> {
        RewardModel::new(
            self.reward,
            self.means.build(self.clients, self.arms)?,
            self.epsilon,
            self.rho,
            self.reward_scale,
            self.reward_dof,
        )
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            model: self.reward_model()?,
            law: self.law()?,
            sampling: self.edge_sampling,
            seed: self.seed,
        })
    }

    pub fn algo_params(&self, kappa: f64) -> Result<AlgoParams> {
        AlgoParams::new(ParamInputs {
            clients: self.clients,
            arms: self.arms,
            horizon: self.horizon,
            epsilon: self.epsilon,
            rho: self.rho,
            kappa,
            zeta: self.zeta,
            alpha: self.alpha,
            gate: self.gate,
            mom_mode: self.mom_mode,
        })
    }
}
