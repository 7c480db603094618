//! Constants derived once per run from sizes, horizon and the calibrated
//! broadcast constant `kappa`. Count-valued formulas take ceilings and are
//! floored at 1.

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::estimators::{MomConfig, MomMode, UcbParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgoParams {
    pub clients: usize,
    pub arms: usize,
    pub horizon: u64,
    pub ucb: UcbParams,
    pub mom: MomConfig,
    pub mom_mode: MomMode,
    pub kappa: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub gate: bool,
    /// Identification rounds before the first pull (homogeneous).
    pub id_rounds: u64,
    /// Round-robin rounds before the learning period (heterogeneous).
    pub burn_in: u64,
    /// Allowed lag of a local count behind the aggregate count.
    pub sync_slack: u64,
    /// Hub degree below which the hub's links are paused when gating.
    pub gate_threshold: u64,
}

/// Inputs of [`AlgoParams::new`].
#[derive(Debug, Clone, Copy)]
pub struct ParamInputs {
    pub clients: usize,
    pub arms: usize,
    pub horizon: u64,
    pub epsilon: f64,
    pub rho: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub gate: bool,
    pub mom_mode: MomMode,
}

fn ceil_at_least_one(x: f64) -> u64 {
    (x.ceil() as u64).max(1)
}

impl AlgoParams {
    pub fn new(p: ParamInputs) -> Result<Self> {
        if p.clients == 0 || p.arms == 0 || p.horizon == 0 {
            return Err(config_err("clients, arms and horizon must be at least 1"));
        }
        if !(p.kappa > 0.0 && p.kappa.is_finite()) {
            return Err(config_err(format!("kappa must be positive, got {}", p.kappa)));
        }
        if !(p.zeta > 0.0 && p.zeta < 1.0) {
            return Err(config_err(format!("zeta must lie in (0, 1), got {}", p.zeta)));
        }
        if !(p.alpha > 1.0) {
            return Err(config_err(format!("alpha must exceed 1, got {}", p.alpha)));
        }
        let ucb = UcbParams::new(p.rho, p.epsilon).map_err(|e| config_err(e.to_string()))?;
        let mom = MomConfig::from_horizon(p.horizon)?;
        let log_m = (p.clients as f64).ln();
        let log_t = (p.horizon as f64).ln();
        let spread = 2.0 * p.kappa * log_m * log_m * log_t;
        // A single client has nobody to identify.
        let id_rounds = if p.clients == 1 {
            0
        } else {
            ceil_at_least_one(spread)
        };
        let burn_in = (p.arms as u64).max(ceil_at_least_one(spread * p.arms as f64));
        let gate_threshold = ceil_at_least_one((p.clients as f64).powf(1.0 / p.alpha - p.zeta));
        Ok(Self {
            clients: p.clients,
            arms: p.arms,
            horizon: p.horizon,
            ucb,
            mom,
            mom_mode: p.mom_mode,
            kappa: p.kappa,
            zeta: p.zeta,
            alpha: p.alpha,
            gate: p.gate,
            id_rounds,
            burn_in,
            sync_slack: ceil_at_least_one(spread),
            gate_threshold,
        })
    }

    fn log_m(&self) -> f64 {
        (self.clients as f64).ln()
    }

    /// `M^{2 - alpha - zeta}`: persistent hub size required by event A1.
    pub fn hub_size_threshold(&self) -> f64 {
        (self.clients as f64).powf(2.0 - self.alpha - self.zeta)
    }

    /// `kappa (log M)^2 log T`: staleness bound of event A2.
    pub fn staleness_bound(&self) -> f64 {
        self.kappa * self.log_m().powi(2) * (self.horizon as f64).ln()
    }

    /// `M^{1/alpha - zeta/2}`: center weight required by event A_{alpha,zeta}.
    pub fn center_weight_threshold(&self) -> f64 {
        (self.clients as f64).powf(1.0 / self.alpha - self.zeta / 2.0)
    }

    /// `M^{1/alpha - zeta}`: hub size that makes a round "large".
    pub fn large_hub_threshold(&self) -> f64 {
        (self.clients as f64).powf(1.0 / self.alpha - self.zeta)
    }
}
