//! Weight and reward samplers.
//!
//! Attraction weights follow a shifted Pareto law `P(h > x) = (c_h / x)^alpha`
//! for `x >= c_h`. Rewards come from one of four families, each parametrized so
//! that its centered `(1 + epsilon)`-th absolute moment is known in closed form
//! and can be checked against the configured bound `rho` at load time.

use std::f64::consts::PI;

use libm::tgamma;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, usage_err, Result};
use crate::rng::{Purpose, RngStream};

/// Shifted Pareto law for the attraction weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLaw {
    alpha: f64,
    c_h: f64,
}

impl WeightLaw {
    pub fn new(alpha: f64, c_h: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(config_err(format!("tail index alpha must be > 1, got {alpha}")));
        }
        if !(c_h.is_finite() && c_h > 0.0) {
            return Err(config_err(format!(
                "weight lower bound c_h must be > 0, got {c_h}"
            )));
        }
        Ok(Self { alpha, c_h })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// Mean weight `E[h] = c_h * alpha / (alpha - 1)`.
    pub fn theta(&self) -> f64 {
        self.c_h * self.alpha / (self.alpha - 1.0)
    }

    /// Inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        (self.c_h * u.powf(-1.0 / self.alpha)).max(self.c_h)
    }
}

pub fn sample_weights(law: &WeightLaw, m: usize, stream: RngStream) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(config_err("client count must be >= 1"));
    }
    let mut rng = stream.rng();
    Ok((0..m).map(|_| law.draw(&mut rng)).collect())
}

/// Hill estimator of the tail index from the `k` largest observations.
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= samples.len() {
        return Err(usage_err(format!(
            "hill estimator needs 0 < k < n (k = {k}, n = {})",
            samples.len()
        )));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    if threshold <= 0.0 {
        return Err(usage_err("hill estimator needs positive order statistics"));
    }
    let s: f64 = sorted[..k].iter().map(|x| (x / threshold).ln()).sum();
    Ok(k as f64 / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// `mu + scale * sign * W` with `W` Lomax of shape `1 + 2 epsilon`.
    ParetoShifted,
    /// `mu + scale * T_dof`.
    StudentTLike,
    Gaussian,
    Bernoulli,
}

impl RewardKind {
    pub fn name(&self) -> &'static str {
        match self {
            RewardKind::ParetoShifted => "pareto-shifted",
            RewardKind::StudentTLike => "student-t-like",
            RewardKind::Gaussian => "gaussian",
            RewardKind::Bernoulli => "bernoulli",
        }
    }
}

/// Reward distributions for every `(client, arm)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardModel {
    kind: RewardKind,
    means: Vec<Vec<f64>>,
    epsilon: f64,
    rho: f64,
    /// Noise scale; unused for Bernoulli.
    scale: f64,
    /// Degrees of freedom for the Student-t family.
    dof: f64,
}

fn moment_order(epsilon: f64) -> f64 {
    1.0 + epsilon
}

/// `E[W^p]` for a Lomax variable with shape `a` and unit scale.
fn lomax_abs_moment(p: f64, a: f64) -> f64 {
    tgamma(p + 1.0) * tgamma(a - p) / tgamma(a)
}

fn gaussian_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * tgamma((p + 1.0) / 2.0) / PI.sqrt()
}

fn student_abs_moment(p: f64, nu: f64) -> f64 {
    nu.powf(p / 2.0) * tgamma((p + 1.0) / 2.0) * tgamma((nu - p) / 2.0) / (PI.sqrt() * tgamma(nu / 2.0))
}

impl RewardModel {
    /// Build and validate a reward model.
    ///
    /// `scale = None` picks the scale at which the centered moment equals
    /// `rho` exactly. `dof = None` uses `1 + 2 epsilon` for the Student family.
    pub fn new(
        kind: RewardKind,
        means: Vec<Vec<f64>>,
        epsilon: f64,
        rho: f64,
        scale: Option<f64>,
        dof: Option<f64>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(config_err(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(config_err(format!("rho must be > 0, got {rho}")));
        }
        if means.is_empty() || means[0].is_empty() {
            return Err(config_err("means matrix must be non-empty"));
        }
        let k = means[0].len();
        if means.iter().any(|row| row.len() != k) {
            return Err(config_err("every client must have the same number of arms"));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(config_err("means must be finite"));
        }
        let p = moment_order(epsilon);
        let dof = dof.unwrap_or(1.0 + 2.0 * epsilon);
        if kind == RewardKind::StudentTLike && !(dof > p) {
            return Err(config_err(format!(
                "student-t dof must exceed 1 + epsilon = {p}, got {dof}"
            )));
        }
        if kind == RewardKind::Bernoulli && means.iter().flatten().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(config_err("bernoulli means must lie in [0, 1]"));
        }
        let unit_moment = match kind {
            RewardKind::ParetoShifted => lomax_abs_moment(p, 1.0 + 2.0 * epsilon),
            RewardKind::StudentTLike => student_abs_moment(p, dof),
            RewardKind::Gaussian => gaussian_abs_moment(p),
            RewardKind::Bernoulli => 1.0,
        };
        let scale = match scale {
            Some(s) if !(s.is_finite() && s > 0.0) => {
                return Err(config_err(format!("reward scale must be > 0, got {s}")))
            }
            Some(s) => s,
            None => (rho / unit_moment).powf(1.0 / p),
        };
        let model = Self {
            kind,
            means,
            epsilon,
            rho,
            scale,
            dof,
        };
        for c in 0..model.clients() {
            for a in 0..model.arms() {
                let mom = model.analytic_moment(c, a)?;
                // Relative slack for the default scale, which hits rho up to rounding.
                if mom > rho * (1.0 + 1e-9) {
                    return Err(config_err(format!(
                        "centered moment {mom} of (client {c}, arm {a}) exceeds rho = {rho}"
                    )));
                }
            }
        }
        Ok(model)
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn mean(&self, client: usize, arm: usize) -> f64 {
        self.means[client][arm]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn clients(&self) -> usize {
        self.means.len()
    }

    pub fn arms(&self) -> usize {
        self.means[0].len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.means.iter().all(|row| row == &self.means[0])
    }

    fn check_indices(&self, client: usize, arm: usize) -> Result<()> {
        if client >= self.clients() || arm >= self.arms() {
            return Err(usage_err(format!(
                "(client {client}, arm {arm}) out of range for {}x{} model",
                self.clients(),
                self.arms()
            )));
        }
        Ok(())
    }

    /// Exact `E|r - mu|^(1 + epsilon)` for `(client, arm)`.
    pub fn analytic_moment(&self, client: usize, arm: usize) -> Result<f64> {
        self.check_indices(client, arm)?;
        let p = moment_order(self.epsilon);
        Ok(match self.kind {
            RewardKind::ParetoShifted => self.scale.powf(p) * lomax_abs_moment(p, 1.0 + 2.0 * self.epsilon),
            RewardKind::StudentTLike => self.scale.powf(p) * student_abs_moment(p, self.dof),
            RewardKind::Gaussian => self.scale.powf(p) * gaussian_abs_moment(p),
            RewardKind::Bernoulli => {
                let q = self.means[client][arm];
                q * (1.0 - q).powf(p) + (1.0 - q) * q.powf(p)
            }
        })
    }

    /// Draw without index checks; callers guarantee `(client, arm)` is valid.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, client: usize, arm: usize, rng: &mut R) -> f64 {
        let mu = self.means[client][arm];
        match self.kind {
            RewardKind::ParetoShifted => {
                let shape = 1.0 + 2.0 * self.epsilon;
                let u = 1.0 - rng.random::<f64>();
                let w = u.powf(-1.0 / shape) - 1.0;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                mu + self.scale * sign * w
            }
            RewardKind::StudentTLike => {
                let t = StudentT::new(self.dof).expect("dof validated at construction");
                mu + self.scale * t.sample(rng)
            }
            RewardKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                mu + self.scale * z
            }
            RewardKind::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sample_reward<R: Rng + ?Sized>(
    model: &RewardModel,
    client: usize,
    arm: usize,
    rng: &mut R,
) -> Result<f64> {
    model.check_indices(client, arm)?;
    Ok(model.draw(client, arm, rng))
}

/// One reward stream per `(client, arm)` of a replication.
///
/// The k-th pull of arm `a` by client `m` always receives the k-th draw of
/// stream `(m, a)`, whichever algorithm is pulling. This is what makes
/// algorithm-versus-baseline comparisons paired.
pub struct RewardStreams {
    arms: usize,
    rngs: Vec<ChaCha8Rng>,
}

impl RewardStreams {
    pub fn new(seed: u64, replication: u64, clients: usize, arms: usize) -> Self {
        let rngs = (0..clients)
            .flat_map(|client| (0..arms).map(move |arm| (client, arm)))
            .map(|(client, arm)| RngStream::new(seed, replication, Purpose::Reward { client, arm }).rng())
            .collect();
        Self { arms, rngs }
    }

    pub fn next(&mut self, model: &RewardModel, client: usize, arm: usize) -> f64 {
        model.draw(client, arm, &mut self.rngs[client * self.arms + arm])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stream(purpose: Purpose) -> RngStream {
        RngStream::new(2024, 0, purpose)
    }

    #[test]
    fn weight_law_validation() {
        assert!(WeightLaw::new(1.0, 1.0).is_err());
        assert!(WeightLaw::new(0.5, 1.0).is_err());
        assert!(WeightLaw::new(1.5, 0.0).is_err());
        let law = WeightLaw::new(1.5, 1.0).unwrap();
        assert_relative_eq!(law.theta(), 3.0);
        assert!(sample_weights(&law, 0, stream(Purpose::Weights)).is_err());
    }

    #[test]
    fn large_alpha_concentrates_at_lower_bound() {
        let law = WeightLaw::new(50.0, 1.0).unwrap();
        let w = sample_weights(&law, 10_000, stream(Purpose::Weights)).unwrap();
        let inside = w.iter().filter(|&&x| (1.0..=1.1).contains(&x)).count();
        assert!(inside as f64 / w.len() as f64 >= 0.99);
        assert!(w.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn pareto_weight_mean_matches_theta() {
        // Analytic mean c_h * alpha / (alpha - 1) = 3. With alpha = 1.5 the
        // sample mean has infinite variance, so average 20 independent
        // blocks and use the median block to tame the tail.
        let law = WeightLaw::new(1.5, 1.0).unwrap();
        let mut means: Vec<f64> = (0..21)
            .map(|r| {
                let w = sample_weights(&law, 100_000, RngStream::new(99, r, Purpose::Weights)).unwrap();
                w.iter().sum::<f64>() / w.len() as f64
            })
            .collect();
        means.sort_by(f64::total_cmp);
        let med = means[10];
        // The median of block means sits slightly below theta for a heavy tail;
        // the 5% window is the documented tolerance.
        assert!((med - 3.0).abs() / 3.0 < 0.05, "median block mean {med}");
    }

    #[test]
    fn weight_support_is_exact() {
        let law = WeightLaw::new(1.3, 2.5).unwrap();
        let w = sample_weights(&law, 1_000_000, stream(Purpose::Weights)).unwrap();
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= 2.5);
    }

    #[test]
    fn hill_recovers_tail_index() {
        for (i, alpha) in [1.3, 1.7].into_iter().enumerate() {
            let law = WeightLaw::new(alpha, 1.0).unwrap();
            let w = sample_weights(&law, 1_000_000, RngStream::new(5, i as u64, Purpose::Weights)).unwrap();
            let est = hill_estimator(&w, 10_000).unwrap();
            assert!((est - alpha).abs() / alpha < 0.10, "alpha {alpha} -> {est}");
        }
    }

    #[test]
    fn hill_rejects_bad_k() {
        assert!(hill_estimator(&[1.0, 2.0], 0).is_err());
        assert!(hill_estimator(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn bernoulli_draws() {
        let model = RewardModel::new(RewardKind::Bernoulli, vec![vec![0.3]], 1.0, 1.0, None, None).unwrap();
        let mut rng = stream(Purpose::Samples).rng();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let r = sample_reward(&model, 0, 0, &mut rng).unwrap();
            assert!(r == 0.0 || r == 1.0);
            sum += r;
        }
        assert!((sum / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn bernoulli_moment_is_two_point_expectation() {
        let eps = 0.5;
        let model = RewardModel::new(RewardKind::Bernoulli, vec![vec![0.2]], eps, 1.0, None, None).unwrap();
        let p: f64 = 0.2;
        let expect = p * (1.0 - p).powf(1.5) + (1.0 - p) * p.powf(1.5);
        assert_relative_eq!(model.analytic_moment(0, 0).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_unit_variance_second_moment() {
        let model =
            RewardModel::new(RewardKind::Gaussian, vec![vec![0.0]], 1.0, 1.0, Some(1.0), None).unwrap();
        assert_relative_eq!(model.analytic_moment(0, 0).unwrap(), 1.0, max_relative = 1e-12);
    }

    fn monte_carlo_moment(model: &RewardModel, n: usize, seed: u64) -> f64 {
        let p = 1.0 + model.epsilon();
        let mu = model.mean(0, 0);
        let mut rng = RngStream::new(seed, 0, Purpose::Samples).rng();
        (0..n)
            .map(|_| (sample_reward(model, 0, 0, &mut rng).unwrap() - mu).abs().powf(p))
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn gaussian_moment_matches_monte_carlo() {
        // E|sigma Z|^p = sigma^p 2^(p/2) Gamma((p+1)/2) / sqrt(pi)
        let model =
            RewardModel::new(RewardKind::Gaussian, vec![vec![0.4]], 0.5, 2.0, Some(1.3), None).unwrap();
        let exact = model.analytic_moment(0, 0).unwrap();
        let mc = monte_carlo_moment(&model, 400_000, 11);
        assert!((mc - exact).abs() / exact < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn pareto_moment_matches_monte_carlo() {
        // epsilon = 1: shape 3, p = 2, finite variance, fast convergence.
        let model =
            RewardModel::new(RewardKind::ParetoShifted, vec![vec![0.5]], 1.0, 1.0, None, None).unwrap();
        assert_relative_eq!(model.analytic_moment(0, 0).unwrap(), 1.0, max_relative = 1e-9);
        let mc = monte_carlo_moment(&model, 10_000_000, 13);
        assert!((mc - 1.0).abs() < 0.02, "{mc}");
    }

    #[test]
    fn infinite_variance_pareto_moment_bounded() {
        // epsilon = 0.5: shape 2, infinite variance, 1.5-moment finite.
        let model =
            RewardModel::new(RewardKind::ParetoShifted, vec![vec![0.0]], 0.5, 0.8, None, None).unwrap();
        let mc = monte_carlo_moment(&model, 1_000_000, 17);
        assert!(mc <= 1.1 * 0.8, "{mc}");
        let mean = {
            let mut rng = RngStream::new(21, 0, Purpose::Samples).rng();
            (0..1_000_000)
                .map(|_| sample_reward(&model, 0, 0, &mut rng).unwrap())
                .sum::<f64>()
                / 1e6
        };
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn student_moment_matches_monte_carlo() {
        let model = RewardModel::new(
            RewardKind::StudentTLike,
            vec![vec![1.0]],
            1.0,
            1.0,
            None,
            Some(5.0),
        )
        .unwrap();
        // t_5 has variance 5/3; default scale makes the second moment rho = 1
        assert_relative_eq!(
            model.scale() * model.scale() * 5.0 / 3.0,
            1.0,
            max_relative = 1e-9
        );
        let mc = monte_carlo_moment(&model, 1_000_000, 23);
        assert!((mc - 1.0).abs() < 0.03, "{mc}");
    }

    #[test]
    fn moment_above_rho_is_rejected() {
        let err = RewardModel::new(RewardKind::Gaussian, vec![vec![0.0]], 1.0, 0.5, Some(1.0), None);
        assert!(err.is_err());
        assert!(RewardModel::new(RewardKind::Bernoulli, vec![vec![1.5]], 1.0, 1.0, None, None).is_err());
        assert!(RewardModel::new(RewardKind::Gaussian, vec![vec![0.0]], 0.0, 1.0, None, None).is_err());
    }

    #[test]
    fn out_of_range_indices() {
        let model =
            RewardModel::new(RewardKind::Gaussian, vec![vec![0.0, 1.0]], 1.0, 1.0, None, None).unwrap();
        let mut rng = stream(Purpose::Samples).rng();
        assert!(sample_reward(&model, 1, 0, &mut rng).is_err());
        assert!(sample_reward(&model, 0, 2, &mut rng).is_err());
        assert!(model.analytic_moment(0, 2).is_err());
    }

    #[test]
    fn homogeneity_flag() {
        let homo = RewardModel::new(
            RewardKind::Gaussian,
            vec![vec![0.1, 0.2]; 3],
            1.0,
            1.0,
            None,
            None,
        )
        .unwrap();
        assert!(homo.is_homogeneous());
        let het = RewardModel::new(
            RewardKind::Gaussian,
            vec![vec![0.1, 0.2], vec![0.2, 0.1]],
            1.0,
            1.0,
            None,
            None,
        )
        .unwrap();
        assert!(!het.is_homogeneous());
    }

    #[test]
    fn reward_streams_are_keyed_by_pull_index() {
        let model = RewardModel::new(
            RewardKind::Gaussian,
            vec![vec![0.0, 0.0]; 2],
            1.0,
            1.0,
            None,
            None,
        )
        .unwrap();
        let mut a = RewardStreams::new(3, 0, 2, 2);
        let mut b = RewardStreams::new(3, 0, 2, 2);
        // Interleave differently: the per-(client, arm) sequences must agree.
        let a10 = a.next(&model, 1, 0);
        let _ = a.next(&model, 0, 1);
        let a11 = a.next(&model, 1, 0);
        let _ = b.next(&model, 0, 1);
        let _ = b.next(&model, 0, 1);
        let b10 = b.next(&model, 1, 0);
        let b11 = b.next(&model, 1, 0);
        assert_eq!((a10, a11), (b10, b11));
    }
}
