//! Everything random about a replication, addressed by `(seed, replication)`.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{EdgeSampling, GraphProcess};
use crate::harness::regret::{compute_global_means, GlobalMeans};
use crate::rng::{Purpose, RngStream};
use crate::sampling::{RewardModel, RewardStreams, WeightLaw};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: RewardModel,
    pub law: WeightLaw,
    pub sampling: EdgeSampling,
    pub seed: u64,
}

impl Scenario {
    pub fn clients(&self) -> usize {
        self.model.clients()
    }

    pub fn arms(&self) -> usize {
        self.model.arms()
    }

    pub fn global_means(&self) -> Result<GlobalMeans> {
        compute_global_means(self.model.means())
    }

    /// Weights of this replication and the graph process they define.
    pub fn graph(&self, replication: u64) -> Result<GraphProcess> {
        let stream = RngStream::new(self.seed, replication, Purpose::Weights);
        Ok(GraphProcess::from_law(&self.law, self.clients(), stream)?.with_sampling(self.sampling))
    }

    pub fn graph_rng(&self, replication: u64) -> ChaCha8Rng {
        RngStream::new(self.seed, replication, Purpose::Graph).rng()
    }

    pub fn rewards(&self, replication: u64) -> RewardStreams {
        RewardStreams::new(self.seed, replication, self.clients(), self.arms())
    }
}
