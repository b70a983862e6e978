//! End-to-end steps shared by the CLI and the acceptance tests.

use crate::dataset::Trajectory;
use crate::dem::{Dem, DemGeometry};
use crate::error::Result;
use crate::forest::Forest;
use crate::gp::{GpModel, KernelKind};
use crate::harness::models::{q_learning_targets, train_forest_model, train_gp_models, ModelSet};
use crate::harness::world::generate_corpus;
use crate::harness::{experiments, AnnotatedState, Config};
use crate::tte::{train_rl_strategy, RlReport};

/// Training and test material for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub geometry: DemGeometry,
    pub train: Vec<Trajectory>,
    pub train_states: Vec<AnnotatedState>,
    pub test_states: Vec<AnnotatedState>,
}

impl Corpus {
    pub fn generate(cfg: &Config) -> Result<Self> {
        let g = cfg.geometry();
        let train = generate_corpus(g, cfg.train_trajectories, cfg.seed, 0)?;
        let test = generate_corpus(g, cfg.test_trajectories, cfg.seed, 1)?;
        Ok(Corpus {
            geometry: g,
            train_states: train.iter().flat_map(|e| e.states.clone()).collect(),
            train: train.into_iter().map(|e| e.trajectory).collect(),
            test_states: test.into_iter().flat_map(|e| e.states).collect(),
        })
    }

    pub fn training_dems(&self) -> Vec<Dem> {
        self.train_states.iter().map(|s| s.dem()).collect()
    }
}

/// The three trained QPDF models.
pub struct Trained {
    pub forest: Forest,
    pub gp_se: Vec<GpModel>,
    pub gp_rq: Vec<GpModel>,
    pub q_iterations: usize,
}

pub fn train_models(corpus: &Corpus, cfg: &Config) -> Result<Trained> {
    let (targets, q_iterations) = q_learning_targets(&corpus.train, cfg)?;
    Ok(Trained {
        forest: train_forest_model(&targets, cfg)?,
        gp_se: train_gp_models(&targets, KernelKind::Se, cfg)?,
        gp_rq: train_gp_models(&targets, KernelKind::Rq, cfg)?,
        q_iterations,
    })
}

pub fn model_set(corpus: &Corpus, trained: Trained, cfg: &Config) -> Result<ModelSet> {
    ModelSet::new(
        corpus.geometry,
        trained.forest,
        trained.gp_se,
        trained.gp_rq,
        &corpus.training_dems(),
        cfg,
    )
}

/// Trains the exploration forest on the training states at the TTE
/// occlusion level, gating rollouts with the QPDF forest.
pub fn train_exploration(corpus: &Corpus, forest: &Forest, cfg: &Config) -> Result<RlReport> {
    let states = experiments::rl_training_states(&corpus.train_states, cfg.tte_occlusion)?;
    let params = crate::tte::RlParams {
        epsilon: cfg.epsilon,
        ..cfg.rl
    };
    train_rl_strategy(&states, forest, &params, crate::seed::derive(cfg.seed, &[0x771e]))
}

/// Held-out states used for TTE curves.
pub fn tte_states<'a>(corpus: &'a Corpus, cfg: &Config) -> &'a [AnnotatedState] {
    let n = if cfg.tte_states == 0 {
        corpus.test_states.len()
    } else {
        cfg.tte_states.min(corpus.test_states.len())
    };
    &corpus.test_states[..n]
}
