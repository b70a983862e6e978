//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;

use crate::dataset::{QParams, RewardWeights};
use crate::dem::DemGeometry;
use crate::error::{Error, Result};
use crate::forest::{ForestParams, Stopping};
use crate::gp::{GibbsParams, GpTrainParams, MixtureSafety};
use crate::tte::RlParams;

/// Every tunable of the pipeline. Unknown keys in a config file are errors
/// so that typos do not silently fall back to defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// Trajectories in the training corpus; each holds three states.
    pub train_trajectories: usize,
    pub test_trajectories: usize,

    pub q: QParams,
    /// Trees per configuration while iterating Q targets.
    pub q_fit_trees: usize,
    pub forest: ForestParams,

    pub gp: GpTrainParams,
    pub gibbs: GibbsParams,
    pub mixture_safety: MixtureSafety,

    pub epsilon: f64,
    /// Occlusion sweep stride in bins.
    pub occlusion_step: usize,
    /// Fraction of the grid occluded from the front for TTE curves.
    pub tte_occlusion: f64,
    /// Held-out states used for TTE curves (0 means all).
    pub tte_states: usize,
    /// Bootstrap resamples of the evaluation states behind quartile bands.
    pub ensemble: usize,

    pub rl: RlParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            rows: 20,
            cols: 5,
            train_trajectories: 170,
            test_trajectories: 40,
            q: QParams::default(),
            q_fit_trees: 8,
            forest: ForestParams::default(),
            gp: GpTrainParams {
                restarts: 2,
                max_iters: 100,
                tol: 1e-6,
                max_points: 150,
            },
            gibbs: GibbsParams {
                n_samples: 20,
                burn_in: 10,
            },
            mixture_safety: MixtureSafety::Collapsed,
            epsilon: crate::policy::DEFAULT_EPSILON,
            occlusion_step: 10,
            tte_occlusion: 0.5,
            tte_states: 0,
            ensemble: 10,
            rl: RlParams {
                rollouts_per_episode: 300,
                forest: ForestParams {
                    n_trees: 10,
                    stopping: Stopping {
                        min_samples: 5,
                        max_depth: 12,
                    },
                    ..ForestParams::default()
                },
                ..RlParams::default()
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parameter(format!("bad value {v:?} for {key}")))
}

impl Config {
    pub fn geometry(&self) -> DemGeometry {
        DemGeometry::new(self.rows, self.cols)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key = value"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "rows" => self.rows = parse(key, v)?,
            "cols" => self.cols = parse(key, v)?,
            "train_trajectories" => self.train_trajectories = parse(key, v)?,
            "test_trajectories" => self.test_trajectories = parse(key, v)?,
            "alpha" => self.q.alpha = parse(key, v)?,
            "gamma" => self.q.gamma = parse(key, v)?,
            "q_iters" => self.q.iters = parse(key, v)?,
            "q_tol" => self.q.tol = parse(key, v)?,
            "w_user" => self.q.weights.user = parse(key, v)?,
            "w_pitch" => self.q.weights.pitch = parse(key, v)?,
            "w_rough" => self.q.weights.roughness = parse(key, v)?,
            "q_fit_trees" => self.q_fit_trees = parse(key, v)?,
            "forest_trees" => self.forest.n_trees = parse(key, v)?,
            "forest_min_samples" => self.forest.stopping.min_samples = parse(key, v)?,
            "forest_max_depth" => self.forest.stopping.max_depth = parse(key, v)?,
            "forest_bins" => self.forest.bins = parse(key, v)?,
            "forest_pad" => self.forest.pad = parse(key, v)?,
            "gp_restarts" => self.gp.restarts = parse(key, v)?,
            "gp_iters" => self.gp.max_iters = parse(key, v)?,
            "gp_tol" => self.gp.tol = parse(key, v)?,
            "gp_max_points" => self.gp.max_points = parse(key, v)?,
            "gibbs_samples" => self.gibbs.n_samples = parse(key, v)?,
            "gibbs_burn_in" => self.gibbs.burn_in = parse(key, v)?,
            "mixture_safety" => self.mixture_safety = v.parse()?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "occlusion_step" => self.occlusion_step = parse(key, v)?,
            "tte_occlusion" => self.tte_occlusion = parse(key, v)?,
            "tte_states" => self.tte_states = parse(key, v)?,
            "ensemble" => self.ensemble = parse(key, v)?,
            "rl_episodes" => self.rl.episodes = parse(key, v)?,
            "rl_rollouts" => self.rl.rollouts_per_episode = parse(key, v)?,
            "rl_alpha" => self.rl.alpha = parse(key, v)?,
            "rl_gamma" => self.rl.gamma = parse(key, v)?,
            "rl_mix" => self.rl.mix = parse(key, v)?,
            "rl_trees" => self.rl.forest.n_trees = parse(key, v)?,
            "rl_min_samples" => self.rl.forest.stopping.min_samples = parse(key, v)?,
            _ => return Err(Error::Parameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        self.q.validate()?;
        RewardWeights::validate(&self.q.weights)?;
        let positive = [
            ("train_trajectories", self.train_trajectories),
            ("test_trajectories", self.test_trajectories),
            ("forest_trees", self.forest.n_trees),
            ("forest_bins", self.forest.bins),
            ("q_fit_trees", self.q_fit_trees),
            ("occlusion_step", self.occlusion_step),
            ("ensemble", self.ensemble),
            ("gibbs_samples", self.gibbs.n_samples),
            ("rl_trees", self.rl.forest.n_trees),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Parameter(format!("{k} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.tte_occlusion) {
            return Err(Error::Parameter("epsilon and tte_occlusion must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.rl.mix) || !(0.0..=1.0).contains(&self.rl.alpha) || !(0.0..=1.0).contains(&self.rl.gamma) {
            return Err(Error::Parameter("rl_mix, rl_alpha and rl_gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering, parseable by [`Config::parse`].
    pub fn to_text(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("rows", self.rows.to_string());
        m.insert("cols", self.cols.to_string());
        m.insert("train_trajectories", self.train_trajectories.to_string());
        m.insert("test_trajectories", self.test_trajectories.to_string());
        m.insert("alpha", self.q.alpha.to_string());
        m.insert("gamma", self.q.gamma.to_string());
        m.insert("q_iters", self.q.iters.to_string());
        m.insert("q_tol", self.q.tol.to_string());
        m.insert("w_user", self.q.weights.user.to_string());
        m.insert("w_pitch", self.q.weights.pitch.to_string());
        m.insert("w_rough", self.q.weights.roughness.to_string());
        m.insert("q_fit_trees", self.q_fit_trees.to_string());
        m.insert("forest_trees", self.forest.n_trees.to_string());
        m.insert("forest_min_samples", self.forest.stopping.min_samples.to_string());
        m.insert("forest_max_depth", self.forest.stopping.max_depth.to_string());
        m.insert("forest_bins", self.forest.bins.to_string());
        m.insert("forest_pad", self.forest.pad.to_string());
        m.insert("gp_restarts", self.gp.restarts.to_string());
        m.insert("gp_iters", self.gp.max_iters.to_string());
        m.insert("gp_tol", self.gp.tol.to_string());
        m.insert("gp_max_points", self.gp.max_points.to_string());
        m.insert("gibbs_samples", self.gibbs.n_samples.to_string());
        m.insert("gibbs_burn_in", self.gibbs.burn_in.to_string());
        m.insert(
            "mixture_safety",
            match self.mixture_safety {
                MixtureSafety::Collapsed => "collapsed".into(),
                MixtureSafety::Exact => "exact".into(),
            },
        );
        m.insert("epsilon", self.epsilon.to_string());
        m.insert("occlusion_step", self.occlusion_step.to_string());
        m.insert("tte_occlusion", self.tte_occlusion.to_string());
        m.insert("tte_states", self.tte_states.to_string());
        m.insert("ensemble", self.ensemble.to_string());
        m.insert("rl_episodes", self.rl.episodes.to_string());
        m.insert("rl_rollouts", self.rl.rollouts_per_episode.to_string());
        m.insert("rl_alpha", self.rl.alpha.to_string());
        m.insert("rl_gamma", self.rl.gamma.to_string());
        m.insert("rl_mix", self.rl.mix.to_string());
        m.insert("rl_trees", self.rl.forest.n_trees.to_string());
        m.insert("rl_min_samples", self.rl.forest.stopping.min_samples.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let c = Config::parse("# desk grid\nrows = 6\ncols=3  # narrow\n\ngamma = 0.25\nmixture_safety = exact\n").unwrap();
        assert_eq!((c.rows, c.cols), (6, 3));
        assert_eq!(c.q.gamma, 0.25);
        assert_eq!(c.mixture_safety, MixtureSafety::Exact);
        assert_eq!(c.forest.n_trees, 32);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::parse("rowz = 3").is_err());
        assert!(Config::parse("rows = three").is_err());
        assert!(Config::parse("gamma = 1.5").is_err());
        assert!(Config::parse("just text").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.set("epsilon", "0.65").unwrap();
        c.set("rl_trees", "4").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }
}
