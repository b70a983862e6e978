//! Training of the QPDF models from a trajectory corpus and the
//! marginalizing predictors the experiments compare.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{fitted_q_iteration, QSample, TabularQ, Trajectory};
use crate::dem::{assemble_state, split_state, Dem, DemGeometry, StateVector, PROPRIO_DIM};
use crate::error::{Error, Result};
use crate::flipper::FlipperConfig;
use crate::forest::{train_forest, Forest, ForestParams, TrainingSet};
use crate::gp::{
    gibbs_completions, mixture_summary, predict_uncertain_diag, predict_uncertain_mean_diag, train_gp, DemPrior,
    DemSlot, GaussPred, GibbsParams, GpModel, KernelKind, MixtureSafety,
};
use crate::harness::Config;
use crate::policy::{best_expected, lsq_interpolate, Qpdf, QpdfModel, QpdfSummary};
use crate::seed;

fn per_config_sets(samples: &[QSample]) -> Result<Vec<TrainingSet>> {
    let dim = samples
        .first()
        .ok_or_else(|| Error::Training("no training samples".into()))?
        .state
        .len();
    let mut sets: Vec<TrainingSet> = (0..FlipperConfig::COUNT).map(|_| TrainingSet::new(dim)).collect();
    for s in samples {
        sets[s.action.index()].push(s.state.values(), s.q)?;
    }
    Ok(sets)
}

/// Q targets by fitted Q iteration. The intermediate model answers exactly
/// on the (configuration, state) pairs of the corpus and falls back to a
/// small forest for configurations the operator did not take; a forest
/// alone would average neighbouring samples and let individual targets
/// drift apart without bound. Returns the targets and the iteration count.
pub fn q_learning_targets(trajectories: &[Trajectory], cfg: &Config) -> Result<(Vec<QSample>, usize)> {
    let params = ForestParams {
        n_trees: cfg.q_fit_trees,
        ..cfg.forest
    };
    let mut round = 0u64;
    fitted_q_iteration(trajectories, &cfg.q, |samples| {
        round += 1;
        let forest = train_forest(&per_config_sets(samples)?, &params, seed::derive(cfg.seed, &[0xf1, round]))?;
        let table = TabularQ::fit(samples);
        Ok(move |c: FlipperConfig, x: &StateVector| {
            table.get(c, x).or_else(|| Some(forest.summary(c, x).expected_q))
        })
    })
}

pub fn train_forest_model(targets: &[QSample], cfg: &Config) -> Result<Forest> {
    train_forest(&per_config_sets(targets)?, &cfg.forest, seed::derive(cfg.seed, &[0xf0]))
}

/// One GP per configuration on the same targets as the forest.
pub fn train_gp_models(targets: &[QSample], kind: KernelKind, cfg: &Config) -> Result<Vec<GpModel>> {
    FlipperConfig::ALL
        .iter()
        .map(|&c| {
            let (inputs, q): (Vec<Vec<f64>>, Vec<f64>) = targets
                .iter()
                .filter(|s| s.action == c)
                .map(|s| (s.state.values().to_vec(), s.q))
                .unzip();
            if inputs.is_empty() {
                return Err(Error::MissingConfiguration(c));
            }
            let kind_tag = match kind {
                KernelKind::Se => 0,
                KernelKind::Rq => 1,
            };
            train_gp(&inputs, &q, kind, &cfg.gp, seed::derive(cfg.seed, &[0x90, kind_tag, c.index() as u64]))
        })
        .collect()
}

fn dem_slot(g: DemGeometry) -> DemSlot {
    DemSlot {
        offset: PROPRIO_DIM,
        geometry: g,
    }
}

/// SE-kernel GPs with missing inputs replaced by Gaussians whose moments are
/// those of the feature over the model's training inputs.
pub struct UncertainGp {
    models: Vec<GpModel>,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl UncertainGp {
    pub fn new(models: Vec<GpModel>) -> Result<Self> {
        if models.len() != FlipperConfig::COUNT {
            return Err(Error::Parameter("expected one GP per configuration".into()));
        }
        if models.iter().any(|m| m.kind() != KernelKind::Se) {
            return Err(Error::UnsupportedKernel);
        }
        let moments = models
            .iter()
            .map(|m| {
                let n = m.inputs().len() as f64;
                let d = m.dim();
                let mean: Vec<f64> = (0..d).map(|k| m.inputs().iter().map(|x| x[k]).sum::<f64>() / n).collect();
                let var: Vec<f64> = (0..d)
                    .map(|k| m.inputs().iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / n)
                    .collect();
                (mean, var)
            })
            .collect();
        Ok(UncertainGp { models, moments })
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    fn input_moments(&self, c: usize, x: &StateVector) -> (Vec<f64>, Vec<f64>) {
        let (mu, var) = &self.moments[c];
        let mut m = Vec::with_capacity(x.len());
        let mut v = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            match x.get(k) {
                Some(val) => {
                    m.push(val);
                    v.push(0.0);
                }
                None => {
                    m.push(mu[k]);
                    v.push(var[k]);
                }
            }
        }
        (m, v)
    }
}

impl QpdfModel for UncertainGp {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        let mut out = [QpdfSummary {
            expected_q: 0.0,
            safety: 0.0,
        }; FlipperConfig::COUNT];
        for (c, o) in out.iter_mut().enumerate() {
            let (m, v) = self.input_moments(c, x);
            *o = predict_uncertain_diag(&self.models[c], &m, &v)?.summary();
        }
        Ok(out)
    }

    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        let mut out = [0.0; FlipperConfig::COUNT];
        for (c, o) in out.iter_mut().enumerate() {
            let (m, v) = self.input_moments(c, x);
            *o = predict_uncertain_mean_diag(&self.models[c], &m, &v)?;
        }
        Ok(out)
    }
}

/// GPs with missing DEM heights integrated out by Gibbs sampling. The chain
/// seed is derived from the base seed and the state's contents, so the same
/// partial state always gets the same completions.
pub struct GibbsGp {
    pub models: Vec<GpModel>,
    pub prior: DemPrior,
    pub geometry: DemGeometry,
    pub params: GibbsParams,
    pub mode: MixtureSafety,
    pub seed: u64,
}

impl GibbsGp {
    fn completions(&self, x: &StateVector) -> Result<Vec<Vec<f64>>> {
        if x.missing_count() == 0 {
            return Ok(vec![x.values().to_vec()]);
        }
        let chain_seed = seed::derive(self.seed, &x.key());
        gibbs_completions(x, dem_slot(self.geometry), &self.prior, &self.params, chain_seed)
    }
}

impl QpdfModel for GibbsGp {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        let samples = self.completions(x)?;
        Ok(FlipperConfig::ALL.map(|c| {
            let preds: Vec<GaussPred> = samples.iter().map(|s| self.models[c.index()].predict(s)).collect();
            mixture_summary(&preds, self.mode)
        }))
    }

    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        let samples = self.completions(x)?;
        let n = samples.len() as f64;
        Ok(FlipperConfig::ALL.map(|c| samples.iter().map(|s| self.models[c.index()].predict_mean(s)).sum::<f64>() / n))
    }
}

/// Point predictions on a state whose missing heights were filled by the
/// least-squares plane.
pub struct LsqFilled<M> {
    pub inner: M,
    pub geometry: DemGeometry,
}

impl<M: QpdfModel> LsqFilled<M> {
    fn fill(&self, x: &StateVector) -> Result<StateVector> {
        let (p, dem) = split_state(x, self.geometry)?;
        Ok(assemble_state(&p, &lsq_interpolate(&dem)))
    }
}

impl<M: QpdfModel> QpdfModel for LsqFilled<M> {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        self.inner.summaries(&self.fill(x)?)
    }

    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        self.inner.expected(&self.fill(x)?)
    }
}

/// Plain GP point predictions; only meaningful on fully observed inputs.
pub struct PointGp<'a> {
    pub models: &'a [GpModel],
}

impl QpdfModel for PointGp<'_> {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        if x.missing_count() != 0 {
            return Err(Error::Validation("point GP prediction needs a complete state".into()));
        }
        Ok(FlipperConfig::ALL.map(|c| self.models[c.index()].predict(x.values()).summary()))
    }

    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        if x.missing_count() != 0 {
            return Err(Error::Validation("point GP prediction needs a complete state".into()));
        }
        Ok(FlipperConfig::ALL.map(|c| self.models[c.index()].predict_mean(x.values())))
    }
}

/// The marginalization methods compared under occlusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    ForestMarginal,
    GpRqGibbs,
    GpSeUncertain,
    LsqForest,
    LsqGp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ForestMarginal,
        Method::GpRqGibbs,
        Method::GpSeUncertain,
        Method::LsqForest,
        Method::LsqGp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ForestMarginal => "forest-marginal",
            Method::GpRqGibbs => "gp-rq-gibbs",
            Method::GpSeUncertain => "gp-se-uncertain",
            Method::LsqForest => "lsq+forest",
            Method::LsqGp => "lsq+gp",
        }
    }

    pub fn is_lsq(self) -> bool {
        matches!(self, Method::LsqForest | Method::LsqGp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?}")))
    }
}

/// Everything trained that the experiments evaluate.
pub struct ModelSet {
    pub geometry: DemGeometry,
    pub forest: Forest,
    pub gp_se: UncertainGp,
    pub gp_rq: GibbsGp,
}

impl ModelSet {
    pub fn new(
        geometry: DemGeometry,
        forest: Forest,
        gp_se: Vec<GpModel>,
        gp_rq: Vec<GpModel>,
        training_dems: &[Dem],
        cfg: &Config,
    ) -> Result<Self> {
        Ok(ModelSet {
            geometry,
            forest,
            gp_se: UncertainGp::new(gp_se)?,
            gp_rq: GibbsGp {
                models: gp_rq,
                prior: DemPrior::fit(training_dems)?,
                geometry,
                params: cfg.gibbs,
                mode: cfg.mixture_safety,
                seed: seed::derive(cfg.seed, &[0x61b5]),
            },
        })
    }

    pub fn qpdf(&self, method: Method) -> Box<dyn QpdfModel + '_> {
        match method {
            Method::ForestMarginal => Box::new(&self.forest),
            Method::GpRqGibbs => Box::new(&self.gp_rq),
            Method::GpSeUncertain => Box::new(&self.gp_se),
            Method::LsqForest => Box::new(LsqFilled {
                inner: &self.forest,
                geometry: self.geometry,
            }),
            Method::LsqGp => Box::new(LsqFilled {
                inner: PointGp {
                    models: &self.gp_rq.models,
                },
                geometry: self.geometry,
            }),
        }
    }

    /// Ungated choice: the configuration with the highest expected q.
    pub fn choose(&self, method: Method, x: &StateVector) -> Result<FlipperConfig> {
        Ok(best_expected(&self.qpdf(method).expected(x)?))
    }
}

impl<M: QpdfModel + ?Sized> QpdfModel for &M {
    fn summaries(&self, x: &StateVector) -> Result<[QpdfSummary; FlipperConfig::COUNT]> {
        (**self).summaries(x)
    }

    fn expected(&self, x: &StateVector) -> Result<[f64; FlipperConfig::COUNT]> {
        (**self).expected(x)
    }
}
