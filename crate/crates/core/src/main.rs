use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use qpdf_traverse::dataset::{read_dataset, write_dataset};
use qpdf_traverse::forest::io::{read_ensemble, read_forest, write_ensemble, write_forest};
use qpdf_traverse::gp::io::{read_models, write_models};
use qpdf_traverse::gp::KernelKind;
use qpdf_traverse::harness::experiments::{occlusion_sweep, tte_curves, tte_start, TTE_CURVES};
use qpdf_traverse::harness::models::{
    q_learning_targets, train_forest_model, train_gp_models, Method, ModelSet, PointGp, UncertainGp,
};
use qpdf_traverse::harness::pipeline::{tte_states, train_exploration, Corpus};
use qpdf_traverse::harness::world::generate_corpus;
use qpdf_traverse::harness::{ensemble_point, read_annotated, write_annotated, write_csv, Config, CurvePoint};
use qpdf_traverse::policy::{best_expected, QpdfModel};
use qpdf_traverse::tte::{explore_until_safe, ArdStrategy, ExplorationForest, RandomStrategy, RlStrategy, Strategy};
use qpdf_traverse::{Error, Result};

const CONFIG_FILE: &str = "config.txt";
const TRAIN_DATASET: &str = "train.dataset";
const TRAIN_STATES: &str = "train.states";
const TEST_STATES: &str = "test.states";
const EXPLORATION_FILE: &str = "exploration.forest";

#[derive(Parser)]
#[command(name = "qpdf-traverse", version, about = "Flipper-configuration learning and tactile exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key=value configuration file; defaults to the one stored by gen-data
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the annotated training and test corpus
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one QPDF model on the training corpus
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Directory written by gen-data; the model is stored there too
        #[arg(long)]
        dir: PathBuf,
    },
    /// Train the reinforcement-learned probing strategy
    TrainTte {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Success rate against front occlusion for every marginalization method
    EvalOcclusion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dir: PathBuf,
        /// Output CSV (default DIR/occlusion.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success rate against the number of probed bins
    EvalTte {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explore one held-out state until a configuration passes the safety gate
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dir: PathBuf,
        /// Index into the held-out states
        #[arg(long, default_value_t = 0)]
        state: usize,
        #[arg(long, value_enum, default_value_t = StrategyKind::Rl)]
        strategy: StrategyKind,
        #[arg(long, default_value = "forest-marginal")]
        method: Method,
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Forest,
    GpSe,
    GpRq,
}

impl ModelKind {
    fn file(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest.model",
            ModelKind::GpSe => "gp-se.model",
            ModelKind::GpRq => "gp-rq.model",
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::GpSe => "gp-se",
            ModelKind::GpRq => "gp-rq",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    Random,
    Ard,
    Rl,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Parameter(format!("cannot write {}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_config(common: &Common, dir: Option<&Path>) -> Result<Config> {
    let stored = dir.map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists());
    let mut cfg = match (&common.config, stored) {
        (Some(p), _) => Config::parse(&read(p)?)?,
        (None, Some(p)) => Config::parse(&read(&p)?)?,
        (None, None) => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    let (train, geometry) = read_dataset(&read(&dir.join(TRAIN_DATASET))?)?;
    let (train_states, g1) = read_annotated(&read(&dir.join(TRAIN_STATES))?)?;
    let (test_states, g2) = read_annotated(&read(&dir.join(TEST_STATES))?)?;
    if g1 != geometry || g2 != geometry {
        return Err(Error::Validation("corpus files disagree on the grid".into()));
    }
    Ok(Corpus {
        geometry,
        train,
        train_states,
        test_states,
    })
}

fn load_models(dir: &Path, corpus: &Corpus, cfg: &Config) -> Result<ModelSet> {
    let forest = read_forest(&read(&dir.join(ModelKind::Forest.file()))?)?;
    let gp_se = read_models(&read(&dir.join(ModelKind::GpSe.file()))?)?;
    let gp_rq = read_models(&read(&dir.join(ModelKind::GpRq.file()))?)?;
    ModelSet::new(corpus.geometry, forest, gp_se, gp_rq, &corpus.training_dems(), cfg)
}

fn load_exploration(dir: &Path, corpus: &Corpus) -> Result<ExplorationForest> {
    let (params, ensemble) = read_ensemble(&read(&dir.join(EXPLORATION_FILE))?)?;
    Ok(ExplorationForest {
        params,
        ensemble,
        geometry: corpus.geometry,
    })
}

fn gen_data(common: &Common, out: &Path) -> Result<()> {
    let cfg = load_config(common, None)?;
    fs::create_dir_all(out)?;
    let g = cfg.geometry();
    let train = generate_corpus(g, cfg.train_trajectories, cfg.seed, 0)?;
    let test = generate_corpus(g, cfg.test_trajectories, cfg.seed, 1)?;
    let trajectories: Vec<_> = train.iter().map(|e| e.trajectory.clone()).collect();
    let train_states: Vec<_> = train.into_iter().flat_map(|e| e.states).collect();
    let test_states: Vec<_> = test.into_iter().flat_map(|e| e.states).collect();
    write(&out.join(CONFIG_FILE), &cfg.to_text())?;
    write(&out.join(TRAIN_DATASET), &write_dataset(&trajectories, g))?;
    write(&out.join(TRAIN_STATES), &write_annotated(&train_states, g))?;
    write(&out.join(TEST_STATES), &write_annotated(&test_states, g))?;
    println!(
        "{} trajectories, {} training states, {} held-out states",
        trajectories.len(),
        train_states.len(),
        test_states.len()
    );
    Ok(())
}

/// Fully observed training states on which the expected-q argmax is permitted.
fn training_hits(corpus: &Corpus, qpdf: &dyn QpdfModel) -> Result<Vec<bool>> {
    corpus
        .train_states
        .iter()
        .map(|s| Ok(s.is_permitted(best_expected(&qpdf.expected(s.state())?))))
        .collect()
}

fn train(common: &Common, kind: ModelKind, dir: &Path) -> Result<()> {
    let cfg = load_config(common, Some(dir))?;
    let corpus = load_corpus(dir)?;
    let (targets, iterations) = q_learning_targets(&corpus.train, &cfg)?;
    info!("{} Q targets after {iterations} iterations", targets.len());
    let (text, hits) = match kind {
        ModelKind::Forest => {
            let f = train_forest_model(&targets, &cfg)?;
            (write_forest(&f), training_hits(&corpus, &f)?)
        }
        ModelKind::GpSe => {
            let m = train_gp_models(&targets, KernelKind::Se, &cfg)?;
            (write_models(&m), training_hits(&corpus, &UncertainGp::new(m.clone())?)?)
        }
        ModelKind::GpRq => {
            let m = train_gp_models(&targets, KernelKind::Rq, &cfg)?;
            (write_models(&m), training_hits(&corpus, &PointGp { models: &m })?)
        }
    };
    write(&dir.join(kind.file()), &text)?;
    let point = ensemble_point(kind.name(), 0.0, hits.len(), cfg.ensemble, cfg.seed, |_, i| hits[i]);
    println!("{} training success rate {:.4}", kind.name(), point.success_rate);
    write(&dir.join(format!("train-{}.csv", kind.name())), &write_csv(&[point]))
}

fn train_tte(common: &Common, dir: &Path) -> Result<()> {
    let cfg = load_config(common, Some(dir))?;
    let corpus = load_corpus(dir)?;
    let forest = read_forest(&read(&dir.join(ModelKind::Forest.file()))?)?;
    let report = train_exploration(&corpus, &forest, &cfg)?;
    write(&dir.join(EXPLORATION_FILE), &write_ensemble(&report.forest.params, &report.forest.ensemble))?;
    let points: Vec<CurvePoint> = report
        .episodes
        .iter()
        .enumerate()
        .map(|(e, s)| {
            let rate = s.safe as f64 / s.rollouts as f64;
            CurvePoint {
                method: "rl-rollouts-safe".into(),
                x: e as f64,
                success_rate: rate,
                q25: rate,
                q75: rate,
            }
        })
        .collect();
    println!("{} exploration transitions over {} episodes", report.transitions, report.episodes.len());
    write(&dir.join("train-tte.csv"), &write_csv(&points))
}

fn eval_occlusion(common: &Common, dir: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(common, Some(dir))?;
    let corpus = load_corpus(dir)?;
    let models = load_models(dir, &corpus, &cfg)?;
    let points = occlusion_sweep(
        &corpus.train_states,
        &models,
        &Method::ALL,
        cfg.occlusion_step,
        cfg.ensemble,
        cfg.seed,
    )?;
    let path = out.map_or_else(|| dir.join("occlusion.csv"), Path::to_path_buf);
    write(&path, &write_csv(&points))
}

fn eval_tte(common: &Common, dir: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(common, Some(dir))?;
    let corpus = load_corpus(dir)?;
    let models = load_models(dir, &corpus, &cfg)?;
    let exploration = load_exploration(dir, &corpus)?;
    let points = tte_curves(
        tte_states(&corpus, &cfg),
        &models,
        Some(&exploration),
        &TTE_CURVES,
        cfg.tte_occlusion,
        cfg.ensemble,
        cfg.seed,
    )?;
    let path = out.map_or_else(|| dir.join("tte.csv"), Path::to_path_buf);
    write(&path, &write_csv(&points))
}

fn simulate(common: &Common, dir: &Path, index: usize, kind: StrategyKind, method: Method, verbose: bool) -> Result<()> {
    let cfg = load_config(common, Some(dir))?;
    let corpus = load_corpus(dir)?;
    let state = corpus
        .test_states
        .get(index)
        .ok_or_else(|| Error::Parameter(format!("state {index} out of range ({} held-out states)", corpus.test_states.len())))?;
    let models = load_models(dir, &corpus, &cfg)?;
    let exploration;
    let mut strategy: Box<dyn Strategy> = match kind {
        StrategyKind::Random => Box::new(RandomStrategy {
            seed: qpdf_traverse::seed::derive(cfg.seed, &[0x5e, index as u64]),
        }),
        StrategyKind::Ard => Box::new(ArdStrategy {
            qpdf: &models.gp_se,
            models: models.gp_se.models(),
        }),
        StrategyKind::Rl => {
            exploration = load_exploration(dir, &corpus)?;
            Box::new(RlStrategy { forest: &exploration })
        }
    };
    let (start, truth) = tte_start(state, cfg.tte_occlusion)?;
    let qpdf = models.qpdf(method);
    let trace = explore_until_safe(&start, &truth, strategy.as_mut(), qpdf.as_ref(), cfg.epsilon, None)?;
    if verbose {
        print!("{trace}");
    }
    let permitted: Vec<String> = qpdf_traverse::FlipperConfig::ALL
        .iter()
        .filter(|c| state.is_permitted(**c))
        .map(|c| c.to_string())
        .collect();
    match trace.outcome {
        qpdf_traverse::tte::Outcome::SafeFound { config, probes } => println!(
            "state {index}: {config} after {probes} probes (operator permits {})",
            permitted.join(" ")
        ),
        qpdf_traverse::tte::Outcome::Exhausted => {
            println!("state {index}: no configuration passed the gate, manual control requested")
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { common, out } => gen_data(common, out),
        Command::Train { common, model, dir } => train(common, *model, dir),
        Command::TrainTte { common, dir } => train_tte(common, dir),
        Command::EvalOcclusion { common, dir, out } => eval_occlusion(common, dir, out.as_deref()),
        Command::EvalTte { common, dir, out } => eval_tte(common, dir, out.as_deref()),
        Command::Simulate {
            common,
            dir,
            state,
            strategy,
            method,
            verbose,
        } => simulate(common, dir, *state, *strategy, *method, *verbose),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
