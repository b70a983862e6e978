//! Synthetic annotated corpus standing in for recorded traversals.
//!
//! Every scene is flat ground with one full-width obstacle band ahead of the
//! robot. The band class decides which configurations an operator would
//! permit; a trajectory approaches the band one row per step. The chosen
//! configuration is held only for the segment it was chosen for; between
//! segments the flippers return to a fixed driving pose.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Trajectory, Transition};
use crate::dem::{assemble_state, Dem, DemGeometry, Proprio, StateVector};
use crate::error::{Error, Result};
use crate::flipper::{FlipperConfig, Label};
use crate::harness::AnnotatedState;
use crate::seed;

/// States per trajectory before the terminal successor.
pub const STEPS_PER_TRAJECTORY: usize = 3;

/// Pose the robot drives in whenever a state is recorded. Proprioception is
/// therefore the same in every state, and trees have nothing to split on in
/// scenes whose visible terrain is identical.
pub const DRIVING_POSE: FlipperConfig = FlipperConfig::I_SHAPE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObstacleClass {
    Flat,
    LowStep,
    HighStep,
    Trench,
    Rubble,
}

impl ObstacleClass {
    pub const ALL: [ObstacleClass; 5] = [
        ObstacleClass::Flat,
        ObstacleClass::LowStep,
        ObstacleClass::HighStep,
        ObstacleClass::Trench,
        ObstacleClass::Rubble,
    ];

    /// Sampling weight of the class in the corpus.
    pub fn frequency(self) -> f64 {
        match self {
            ObstacleClass::Flat => 0.40,
            _ => 0.15,
        }
    }

    /// Configurations an operator accepts in front of this obstacle.
    pub fn permitted(self) -> &'static [FlipperConfig] {
        use FlipperConfig as F;
        match self {
            ObstacleClass::Flat => &[F::V_SHAPE, F::U_SOFT],
            ObstacleClass::LowStep => &[F::L_SHAPE, F::U_SOFT],
            ObstacleClass::HighStep => &[F::L_SHAPE],
            ObstacleClass::Trench => &[F::I_SHAPE, F::U_HARD],
            ObstacleClass::Rubble => &[F::U_SOFT, F::U_HARD],
        }
    }

    /// The permitted configuration that gives the smoothest ride.
    pub fn preferred(self) -> FlipperConfig {
        self.permitted()[0]
    }

    pub fn labels(self) -> [Label; FlipperConfig::COUNT] {
        FlipperConfig::ALL.map(|c| {
            if self.permitted().contains(&c) {
                Label::Permitted
            } else {
                Label::Forbidden
            }
        })
    }

    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in Self::ALL {
            acc += c.frequency();
            if u < acc {
                return c;
            }
        }
        ObstacleClass::Rubble
    }
}

/// Rows covered by the obstacle band and the far edge of its first position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandLayout {
    pub width: usize,
    pub first_edge: usize,
}

impl BandLayout {
    /// The band is a tenth of the grid deep and starts a little before the
    /// middle row so that front occlusion past 60 % always hides it.
    pub fn for_grid(g: DemGeometry) -> Self {
        BandLayout {
            width: (g.rows / 10).max(1),
            first_edge: ((g.rows as f64 * 0.45).ceil() as usize).min(g.rows - 1),
        }
    }

    /// Row index of the band's near edge at trajectory step `step`.
    pub fn edge_at(&self, g: DemGeometry, step: usize) -> usize {
        (self.first_edge + step).min(g.rows - 1)
    }
}

/// Band heights of one obstacle, row-major over `width x cols`.
fn band_heights(class: ObstacleClass, width: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = width * cols;
    let pick = |rng: &mut ChaCha8Rng, opts: &[f64]| *opts.choose(rng).expect("nonempty");
    match class {
        ObstacleClass::Flat => vec![0.0; n],
        ObstacleClass::LowStep => vec![pick(rng, &[0.05, 0.10]); n],
        ObstacleClass::HighStep => vec![pick(rng, &[0.15, 0.20, 0.25]); n],
        ObstacleClass::Trench => vec![pick(rng, &[-0.15, -0.20, -0.25]); n],
        ObstacleClass::Rubble => {
            let levels = [-0.10, -0.05, 0.0, 0.05, 0.10, 0.15];
            let mut h: Vec<f64> = (0..n).map(|_| pick(rng, &levels)).collect();
            if n >= 2 {
                if !h.iter().any(|v| *v < 0.0) {
                    let i = rng.random_range(0..n);
                    h[i] = pick(rng, &[-0.10, -0.05]);
                }
                if !h.iter().any(|v| *v > 0.0) {
                    let candidates: Vec<usize> = (0..n).filter(|&i| h[i] >= 0.0).collect();
                    let i = *candidates.choose(rng).expect("a nonnegative bin remains");
                    h[i] = pick(rng, &[0.05, 0.10, 0.15]);
                }
            }
            h
        }
    }
}

fn scene(g: DemGeometry, layout: BandLayout, band: &[f64], edge: usize) -> Result<Dem> {
    let mut heights = vec![0.0; g.bins()];
    let top = edge + 1 - layout.width.min(edge + 1);
    for (k, r) in (top..=edge).enumerate() {
        for c in 0..g.cols {
            heights[g.bin(r, c)] = band[k * g.cols + c];
        }
    }
    Dem::from_heights(g, heights)
}

/// Proprioception of a robot holding configuration `current` on flat
/// ground: the nominal readings of that configuration, without sensor noise.
fn proprio(current: FlipperConfig) -> Proprio {
    // (front angle, rear angle, compliance, current draw)
    let (front, rear, compliance, draw) = match current {
        FlipperConfig::I_SHAPE => (0.0, 0.0, 1.0, 0.8),
        FlipperConfig::V_SHAPE => (0.6, 0.6, 1.0, 1.0),
        FlipperConfig::L_SHAPE => (0.9, -0.3, 1.0, 1.2),
        FlipperConfig::U_SOFT => (-0.5, -0.5, 0.3, 0.6),
        _ => (-0.5, -0.5, 1.0, 1.1),
    };
    Proprio {
        speed_desired: 0.3,
        speed_actual: 0.3,
        roll: 0.0,
        pitch: 0.0,
        flipper_angles: [front, front, rear, rear],
        compliance: [compliance, compliance],
        flipper_currents: [draw; 4],
        current_config: current,
    }
}

/// Pitch and roughness measured while executing `action` in front of `class`.
fn response(class: ObstacleClass, action: FlipperConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    if !class.permitted().contains(&action) {
        (sign * rng.random_range(0.6..0.8), rng.random_range(2.6..3.5))
    } else if action == class.preferred() {
        (sign * rng.random_range(0.0..0.2), rng.random_range(1.0..1.5))
    } else {
        // acceptable but bumpier than the preferred configuration
        (sign * rng.random_range(0.0..0.3), rng.random_range(4.5..5.0))
    }
}

/// Exploratory operator: every configuration is tried equally often in
/// every class, so the recorded actions say nothing about the terrain.
fn operator_choice(rng: &mut ChaCha8Rng) -> FlipperConfig {
    FlipperConfig::from_index(rng.random_range(0..FlipperConfig::COUNT))
}

/// One simulated traversal together with the annotations of its states.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub class: ObstacleClass,
    pub trajectory: Trajectory,
    pub states: Vec<AnnotatedState>,
}

pub fn generate_episode(g: DemGeometry, seed: u64) -> Result<Episode> {
    g.validate()?;
    if g.rows < 2 {
        return Err(Error::Parameter("the corpus needs at least two rows".into()));
    }
    let mut rng = seed::rng(seed, &[]);
    let layout = BandLayout::for_grid(g);
    let class = ObstacleClass::sample(&mut rng);
    let band = band_heights(class, layout.width, g.cols, &mut rng);
    let labels = class.labels();

    let driving = proprio(DRIVING_POSE);
    let mut state = assemble_state(&driving, &scene(g, layout, &band, layout.edge_at(g, 0))?);
    let mut transitions = Vec::with_capacity(STEPS_PER_TRAJECTORY);
    let mut states = Vec::with_capacity(STEPS_PER_TRAJECTORY);
    for step in 0..STEPS_PER_TRAJECTORY {
        states.push(AnnotatedState::new(state.clone(), g, labels)?);
        let action = operator_choice(&mut rng);
        let (pitch, roughness) = response(class, action, &mut rng);
        let next_dem = scene(g, layout, &band, layout.edge_at(g, step + 1))?;
        let next: StateVector = assemble_state(&driving, &next_dem);
        transitions.push(Transition {
            state: state.clone(),
            action,
            next_state: next.clone(),
            label: labels[action.index()],
            pitch,
            roughness,
            terminal: false,
        });
        state = next;
    }
    Ok(Episode {
        class,
        trajectory: Trajectory::new(transitions)?,
        states,
    })
}

/// A reproducible corpus of `n` episodes. `split` separates training and
/// test corpora drawn from the same base seed.
pub fn generate_corpus(g: DemGeometry, n: usize, seed: u64, split: u64) -> Result<Vec<Episode>> {
    (0..n as u64)
        .map(|i| generate_episode(g, seed::derive(seed, &[split, i])))
        .collect()
}
