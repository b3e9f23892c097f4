//! Synthetic crowd scenes with a controllable dependence between the scene
//! context and the turning behaviour of its pedestrians.
//!
//! Every scene is one 20-frame window. In context-A scenes every walker has a
//! stationary obstacle pedestrian close to where it stands at the last
//! observed frame; context-B scenes have no obstacles. Walkers move straight for
//! the observed frames and then turn 60 degrees left or right over three
//! frames. In a context-A scene a walker turns left with probability `bias`,
//! in a context-B scene with probability `1 - bias`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Point, SceneWindow, OBS_LEN, PRED_LEN, WINDOW_LEN};
use crate::error::{contract, Result};

/// Total heading change of a turn.
pub const TURN_DEGREES: f64 = 60.0;
/// Frames over which the turn is spread.
pub const TURN_FRAMES: usize = 3;
/// Lateral offset of an injected parallel companion.
pub const COMPANION_OFFSET: f64 = 0.8;
/// Distance range of an obstacle from its walker's last observed position.
pub const OBSTACLE_DISTANCE: (f64, f64) = (1.0, 2.0);
/// Frame-id spacing between consecutive scenes in the text format.
pub const SCENE_FRAME_SPAN: i64 = 1000;
/// Frame-id increment between consecutive frames.
pub const FRAME_ID_STEP: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Scene name written into every window.
    pub name: String,
    pub scenes: usize,
    /// Walkers per scene, inclusive range (companions and obstacles come on top).
    pub walkers_min: usize,
    pub walkers_max: usize,
    /// Probability that a context-A walker turns left.
    pub bias: f64,
    /// Walking speed range in metres per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Standard deviation of the positional noise in metres.
    pub noise: f64,
    /// Probability that a walker gets a side-by-side companion.
    pub parallel_rate: f64,
    /// Probability that a walker gets a partner converging on it.
    pub gather_rate: f64,
    /// Fraction of context-A scenes.
    pub context_a_fraction: f64,
    /// Side length of the square spawn area in metres.
    pub area: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            scenes: 200,
            walkers_min: 1,
            walkers_max: 3,
            bias: 0.9,
            speed_min: 0.3,
            speed_max: 0.6,
            noise: 0.05,
            parallel_rate: 0.0,
            gather_rate: 0.0,
            context_a_fraction: 0.5,
            area: 12.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.bias) || !unit(self.parallel_rate) || !unit(self.gather_rate) || !unit(self.context_a_fraction) {
            return contract(format!("probabilities must lie in [0, 1]: {self:?}"));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return contract(format!("speed range must be positive: {}..{}", self.speed_min, self.speed_max));
        }
        if self.walkers_min < 1 || self.walkers_max < self.walkers_min {
            return contract(format!("walkers per scene must be >= 1: {}..{}", self.walkers_min, self.walkers_max));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.area > 0.0) {
            return contract("noise must be >= 0 and area > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Left,
    Right,
    Obstacle,
    Gather,
}

impl Context {
    pub fn name(self) -> &'static str {
        match self {
            Context::A => "A",
            Context::B => "B",
        }
    }
}

impl Behavior {
    pub fn name(self) -> &'static str {
        match self {
            Behavior::Left => "left",
            Behavior::Right => "right",
            Behavior::Obstacle => "obstacle",
            Behavior::Gather => "gather",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentLabel {
    pub scene: usize,
    pub agent_id: i64,
    pub context: Context,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSet {
    pub windows: Vec<SceneWindow>,
    pub labels: Vec<AgentLabel>,
}

impl SyntheticSceneSet {
    /// `(left turns, left + right turns)` among agents of `context`.
    pub fn turn_counts(&self, context: Context) -> (usize, usize) {
        let mut left = 0;
        let mut total = 0;
        for l in self.labels.iter().filter(|l| l.context == context) {
            match l.behavior {
                Behavior::Left => {
                    left += 1;
                    total += 1;
                }
                Behavior::Right => total += 1,
                _ => {}
            }
        }
        (left, total)
    }
}

fn straight_then_turn(start: Point, heading: f64, speed: f64, turn: f64) -> Vec<Point> {
    let mut track = Vec::with_capacity(WINDOW_LEN);
    let mut p = start;
    track.push(p);
    for t in 1..WINDOW_LEN {
        let k = t.saturating_sub(OBS_LEN - 1).min(TURN_FRAMES);
        let h = heading + turn * k as f64 / TURN_FRAMES as f64;
        p = [p[0] + speed * libm::cos(h), p[1] + speed * libm::sin(h)];
        track.push(p);
    }
    track
}

fn generate_scene(config: &ScenarioConfig, scene: usize) -> Result<(SceneWindow, Vec<AgentLabel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(scene as u64);
    let noise = Normal::new(0.0, config.noise).map_err(|e| crate::Error::Contract(format!("{e}")))?;
    let context = if rng.random_bool(config.context_a_fraction) { Context::A } else { Context::B };
    let p_left = match context {
        Context::A => config.bias,
        Context::B => 1.0 - config.bias,
    };
    let turn_rad = TURN_DEGREES.to_radians();
    let mut tracks: Vec<(Vec<Point>, Behavior)> = Vec::new();
    let walkers = rng.random_range(config.walkers_min..=config.walkers_max);
    for _ in 0..walkers {
        let start = [rng.random_range(0.0..config.area), rng.random_range(0.0..config.area)];
        let heading = rng.random_range(0.0..core::f64::consts::TAU);
        let speed = rng.random_range(config.speed_min..=config.speed_max);
        let left = rng.random_bool(p_left);
        let behavior = if left { Behavior::Left } else { Behavior::Right };
        let track = straight_then_turn(start, heading, speed, if left { turn_rad } else { -turn_rad });
        if rng.random_bool(config.parallel_rate) {
            let side = [libm::sin(heading) * COMPANION_OFFSET, -libm::cos(heading) * COMPANION_OFFSET];
            let companion = track.iter().map(|p| [p[0] + side[0], p[1] + side[1]]).collect();
            tracks.push((companion, behavior));
        }
        if rng.random_bool(config.gather_rate) {
            let end = track[WINDOW_LEN - 1];
            let a = rng.random_range(0.0..core::f64::consts::TAU);
            let target = [end[0] + 0.8 * libm::cos(a), end[1] + 0.8 * libm::sin(a)];
            let from = [target[0] + 6.0 * libm::cos(a), target[1] + 6.0 * libm::sin(a)];
            let last = (WINDOW_LEN - 1) as f64;
            let partner = (0..WINDOW_LEN)
                .map(|t| {
                    let s = t as f64 / last;
                    [from[0] + s * (target[0] - from[0]), from[1] + s * (target[1] - from[1])]
                })
                .collect();
            tracks.push((partner, Behavior::Gather));
        }
        if context == Context::A {
            let anchor = track[OBS_LEN - 1];
            let r = rng.random_range(OBSTACLE_DISTANCE.0..=OBSTACLE_DISTANCE.1);
            let a = rng.random_range(0.0..core::f64::consts::TAU);
            let spot = [anchor[0] + r * libm::cos(a), anchor[1] + r * libm::sin(a)];
            tracks.push((alloc::vec![spot; WINDOW_LEN], Behavior::Obstacle));
        }
        tracks.push((track, behavior));
    }

    let mut observed = Vec::with_capacity(tracks.len() * OBS_LEN);
    let mut future = Vec::with_capacity(tracks.len() * PRED_LEN);
    let mut ids = Vec::with_capacity(tracks.len());
    let mut labels = Vec::with_capacity(tracks.len());
    for (k, (track, behavior)) in tracks.into_iter().enumerate() {
        let id = (scene * 100 + k) as i64;
        ids.push(id);
        labels.push(AgentLabel { scene, agent_id: id, context, behavior });
        for (t, p) in track.into_iter().enumerate() {
            let q = [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)];
            if t < OBS_LEN {
                observed.push(q);
            } else {
                future.push(q);
            }
        }
    }
    let window = SceneWindow::new(&config.name, scene as i64 * SCENE_FRAME_SPAN, ids, observed, future)?;
    Ok((window, labels))
}

/// Deterministic scene set; each scene draws from its own stream of the seed.
pub fn generate(config: &ScenarioConfig) -> Result<SyntheticSceneSet> {
    config.validate()?;
    let mut windows = Vec::with_capacity(config.scenes);
    let mut labels = Vec::new();
    for s in 0..config.scenes {
        let (w, l) = generate_scene(config, s)?;
        windows.push(w);
        labels.extend(l);
    }
    Ok(SyntheticSceneSet { windows, labels })
}

/// Offset applied to the seed of the test set.
pub const TEST_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Train and test sets sharing every setting except the bias probability
/// and the seed. Scene names get `-train` / `-test` suffixes.
pub fn biased_pair(config: &ScenarioConfig, p_train: f64, p_test: f64) -> Result<(SyntheticSceneSet, SyntheticSceneSet)> {
    let mut train = config.clone();
    train.bias = p_train;
    train.name = format!("{}-train", config.name);
    let mut test = config.clone();
    test.bias = p_test;
    test.name = format!("{}-test", config.name);
    test.seed = config.seed.wrapping_add(TEST_SEED_OFFSET);
    Ok((generate(&train)?, generate(&test)?))
}
