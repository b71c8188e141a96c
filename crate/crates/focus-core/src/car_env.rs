//! Deterministic toy car-driving simulator with a known ground-truth causal
//! graph, goal-reaching reward, and the three offline behavior regimes
//! (Random / Medium / Medium-Replay).
//!
//! Dynamics per step (all noise terms independent, drawn only in noisy mode):
//!
//! ```text
//! d'   = wrap(d + a + η_d)
//! v'   = max(0, speed_decay · v + η_v)
//! v_x' = v · cos(d) + η_vx        (time-t speed and direction)
//! v_y' = v · sin(d) + η_vy
//! p_x' = clip(p_x + dt · v_x + η_px)   (time-t velocity)
//! p_y' = clip(p_y + dt · v_y + η_py)
//! r    = -‖p - goal‖ + 10 · [‖p - goal‖ ≤ 0.5]
//! ```
//!
//! Velocity components respond to steering with one step of lag, so
//! `v_x² + v_y²` of a fresh state equals the previous speed squared, and a
//! position change equals the previous velocity component exactly. With
//! `speed_decay = 1` and noise off, `v_x² + v_y² = v²` holds within every
//! state the simulator produces.

use crate::data::{CausalGraph, DimensionSchema, SourceTag, TransitionDataset};
use crate::error::{FocusError, Result};
use crate::seeding::child_rng;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Arena half-width; positions are clipped to `[-ARENA, ARENA]²`.
pub const ARENA: f64 = 10.0;
/// Reward bonus granted within [`GOAL_RADIUS`] of the goal.
pub const GOAL_BONUS: f64 = 10.0;
pub const GOAL_RADIUS: f64 = 0.5;

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Car state: direction, scalar speed, velocity components, position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub d: f64,
    pub v: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub p_x: f64,
    pub p_y: f64,
}

impl CarState {
    /// State at the start of an episode: velocity components consistent with
    /// the given speed and direction.
    pub fn from_pose(d: f64, v: f64, p_x: f64, p_y: f64) -> Self {
        let d = wrap_angle(d);
        Self {
            d,
            v,
            v_x: v * d.cos(),
            v_y: v * d.sin(),
            p_x: p_x.clamp(-ARENA, ARENA),
            p_y: p_y.clamp(-ARENA, ARENA),
        }
    }

    pub fn as_vec(&self) -> [f64; 6] {
        [self.d, self.v, self.v_x, self.v_y, self.p_x, self.p_y]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        if s.len() != 6 {
            return Err(FocusError::ShapeMismatch(format!(
                "car state needs 6 entries, got {}",
                s.len()
            )));
        }
        Ok(Self {
            d: s[0],
            v: s[1],
            v_x: s[2],
            v_y: s[3],
            p_x: s[4],
            p_y: s[5],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    pub dt: f64,
    pub goal: (f64, f64),
    /// Steering authority per step, radians.
    pub max_steer: f64,
    pub speed_decay: f64,
    pub process_noise_sd: f64,
    /// Steps per episode.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            goal: (3.5, -3.5),
            max_steer: 0.12,
            speed_decay: 1.0,
            process_noise_sd: 0.02,
            horizon: 8,
            seed: 0,
        }
    }
}

impl CarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_steer > 0.0) {
            return Err(FocusError::InvalidConfig("max_steer must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(FocusError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.speed_decay > 0.0 && self.speed_decay <= 1.0) {
            return Err(FocusError::InvalidConfig("speed_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.process_noise_sd = 0.0;
        self
    }
}

/// Result of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: CarState,
    pub reward: f64,
    /// The requested steering angle exceeded `max_steer` and was clipped.
    pub steer_clipped: bool,
}

/// Core transition with explicit noise draws
/// `[η_d, η_v, η_vx, η_vy, η_px, η_py]`.
pub fn car_step_with_noise(s: &CarState, a: f64, params: &CarParams, eta: [f64; 6]) -> StepOutcome {
    let steer_clipped = a.abs() > params.max_steer;
    let a = a.clamp(-params.max_steer, params.max_steer);

    let d_next = wrap_angle(s.d + a + eta[0]);
    let v_next = (params.speed_decay * s.v + eta[1]).max(0.0);
    let vx_next = s.v * s.d.cos() + eta[2];
    let vy_next = s.v * s.d.sin() + eta[3];
    let px_next = (s.p_x + params.dt * s.v_x + eta[4]).clamp(-ARENA, ARENA);
    let py_next = (s.p_y + params.dt * s.v_y + eta[5]).clamp(-ARENA, ARENA);

    // reward grades the position the step departs from
    let dist = ((s.p_x - params.goal.0).powi(2) + (s.p_y - params.goal.1).powi(2)).sqrt();
    let reward = -dist + if dist <= GOAL_RADIUS { GOAL_BONUS } else { 0.0 };

    StepOutcome {
        state: CarState {
            d: d_next,
            v: v_next,
            v_x: vx_next,
            v_y: vy_next,
            p_x: px_next,
            p_y: py_next,
        },
        reward,
        steer_clipped,
    }
}

/// Speed noise runs smaller than the other channels: the speed is meant to
/// random-walk slowly so offline data keeps its near-constant-speed bias.
pub const SPEED_NOISE_SCALE: f64 = 0.25;

/// Step with process noise drawn from the given RNG.
pub fn car_step(s: &CarState, a: f64, params: &CarParams, rng: &mut impl Rng) -> StepOutcome {
    let eta = if params.process_noise_sd > 0.0 {
        let n = Normal::new(0.0, params.process_noise_sd).expect("valid sd");
        [
            n.sample(rng),
            SPEED_NOISE_SCALE * n.sample(rng),
            n.sample(rng),
            n.sample(rng),
            n.sample(rng),
            n.sample(rng),
        ]
    } else {
        [0.0; 6]
    };
    car_step_with_noise(s, a, params, eta)
}

/// Noise-free step; the reference dynamics for consistency checks.
pub fn car_step_deterministic(s: &CarState, a: f64, params: &CarParams) -> StepOutcome {
    car_step_with_noise(s, a, params, [0.0; 6])
}

/// Dimension naming shared by every car dataset.
pub fn car_schema() -> DimensionSchema {
    DimensionSchema::new(
        vec!["d", "v", "v_x", "v_y", "p_x", "p_y"],
        vec!["a"],
        "r",
    )
    .expect("static schema is valid")
}

/// Input indices in the flattened (state, action) layout.
pub mod idx {
    pub const D: usize = 0;
    pub const V: usize = 1;
    pub const VX: usize = 2;
    pub const VY: usize = 3;
    pub const PX: usize = 4;
    pub const PY: usize = 5;
    pub const A: usize = 6;
    /// Target indices: next-state dims reuse 0..=5, reward is 6.
    pub const R_TARGET: usize = 6;
}

/// Parent mask implied by the step equations.
pub fn ground_truth_graph(_params: &CarParams) -> CausalGraph {
    let schema = car_schema();
    let mut mask = Array2::<u8>::zeros((schema.n_inputs(), schema.n_targets()));
    use idx::*;
    // d' <- d, a
    mask[(D, D)] = 1;
    mask[(A, D)] = 1;
    // v' <- v
    mask[(V, V)] = 1;
    // v_x' <- v, d ; v_y' <- v, d
    mask[(V, VX)] = 1;
    mask[(D, VX)] = 1;
    mask[(V, VY)] = 1;
    mask[(D, VY)] = 1;
    // p_x' <- p_x, v_x ; p_y' <- p_y, v_y
    mask[(PX, PX)] = 1;
    mask[(VX, PX)] = 1;
    mask[(PY, PY)] = 1;
    mask[(VY, PY)] = 1;
    // r <- p_x, p_y
    mask[(PX, R_TARGET)] = 1;
    mask[(PY, R_TARGET)] = 1;
    CausalGraph::new(schema, mask).expect("static mask fits schema")
}

/// Offline data regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataKind {
    Random,
    Medium,
    MediumReplay,
}

impl DataKind {
    pub fn source_tag(self) -> SourceTag {
        match self {
            DataKind::Random => SourceTag::Random,
            DataKind::Medium => SourceTag::Medium,
            DataKind::MediumReplay => SourceTag::MediumReplay,
        }
    }
}

/// Bearing from the car to the goal, measured from a short lookahead of the
/// current motion so the steering compensates the one-step velocity lag.
fn bearing_to_goal(s: &CarState, params: &CarParams) -> f64 {
    let px = s.p_x + 1.5 * params.dt * s.v_x;
    let py = s.p_y + 1.5 * params.dt * s.v_y;
    (params.goal.1 - py).atan2(params.goal.0 - px)
}

/// Proportional steering toward the goal. Gain 1.0 is the competent
/// reference controller; smaller gains steer sluggishly.
pub fn proportional_policy(params: &CarParams, gain: f64) -> impl Fn(&CarState) -> f64 + '_ {
    move |s| (gain * wrap_angle(bearing_to_goal(s, params) - s.d)).clamp(-params.max_steer, params.max_steer)
}

/// Goal-seeking reference controller.
pub fn oracle_policy(params: &CarParams) -> impl Fn(&CarState) -> f64 + '_ {
    proportional_policy(params, 1.0)
}

fn random_start(rng: &mut impl Rng) -> CarState {
    // fixed low speed and a narrow initial heading band: the bias that makes
    // the velocity components mutually redundant in the collected data
    let d0 = -PI / 4.0 + rng.random_range(-0.2..0.2);
    let px = rng.random_range(-1.0..1.0);
    let py = rng.random_range(-1.0..1.0);
    CarState::from_pose(d0, 1.0, px, py)
}

fn medium_start(rng: &mut impl Rng) -> CarState {
    let d0 = -PI / 4.0 + rng.random_range(-0.05..0.05);
    let px = rng.random_range(-0.5..0.5);
    let py = rng.random_range(-0.5..0.5);
    CarState::from_pose(d0, 1.0, px, py)
}

fn replay_start(rng: &mut impl Rng) -> CarState {
    let d0 = rng.random_range(-PI..PI);
    let v0 = rng.random_range(0.3..1.4);
    let px = rng.random_range(-3.0..3.0);
    let py = rng.random_range(-3.0..3.0);
    CarState::from_pose(d0, v0, px, py)
}

/// Start-state distribution used by policy evaluation; matches the biased
/// low-speed region the offline data comes from.
pub fn eval_start(rng: &mut impl Rng) -> CarState {
    random_start(rng)
}

/// Generate an offline dataset of `n_transitions` rows. Episodes get
/// independent RNG streams derived from `seed`, so output is deterministic.
pub fn generate_offline_data(
    kind: DataKind,
    n_transitions: usize,
    params: &CarParams,
    seed: u64,
) -> Result<TransitionDataset> {
    params.validate()?;
    if n_transitions == 0 {
        return Err(FocusError::InvalidArgument(
            "n_transitions must be at least 1".into(),
        ));
    }
    let n_episodes = n_transitions.div_ceil(params.horizon);
    let schema = car_schema();
    let mut s_t = Array2::<f64>::zeros((n_transitions, 6));
    let mut a_t = Array2::<f64>::zeros((n_transitions, 1));
    let mut s_next = Array2::<f64>::zeros((n_transitions, 6));
    let mut r_t = Array1::<f64>::zeros(n_transitions);

    let mut row = 0usize;
    'episodes: for ep in 0..n_episodes {
        let mut rng = child_rng(seed, ep as u64);
        let mut state = match kind {
            DataKind::Random => random_start(&mut rng),
            DataKind::Medium => medium_start(&mut rng),
            DataKind::MediumReplay => replay_start(&mut rng),
        };
        // replay episodes come from a sequence of progressively improved
        // controllers; the gain cycles so any dataset size sees the full range
        let replay_gain = 0.1 + 0.9 * ((ep % 50) as f64 / 49.0);
        let jitter = Normal::new(0.0, 0.05).expect("valid sd");
        let medium_jitter = Normal::new(0.0, 0.03).expect("valid sd");
        for _ in 0..params.horizon {
            let action = match kind {
                DataKind::Random => rng.random_range(-params.max_steer..params.max_steer),
                DataKind::Medium => {
                    let base = proportional_policy(params, 0.4)(&state);
                    (base + medium_jitter.sample(&mut rng)).clamp(-params.max_steer, params.max_steer)
                }
                DataKind::MediumReplay => {
                    let base = proportional_policy(params, replay_gain)(&state);
                    (base + jitter.sample(&mut rng)).clamp(-params.max_steer, params.max_steer)
                }
            };
            let out = car_step(&state, action, params, &mut rng);
            for (c, val) in state.as_vec().into_iter().enumerate() {
                s_t[(row, c)] = val;
            }
            a_t[(row, 0)] = action;
            for (c, val) in out.state.as_vec().into_iter().enumerate() {
                s_next[(row, c)] = val;
            }
            r_t[row] = out.reward;
            state = out.state;
            row += 1;
            if row == n_transitions {
                break 'episodes;
            }
        }
    }
    TransitionDataset::new(schema, s_t, a_t, s_next, r_t, kind.source_tag())
}

/// Monte-Carlo policy evaluation in the true simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub mean_return: f64,
    pub sd_return: f64,
    pub n_episodes: usize,
    /// Episodes aborted because the policy emitted a non-finite action.
    pub aborted_episodes: usize,
    pub steer_clip_events: usize,
}

/// Undiscounted return of one episode from `start`; `None` reward on abort.
fn run_episode(
    policy: &mut dyn FnMut(&CarState) -> f64,
    start: CarState,
    params: &CarParams,
    rng: &mut impl Rng,
) -> (f64, bool, usize) {
    let mut state = start;
    let mut total = 0.0;
    let mut clips = 0;
    for _ in 0..params.horizon {
        let action = policy(&state);
        if !action.is_finite() {
            return (total, true, clips);
        }
        let out = car_step(&state, action, params, rng);
        if out.steer_clipped {
            clips += 1;
        }
        total += out.reward;
        state = out.state;
    }
    (total, false, clips)
}

/// Evaluate a policy over `n_episodes` episodes of `params.horizon` steps.
/// Episodes run sequentially with per-episode RNG streams; the standard
/// deviation is the population version (a single episode reports 0).
pub fn evaluate_policy(
    policy: &mut dyn FnMut(&CarState) -> f64,
    params: &CarParams,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalOutcome> {
    params.validate()?;
    if n_episodes == 0 {
        return Err(FocusError::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let mut returns = Vec::with_capacity(n_episodes);
    let mut aborted = 0usize;
    let mut clips = 0usize;
    for ep in 0..n_episodes {
        let mut rng = child_rng(seed, ep as u64);
        let start = eval_start(&mut rng);
        let (ret, was_aborted, ep_clips) = run_episode(policy, start, params, &mut rng);
        if was_aborted {
            aborted += 1;
        }
        clips += ep_clips;
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalOutcome {
        mean_return: mean,
        sd_return: var.sqrt(),
        n_episodes,
        aborted_episodes: aborted,
        steer_clip_events: clips,
    })
}

/// Occupancy counts of visited positions over a `bins x bins` grid covering
/// the arena; the diversity picture of a dataset.
pub fn occupancy_grid(ds: &TransitionDataset, bins: usize) -> Result<Array2<u64>> {
    let schema = &ds.schema;
    let px = schema
        .state_names
        .iter()
        .position(|n| n == "p_x")
        .ok_or_else(|| FocusError::SchemaMismatch("dataset has no p_x dimension".into()))?;
    let py = schema
        .state_names
        .iter()
        .position(|n| n == "p_y")
        .ok_or_else(|| FocusError::SchemaMismatch("dataset has no p_y dimension".into()))?;
    let mut grid = Array2::<u64>::zeros((bins, bins));
    let scale = bins as f64 / (2.0 * ARENA);
    for row in 0..ds.len() {
        let x = ds.s_t[(row, px)];
        let y = ds.s_t[(row, py)];
        let bx = (((x + ARENA) * scale) as usize).min(bins - 1);
        let by = (((y + ARENA) * scale) as usize).min(bins - 1);
        grid[(by, bx)] += 1;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn straight_line_motion() {
        let params = CarParams::default().noiseless();
        let s = CarState::from_pose(0.0, 1.0, 0.0, 0.0);
        assert_eq!((s.v_x, s.v_y), (1.0, 0.0));
        let out = car_step_deterministic(&s, 0.0, &params);
        assert_abs_diff_eq!(out.state.p_x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.state.p_y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.state.v_x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.state.v_y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.state.d, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.state.v, 1.0, epsilon = 1e-15);
    }

    /// Turning acts on the direction immediately and on the velocity
    /// components one step later.
    #[test]
    fn quarter_turn_shows_in_velocity_after_one_step() {
        let params = CarParams {
            max_steer: 2.0,
            ..CarParams::default().noiseless()
        };
        let s = CarState::from_pose(0.0, 1.0, 0.0, 0.0);
        let first = car_step_deterministic(&s, std::f64::consts::FRAC_PI_2, &params);
        assert_abs_diff_eq!(first.state.d, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        // velocity still along the old heading
        assert_abs_diff_eq!(first.state.v_x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(first.state.v_y, 0.0, epsilon = 1e-12);
        let second = car_step_deterministic(&first.state, 0.0, &params);
        assert_abs_diff_eq!(second.state.v_x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(second.state.v_y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reward_includes_goal_bonus() {
        let params = CarParams::default().noiseless();
        let s = CarState::from_pose(0.0, 0.0, params.goal.0, params.goal.1);
        let out = car_step_deterministic(&s, 0.0, &params);
        assert_abs_diff_eq!(out.reward, GOAL_BONUS, epsilon = 1e-12);
    }

    #[test]
    fn steering_is_clipped_and_flagged() {
        let params = CarParams::default().noiseless();
        let s = CarState::from_pose(0.0, 1.0, 0.0, 0.0);
        let out = car_step_deterministic(&s, 10.0, &params);
        assert!(out.steer_clipped);
        assert_abs_diff_eq!(out.state.d, params.max_steer, epsilon = 1e-12);
    }

    #[test]
    fn wrap_keeps_angles_in_half_open_interval() {
        for x in [-7.0, -PI, -0.5, 0.0, 0.5, PI, 7.0, 100.0, -100.0] {
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI, "wrap({x}) = {w}");
        }
        assert_abs_diff_eq!(wrap_angle(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn kinematic_identity_preserved_noiseless() {
        let params = CarParams::default().noiseless();
        let mut rng = child_rng(5, 0);
        let mut state = CarState::from_pose(1.2, 0.8, 0.3, -0.4);
        for _ in 0..200 {
            let a = rng.random_range(-params.max_steer..params.max_steer);
            let out = car_step_deterministic(&state, a, &params);
            state = out.state;
            let lhs = state.v_x * state.v_x + state.v_y * state.v_y;
            assert_abs_diff_eq!(lhs, state.v * state.v, epsilon = 1e-9);
        }
    }

    /// Machine check: the ground-truth mask matches the dynamics. Every
    /// mask=0 pair must show exactly zero finite-difference response, and
    /// every mask=1 pair must respond somewhere.
    #[test]
    fn graph_is_consistent_with_dynamics() {
        let params = CarParams::default().noiseless();
        let graph = ground_truth_graph(&params);
        let mut rng = child_rng(6, 0);
        let n_probes = 40;
        let delta = 1e-3;

        let outputs = |inputs: &[f64; 7]| -> [f64; 7] {
            let s = CarState::from_slice(&inputs[..6]).unwrap();
            let out = car_step_with_noise(&s, inputs[6], &params, [0.0; 6]);
            let v = out.state.as_vec();
            [v[0], v[1], v[2], v[3], v[4], v[5], out.reward]
        };

        let mut responded = Array2::<bool>::from_elem((7, 7), false);
        for _ in 0..n_probes {
            let base: [f64; 7] = [
                rng.random_range(-2.5..2.5),
                rng.random_range(0.1..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-0.1..0.1),
            ];
            let y0 = outputs(&base);
            for i in 0..7 {
                let mut bumped = base;
                bumped[i] += delta;
                let y1 = outputs(&bumped);
                for j in 0..7 {
                    let changed = (y1[j] - y0[j]).abs() > 0.0;
                    if changed {
                        responded[(i, j)] = true;
                    }
                    if graph.mask[(i, j)] == 0 {
                        assert!(
                            !changed,
                            "input {} must not move target {} (non-parent)",
                            graph.schema.input_name(i),
                            graph.schema.target_name(j)
                        );
                    }
                }
            }
        }
        for i in 0..7 {
            for j in 0..7 {
                if graph.mask[(i, j)] == 1 {
                    assert!(
                        responded[(i, j)],
                        "declared parent {} -> {} never responded",
                        graph.schema.input_name(i),
                        graph.schema.target_name(j)
                    );
                }
            }
        }
    }

    #[test]
    fn paper_pinned_graph_entries() {
        let graph = ground_truth_graph(&CarParams::default());
        use idx::*;
        assert_eq!(graph.mask[(A, D)], 1, "steering drives the next direction");
        assert_eq!(graph.mask[(VX, PY)], 0, "v_x is not a parent of p_y'");
        let v_col: u32 = (0..7).map(|i| graph.mask[(i, V)] as u32).sum();
        assert_eq!(v_col, 1, "the speed column has exactly one parent");
    }

    #[test]
    fn random_data_has_biased_speed_and_replay_is_diverse() {
        let params = CarParams::default();
        let random = generate_offline_data(DataKind::Random, 10_000, &params, 7).unwrap();
        let v_col = random.s_t.column(idx::V);
        let mean = v_col.mean().unwrap();
        let sd = v_col.std(0.0);
        assert!(
            sd < 0.1 * mean,
            "random data speed must be near-constant: sd {sd}, mean {mean}"
        );

        let replay = generate_offline_data(DataKind::MediumReplay, 10_000, &params, 7).unwrap();
        let sd_replay = replay.s_t.column(idx::V).std(0.0);
        assert!(
            sd_replay >= 5.0 * sd,
            "replay speed spread {sd_replay} must be at least 5x random's {sd}"
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let params = CarParams::default();
        for kind in [DataKind::Random, DataKind::Medium, DataKind::MediumReplay] {
            let a = generate_offline_data(kind, 500, &params, 3).unwrap();
            let b = generate_offline_data(kind, 500, &params, 3).unwrap();
            assert_eq!(a, b);
        }
    }

    /// The spurious trap: on random data the x-velocity tracks the position
    /// change that only the y-velocity actually causes.
    #[test]
    fn random_data_contains_the_spurious_correlation() {
        let params = CarParams::default();
        let ds = generate_offline_data(DataKind::Random, 10_000, &params, 11).unwrap();
        let vx = ds.s_t.column(idx::VX);
        let dpy: Array1<f64> = (0..ds.len())
            .map(|r| ds.s_next[(r, idx::PY)] - ds.s_t[(r, idx::PY)])
            .collect();
        let mx = vx.mean().unwrap();
        let my = dpy.mean().unwrap();
        let mut cov = 0.0;
        let mut vxv = 0.0;
        let mut vyv = 0.0;
        for r in 0..ds.len() {
            let a = vx[r] - mx;
            let b = dpy[r] - my;
            cov += a * b;
            vxv += a * a;
            vyv += b * b;
        }
        let corr = cov / (vxv.sqrt() * vyv.sqrt());
        assert!(
            corr > 0.9,
            "spurious correlation must be present on random data, got {corr}"
        );
    }

    #[test]
    fn zero_steer_return_matches_hand_rollout() {
        let params = CarParams::default().noiseless();
        let start = CarState::from_pose(-PI / 4.0, 1.0, 0.0, 0.0);
        let mut policy = |_: &CarState| 0.0;
        let horizon3 = CarParams { horizon: 3, ..params };
        let mut rng = child_rng(0, 0);
        let (ret, aborted, _) = run_episode(&mut policy, start, &horizon3, &mut rng);
        assert!(!aborted);
        // hand rollout: the car departs from k/sqrt(2) * (1, -1) at steps
        // k = 0, 1, 2 moving toward the goal at (3.5, -3.5)
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let mut expected = 0.0;
        for k in 0..3 {
            let px = k as f64 * c;
            let dist = ((3.5 - px).powi(2) + (-3.5 + px).powi(2)).sqrt();
            expected -= dist;
        }
        assert_abs_diff_eq!(ret, expected, epsilon = 1e-12);
    }

    #[test]
    fn oracle_beats_random_policy() {
        // evaluation-length episodes; data-collection episodes are shorter
        let params = CarParams { horizon: 20, ..CarParams::default() };
        let oracle = oracle_policy(&params);
        let mut oracle_mut = |s: &CarState| oracle(s);
        let good = evaluate_policy(&mut oracle_mut, &params, 50, 21).unwrap();
        let mut rng = child_rng(22, 0);
        let mut random_policy =
            |_: &CarState| rng.random_range(-params.max_steer..params.max_steer);
        let bad = evaluate_policy(&mut random_policy, &params, 50, 21).unwrap();
        assert!(
            good.mean_return >= bad.mean_return + 12.0,
            "oracle {} vs random {}",
            good.mean_return,
            bad.mean_return
        );
    }

    #[test]
    fn single_noiseless_episode_has_zero_sd() {
        let params = CarParams::default().noiseless();
        let oracle = oracle_policy(&params);
        let mut policy = |s: &CarState| oracle(s);
        let out = evaluate_policy(&mut policy, &params, 1, 4).unwrap();
        assert_eq!(out.sd_return, 0.0);
        assert_eq!(out.n_episodes, 1);
    }

    #[test]
    fn nan_action_aborts_and_flags() {
        let params = CarParams::default();
        let mut policy = |_: &CarState| f64::NAN;
        let out = evaluate_policy(&mut policy, &params, 3, 8).unwrap();
        assert_eq!(out.aborted_episodes, 3);
    }

    #[test]
    fn occupancy_grid_counts_every_row() {
        let params = CarParams::default();
        let ds = generate_offline_data(DataKind::Random, 600, &params, 2).unwrap();
        let grid = occupancy_grid(&ds, 40).unwrap();
        assert_eq!(grid.iter().sum::<u64>(), 600);
    }
#[test]
#[ignore]
fn scratch_bias_debug() {
    use crate::car_env::*;
    use crate::car_env::idx;
    let params = CarParams::default();
    let ds = generate_offline_data(DataKind::Random, 10_000, &params, 11).unwrap();
    let d_col = ds.s_t.column(idx::D);
    let vx = ds.s_t.column(idx::VX);
    let vy = ds.s_t.column(idx::VY);
    eprintln!("d: mean {:.3} sd {:.3} min {:.3} max {:.3}", d_col.mean().unwrap(), d_col.std(0.0),
        d_col.iter().cloned().fold(f64::INFINITY, f64::min), d_col.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    eprintln!("vx: mean {:.3} sd {:.3}", vx.mean().unwrap(), vx.std(0.0));
    eprintln!("vy: mean {:.3} sd {:.3}", vy.mean().unwrap(), vy.std(0.0));
    let corr = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        let ma = a.mean().unwrap(); let mb = b.mean().unwrap();
        let mut c = 0.0; let mut va = 0.0; let mut vb = 0.0;
        for i in 0..a.len() { let x = a[i]-ma; let y = b[i]-mb; c += x*y; va += x*x; vb += y*y; }
        c / (va.sqrt()*vb.sqrt())
    };
    eprintln!("corr(vx, vy) = {:.3}", corr(vx, vy));
    // clipping count
    let clipped = (0..ds.len()).filter(|&r| ds.s_t[(r, idx::PX)].abs() >= ARENA - 1e-9 || ds.s_t[(r, idx::PY)].abs() >= ARENA - 1e-9).count();
    eprintln!("rows at arena boundary: {}", clipped);
    // per-episode d drift: first episode trace
    for t in [0, 5, 10, 20, 29] {
        eprintln!("row {t}: d={:.3} vx={:.3} vy={:.3} px={:.2} py={:.2}", ds.s_t[(t, 0)], ds.s_t[(t, 2)], ds.s_t[(t, 3)], ds.s_t[(t, 4)], ds.s_t[(t, 5)]);
    }
}

}

