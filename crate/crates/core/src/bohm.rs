//! Guidance-equation trajectories from the slits to the screens.

use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, IntegratorSettings, Setup};
use crate::error::{Error, Result};
use crate::ode::{bisect, DenseStep, Dopri5, StepError, Tolerances};
use crate::sampler::{position_sampler, sample_position, ConfigPoint};
use crate::units::Units;
use crate::wave::state::EPS_NODE;
use crate::wave::{ConditionalState, Particle, TwoParticleState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LostReason {
    TMax,
    WrongSide,
    NodeTrap,
    DegenerateCollapse,
}

impl LostReason {
    pub fn as_str(self) -> &'static str {
        match self {
            LostReason::TMax => "t_max",
            LostReason::WrongSide => "wrong_side",
            LostReason::NodeTrap => "node_trap",
            LostReason::DegenerateCollapse => "degenerate_collapse",
        }
    }
}

/// Detector geometry in internal units. The left screen covers
/// `x < x_split`, the right one `x ≥ x_split`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Screens {
    pub y_left: f64,
    pub y_right: f64,
    pub x_split: f64,
    pub t_max: f64,
}

impl Screens {
    pub fn from_setup(s: &Setup) -> Self {
        Screens {
            y_left: s.y_left,
            y_right: s.y_right,
            x_split: s.x_split,
            t_max: s.horizon(),
        }
    }

    pub fn side(&self, x: f64) -> Side {
        if x < self.x_split {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn height(&self, x: f64) -> f64 {
        match self.side(x) {
            Side::Left => self.y_left,
            Side::Right => self.y_right,
        }
    }

    /// Positive above the screen under the particle.
    fn gap(&self, x: f64, y: f64) -> f64 {
        y - self.height(x)
    }
}

/// A click: when and where a particle reached a screen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Arrival {
    pub particle: Particle,
    pub side: Side,
    pub t: f64,
    pub x: f64,
}

/// One simulated pair. Times in ms, positions in μm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub event_id: u64,
    pub left: Option<(f64, f64)>,
    pub right: Option<(f64, f64)>,
    pub first: Option<Side>,
    pub collapse_applied: bool,
    pub lost: Option<LostReason>,
}

impl DetectionRecord {
    pub fn t_left(&self) -> Option<f64> {
        self.left.map(|a| a.0)
    }
    pub fn t_right(&self) -> Option<f64> {
        self.right.map(|a| a.0)
    }
    pub fn is_kept(&self) -> bool {
        self.lost.is_none()
    }

    /// Assemble a record from the clicks of one pair, in time order.
    pub fn from_arrivals(
        event_id: u64,
        arrivals: &[Arrival],
        collapse_applied: bool,
        lost: Option<LostReason>,
    ) -> Self {
        let mut rec = DetectionRecord {
            event_id,
            left: None,
            right: None,
            first: arrivals.first().map(|a| a.side),
            collapse_applied,
            lost,
        };
        for a in arrivals {
            let slot = match a.side {
                Side::Left => &mut rec.left,
                Side::Right => &mut rec.right,
            };
            if slot.is_some() {
                rec.lost = rec.lost.or(Some(LostReason::WrongSide));
            } else {
                *slot = Some((a.t, a.x));
            }
        }
        if rec.lost.is_none() && (rec.left.is_none() || rec.right.is_none()) {
            rec.lost = Some(LostReason::TMax);
        }
        rec
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Knot {
    pub t: f64,
    pub r1: [f64; 2],
    pub r2: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub knots: Vec<Knot>,
    pub termination: Option<LostReason>,
}

impl Trajectory {
    fn push(&mut self, t: f64, r1: [f64; 2], r2: [f64; 2]) {
        if self.knots.last().map_or(true, |k| t > k.t) {
            self.knots.push(Knot { t, r1, r2 });
        }
    }

    /// Keep at most `max` knots, always including the first and last.
    pub fn decimate(&mut self, max: usize) {
        let n = self.knots.len();
        if n <= max || max < 2 {
            return;
        }
        let keep: Vec<Knot> = (0..max)
            .map(|i| self.knots[(i * (n - 1)) / (max - 1)])
            .collect();
        self.knots = keep;
    }
}

/// Integrator settings in internal units.
#[derive(Clone, Copy, Debug)]
pub struct PairOptions {
    pub tol: Tolerances,
    pub collapse: bool,
    pub record_trajectory: bool,
    pub max_knots: usize,
    pub full_resolution: bool,
}

impl PairOptions {
    pub fn from_settings(s: &IntegratorSettings, collapse: bool, horizon: f64) -> Self {
        PairOptions {
            tol: Tolerances {
                rtol: s.rtol,
                atol: Units::length_to_internal(s.atol),
                h_min: Units::time_to_internal(s.dt_min),
                h_max: horizon / 50.0,
            },
            collapse,
            record_trajectory: false,
            max_knots: s.max_knots,
            full_resolution: s.full_resolution,
        }
    }
}

const INITIAL_STEP: f64 = 1e-3;
/// Two clicks closer than this (1e-12 s) count as simultaneous.
const TIE: f64 = 1e-9;

/// Root of `gap` inside one step, to 1e-9 relative in time.
fn crossing_time<const D: usize, G: Fn(&[f64; D]) -> f64>(step: &DenseStep<D>, gap: G) -> f64 {
    let tol = 1e-9 * step.t1.abs().max(1e-9);
    bisect(|t| gap(&step.eval(t)), step.t0, step.t1, tol)
}

/// Right-hand side of the pair guidance equation with node flagging.
struct PairField<'a> {
    state: &'a TwoParticleState,
    last_log_density: Cell<f64>,
    running_max: Cell<f64>,
}

impl PairField<'_> {
    fn eval(&self, t: f64, y: &[f64; 4]) -> Option<[f64; 4]> {
        let frozen = self.state.at_time(t);
        let v = self.state.velocity_at(&frozen, y);
        self.last_log_density.set(v.log_density);
        if v.near_node(self.running_max.get()) {
            return None;
        }
        Some([v.v1[0], v.v1[1], v.v2[0], v.v2[1]])
    }

    fn accept(&self) {
        let l = self.last_log_density.get();
        if l > self.running_max.get() {
            self.running_max.set(l);
        }
    }
}

struct SingleField<'a> {
    state: &'a ConditionalState,
    last_log_density: Cell<f64>,
    running_max: Cell<f64>,
}

impl SingleField<'_> {
    fn eval(&self, t: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
        let frozen = self.state.at_time(t);
        let (v, ld) = self.state.velocity(&frozen, y);
        self.last_log_density.set(ld);
        if !(ld.is_finite() && ld >= self.running_max.get() + EPS_NODE.ln()) {
            return None;
        }
        Some(v)
    }

    fn accept(&self) {
        let l = self.last_log_density.get();
        if l > self.running_max.get() {
            self.running_max.set(l);
        }
    }
}

fn split(y: &[f64; 4]) -> ([f64; 2], [f64; 2]) {
    ([y[0], y[1]], [y[2], y[3]])
}

/// Integrate one pair from `x0` at `t = 0` until both particles are detected,
/// applying the collapse at the first detection when enabled.
pub fn integrate_pair(
    event_id: u64,
    x0: &ConfigPoint,
    state: &TwoParticleState,
    scr: &Screens,
    opts: &PairOptions,
) -> (DetectionRecord, Option<Trajectory>) {
    let mut traj = opts.record_trajectory.then(|| Trajectory {
        knots: Vec::new(),
        termination: None,
    });
    let (arrivals, collapsed, lost) = run_pair(x0, state, scr, opts, traj.as_mut());
    if let Some(t) = traj.as_mut() {
        t.termination = lost;
        if !opts.full_resolution {
            t.decimate(opts.max_knots);
        }
    }
    (
        DetectionRecord::from_arrivals(event_id, &arrivals, collapsed, lost),
        traj,
    )
}

fn run_pair(
    x0: &ConfigPoint,
    state: &TwoParticleState,
    scr: &Screens,
    opts: &PairOptions,
    mut traj: Option<&mut Trajectory>,
) -> (Vec<Arrival>, bool, Option<LostReason>) {
    let field = PairField {
        state,
        last_log_density: Cell::new(f64::NEG_INFINITY),
        running_max: Cell::new(f64::NEG_INFINITY),
    };
    let y0 = x0.slots();
    let _ = field.eval(0.0, &y0);
    field.running_max.set(field.last_log_density.get());
    let mut ode = Dopri5::new(0.0, y0, INITIAL_STEP, opts.tol);
    let mut f = |t: f64, y: &[f64; 4]| field.eval(t, y);
    let mut arrivals: Vec<Arrival> = Vec::new();
    let mut detected = [false; 2];
    if let Some(tr) = traj.as_deref_mut() {
        tr.push(0.0, x0.r1, x0.r2);
    }
    let gap = |i: usize, y: &[f64; 4]| scr.gap(y[2 * i], y[2 * i + 1]);
    loop {
        if ode.t >= scr.t_max {
            return (arrivals, false, Some(LostReason::TMax));
        }
        let step = match ode.step(&mut f, scr.t_max) {
            Ok(s) => s,
            Err(StepError::StepTooSmall) => return (arrivals, false, Some(LostReason::NodeTrap)),
        };
        field.accept();
        let mut hits: Vec<(f64, usize)> = (0..2)
            .filter(|&i| !detected[i] && gap(i, &step.y1) <= 0.0)
            .map(|i| (crossing_time(&step, |y| gap(i, y)), i))
            .collect();
        if hits.is_empty() {
            if let Some(tr) = traj.as_deref_mut() {
                let (r1, r2) = split(&step.y1);
                tr.push(step.t1, r1, r2);
            }
            continue;
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if hits.len() == 2 && (hits[1].0 - hits[0].0).abs() <= TIE {
            hits.sort_by_key(|h| h.1);
        }
        let (t_c, i) = hits[0];
        let pos = step.eval(t_c);
        let r = [pos[2 * i], pos[2 * i + 1]];
        let particle = Particle::from_index(i);
        arrivals.push(Arrival {
            particle,
            side: scr.side(r[0]),
            t: t_c,
            x: r[0],
        });
        detected[i] = true;
        if let Some(tr) = traj.as_deref_mut() {
            let (r1, r2) = split(&pos);
            tr.push(t_c, r1, r2);
        }
        if opts.collapse {
            let cond = match state.collapse(particle, r, t_c) {
                Ok(c) => c,
                Err(_) => return (arrivals, true, Some(LostReason::DegenerateCollapse)),
            };
            let j = 1 - i;
            let start = [pos[2 * j], pos[2 * j + 1]];
            let lost = run_survivor(&cond, start, t_c, r, scr, opts, &mut arrivals, traj);
            return (arrivals, true, lost);
        }
        // without collapse the pair keeps moving in the full field
        for &(t_j, j) in &hits[1..] {
            let p = step.eval(t_j);
            detected[j] = true;
            arrivals.push(Arrival {
                particle: Particle::from_index(j),
                side: scr.side(p[2 * j]),
                t: t_j,
                x: p[2 * j],
            });
        }
        if let Some(tr) = traj.as_deref_mut() {
            let (r1, r2) = split(&step.y1);
            tr.push(step.t1, r1, r2);
        }
        if detected.iter().all(|&d| d) {
            return (arrivals, false, None);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_survivor(
    cond: &ConditionalState,
    start: [f64; 2],
    t_c: f64,
    frozen_pos: [f64; 2],
    scr: &Screens,
    opts: &PairOptions,
    arrivals: &mut Vec<Arrival>,
    mut traj: Option<&mut Trajectory>,
) -> Option<LostReason> {
    let survivor = cond.survivor();
    let field = SingleField {
        state: cond,
        last_log_density: Cell::new(f64::NEG_INFINITY),
        running_max: Cell::new(f64::NEG_INFINITY),
    };
    let _ = field.eval(t_c, &start);
    field.running_max.set(field.last_log_density.get());
    let mut ode = Dopri5::new(t_c, start, INITIAL_STEP, opts.tol);
    let mut f = |t: f64, y: &[f64; 2]| field.eval(t, y);
    let knot = |y: &[f64; 2]| match survivor {
        Particle::One => (*y, frozen_pos),
        Particle::Two => (frozen_pos, *y),
    };
    loop {
        if ode.t >= scr.t_max {
            return Some(LostReason::TMax);
        }
        let step = match ode.step(&mut f, scr.t_max) {
            Ok(s) => s,
            Err(StepError::StepTooSmall) => return Some(LostReason::NodeTrap),
        };
        field.accept();
        if scr.gap(step.y1[0], step.y1[1]) <= 0.0 {
            let t = crossing_time(&step, |y| scr.gap(y[0], y[1]));
            let p = step.eval(t);
            arrivals.push(Arrival {
                particle: survivor,
                side: scr.side(p[0]),
                t,
                x: p[0],
            });
            if let Some(tr) = traj.as_deref_mut() {
                let (r1, r2) = knot(&p);
                tr.push(t, r1, r2);
            }
            return None;
        }
        if let Some(tr) = traj.as_deref_mut() {
            let (r1, r2) = knot(&step.y1);
            tr.push(step.t1, r1, r2);
        }
    }
}

/// Positions of the uncollapsed flow at the requested (increasing) times.
pub fn sample_path(
    x0: &ConfigPoint,
    state: &TwoParticleState,
    times: &[f64],
    tol: Tolerances,
) -> std::result::Result<Vec<[f64; 4]>, LostReason> {
    let field = PairField {
        state,
        last_log_density: Cell::new(f64::NEG_INFINITY),
        running_max: Cell::new(f64::NEG_INFINITY),
    };
    let y0 = x0.slots();
    let _ = field.eval(0.0, &y0);
    field.running_max.set(field.last_log_density.get());
    let mut ode = Dopri5::new(0.0, y0, INITIAL_STEP, tol);
    let mut f = |t: f64, y: &[f64; 4]| field.eval(t, y);
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        out.push(y0);
        next += 1;
    }
    let end = times.last().copied().unwrap_or(0.0);
    while next < times.len() {
        let step = ode.step(&mut f, end).map_err(|_| LostReason::NodeTrap)?;
        field.accept();
        while next < times.len() && times[next] <= step.t1 {
            out.push(step.eval(times[next]));
            next += 1;
        }
    }
    Ok(out)
}

/// Everything needed to run one ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub setup: Setup,
    pub screens: Screens,
    pub options: PairOptions,
    pub n_events: usize,
    pub seed: u64,
    pub workers: usize,
    /// log progress every this many finished events (0 = never)
    pub progress_every: usize,
}

impl EnsembleSpec {
    pub fn from_config(cfg: &ExperimentConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let setup = cfg.to_internal_units()?;
        let screens = Screens::from_setup(&setup);
        let options = PairOptions::from_settings(&cfg.integrator, cfg.collapse_enabled, screens.t_max);
        Ok(EnsembleSpec {
            setup,
            screens,
            options,
            n_events: cfg.n_events,
            seed: cfg.seed,
            workers: workers.max(1),
            progress_every: 0,
        })
    }
}

/// Run `n_events` pairs. Records come back ordered by event id and do not
/// depend on the number of workers.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<Vec<DetectionRecord>> {
    let state = TwoParticleState::double_double_slit(&spec.setup);
    let sampler = position_sampler(&state);
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        (0..spec.n_events as u64)
            .into_par_iter()
            .map(|id| {
                let x0 = sample_position(&sampler, spec.seed, id);
                let (rec, _) = integrate_pair(id, &x0, &state, &spec.screens, &spec.options);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if spec.progress_every > 0 && n % spec.progress_every == 0 {
                    log::info!("{n}/{} events", spec.n_events);
                }
                rec
            })
            .collect::<Vec<_>>()
    });
    Ok(records)
}

/// Trajectories of the first `n` events, for plotting.
pub fn sample_trajectories(spec: &EnsembleSpec, n: usize) -> Vec<Trajectory> {
    let state = TwoParticleState::double_double_slit(&spec.setup);
    let sampler = position_sampler(&state);
    let mut opts = spec.options;
    opts.record_trajectory = true;
    (0..n.min(spec.n_events) as u64)
        .map(|id| {
            let x0 = sample_position(&sampler, spec.seed, id);
            integrate_pair(id, &x0, &state, &spec.screens, &opts)
                .1
                .expect("trajectory requested")
        })
        .collect()
}
