//! Classical flights from sampled phase-space points.
//!
//! For a linear potential the Wigner function is transported along classical
//! trajectories, so each particle of a sampled pair simply falls on a
//! parabola. Particles are mapped independently; there is no collapse.

use rayon::prelude::*;
use serde::Serialize;

use crate::bohm::{Arrival, DetectionRecord, Screens, Side};
use crate::config::Setup;
use crate::error::{Error, Result};
use crate::sampler::{momentum_sampler, position_sampler, sample_phase_point, PhasePoint};
use crate::wave::{Particle, TwoParticleState};

/// Earliest `t > 0` with `y0 + vy t − g t²/2 = y_screen`.
pub fn first_crossing_time(y0: f64, vy: f64, g: f64, y_screen: f64) -> Option<f64> {
    let dy = y0 - y_screen;
    if g == 0.0 {
        let t = dy / -vy;
        return (vy != 0.0 && t > 0.0).then_some(t);
    }
    // g t²/2 − vy t − dy = 0
    let disc = vy * vy + 2.0 * g * dy;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // the product of the roots is −2 dy / g; avoid cancellation
    let q = vy + vy.signum() * sq;
    let (r1, r2) = if q == 0.0 {
        (sq / g, -sq / g)
    } else {
        (q / g, -2.0 * dy / q)
    };
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    if lo > 0.0 {
        Some(lo)
    } else if hi > 0.0 {
        Some(hi)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassicalArrival {
    pub t: f64,
    pub x: f64,
    pub hit: bool,
}

/// Free fall from `r0` with momentum `p0` onto the plane `y = y_screen`.
pub fn classical_arrival(r0: [f64; 2], p0: [f64; 2], m: f64, g: f64, y_screen: f64) -> ClassicalArrival {
    let v = [p0[0] / m, p0[1] / m];
    match first_crossing_time(r0[1], v[1], g, y_screen) {
        Some(t) => ClassicalArrival {
            t,
            x: r0[0] + v[0] * t,
            hit: true,
        },
        None => ClassicalArrival {
            t: f64::NAN,
            x: f64::NAN,
            hit: false,
        },
    }
}

/// The first screen a classical particle reaches on the side it is on.
pub fn screen_arrival(r0: [f64; 2], p0: [f64; 2], m: f64, g: f64, scr: &Screens) -> Option<(Side, ClassicalArrival)> {
    [(Side::Left, scr.y_left), (Side::Right, scr.y_right)]
        .into_iter()
        .filter_map(|(side, y)| {
            let a = classical_arrival(r0, p0, m, g, y);
            (a.hit && a.t <= scr.t_max && scr.side(a.x) == side).then_some((side, a))
        })
        .min_by(|a, b| a.1.t.total_cmp(&b.1.t))
}

pub fn map_phase_point(event_id: u64, p: &PhasePoint, m: f64, g: f64, scr: &Screens) -> DetectionRecord {
    let mut arrivals: Vec<Arrival> = [(Particle::One, p.r1, p.p1), (Particle::Two, p.r2, p.p2)]
        .into_iter()
        .filter_map(|(particle, r, mom)| {
            screen_arrival(r, mom, m, g, scr).map(|(side, a)| Arrival {
                particle,
                side,
                t: a.t,
                x: a.x,
            })
        })
        .collect();
    arrivals.sort_by(|a, b| a.t.total_cmp(&b.t));
    DetectionRecord::from_arrivals(event_id, &arrivals, false, None)
}

/// Semiclassical records for `n` events sharing the seed of a Bohmian run:
/// the positions are the very points the Bohmian run starts from.
pub fn run_semiclassical(
    setup: &Setup,
    scr: &Screens,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<DetectionRecord>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let state = TwoParticleState::double_double_slit(setup);
    let positions = position_sampler(&state);
    let momenta = momentum_sampler(&state);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|id| {
                let p = sample_phase_point(&positions, &momenta, seed, id);
                map_phase_point(id, &p, setup.mass, setup.g, scr)
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_from_rest() {
        let a = classical_arrival([0.0, 0.0], [0.0, 0.0], 220.7, 9.81, -8.0e4);
        assert!(a.hit);
        assert!((a.t - (2.0 * 8.0e4 / 9.81f64).sqrt()).abs() < 1e-9);
        assert!((a.t - 127.710_171).abs() < 1e-5);
        assert_eq!(a.x, 0.0);
    }

    #[test]
    fn upward_throw_takes_the_later_root() {
        let m = 2.0;
        // vy = 3: up, then down through y = -1
        let a = classical_arrival([1.0, 0.0], [4.0, 6.0], m, 9.81, -1.0);
        let t = (3.0 + (9.0f64 + 2.0 * 9.81).sqrt()) / 9.81;
        assert!((a.t - t).abs() < 1e-12);
        assert!((a.x - (1.0 + 2.0 * t)).abs() < 1e-12);
    }

    #[test]
    fn screen_above_reached_on_the_way_up() {
        let t = first_crossing_time(0.0, 10.0, 9.81, 1.0).unwrap();
        assert!((0.0 + 10.0 * t - 0.5 * 9.81 * t * t - 1.0).abs() < 1e-12);
        assert!(t < 10.0 / 9.81);
    }

    #[test]
    fn no_gravity_no_arrival() {
        assert!(!classical_arrival([0.0, 0.0], [1.0, 0.0], 1.0, 0.0, -5.0).hit);
        assert!(classical_arrival([0.0, 0.0], [1.0, -1.0], 1.0, 0.0, -5.0).hit);
        assert!(first_crossing_time(0.0, 0.0, 9.81, 1.0).is_none());
    }

    #[test]
    fn sides_follow_the_landing_point() {
        let scr = Screens {
            y_left: -100.0,
            y_right: -1000.0,
            x_split: 0.0,
            t_max: 1e3,
        };
        let (side, a) = screen_arrival([-10.0, 0.0], [-1.0, 0.0], 1.0, 9.81, &scr).unwrap();
        assert_eq!(side, Side::Left);
        assert!((a.t - (200.0 / 9.81f64).sqrt()).abs() < 1e-12);
        // moving right: passes the left screen height over the right half
        let (side, _) = screen_arrival([-1.0, 0.0], [100.0, 0.0], 1.0, 9.81, &scr).unwrap();
        assert_eq!(side, Side::Right);
    }
}
