//! Exact draws from `|Ψ_{t0}|²` and `|Ψ̃_{t0}|²`.
//!
//! Each event owns a ChaCha20 stream: the key is built from the run seed and
//! a domain tag (positions and momenta use different keys), and the stream
//! number is the event id. Draws are therefore independent of how events are
//! split across workers.
//!
//! Sampling is rejection from the incoherent mixture `Σ_k |term_k|²`. By
//! Cauchy–Schwarz `|Σ_k term_k|² ≤ K Σ_k |term_k|²` for `K` terms, so
//! accepting with probability `|Ψ|² / (K Σ_k |term_k|²)` is exact whatever the
//! overlap between terms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::wave::sum::{FrozenSum, OwnedSum};
use crate::wave::TwoParticleState;

pub const DOMAIN_POSITION: u64 = 0x706f_7369;
pub const DOMAIN_MOMENTUM: u64 = 0x6d6f_6d65;

/// The random stream of one event.
pub fn event_rng(seed: u64, domain: u64, event_id: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(event_id);
    rng
}

/// Initial positions of a pair (μm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConfigPoint {
    pub r1: [f64; 2],
    pub r2: [f64; 2],
}

impl ConfigPoint {
    pub fn from_slots(x: [f64; 4]) -> Self {
        ConfigPoint {
            r1: [x[0], x[1]],
            r2: [x[2], x[3]],
        }
    }
    pub fn slots(&self) -> [f64; 4] {
        [self.r1[0], self.r1[1], self.r2[0], self.r2[1]]
    }
}

/// Positions (μm) and momenta (internal units, 1e-27 kg·m/s) of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub r1: [f64; 2],
    pub r2: [f64; 2],
    pub p1: [f64; 2],
    pub p2: [f64; 2],
}

/// Rejection sampler for `|Σ_k term_k|²` over `N` coordinates.
#[derive(Clone, Debug)]
pub struct MixtureSampler<const N: usize> {
    sum: OwnedSum<N>,
    cumulative: Vec<f64>,
    components: Vec<[(f64, f64); N]>,
    ln_envelope: f64,
}

impl<const N: usize> MixtureSampler<N> {
    pub fn new(frozen: &FrozenSum<'_, N>) -> Self {
        let proposal = frozen.proposal();
        let max = proposal.iter().fold(f64::NEG_INFINITY, |m, (lw, _)| m.max(*lw));
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(proposal.len());
        for (lw, _) in &proposal {
            acc += (lw - max).exp();
            cumulative.push(acc);
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        MixtureSampler {
            sum: OwnedSum {
                slots: frozen.slots.clone(),
                terms: frozen.terms.to_vec(),
            },
            cumulative,
            components: proposal.into_iter().map(|(_, c)| c).collect(),
            ln_envelope: (frozen.terms.len() as f64).ln(),
        }
    }

    /// Expected number of proposals per accepted draw is about `K`.
    pub fn envelope(&self) -> f64 {
        self.ln_envelope.exp()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; N] {
        let frozen = self.sum.frozen();
        loop {
            let u: f64 = rng.gen();
            let k = self
                .cumulative
                .partition_point(|&c| c < u)
                .min(self.components.len() - 1);
            let mut x = [0.0; N];
            for (s, (mean, sd)) in self.components[k].iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                x[s] = mean + sd * z;
            }
            let (ln_incoherent, ln_density) = frozen.log_incoherent_and_coherent(&x);
            let ln_accept = ln_density - ln_incoherent - self.ln_envelope;
            let v: f64 = rng.gen();
            if v.ln() < ln_accept {
                return x;
            }
        }
    }
}

/// Position sampler for a pair state at `t0`.
pub fn position_sampler(state: &TwoParticleState) -> MixtureSampler<4> {
    MixtureSampler::new(&state.at_time(state.t0))
}

/// Momentum sampler for a pair state at `t0`.
pub fn momentum_sampler(state: &TwoParticleState) -> MixtureSampler<4> {
    let m = state.momentum_representation();
    MixtureSampler::new(&m.sum.frozen())
}

pub fn sample_position(sampler: &MixtureSampler<4>, seed: u64, event_id: u64) -> ConfigPoint {
    let mut rng = event_rng(seed, DOMAIN_POSITION, event_id);
    ConfigPoint::from_slots(sampler.draw(&mut rng))
}

/// `n` draws from `|Ψ_{t0}|²`, event ids `0..n`.
pub fn sample_positions(state: &TwoParticleState, n: usize, seed: u64) -> Vec<ConfigPoint> {
    let sampler = position_sampler(state);
    (0..n as u64)
        .map(|id| sample_position(&sampler, seed, id))
        .collect()
}

pub fn sample_phase_point(
    positions: &MixtureSampler<4>,
    momenta: &MixtureSampler<4>,
    seed: u64,
    event_id: u64,
) -> PhasePoint {
    let r = sample_position(positions, seed, event_id);
    let mut rng = event_rng(seed, DOMAIN_MOMENTUM, event_id);
    let p = momenta.draw(&mut rng);
    PhasePoint {
        r1: r.r1,
        r2: r.r2,
        p1: [p[0], p[1]],
        p2: [p[2], p[3]],
    }
}

/// `n` points of the product density `|Ψ_{t0}|² |Ψ̃_{t0}|²`, positions and
/// momenta drawn independently.
pub fn sample_phase_points(state: &TwoParticleState, n: usize, seed: u64) -> Vec<PhasePoint> {
    if n == 0 {
        return Vec::new();
    }
    let positions = position_sampler(state);
    let momenta = momentum_sampler(state);
    (0..n as u64)
        .map(|id| sample_phase_point(&positions, &momenta, seed, id))
        .collect()
}
