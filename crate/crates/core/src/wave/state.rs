use num_complex::Complex64 as C64;
use serde::Serialize;

use super::gaussian::GaussianParams;
use super::quad::log_add;
use super::sum::{FrozenSum, OwnedSum, ProductSum, Term};
use crate::config::Setup;
use crate::error::{Error, Result};

/// Slot order of a pair configuration: `[x1, y1, x2, y2]`.
pub type Config4 = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Particle {
    One,
    Two,
}

impl Particle {
    pub fn index(self) -> usize {
        match self {
            Particle::One => 0,
            Particle::Two => 1,
        }
    }
    pub fn other(self) -> Particle {
        match self {
            Particle::One => Particle::Two,
            Particle::Two => Particle::One,
        }
    }
    pub fn from_index(i: usize) -> Particle {
        if i == 0 {
            Particle::One
        } else {
            Particle::Two
        }
    }
}

/// Relative threshold on `|Ψ|²` (against its running maximum along a
/// trajectory) below which the integrator treats a point as near a node.
pub const EPS_NODE: f64 = 1e-24;

/// Velocities `(ħ/m) Im ∇ ln Ψ` at a pair configuration.
#[derive(Clone, Copy, Debug)]
pub struct PairVelocity {
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    /// `ln |Ψ|²`
    pub log_density: f64,
}

impl PairVelocity {
    pub fn near_node(&self, running_max_log_density: f64) -> bool {
        !(self.log_density.is_finite()
            && self.log_density >= running_max_log_density + EPS_NODE.ln())
    }
}

/// One product term of the pair state with its four packets
/// (particle-1 x, particle-1 y, particle-2 x, particle-2 y).
#[derive(Clone, Copy, Debug)]
pub struct PacketTerm {
    pub coefficient: C64,
    pub factors: [GaussianParams; 4],
}

/// The entangled two-particle state
/// `N [ (1-η)/2 Ψ^(×) + (1+η)/2 Ψ^(||) ]`, symmetrized under 1 ↔ 2.
#[derive(Clone, Debug)]
pub struct TwoParticleState {
    sum: ProductSum<4>,
    pub eta: f64,
    /// the normalization constant N
    pub norm_constant: f64,
    pub mass: f64,
    pub hbar: f64,
    pub t0: f64,
}

impl TwoParticleState {
    /// The double-double-slit state of the setup. Gravity acts along -y.
    pub fn double_double_slit(s: &Setup) -> Self {
        let m = s.mass;
        let x_plus = GaussianParams::new(s.sigma_x, s.l_x, s.u_x, 0.0, m);
        let x_minus = GaussianParams::new(s.sigma_x, -s.l_x, -s.u_x, 0.0, m);
        let up = GaussianParams::new(s.sigma_y, s.l_y, s.u_y, -s.g, m);
        let down = GaussianParams::new(s.sigma_y, -s.l_y, -s.u_y, -s.g, m);
        let gu_p = (x_plus, up);
        let gd_p = (x_plus, down);
        let gu_m = (x_minus, up);
        let gd_m = (x_minus, down);
        let cross = 0.5 * (1.0 - s.eta);
        let parallel = 0.5 * (1.0 + s.eta);
        // (g(r1), g(r2)) pairs of each bracket, before 1 <-> 2
        let brackets = [
            (cross, gu_p, gd_m),
            (cross, gd_p, gu_m),
            (parallel, gu_p, gu_m),
            (parallel, gd_p, gd_m),
        ];
        let mut terms = Vec::with_capacity(8);
        for (w, a, b) in brackets {
            terms.push((w, [a.0, a.1, b.0, b.1]));
            terms.push((w, [b.0, b.1, a.0, a.1]));
        }
        Self::from_weighted_terms(&terms, s.eta, m, s.hbar)
    }

    /// A normalized superposition of the given product terms. Terms with zero
    /// weight are dropped.
    pub fn from_weighted_terms(
        terms: &[(f64, [GaussianParams; 4])],
        eta: f64,
        mass: f64,
        hbar: f64,
    ) -> Self {
        let logs: Vec<(C64, [GaussianParams; 4])> = terms
            .iter()
            .filter(|(w, _)| *w != 0.0)
            .map(|(w, f)| (C64::from(*w).ln(), *f))
            .collect();
        let mut sum = ProductSum::from_terms(&logs);
        let ln = sum.normalize(hbar);
        TwoParticleState {
            sum,
            eta,
            norm_constant: (-0.5 * ln).exp(),
            mass,
            hbar,
            t0: 0.0,
        }
    }

    /// A single product term, e.g. for free-fall limits.
    pub fn product(factors: [GaussianParams; 4], hbar: f64) -> Self {
        Self::from_weighted_terms(&[(1.0, factors)], 0.0, factors[0].m, hbar)
    }

    pub fn sum(&self) -> &ProductSum<4> {
        &self.sum
    }

    pub fn terms(&self) -> Vec<PacketTerm> {
        self.sum
            .terms()
            .iter()
            .map(|t| PacketTerm {
                coefficient: t.log_coeff.exp(),
                factors: std::array::from_fn(|s| *self.sum.packet(s, t.modes[s])),
            })
            .collect()
    }

    pub fn at_time(&self, t: f64) -> FrozenSum<'_, 4> {
        self.sum.at_time(t, self.hbar)
    }

    pub fn log_value(&self, r1: [f64; 2], r2: [f64; 2], t: f64) -> C64 {
        self.at_time(t).log_value(&[r1[0], r1[1], r2[0], r2[1]])
    }

    /// `Ψ_t(r1, r2)`.
    pub fn evaluate(&self, r1: [f64; 2], r2: [f64; 2], t: f64) -> C64 {
        self.log_value(r1, r2, t).exp()
    }

    pub fn velocity_at(&self, frozen: &FrozenSum<'_, 4>, x: &Config4) -> PairVelocity {
        let lg = frozen.log_value_grad(x);
        let k = self.hbar / self.mass;
        PairVelocity {
            v1: [k * lg.grad[0].im, k * lg.grad[1].im],
            v2: [k * lg.grad[2].im, k * lg.grad[3].im],
            log_density: 2.0 * lg.log_psi.re,
        }
    }

    /// Bohmian velocity field from the analytic gradient.
    pub fn velocity_field(&self, r1: [f64; 2], r2: [f64; 2], t: f64) -> PairVelocity {
        let frozen = self.at_time(t);
        self.velocity_at(&frozen, &[r1[0], r1[1], r2[0], r2[1]])
    }

    /// Conditional wave function of the undetected particle after `detected`
    /// is found at `r` at time `t_c`, renormalized.
    pub fn collapse(&self, detected: Particle, r: [f64; 2], t_c: f64) -> Result<ConditionalState> {
        let frozen = self.at_time(t_c);
        let (dx, dy, sx, sy) = match detected {
            Particle::One => (0, 1, 2, 3),
            Particle::Two => (2, 3, 0, 1),
        };
        let mut out: Vec<(C64, [GaussianParams; 2])> = Vec::new();
        for t in self.sum.terms() {
            let lc = t.log_coeff
                + frozen.slots[dx][t.modes[dx] as usize].log_at(r[0])
                + frozen.slots[dy][t.modes[dy] as usize].log_at(r[1]);
            let factors = [*self.sum.packet(sx, t.modes[sx]), *self.sum.packet(sy, t.modes[sy])];
            match out.iter_mut().find(|(_, f)| *f == factors) {
                Some(entry) => entry.0 = log_add(entry.0, lc),
                None => out.push((lc, factors)),
            }
        }
        let max = out.iter().fold(f64::NEG_INFINITY, |m, (l, _)| m.max(l.re));
        if !(max >= 1e-300f64.ln()) {
            return Err(Error::DegenerateCollapse);
        }
        let mut sum = ProductSum::from_terms(&out);
        let ln = sum.log_norm_sq(self.hbar);
        if !ln.is_finite() {
            return Err(Error::DegenerateCollapse);
        }
        sum.scale_log(C64::from(-0.5 * ln));
        Ok(ConditionalState {
            sum,
            info: CollapseInfo {
                detected,
                position: r,
                t_c,
            },
            mass: self.mass,
            hbar: self.hbar,
        })
    }

    /// The closed-form momentum wave function `Ψ̃_{t0}(p1, p2)`.
    pub fn momentum_representation(&self) -> MomentumState {
        MomentumState {
            sum: self.at_time(self.t0).fourier(self.hbar),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CollapseInfo {
    pub detected: Particle,
    pub position: [f64; 2],
    pub t_c: f64,
}

/// One-particle state left behind by a detection: `Σ c_k X_k(x) Y_k(y)`,
/// evolving under the one-particle Schrödinger equation for `t ≥ t_c`.
#[derive(Clone, Debug)]
pub struct ConditionalState {
    sum: ProductSum<2>,
    pub info: CollapseInfo,
    pub mass: f64,
    pub hbar: f64,
}

impl ConditionalState {
    pub fn survivor(&self) -> Particle {
        self.info.detected.other()
    }

    pub fn sum(&self) -> &ProductSum<2> {
        &self.sum
    }

    pub fn at_time(&self, t: f64) -> FrozenSum<'_, 2> {
        self.sum.at_time(t, self.hbar)
    }

    pub fn evaluate(&self, r: [f64; 2], t: f64) -> C64 {
        self.at_time(t).value(&r)
    }

    pub fn log_norm_sq(&self) -> f64 {
        self.sum.log_norm_sq(self.hbar)
    }

    /// Velocity `(ħ/m) Im ∇ ln ψ` and `ln |ψ|²`.
    pub fn velocity(&self, frozen: &FrozenSum<'_, 2>, r: &[f64; 2]) -> ([f64; 2], f64) {
        let lg = frozen.log_value_grad(r);
        let k = self.hbar / self.mass;
        ([k * lg.grad[0].im, k * lg.grad[1].im], 2.0 * lg.log_psi.re)
    }

    pub fn terms(&self) -> &[Term<2>] {
        self.sum.terms()
    }
}

/// `Ψ̃_{t0}(p1, p2)` as a Gaussian superposition in momentum space.
#[derive(Clone, Debug)]
pub struct MomentumState {
    pub sum: OwnedSum<4>,
}

impl MomentumState {
    /// `|Ψ̃(p1, p2)|²`
    pub fn density(&self, p: &Config4) -> f64 {
        (2.0 * self.sum.frozen().log_value(p).re).exp()
    }

    pub fn marginal_density(&self, slot: usize, p: f64) -> f64 {
        self.sum.frozen().marginal_density(slot, p)
    }

    pub fn log_norm_sq(&self) -> f64 {
        self.sum.frozen().log_norm_sq()
    }
}
