use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::quad::QuadExp;

/// A one-dimensional Gaussian packet under a uniform force `mass * accel`.
///
/// All quantities are in internal units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianParams {
    pub sigma: f64,
    /// initial centre
    pub l: f64,
    /// initial group velocity
    pub u: f64,
    /// signed acceleration along this axis
    pub a: f64,
    pub m: f64,
}

impl GaussianParams {
    pub fn new(sigma: f64, l: f64, u: f64, a: f64, m: f64) -> Self {
        debug_assert!(sigma > 0.0 && m > 0.0);
        GaussianParams { sigma, l, u, a, m }
    }

    /// Complex width `s_t = σ (1 + i ħ t / 2 m σ²)`.
    pub fn s_t(&self, t: f64, hbar: f64) -> C64 {
        C64::new(self.sigma, hbar * t / (2.0 * self.m * self.sigma))
    }

    /// Classical centre at time `t`.
    pub fn center(&self, t: f64) -> f64 {
        self.l + self.u * t + 0.5 * self.a * t * t
    }

    /// The packet at time `t` (measured from the slit exit) as a [`QuadExp`]
    /// expanded about its moving centre:
    ///
    /// `G_t(x) = (2π s_t²)^{-1/4} e^{i m a l t/ħ} e^{-(x - l - ut - at²/2)² / 4σ s_t}
    ///           × e^{i (m/ħ) [(u + a t)(x - l - ut/2) - a² t³/6]}`
    ///
    /// which solves `iħ ∂_t G = -ħ²/2m ∂²_x G - m a x G` exactly.
    pub fn at_time(&self, t: f64, hbar: f64) -> QuadExp {
        let s = self.s_t(t, hbar);
        let k = self.m / hbar;
        let v = self.u + self.a * t;
        let center = self.center(t);
        // x - l - ut/2 at the centre
        let offset = 0.5 * self.u * t + 0.5 * self.a * t * t;
        let phase = k * (self.a * self.l * t + v * offset - self.a * self.a * t * t * t / 6.0);
        let a = -(s * (4.0 * self.sigma)).inv();
        let c = C64::new(-0.25 * (2.0 * PI).ln(), phase) - 0.5 * s.ln();
        QuadExp {
            a,
            b: C64::new(0.0, k * v),
            c,
            center,
        }
    }
}

/// `G_t(x; σ, l, u, a)` for one packet.
pub fn gaussian_t(p: &GaussianParams, x: f64, t: f64, hbar: f64) -> C64 {
    p.at_time(t, hbar).value(x)
}
