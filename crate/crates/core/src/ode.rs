//! Dormand–Prince 5(4) with step-size control and continuous output.
//!
//! The right-hand side may refuse a stage (returning `None`), for instance
//! when a stage point lies next to a node of the wave function; the step is
//! then retried with a quarter of the size.

/// Tolerances and limits, in the units of the problem.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepError {
    /// The step size fell below `h_min`.
    StepTooSmall,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Clone, Copy, Debug)]
pub struct DenseStep<const D: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; D],
    pub y1: [f64; D],
    rcont: [[f64; D]; 4],
}

impl<const D: usize> DenseStep<D> {
    /// Fifth-order accurate interpolant for `t` in `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; D] {
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th1 = 1.0 - th;
        let [r2, r3, r4, r5] = &self.rcont;
        std::array::from_fn(|i| {
            self.y0[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])))
        })
    }
}

/// Adaptive integrator state; `k1` is reused across steps (first same as last).
#[derive(Clone, Debug)]
pub struct Dopri5<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    pub h: f64,
    k1: Option<[f64; D]>,
    tol: Tolerances,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    std::array::from_fn(|i| {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        y[i] + h * s
    })
}

impl<const D: usize> Dopri5<D> {
    pub fn new(t: f64, y: [f64; D], h: f64, tol: Tolerances) -> Self {
        Dopri5 {
            t,
            y,
            h: h.min(tol.h_max),
            k1: None,
            tol,
            accepted: 0,
            rejected: 0,
        }
    }

    fn stages<F>(&self, f: &mut F, k1: &[f64; D], h: f64) -> Option<([f64; D], [[f64; D]; 7])>
    where
        F: FnMut(f64, &[f64; D]) -> Option<[f64; D]>,
    {
        let (t, y) = (self.t, &self.y);
        let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
        let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = f(
            t + h,
            &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y1)?;
        Some((y1, [*k1, k2, k3, k4, k5, k6, k7]))
    }

    /// Advance by one accepted step, never past `t_end`.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64) -> Result<DenseStep<D>, StepError>
    where
        F: FnMut(f64, &[f64; D]) -> Option<[f64; D]>,
    {
        // a flagged start point leaves nothing to shrink
        let k1 = match self.k1 {
            Some(k) => k,
            None => f(self.t, &self.y).ok_or(StepError::StepTooSmall)?,
        };
        let mut h = self.h.min(self.tol.h_max).min(t_end - self.t);
        let mut last_rejected = false;
        loop {
            if h < self.tol.h_min && h < t_end - self.t {
                return Err(StepError::StepTooSmall);
            }
            let Some((y1, k)) = self.stages(f, &k1, h) else {
                self.rejected += 1;
                h *= 0.25;
                last_rejected = true;
                continue;
            };
            let mut err = 0.0;
            for i in 0..D {
                let e = h
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = self.tol.atol + self.tol.rtol * self.y[i].abs().max(y1[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / D as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                h *= 0.25;
                last_rejected = true;
                continue;
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 10.0);
            if err <= 1.0 {
                let ydiff: [f64; D] = std::array::from_fn(|i| y1[i] - self.y[i]);
                let bspl: [f64; D] = std::array::from_fn(|i| h * k[0][i] - ydiff[i]);
                let r4: [f64; D] = std::array::from_fn(|i| ydiff[i] - h * k[6][i] - bspl[i]);
                let r5: [f64; D] = std::array::from_fn(|i| {
                    h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                        + D7 * k[6][i])
                });
                let out = DenseStep {
                    t0: self.t,
                    t1: self.t + h,
                    y0: self.y,
                    y1,
                    rcont: [ydiff, bspl, r4, r5],
                };
                self.t = if h == t_end - self.t { t_end } else { self.t + h };
                self.y = y1;
                self.k1 = Some(k[6]);
                self.h = if last_rejected { h * fac.min(1.0) } else { h * fac };
                self.accepted += 1;
                return Ok(out);
            }
            self.rejected += 1;
            h *= fac.min(1.0);
            last_rejected = true;
        }
    }

    /// Restart from a new point (e.g. after a discontinuity of the field).
    pub fn reset(&mut self, t: f64, y: [f64; D]) {
        self.t = t;
        self.y = y;
        self.k1 = None;
    }
}

/// Locate a sign change of `g` on `[a, b]` (with `g(a) > 0 ≥ g(b)`) by
/// bisection until the bracket is below `tol`. Returns the right end.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    b
}
