//! One-dimensional complex Gaussians in log form.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// `f(x) = exp(a (x - center)^2 + b (x - center) + c)` with `Re a < 0`.
///
/// Every factor the simulator handles (time-evolved packets, their Fourier
/// transforms, conditional factors) has this shape, so products, overlaps and
/// transforms all reduce to Gaussian integrals in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadExp {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub center: f64,
}

impl QuadExp {
    #[inline]
    pub fn log_at(&self, x: f64) -> C64 {
        let d = x - self.center;
        (self.a * d + self.b) * d + self.c
    }

    /// d/dx of `log_at`.
    #[inline]
    pub fn dlog_at(&self, x: f64) -> C64 {
        let d = x - self.center;
        self.a * (2.0 * d) + self.b
    }

    #[inline]
    pub fn log_and_dlog(&self, x: f64) -> (C64, C64) {
        let d = x - self.center;
        let ad = self.a * d;
        ((ad + self.b) * d + self.c, ad * 2.0 + self.b)
    }

    pub fn value(&self, x: f64) -> C64 {
        self.log_at(x).exp()
    }

    /// Same function, expanded about another reference point.
    pub fn recentered(&self, center: f64) -> QuadExp {
        let s = center - self.center;
        QuadExp {
            a: self.a,
            b: self.a * (2.0 * s) + self.b,
            c: (self.a * s + self.b) * s + self.c,
            center,
        }
    }

    /// `ln ∫ conj(self) · other dx`.
    pub fn log_overlap(&self, other: &QuadExp) -> C64 {
        let o = other.recentered(self.center);
        let p = self.a.conj() + o.a;
        let q = self.b.conj() + o.b;
        let r = self.c.conj() + o.c;
        log_gaussian_integral(p, q, r)
    }

    /// `ln ∫ |f|^2 dx`.
    pub fn log_mass(&self) -> f64 {
        let ar = self.a.re;
        let br = self.b.re;
        // ∫ exp(2 ar d^2 + 2 br d + 2 cr)
        0.5 * (PI / (-2.0 * ar)).ln() + 2.0 * self.c.re - br * br / (2.0 * ar)
    }

    /// Mean and standard deviation of the normalized density `|f|^2`.
    pub fn density_moments(&self) -> (f64, f64) {
        let ar = self.a.re;
        let br = self.b.re;
        (self.center - br / (2.0 * ar), (-1.0 / (4.0 * ar)).sqrt())
    }

    /// Momentum-space factor `(2πħ)^{-1/2} ∫ e^{-ipx/ħ} f(x) dx`, expanded
    /// about the momentum `ħ Im b`.
    ///
    /// Expanding about the carrier momentum keeps the huge `b²/4a` pieces of a
    /// fast packet from cancelling in floating point.
    pub fn fourier(&self, hbar: f64) -> QuadExp {
        let a = self.a;
        let br = self.b.re;
        let i = C64::i();
        let p0 = hbar * self.b.im;
        let x0 = self.center;
        QuadExp {
            a: (a * (4.0 * hbar * hbar)).inv(),
            b: i * br / (a * (2.0 * hbar)) - i * (x0 / hbar),
            c: self.c - br * br / (a * 4.0) + 0.5 * (C64::from(PI) / (-a)).ln()
                - 0.5 * (2.0 * PI * hbar).ln()
                - i * (p0 * x0 / hbar),
            center: p0,
        }
    }
}

/// `ln ∫ exp(p d^2 + q d + r) dd` for `Re p < 0`.
#[inline]
pub fn log_gaussian_integral(p: C64, q: C64, r: C64) -> C64 {
    0.5 * (C64::from(PI) / (-p)).ln() + r - q * q / (p * 4.0)
}

/// `ln Σ exp(l_k)` for complex logs, shifted by the largest real part.
pub fn log_sum_exp<I: IntoIterator<Item = C64>>(logs: I) -> C64
where
    I::IntoIter: Clone,
{
    let it = logs.into_iter();
    let m = it.clone().fold(f64::NEG_INFINITY, |m, l| m.max(l.re));
    if m == f64::NEG_INFINITY {
        return C64::new(f64::NEG_INFINITY, 0.0);
    }
    let s: C64 = it.map(|l| (l - m).exp()).sum();
    s.ln() + m
}

/// `ln(exp(x) + exp(y))` for complex logs.
#[inline]
pub fn log_add(x: C64, y: C64) -> C64 {
    if x.re == f64::NEG_INFINITY {
        return y;
    }
    if y.re == f64::NEG_INFINITY {
        return x;
    }
    let (hi, lo) = if x.re >= y.re { (x, y) } else { (y, x) };
    hi + (C64::new(1.0, 0.0) + (lo - hi).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QuadExp {
        QuadExp {
            a: C64::new(-0.3, 0.7),
            b: C64::new(0.2, -1.1),
            c: C64::new(0.1, 0.4),
            center: 2.0,
        }
    }

    fn trapezoid<F: Fn(f64) -> C64>(f: F, lo: f64, hi: f64, n: usize) -> C64 {
        let h = (hi - lo) / n as f64;
        let mut s = (f(lo) + f(hi)) * 0.5;
        for k in 1..n {
            s += f(lo + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn recentering_preserves_values() {
        let f = sample();
        let g = f.recentered(-3.5);
        for &x in &[-4.0, 0.0, 1.3, 2.0, 5.5] {
            assert!((f.log_at(x) - g.log_at(x)).norm() < 1e-12);
            assert!((f.dlog_at(x) - g.dlog_at(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn overlap_matches_quadrature() {
        let f = sample();
        let g = QuadExp {
            a: C64::new(-0.5, -0.2),
            b: C64::new(-0.4, 2.0),
            c: C64::new(0.0, 0.0),
            center: 1.0,
        };
        let exact = f.log_overlap(&g).exp();
        let num = trapezoid(|x| f.value(x).conj() * g.value(x), -30.0, 30.0, 60_000);
        assert!((exact - num).norm() < 1e-9 * num.norm().max(1.0), "{exact} {num}");
        let mass = trapezoid(|x| C64::from(f.value(x).norm_sqr()), -30.0, 30.0, 60_000);
        assert!((f.log_mass().exp() - mass.re).abs() < 1e-9);
    }

    #[test]
    fn density_moments_match_quadrature() {
        let f = sample();
        let (mean, sd) = f.density_moments();
        let w = |x: f64| f.value(x).norm_sqr();
        let m0 = trapezoid(|x| C64::from(w(x)), -30.0, 30.0, 60_000).re;
        let m1 = trapezoid(|x| C64::from(x * w(x)), -30.0, 30.0, 60_000).re / m0;
        let m2 = trapezoid(|x| C64::from((x - m1).powi(2) * w(x)), -30.0, 30.0, 60_000).re / m0;
        assert!((mean - m1).abs() < 1e-9);
        assert!((sd - m2.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn fourier_matches_quadrature_and_parseval() {
        let hbar = 1.7;
        let f = sample();
        let ft = f.fourier(hbar);
        for &p in &[-3.0, -0.5, 0.0, 0.8, 2.5] {
            let num = trapezoid(
                |x| (C64::new(0.0, -p * x / hbar)).exp() * f.value(x),
                -30.0,
                30.0,
                120_000,
            ) / (2.0 * PI * hbar).sqrt();
            assert!((ft.value(p) - num).norm() < 1e-8, "p={p}: {} vs {num}", ft.value(p));
        }
        assert!((ft.log_mass() - f.log_mass()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_helpers() {
        let xs = [C64::new(-1000.0, 0.3), C64::new(-1001.0, -2.0), C64::new(-999.5, 1.0)];
        let direct: C64 = xs.iter().map(|l| (l + 999.0).exp()).sum::<C64>().ln() - 999.0;
        let got = log_sum_exp(xs.iter().copied());
        assert!((got - direct).norm() < 1e-12);
        let pair = log_add(xs[0], xs[1]);
        let direct2 = ((xs[0] + 1000.0).exp() + (xs[1] + 1000.0).exp()).ln() - 1000.0;
        assert!((pair - direct2).norm() < 1e-12);
        let empty: [C64; 0] = [];
        assert_eq!(log_sum_exp(empty).re, f64::NEG_INFINITY);
    }
}
