//! Superpositions of products of one-dimensional Gaussians.
//!
//! A term is `coeff · f_{s,0}(x_0) · … · f_{s,N-1}(x_{N-1})`. Coefficients
//! are stored as complex logarithms and every reduction over terms is
//! shifted by the largest real part, because after long flights the terms
//! of a pair state differ by hundreds of orders of magnitude.

use arrayvec::ArrayVec;
use num_complex::Complex64 as C64;

use super::gaussian::GaussianParams;
use super::quad::{log_add, log_sum_exp, QuadExp};

/// Maximum number of distinct factors a single coordinate slot may hold.
pub const MAX_MODES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term<const N: usize> {
    /// ln of the complex coefficient
    pub log_coeff: C64,
    /// index into the slot's mode list, per slot
    pub modes: [u8; N],
}

/// Time-dependent product sum whose factors are Gaussian packets.
#[derive(Clone, Debug)]
pub struct ProductSum<const N: usize> {
    /// distinct packets
    packets: Vec<GaussianParams>,
    /// per slot, the packet index of each local mode
    slot_packets: [ArrayVec<u8, MAX_MODES>; N],
    terms: Vec<Term<N>>,
}

impl<const N: usize> ProductSum<N> {
    /// Build from terms given as (log coefficient, packet per slot); equal
    /// packets are shared and terms on the same factors are merged.
    pub fn from_terms(terms: &[(C64, [GaussianParams; N])]) -> Self {
        let mut packets: Vec<GaussianParams> = Vec::new();
        let mut slot_packets: [ArrayVec<u8, MAX_MODES>; N] = std::array::from_fn(|_| ArrayVec::new());
        let mut out: Vec<Term<N>> = Vec::new();
        for (lc, factors) in terms {
            let mut modes = [0u8; N];
            for (s, f) in factors.iter().enumerate() {
                let pi = match packets.iter().position(|p| p == f) {
                    Some(i) => i,
                    None => {
                        packets.push(*f);
                        packets.len() - 1
                    }
                } as u8;
                let local = match slot_packets[s].iter().position(|&q| q == pi) {
                    Some(i) => i,
                    None => {
                        slot_packets[s].push(pi);
                        slot_packets[s].len() - 1
                    }
                };
                modes[s] = local as u8;
            }
            match out.iter_mut().find(|t| t.modes == modes) {
                Some(t) => t.log_coeff = log_add(t.log_coeff, *lc),
                None => out.push(Term {
                    log_coeff: *lc,
                    modes,
                }),
            }
        }
        ProductSum {
            packets,
            slot_packets,
            terms: out,
        }
    }

    pub fn terms(&self) -> &[Term<N>] {
        &self.terms
    }

    pub fn packet(&self, slot: usize, mode: u8) -> &GaussianParams {
        &self.packets[self.slot_packets[slot][mode as usize] as usize]
    }

    pub fn slot_len(&self, slot: usize) -> usize {
        self.slot_packets[slot].len()
    }

    /// Expand every factor at time `t`.
    pub fn at_time(&self, t: f64, hbar: f64) -> FrozenSum<'_, N> {
        let mut evaluated: ArrayVec<QuadExp, { 4 * MAX_MODES }> = ArrayVec::new();
        for p in &self.packets {
            evaluated.push(p.at_time(t, hbar));
        }
        let slots = std::array::from_fn(|s| {
            self.slot_packets[s]
                .iter()
                .map(|&pi| evaluated[pi as usize])
                .collect()
        });
        FrozenSum {
            slots,
            terms: &self.terms,
        }
    }

    /// Add `delta` to every log coefficient.
    pub fn scale_log(&mut self, delta: C64) {
        for t in &mut self.terms {
            t.log_coeff += delta;
        }
    }

    /// `ln ||Σ||²`. Overlaps are time-independent because every factor in a
    /// slot evolves under the same one-dimensional Hamiltonian.
    pub fn log_norm_sq(&self, hbar: f64) -> f64 {
        self.at_time(0.0, hbar).log_norm_sq()
    }

    pub fn normalize(&mut self, hbar: f64) -> f64 {
        let ln = self.log_norm_sq(hbar);
        self.scale_log(C64::from(-0.5 * ln));
        ln
    }
}

/// A product sum with every factor evaluated at one instant.
#[derive(Clone, Debug)]
pub struct FrozenSum<'a, const N: usize> {
    pub slots: [ArrayVec<QuadExp, MAX_MODES>; N],
    pub terms: &'a [Term<N>],
}

/// `ln Ψ` and `∇ ln Ψ` at a point.
#[derive(Clone, Copy, Debug)]
pub struct LogGrad<const N: usize> {
    pub log_psi: C64,
    pub grad: [C64; N],
}

impl<'a, const N: usize> FrozenSum<'a, N> {
    fn term_log(&self, t: &Term<N>, table: &[[C64; MAX_MODES]; N]) -> C64 {
        let mut l = t.log_coeff;
        for s in 0..N {
            l += table[s][t.modes[s] as usize];
        }
        l
    }

    pub fn log_value(&self, x: &[f64; N]) -> C64 {
        let mut table = [[C64::new(0.0, 0.0); MAX_MODES]; N];
        for s in 0..N {
            for (j, q) in self.slots[s].iter().enumerate() {
                table[s][j] = q.log_at(x[s]);
            }
        }
        log_sum_exp(self.terms.iter().map(|t| self.term_log(t, &table)))
    }

    pub fn value(&self, x: &[f64; N]) -> C64 {
        self.log_value(x).exp()
    }

    /// Log amplitude together with the analytic gradient of `ln Ψ`.
    pub fn log_value_grad(&self, x: &[f64; N]) -> LogGrad<N> {
        let mut table = [[C64::new(0.0, 0.0); MAX_MODES]; N];
        let mut dtable = [[C64::new(0.0, 0.0); MAX_MODES]; N];
        for s in 0..N {
            for (j, q) in self.slots[s].iter().enumerate() {
                let (l, d) = q.log_and_dlog(x[s]);
                table[s][j] = l;
                dtable[s][j] = d;
            }
        }
        let mut logs: ArrayVec<C64, 64> = ArrayVec::new();
        let mut m = f64::NEG_INFINITY;
        for t in self.terms {
            let l = self.term_log(t, &table);
            m = m.max(l.re);
            logs.push(l);
        }
        let mut psi = C64::new(0.0, 0.0);
        let mut grad = [C64::new(0.0, 0.0); N];
        for (t, l) in self.terms.iter().zip(&logs) {
            let w = (l - m).exp();
            psi += w;
            for s in 0..N {
                grad[s] += w * dtable[s][t.modes[s] as usize];
            }
        }
        let inv = psi.inv();
        for g in &mut grad {
            *g *= inv;
        }
        LogGrad {
            log_psi: psi.ln() + m,
            grad,
        }
    }

    /// Per-slot matrices of `ln <f_j | f_k>`.
    fn overlap_tables(&self) -> [[[C64; MAX_MODES]; MAX_MODES]; N] {
        let mut ov = [[[C64::new(0.0, 0.0); MAX_MODES]; MAX_MODES]; N];
        for s in 0..N {
            for (j, fj) in self.slots[s].iter().enumerate() {
                for (k, fk) in self.slots[s].iter().enumerate() {
                    ov[s][j][k] = fj.log_overlap(fk);
                }
            }
        }
        ov
    }

    pub fn log_norm_sq(&self) -> f64 {
        let ov = self.overlap_tables();
        let pairs = self.terms.iter().flat_map(|tj| {
            let ov = &ov;
            self.terms.iter().map(move |tk| {
                let mut l = tj.log_coeff.conj() + tk.log_coeff;
                for s in 0..N {
                    l += ov[s][tj.modes[s] as usize][tk.modes[s] as usize];
                }
                l
            })
        });
        let v: Vec<C64> = pairs.collect();
        log_sum_exp(v.iter().copied()).re
    }

    /// Marginal density of coordinate `slot` at `x`, integrating out the rest.
    pub fn marginal_density(&self, slot: usize, x: f64) -> f64 {
        let ov = self.overlap_tables();
        let vals: ArrayVec<C64, MAX_MODES> = self.slots[slot].iter().map(|q| q.log_at(x)).collect();
        let mut logs = Vec::with_capacity(self.terms.len() * self.terms.len());
        for tj in self.terms {
            for tk in self.terms {
                let mut l = tj.log_coeff.conj() + tk.log_coeff;
                l += vals[tj.modes[slot] as usize].conj() + vals[tk.modes[slot] as usize];
                for s in (0..N).filter(|&s| s != slot) {
                    l += ov[s][tj.modes[s] as usize][tk.modes[s] as usize];
                }
                logs.push(l);
            }
        }
        let l = log_sum_exp(logs.iter().copied());
        l.exp().re
    }

    /// Fourier transform of every factor (coefficients are unchanged).
    pub fn fourier(&self, hbar: f64) -> OwnedSum<N> {
        OwnedSum {
            slots: std::array::from_fn(|s| self.slots[s].iter().map(|q| q.fourier(hbar)).collect()),
            terms: self.terms.to_vec(),
        }
    }

    /// Mixture proposal: per term, ln of its weight `|c|² Π ∫|f|²` and the
    /// per-slot mean/sd of its density.
    pub fn proposal(&self) -> Vec<(f64, [(f64, f64); N])> {
        self.terms
            .iter()
            .map(|t| {
                let mut lw = 2.0 * t.log_coeff.re;
                let mut comps = [(0.0, 0.0); N];
                for s in 0..N {
                    let q = &self.slots[s][t.modes[s] as usize];
                    lw += q.log_mass();
                    comps[s] = q.density_moments();
                }
                (lw, comps)
            })
            .collect()
    }

    /// `ln Σ_k |term_k(x)|²` and `ln |Ψ(x)|²`.
    pub fn log_incoherent_and_coherent(&self, x: &[f64; N]) -> (f64, f64) {
        let mut table = [[C64::new(0.0, 0.0); MAX_MODES]; N];
        for s in 0..N {
            for (j, q) in self.slots[s].iter().enumerate() {
                table[s][j] = q.log_at(x[s]);
            }
        }
        let logs: ArrayVec<C64, 64> = self.terms.iter().map(|t| self.term_log(t, &table)).collect();
        let m = logs.iter().fold(f64::NEG_INFINITY, |m, l| m.max(l.re));
        let inc: f64 = logs.iter().map(|l| (2.0 * (l.re - m)).exp()).sum();
        let coh = log_sum_exp(logs.iter().copied());
        (inc.ln() + 2.0 * m, 2.0 * coh.re)
    }
}

/// A frozen sum that owns its terms (momentum-space states).
#[derive(Clone, Debug)]
pub struct OwnedSum<const N: usize> {
    pub slots: [ArrayVec<QuadExp, MAX_MODES>; N],
    pub terms: Vec<Term<N>>,
}

impl<const N: usize> OwnedSum<N> {
    pub fn frozen(&self) -> FrozenSum<'_, N> {
        FrozenSum {
            slots: self.slots.clone(),
            terms: &self.terms,
        }
    }
}
