//! Directional harmonic-model pitch estimation.
//!
//! Each channel is pre-whitened with the noise AR model and converted to an
//! analytic signal. For every candidate fundamental on the grid, the complex
//! harmonic amplitudes shared by both ears are fitted by least squares and
//! the per-channel residual variances give the likelihood. The Gram matrix of
//! the harmonic basis depends only on the candidate, so its Cholesky factor
//! is computed once. Forward substitution against that factor yields the
//! residual of every model order in one pass.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linpred::ArModel;
use crate::signal::analytic_signal_of;

/// Upper clamp on the degree of voicing.
pub const MAX_VOICING: f64 = 0.95;
pub const DEFAULT_VOICING_THRESHOLD: f64 = 0.3;
pub const DEFAULT_F_MIN: f64 = 80.0;
pub const DEFAULT_F_MAX: f64 = 400.0;
pub const DEFAULT_F_STEP: f64 = 0.5;

/// Residuals below this fraction of the channel energy are treated as exact
/// fits.
const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchInfo {
    /// Fundamental in radians per sample.
    pub omega0: f64,
    pub period_samples: usize,
    /// Harmonic energy ratio in `[0, MAX_VOICING]`. Reported for unvoiced
    /// frames too, but `gain()` is zero there.
    pub voicing: f64,
    /// Number of harmonics; 0 marks an unvoiced frame.
    pub harmonic_order: usize,
}

impl PitchInfo {
    pub fn voiced(omega0: f64, voicing: f64, harmonic_order: usize) -> Self {
        Self {
            omega0,
            period_samples: period_of(omega0),
            voicing: voicing.clamp(0.0, MAX_VOICING),
            harmonic_order,
        }
    }

    pub fn unvoiced(omega0: f64, voicing: f64) -> Self {
        Self {
            harmonic_order: 0,
            ..Self::voiced(omega0, voicing, 0)
        }
    }

    pub fn is_voiced(&self) -> bool {
        self.harmonic_order > 0
    }

    /// Pitch-lag predictor gain `b(p)`.
    pub fn gain(&self) -> f64 {
        if self.is_voiced() {
            self.voicing
        } else {
            0.0
        }
    }

    pub fn f0_hz(&self, sample_rate: f64) -> f64 {
        self.omega0 * sample_rate / (2.0 * PI)
    }

    pub const CSV_HEADER: &'static str = "frame,f0_hz,period_samples,voicing,order";

    pub fn csv_line(&self, frame: usize, sample_rate: f64) -> String {
        format!(
            "{},{:.2},{},{:.4},{}",
            frame,
            self.f0_hz(sample_rate),
            self.period_samples,
            self.voicing,
            self.harmonic_order
        )
    }
}

fn period_of(omega0: f64) -> usize {
    ((2.0 * PI / omega0).round() as usize).max(1)
}

/// Candidate fundamentals `f_min, f_min + step, ..., f_max` in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub step: f64,
    pub sample_rate: f64,
}

impl PitchGrid {
    pub fn new(f_min: f64, f_max: f64, step: f64, sample_rate: f64) -> Self {
        Self {
            f_min,
            f_max,
            step,
            sample_rate,
        }
    }

    pub fn with_rate(sample_rate: f64) -> Self {
        Self::new(DEFAULT_F_MIN, DEFAULT_F_MAX, DEFAULT_F_STEP, sample_rate)
    }

    /// Candidate fundamentals in radians per sample.
    pub fn omegas(&self) -> Result<Vec<f64>> {
        let valid = self.f_min > 0.0
            && self.f_max >= self.f_min
            && self.step > 0.0
            && self.sample_rate > 0.0
            && self.f_max < self.sample_rate / 2.0;
        if !valid {
            return Err(Error::invalid(format!("empty or invalid pitch grid {self:?}")));
        }
        let n = ((self.f_max - self.f_min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|i| 2.0 * PI * (self.f_min + i as f64 * self.step) / self.sample_rate)
            .collect())
    }

    /// Largest integer period on the grid, `round(fs / f_min)`.
    pub fn max_period(&self) -> usize {
        (self.sample_rate / self.f_min).round() as usize
    }
}

/// Per-harmonic complex gains from the source to each ear.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DirectivityModel {
    /// Source in the nose direction: both ears see the same signal.
    #[default]
    Identity,
    /// Frequency-independent gains with pure delays (in samples), e.g. a
    /// spherical-head ITD approximation with optional head shadow.
    Delay {
        left_delay: f64,
        right_delay: f64,
        left_gain: f64,
        right_gain: f64,
    },
}

impl DirectivityModel {
    /// Right ear delayed by `itd` samples relative to the left.
    pub fn itd(itd: f64) -> Self {
        Self::Delay {
            left_delay: 0.0,
            right_delay: itd,
            left_gain: 1.0,
            right_gain: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    /// Gain of harmonic `l` (1-based) at `channel` (0 = left).
    pub fn gain(&self, channel: usize, omega0: f64, l: usize) -> Complex64 {
        match *self {
            Self::Identity => Complex64::new(1.0, 0.0),
            Self::Delay {
                left_delay,
                right_delay,
                left_gain,
                right_gain,
            } => {
                let (d, g) = if channel == 0 {
                    (left_delay, left_gain)
                } else {
                    (right_delay, right_gain)
                };
                Complex64::from_polar(g, -(l as f64) * omega0 * d)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Delay {
            left_delay,
            right_delay,
            left_gain,
            right_gain,
        } = *self
        {
            let ok = [left_delay, right_delay, left_gain, right_gain]
                .iter()
                .all(|v| v.is_finite())
                && left_gain > 0.0
                && right_gain > 0.0;
            if !ok {
                return Err(Error::invalid("directivity gains must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Zero padding factor for the frame-level Hilbert transform.
pub const ANALYTIC_PADDING: usize = 4;

/// Analytic signal of a real frame. The frame is zero-padded before the DFT
/// so the transform is not circular over the frame; without padding the
/// image of a low harmonic leaks into the positive band and biases the fit.
pub fn analytic_frame(x: &[f64]) -> Result<Vec<Complex64>> {
    let mut padded = x.to_vec();
    padded.resize(x.len() * ANALYTIC_PADDING, 0.0);
    let mut a = analytic_signal_of(&padded)?;
    a.truncate(x.len());
    Ok(a)
}

/// `z(n) - sum_i c_i z(n-i)`, using the tail of `history` for samples before
/// the frame (zeros where it is too short).
pub fn prewhiten(frame: &[f64], history: &[f64], noise: &ArModel) -> Vec<f64> {
    let c = noise.coefficients();
    let at = |idx: isize| -> f64 {
        if idx >= 0 {
            frame[idx as usize]
        } else {
            let back = (-idx) as usize;
            if back <= history.len() {
                history[history.len() - back]
            } else {
                0.0
            }
        }
    };
    (0..frame.len())
        .map(|n| {
            let mut v = frame[n];
            for (i, ci) in c.iter().enumerate() {
                v -= ci * at(n as isize - 1 - i as isize);
            }
            v
        })
        .collect()
}

/// `sum_{m<M} exp(i theta m)`.
fn dirichlet(theta: f64, m: usize) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let denom = one - Complex64::from_polar(1.0, theta);
    if denom.norm() < 1e-12 {
        Complex64::new(m as f64, 0.0)
    } else {
        (one - Complex64::from_polar(1.0, theta * m as f64)) / denom
    }
}

/// Harmonic basis `V` with `[V]_{m,l} = exp(i w0 l m)`, `l = 1..L`.
fn vandermonde(omega0: f64, order: usize, len: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(len, order, |m, l| {
        Complex64::from_polar(1.0, omega0 * (l + 1) as f64 * m as f64)
    })
}

/// `V^H z` for harmonics `1..=order`.
fn project(z: &[Complex64], omega0: f64, order: usize) -> Vec<Complex64> {
    let mut b = vec![Complex64::new(0.0, 0.0); order];
    for (m, &zm) in z.iter().enumerate() {
        let w = Complex64::from_polar(1.0, -omega0 * m as f64);
        let mut p = w;
        for bl in b.iter_mut() {
            *bl += p * zm;
            p *= w;
        }
    }
    b
}

/// Packed lower-triangular Cholesky factor, row-major. `order` may be
/// smaller than requested if a pivot collapsed.
#[derive(Debug, Clone)]
struct Cholesky {
    packed: Vec<Complex64>,
    order: usize,
}

impl Cholesky {
    fn factor(n: usize, entry: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut packed: Vec<Complex64> = Vec::with_capacity(n * (n + 1) / 2);
        let mut order = n;
        for i in 0..n {
            let row = packed.len();
            for j in 0..i {
                let rj = j * (j + 1) / 2;
                let mut s = entry(i, j);
                for k in 0..j {
                    s -= packed[row + k] * packed[rj + k].conj();
                }
                packed.push(s / packed[rj + j]);
            }
            let d = entry(i, i).re - packed[row..row + i].iter().map(|v| v.norm_sqr()).sum::<f64>();
            if !(d > 1e-9 * entry(i, i).re) {
                packed.truncate(row);
                order = i;
                break;
            }
            packed.push(Complex64::new(d.sqrt(), 0.0));
        }
        Self { packed, order }
    }

    fn row(&self, i: usize) -> &[Complex64] {
        let r = i * (i + 1) / 2;
        &self.packed[r..r + i + 1]
    }

    /// `L^{-1} b` over the leading `order` entries.
    fn forward(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut g = Vec::with_capacity(self.order);
        for i in 0..self.order {
            let row = self.row(i);
            let mut s = b[i];
            for k in 0..i {
                s -= row[k] * g[k];
            }
            g.push(s / row[i].re);
        }
        g
    }

    /// `L_n^{-H} beta` for the leading `n x n` block.
    fn backward(&self, beta: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut q = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = beta[i];
            for j in i + 1..n {
                s -= self.row(j)[i].conj() * q[j];
            }
            q[i] = s / self.row(i)[i].re;
        }
        q
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    omega0: f64,
    /// Factor of `V^H V`.
    gram: Cholesky,
    /// Factor of `sum_c D_c^H V^H V D_c` for a non-identity directivity.
    directional: Option<Cholesky>,
}

/// Scores for one grid candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub omega0: f64,
    /// MAP-selected number of harmonics.
    pub order: usize,
    /// `sum_ch ln sigma_ch^2` at the selected order.
    pub cost: f64,
    /// Penalized criterion used to rank candidates.
    pub criterion: f64,
    pub voicing: f64,
}

/// `2M sum_ch ln sigma_ch^2 + 3L ln(2M C)`: a BIC-style MAP order rule with
/// three real parameters per harmonic and `2MC` real observations.
pub fn map_criterion(sum_log_variance: f64, order: usize, frame_len: usize, channels: usize) -> f64 {
    let n = 2.0 * frame_len as f64;
    n * sum_log_variance + 3.0 * order as f64 * (n * channels as f64).ln()
}

/// Single-channel MAP order selection over residual variances for
/// `L = 1, 2, ...`. Returns the selected `L` (1-based).
pub fn map_order_select(residual_variances: &[f64], frame_len: usize) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, &v) in residual_variances.iter().enumerate() {
        let j = map_criterion(v.ln(), i + 1, frame_len, 1);
        if j < best.1 {
            best = (i + 1, j);
        }
    }
    best.0
}

/// `||V q||^2 / ||z||^2` clamped to `[0, MAX_VOICING]`; zero for a silent frame.
pub fn degree_of_voicing(frame: &[Complex64], omega0: f64, amplitudes: &[Complex64]) -> f64 {
    let energy: f64 = frame.iter().map(|v| v.norm_sqr()).sum();
    if energy == 0.0 {
        return 0.0;
    }
    let h = vandermonde(omega0, amplitudes.len(), frame.len())
        * DMatrix::from_column_slice(amplitudes.len(), 1, amplitudes);
    (h.iter().map(|v| v.norm_sqr()).sum::<f64>() / energy).clamp(0.0, MAX_VOICING)
}

/// Least-squares complex amplitudes shared by all channels,
/// `argmin_q sum_c ||z_c - V D_c q||^2`, via QR.
pub fn ml_amplitudes(
    channels: &[&[Complex64]],
    omega0: f64,
    order: usize,
    directivity: &DirectivityModel,
) -> Result<Vec<Complex64>> {
    if channels.is_empty() || order == 0 {
        return Err(Error::invalid("need at least one channel and one harmonic"));
    }
    let m = channels[0].len();
    if channels.iter().any(|c| c.len() != m) {
        return Err(Error::invalid("channel frames differ in length"));
    }
    if order > channels.len() * m || order as f64 * omega0 > 2.0 * PI * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "{order} harmonics of {omega0} rad alias or exceed the data"
        )));
    }
    directivity.validate()?;
    let v = vandermonde(omega0, order, m);
    let rows = m * channels.len();
    let mut h = DMatrix::<Complex64>::zeros(rows, order);
    let mut y = DMatrix::<Complex64>::zeros(rows, 1);
    for (c, z) in channels.iter().enumerate() {
        for l in 0..order {
            let g = directivity.gain(c, omega0, l + 1);
            for r in 0..m {
                h[(c * m + r, l)] = v[(r, l)] * g;
            }
        }
        for (r, &zr) in z.iter().enumerate() {
            y[(c * m + r, 0)] = zr;
        }
    }
    let qr = h.qr();
    let r = qr.r();
    let max_diag = (0..order).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if (0..order).any(|i| r[(i, i)].norm() <= 1e-10 * max_diag) {
        return Err(Error::invalid("harmonic basis is rank deficient"));
    }
    let qty = qr.q().adjoint() * y;
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::invalid("harmonic basis is rank deficient"))?;
    Ok(sol.column(0).iter().cloned().collect())
}

/// Grid-search pitch estimator with per-candidate factorizations cached.
#[derive(Debug, Clone)]
pub struct PitchEstimator {
    frame_len: usize,
    sample_rate: f64,
    directivity: DirectivityModel,
    pub voicing_threshold: f64,
    candidates: Vec<Candidate>,
}

impl PitchEstimator {
    pub fn new(frame_len: usize, grid: &PitchGrid, directivity: DirectivityModel) -> Result<Self> {
        if frame_len < 2 || frame_len % 2 != 0 {
            return Err(Error::invalid(format!("frame length {frame_len} must be even and >= 2")));
        }
        directivity.validate()?;
        let omegas = grid.omegas()?;
        let candidates = omegas
            .par_iter()
            .map(|&w| {
                let l_max = ((2.0 * PI / w) + 1e-9).floor() as usize;
                let l_max = l_max.min(frame_len).max(1);
                let g = |i: usize, j: usize| dirichlet(w * (j as f64 - i as f64), frame_len);
                let gram = Cholesky::factor(l_max, g);
                let directional = (!directivity.is_identity()).then(|| {
                    Cholesky::factor(l_max, |i, j| {
                        (0..2)
                            .map(|c| {
                                directivity.gain(c, w, i + 1).conj()
                                    * g(i, j)
                                    * directivity.gain(c, w, j + 1)
                            })
                            .sum()
                    })
                });
                Candidate {
                    omega0: w,
                    gram,
                    directional,
                }
            })
            .collect();
        Ok(Self {
            frame_len,
            sample_rate: grid.sample_rate,
            directivity,
            voicing_threshold: DEFAULT_VOICING_THRESHOLD,
            candidates,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn directivity(&self) -> DirectivityModel {
        self.directivity
    }

    /// Scores every grid candidate on analytic-signal frames.
    pub fn candidate_scores(&self, channels: &[&[Complex64]]) -> Result<Vec<CandidateScore>> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::invalid("pitch estimation takes one or two channels"));
        }
        if channels.iter().any(|c| c.len() != self.frame_len) {
            return Err(Error::invalid(format!(
                "pitch frames must have {} samples",
                self.frame_len
            )));
        }
        let energies: Vec<f64> = channels
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum())
            .collect();
        if energies.iter().any(|&e| e == 0.0) {
            return Err(Error::invalid("silent channel"));
        }
        let directional = channels.len() == 2 && !self.directivity.is_identity();
        Ok(self
            .candidates
            .par_iter()
            .map(|cand| {
                if directional {
                    self.score_directional(cand, channels, &energies)
                } else {
                    self.score_identity(cand, channels, &energies)
                }
            })
            .collect())
    }

    fn finish(
        &self,
        omega0: f64,
        channels: usize,
        energies: &[f64],
        residuals: impl Iterator<Item = (Vec<f64>, f64)>,
    ) -> CandidateScore {
        let total: f64 = energies.iter().sum();
        let m = self.frame_len as f64;
        let mut best = CandidateScore {
            omega0,
            order: 0,
            cost: f64::INFINITY,
            criterion: f64::INFINITY,
            voicing: 0.0,
        };
        for (l, (res, captured)) in residuals.enumerate() {
            let cost: f64 = res
                .iter()
                .zip(energies)
                .map(|(r, e)| (r.max(RESIDUAL_FLOOR * e) / m).ln())
                .sum();
            let crit = map_criterion(cost, l + 1, self.frame_len, channels);
            if crit < best.criterion {
                best = CandidateScore {
                    omega0,
                    order: l + 1,
                    cost,
                    criterion: crit,
                    voicing: (captured / total).clamp(0.0, MAX_VOICING),
                };
            }
        }
        best
    }

    fn score_identity(
        &self,
        cand: &Candidate,
        channels: &[&[Complex64]],
        energies: &[f64],
    ) -> CandidateScore {
        let n = cand.gram.order;
        let c = channels.len() as f64;
        let gammas: Vec<Vec<Complex64>> = channels
            .iter()
            .map(|z| cand.gram.forward(&project(z, cand.omega0, n)))
            .collect();
        let mean: Vec<Complex64> = (0..n)
            .map(|i| gammas.iter().map(|g| g[i]).sum::<Complex64>() / c)
            .collect();
        let mut cross = vec![0.0; channels.len()];
        let mut fit = 0.0;
        let steps = (0..n).map(move |l| {
            fit += mean[l].norm_sqr();
            for (x, g) in cross.iter_mut().zip(&gammas) {
                *x += (mean[l].conj() * g[l]).re;
            }
            let res = energies
                .iter()
                .zip(&cross)
                .map(|(e, x)| e - 2.0 * x + fit)
                .collect();
            (res, c * fit)
        });
        self.finish(cand.omega0, channels.len(), energies, steps)
    }

    fn score_directional(
        &self,
        cand: &Candidate,
        channels: &[&[Complex64]],
        energies: &[f64],
    ) -> CandidateScore {
        let chol = cand.directional.as_ref().expect("directional factor");
        let n = chol.order;
        let w = cand.omega0;
        let d = &self.directivity;
        let h: Vec<Vec<Complex64>> = channels
            .iter()
            .enumerate()
            .map(|(c, z)| {
                project(z, w, n)
                    .into_iter()
                    .enumerate()
                    .map(|(l, v)| d.gain(c, w, l + 1).conj() * v)
                    .collect()
            })
            .collect();
        let b: Vec<Complex64> = (0..n).map(|i| h[0][i] + h[1][i]).collect();
        let beta = chol.forward(&b);
        let gram = |i: usize, j: usize| dirichlet(w * (j as f64 - i as f64), self.frame_len);
        let mut fit = 0.0;
        let steps = (0..n).map(|l| {
            let order = l + 1;
            fit += beta[l].norm_sqr();
            let q = chol.backward(&beta, order);
            let res = (0..2)
                .map(|c| {
                    let dq: Vec<Complex64> =
                        (0..order).map(|k| d.gain(c, w, k + 1) * q[k]).collect();
                    let lin: Complex64 = q.iter().zip(&h[c]).map(|(a, b)| a.conj() * b).sum();
                    let mut quad = 0.0;
                    for i in 0..order {
                        let mut s = Complex64::new(0.0, 0.0);
                        for j in 0..order {
                            s += gram(i, j) * dq[j];
                        }
                        quad += (dq[i].conj() * s).re;
                    }
                    energies[c] - 2.0 * lin.re + quad
                })
                .collect();
            (res, fit)
        });
        self.finish(w, 2, energies, steps)
    }

    /// Best candidate by the penalized criterion, lowest `omega0` on ties.
    /// Unvoiced when the voicing falls below the threshold.
    pub fn estimate(&self, channels: &[&[Complex64]]) -> Result<PitchInfo> {
        let silent = channels
            .iter()
            .any(|c| c.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        if silent && channels.iter().all(|c| c.len() == self.frame_len) {
            return Ok(PitchInfo::unvoiced(self.candidates[0].omega0, 0.0));
        }
        let scores = self.candidate_scores(channels)?;
        let mut best = scores[0];
        for s in &scores[1..] {
            if s.criterion < best.criterion {
                best = *s;
            }
        }
        Ok(if best.voicing < self.voicing_threshold {
            PitchInfo::unvoiced(best.omega0, best.voicing)
        } else {
            PitchInfo::voiced(best.omega0, best.voicing, best.order)
        })
    }

    /// `estimate` on real (already pre-whitened) frames.
    pub fn estimate_real(&self, channels: &[&[f64]]) -> Result<PitchInfo> {
        let analytic = channels
            .iter()
            .map(|c| analytic_frame(c))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[Complex64]> = analytic.iter().map(|v| v.as_slice()).collect();
        self.estimate(&refs)
    }
}

/// One-shot two-channel estimate on pre-whitened real frames.
pub fn estimate_pitch(
    zl: &[f64],
    zr: &[f64],
    grid: &PitchGrid,
    directivity: DirectivityModel,
) -> Result<PitchInfo> {
    if zl.len() != zr.len() {
        return Err(Error::invalid("left and right frames differ in length"));
    }
    PitchEstimator::new(zl.len(), grid, directivity)?.estimate_real(&[zl, zr])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use rand::Rng;

    const FS: f64 = 8000.0;

    fn analytic(x: &[f64]) -> Vec<Complex64> {
        analytic_frame(x).unwrap()
    }

    #[test]
    fn grid_defaults() {
        let g = PitchGrid::with_rate(FS);
        let w = g.omegas().unwrap();
        assert_eq!(w.len(), 641);
        assert!((w[0] - 2.0 * PI * 80.0 / FS).abs() < 1e-15);
        assert!((w[640] - 2.0 * PI * 400.0 / FS).abs() < 1e-15);
        assert_eq!(g.max_period(), 100);
        assert!(PitchGrid::new(100.0, 90.0, 0.5, FS).omegas().is_err());
        assert!(PitchGrid::new(100.0, 200.0, 0.0, FS).omegas().is_err());
    }

    #[test]
    fn prewhiten_identity_and_history() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(prewhiten(&x, &[], &ArModel::white(3, 1.0)), x.to_vec());
        let m = ArModel::new(vec![0.5], 1.0).unwrap();
        assert_eq!(prewhiten(&x, &[4.0], &m), vec![-1.0, 1.5, 2.0]);
        assert_eq!(prewhiten(&x, &[], &m), vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn prewhiten_whitens_ar1() {
        let m = ArModel::new(vec![0.8], 1.0).unwrap();
        let mut rng = synth::rng(5);
        let x = synth::ar_process(&mut rng, &m, 8000, 200);
        let y = prewhiten(&x, &[], &m);
        let r = crate::signal::autocorrelation_of(&y, 1).unwrap();
        assert!((r[1] / r[0]).abs() < 0.05);
    }

    #[test]
    fn cholesky_prefix_matches_dense() {
        let w = 2.0 * PI * 133.0 / FS;
        let n = 12;
        let chol = Cholesky::factor(n, |i, j| dirichlet(w * (j as f64 - i as f64), 200));
        assert_eq!(chol.order, n);
        let v = vandermonde(w, n, 200);
        let g = v.adjoint() * &v;
        for i in 0..n {
            for j in 0..=i {
                let s: Complex64 = (0..=j).map(|k| chol.row(i)[k] * chol.row(j)[k].conj()).sum();
                assert!((s - g[(i, j)]).norm() < 1e-9, "{i} {j}");
            }
        }
    }

    #[test]
    fn amplitudes_noiseless_identity() {
        let w = 2.0 * PI * 150.0 / FS;
        let q = [
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.3, 0.2),
            Complex64::new(0.1, -0.7),
        ];
        let v = vandermonde(w, 3, 200) * DMatrix::from_column_slice(3, 1, &q);
        let z: Vec<Complex64> = v.iter().cloned().collect();
        let est = ml_amplitudes(&[&z, &z], w, 3, &DirectivityModel::Identity).unwrap();
        for (a, b) in est.iter().zip(&q) {
            assert!((a - b).norm() < 1e-8);
        }
        let zero = vec![Complex64::new(0.0, 0.0); 200];
        let est = ml_amplitudes(&[&zero, &zero], w, 3, &DirectivityModel::Identity).unwrap();
        assert!(est.iter().all(|a| a.norm() == 0.0));
        assert!(ml_amplitudes(&[&z], w, 200, &DirectivityModel::Identity).is_err());
    }

    #[test]
    fn amplitudes_with_itd() {
        // right ear delayed by 0.3 ms
        let d = DirectivityModel::itd(0.3e-3 * FS);
        let w = 2.0 * PI * 120.0 / FS;
        let q = [Complex64::new(0.8, -0.1), Complex64::new(0.2, 0.4)];
        let synth_ch = |c: usize| -> Vec<Complex64> {
            (0..200)
                .map(|m| {
                    (0..2)
                        .map(|l| {
                            d.gain(c, w, l + 1)
                                * q[l]
                                * Complex64::from_polar(1.0, w * (l + 1) as f64 * m as f64)
                        })
                        .sum()
                })
                .collect()
        };
        let (zl, zr) = (synth_ch(0), synth_ch(1));
        let est = ml_amplitudes(&[&zl, &zr], w, 2, &d).unwrap();
        for (a, b) in est.iter().zip(&q) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn order_selection_examples() {
        // residual flat beyond L = 2
        let r = [1.0, 0.1, 0.0999, 0.0998, 0.0997];
        assert_eq!(map_order_select(&r, 200), 2);
        // direct evaluation oracle
        let crit: Vec<f64> = r
            .iter()
            .enumerate()
            .map(|(i, v)| 400.0 * v.ln() + 3.0 * (i + 1) as f64 * 400f64.ln())
            .collect();
        let argmin = crit
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin + 1, 2);
    }

    #[test]
    fn noiseless_three_harmonics() {
        let w = 2.0 * PI * 100.0 / FS;
        let x = synth::harmonic_signal(1000, w, &[1.0, 0.6, 0.3], &[0.1, 1.0, -0.5]);
        let est = PitchEstimator::new(200, &PitchGrid::with_rate(FS), DirectivityModel::Identity)
            .unwrap();
        // exact complex harmonic sum
        let amps = [1.0, 0.6, 0.3];
        let phases = [0.1, 1.0, -0.5];
        let z: Vec<Complex64> = (0..200)
            .map(|n| {
                (0..3)
                    .map(|l| Complex64::from_polar(amps[l], (l + 1) as f64 * w * n as f64 + phases[l]))
                    .sum()
            })
            .collect();
        let p = est.estimate(&[&z, &z]).unwrap();
        assert_eq!(p.harmonic_order, 3);
        assert!((p.f0_hz(FS) - 100.0).abs() < 1e-9, "{p:?}");
        assert_eq!(p.period_samples, 80);
        assert_eq!(p.voicing, MAX_VOICING);
        // frame-only analytic signal: within one grid step
        let p = est.estimate_real(&[&x[400..600], &x[400..600]]).unwrap();
        assert_eq!(p.harmonic_order, 3);
        assert!((p.f0_hz(FS) - 100.0).abs() <= 0.5 + 1e-9, "{p:?}");
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let est = PitchEstimator::new(200, &PitchGrid::with_rate(FS), DirectivityModel::Identity)
            .unwrap();
        let mut rng = synth::rng(9);
        for _ in 0..10 {
            let l = synth::white_noise(&mut rng, 200, 1.0);
            let r = synth::white_noise(&mut rng, 200, 1.0);
            let p = est.estimate_real(&[&l, &r]).unwrap();
            assert!(p.voicing < 0.3, "{p:?}");
            assert!(!p.is_voiced());
            assert_eq!(p.gain(), 0.0);
        }
    }

    #[test]
    fn voicing_of_half_power_mixture() {
        let w = 2.0 * PI * 140.0 / FS;
        let mut rng = synth::rng(21);
        let mut acc = 0.0;
        for _ in 0..20 {
            let ph: f64 = rng.random_range(0.0..6.28);
            let h = synth::harmonic_signal(200, w, &[1.0], &[ph]);
            let n = synth::scale_to_snr(&h, &synth::white_noise(&mut rng, 200, 1.0), 0.0);
            let z = analytic(&synth::add(&h, &n));
            let q = ml_amplitudes(&[&z], w, 1, &DirectivityModel::Identity).unwrap();
            acc += degree_of_voicing(&z, w, &q);
        }
        assert!((acc / 20.0 - 0.5).abs() < 0.1, "{}", acc / 20.0);
        let zero = vec![Complex64::new(0.0, 0.0); 8];
        assert_eq!(degree_of_voicing(&zero, w, &[Complex64::new(1.0, 0.0)]), 0.0);
    }

    #[test]
    fn fast_path_matches_general_path() {
        // zero-delay unit-gain directivity takes the general path but equals identity
        let grid = PitchGrid::new(95.0, 105.0, 0.5, FS);
        let a = PitchEstimator::new(200, &grid, DirectivityModel::Identity).unwrap();
        let b = PitchEstimator::new(200, &grid, DirectivityModel::itd(0.0)).unwrap();
        let mut rng = synth::rng(3);
        let w = 2.0 * PI * 100.0 / FS;
        let h = synth::harmonic_signal(200, w, &[1.0, 0.5], &[0.0, 0.3]);
        let l = analytic(&synth::add(&h, &synth::white_noise(&mut rng, 200, 0.1)));
        let r = analytic(&synth::add(&h, &synth::white_noise(&mut rng, 200, 0.1)));
        let sa = a.candidate_scores(&[&l, &r]).unwrap();
        let sb = b.candidate_scores(&[&l, &r]).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.order, y.order);
            assert!((x.cost - y.cost).abs() < 1e-8, "{x:?} {y:?}");
            assert!((x.voicing - y.voicing).abs() < 1e-9);
        }
    }

    #[test]
    fn residuals_match_qr_oracle() {
        let grid = PitchGrid::new(150.0, 150.0, 0.5, FS);
        let est = PitchEstimator::new(200, &grid, DirectivityModel::Identity).unwrap();
        let mut rng = synth::rng(12);
        let l = analytic(&synth::white_noise(&mut rng, 200, 1.0));
        let r = analytic(&synth::white_noise(&mut rng, 200, 1.0));
        let s = est.candidate_scores(&[&l, &r]).unwrap()[0];
        let w = s.omega0;
        let q = ml_amplitudes(&[&l, &r], w, s.order, &DirectivityModel::Identity).unwrap();
        let v = vandermonde(w, s.order, 200) * DMatrix::from_column_slice(s.order, 1, &q);
        let cost: f64 = [&l, &r]
            .iter()
            .map(|z| {
                let res: f64 = z.iter().zip(v.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
                (res / 200.0).ln()
            })
            .sum();
        assert!((cost - s.cost).abs() < 1e-9);
    }

    #[test]
    fn phase_rotation_and_swap_invariance() {
        let grid = PitchGrid::new(80.0, 200.0, 0.5, FS);
        let est = PitchEstimator::new(200, &grid, DirectivityModel::Identity).unwrap();
        let mut rng = synth::rng(44);
        let w = 2.0 * PI * 123.0 / FS;
        let h = synth::harmonic_signal(200, w, &[1.0, 0.7, 0.2], &[0.0, 0.5, 1.0]);
        let l = analytic(&synth::add(&h, &synth::white_noise(&mut rng, 200, 0.3)));
        let r = analytic(&synth::add(&h, &synth::white_noise(&mut rng, 200, 0.3)));
        let rot = Complex64::from_polar(1.0, 0.77);
        let lr: Vec<Complex64> = l.iter().map(|v| v * rot).collect();
        let rr: Vec<Complex64> = r.iter().map(|v| v * rot).collect();
        let a = est.candidate_scores(&[&l, &r]).unwrap();
        let b = est.candidate_scores(&[&lr, &rr]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.cost - y.cost).abs() < 1e-9);
        }
        assert_eq!(
            est.estimate(&[&l, &r]).unwrap(),
            est.estimate(&[&r, &l]).unwrap()
        );
    }

    #[test]
    fn pitch_info_fields() {
        let p = PitchInfo::voiced(2.0 * PI * 100.0 / FS, 0.99, 3);
        assert_eq!(p.period_samples, 80);
        assert_eq!(p.voicing, MAX_VOICING);
        assert_eq!(p.csv_line(4, FS), "4,100.00,80,0.9500,3");
        let u = PitchInfo::unvoiced(p.omega0, 0.1);
        assert_eq!(u.gain(), 0.0);
    }
}
