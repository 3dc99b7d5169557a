//! Codebook-driven MMSE estimation of speech and noise AR parameters.
//!
//! For every speech/noise codebook pair the excitation variances are fitted
//! by multiplicative updates that minimize the summed Itakura-Saito
//! divergence between the observed periodograms and the modeled spectrum
//! `sd2 * P_s(k) + sv2 * P_w(k)`. Each pair is weighted by its likelihood
//! `exp(-(M/2) * sum_ch d_IS)` times the variance priors, and the estimate is
//! the weighted mean of all pair solutions. AR shapes are averaged as LSF
//! vectors so the averaged model stays stable.

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::linpred::{ar_envelope, ar_to_lsf, levinson_durbin, lsf_to_ar, ArModel, LsfVector};
use crate::signal::Spectrum;

/// Observed bins below this fraction of the maximum are raised to it.
pub const OBSERVED_FLOOR: f64 = 1e-12;
pub const DEFAULT_MU_ITERATIONS: usize = 50;
pub const DEFAULT_MU_TOLERANCE: f64 = 1e-6;
pub const DUAL_CHANNEL_SMOOTHING: f64 = 0.9;
pub const DUAL_CHANNEL_FLOOR: f64 = 0.01;

/// Joint speech and noise parameters for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StpEstimate {
    pub speech: ArModel,
    pub noise: ArModel,
    pub frame_index: usize,
}

/// `sd2 * P_s(k) + sv2 * P_w(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeledSpectrum {
    bins: Vec<f64>,
}

impl ModeledSpectrum {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::invalid("modeled spectrum bins must be positive"));
        }
        Ok(Self { bins })
    }

    pub fn from_envelopes(
        speech_env: &[f64],
        noise_env: &[f64],
        speech_variance: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        Self::new(
            speech_env
                .iter()
                .zip(noise_env)
                .map(|(s, w)| speech_variance * s + noise_variance * w)
                .collect(),
        )
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }
}

/// Observed spectrum with near-zero bins floored relative to its maximum.
fn floored(observed: &[f64]) -> Vec<f64> {
    let max = observed.iter().cloned().fold(0.0, f64::max);
    let floor = max * OBSERVED_FLOOR;
    observed.iter().map(|&p| p.max(floor)).collect()
}

fn is_sum(observed: &[f64], modeled: &[f64]) -> f64 {
    observed
        .iter()
        .zip(modeled)
        .map(|(p, m)| {
            let r = p / m;
            r - r.ln() - 1.0
        })
        .sum::<f64>()
        / observed.len() as f64
}

/// Itakura-Saito divergence `(1/K) sum_k [P/Ph - ln(P/Ph) - 1]`.
pub fn is_divergence(observed: &Spectrum, modeled: &ModeledSpectrum) -> Result<f64> {
    if observed.len() != modeled.bins.len() {
        return Err(Error::invalid(format!(
            "spectrum lengths differ ({} vs {})",
            observed.len(),
            modeled.bins.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if observed.total() == 0.0 {
        return Err(Error::invalid("observed spectrum is all zero"));
    }
    Ok(is_sum(&floored(observed.bins()), &modeled.bins))
}

/// Stopping rule for the multiplicative updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSchedule {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease falls below this.
    pub tolerance: f64,
}

impl Default for MuSchedule {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MU_ITERATIONS,
            tolerance: DEFAULT_MU_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFit {
    pub speech_variance: f64,
    pub noise_variance: f64,
    /// `sum_ch d_IS(P_ch, modeled)` at the returned variances.
    pub cost: f64,
    pub iterations: usize,
    /// Cost before the first update and after each one.
    pub cost_trace: Vec<f64>,
}

/// Default starting point: both variances at the mean per-channel power.
pub fn default_init(observations: &[&[f64]]) -> f64 {
    let k = observations[0].len() as f64;
    observations.iter().map(|o| o.iter().sum::<f64>()).sum::<f64>()
        / (k * observations.len() as f64)
}

/// Multiplicative-update ML fit of the two excitation variances against
/// one or more observed channel spectra.
pub fn fit_variances(
    observations: &[&[f64]],
    speech_env: &[f64],
    noise_env: &[f64],
    init: Option<(f64, f64)>,
    schedule: MuSchedule,
) -> Result<VarianceFit> {
    let k = speech_env.len();
    if observations.is_empty() || observations.iter().any(|o| o.len() != k) || noise_env.len() != k
    {
        return Err(Error::invalid("spectrum and envelope lengths differ"));
    }
    if speech_env
        .iter()
        .chain(noise_env)
        .any(|b| !(b.is_finite() && *b > 0.0))
    {
        return Err(Error::invalid("envelope bins must be positive"));
    }
    let channels = observations.len() as f64;
    let obs: Vec<Vec<f64>> = observations.iter().map(|o| floored(o)).collect();
    let pooled: Vec<f64> = (0..k).map(|i| obs.iter().map(|o| o[i]).sum()).collect();
    if pooled.iter().all(|&p| p == 0.0) {
        return Ok(VarianceFit {
            speech_variance: 0.0,
            noise_variance: 0.0,
            cost: 0.0,
            iterations: 0,
            cost_trace: vec![0.0],
        });
    }
    let (mut sd, mut sv) = match init {
        Some((a, b)) if a > 0.0 && b > 0.0 => (a, b),
        Some(_) => return Err(Error::invalid("initial variances must be positive")),
        None => {
            let v = default_init(observations);
            (v, v)
        }
    };
    let cost_of = |sd: f64, sv: f64| -> f64 {
        let modeled: Vec<f64> = speech_env
            .iter()
            .zip(noise_env)
            .map(|(s, w)| sd * s + sv * w)
            .collect();
        obs.iter().map(|o| is_sum(o, &modeled)).sum()
    };
    let mut cost = cost_of(sd, sv);
    let mut trace = vec![cost];
    let mut iterations = 0;
    for _ in 0..schedule.max_iterations {
        let (mut num_s, mut den_s, mut num_w, mut den_w) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..k {
            let m = sd * speech_env[i] + sv * noise_env[i];
            let inv = 1.0 / m;
            let ratio = pooled[i] * inv * inv;
            num_s += speech_env[i] * ratio;
            den_s += speech_env[i] * inv;
            num_w += noise_env[i] * ratio;
            den_w += noise_env[i] * inv;
        }
        sd *= num_s / (channels * den_s);
        sv *= num_w / (channels * den_w);
        iterations += 1;
        let next = cost_of(sd, sv);
        trace.push(next);
        let change = (cost - next) / cost.abs().max(f64::MIN_POSITIVE);
        cost = next;
        if change < schedule.tolerance {
            break;
        }
    }
    Ok(VarianceFit {
        speech_variance: sd,
        noise_variance: sv,
        cost,
        iterations,
        cost_trace: trace,
    })
}

/// Binaural variance fit on `P_zl + P_zr`.
pub fn ml_excitation_variances(
    pzl: &Spectrum,
    pzr: &Spectrum,
    speech_env: &Spectrum,
    noise_env: &Spectrum,
    init: Option<(f64, f64)>,
    schedule: MuSchedule,
) -> Result<VarianceFit> {
    fit_variances(
        &[pzl.bins(), pzr.bins()],
        speech_env.bins(),
        noise_env.bins(),
        init,
        schedule,
    )
}

/// `-(M/2) * sum_ch d_IS(P_ch, modeled)`: the pair log-likelihood up to the
/// normalization constant that cancels across pairs.
pub fn pair_log_likelihood(
    observations: &[&Spectrum],
    modeled: &ModeledSpectrum,
    frame_len: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for o in observations {
        total += is_divergence(o, modeled)?;
    }
    Ok(-0.5 * frame_len as f64 * total)
}

/// Unnormalized binaural likelihood `exp(-(M/2)[d_IS(l) + d_IS(r)])`.
pub fn pair_likelihood(
    pzl: &Spectrum,
    pzr: &Spectrum,
    modeled: &ModeledSpectrum,
    frame_len: usize,
) -> Result<f64> {
    pair_log_likelihood(&[pzl, pzr], modeled, frame_len).map(f64::exp)
}

/// Normalizes log-weights with max subtraction. Returns `None` when no
/// weight is finite.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_weights
        .iter()
        .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    Some(w)
}

/// Gamma density with shape `kappa` and scale `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!(
                "gamma prior needs positive finite parameters (shape {shape}, scale {scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if self.shape < 1.0 {
                f64::INFINITY
            } else if self.shape == 1.0 {
                -self.scale.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        (self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub prior: GammaPrior,
    /// Set when the samples have (numerically) no spread, so the shape
    /// estimate diverges and was capped.
    pub degenerate: bool,
}

pub const MIN_GAMMA_SAMPLES: usize = 10;
const MAX_GAMMA_SHAPE: f64 = 1e8;

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Maximum-likelihood gamma fit by Newton iteration on
/// `ln k - digamma(k) = ln(mean) - mean(ln x)`.
pub fn fit_gamma_prior(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < MIN_GAMMA_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_GAMMA_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::invalid("gamma samples must be positive and finite"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_log = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if s < 1e-10 {
        return Ok(GammaFit {
            prior: GammaPrior::new(MAX_GAMMA_SHAPE, mean / MAX_GAMMA_SHAPE)?,
            degenerate: true,
        });
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let next = (k - f / df).max(k / 10.0);
        let done = (next - k).abs() <= 1e-13 * k;
        k = next;
        if done {
            break;
        }
    }
    let degenerate = k >= MAX_GAMMA_SHAPE;
    let k = k.min(MAX_GAMMA_SHAPE);
    Ok(GammaFit {
        prior: GammaPrior::new(k, mean / k)?,
        degenerate,
    })
}

/// Excitation-variance priors. The speech variance prior is uniform.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VariancePriors {
    pub noise: Option<GammaPrior>,
}

impl VariancePriors {
    fn ln_weight(&self, _speech_variance: f64, noise_variance: f64) -> f64 {
        self.noise.map_or(0.0, |p| p.ln_pdf(noise_variance))
    }
}

/// Per-frame bookkeeping from `estimate`.
#[derive(Debug, Clone, PartialEq)]
pub struct StpDiagnostics {
    pub frame: usize,
    pub best_speech: usize,
    pub best_noise: usize,
    /// Natural log of the normalized weight of the best pair.
    pub log_weight: f64,
    pub speech_variance: f64,
    pub noise_variance: f64,
    /// All weights underflowed and the max-log-weight pair was used alone.
    pub fallback: bool,
    /// Row-major `[speech][noise]` normalized weights.
    pub weights: Vec<f64>,
}

impl StpDiagnostics {
    pub const CSV_HEADER: &'static str = "frame,best_i,best_j,log_weight,sigma_d2,sigma_v2";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6e},{:.6e}",
            self.frame,
            self.best_speech,
            self.best_noise,
            self.log_weight,
            self.speech_variance,
            self.noise_variance
        )
    }
}

#[derive(Debug, Clone)]
struct Entry {
    lsf: LsfVector,
    envelope: Vec<f64>,
}

impl Entry {
    fn from_model(model: &ArModel, dft_len: usize) -> Result<Self> {
        Ok(Self {
            lsf: ar_to_lsf(model)?,
            envelope: ar_envelope(model, dft_len)?.into_bins(),
        })
    }

    fn from_lsf(lsf: &LsfVector, dft_len: usize) -> Result<Self> {
        let model = lsf_to_ar(lsf)?;
        Ok(Self {
            lsf: lsf.clone(),
            envelope: ar_envelope(&model, dft_len)?.into_bins(),
        })
    }
}

/// Per-pair ML solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSolution {
    pub speech_variance: f64,
    pub noise_variance: f64,
    pub log_likelihood: f64,
}

/// Codebook estimator with envelopes precomputed for one frame length.
#[derive(Debug, Clone)]
pub struct StpEstimator {
    speech: Vec<Entry>,
    noise: Vec<Entry>,
    frame_len: usize,
    pub schedule: MuSchedule,
    pub priors: VariancePriors,
}

impl StpEstimator {
    pub fn new(speech_cb: &Codebook, noise_cb: &Codebook, frame_len: usize) -> Result<Self> {
        if speech_cb.is_empty() || noise_cb.is_empty() {
            return Err(Error::invalid("codebooks must be non-empty"));
        }
        let build = |cb: &Codebook| {
            cb.entries()
                .iter()
                .map(|e| Entry::from_lsf(e, frame_len))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            speech: build(speech_cb)?,
            noise: build(noise_cb)?,
            frame_len,
            schedule: MuSchedule::default(),
            priors: VariancePriors::default(),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn speech_len(&self) -> usize {
        self.speech.len()
    }

    pub fn noise_len(&self) -> usize {
        self.noise.len()
    }

    /// ML variances and log-likelihood for every pair, row-major
    /// `[speech][noise]`, with `extra_noise` appended as a last noise entry.
    pub fn pair_solutions(
        &self,
        observations: &[&Spectrum],
        extra_noise: Option<&ArModel>,
    ) -> Result<Vec<PairSolution>> {
        let extra = extra_noise
            .map(|m| Entry::from_model(m, self.frame_len))
            .transpose()?;
        let noise: Vec<&Entry> = self.noise.iter().chain(extra.as_ref()).collect();
        let obs: Vec<&[f64]> = observations.iter().map(|s| s.bins()).collect();
        let pairs: Vec<(usize, usize)> = (0..self.speech.len())
            .flat_map(|i| (0..noise.len()).map(move |j| (i, j)))
            .collect();
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let fit = fit_variances(
                    &obs,
                    &self.speech[i].envelope,
                    &noise[j].envelope,
                    None,
                    self.schedule,
                )?;
                Ok(PairSolution {
                    speech_variance: fit.speech_variance,
                    noise_variance: fit.noise_variance,
                    log_likelihood: -0.5 * self.frame_len as f64 * fit.cost,
                })
            })
            .collect()
    }

    /// MMSE estimate over all codebook pairs.
    ///
    /// With `adaptive_noise`, the model is appended to the noise codebook for
    /// this frame and the final noise variance is the mean of the MMSE
    /// variance and the model's own variance.
    pub fn estimate(
        &self,
        observations: &[&Spectrum],
        adaptive_noise: Option<&ArModel>,
        frame_index: usize,
    ) -> Result<(StpEstimate, StpDiagnostics)> {
        if observations.is_empty() {
            return Err(Error::invalid("no observed spectra"));
        }
        for o in observations {
            if o.len() != self.frame_len {
                return Err(Error::invalid(format!(
                    "spectrum length {} does not match frame length {}",
                    o.len(),
                    self.frame_len
                )));
            }
        }
        let extra = adaptive_noise
            .map(|m| Entry::from_model(m, self.frame_len))
            .transpose()?;
        let noise: Vec<&Entry> = self.noise.iter().chain(extra.as_ref()).collect();
        let nw = noise.len();
        let solutions = self.pair_solutions(observations, adaptive_noise)?;

        let log_w: Vec<f64> = solutions
            .iter()
            .map(|s| {
                s.log_likelihood + self.priors.ln_weight(s.speech_variance, s.noise_variance)
            })
            .collect();
        let (weights, fallback) = match normalize_log_weights(&log_w) {
            Some(w) => (w, false),
            None => {
                let best = argmax(solutions.iter().map(|s| s.log_likelihood));
                let mut w = vec![0.0; solutions.len()];
                w[best] = 1.0;
                (w, true)
            }
        };
        let best = argmax(weights.iter().cloned());

        let p = self.speech[0].lsf.order();
        let q = noise[0].lsf.order();
        let mut speech_lsf = vec![0.0; p];
        let mut noise_lsf = vec![0.0; q];
        let (mut sd, mut sv) = (0.0, 0.0);
        for (idx, (w, s)) in weights.iter().zip(&solutions).enumerate() {
            if *w == 0.0 {
                continue;
            }
            let (i, j) = (idx / nw, idx % nw);
            for (acc, x) in speech_lsf.iter_mut().zip(self.speech[i].lsf.as_slice()) {
                *acc += w * x;
            }
            for (acc, x) in noise_lsf.iter_mut().zip(noise[j].lsf.as_slice()) {
                *acc += w * x;
            }
            sd += w * s.speech_variance;
            sv += w * s.noise_variance;
        }
        if let Some(m) = adaptive_noise {
            sv = 0.5 * (sv + m.excitation_variance());
        }
        let speech = lsf_to_ar(&LsfVector::new(speech_lsf)?)?.with_variance(sd);
        let noise_model = lsf_to_ar(&LsfVector::new(noise_lsf)?)?.with_variance(sv);
        let diag = StpDiagnostics {
            frame: frame_index,
            best_speech: best / nw,
            best_noise: best % nw,
            log_weight: weights[best].ln(),
            speech_variance: sd,
            noise_variance: sv,
            fallback,
            weights,
        };
        Ok((
            StpEstimate {
                speech,
                noise: noise_model,
                frame_index,
            },
            diag,
        ))
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Binaural estimate with optional gamma prior on the noise variance.
pub fn estimate_stp(
    pzl: &Spectrum,
    pzr: &Spectrum,
    speech_cb: &Codebook,
    noise_cb: &Codebook,
    noise_prior: Option<GammaPrior>,
) -> Result<StpEstimate> {
    if pzl.len() != pzr.len() {
        return Err(Error::invalid("left and right spectra differ in length"));
    }
    let mut est = StpEstimator::new(speech_cb, noise_cb, pzl.len())?;
    est.priors.noise = noise_prior;
    est.estimate(&[pzl, pzr], None, 0).map(|(e, _)| e)
}

/// Single-frame noise PSD from the magnitude of the cross spectrum:
/// `max(mean auto power - |cross|, floor * mean auto power)`.
pub fn dual_channel_noise_psd(
    pzl: &Spectrum,
    pzr: &Spectrum,
    cross: &[Complex64],
) -> Result<Spectrum> {
    if pzl.len() != pzr.len() || cross.len() != pzl.len() {
        return Err(Error::invalid("auto and cross spectra differ in length"));
    }
    Ok(Spectrum::from_raw(noise_from_cross(
        pzl.bins(),
        pzr.bins(),
        cross,
        DUAL_CHANNEL_FLOOR,
    )))
}

fn noise_from_cross(pl: &[f64], pr: &[f64], cross: &[Complex64], floor: f64) -> Vec<f64> {
    pl.iter()
        .zip(pr)
        .zip(cross)
        .map(|((l, r), c)| {
            let mean = 0.5 * (l + r);
            (mean - c.norm()).max(floor * mean)
        })
        .collect()
}

/// Recursively smoothed dual-channel noise PSD tracker. Auto and cross
/// spectra are averaged with factor `alpha` before the noise formula is
/// applied; the first frame initializes the averages.
#[derive(Debug, Clone)]
pub struct DualChannelNoiseTracker {
    pub alpha: f64,
    pub floor: f64,
    state: Option<(Vec<f64>, Vec<f64>, Vec<Complex64>)>,
}

impl Default for DualChannelNoiseTracker {
    fn default() -> Self {
        Self::new(DUAL_CHANNEL_SMOOTHING, DUAL_CHANNEL_FLOOR)
    }
}

impl DualChannelNoiseTracker {
    pub fn new(alpha: f64, floor: f64) -> Self {
        Self {
            alpha,
            floor,
            state: None,
        }
    }

    pub fn update(&mut self, pzl: &Spectrum, pzr: &Spectrum, cross: &[Complex64]) -> Result<Spectrum> {
        if pzl.len() != pzr.len() || cross.len() != pzl.len() {
            return Err(Error::invalid("auto and cross spectra differ in length"));
        }
        let a = self.alpha;
        let state = match self.state.take() {
            None => (pzl.bins().to_vec(), pzr.bins().to_vec(), cross.to_vec()),
            Some((mut l, mut r, mut c)) => {
                if l.len() != pzl.len() {
                    return Err(Error::invalid("spectrum length changed between frames"));
                }
                l.iter_mut().zip(pzl.bins()).for_each(|(s, x)| *s = a * *s + (1.0 - a) * x);
                r.iter_mut().zip(pzr.bins()).for_each(|(s, x)| *s = a * *s + (1.0 - a) * x);
                c.iter_mut().zip(cross).for_each(|(s, x)| *s = *s * a + x * (1.0 - a));
                (l, r, c)
            }
        };
        let out = noise_from_cross(&state.0, &state.1, &state.2, self.floor);
        self.state = Some(state);
        Ok(Spectrum::from_raw(out))
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Order-`Q` AR model of a noise PSD: autocorrelation by the inverse DFT,
/// then Levinson-Durbin.
pub fn noise_psd_to_ar(psd: &Spectrum, order: usize) -> Result<ArModel> {
    let k = psd.len();
    if k == 0 || psd.total() <= 0.0 {
        return Err(Error::invalid("noise PSD is empty or all zero"));
    }
    if order >= k {
        return Err(Error::invalid(format!("order {order} too high for {k} bins")));
    }
    let r: Vec<f64> = (0..=order)
        .map(|q| {
            psd.bins()
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let ang = 2.0 * std::f64::consts::PI * ((q * i) % k) as f64 / k as f64;
                    p * ang.cos()
                })
                .sum::<f64>()
                / k as f64
        })
        .collect();
    levinson_durbin(&r)
}

/// Log-likelihood over a grid of variance pairs for one fixed AR pair.
/// Rows are `(speech_variance, noise_variance, log_likelihood)`.
pub fn likelihood_surface(
    observations: &[&Spectrum],
    speech_env: &Spectrum,
    noise_env: &Spectrum,
    frame_len: usize,
    speech_grid: &[f64],
    noise_grid: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows = Vec::with_capacity(speech_grid.len() * noise_grid.len());
    for &sd in speech_grid {
        for &sv in noise_grid {
            let modeled =
                ModeledSpectrum::from_envelopes(speech_env.bins(), noise_env.bins(), sd, sv)?;
            rows.push((sd, sv, pair_log_likelihood(observations, &modeled, frame_len)?));
        }
    }
    Ok(rows)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookKind;
    use crate::synth;

    fn spec(v: Vec<f64>) -> Spectrum {
        Spectrum::new(v).unwrap()
    }

    #[test]
    fn divergence_basics() {
        let p = spec(vec![1.0, 2.0, 3.0]);
        let m = ModeledSpectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(is_divergence(&p, &m).unwrap(), 0.0);

        let p = spec(vec![2.0; 8]);
        let m = ModeledSpectrum::new(vec![1.0; 8]).unwrap();
        let expect = 2.0 - 2f64.ln() - 1.0;
        assert!((is_divergence(&p, &m).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.306853).abs() < 1e-6);

        let short = ModeledSpectrum::new(vec![1.0; 7]).unwrap();
        assert!(is_divergence(&p, &short).is_err());
    }

    #[test]
    fn divergence_matches_naive_sum() {
        let mut rng = synth::rng(4);
        use rand::Rng;
        for _ in 0..50 {
            let k = rng.random_range(4..300);
            let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..10.0)).collect();
            let q: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..10.0)).collect();
            let mut naive = 0.0;
            for i in 0..k {
                naive += p[i] / q[i] - (p[i] / q[i]).ln() - 1.0;
            }
            naive /= k as f64;
            let got = is_divergence(&spec(p), &ModeledSpectrum::new(q).unwrap()).unwrap();
            assert!((got - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_observation_drives_variances_to_zero() {
        let z = vec![0.0; 16];
        let env = vec![1.0; 16];
        let fit = fit_variances(&[&z, &z], &env, &env, Some((1.0, 1.0)), MuSchedule::default())
            .unwrap();
        assert_eq!(fit.speech_variance, 0.0);
        assert_eq!(fit.noise_variance, 0.0);
    }

    #[test]
    fn identical_envelopes_identify_only_the_sum() {
        let k = 64;
        let env: Vec<f64> = (0..k).map(|i| 1.0 + (i as f64 * 0.3).sin().abs()).collect();
        let mut rng = synth::rng(8);
        use rand::Rng;
        let obs: Vec<f64> = env.iter().map(|e| e * rng.random_range(0.5..1.5) * 2e-3).collect();
        let fit = fit_variances(
            &[&obs, &obs],
            &env,
            &env,
            Some((1e-3, 5e-3)),
            MuSchedule {
                max_iterations: 500,
                tolerance: 0.0,
            },
        )
        .unwrap();
        // 1-D oracle: IS minimizer of obs vs t*env is t = mean(obs/env)
        let t: f64 = obs.iter().zip(&env).map(|(o, e)| o / e).sum::<f64>() / k as f64;
        let sum = fit.speech_variance + fit.noise_variance;
        assert!((sum - t).abs() < 1e-9 * t);
        let oracle_cost = 2.0
            * obs
                .iter()
                .zip(&env)
                .map(|(o, e)| {
                    let r = o / (t * e);
                    r - r.ln() - 1.0
                })
                .sum::<f64>()
            / k as f64;
        assert!((fit.cost - oracle_cost).abs() < 1e-12);
        // ratio preserved by multiplicative updates with equal envelopes
        assert!((fit.noise_variance / fit.speech_variance - 5.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_variances_on_exact_spectra() {
        let s = ArModel::new(vec![1.3, -0.7], 1.0).unwrap();
        let w = ArModel::new(vec![-0.5], 1.0).unwrap();
        let ps = ar_envelope(&s, 200).unwrap().into_bins();
        let pw = ar_envelope(&w, 200).unwrap().into_bins();
        let obs: Vec<f64> = ps.iter().zip(&pw).map(|(a, b)| 1e-3 * a + 1e-3 * b).collect();
        let fit = fit_variances(
            &[&obs, &obs],
            &ps,
            &pw,
            None,
            MuSchedule {
                max_iterations: 200,
                tolerance: 0.0,
            },
        )
        .unwrap();
        assert!((fit.speech_variance / 1e-3 - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.noise_variance / 1e-3 - 1.0).abs() < 0.01, "{fit:?}");
        assert!(fit.cost_trace.windows(2).all(|c| c[1] <= c[0] + 1e-10));
    }

    #[test]
    fn non_positive_envelope_rejected() {
        let o = vec![1.0; 4];
        let bad = vec![1.0, 0.0, 1.0, 1.0];
        assert!(fit_variances(&[&o], &bad, &o, None, MuSchedule::default()).is_err());
    }

    #[test]
    fn likelihood_of_perfect_fit_is_one() {
        let p = spec(vec![0.5, 1.5, 2.0]);
        let m = ModeledSpectrum::new(vec![0.5, 1.5, 2.0]).unwrap();
        assert_eq!(pair_likelihood(&p, &p, &m, 200).unwrap(), 1.0);
        // doubling the divergence doubles the log-likelihood
        let m2 = ModeledSpectrum::new(vec![1.0, 1.0, 1.0]).unwrap();
        let one = pair_log_likelihood(&[&p], &m2, 200).unwrap();
        let two = pair_log_likelihood(&[&p, &p], &m2, 200).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one() {
        let w = normalize_log_weights(&[-1e4, -1e4 - 1.0, f64::NEG_INFINITY, -2e4]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_none());
    }

    #[test]
    fn single_pair_codebooks_return_pair_solution() {
        let s = ArModel::new(vec![0.9, -0.2], 1.0).unwrap();
        let w = ArModel::new(vec![0.3, 0.1], 1.0).unwrap();
        let scb = Codebook::from_models(CodebookKind::Speech, &[s]).unwrap();
        let ncb = Codebook::from_models(CodebookKind::Noise, &[w]).unwrap();
        let mut rng = synth::rng(1);
        let x: Vec<f64> = synth::white_noise(&mut rng, 200, 1e-3);
        let p = crate::signal::Dft::new(200).periodogram(&x);
        let est = StpEstimator::new(&scb, &ncb, 200).unwrap();
        let (e, d) = est.estimate(&[&p, &p], None, 3).unwrap();
        let sol = &est.pair_solutions(&[&p, &p], None).unwrap()[0];
        assert_eq!(e.speech.excitation_variance(), sol.speech_variance);
        assert_eq!(e.noise.excitation_variance(), sol.noise_variance);
        assert_eq!(e.speech.coefficients(), scb.models().unwrap()[0].coefficients());
        assert_eq!(d.weights, vec![1.0]);
        assert_eq!(d.frame, 3);
    }

    #[test]
    fn dual_channel_limits() {
        let p = spec(vec![2.0; 8]);
        let coherent: Vec<Complex64> = vec![Complex64::new(2.0, 0.0); 8];
        let out = dual_channel_noise_psd(&p, &p, &coherent).unwrap();
        assert!(out.bins().iter().all(|&b| (b - 0.02).abs() < 1e-15));
        let zero = vec![Complex64::new(0.0, 0.0); 8];
        let q = spec(vec![4.0; 8]);
        let out = dual_channel_noise_psd(&p, &q, &zero).unwrap();
        assert!(out.bins().iter().all(|&b| b == 3.0));
    }

    #[test]
    fn noise_psd_to_ar_cases() {
        let flat = spec(vec![0.3; 64]);
        let m = noise_psd_to_ar(&flat, 14).unwrap();
        assert!(m.coefficients().iter().all(|c| c.abs() < 1e-12));
        assert!((m.excitation_variance() - 0.3).abs() < 1e-12);

        let truth = ArModel::new(vec![1.2, -0.5], 2e-3).unwrap();
        let env = ar_envelope(&truth, 200).unwrap().scaled(2e-3);
        let m = noise_psd_to_ar(&env, 2).unwrap();
        assert!((m.coefficients()[0] - 1.2).abs() < 1e-3);
        assert!((m.coefficients()[1] + 0.5).abs() < 1e-3);
        assert!((m.excitation_variance() / 2e-3 - 1.0).abs() < 1e-3);

        assert!(noise_psd_to_ar(&spec(vec![0.0; 8]), 2).is_err());
    }

    #[test]
    fn gamma_fit_errors_and_degenerate() {
        assert!(fit_gamma_prior(&[1.0, 3.0]).is_err());
        assert!(fit_gamma_prior(&[1.0; 9]).is_err());
        let mut bad = vec![1.0; 12];
        bad[3] = -1.0;
        assert!(fit_gamma_prior(&bad).is_err());
        let fit = fit_gamma_prior(&[0.7; 20]).unwrap();
        assert!(fit.degenerate);
        assert!((fit.prior.mean() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn gamma_fit_recovers_parameters() {
        use rand_distr::{Distribution, Gamma};
        let mut rng = synth::rng(2024);
        let g = Gamma::new(2.0, 0.5).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        let fit = fit_gamma_prior(&xs).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.prior.shape / 2.0 - 1.0).abs() < 0.03);
        assert!((fit.prior.scale / 0.5 - 1.0).abs() < 0.03);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((fit.prior.mean() - mean).abs() < 1e-6 * mean);
    }

    #[test]
    fn trigamma_reference_values() {
        // trigamma(1) = pi^2/6, trigamma(0.5) = pi^2/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_ln_pdf_matches_closed_form() {
        let g = GammaPrior::new(2.0, 0.5).unwrap();
        // shape 2: x e^{-x/s} / s^2
        let x: f64 = 0.8;
        let expect = (x * (-x / 0.5).exp() / 0.25).ln();
        assert!((g.ln_pdf(x) - expect).abs() < 1e-12);
        assert_eq!(g.ln_pdf(0.0), f64::NEG_INFINITY);
        assert!(GammaPrior::new(0.0, 1.0).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-5, 1e-1, 50);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!((g[49] - 1e-1).abs() < 1e-14);
        assert_eq!(log_grid(1e-3, 1.0, 1), vec![1e-3]);
    }

    fn random_problem(seed: u64, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        use rand::Rng;
        let mut rng = synth::rng(seed);
        let mut pos = |lo: f64, hi: f64| -> Vec<f64> {
            (0..k).map(|_| rng.random_range(lo..hi)).collect()
        };
        (pos(0.01, 5.0), pos(0.01, 5.0), pos(0.1, 10.0), pos(0.1, 10.0))
    }

    #[test]
    fn matches_grid_search_minimum() {
        for seed in 0..5 {
            let (pl, pr, ps, pw) = random_problem(seed, 40);
            let fit = fit_variances(
                &[&pl, &pr],
                &ps,
                &pw,
                None,
                MuSchedule {
                    max_iterations: 5000,
                    tolerance: 1e-15,
                },
            )
            .unwrap();
            // brute-force oracle over a fine log grid around the optimum
            let cost = |sd: f64, sv: f64| {
                let m: Vec<f64> = ps.iter().zip(&pw).map(|(a, b)| sd * a + sv * b).collect();
                is_sum(&pl, &m) + is_sum(&pr, &m)
            };
            let mut best = f64::INFINITY;
            for a in log_grid(1e-4, 10.0, 400) {
                for b in log_grid(1e-4, 10.0, 400) {
                    best = best.min(cost(a, b));
                }
            }
            assert!(fit.cost <= best + 1e-9, "seed {seed}: {} vs {best}", fit.cost);
            assert!((fit.cost - cost(fit.speech_variance, fit.noise_variance)).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_swap_and_scale() {
        let (pl, pr, ps, pw) = random_problem(77, 32);
        let sched = MuSchedule::default();
        let a = fit_variances(&[&pl, &pr], &ps, &pw, None, sched).unwrap();
        let b = fit_variances(&[&pr, &pl], &ps, &pw, None, sched).unwrap();
        assert!((a.speech_variance - b.speech_variance).abs() <= 1e-14 * a.speech_variance);
        assert!((a.noise_variance - b.noise_variance).abs() <= 1e-14 * a.noise_variance);

        let c = 37.5;
        let sl: Vec<f64> = pl.iter().map(|v| v * c).collect();
        let sr: Vec<f64> = pr.iter().map(|v| v * c).collect();
        let d = fit_variances(&[&sl, &sr], &ps, &pw, None, sched).unwrap();
        assert!((d.speech_variance / (c * a.speech_variance) - 1.0).abs() < 1e-10);
        assert!((d.noise_variance / (c * a.noise_variance) - 1.0).abs() < 1e-10);
        assert!((d.cost - a.cost).abs() < 1e-10);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(1000))]
        #[test]
        fn updates_never_increase_cost(
            seed in 0u64..1_000_000,
            k in 4usize..64,
            init_d in 1e-3f64..10.0,
            init_v in 1e-3f64..10.0,
        ) {
            let (pl, pr, ps, pw) = random_problem(seed, k);
            let fit = fit_variances(
                &[&pl, &pr],
                &ps,
                &pw,
                Some((init_d, init_v)),
                MuSchedule { max_iterations: 30, tolerance: f64::NEG_INFINITY },
            )
            .unwrap();
            for w in fit.cost_trace.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }
}
