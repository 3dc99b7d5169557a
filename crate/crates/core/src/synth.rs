//! Seeded synthetic signals: AR processes, pitched excitation and noise.
//!
//! Used by the examples, the acceptance suite and for quick experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linpred::ArModel;

pub type SynthRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white_noise<R: Rng>(rng: &mut R, len: usize, variance: f64) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..len)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            sd * e
        })
        .collect()
}

/// Runs `excitation` through the all-pole filter `1/A(z)` of `model`.
pub fn all_pole_filter(model: &ArModel, excitation: &[f64]) -> Vec<f64> {
    let a = model.coefficients();
    let mut out = Vec::with_capacity(excitation.len());
    for (n, &u) in excitation.iter().enumerate() {
        let mut s = u;
        for (i, ai) in a.iter().enumerate() {
            if n > i {
                s += ai * out[n - 1 - i];
            }
        }
        out.push(s);
    }
    out
}

/// AR process driven by white Gaussian noise with the model's excitation
/// variance. `warmup` samples are generated and discarded first.
pub fn ar_process<R: Rng>(rng: &mut R, model: &ArModel, len: usize, warmup: usize) -> Vec<f64> {
    let e = white_noise(rng, len + warmup, model.excitation_variance());
    all_pole_filter(model, &e).split_off(warmup)
}

/// Long-term predicted excitation `u(n) = b u(n-p) + d(n)`.
pub fn pitched_excitation<R: Rng>(
    rng: &mut R,
    len: usize,
    period: usize,
    gain: f64,
    innovation_variance: f64,
) -> Vec<f64> {
    let d = white_noise(rng, len, innovation_variance);
    let mut u = vec![0.0; len];
    for n in 0..len {
        u[n] = d[n] + if n >= period { gain * u[n - period] } else { 0.0 };
    }
    u
}

/// Sum of harmonics `sum_l amp_l cos(l w0 n + phase_l)`.
pub fn harmonic_signal(len: usize, omega0: f64, amps: &[f64], phases: &[f64]) -> Vec<f64> {
    (0..len)
        .map(|n| {
            amps.iter()
                .zip(phases)
                .enumerate()
                .map(|(l, (a, ph))| a * ((l + 1) as f64 * omega0 * n as f64 + ph).cos())
                .sum()
        })
        .collect()
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Scales `noise` so that `power(signal) / power(noise)` equals `snr_db`.
pub fn scale_to_snr(signal: &[f64], noise: &[f64], snr_db: f64) -> Vec<f64> {
    let g = (power(signal) / (power(noise) * 10f64.powf(snr_db / 10.0))).sqrt();
    noise.iter().map(|v| v * g).collect()
}

/// `10 log10(|s|^2 / |s - e|^2)` over the whole signal.
pub fn snr_db(clean: &[f64], estimate: &[f64]) -> f64 {
    let num: f64 = clean.iter().map(|v| v * v).sum();
    let den: f64 = clean
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    10.0 * (num / den).log10()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// All-pole filtering with the model switched every `frame_len` samples.
/// Filter memory carries across switches.
pub fn time_varying_filter(models: &[ArModel], frame_len: usize, excitation: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(excitation.len());
    for (n, &u) in excitation.iter().enumerate() {
        let model = &models[(n / frame_len).min(models.len() - 1)];
        let mut s = u;
        for (i, ai) in model.coefficients().iter().enumerate() {
            if n > i {
                s += ai * out[n - 1 - i];
            }
        }
        out.push(s);
    }
    out
}

/// Delays `x` by `delay` samples (zero fill) and scales it.
pub fn delayed(x: &[f64], delay: usize, gain: f64) -> Vec<f64> {
    (0..x.len())
        .map(|n| if n >= delay { gain * x[n - delay] } else { 0.0 })
        .collect()
}

/// Recipe for a two-ear synthetic scene: one AR talker reaching the ears
/// with a delay and level difference, plus diffuse babble.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub len: usize,
    pub frame_len: usize,
    /// Talker envelopes, cycled frame by frame.
    pub speech_models: Vec<ArModel>,
    /// Babble talker envelopes; each babble talker cycles through them from
    /// a different offset.
    pub babble_models: Vec<ArModel>,
    pub babble_talkers: usize,
    /// Frames each talker envelope is held before switching.
    pub speech_hold: usize,
    pub babble_hold: usize,
    /// Pitch period and long-term gain of the talker; `None` for white
    /// excitation.
    pub pitch: Option<(usize, f64)>,
    /// Right ear lags the left by this many samples.
    pub itd: usize,
    /// Right-ear gain relative to the left.
    pub ild_gain: f64,
    /// Mean SNR over both ears, in dB.
    pub snr_db: f64,
    pub seed: u64,
}

/// Clean and noisy channels of a synthetic scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub clean: [Vec<f64>; 2],
    pub noise: [Vec<f64>; 2],
    pub noisy: [Vec<f64>; 2],
    /// Talker model index per frame.
    pub speech_index: Vec<usize>,
}

impl SceneSpec {
    pub fn render(&self) -> Scene {
        let mut rng = rng(self.seed);
        let frames = self.len.div_ceil(self.frame_len);
        let speech_index: Vec<usize> = (0..frames)
            .map(|f| (f / self.speech_hold.max(1)) % self.speech_models.len())
            .collect();
        let models: Vec<ArModel> = speech_index
            .iter()
            .map(|&i| self.speech_models[i].clone())
            .collect();
        let total = self.len + self.itd;
        let excitation = match self.pitch {
            Some((period, gain)) => pitched_excitation(&mut rng, total, period, gain, 1.0 - gain * gain),
            None => white_noise(&mut rng, total, 1.0),
        };
        let excitation: Vec<f64> = excitation
            .iter()
            .enumerate()
            .map(|(n, u)| u * models[(n / self.frame_len).min(frames - 1)].excitation_variance().sqrt())
            .collect();
        let source = time_varying_filter(&models, self.frame_len, &excitation);
        let left = source[self.itd..].to_vec();
        let right: Vec<f64> = source[..self.len].iter().map(|v| self.ild_gain * v).collect();

        let nb = self.babble_models.len();
        let mut babble = || {
            let mut acc = vec![0.0; self.len];
            for t in 0..self.babble_talkers {
                let models: Vec<ArModel> = (0..frames)
                    .map(|f| self.babble_models[(f / self.babble_hold.max(1) + t * 3) % nb].clone())
                    .collect();
                let e: Vec<f64> = white_noise(&mut rng, self.len, 1.0)
                    .iter()
                    .enumerate()
                    .map(|(n, u)| u * models[n / self.frame_len].excitation_variance().sqrt())
                    .collect();
                acc = add(&acc, &time_varying_filter(&models, self.frame_len, &e));
            }
            acc
        };
        let (bl, br) = (babble(), babble());
        let g = ((power(&left) + power(&right))
            / ((power(&bl) + power(&br)) * 10f64.powf(self.snr_db / 10.0)))
        .sqrt();
        let nl: Vec<f64> = bl.iter().map(|v| g * v).collect();
        let nr: Vec<f64> = br.iter().map(|v| g * v).collect();
        Scene {
            noisy: [add(&left, &nl), add(&right, &nr)],
            clean: [left, right],
            noise: [nl, nr],
            speech_index,
        }
    }
}

/// All-pole model with a resonance per `(centre_hz, bandwidth_hz)` pair,
/// zero-padded to `order` coefficients.
pub fn formant_model(
    formants: &[(f64, f64)],
    sample_rate: f64,
    order: usize,
    excitation_variance: f64,
) -> crate::Result<ArModel> {
    let mut poly = vec![1.0];
    for &(f, bw) in formants {
        let r = (-std::f64::consts::PI * bw / sample_rate).exp();
        let c = -2.0 * r * (2.0 * std::f64::consts::PI * f / sample_rate).cos();
        let section = [1.0, c, r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, p) in poly.iter().enumerate() {
            for (j, s) in section.iter().enumerate() {
                next[i + j] += p * s;
            }
        }
        poly = next;
    }
    if poly.len() - 1 > order {
        return Err(crate::Error::invalid("too many formants for the order"));
    }
    let mut a: Vec<f64> = poly[1..].iter().map(|v| -v).collect();
    a.resize(order, 0.0);
    ArModel::new(a, excitation_variance)
}
