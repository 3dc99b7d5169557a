//! Framing, spectra and autocorrelation shared by every estimator.
//!
//! Frames are non-overlapping and rectangular. Spectra use the unitary DFT
//! scaling (`1/sqrt(M)`), so a periodogram bin of a white process with
//! variance `s2` has expectation `s2` and the bins sum to the frame energy.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Left,
    Right,
}

/// Multi-channel PCM audio as `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_channels(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_channels(vec![left, right], sample_rate)
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::invalid(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("channels have different lengths"));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite sample"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Splits a stereo buffer into two mono buffers.
    pub fn split(&self) -> Vec<AudioBuffer> {
        self.channels
            .iter()
            .map(|c| AudioBuffer {
                channels: vec![c.clone()],
                sample_rate: self.sample_rate,
            })
            .collect()
    }
}

/// One analysis frame of a single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: Vec<f64>,
    pub index: usize,
    pub channel: Channel,
}

impl Frame {
    pub fn new(samples: Vec<f64>, index: usize, channel: Channel) -> Self {
        Self {
            samples,
            index,
            channel,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Non-negative power per DFT bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<f64>,
}

impl Spectrum {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if let Some(k) = bins.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid(format!(
                "spectrum bin {k} is {} (must be finite and non-negative)",
                bins[k]
            )));
        }
        Ok(Self { bins })
    }

    pub(crate) fn from_raw(bins: Vec<f64>) -> Self {
        debug_assert!(bins.iter().all(|b| b.is_finite() && *b >= 0.0));
        Self { bins }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn scaled(&self, gain: f64) -> Spectrum {
        Spectrum::from_raw(self.bins.iter().map(|b| b * gain).collect())
    }

    pub fn into_bins(self) -> Vec<f64> {
        self.bins
    }
}

/// Cuts `buffer`'s channel `channel` into consecutive frames of `frame_len`,
/// dropping the trailing partial frame.
pub fn extract_frames(buffer: &AudioBuffer, frame_len: usize) -> Result<Vec<Frame>> {
    extract_channel_frames(buffer, 0, frame_len)
}

pub fn extract_channel_frames(
    buffer: &AudioBuffer,
    channel: usize,
    frame_len: usize,
) -> Result<Vec<Frame>> {
    if frame_len == 0 || frame_len > buffer.len() {
        return Err(Error::invalid(format!(
            "frame length {frame_len} not in 1..={}",
            buffer.len()
        )));
    }
    if channel >= buffer.channel_count() {
        return Err(Error::invalid(format!("no channel {channel}")));
    }
    let tag = if channel == 0 {
        Channel::Left
    } else {
        Channel::Right
    };
    Ok(buffer
        .channel(channel)
        .chunks_exact(frame_len)
        .enumerate()
        .map(|(i, c)| Frame::new(c.to_vec(), i, tag))
        .collect())
}

/// Cached forward/inverse FFT plans for one transform length.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform of a zero-padded real sequence.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert!(x.len() <= self.len);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Periodogram with the frame-length normalization: `|X(k)|^2 / M`.
    pub fn periodogram(&self, x: &[f64]) -> Spectrum {
        let m = x.len() as f64;
        Spectrum::from_raw(self.forward_real(x).iter().map(|c| c.norm_sqr() / m).collect())
    }
}

/// `|DFT_k(x)|^2 / M` for the zero-padded frame, `k = 0..dft_len`.
pub fn periodogram(frame: &Frame, dft_len: usize) -> Result<Spectrum> {
    if frame.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    if dft_len < frame.len() {
        return Err(Error::invalid(format!(
            "dft length {dft_len} shorter than frame length {}",
            frame.len()
        )));
    }
    Ok(Dft::new(dft_len).periodogram(&frame.samples))
}

/// Per-bin cross spectrum `X_l(k) conj(X_r(k)) / M`.
pub fn cross_spectrum(dft: &Dft, left: &[f64], right: &[f64]) -> Vec<Complex64> {
    let m = left.len() as f64;
    let xl = dft.forward_real(left);
    let xr = dft.forward_real(right);
    xl.iter().zip(&xr).map(|(a, b)| a * b.conj() / m).collect()
}

/// Biased autocorrelation `r(q) = (1/M) sum_n x(n) x(n-q)` for `q = 0..=max_lag`.
pub fn autocorrelation(frame: &Frame, max_lag: usize) -> Result<Vec<f64>> {
    autocorrelation_of(&frame.samples, max_lag)
}

pub fn autocorrelation_of(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let m = x.len();
    if max_lag >= m {
        return Err(Error::invalid(format!(
            "max lag {max_lag} must be below frame length {m}"
        )));
    }
    Ok((0..=max_lag)
        .map(|q| x[q..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / m as f64)
        .collect())
}

/// Analytic signal by zeroing the negative-frequency half of the DFT.
pub fn analytic_signal(frame: &Frame) -> Result<Vec<Complex64>> {
    analytic_signal_of(&frame.samples)
}

pub fn analytic_signal_of(x: &[f64]) -> Result<Vec<Complex64>> {
    let m = x.len();
    if m == 0 || m % 2 != 0 {
        return Err(Error::invalid(format!(
            "analytic signal needs an even, non-zero length (got {m})"
        )));
    }
    let dft = Dft::new(m);
    let mut spec = dft.forward_real(x);
    let half = m / 2;
    for (k, c) in spec.iter_mut().enumerate() {
        if k == 0 || k == half {
            continue;
        }
        if k < half {
            *c *= 2.0;
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    dft.inverse_in_place(&mut spec);
    let scale = 1.0 / m as f64;
    spec.iter_mut().for_each(|c| *c *= scale);
    Ok(spec)
}
