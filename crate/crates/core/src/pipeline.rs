//! Frame-by-frame enhancement: parameter estimation followed by smoothing.
//!
//! Per frame the steps are: dual-channel noise PSD, appending its AR model
//! to the noise codebook, codebook STP estimation, pre-whitening, pitch
//! estimation. The smoother then runs over each channel with the collected
//! parameters. In binaural mode one parameter set drives both ears; in
//! bilateral mode every ear is analyzed on its own.

use std::path::PathBuf;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::kalman::{enhance_channel, ExcitationModel, FrameParams, SmootherConfig};
use crate::linpred::ArModel;
use crate::pitch::{prewhiten, DirectivityModel, PitchEstimator, PitchGrid, PitchInfo};
use crate::signal::{cross_spectrum, AudioBuffer, Dft, Spectrum};
use crate::stp::{
    noise_psd_to_ar, DualChannelNoiseTracker, GammaPrior, MuSchedule, StpDiagnostics,
    StpEstimator,
};

/// Excitation variances are floored here before smoothing so the innovation
/// variance never collapses on silent frames.
pub const VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Joint estimation from both ears, shared parameters.
    #[default]
    Binaural,
    /// Independent estimation per ear.
    Bilateral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub speech_order: usize,
    pub noise_order: usize,
    /// Smoother lag `d_s`.
    pub delay: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub f_step: f64,
    pub mode: Mode,
    pub model: ExcitationModel,
    pub voicing_threshold: f64,
    pub mu_iterations: usize,
    pub mu_tolerance: f64,
    /// Append the dual-channel noise model to the noise codebook each frame.
    pub adaptive_noise: bool,
    pub noise_prior: Option<GammaPrior>,
    pub directivity: DirectivityModel,
    pub speech_codebook: Option<PathBuf>,
    pub noise_codebook: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            frame_len: 200,
            speech_order: 14,
            noise_order: 14,
            delay: crate::kalman::DEFAULT_SMOOTHER_DELAY,
            f_min: crate::pitch::DEFAULT_F_MIN,
            f_max: crate::pitch::DEFAULT_F_MAX,
            f_step: crate::pitch::DEFAULT_F_STEP,
            mode: Mode::Binaural,
            model: ExcitationModel::Vuv,
            voicing_threshold: crate::pitch::DEFAULT_VOICING_THRESHOLD,
            mu_iterations: crate::stp::DEFAULT_MU_ITERATIONS,
            mu_tolerance: crate::stp::DEFAULT_MU_TOLERANCE,
            adaptive_noise: true,
            noise_prior: None,
            directivity: DirectivityModel::Identity,
            speech_codebook: None,
            noise_codebook: None,
        }
    }
}

impl RunConfig {
    pub fn pitch_grid(&self) -> PitchGrid {
        PitchGrid::new(self.f_min, self.f_max, self.f_step, self.sample_rate as f64)
    }

    pub fn smoother(&self) -> SmootherConfig {
        SmootherConfig {
            frame_len: self.frame_len,
            delay: self.delay,
            max_period: self.pitch_grid().max_period(),
            model: self.model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::invalid("frame_len must be even and at least 2"));
        }
        if self.delay < self.speech_order {
            return Err(Error::invalid(format!(
                "delay {} must be at least the speech order {}",
                self.delay, self.speech_order
            )));
        }
        if self.noise_order >= self.frame_len || self.speech_order >= self.frame_len {
            return Err(Error::invalid("AR orders must be below frame_len"));
        }
        if !(0.0..1.0).contains(&self.voicing_threshold) {
            return Err(Error::invalid("voicing_threshold must be in [0, 1)"));
        }
        if self.mu_iterations == 0 {
            return Err(Error::invalid("mu_iterations must be positive"));
        }
        self.pitch_grid().omegas().map(|_| ())
    }
}

/// Everything estimated for one frame of one parameter stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnalysis {
    pub params: FrameParams,
    pub diagnostics: StpDiagnostics,
}

/// Enhanced audio with the per-frame analysis. Binaural and single-channel
/// runs have one analysis stream; bilateral runs have one per ear.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub output: AudioBuffer,
    pub analysis: Vec<Vec<FrameAnalysis>>,
}

/// Estimators prepared for one configuration and codebook pair.
#[derive(Debug, Clone)]
pub struct Enhancer {
    cfg: RunConfig,
    stp: StpEstimator,
    pitch: PitchEstimator,
    dft: Dft,
}

impl Enhancer {
    pub fn new(cfg: RunConfig, speech: &Codebook, noise: &Codebook) -> Result<Self> {
        cfg.validate()?;
        if speech.order() != cfg.speech_order || noise.order() != cfg.noise_order {
            return Err(Error::invalid(format!(
                "codebook orders ({}, {}) differ from the configured ({}, {})",
                speech.order(),
                noise.order(),
                cfg.speech_order,
                cfg.noise_order
            )));
        }
        let mut stp = StpEstimator::new(speech, noise, cfg.frame_len)?;
        stp.schedule = MuSchedule {
            max_iterations: cfg.mu_iterations,
            tolerance: cfg.mu_tolerance,
        };
        stp.priors.noise = cfg.noise_prior;
        let mut pitch = PitchEstimator::new(cfg.frame_len, &cfg.pitch_grid(), cfg.directivity)?;
        pitch.voicing_threshold = cfg.voicing_threshold;
        Ok(Self {
            dft: Dft::new(cfg.frame_len),
            cfg,
            stp,
            pitch,
        })
    }

    /// Loads the codebooks named in the configuration.
    pub fn from_config(cfg: RunConfig) -> Result<Self> {
        let load = |p: &Option<PathBuf>, what: &str| match p {
            Some(p) => Codebook::load(p),
            None => Err(Error::invalid(format!("no {what} codebook configured"))),
        };
        let speech = load(&cfg.speech_codebook, "speech")?;
        let noise = load(&cfg.noise_codebook, "noise")?;
        Self::new(cfg, &speech, &noise)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn check_input(&self, input: &AudioBuffer, channels: usize) -> Result<()> {
        if input.sample_rate() != self.cfg.sample_rate {
            return Err(Error::invalid(format!(
                "input rate {} Hz, configured {} Hz",
                input.sample_rate(),
                self.cfg.sample_rate
            )));
        }
        if input.channel_count() != channels {
            return Err(Error::invalid(format!(
                "expected {channels} channel(s), got {}",
                input.channel_count()
            )));
        }
        if input.len() < self.cfg.frame_len {
            return Err(Error::invalid("input shorter than one frame"));
        }
        Ok(())
    }

    /// Parameter estimation for each frame of the given channels (one or
    /// two), jointly across them.
    pub fn analyze(&self, channels: &[&[f64]]) -> Result<Vec<FrameAnalysis>> {
        let m = self.cfg.frame_len;
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("channels differ in length"));
        }
        let mut tracker = DualChannelNoiseTracker::default();
        let q = self.cfg.noise_order;
        (0..len / m)
            .map(|f| {
                self.analyze_frame(channels, f, &mut tracker, q)
                    .map_err(|e| e.at_frame(f))
            })
            .collect()
    }

    fn analyze_frame(
        &self,
        channels: &[&[f64]],
        f: usize,
        tracker: &mut DualChannelNoiseTracker,
        q: usize,
    ) -> Result<FrameAnalysis> {
        let m = self.cfg.frame_len;
        let frames: Vec<&[f64]> = channels.iter().map(|c| &c[f * m..(f + 1) * m]).collect();
        let spectra: Vec<Spectrum> = frames.iter().map(|x| self.dft.periodogram(x)).collect();

        let adaptive = if self.cfg.adaptive_noise && channels.len() == 2 {
            let cross = cross_spectrum(&self.dft, frames[0], frames[1]);
            let psd = tracker.update(&spectra[0], &spectra[1], &cross)?;
            noise_psd_to_ar(&psd, q).ok()
        } else {
            None
        };

        let obs: Vec<&Spectrum> = spectra.iter().collect();
        let (mut stp, diagnostics) = self.stp.estimate(&obs, adaptive.as_ref(), f)?;
        stp.speech = floor_variance(&stp.speech);
        stp.noise = floor_variance(&stp.noise);

        let pitch = match self.cfg.model {
            ExcitationModel::Uv => PitchInfo::unvoiced(self.pitch_grid_floor(), 0.0),
            ExcitationModel::Vuv => {
                let white: Vec<Vec<f64>> = channels
                    .iter()
                    .zip(&frames)
                    .map(|(c, x)| {
                        let start = f * m;
                        let hist = &c[start.saturating_sub(q)..start];
                        prewhiten(x, hist, &stp.noise)
                    })
                    .collect();
                let refs: Vec<&[f64]> = white.iter().map(|v| v.as_slice()).collect();
                self.pitch.estimate_real(&refs)?
            }
        };
        Ok(FrameAnalysis {
            params: FrameParams { stp, pitch },
            diagnostics,
        })
    }

    fn pitch_grid_floor(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.cfg.f_min / self.cfg.sample_rate as f64
    }

    fn smooth(&self, z: &[f64], analysis: &[FrameAnalysis]) -> Result<Vec<f64>> {
        let params: Vec<FrameParams> = analysis.iter().map(|a| a.params.clone()).collect();
        enhance_channel(z, &params, &self.cfg.smoother())
    }

    /// Two-channel enhancement in the configured mode.
    pub fn process(&self, input: &AudioBuffer) -> Result<Enhanced> {
        self.check_input(input, 2)?;
        let (l, r) = (input.channel(0), input.channel(1));
        let (analysis, (ol, or)) = match self.cfg.mode {
            Mode::Binaural => {
                let a = self.analyze(&[l, r])?;
                let out = rayon::join(|| self.smooth(l, &a), || self.smooth(r, &a));
                (vec![a], out)
            }
            Mode::Bilateral => {
                let (al, ar) = rayon::join(|| self.analyze(&[l]), || self.analyze(&[r]));
                let (al, ar) = (al?, ar?);
                let out = rayon::join(|| self.smooth(l, &al), || self.smooth(r, &ar));
                (vec![al, ar], out)
            }
        };
        Ok(Enhanced {
            output: AudioBuffer::stereo(ol?, or?, input.sample_rate())?,
            analysis,
        })
    }

    /// Single-channel enhancement (one-channel estimators).
    pub fn process_single(&self, input: &AudioBuffer) -> Result<Enhanced> {
        self.check_input(input, 1)?;
        let z = input.channel(0);
        let a = self.analyze(&[z])?;
        let out = self.smooth(z, &a)?;
        Ok(Enhanced {
            output: AudioBuffer::mono(out, input.sample_rate())?,
            analysis: vec![a],
        })
    }
}

fn floor_variance(m: &ArModel) -> ArModel {
    m.with_variance(m.excitation_variance().max(VARIANCE_FLOOR))
}

/// One-shot two-channel enhancement.
pub fn process(
    input: &AudioBuffer,
    cfg: RunConfig,
    speech: &Codebook,
    noise: &Codebook,
) -> Result<AudioBuffer> {
    Enhancer::new(cfg, speech, noise)?.process(input).map(|e| e.output)
}

/// One-shot single-channel enhancement.
pub fn process_single(
    input: &AudioBuffer,
    cfg: RunConfig,
    speech: &Codebook,
    noise: &Codebook,
) -> Result<AudioBuffer> {
    Enhancer::new(cfg, speech, noise)?
        .process_single(input)
        .map(|e| e.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookKind;
    use crate::synth;

    fn small_cfg(model: ExcitationModel) -> RunConfig {
        RunConfig {
            speech_order: 2,
            noise_order: 2,
            delay: 4,
            f_min: 100.0,
            f_max: 200.0,
            f_step: 2.0,
            model,
            ..Default::default()
        }
    }

    fn books() -> (Codebook, Codebook) {
        let s = [
            ArModel::new(vec![1.3, -0.6], 1.0).unwrap(),
            ArModel::new(vec![0.2, 0.1], 1.0).unwrap(),
        ];
        let n = [
            ArModel::new(vec![-0.5, 0.1], 1.0).unwrap(),
            ArModel::new(vec![0.4, -0.2], 1.0).unwrap(),
        ];
        (
            Codebook::from_models(CodebookKind::Speech, &s).unwrap(),
            Codebook::from_models(CodebookKind::Noise, &n).unwrap(),
        )
    }

    fn scene(seed: u64, len: usize) -> AudioBuffer {
        let mut rng = synth::rng(seed);
        let sp = ArModel::new(vec![1.3, -0.6], 1e-3).unwrap();
        let s = synth::ar_process(&mut rng, &sp, len, 100);
        let nl = synth::white_noise(&mut rng, len, 1e-3);
        let nr = synth::white_noise(&mut rng, len, 1e-3);
        AudioBuffer::stereo(synth::add(&s, &nl), synth::add(&s, &nr), 8000).unwrap()
    }

    #[test]
    fn config_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.frame_len, c.speech_order, c.noise_order, c.delay), (200, 14, 14, 25));
        assert_eq!(c.smoother().max_period, 100);
        assert!(c.validate().is_ok());
        let bad = RunConfig {
            delay: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn output_length_and_determinism() {
        let (s, n) = books();
        let e = Enhancer::new(small_cfg(ExcitationModel::Vuv), &s, &n).unwrap();
        let x = scene(1, 1234);
        let a = e.process(&x).unwrap();
        let b = e.process(&x).unwrap();
        assert_eq!(a.output.len(), 1234);
        assert_eq!(a.output, b.output);
        assert_eq!(a.analysis[0].len(), 6);
    }

    #[test]
    fn swapping_inputs_swaps_outputs() {
        let (s, n) = books();
        let e = Enhancer::new(small_cfg(ExcitationModel::Vuv), &s, &n).unwrap();
        let x = scene(2, 1000);
        let swapped = AudioBuffer::stereo(x.channel(1).to_vec(), x.channel(0).to_vec(), 8000).unwrap();
        let a = e.process(&x).unwrap().output;
        let b = e.process(&swapped).unwrap().output;
        assert_eq!(a.channel(0), b.channel(1));
        assert_eq!(a.channel(1), b.channel(0));
    }

    #[test]
    fn bilateral_equals_binaural_when_weights_are_trivial() {
        // single-entry codebooks, no adaptive entry: identical channels give identical estimates
        let s = Codebook::from_models(
            CodebookKind::Speech,
            &[ArModel::new(vec![1.3, -0.6], 1.0).unwrap()],
        )
        .unwrap();
        let n = Codebook::from_models(CodebookKind::Noise, &[ArModel::white(2, 1.0)]).unwrap();
        let x = scene(3, 800);
        let same = AudioBuffer::stereo(x.channel(0).to_vec(), x.channel(0).to_vec(), 8000).unwrap();
        let mut cfg = small_cfg(ExcitationModel::Uv);
        cfg.adaptive_noise = false;
        let bin = Enhancer::new(cfg.clone(), &s, &n).unwrap().process(&same).unwrap();
        cfg.mode = Mode::Bilateral;
        let bil = Enhancer::new(cfg.clone(), &s, &n).unwrap().process(&same).unwrap();
        for c in 0..2 {
            for (a, b) in bin.output.channel(c).iter().zip(bil.output.channel(c)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let mono = AudioBuffer::mono(x.channel(0).to_vec(), 8000).unwrap();
        let single = Enhancer::new(cfg, &s, &n).unwrap().process_single(&mono).unwrap();
        for (a, b) in single.output.channel(0).iter().zip(bil.output.channel(0)) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn input_checks() {
        let (s, n) = books();
        let e = Enhancer::new(small_cfg(ExcitationModel::Uv), &s, &n).unwrap();
        let mono = AudioBuffer::mono(vec![0.1; 400], 8000).unwrap();
        assert!(e.process(&mono).is_err());
        let wrong_rate = AudioBuffer::stereo(vec![0.1; 400], vec![0.1; 400], 16000).unwrap();
        assert!(e.process(&wrong_rate).is_err());
        let stereo = scene(4, 400);
        assert!(e.process_single(&stereo).is_err());
        let mut cfg = small_cfg(ExcitationModel::Uv);
        cfg.speech_order = 3;
        assert!(Enhancer::new(cfg, &s, &n).is_err());
    }

    #[test]
    fn silent_input_is_handled() {
        let (s, n) = books();
        let e = Enhancer::new(small_cfg(ExcitationModel::Vuv), &s, &n).unwrap();
        let z = AudioBuffer::stereo(vec![0.0; 600], vec![0.0; 600], 8000).unwrap();
        let out = e.process(&z).unwrap();
        assert!(out.output.channel(0).iter().all(|v| *v == 0.0));
    }
}
