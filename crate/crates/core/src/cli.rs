//! Command-line front end: WAV I/O, codebook training, enhancement, pitch
//! tracking, evaluation and likelihood-surface dumps.
//!
//! Exit codes: 0 on success, 2 for usage and input errors, 1 for numeric
//! failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::codebook::{self, CodebookKind};
use crate::error::{Error, Result};
use crate::kalman::ExcitationModel;
use crate::linpred::{ar_envelope, ArModel};
use crate::metrics::{interaural_errors, segmental_snr};
use crate::pipeline::{Enhanced, Enhancer, Mode, RunConfig};
use crate::pitch::{PitchEstimator, PitchInfo};
use crate::signal::{extract_channel_frames, AudioBuffer, Dft};
use crate::stp::{likelihood_surface, log_grid, StpDiagnostics};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "binaural-kalman", version, about = "Model-based binaural speech enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a speech or noise codebook with the generalized Lloyd algorithm.
    Train(TrainArgs),
    /// Enhance a noisy recording.
    Enhance(EnhanceArgs),
    /// Write a pitch track as CSV.
    Pitch(PitchArgs),
    /// Compare an enhanced recording with the clean reference.
    Eval(EvalArgs),
    /// Dump the log-likelihood over a grid of excitation variances.
    LikelihoodSurface(SurfaceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Speech,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Binaural,
    Bilateral,
    Single,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Uv,
    Vuv,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 14)]
    pub order: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub frame_len: usize,
    #[arg(long, default_value_t = 8000)]
    pub rate: u32,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

/// Options shared by `enhance` and `pitch`; unset flags fall back to the
/// config file, then to the built-in defaults.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub speech_cb: Option<PathBuf>,
    #[arg(long)]
    pub noise_cb: Option<PathBuf>,
    #[arg(long)]
    pub frame_len: Option<usize>,
    #[arg(long)]
    pub delay: Option<usize>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub f_step: Option<f64>,
    #[arg(long)]
    pub voicing_threshold: Option<f64>,
    #[arg(long)]
    pub mu_iterations: Option<usize>,
    /// Disable the per-frame dual-channel noise codebook entry.
    #[arg(long)]
    pub no_adaptive_noise: bool,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long, value_enum, default_value = "binaural")]
    pub mode: ModeArg,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Per-frame STP diagnostics CSV.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct PitchArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub enhanced: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub seg_len: usize,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Speech AR coefficients, comma separated (prediction form).
    #[arg(long, default_value = "1.3,-0.6", allow_hyphen_values = true)]
    pub speech_ar: String,
    #[arg(long, default_value = "-0.5", allow_hyphen_values = true)]
    pub noise_ar: String,
    #[arg(long, default_value_t = 1e-3)]
    pub speech_var: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 200)]
    pub frame_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use this frame of a WAV file instead of a synthetic frame.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub min: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    let (name, res) = match cli.command {
        Command::Train(a) => ("train", cmd_train(&a, out)),
        Command::Enhance(a) => ("enhance", cmd_enhance(&a, out)),
        Command::Pitch(a) => ("pitch", cmd_pitch(&a, out)),
        Command::Eval(a) => ("eval", cmd_eval(&a, out)),
        Command::LikelihoodSurface(a) => ("likelihood-surface", cmd_likelihood_surface(&a, out)),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {name}: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

/// Reads a 16-bit PCM WAV file scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::invalid(format!(
            "{}: only 16-bit PCM is supported",
            path.display()
        )));
    }
    let ch = spec.channels as usize;
    if !(1..=2).contains(&ch) {
        return Err(Error::invalid(format!("{}: {ch} channels", path.display())));
    }
    let samples = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    let mut channels = vec![Vec::with_capacity(samples.len() / ch); ch];
    for (i, s) in samples.iter().enumerate() {
        channels[i % ch].push(*s as f64 / 32768.0);
    }
    AudioBuffer::from_channels(channels, spec.sample_rate)
}

/// Writes 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: &Path, buffer: &AudioBuffer) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: buffer.channel_count() as u16,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for n in 0..buffer.len() {
        for c in 0..buffer.channel_count() {
            let v = (buffer.channel(c)[n] * 32768.0).round().clamp(-32768.0, 32767.0);
            w.write_sample(v as i16).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Applies `key = value` lines to `cfg`. `#` starts a comment.
pub fn apply_config_text(text: &str, cfg: &mut RunConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::invalid(format!("config line {}: {msg}", i + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        macro_rules! num {
            () => {
                value.parse().map_err(|_| bad(&format!("bad value for {key}")))?
            };
        }
        match key {
            "sample_rate" => cfg.sample_rate = num!(),
            "frame_len" => cfg.frame_len = num!(),
            "speech_order" => cfg.speech_order = num!(),
            "noise_order" => cfg.noise_order = num!(),
            "delay" => cfg.delay = num!(),
            "f_min" => cfg.f_min = num!(),
            "f_max" => cfg.f_max = num!(),
            "f_step" => cfg.f_step = num!(),
            "voicing_threshold" => cfg.voicing_threshold = num!(),
            "mu_iterations" => cfg.mu_iterations = num!(),
            "mu_tolerance" => cfg.mu_tolerance = num!(),
            "adaptive_noise" => {
                cfg.adaptive_noise = parse_bool(value).ok_or_else(|| bad("expected a boolean"))?
            }
            "mode" => {
                cfg.mode = match value {
                    "binaural" => Mode::Binaural,
                    "bilateral" => Mode::Bilateral,
                    _ => return Err(bad("mode is binaural or bilateral")),
                }
            }
            "model" => {
                cfg.model = match value {
                    "uv" => ExcitationModel::Uv,
                    "vuv" => ExcitationModel::Vuv,
                    _ => return Err(bad("model is uv or vuv")),
                }
            }
            "speech_codebook" => cfg.speech_codebook = Some(PathBuf::from(value)),
            "noise_codebook" => cfg.noise_codebook = Some(PathBuf::from(value)),
            _ => return Err(bad(&format!("unknown key {key}"))),
        }
    }
    Ok(())
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            apply_config_text(&fs::read_to_string(path)?, &mut cfg)?;
        }
        if let Some(p) = &self.speech_cb {
            cfg.speech_codebook = Some(p.clone());
        }
        if let Some(p) = &self.noise_cb {
            cfg.noise_codebook = Some(p.clone());
        }
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        take!(frame_len, delay, f_min, f_max, f_step, voicing_threshold, mu_iterations);
        if self.no_adaptive_noise {
            cfg.adaptive_noise = false;
        }
        Ok(cfg)
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if a.size == 0 {
        return Err(Error::invalid("codebook size must be positive"));
    }
    let mut frames = Vec::new();
    for path in &a.inputs {
        let buf = read_wav(path)?;
        if buf.sample_rate() != a.rate {
            return Err(Error::invalid(format!(
                "{}: rate {} Hz, expected {}",
                path.display(),
                buf.sample_rate(),
                a.rate
            )));
        }
        for c in 0..buf.channel_count() {
            if buf.len() >= a.frame_len {
                frames.extend(extract_channel_frames(&buf, c, a.frame_len)?);
            }
        }
    }
    let kind = match a.kind {
        KindArg::Speech => CodebookKind::Speech,
        KindArg::Noise => CodebookKind::Noise,
    };
    let t = codebook::train(&frames, a.size, a.order, a.seed, kind)?;
    for (i, d) in t.distortion.iter().enumerate() {
        writeln!(out, "iteration {}: distortion {d:.6e}", i + 1)?;
    }
    t.codebook.save(&a.output)?;
    writeln!(
        out,
        "wrote {} entries of order {} from {} frames to {}",
        t.codebook.len(),
        t.codebook.order(),
        t.training_vectors,
        a.output.display()
    )?;
    Ok(())
}

fn write_diagnostics(path: &Path, rows: &[crate::pipeline::FrameAnalysis]) -> Result<()> {
    let mut text = String::from(StpDiagnostics::CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.diagnostics.csv_line());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn cmd_enhance(a: &EnhanceArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(m) = a.model {
        cfg.model = match m {
            ModelArg::Uv => ExcitationModel::Uv,
            ModelArg::Vuv => ExcitationModel::Vuv,
        };
    }
    if a.mode == ModeArg::Bilateral {
        cfg.mode = Mode::Bilateral;
    } else if a.mode == ModeArg::Binaural {
        cfg.mode = Mode::Binaural;
    }
    let input = read_wav(&a.input)?;
    let want = if a.mode == ModeArg::Single { 1 } else { 2 };
    if input.channel_count() != want {
        return Err(Error::invalid(format!(
            "--mode {:?} needs {want} channel(s), {} has {}",
            a.mode,
            a.input.display(),
            input.channel_count()
        )));
    }
    let enhancer = Enhancer::from_config(cfg)?;
    let Enhanced { output, analysis } = if want == 1 {
        enhancer.process_single(&input)?
    } else {
        enhancer.process(&input)?
    };
    write_wav(&a.output, &output)?;
    if let Some(path) = &a.diagnostics {
        if analysis.len() == 2 {
            write_diagnostics(&suffixed(path, "left"), &analysis[0])?;
            write_diagnostics(&suffixed(path, "right"), &analysis[1])?;
        } else {
            write_diagnostics(path, &analysis[0])?;
        }
    }
    writeln!(
        out,
        "enhanced {} samples x {} channel(s) into {}",
        output.len(),
        output.channel_count(),
        a.output.display()
    )?;
    Ok(())
}

fn cmd_pitch(a: &PitchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let input = read_wav(&a.input)?;
    if input.sample_rate() != cfg.sample_rate {
        return Err(Error::invalid(format!(
            "input rate {} Hz, configured {} Hz",
            input.sample_rate(),
            cfg.sample_rate
        )));
    }
    let channels: Vec<&[f64]> = (0..input.channel_count()).map(|c| input.channel(c)).collect();
    let track: Vec<PitchInfo> = if cfg.speech_codebook.is_some() && cfg.noise_codebook.is_some() {
        // pre-whitened with the estimated noise model
        let cfg = RunConfig {
            model: ExcitationModel::Vuv,
            ..cfg.clone()
        };
        Enhancer::from_config(cfg)?
            .analyze(&channels)?
            .into_iter()
            .map(|f| f.params.pitch)
            .collect()
    } else {
        let mut est = PitchEstimator::new(cfg.frame_len, &cfg.pitch_grid(), cfg.directivity)?;
        est.voicing_threshold = cfg.voicing_threshold;
        let m = cfg.frame_len;
        (0..input.len() / m)
            .map(|f| {
                let frames: Vec<&[f64]> = channels.iter().map(|c| &c[f * m..(f + 1) * m]).collect();
                est.estimate_real(&frames).map_err(|e| e.at_frame(f))
            })
            .collect::<Result<_>>()?
    };
    let mut text = String::from(PitchInfo::CSV_HEADER);
    text.push('\n');
    for (f, p) in track.iter().enumerate() {
        text.push_str(&p.csv_line(f, cfg.sample_rate as f64));
        text.push('\n');
    }
    match &a.output {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.4}"))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let clean = read_wav(&a.clean)?;
    let enh = read_wav(&a.enhanced)?;
    if clean.channel_count() != enh.channel_count() || clean.len() != enh.len() {
        return Err(Error::invalid("clean and enhanced files differ in shape"));
    }
    let snr_l = segmental_snr(clean.channel(0), enh.channel(0), a.seg_len)?;
    let (snr_r, itd, ild) = if clean.channel_count() == 2 {
        let rep = interaural_errors(clean.channel(0), clean.channel(1), enh.channel(0), enh.channel(1))?;
        (
            Some(segmental_snr(clean.channel(1), enh.channel(1), a.seg_len)?),
            Some(rep.itd_error),
            Some(rep.ild_error),
        )
    } else {
        (None, None, None)
    };
    writeln!(
        out,
        "{{\"segsnr_l\": {}, \"segsnr_r\": {}, \"itd\": {}, \"ild\": {}}}",
        fmt_opt(Some(snr_l)),
        fmt_opt(snr_r),
        fmt_opt(itd),
        fmt_opt(ild)
    )?;
    Ok(())
}

fn parse_coefficients(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad coefficient {v:?}")))
        })
        .collect()
}

fn cmd_likelihood_surface(a: &SurfaceArgs, out: &mut dyn Write) -> Result<()> {
    let speech = ArModel::new(parse_coefficients(&a.speech_ar)?, a.speech_var)?;
    let noise = ArModel::new(parse_coefficients(&a.noise_ar)?, a.noise_var)?;
    if a.points == 0 || !(a.min > 0.0 && a.max >= a.min) {
        return Err(Error::invalid("grid needs points >= 1 and 0 < min <= max"));
    }
    let m = a.frame_len;
    let frame: Vec<f64> = match &a.input {
        Some(path) => {
            let buf = read_wav(path)?;
            let start = a.frame * m;
            if start + m > buf.len() {
                return Err(Error::invalid(format!("frame {} is past the end of the file", a.frame)));
            }
            buf.channel(0)[start..start + m].to_vec()
        }
        None => synthetic_frame(&speech, &noise, m, a.seed),
    };
    let dft = Dft::new(m);
    let obs = dft.periodogram(&frame);
    let rows = likelihood_surface(
        &[&obs],
        &ar_envelope(&speech, m)?,
        &ar_envelope(&noise, m)?,
        m,
        &log_grid(a.min, a.max, a.points),
        &log_grid(a.min, a.max, a.points),
    )?;
    let mut text = String::from("sigma_d2,sigma_v2,loglik\n");
    for (sd, sv, ll) in rows {
        text.push_str(&format!("{sd:.6e},{sv:.6e},{ll:.6}\n"));
    }
    match &a.output {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Speech plus noise frame drawn from the two AR models.
pub fn synthetic_frame(speech: &ArModel, noise: &ArModel, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = synth::rng(seed);
    let s = synth::ar_process(&mut rng, speech, len, 500);
    let w = synth::ar_process(&mut rng, noise, len, 500);
    synth::add(&s, &w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn config_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nframe_len = 160\ndelay = 30 # trailing\nmodel = uv\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            delay: Some(40),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.frame_len, 160);
        assert_eq!(cfg.delay, 40);
        assert_eq!(cfg.model, ExcitationModel::Uv);
        assert_eq!(cfg.noise_order, 14);
    }

    #[test]
    fn config_errors() {
        let mut cfg = RunConfig::default();
        assert!(apply_config_text("frame_len 200", &mut cfg).is_err());
        assert!(apply_config_text("nope = 1", &mut cfg).is_err());
        assert!(apply_config_text("delay = x", &mut cfg).is_err());
        assert!(apply_config_text("adaptive_noise = off", &mut cfg).is_ok());
        assert!(!cfg.adaptive_noise);
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let l: Vec<f64> = (0..100).map(|i| (i as f64 - 50.0) / 64.0).collect();
        let r: Vec<f64> = l.iter().map(|v| -v).collect();
        let buf = AudioBuffer::stereo(l.clone(), r, 8000).unwrap();
        write_wav(&path, &buf).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 8000);
        assert_eq!(back.channel(0), buf.channel(0));
        assert_eq!(back.channel(1), buf.channel(1));
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, _) = run_args(&["binaural-kalman", "train", "--kind", "speech", "--size", "0", "-o", "x.cbk", "a.wav"]);
        assert_eq!(code, 2);
        let (code, _, _) = run_args(&["binaural-kalman", "bogus"]);
        assert_eq!(code, 2);
        let (code, _, err) = run_args(&["binaural-kalman", "eval", "--clean", "/nonexistent.wav", "--enhanced", "/nonexistent.wav"]);
        assert_eq!(code, 2);
        assert!(err.contains("eval"));
    }

    #[test]
    fn surface_row_counts() {
        let (code, out, _) = run_args(&["binaural-kalman", "likelihood-surface", "--points", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 2);
        let (code, out, _) = run_args(&["binaural-kalman", "likelihood-surface"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 2501);
        assert_eq!(out.lines().next().unwrap(), "sigma_d2,sigma_v2,loglik");
    }
}
