//! State-space models and the fixed-lag Kalman smoother.
//!
//! State layout (top to bottom):
//!
//! | block | entries                          | size      |
//! |-------|----------------------------------|-----------|
//! | s     | `s(n), s(n-1), ..., s(n-d_s)`    | `d_s + 1` |
//! | u     | `u(n+1), u(n), ..., u(n+2-p_max)`| `p_max` (V-UV only) |
//! | w     | `w(n), ..., w(n-Q+1)`            | `max(Q, 1)` |
//!
//! The excitation block runs one sample ahead of the speech block, so the
//! speech row reads `u(n)` from the previous state and the innovation
//! `d(n+1)` enters at the head of the u block. With `b = 0` this reduces
//! exactly to the UV model. The observation is `z(n) = s(n) + w(n)`, and the
//! smoothed output `s(n - d_s)` is read from the end of the s block.

use crate::error::{Error, Result};
use crate::linpred::ArModel;
use crate::pitch::PitchInfo;
use crate::stp::StpEstimate;

/// Innovation variances at or below this are treated as singular.
pub const SINGULAR_INNOVATION: f64 = 1e-30;
pub const DEFAULT_SMOOTHER_DELAY: usize = 25;
pub const DEFAULT_MAX_PERIOD: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExcitationModel {
    /// White excitation.
    Uv,
    /// Pitch-lag predicted excitation `u(n) = b u(n-p) + d(n)`.
    #[default]
    Vuv,
}

/// Sparse-row transition matrix plus process-noise placement.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    rows: Vec<Vec<(usize, f64)>>,
    /// For rows that copy one state entry, the entry they copy.
    shift_source: Vec<Option<usize>>,
    /// Runs `(row, source, len)` of consecutive copy rows.
    shift_runs: Vec<(usize, usize, usize)>,
    general_rows: Vec<usize>,
    d_s: usize,
    /// Index receiving the speech innovation `d`.
    innovation_index: usize,
    /// Index of `w(n)`.
    noise_index: usize,
    innovation_variance: f64,
    noise_variance: f64,
}

impl StateSpaceModel {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn delay(&self) -> usize {
        self.d_s
    }

    pub fn noise_index(&self) -> usize {
        self.noise_index
    }

    pub fn innovation_index(&self) -> usize {
        self.innovation_index
    }

    pub fn innovation_variance(&self) -> f64 {
        self.innovation_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Dense `F`, row-major.
    pub fn transition(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![0.0; n];
                for &(c, v) in r {
                    row[c] += v;
                }
                row
            })
            .collect()
    }

    fn check(speech: &ArModel, d_s: usize) -> Result<()> {
        if d_s < speech.order() {
            return Err(Error::invalid(format!(
                "smoother delay {d_s} is below the speech order {}",
                speech.order()
            )));
        }
        Ok(())
    }
}

fn speech_block(rows: &mut Vec<Vec<(usize, f64)>>, a: &[f64], d_s: usize) {
    rows.push(a.iter().enumerate().map(|(i, &v)| (i, v)).collect());
    for i in 1..=d_s {
        rows.push(vec![(i - 1, 1.0)]);
    }
}

fn noise_block(rows: &mut Vec<Vec<(usize, f64)>>, c: &[f64], offset: usize) -> usize {
    let len = c.len().max(1);
    rows.push(c.iter().enumerate().map(|(i, &v)| (offset + i, v)).collect());
    for i in 1..len {
        rows.push(vec![(offset + i - 1, 1.0)]);
    }
    len
}

fn shift_sources(rows: &[Vec<(usize, f64)>]) -> Vec<Option<usize>> {
    rows.iter()
        .map(|r| match r.as_slice() {
            [(c, v)] if *v == 1.0 => Some(*c),
            _ => None,
        })
        .collect()
}

fn shift_runs(rows: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, usize)> {
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for (j, src) in shift_sources(rows).into_iter().enumerate() {
        let Some(c) = src else { continue };
        match runs.last_mut() {
            Some((r, s, len)) if *r + *len == j && *s + *len == c => *len += 1,
            _ => runs.push((j, c, 1)),
        }
    }
    runs
}

fn general_rows(rows: &[Vec<(usize, f64)>]) -> Vec<usize> {
    shift_sources(rows)
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.is_none().then_some(j))
        .collect()
}

/// UV model: AR speech with white excitation plus AR noise.
pub fn build_uv_model(speech: &ArModel, noise: &ArModel, d_s: usize) -> Result<StateSpaceModel> {
    StateSpaceModel::check(speech, d_s)?;
    let mut rows = Vec::new();
    speech_block(&mut rows, speech.coefficients(), d_s);
    let noise_index = rows.len();
    noise_block(&mut rows, noise.coefficients(), noise_index);
    Ok(StateSpaceModel {
        shift_source: shift_sources(&rows),
        shift_runs: shift_runs(&rows),
        general_rows: general_rows(&rows),
        rows,
        d_s,
        innovation_index: 0,
        noise_index,
        innovation_variance: speech.excitation_variance(),
        noise_variance: noise.excitation_variance(),
    })
}

/// V-UV model. The pitch-lag gain is `pitch.gain()` (zero when unvoiced) and
/// the innovation variance is `sigma^2 (1 - b^2)`, so the excitation keeps
/// the speech model's variance.
pub fn build_vuv_model(
    speech: &ArModel,
    noise: &ArModel,
    pitch: &PitchInfo,
    d_s: usize,
    p_max: usize,
) -> Result<StateSpaceModel> {
    StateSpaceModel::check(speech, d_s)?;
    if p_max == 0 {
        return Err(Error::invalid("maximum pitch period must be positive"));
    }
    let b = pitch.gain();
    let p = pitch.period_samples;
    if b != 0.0 && !(1..=p_max).contains(&p) {
        return Err(Error::invalid(format!("pitch period {p} outside 1..={p_max}")));
    }
    let mut rows = Vec::new();
    speech_block(&mut rows, speech.coefficients(), d_s);
    let u0 = rows.len();
    rows[0].push((u0, 1.0));
    rows.push(if b != 0.0 { vec![(u0 + p - 1, b)] } else { Vec::new() });
    for i in 1..p_max {
        rows.push(vec![(u0 + i - 1, 1.0)]);
    }
    let noise_index = rows.len();
    noise_block(&mut rows, noise.coefficients(), noise_index);
    Ok(StateSpaceModel {
        shift_source: shift_sources(&rows),
        shift_runs: shift_runs(&rows),
        general_rows: general_rows(&rows),
        rows,
        d_s,
        innovation_index: u0,
        noise_index,
        innovation_variance: speech.excitation_variance() * (1.0 - b * b),
        noise_variance: noise.excitation_variance(),
    })
}

/// State estimate and error covariance (row-major, `dim x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherState {
    x: Vec<f64>,
    m: Vec<f64>,
    steps: usize,
    scratch: Vec<f64>,
}

impl SmootherState {
    /// Zero state with diagonal covariance.
    pub fn new(diagonal: &[f64]) -> Self {
        let n = diagonal.len();
        let mut m = vec![0.0; n * n];
        for (i, d) in diagonal.iter().enumerate() {
            m[i * n + i] = *d;
        }
        Self {
            x: vec![0.0; n],
            m,
            steps: 0,
            scratch: Vec::new(),
        }
    }

    /// `r0` on the speech and noise blocks; the excitation block, if any,
    /// starts at the model's innovation variance.
    pub fn initial(model: &StateSpaceModel, r0: f64) -> Self {
        let n = model.dim();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                if i > model.d_s && i < model.noise_index {
                    model.innovation_variance
                } else {
                    r0
                }
            })
            .collect();
        Self::new(&diag)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim() + j]
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.m[i * n + j] - self.m[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn min_diagonal(&self) -> f64 {
        let n = self.dim();
        (0..n).map(|i| self.m[i * n + i]).fold(f64::INFINITY, f64::min)
    }

    /// Filtered and smoothed speech `s(n), s(n-1), ..., s(n-d_s)`.
    pub fn speech_block(&self, d_s: usize) -> &[f64] {
        &self.x[..=d_s]
    }
}

/// One predict/correct step with observation `z`. Returns `s(n - d_s)` once
/// `d_s` earlier samples have been seen.
pub fn flks_step(
    state: &mut SmootherState,
    model: &StateSpaceModel,
    z: f64,
) -> Result<Option<f64>> {
    let n = model.dim();
    if state.dim() != n {
        return Err(Error::invalid(format!(
            "state has {} entries, model {n}",
            state.dim()
        )));
    }
    let rows = &model.rows;

    // prediction: x <- F x, M <- F M F^T + Q
    let x: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|&(c, v)| v * state.x[c]).sum())
        .collect();
    let fm = &mut state.scratch;
    fm.clear();
    fm.resize(n * n, 0.0);
    for (i, r) in rows.iter().enumerate() {
        let out = &mut fm[i * n..(i + 1) * n];
        for &(c, v) in r {
            let src = &state.m[c * n..(c + 1) * n];
            if model.shift_source[i].is_some() {
                out.copy_from_slice(src);
            } else {
                for (o, s) in out.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }
    let m = &mut state.m;
    for i in 0..n {
        let src = &fm[i * n..(i + 1) * n];
        let dst = &mut m[i * n..(i + 1) * n];
        for &(j, c, len) in &model.shift_runs {
            dst[j..j + len].copy_from_slice(&src[c..c + len]);
        }
        for &j in &model.general_rows {
            dst[j] = rows[j].iter().map(|&(c, v)| v * src[c]).sum();
        }
    }
    // only rows with several terms can round differently from their columns
    for &g in &model.general_rows {
        for k in 0..n {
            let avg = 0.5 * (m[g * n + k] + m[k * n + g]);
            m[g * n + k] = avg;
            m[k * n + g] = avg;
        }
    }
    let (di, wi) = (model.innovation_index, model.noise_index);
    m[di * n + di] += model.innovation_variance;
    m[wi * n + wi] += model.noise_variance;
    // correction with observation row selecting s(n) + w(n)
    let mg: Vec<f64> = (0..n).map(|i| m[i * n] + m[i * n + wi]).collect();
    let innovation = mg[0] + mg[wi];
    if !(innovation > SINGULAR_INNOVATION) {
        return Err(Error::SingularInnovation {
            sample: state.steps,
            variance: innovation,
        });
    }
    let err = z - (x[0] + x[wi]);
    state.x = x
        .iter()
        .zip(&mg)
        .map(|(xi, g)| xi + g / innovation * err)
        .collect();
    // mg_i mg_j is commutative, so the update keeps M symmetric
    let inv = 1.0 / innovation;
    for (i, row) in m.chunks_exact_mut(n).enumerate() {
        let gi = mg[i];
        for (v, gj) in row.iter_mut().zip(&mg) {
            *v -= gi * gj * inv;
        }
    }
    state.steps += 1;
    Ok((state.steps > model.d_s).then(|| state.x[model.d_s]))
}

/// Smoother settings shared by both channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub frame_len: usize,
    pub delay: usize,
    pub max_period: usize,
    pub model: ExcitationModel,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            frame_len: 200,
            delay: DEFAULT_SMOOTHER_DELAY,
            max_period: DEFAULT_MAX_PERIOD,
            model: ExcitationModel::Vuv,
        }
    }
}

/// Per-frame parameters for the smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub stp: StpEstimate,
    pub pitch: PitchInfo,
}

/// Smooths one channel with parameters switched at frame boundaries.
///
/// Frame `f` covers samples `f*M .. (f+1)*M`; samples past the last full
/// frame reuse its parameters. The output is delay-compensated: the last
/// `d_s` samples are read from the final state, so output and input have the
/// same length.
pub fn enhance_channel(z: &[f64], params: &[FrameParams], cfg: &SmootherConfig) -> Result<Vec<f64>> {
    let m = cfg.frame_len;
    if m == 0 || z.len() < m {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one frame of {m}",
            z.len()
        )));
    }
    let frames = z.len() / m;
    if params.len() != frames {
        return Err(Error::invalid(format!(
            "{} parameter sets for {frames} frames",
            params.len()
        )));
    }
    let models = frame_models(params, cfg)?;
    let r0 = (z[..m].iter().map(|v| v * v).sum::<f64>() / m as f64).max(f64::MIN_POSITIVE);
    let mut state = SmootherState::initial(&models[0].0, r0);
    let mut out = Vec::with_capacity(z.len());
    for (n, &zn) in z.iter().enumerate() {
        let f = (n / m).min(frames - 1);
        let (main, boundary) = &models[f];
        let last_in_frame = (n + 1) % m == 0 && f + 1 < frames;
        let model = if last_in_frame { boundary } else { main };
        if let Some(s) = flks_step(&mut state, model, zn).map_err(|e| e.at_frame(f))? {
            out.push(s);
        }
    }
    let d_s = cfg.delay;
    let tail = state.speech_block(d_s);
    let missing = z.len() - out.len();
    out.extend(tail[..missing].iter().rev());
    Ok(out)
}

/// Per frame: the model used inside the frame and the one for its last
/// sample. The V-UV excitation runs one sample ahead, so at a boundary the
/// excitation half comes from the next frame.
fn frame_models(
    params: &[FrameParams],
    cfg: &SmootherConfig,
) -> Result<Vec<(StateSpaceModel, StateSpaceModel)>> {
    let build = |speech: &ArModel, noise: &ArModel, pitch: &PitchInfo| match cfg.model {
        ExcitationModel::Uv => build_uv_model(speech, noise, cfg.delay),
        ExcitationModel::Vuv => build_vuv_model(speech, noise, pitch, cfg.delay, cfg.max_period),
    };
    params
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let main = build(&p.stp.speech, &p.stp.noise, &p.pitch).map_err(|e| e.at_frame(f))?;
            let boundary = match (cfg.model, params.get(f + 1)) {
                (ExcitationModel::Vuv, Some(next)) => {
                    let speech = p.stp.speech.with_variance(next.stp.speech.excitation_variance());
                    build(&speech, &p.stp.noise, &next.pitch).map_err(|e| e.at_frame(f + 1))?
                }
                _ => main.clone(),
            };
            Ok((main, boundary))
        })
        .collect()
}
