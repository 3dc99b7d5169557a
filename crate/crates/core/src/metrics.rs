//! Objective measures: segmental SNR and interaural cue errors.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::{cross_spectrum, Dft};

pub const SEGSNR_MIN: f64 = -10.0;
pub const SEGSNR_MAX: f64 = 35.0;
/// Frame length for the cross-spectra of the ITD measure.
pub const ITD_FRAME_LEN: usize = 256;
/// Clean cross-spectrum bins below this fraction of the maximum are skipped.
pub const ITD_MAGNITUDE_FLOOR: f64 = 1e-10;

/// Mean over `seg_len` segments of `10 log10(|s|^2 / |s - s_hat|^2)`, each
/// clamped to `[SEGSNR_MIN, SEGSNR_MAX]`. A trailing partial segment is
/// ignored.
pub fn segmental_snr(clean: &[f64], processed: &[f64], seg_len: usize) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::invalid(format!(
            "clean has {} samples, processed {}",
            clean.len(),
            processed.len()
        )));
    }
    if seg_len == 0 || clean.len() < seg_len {
        return Err(Error::invalid("no complete segment"));
    }
    let snrs: Vec<f64> = clean
        .chunks_exact(seg_len)
        .zip(processed.chunks_exact(seg_len))
        .map(|(s, p)| {
            let sig: f64 = s.iter().map(|v| v * v).sum();
            let err: f64 = s.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            let db = if err == 0.0 {
                SEGSNR_MAX
            } else if sig == 0.0 {
                SEGSNR_MIN
            } else {
                10.0 * (sig / err).log10()
            };
            db.clamp(SEGSNR_MIN, SEGSNR_MAX)
        })
        .collect();
    Ok(snrs.iter().sum::<f64>() / snrs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterauralReport {
    /// Mean normalized phase error of the interaural cross spectrum, in `[0, 1]`.
    pub itd_error: f64,
    /// Absolute level-ratio error in dB.
    pub ild_error: f64,
}

/// Phase wrapped to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// ITD and ILD errors of an enhanced pair against the clean pair, with
/// non-overlapping rectangular frames of `ITD_FRAME_LEN`.
pub fn interaural_errors(
    clean_l: &[f64],
    clean_r: &[f64],
    enh_l: &[f64],
    enh_r: &[f64],
) -> Result<InterauralReport> {
    interaural_errors_with(clean_l, clean_r, enh_l, enh_r, ITD_FRAME_LEN)
}

pub fn interaural_errors_with(
    clean_l: &[f64],
    clean_r: &[f64],
    enh_l: &[f64],
    enh_r: &[f64],
    frame_len: usize,
) -> Result<InterauralReport> {
    let n = clean_l.len();
    if [clean_r.len(), enh_l.len(), enh_r.len()].iter().any(|&l| l != n) {
        return Err(Error::invalid("all four signals must have the same length"));
    }
    if frame_len == 0 || n < frame_len {
        return Err(Error::invalid("signals shorter than one ITD frame"));
    }
    let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let (pcl, pcr, pel, per) = (power(clean_l), power(clean_r), power(enh_l), power(enh_r));
    if [pcl, pcr, pel, per].iter().any(|&p| p == 0.0) {
        return Err(Error::UndefinedMetric("a channel has zero power".into()));
    }
    let ild_error = (10.0 * ((pel / per) / (pcl / pcr)).log10()).abs();

    let dft = Dft::new(frame_len);
    let frames: Vec<_> = (0..n / frame_len)
        .map(|f| {
            let r = f * frame_len..(f + 1) * frame_len;
            (
                cross_spectrum(&dft, &clean_l[r.clone()], &clean_r[r.clone()]),
                cross_spectrum(&dft, &enh_l[r.clone()], &enh_r[r]),
            )
        })
        .collect();
    let max = frames
        .iter()
        .flat_map(|(c, _)| c.iter().map(|v| v.norm()))
        .fold(0.0, f64::max);
    let floor = ITD_MAGNITUDE_FLOOR * max;
    let (mut sum, mut count) = (0.0, 0usize);
    for (clean, enh) in &frames {
        for (c, e) in clean.iter().zip(enh) {
            if c.norm() < floor || c.norm() == 0.0 {
                continue;
            }
            sum += wrap_phase(e.arg() - c.arg()).abs() / PI;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("clean cross spectrum is zero".into()));
    }
    Ok(InterauralReport {
        itd_error: sum / count as f64,
        ild_error,
    })
}
