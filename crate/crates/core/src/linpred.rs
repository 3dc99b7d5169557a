//! Linear prediction: Levinson-Durbin, AR <-> line spectral frequency
//! conversion and AR spectral envelopes.
//!
//! Coefficients are stored in prediction form, `s(n) = sum_i a_i s(n-i) + u(n)`.
//! The inverse filter `A(z) = 1 - sum_i a_i z^-i` is formed where needed.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::Spectrum;

/// Grid density used to bracket LSF roots before bisection.
pub const LSF_SCAN_POINTS: usize = 4096;
const LSF_TOLERANCE: f64 = 1e-12;

/// Autoregressive model: prediction coefficients and excitation variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    coefficients: Vec<f64>,
    excitation_variance: f64,
}

impl ArModel {
    /// Builds a model, rejecting non-finite values, negative variance and
    /// unstable inverse filters.
    pub fn new(coefficients: Vec<f64>, excitation_variance: f64) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite AR coefficient"));
        }
        if !(excitation_variance.is_finite() && excitation_variance >= 0.0) {
            return Err(Error::invalid(format!(
                "excitation variance {excitation_variance} must be finite and >= 0"
            )));
        }
        let model = Self {
            coefficients,
            excitation_variance,
        };
        if !model.is_stable() {
            return Err(Error::invalid("AR model is not stable"));
        }
        Ok(model)
    }

    /// All-zero coefficients: a white process.
    pub fn white(order: usize, excitation_variance: f64) -> Self {
        Self {
            coefficients: vec![0.0; order],
            excitation_variance,
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn excitation_variance(&self) -> f64 {
        self.excitation_variance
    }

    pub fn with_variance(&self, excitation_variance: f64) -> Self {
        Self {
            coefficients: self.coefficients.clone(),
            excitation_variance,
        }
    }

    /// `[1, -a_1, ..., -a_P]`.
    pub fn inverse_filter(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.coefficients.iter().map(|a| -a))
            .collect()
    }

    /// Reflection coefficients by the step-down recursion, or `None` if one
    /// reaches the unit circle.
    pub fn reflection_coefficients(&self) -> Option<Vec<f64>> {
        let p = self.order();
        // work on the inverse filter tail alpha_j = -a_j
        let mut alpha: Vec<f64> = self.coefficients.iter().map(|a| -a).collect();
        let mut ks = vec![0.0; p];
        for m in (0..p).rev() {
            let k = alpha[m];
            if !(k.abs() < 1.0) {
                return None;
            }
            ks[m] = -k;
            let denom = 1.0 - k * k;
            let prev: Vec<f64> = (0..m)
                .map(|j| (alpha[j] - k * alpha[m - 1 - j]) / denom)
                .collect();
            alpha.truncate(m);
            alpha.copy_from_slice(&prev);
        }
        Some(ks)
    }

    pub fn is_stable(&self) -> bool {
        self.reflection_coefficients().is_some()
    }
}

/// Line spectral frequencies: strictly increasing, inside `(0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfVector {
    frequencies: Vec<f64>,
}

impl LsfVector {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("empty LSF vector"));
        }
        if frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0 && *w < PI)) {
            return Err(Error::invalid("LSF outside (0, pi)"));
        }
        if frequencies.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("LSFs not strictly increasing"));
        }
        Ok(Self { frequencies })
    }

    pub fn order(&self) -> usize {
        self.frequencies.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.frequencies
    }

    pub fn squared_distance(&self, other: &LsfVector) -> f64 {
        squared_distance(&self.frequencies, &other.frequencies)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Output of the Levinson-Durbin recursion with its intermediate quantities.
#[derive(Debug, Clone)]
pub struct Recursion {
    pub model: ArModel,
    pub reflection: Vec<f64>,
    /// Prediction error after each order, starting with `r(0)`.
    pub errors: Vec<f64>,
}

/// Solves the order-`P` normal equations for `autocorr = r(0..=P)`.
pub fn levinson_durbin(autocorr: &[f64]) -> Result<ArModel> {
    levinson_durbin_full(autocorr).map(|r| r.model)
}

pub fn levinson_durbin_full(autocorr: &[f64]) -> Result<Recursion> {
    let r0 = *autocorr
        .first()
        .ok_or_else(|| Error::invalid("empty autocorrelation"))?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::invalid(format!("r(0) = {r0} must be positive")));
    }
    let p = autocorr.len() - 1;
    let mut a = vec![0.0; p];
    let mut err = r0;
    let mut errors = Vec::with_capacity(p + 1);
    let mut reflection = Vec::with_capacity(p);
    errors.push(err);
    for i in 1..=p {
        let acc = autocorr[i] - (1..i).map(|j| a[j - 1] * autocorr[i - j]).sum::<f64>();
        let k = acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::NumericalDegeneracy(format!(
                "reflection coefficient {k} at order {i}"
            )));
        }
        let prev = a[..i - 1].to_vec();
        for j in 1..i {
            a[j - 1] = prev[j - 1] - k * prev[i - j - 1];
        }
        a[i - 1] = k;
        err *= 1.0 - k * k;
        reflection.push(k);
        errors.push(err);
    }
    Ok(Recursion {
        model: ArModel {
            coefficients: a,
            excitation_variance: err,
        },
        reflection,
        errors,
    })
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Divides by `1 + sign * z^-1` (exact when the root is present).
fn deflate(poly: &[f64], sign: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(poly.len() - 1);
    let mut carry = 0.0;
    for &c in &poly[..poly.len() - 1] {
        let q = c - sign * carry;
        out.push(q);
        carry = q;
    }
    out
}

/// `e^{i w D/2} * sum_k c_k e^{-i w k}` for a symmetric polynomial; real.
fn symmetric_eval(c: &[f64], w: f64) -> f64 {
    let d = (c.len() - 1) as f64;
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * ((d / 2.0 - k as f64) * w).cos())
        .sum()
}

fn bracket_roots(c: &[f64], points: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = PI / points as f64;
    let mut w0 = 0.0;
    let mut f0 = symmetric_eval(c, w0);
    for j in 1..=points {
        let w1 = if j == points { PI } else { j as f64 * step };
        let f1 = symmetric_eval(c, w1);
        if f0 == 0.0 && w0 > 0.0 {
            roots.push(w0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (w0, w1, f0);
            while hi - lo > LSF_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let fm = symmetric_eval(c, mid);
                if fm * flo > 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        w0 = w1;
        f0 = f1;
    }
    roots
}

/// The symmetric and antisymmetric sum/difference polynomials of `A(z)`
/// with their trivial roots at `z = +-1` removed.
fn split_polynomials(model: &ArModel) -> (Vec<f64>, Vec<f64>) {
    let a = model.inverse_filter();
    let n = a.len() + 1;
    let mut sum = vec![0.0; n];
    let mut diff = vec![0.0; n];
    for (k, &ak) in a.iter().enumerate() {
        sum[k] += ak;
        diff[k] += ak;
        sum[n - 1 - k] += ak;
        diff[n - 1 - k] -= ak;
    }
    if model.order() % 2 == 0 {
        (deflate(&sum, 1.0), deflate(&diff, -1.0))
    } else {
        (sum, deflate(&deflate(&diff, -1.0), 1.0))
    }
}

/// Line spectral frequencies of a stable model.
pub fn ar_to_lsf(model: &ArModel) -> Result<LsfVector> {
    let p = model.order();
    if p == 0 {
        return Err(Error::invalid("order-0 model has no LSFs"));
    }
    if !model.is_stable() {
        return Err(Error::invalid("cannot convert an unstable model to LSFs"));
    }
    let (sym, anti) = split_polynomials(model);
    let (n_sym, n_anti) = (p.div_ceil(2), p / 2);
    let mut points = LSF_SCAN_POINTS;
    loop {
        let rs = bracket_roots(&sym, points);
        let ra = bracket_roots(&anti, points);
        if rs.len() == n_sym && ra.len() == n_anti {
            let mut all: Vec<f64> = rs.into_iter().chain(ra).collect();
            all.sort_by(|x, y| x.total_cmp(y));
            return LsfVector::new(all).map_err(|e| {
                Error::NumericalDegeneracy(format!("LSF roots not separable: {e}"))
            });
        }
        if points >= 1 << 22 {
            return Err(Error::NumericalDegeneracy(format!(
                "found {}+{} LSF roots, expected {n_sym}+{n_anti}",
                rs.len(),
                ra.len()
            )));
        }
        points *= 4;
    }
}

/// Rebuilds prediction coefficients from LSFs; the variance is set to 1.
pub fn lsf_to_ar(lsf: &LsfVector) -> Result<ArModel> {
    let w = lsf.as_slice();
    let p = w.len();
    let mut sym = if p % 2 == 0 { vec![1.0, 1.0] } else { vec![1.0] };
    let mut anti = if p % 2 == 0 {
        vec![1.0, -1.0]
    } else {
        vec![1.0, 0.0, -1.0]
    };
    for (i, wi) in w.iter().enumerate() {
        let quad = [1.0, -2.0 * wi.cos(), 1.0];
        if i % 2 == 0 {
            sym = poly_mul(&sym, &quad);
        } else {
            anti = poly_mul(&anti, &quad);
        }
    }
    let coefficients: Vec<f64> = (1..=p).map(|k| -0.5 * (sym[k] + anti[k])).collect();
    ArModel::new(coefficients, 1.0)
        .map_err(|_| Error::NumericalDegeneracy("LSF reconstruction is unstable".into()))
}

/// `A(k)` on a `K`-point grid: the unnormalized DFT of `[1, -a, 0...]`.
pub fn inverse_filter_response(model: &ArModel, dft_len: usize) -> Vec<Complex64> {
    let inv = model.inverse_filter();
    (0..dft_len)
        .map(|k| {
            let w = -2.0 * PI * k as f64 / dft_len as f64;
            inv.iter()
                .enumerate()
                .map(|(n, c)| Complex64::from_polar(*c, w * n as f64))
                .sum()
        })
        .collect()
}

/// Unit-excitation power envelope `1/|A(k)|^2`, `k = 0..K`.
pub fn ar_envelope(model: &ArModel, dft_len: usize) -> Result<Spectrum> {
    if dft_len < model.order() + 1 {
        return Err(Error::invalid(format!(
            "dft length {dft_len} too short for order {}",
            model.order()
        )));
    }
    let bins = inverse_filter_response(model, dft_len)
        .into_iter()
        .map(|a| 1.0 / a.norm_sqr())
        .collect();
    Spectrum::new(bins)
}
