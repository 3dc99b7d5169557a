// Linear prediction basics: fit an AR model to a synthetic vowel with
// Levinson-Durbin, move it to line spectral frequencies and back, and
// compare the fitted envelope with the true one.
//
// ```bash
// cargo run --example linear_prediction
// ```

use binaural_kalman::linpred::{ar_envelope, ar_to_lsf, levinson_durbin, lsf_to_ar};
use binaural_kalman::signal::autocorrelation_of;
use binaural_kalman::synth;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let truth = synth::formant_model(&[(700.0, 80.0), (1200.0, 90.0), (2600.0, 150.0)], 8000.0, 14, 1e-3)?;
    let mut rng = synth::rng(7);
    let x = synth::ar_process(&mut rng, &truth, 4000, 500);

    let r = autocorrelation_of(&x, 14)?;
    let fitted = levinson_durbin(&r)?;
    println!("fitted order {} excitation variance {:.3e}", fitted.order(), fitted.excitation_variance());

    let lsf = ar_to_lsf(&fitted)?;
    let hz: Vec<String> = lsf
        .as_slice()
        .iter()
        .map(|w| format!("{:.0}", w * 8000.0 / (2.0 * std::f64::consts::PI)))
        .collect();
    println!("LSF (Hz): {}", hz.join(" "));

    let back = lsf_to_ar(&lsf)?;
    let drift = fitted
        .coefficients()
        .iter()
        .zip(back.coefficients())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("LSF round trip max coefficient error {drift:.2e}");

    // log-spectral distance between true and fitted envelopes
    let k = 256;
    let te = ar_envelope(&truth, k)?.scaled(truth.excitation_variance());
    let fe = ar_envelope(&fitted, k)?.scaled(fitted.excitation_variance());
    let lsd = (te
        .bins()
        .iter()
        .zip(fe.bins())
        .map(|(a, b)| (10.0 * (a / b).log10()).powi(2))
        .sum::<f64>()
        / k as f64)
        .sqrt();
    println!("log-spectral distance {lsd:.2} dB");
    if drift > 1e-6 || lsd > 3.0 {
        return Err("linear prediction fit is off".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
