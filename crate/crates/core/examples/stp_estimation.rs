// Codebook-based estimation of speech and noise short-term predictor
// parameters from one two-ear frame.
//
// The speech codebook holds three vowel envelopes and the noise codebook two
// babble envelopes. A frame is synthesized from one known pair; the
// estimator reports the posterior over pairs and the fitted variances.
//
// ```bash
// cargo run --example stp_estimation
// ```

use binaural_kalman::codebook::{Codebook, CodebookKind};
use binaural_kalman::signal::Dft;
use binaural_kalman::stp::StpEstimator;
use binaural_kalman::synth;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 8000.0;
    let speech = vec![
        synth::formant_model(&[(700.0, 80.0), (1200.0, 90.0), (2600.0, 150.0)], fs, 14, 1.0)?,
        synth::formant_model(&[(300.0, 60.0), (2300.0, 100.0), (3000.0, 150.0)], fs, 14, 1.0)?,
        synth::formant_model(&[(500.0, 70.0), (900.0, 80.0), (2400.0, 150.0)], fs, 14, 1.0)?,
    ];
    let noise = vec![
        synth::formant_model(&[(600.0, 150.0), (1500.0, 200.0)], fs, 14, 1.0)?,
        synth::formant_model(&[(350.0, 120.0), (2000.0, 200.0)], fs, 14, 1.0)?,
    ];
    let speech_cb = Codebook::from_models(CodebookKind::Speech, &speech)?;
    let noise_cb = Codebook::from_models(CodebookKind::Noise, &noise)?;

    // true pair (1, 0), speech and noise excitation variances 1e-3 and 2e-4
    let m = 200;
    let mut rng = synth::rng(5);
    let s = synth::ar_process(&mut rng, &speech[1].with_variance(1e-3), m, 400);
    let channels: Vec<Vec<f64>> = (0..2)
        .map(|_| synth::add(&s, &synth::ar_process(&mut rng, &noise[0].with_variance(2e-4), m, 400)))
        .collect();

    let dft = Dft::new(m);
    let spectra: Vec<_> = channels.iter().map(|x| dft.periodogram(x)).collect();
    let obs: Vec<_> = spectra.iter().collect();
    let estimator = StpEstimator::new(&speech_cb, &noise_cb, m)?;
    let (estimate, diag) = estimator.estimate(&obs, None, 0)?;

    println!("posterior over (speech, noise) pairs:");
    for (idx, w) in diag.weights.iter().enumerate() {
        println!("  ({}, {}): {w:.4}", idx / noise.len(), idx % noise.len());
    }
    println!(
        "best pair ({}, {}), speech variance {:.3e}, noise variance {:.3e}",
        diag.best_speech,
        diag.best_noise,
        estimate.speech.excitation_variance(),
        estimate.noise.excitation_variance()
    );
    if (diag.best_speech, diag.best_noise) != (1, 0) {
        return Err("estimator missed the true pair".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
