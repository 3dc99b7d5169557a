// Harmonic-model pitch estimation on noisy frames, comparing one ear with
// both ears.
//
// ```bash
// cargo run --example pitch_tracking
// ```

use std::f64::consts::PI;

use binaural_kalman::pitch::{DirectivityModel, PitchEstimator, PitchGrid};
use binaural_kalman::synth;
use rand::Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 8000.0;
    let m = 200;
    let estimator = PitchEstimator::new(m, &PitchGrid::with_rate(fs), DirectivityModel::Identity)?;
    let mut rng = synth::rng(21);
    let (mut one, mut two) = (0, 0);
    let trials = 20;
    for _ in 0..trials {
        let f0 = rng.random_range(100.0..250.0);
        let phases: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let clean = synth::harmonic_signal(m, 2.0 * PI * f0 / fs, &[1.0, 0.7, 0.5], &phases);
        let noisy: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let n = synth::white_noise(&mut rng, m, 1.0);
                synth::add(&clean, &synth::scale_to_snr(&clean, &n, 0.0))
            })
            .collect();
        let single = estimator.estimate_real(&[&noisy[0]])?;
        let pair = estimator.estimate_real(&[&noisy[0], &noisy[1]])?;
        let ok = |hz: f64| ((hz - f0) / f0).abs() < 0.2;
        one += ok(single.f0_hz(fs)) as usize;
        two += ok(pair.f0_hz(fs)) as usize;
        println!(
            "f0 {f0:6.1} Hz  one ear {:6.1} Hz  two ears {:6.1} Hz (voicing {:.2}, {} harmonics)",
            single.f0_hz(fs),
            pair.f0_hz(fs),
            pair.voicing,
            pair.harmonic_order
        );
    }
    println!("within 20%: one ear {one}/{trials}, two ears {two}/{trials}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
