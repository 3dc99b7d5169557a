// Fixed-lag Kalman smoothing with known parameters: an AR(2) process in
// white noise at 5 dB, compared against the non-causal Wiener filter that
// knows both spectra.
//
// ```bash
// cargo run --example kalman_smoother
// ```

use binaural_kalman::kalman::{enhance_channel, ExcitationModel, FrameParams, SmootherConfig};
use binaural_kalman::linpred::{ar_envelope, ArModel};
use binaural_kalman::pitch::PitchInfo;
use binaural_kalman::signal::Dft;
use binaural_kalman::stp::StpEstimate;
use binaural_kalman::synth;
use num_complex::Complex64;

fn wiener(z: &[f64], speech: &ArModel, noise_var: f64) -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let n = z.len();
    let ps = ar_envelope(speech, n)?.scaled(speech.excitation_variance());
    let dft = Dft::new(n);
    let mut buf: Vec<Complex64> = z.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft.forward_in_place(&mut buf);
    for (b, s) in buf.iter_mut().zip(ps.bins()) {
        *b *= s / (s + noise_var);
    }
    dft.inverse_in_place(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let speech = ArModel::new(vec![1.6, -0.8], 1e-2)?;
    let mut rng = synth::rng(31);
    let s = synth::ar_process(&mut rng, &speech, 8000, 500);
    let v = synth::scale_to_snr(&s, &synth::white_noise(&mut rng, 8000, 1.0), 5.0);
    let z = synth::add(&s, &v);
    let noise = ArModel::white(1, synth::power(&v));

    let cfg = SmootherConfig {
        model: ExcitationModel::Uv,
        ..Default::default()
    };
    let params: Vec<FrameParams> = (0..z.len() / cfg.frame_len)
        .map(|f| FrameParams {
            stp: StpEstimate {
                speech: speech.clone(),
                noise: noise.clone(),
                frame_index: f,
            },
            pitch: PitchInfo::unvoiced(0.1, 0.0),
        })
        .collect();
    let start = std::time::Instant::now();
    let out = enhance_channel(&z, &params, &cfg)?;
    let elapsed = start.elapsed();

    let oracle = wiener(&z, &speech, noise.excitation_variance())?;
    println!("input SNR        {:6.2} dB", synth::snr_db(&s, &z));
    println!("smoother output  {:6.2} dB ({elapsed:.2?} for {} samples)", synth::snr_db(&s, &out), z.len());
    println!("Wiener oracle    {:6.2} dB", synth::snr_db(&s, &oracle));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
