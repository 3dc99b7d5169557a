// End-to-end enhancement of a synthetic two-ear scene: a voiced talker in
// front of the listener plus diffuse two-talker babble.
//
// Codebooks are trained on separate renderings of the talker and the babble,
// then the noisy scene is enhanced in binaural and bilateral mode.
//
// ```bash
// cargo run --example binaural_enhancement
// ```

use binaural_kalman::codebook::{train, Codebook, CodebookKind};
use binaural_kalman::metrics::{interaural_errors, segmental_snr};
use binaural_kalman::pipeline::{Enhancer, Mode, RunConfig};
use binaural_kalman::signal::{AudioBuffer, Channel, Frame};
use binaural_kalman::synth::{self, SceneSpec};

fn frames(x: &[f64]) -> Vec<Frame> {
    x.chunks_exact(200)
        .enumerate()
        .map(|(i, c)| Frame::new(c.to_vec(), i, Channel::Left))
        .collect()
}

fn scene(seed: u64, len: usize, snr_db: f64) -> Result<SceneSpec, Box<dyn std::error::Error>> {
    let fs = 8000.0;
    let vowels = [
        [(700.0, 80.0), (1200.0, 90.0), (2600.0, 150.0)],
        [(300.0, 60.0), (2300.0, 100.0), (3000.0, 150.0)],
        [(500.0, 70.0), (900.0, 80.0), (2400.0, 150.0)],
        [(400.0, 60.0), (1900.0, 100.0), (2700.0, 150.0)],
    ];
    let babble = [
        [(600.0, 150.0), (1500.0, 200.0)],
        [(350.0, 120.0), (2000.0, 200.0)],
        [(800.0, 150.0), (1100.0, 200.0)],
        [(450.0, 120.0), (1700.0, 200.0)],
    ];
    Ok(SceneSpec {
        len,
        frame_len: 200,
        speech_models: vowels
            .iter()
            .enumerate()
            .map(|(i, f)| synth::formant_model(f, fs, 14, 1e-3 * (1.0 + i as f64)))
            .collect::<Result<_, _>>()?,
        babble_models: babble
            .iter()
            .map(|f| synth::formant_model(f, fs, 14, 1e-3))
            .collect::<Result<_, _>>()?,
        babble_talkers: 2,
        speech_hold: 4,
        babble_hold: 8,
        pitch: Some((80, 0.9)),
        itd: 0,
        ild_gain: 1.0,
        snr_db,
        seed,
    })
}

fn codebooks() -> Result<(Codebook, Codebook), Box<dyn std::error::Error>> {
    let training = scene(1, 40_000, 0.0)?.render();
    let speech = train(&frames(&training.clean[0]), 8, 14, 0, CodebookKind::Speech)?;
    let noise = train(&frames(&training.noise[0]), 4, 14, 0, CodebookKind::Noise)?;
    Ok((speech.codebook, noise.codebook))
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (speech_cb, noise_cb) = codebooks()?;
    let test = scene(7, 8000, 0.0)?.render();
    let noisy = AudioBuffer::stereo(test.noisy[0].clone(), test.noisy[1].clone(), 8000)?;
    let dir = tempfile::tempdir()?;

    let mean_segsnr = |out: &AudioBuffer| -> Result<f64, Box<dyn std::error::Error>> {
        let l = segmental_snr(&test.clean[0], out.channel(0), 200)?;
        let r = segmental_snr(&test.clean[1], out.channel(1), 200)?;
        Ok(0.5 * (l + r))
    };
    println!("noisy input: segmental SNR {:.2} dB", mean_segsnr(&noisy)?);

    for mode in [Mode::Binaural, Mode::Bilateral] {
        let cfg = RunConfig {
            mode,
            ..RunConfig::default()
        };
        let enhanced = Enhancer::new(cfg, &speech_cb, &noise_cb)?.process(&noisy)?;
        let cues = interaural_errors(
            &test.clean[0],
            &test.clean[1],
            enhanced.output.channel(0),
            enhanced.output.channel(1),
        )?;
        let voiced = enhanced.analysis[0].iter().filter(|a| a.params.pitch.is_voiced()).count();
        println!(
            "{mode:?}: segmental SNR {:.2} dB, ITD error {:.3}, ILD error {:.2} dB, {voiced}/{} frames voiced",
            mean_segsnr(&enhanced.output)?,
            cues.itd_error,
            cues.ild_error,
            enhanced.analysis[0].len()
        );
        let path = dir.path().join(format!("{mode:?}.wav").to_lowercase());
        binaural_kalman::cli::write_wav(&path, &enhanced.output)?;
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
