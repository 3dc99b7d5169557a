// Train a small speech codebook with the generalized Lloyd algorithm,
// write it in the CBK1 format and load it back.
//
// ```bash
// cargo run --example train_codebook
// ```

use binaural_kalman::codebook::{train, Codebook, CodebookKind};
use binaural_kalman::signal::{Channel, Frame};
use binaural_kalman::synth::{self, SceneSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let vowels = [
        [(700.0, 80.0), (1200.0, 90.0), (2600.0, 150.0)],
        [(300.0, 60.0), (2300.0, 100.0), (3000.0, 150.0)],
        [(500.0, 70.0), (900.0, 80.0), (2400.0, 150.0)],
    ];
    let speech = vowels
        .iter()
        .map(|f| synth::formant_model(f, 8000.0, 14, 1e-3))
        .collect::<Result<Vec<_>, _>>()?;
    let scene = SceneSpec {
        len: 24_000,
        frame_len: 200,
        speech_models: speech,
        babble_models: vec![synth::formant_model(&[(500.0, 200.0)], 8000.0, 14, 1e-3)?],
        babble_talkers: 1,
        speech_hold: 4,
        babble_hold: 1,
        pitch: None,
        itd: 0,
        ild_gain: 1.0,
        snr_db: 60.0,
        seed: 3,
    }
    .render();
    let frames: Vec<Frame> = scene.clean[0]
        .chunks_exact(200)
        .enumerate()
        .map(|(i, c)| Frame::new(c.to_vec(), i, Channel::Left))
        .collect();

    let training = train(&frames, 3, 14, 11, CodebookKind::Speech)?;
    println!("{} training vectors", training.training_vectors);
    for (i, d) in training.distortion.iter().enumerate() {
        println!("  iteration {:2}: distortion {d:.3e}", i + 1);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("speech.cbk");
    training.codebook.save(&path)?;
    let loaded = Codebook::load(&path)?;
    println!(
        "saved and reloaded {} entries of order {} ({} bytes)",
        loaded.len(),
        loaded.order(),
        std::fs::metadata(&path)?.len()
    );
    if loaded != training.codebook {
        return Err("codebook changed on reload".into());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
