// The command-line workflow driven in-process: write WAV files, train both
// codebooks, enhance, evaluate and dump a pitch track.
//
// The same steps with the installed binary:
//
// ```bash
// binaural-kalman train --kind speech --size 4 -o speech.cbk clean.wav
// binaural-kalman train --kind noise --size 2 -o noise.cbk noise.wav
// binaural-kalman enhance --speech-cb speech.cbk --noise-cb noise.cbk -o out.wav noisy.wav
// binaural-kalman eval --clean clean.wav --enhanced out.wav
// ```

use binaural_kalman::cli::{run, write_wav};
use binaural_kalman::signal::AudioBuffer;
use binaural_kalman::synth::{self, SceneSpec};

fn invoke(args: &[&str]) -> Result<String, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["binaural-kalman"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(String::from_utf8(out)?)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 8000.0;
    let scene = SceneSpec {
        len: 8000,
        frame_len: 200,
        speech_models: vec![
            synth::formant_model(&[(700.0, 80.0), (1200.0, 90.0)], fs, 14, 1e-3)?,
            synth::formant_model(&[(300.0, 60.0), (2300.0, 100.0)], fs, 14, 2e-3)?,
        ],
        babble_models: vec![synth::formant_model(&[(500.0, 200.0)], fs, 14, 1e-3)?],
        babble_talkers: 2,
        speech_hold: 4,
        babble_hold: 8,
        pitch: Some((64, 0.8)),
        itd: 0,
        ild_gain: 1.0,
        snr_db: 3.0,
        seed: 4,
    }
    .render();
    let dir = tempfile::tempdir()?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let stereo = |x: &[Vec<f64>; 2]| AudioBuffer::stereo(x[0].clone(), x[1].clone(), 8000);
    write_wav(path("clean.wav").as_ref(), &stereo(&scene.clean)?)?;
    write_wav(path("noise.wav").as_ref(), &stereo(&scene.noise)?)?;
    write_wav(path("noisy.wav").as_ref(), &stereo(&scene.noisy)?)?;

    print!("{}", invoke(&["train", "--kind", "speech", "--size", "4", "-o", &path("speech.cbk"), &path("clean.wav")])?);
    print!("{}", invoke(&["train", "--kind", "noise", "--size", "2", "-o", &path("noise.cbk"), &path("noise.wav")])?);
    print!(
        "{}",
        invoke(&[
            "enhance",
            "--speech-cb",
            &path("speech.cbk"),
            "--noise-cb",
            &path("noise.cbk"),
            "--diagnostics",
            &path("stp.csv"),
            "-o",
            &path("enhanced.wav"),
            &path("noisy.wav"),
        ])?
    );
    print!("noisy:    {}", invoke(&["eval", "--clean", &path("clean.wav"), "--enhanced", &path("noisy.wav")])?);
    print!("enhanced: {}", invoke(&["eval", "--clean", &path("clean.wav"), "--enhanced", &path("enhanced.wav")])?);

    let track = invoke(&["pitch", &path("clean.wav")])?;
    for line in track.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
