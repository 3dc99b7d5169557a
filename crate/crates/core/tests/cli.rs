use std::path::Path;
use std::process::Command;

use binaural_kalman::cli::{read_wav, write_wav};
use binaural_kalman::codebook::Codebook;
use binaural_kalman::signal::AudioBuffer;
use binaural_kalman::synth::{self, SceneSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binaural-kalman"))
}

fn scene(dir: &Path) -> (String, String, String) {
    let fs = 8000.0;
    let s = SceneSpec {
        len: 4000,
        frame_len: 200,
        speech_models: vec![
            synth::formant_model(&[(700.0, 80.0), (1200.0, 90.0)], fs, 14, 1e-3).unwrap(),
            synth::formant_model(&[(300.0, 60.0), (2300.0, 100.0)], fs, 14, 2e-3).unwrap(),
        ],
        babble_models: vec![synth::formant_model(&[(500.0, 200.0)], fs, 14, 1e-3).unwrap()],
        babble_talkers: 1,
        speech_hold: 2,
        babble_hold: 4,
        pitch: Some((64, 0.8)),
        itd: 0,
        ild_gain: 1.0,
        snr_db: 5.0,
        seed: 12,
    }
    .render();
    let write = |name: &str, x: &[Vec<f64>; 2]| {
        let p = dir.join(name);
        write_wav(&p, &AudioBuffer::stereo(x[0].clone(), x[1].clone(), 8000).unwrap()).unwrap();
        p.to_string_lossy().into_owned()
    };
    (write("clean.wav", &s.clean), write("noise.wav", &s.noise), write("noisy.wav", &s.noisy))
}

fn codebooks(dir: &Path, clean: &str, noise: &str) -> (String, String) {
    let sp = dir.join("s.cbk").to_string_lossy().into_owned();
    let np = dir.join("n.cbk").to_string_lossy().into_owned();
    let st = bin().args(["train", "--kind", "speech", "--size", "3", "-o", &sp, clean]).output().unwrap().status;
    let nt = bin().args(["train", "--kind", "noise", "--size", "2", "--seed", "4", "-o", &np, noise]).output().unwrap().status;
    assert!(st.success() && nt.success());
    (sp, np)
}

#[test]
fn train_enhance_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noise, noisy) = scene(dir.path());
    let (sp, np) = codebooks(dir.path(), &clean, &noise);
    assert_eq!(Codebook::load(&sp).unwrap().len(), 3);

    let out = dir.path().join("out.wav").to_string_lossy().into_owned();
    let diag = dir.path().join("stp.csv").to_string_lossy().into_owned();
    let st = bin()
        .args(["enhance", "--speech-cb", &sp, "--noise-cb", &np, "--model", "uv", "--diagnostics", &diag, "-o", &out, &noisy])
        .status()
        .unwrap();
    assert!(st.success());
    let enhanced = read_wav(Path::new(&out)).unwrap();
    assert_eq!(enhanced.len(), 4000);
    assert_eq!(enhanced.channel_count(), 2);
    let csv = std::fs::read_to_string(&diag).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "frame,best_i,best_j,log_weight,sigma_d2,sigma_v2");
    assert_eq!(csv.lines().count(), 21);

    let o = bin().args(["eval", "--clean", &clean, "--enhanced", &out]).output().unwrap();
    assert!(o.status.success());
    let line = String::from_utf8(o.stdout).unwrap();
    for key in ["\"segsnr_l\"", "\"segsnr_r\"", "\"itd\"", "\"ild\""] {
        assert!(line.contains(key), "{line}");
    }
}

#[test]
fn bilateral_diagnostics_split_per_ear() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noise, noisy) = scene(dir.path());
    let (sp, np) = codebooks(dir.path(), &clean, &noise);
    let out = dir.path().join("out.wav").to_string_lossy().into_owned();
    let diag = dir.path().join("d.csv");
    let st = bin()
        .args(["enhance", "--mode", "bilateral", "--model", "uv", "--speech-cb", &sp, "--noise-cb", &np])
        .args(["--diagnostics", diag.to_str().unwrap(), "-o", &out, &noisy])
        .status()
        .unwrap();
    assert!(st.success());
    assert!(dir.path().join("d_left.csv").exists());
    assert!(dir.path().join("d_right.csv").exists());
}

#[test]
fn pitch_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, _, _) = scene(dir.path());
    let o = bin().args(["pitch", &clean]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "frame,f0_hz,period_samples,voicing,order");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.len() == 5));
    // 125 Hz talker: most voiced frames land near the true period of 64
    let near = rows
        .iter()
        .filter(|r| r[2].parse::<i64>().map_or(false, |p| (p - 64).abs() <= 1))
        .count();
    assert!(near >= 10, "{text}");
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noise, noisy) = scene(dir.path());
    let o = bin().args(["train", "--kind", "speech", "--size", "0", "-o", "x.cbk", &clean]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train"));

    // mono file in binaural mode
    let mono = dir.path().join("mono.wav");
    write_wav(&mono, &AudioBuffer::mono(vec![0.1; 800], 8000).unwrap()).unwrap();
    let (sp, np) = codebooks(dir.path(), &clean, &noise);
    let o = bin()
        .args(["enhance", "--speech-cb", &sp, "--noise-cb", &np, "-o", "/dev/null", mono.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    // rate mismatch
    let fast = dir.path().join("fast.wav");
    write_wav(&fast, &AudioBuffer::stereo(vec![0.1; 800], vec![0.1; 800], 16000).unwrap()).unwrap();
    let o = bin()
        .args(["enhance", "--speech-cb", &sp, "--noise-cb", &np, "-o", "/dev/null", fast.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = bin().args(["enhance", "-o", "x.wav", &noisy]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn single_channel_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noise, noisy) = scene(dir.path());
    let (sp, np) = codebooks(dir.path(), &clean, &noise);
    let left = read_wav(Path::new(&noisy)).unwrap().channel(0).to_vec();
    let mono = dir.path().join("mono.wav");
    write_wav(&mono, &AudioBuffer::mono(left, 8000).unwrap()).unwrap();
    let out = dir.path().join("out.wav");
    let st = bin()
        .args(["enhance", "--mode", "single", "--model", "uv", "--speech-cb", &sp, "--noise-cb", &np])
        .args(["-o", out.to_str().unwrap(), mono.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(read_wav(&out).unwrap().channel_count(), 1);
}

#[test]
fn likelihood_surface_rows() {
    let o = bin().args(["likelihood-surface", "--points", "3"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
}
