#[allow(dead_code)]
mod linear_prediction {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/linear_prediction.rs"));
}

#[test]
fn linear_prediction_example_runs() {
    linear_prediction::run_example().expect("linear_prediction example should run");
}

#[allow(dead_code)]
mod train_codebook {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/train_codebook.rs"));
}

#[test]
fn train_codebook_example_runs() {
    train_codebook::run_example().expect("train_codebook example should run");
}

#[allow(dead_code)]
mod stp_estimation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/stp_estimation.rs"));
}

#[test]
fn stp_estimation_example_runs() {
    stp_estimation::run_example().expect("stp_estimation example should run");
}

#[allow(dead_code)]
mod pitch_tracking {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pitch_tracking.rs"));
}

#[test]
fn pitch_tracking_example_runs() {
    pitch_tracking::run_example().expect("pitch_tracking example should run");
}

#[allow(dead_code)]
mod kalman_smoother {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/kalman_smoother.rs"));
}

#[test]
fn kalman_smoother_example_runs() {
    kalman_smoother::run_example().expect("kalman_smoother example should run");
}

#[allow(dead_code)]
mod interaural_cues {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/interaural_cues.rs"));
}

#[test]
fn interaural_cues_example_runs() {
    interaural_cues::run_example().expect("interaural_cues example should run");
}

#[allow(dead_code)]
mod likelihood_surface {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/likelihood_surface.rs"));
}

#[test]
fn likelihood_surface_example_runs() {
    likelihood_surface::run_example().expect("likelihood_surface example should run");
}

#[allow(dead_code)]
mod binaural_enhancement {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/binaural_enhancement.rs"));
}

#[test]
fn binaural_enhancement_example_runs() {
    binaural_enhancement::run_example().expect("binaural_enhancement example should run");
}

#[allow(dead_code)]
mod command_line {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/command_line.rs"));
}

#[test]
fn command_line_example_runs() {
    command_line::run_example().expect("command_line example should run");
}
