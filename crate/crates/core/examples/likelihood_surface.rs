// Likelihood of one frame as a function of the speech and noise excitation
// variances, for the true AR pair. The peak sits at the true variances and
// the surface falls off steeply around it.
//
// ```bash
// cargo run --example likelihood_surface
// ```

use binaural_kalman::linpred::{ar_envelope, ArModel};
use binaural_kalman::signal::Dft;
use binaural_kalman::stp::{likelihood_surface, log_grid};
use binaural_kalman::synth;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let m = 200;
    let speech = ArModel::new(vec![1.3, -0.6], 1e-3)?;
    let noise = ArModel::new(vec![-0.5], 1e-3)?;
    let mut rng = synth::rng(0);
    let frames: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            synth::add(
                &synth::ar_process(&mut rng, &speech, m, 500),
                &synth::ar_process(&mut rng, &noise, m, 500),
            )
        })
        .collect();
    let dft = Dft::new(m);
    let spectra: Vec<_> = frames.iter().map(|f| dft.periodogram(f)).collect();
    let obs: Vec<_> = spectra.iter().collect();

    let grid = log_grid(1e-5, 1e-1, 41);
    let rows = likelihood_surface(&obs, &ar_envelope(&speech, m)?, &ar_envelope(&noise, m)?, m, &grid, &grid)?;
    let peak = rows.iter().cloned().fold((0.0, 0.0, f64::NEG_INFINITY), |a, r| if r.2 > a.2 { r } else { a });
    println!("peak at speech {:.2e}, noise {:.2e} (true 1e-3, 1e-3)", peak.0, peak.1);

    // coarse text rendering, rows = speech variance, columns = noise variance
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '@'];
    for i in (0..grid.len()).step_by(4) {
        let line: String = (0..grid.len())
            .step_by(2)
            .map(|j| {
                let rel = rows[i * grid.len() + j].2 - peak.2;
                let level = ((rel / 200.0 + 1.0).max(0.0) * 8.0).round() as usize;
                shades[level.min(8)]
            })
            .collect();
        println!("{:9.1e} |{line}|", grid[i]);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
