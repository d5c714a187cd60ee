use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use cpsurf::specfit::{fit_spectrum, voigt, FitModel, SpectrumDataset};

#[test]
#[ignore]
fn bench_fit() {
    let mut rng = Pcg64::seed_from_u64(99);
    let raw: Vec<(f64, f64)> = (0..101)
        .map(|i| {
            let x = -75e3 + i as f64 * 1.5e3;
            // Gaussian-ish noise from the sum of uniforms, unit std.
            let noise: f64 = (0..6).map(|_| rng.gen_range(-1.0..1.0f64)).sum::<f64>() / 1.414;
            let y = 0.02
                + voigt(x, 0.0, 4.0e3, 4.0e3, 1.05e4, 0.0).unwrap()
                + voigt(x, -15.8e3, 4.0e3, 4.0e3, 0.26e4, 0.0).unwrap()
                + 0.04 * noise;
            (x, y)
        })
        .collect();
    let max = raw.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = raw.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let pts: Vec<(f64, f64)> = raw.iter().map(|&(x, y)| (x, (y - min) / (max - min))).collect();
    let ds = SpectrumDataset::new(pts, "bench").unwrap();
    let t0 = std::time::Instant::now();
    let fit = fit_spectrum(&ds, FitModel::DoubleVoigt, 5, 0).unwrap();
    println!("single fit: {:?}, sep = {:?}", t0.elapsed(), fit.parameter("separation_hz"));
    let t0 = std::time::Instant::now();
    let fit = fit_spectrum(&ds, FitModel::DoubleVoigt, 5, 2000).unwrap();
    let sep = fit.peak_separation.unwrap();
    println!(
        "fit + 2000 bootstrap: {:?}, sep {:.1} [{:.1}, {:.1}]",
        t0.elapsed(),
        sep.value_hz,
        sep.ci_lower_hz,
        sep.ci_upper_hz
    );
}

#[test]
#[ignore]
fn bias_scan() {
    let make = |seed: u64| -> SpectrumDataset {
        let mut rng = Pcg64::seed_from_u64(seed);
        let raw: Vec<(f64, f64)> = (0..101)
            .map(|i| {
                let x = -75e3 + i as f64 * 1.5e3;
                let noise: f64 = (0..6).map(|_| rng.gen_range(-1.0..1.0f64)).sum::<f64>() / 1.414;
                let y = 0.02
                    + voigt(x, 0.0, 4.0e3, 4.0e3, 1.05e4, 0.0).unwrap()
                    + voigt(x, -15.8e3, 4.0e3, 4.0e3, 0.26e4, 0.0).unwrap()
                    + 0.04 * noise;
                (x, y)
            })
            .collect();
        let max = raw.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let min = raw.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        SpectrumDataset::new(
            raw.iter().map(|&(x, y)| (x, (y - min) / (max - min))).collect(),
            "b",
        )
        .unwrap()
    };
    let mut seps = vec![];
    for seed in 0..40u64 {
        let ds = make(seed);
        let fit = fit_spectrum(&ds, FitModel::DoubleVoigt, 1, 0).unwrap();
        let sep = fit.parameter("separation_hz").unwrap();
        seps.push(sep);
    }
    let n = seps.len() as f64;
    let mean = seps.iter().sum::<f64>() / n;
    let sd = (seps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let worst = seps.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = seps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("sep over 40 seeds: mean {:.1} sd {:.1} range [{:.1}, {:.1}]", mean, sd, worst, best);
}
