use rescodec::denoiser::{GaussianDenoiser, QuantNoise};
use rescodec::rd::{gaussian_dataset, peak_projection, sweep, SweepConfig};
use rescodec::{Schedule, ScheduleConfig};

fn world() -> (Schedule, GaussianDenoiser) {
    (
        Schedule::new(ScheduleConfig::default()).unwrap(),
        GaussianDenoiser::new(0.0, 1.0, QuantNoise::EndpointMatched).unwrap(),
    )
}

#[test]
fn gaussian_world_trend() {
    let (s, d) = world();
    let data = gaussian_dataset(4096, 16, 11);
    let cfg = SweepConfig::default();
    let surf = sweep(&cfg, &d, &s, &data).unwrap();
    let peaks = peak_projection(&surf).unwrap();
    for row in &surf.points {
        let line: Vec<String> = row.iter().map(|p| format!("{:.4}", p.distortion)).collect();
        eprintln!("bpp {:.4}: {}", row[0].bpp, line.join(" "));
    }
    eprintln!("{peaks:?}");
    let violations = peaks.windows(2).filter(|w| w[1].1 > w[0].1).count();
    assert!(violations <= 1);
    // Interior optimum in some column.
    let last = *cfg.n_r_grid.last().unwrap();
    let first = cfg.n_r_grid[0];
    assert!(peaks.iter().any(|&(_, n)| n != first && n != last));
}

#[test]
fn exact_latent_prefers_short_chains() {
    let (s, d) = world();
    let data = gaussian_dataset(512, 16, 4);
    let cfg = SweepConfig {
        quant_steps: vec![1e-3],
        n_r_grid: vec![2, 160],
        ..SweepConfig::default()
    };
    let surf = sweep(&cfg, &d, &s, &data).unwrap();
    let row = &surf.points[0];
    assert!(row[0].distortion <= row[1].distortion, "{row:?}");
}

#[test]
fn sweep_is_deterministic() {
    let (s, d) = world();
    let data = gaussian_dataset(128, 16, 9);
    let cfg = SweepConfig {
        eta: 1.0,
        ..SweepConfig::default()
    };
    assert_eq!(sweep(&cfg, &d, &s, &data).unwrap(), sweep(&cfg, &d, &s, &data).unwrap());
}
