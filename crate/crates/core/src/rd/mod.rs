//! Rate-distortion sweeps, peak projection, BD-rate and KL-rate helpers.

mod bd;
mod kl;

pub use bd::bd_rate;
pub use kl::{gaussian_step_kl, kl_rate_gaussian, Gaussian};

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_latent, dequantize, encode_latent, quantize, EntropyModel};
use crate::denoiser::Denoiser;
use crate::diffusion::{sample, step_list, GaussianNoise};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub bpp: f64,
    pub distortion: f64,
    #[serde(rename = "N_r")]
    pub n_r: usize,
    pub quant_step: f64,
}

/// Points with strictly increasing bpp.
#[derive(Debug, Clone, PartialEq)]
pub struct RDCurve {
    points: Vec<RDPoint>,
}

impl RDCurve {
    /// Sorts by bpp; duplicate or non-finite rates are rejected.
    pub fn new(mut points: Vec<RDPoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.bpp.is_finite() && p.bpp >= 0.0) || !p.distortion.is_finite()) {
            return Err(Error::Rd(format!("invalid point {p:?}")));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(Error::Rd("curve has repeated bpp values".into()));
        }
        Ok(Self { points })
    }

    /// Keeps the lowest-distortion point per bpp value (e.g. the adaptive
    /// curve of a full sweep surface).
    pub fn lower_envelope(points: Vec<RDPoint>) -> Result<Self> {
        let mut best: Vec<RDPoint> = Vec::new();
        let mut sorted = points;
        sorted.sort_by(|a, b| a.bpp.total_cmp(&b.bpp).then(a.distortion.total_cmp(&b.distortion)));
        for p in sorted {
            if best.last().is_none_or(|q| q.bpp != p.bpp) {
                best.push(p);
            }
        }
        Self::new(best)
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub quant_steps: Vec<f64>,
    pub n_r_grid: Vec<usize>,
    pub sampling_steps: usize,
    pub eta: f64,
    pub seed: u64,
    /// Nominal pixels represented by one latent element.
    pub pixels_per_element: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            quant_steps: vec![3.0, 2.2, 1.6, 1.1, 0.6],
            n_r_grid: vec![2, 5, 10, 20, 35, 60, 100, 160],
            sampling_steps: 3,
            eta: 0.0,
            seed: 5,
            pixels_per_element: 16,
        }
    }
}

/// `points[i][j]` is the cell for `quant_steps[i]` and `n_r_grid[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RDSurface {
    pub quant_steps: Vec<f64>,
    pub n_r_grid: Vec<usize>,
    pub points: Vec<Vec<RDPoint>>,
}

impl RDSurface {
    pub fn all_points(&self) -> impl Iterator<Item = &RDPoint> {
        self.points.iter().flatten()
    }

    /// Best distortion per rate column, i.e. N_r chosen per bitrate.
    pub fn adaptive_curve(&self) -> Result<RDCurve> {
        let peaks = peak_projection(self)?;
        RDCurve::new(
            peaks
                .iter()
                .zip(&self.points)
                .map(|(&(_, n_r), row)| *row.iter().find(|p| p.n_r == n_r).expect("peak comes from the row"))
                .collect(),
        )
    }

    /// Curve for one fixed N_r across all rates.
    pub fn fixed_curve(&self, n_r: usize) -> Result<RDCurve> {
        let j = self
            .n_r_grid
            .iter()
            .position(|&n| n == n_r)
            .ok_or_else(|| Error::Rd(format!("N_r = {n_r} is not on the sweep grid")))?;
        RDCurve::new(self.points.iter().map(|row| row[j]).collect())
    }
}

/// Standard normal latents, the Gaussian world the analytic denoiser assumes.
pub fn gaussian_dataset(count: usize, dim: usize, seed: u64) -> Vec<Latent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Latent::standard_normal(&[dim], &mut rng)).collect()
}

/// RNG stream of one sweep cell; independent of eta, so runs that differ
/// only in eta share their noise.
pub fn cell_rng(seed: u64, cell: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell);
    rng
}

/// Stacks equally shaped latents into one tensor with a leading axis.
pub fn stack(dataset: &[Latent]) -> Result<Latent> {
    let first = dataset.first().ok_or_else(|| Error::Rd("empty dataset".into()))?;
    let mut data = Vec::with_capacity(first.len() * dataset.len());
    for z in dataset {
        first.ensure_same_shape(z)?;
        data.extend_from_slice(z.data());
    }
    let mut shape = vec![dataset.len()];
    shape.extend_from_slice(first.shape());
    Latent::new(shape, data)
}

/// Coded size in bits of the dataset at `step` (one latent section holding
/// the whole stacked dataset, Gaussian model fitted to its symbols), and the
/// decoded `zc`.
pub fn code_dataset(z0: &Latent, step: f64) -> Result<(f64, Latent)> {
    let q = quantize(z0, step)?;
    let m = EntropyModel::fit_gaussian(q.symbols());
    let bytes = encode_latent(&q, &m)?;
    let decoded = decode_latent(&bytes, &m, q.shape(), step)?;
    Ok((bytes.len() as f64 * 8.0, dequantize(&decoded)?))
}

fn run_cell(
    cfg: &SweepConfig,
    denoiser: &(dyn Denoiser + Sync),
    s: &Schedule,
    z0: &Latent,
    coded: &(f64, Latent),
    n_r: usize,
    cell: u64,
) -> Result<f64> {
    let steps = step_list(n_r, cfg.sampling_steps)?;
    let mut noise = GaussianNoise(cell_rng(cfg.seed, cell));
    let z = sample(denoiser, &coded.1, n_r, &steps, cfg.eta, s, &mut noise)?;
    z.mse(z0)
}

/// Every (quant_step, N_r) cell: quantize, range code, decode, sample back
/// from `N_r`, and score MSE against the clean latents. Cells run in
/// parallel with per-cell RNG streams.
pub fn sweep(
    cfg: &SweepConfig,
    denoiser: &(dyn Denoiser + Sync),
    s: &Schedule,
    dataset: &[Latent],
) -> Result<RDSurface> {
    if cfg.quant_steps.is_empty() || cfg.n_r_grid.is_empty() {
        return Err(Error::Rd("sweep grids must be nonempty".into()));
    }
    if cfg.pixels_per_element == 0 {
        return Err(Error::Rd("pixels_per_element must be positive".into()));
    }
    let z0 = stack(dataset)?;
    let pixels = (z0.len() * cfg.pixels_per_element) as f64;
    let coded: Vec<(f64, Latent)> = cfg
        .quant_steps
        .par_iter()
        .map(|&q| {
            code_dataset(&z0, q).map_err(|e| Error::Cell {
                quant_step: q,
                n_r: 0,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let cols = cfg.n_r_grid.len();
    let cells: Vec<RDPoint> = (0..cfg.quant_steps.len() * cols)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / cols, k % cols);
            let (q, n_r) = (cfg.quant_steps[i], cfg.n_r_grid[j]);
            let distortion = run_cell(cfg, denoiser, s, &z0, &coded[i], n_r, k as u64).map_err(|e| Error::Cell {
                quant_step: q,
                n_r,
                source: Box::new(e),
            })?;
            Ok(RDPoint {
                bpp: coded[i].0 / pixels,
                distortion,
                n_r,
                quant_step: q,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RDSurface {
        quant_steps: cfg.quant_steps.clone(),
        n_r_grid: cfg.n_r_grid.clone(),
        points: cells.chunks(cols).map(<[RDPoint]>::to_vec).collect(),
    })
}

/// `(bpp, N_r*)` per rate column in increasing bpp, with `N_r*` the
/// distortion argmin (smaller N_r on ties).
pub fn peak_projection(surface: &RDSurface) -> Result<Vec<(f64, usize)>> {
    let cols = surface.n_r_grid.len();
    if surface.points.len() != surface.quant_steps.len() || surface.points.iter().any(|r| r.len() != cols) || cols == 0 {
        return Err(Error::Rd("incomplete surface".into()));
    }
    let mut out: Vec<(f64, usize)> = surface
        .points
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .reduce(|a, b| match b.distortion.total_cmp(&a.distortion) {
                    std::cmp::Ordering::Less => b,
                    std::cmp::Ordering::Equal if b.n_r < a.n_r => b,
                    _ => a,
                })
                .expect("row is nonempty");
            (row[0].bpp, best.n_r)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn write_csv<W: Write>(points: &[RDPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<RDPoint>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["bpp", "distortion", "N_r", "quant_step"] {
        return Err(Error::Rd(format!("unexpected CSV header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Distortion against bpp, one polyline per N_r and the adaptive envelope.
pub fn render_svg(surface: &RDSurface) -> Result<String> {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let pts: Vec<&RDPoint> = surface.all_points().collect();
    let (x0, x1) = bounds(pts.iter().map(|p| p.bpp));
    let (y0, y1) = bounds(pts.iter().map(|p| p.distortion));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">bpp</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">MSE</text>"#, h / 2.0, h / 2.0);
    let lines = surface
        .n_r_grid
        .iter()
        .map(|&n| surface.fixed_curve(n).map(|c| (format!("N_r={n}"), c)))
        .chain(std::iter::once(surface.adaptive_curve().map(|c| ("adaptive".to_string(), c))));
    let count = surface.n_r_grid.len().max(1) as f64;
    for (k, line) in lines.enumerate() {
        let (label, curve) = line?;
        let adaptive = label == "adaptive";
        let colour = if adaptive {
            "hsl(0,0%,0%)".to_string()
        } else {
            format!("hsl({:.0},70%,45%)", 300.0 * k as f64 / count)
        };
        let d: Vec<String> = curve
            .points()
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.bpp), sy(p.distortion)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="{colour}" stroke-width="{}" fill="none"{}/>"#,
            d.join(" "),
            if adaptive { 2.5 } else { 1.2 },
            if adaptive { r#" stroke-dasharray="6 3""# } else { "" }
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{label}</text>"#,
            w - pad + 4.0 - 60.0,
            pad + 14.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{GaussianDenoiser, QuantNoise};
    use crate::diffusion::RecordingNoise;
    use crate::schedule::ScheduleConfig;

    fn surface_from(f: impl Fn(usize, usize) -> f64, rates: usize, nrs: &[usize]) -> RDSurface {
        RDSurface {
            quant_steps: (0..rates).map(|i| 1.0 / (i + 1) as f64).collect(),
            n_r_grid: nrs.to_vec(),
            points: (0..rates)
                .map(|i| {
                    nrs.iter()
                        .enumerate()
                        .map(|(j, &n_r)| RDPoint {
                            bpp: 0.1 * (i + 1) as f64,
                            distortion: f(i, j),
                            n_r,
                            quant_step: 1.0 / (i + 1) as f64,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn constant_surface_picks_smallest_nr() {
        let s = surface_from(|_, _| 0.5, 4, &[3, 7, 11]);
        assert!(peak_projection(&s).unwrap().iter().all(|&(_, n)| n == 3));
    }

    #[test]
    fn planted_argmins_are_recovered() {
        let nrs = [2, 4, 8, 16, 32];
        let planted = [4usize, 3, 3, 1, 0, 2];
        let s = surface_from(|i, j| (j as f64 - planted[i] as f64).powi(2) + 0.1 * i as f64, 6, &nrs);
        let peaks = peak_projection(&s).unwrap();
        for (i, &(bpp, n)) in peaks.iter().enumerate() {
            assert!((bpp - 0.1 * (i + 1) as f64).abs() < 1e-12);
            assert_eq!(n, nrs[planted[i]]);
        }
        // Only the argmin structure matters.
        let t = surface_from(|i, j| ((j as f64 - planted[i] as f64).powi(2) + 0.1 * i as f64).exp(), 6, &nrs);
        assert_eq!(peak_projection(&t).unwrap(), peaks);
    }

    #[test]
    fn incomplete_surface_is_rejected() {
        let mut s = surface_from(|_, _| 1.0, 3, &[1, 2]);
        s.points[1].pop();
        assert!(peak_projection(&s).is_err());
    }

    #[test]
    fn single_cell_matches_direct_computation() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let d = GaussianDenoiser::new(0.0, 1.0, QuantNoise::EndpointMatched).unwrap();
        let data = gaussian_dataset(64, 8, 3);
        let cfg = SweepConfig {
            quant_steps: vec![0.7],
            n_r_grid: vec![40],
            sampling_steps: 4,
            eta: 1.0,
            seed: 12,
            pixels_per_element: 16,
        };
        let surf = sweep(&cfg, &d, &s, &data).unwrap();
        let p = surf.points[0][0];
        // Per-sample: same decoded latents and the cell's noise stream, split by sample.
        let z0 = stack(&data).unwrap();
        let (bits, zc) = code_dataset(&z0, 0.7).unwrap();
        let mut noise = RecordingNoise::new(GaussianNoise(cell_rng(12, 0)));
        let out = sample(&d, &zc, 40, &step_list(40, 4).unwrap(), 1.0, &s, &mut noise).unwrap();
        let per_sample: f64 = data
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let row = Latent::new(vec![8], out.data()[k * 8..(k + 1) * 8].to_vec()).unwrap();
                row.mse(z).unwrap()
            })
            .sum::<f64>()
            / data.len() as f64;
        assert!((p.distortion - per_sample).abs() < 1e-12);
        assert_eq!(p.bpp, bits / (64.0 * 8.0 * 16.0));
        assert_eq!(p.n_r, 40);
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![
            RDPoint { bpp: 0.25, distortion: 0.125, n_r: 10, quant_step: 1.5 },
            RDPoint { bpp: 1.0 / 3.0, distortion: 1e-7, n_r: 999, quant_step: 0.1 },
        ];
        let mut buf = Vec::new();
        write_csv(&pts, &mut buf).unwrap();
        assert!(buf.starts_with(b"bpp,distortion,N_r,quant_step\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), pts);
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn envelope_keeps_best_per_rate() {
        let p = |bpp, distortion, n_r| RDPoint { bpp, distortion, n_r, quant_step: 1.0 };
        let c = RDCurve::lower_envelope(vec![p(0.2, 0.5, 1), p(0.1, 0.9, 1), p(0.2, 0.3, 2), p(0.1, 0.95, 2)]).unwrap();
        assert_eq!(c.points(), &[p(0.1, 0.9, 1), p(0.2, 0.3, 2)]);
        assert!(RDCurve::new(vec![p(0.2, 0.5, 1), p(0.2, 0.3, 2)]).is_err());
    }

    #[test]
    fn svg_renders() {
        let s = surface_from(|i, j| 1.0 / (1.0 + i as f64 + j as f64), 3, &[1, 5]);
        let svg = render_svg(&s).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("adaptive") && svg.trim_end().ends_with("</svg>"));
    }
}
