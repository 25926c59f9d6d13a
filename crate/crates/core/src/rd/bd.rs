//! Bjøntegaard delta rate.

use nalgebra::{DMatrix, DVector};

use super::RDCurve;
use crate::error::{Error, Result};

const MIN_POINTS: usize = 4;

/// Least-squares cubic through `(x, y)`, coefficients lowest order first.
fn cubic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let a = DMatrix::from_fn(x.len(), 4, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let c = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Rd(format!("cubic fit failed: {e}")))?;
    Ok([c[0], c[1], c[2], c[3]])
}

/// Average log2-rate of the fitted cubic over `[0, 1]`.
fn mean_over_unit(c: &[f64; 4]) -> f64 {
    c.iter().enumerate().map(|(k, ck)| ck / (k as f64 + 1.0)).sum()
}

/// Percent rate change of `test` against `anchor` at equal quality, with
/// quality `-distortion`. Positive means `test` needs more bits.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve) -> Result<f64> {
    for (name, c) in [("anchor", anchor), ("test", test)] {
        if c.points().len() < MIN_POINTS {
            return Err(Error::Rd(format!(
                "{name} curve has {} points, BD-rate needs at least {MIN_POINTS}",
                c.points().len()
            )));
        }
        if c.points().iter().any(|p| !(p.bpp > 0.0)) {
            return Err(Error::Rd(format!("{name} curve has a nonpositive rate")));
        }
    }
    let range = |c: &RDCurve| {
        let q = c.points().iter().map(|p| -p.distortion);
        (q.clone().fold(f64::INFINITY, f64::min), q.fold(f64::NEG_INFINITY, f64::max))
    };
    let (a_lo, a_hi) = range(anchor);
    let (t_lo, t_hi) = range(test);
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if !(hi > lo) {
        return Err(Error::Rd(format!("quality ranges do not overlap ([{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}])")));
    }
    let fit = |c: &RDCurve| {
        let x: Vec<f64> = c.points().iter().map(|p| (-p.distortion - lo) / (hi - lo)).collect();
        let y: Vec<f64> = c.points().iter().map(|p| p.bpp.log2()).collect();
        cubic_fit(&x, &y)
    };
    let delta = mean_over_unit(&fit(test)?) - mean_over_unit(&fit(anchor)?);
    Ok(100.0 * (delta.exp2() - 1.0))
}
