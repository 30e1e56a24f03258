//! Brute-force counterparts of the closed-form ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::mean_values;
use crate::reduce;
use crate::tensor_store::{digest_order, ensure_aligned, ensure_compatible, Checkpoint};

fn grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::invalid(format!(
            "grid step must lie in (0, 0.5], got {step}"
        )));
    }
    let k = (1.0 / step).round() as usize;
    Ok((0..=k).map(|i| (i as f64 * step).min(1.0)).collect())
}

/// Smallest grid point minimizing `t^2 a + 2 t b + c`, with its value.
fn argmin_quadratic(ts: &[f64], a: f64, b: f64, c: f64) -> (f64, f64) {
    let mut best = (ts[0], f64::INFINITY);
    for &t in ts {
        let v = t * t * a + 2.0 * t * b + c;
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Scans `t` over `[0, 1]` and returns the `t` for which
/// `t * mean(models) + (1 - t) * anchor` is closest to `true_center`, with
/// that distance.
///
/// The squared distance is the quadratic `t^2 |r|^2 + 2 t (r . v) + |v|^2`
/// with `r = mean - anchor` and `v = anchor - center`; its three
/// coefficients are accumulated once over all elements and then evaluated at
/// every grid point. No angle enters the computation.
pub fn brute_force_optimal_t(
    anchor: &Checkpoint,
    models: &[&Checkpoint],
    true_center: &Checkpoint,
    grid_step: f64,
) -> Result<(f64, f64)> {
    let ts = grid(grid_step)?;
    if models.is_empty() {
        return Err(Error::invalid("need at least 1 model"));
    }
    ensure_compatible(models)?;
    ensure_aligned(anchor, models[0], "models")?;
    ensure_aligned(anchor, true_center, "center")?;

    let ordered: Vec<&Checkpoint> = digest_order(models).into_iter().map(|(_, c)| c).collect();
    let mean = mean_values(&ordered);
    let w0 = anchor.values();
    let mu = true_center.values();
    let (mut rr, mut rv, mut vv) = (0.0, 0.0, 0.0);
    for (name, m) in &mean {
        let r: Vec<f64> = m.iter().zip(&w0[name]).map(|(m, w)| m - w).collect();
        let v: Vec<f64> = w0[name].iter().zip(&mu[name]).map(|(w, c)| w - c).collect();
        rr += reduce::sum_squares(&r);
        rv += reduce::dot(&r, &v);
        vv += reduce::sum_squares(&v);
    }
    let (t, d2) = argmin_quadratic(&ts, rr, rv, vv);
    Ok((t, d2.max(0.0).sqrt()))
}

/// Monte Carlo estimate of the interpolation weight on `A` minimizing
/// `E |t A + (1 - t) B - E[t A + (1 - t) B]|^2` for independent isotropic
/// Gaussians with the given covariance traces in `dim` dimensions.
///
/// `pairs` independent pairs are drawn and the empirical mean of the squared
/// deviation is minimized over a grid of `t`.
pub fn monte_carlo_pair_ratio(
    trace_a: f64,
    trace_b: f64,
    dim: usize,
    pairs: usize,
    grid_step: f64,
    seed: u64,
) -> Result<f64> {
    let ts = grid(grid_step)?;
    if dim == 0 || pairs == 0 {
        return Err(Error::invalid("dimension and pair count must be positive"));
    }
    if !(trace_a >= 0.0 && trace_b >= 0.0) {
        return Err(Error::invalid("covariance traces must be >= 0"));
    }
    let sa = (trace_a / dim as f64).sqrt();
    let sb = (trace_b / dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut aa, mut ab, mut bb) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..pairs {
        let a: Vec<f64> = (0..dim)
            .map(|_| sa * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b: Vec<f64> = (0..dim)
            .map(|_| sb * rng.sample::<f64, _>(StandardNormal))
            .collect();
        aa.push(reduce::sum_squares(&a));
        ab.push(reduce::dot(&a, &b));
        bb.push(reduce::sum_squares(&b));
    }
    let (aa, ab, bb) = (
        reduce::pairwise_sum(&aa),
        reduce::pairwise_sum(&ab),
        reduce::pairwise_sum(&bb),
    );
    // |t a + (1 - t) b|^2 = t^2 (aa - 2ab + bb) + 2 t (ab - bb) + bb
    let (t, _) = argmin_quadratic(&ts, aa - 2.0 * ab + bb, ab - bb, bb);
    Ok(t)
}
