//! Monte Carlo checks of the geometry and merge operations on ensembles whose
//! true center is known.

use stockpot_core::geometry::{
    distance_to, geometry_report, perturb_from_center, pseudo_center, Granularity, SigmaMap,
};
use stockpot_core::merge::{greedy_soup, interpolation_ratio, stock_merge, uniform_soup};
use stockpot_core::reduce;
use stockpot_core::synthetic::{
    brute_force_optimal_t, concentration_stats, sample_ensemble, simulate_trajectories,
    SyntheticSpec, TrajectoryParams,
};
use stockpot_core::{Checkpoint, DType, TensorRecord};

fn one_unit(seed: u64, dim: usize, sigma: f64, offset_ratio: f64) -> SyntheticSpec {
    SyntheticSpec::from_json(&format!(
        r#"{{"seed": {seed}, "dtype": "F64", "units": [{{"name": "w", "dim": {dim}, "sigma": {sigma},
            "mu": {{"gaussian_std": 0.1}}}}]}}"#
    ))
    .unwrap()
    .with_offset_ratio(offset_ratio)
}

fn global(a: &Checkpoint, b: &Checkpoint) -> f64 {
    distance_to(a, b, &Granularity::Global).unwrap().global
}

#[test]
fn isotropic_deltas_are_orthogonal() {
    let e = sample_ensemble(&one_unit(1, 10_000, 0.01, 0.0), 20).unwrap();
    let r = geometry_report(&e.model_refs(), &e.anchor, &Granularity::PerTensor).unwrap();
    let u = &r.units[0];
    assert!((u.mean_angle_deg.unwrap() - 90.0).abs() < 1.0, "{u:?}");
    assert!(u.std_angle_deg.unwrap() < 1.0);
    assert_eq!(u.pairs, 190);
}

#[test]
fn offset_equal_to_radius_gives_sixty_degrees() {
    let e = sample_ensemble(&one_unit(2, 10_000, 0.01, 1.0), 20).unwrap();
    let r = geometry_report(&e.model_refs(), &e.anchor, &Granularity::PerTensor).unwrap();
    assert!(
        (r.units[0].mean_angle_deg.unwrap() - 60.0).abs() < 1.5,
        "{:?}",
        r.units[0]
    );
}

#[test]
fn center_of_many_samples_tracks_mu() {
    let sigma = 0.05;
    let e = sample_ensemble(&one_unit(3, 200, sigma, 0.0), 10_000).unwrap();
    let c = pseudo_center(&e.model_refs())
        .unwrap()
        .get("w")
        .unwrap()
        .to_f64();
    let mu = e.center.get("w").unwrap().to_f64();
    let bound = 3.0 * sigma / 100.0;
    let inside = c
        .iter()
        .zip(&mu)
        .filter(|(x, m)| (*x - *m).abs() <= bound)
        .count();
    assert!(
        inside as f64 >= 0.99 * mu.len() as f64,
        "{inside}/{}",
        mu.len()
    );
}

#[test]
fn perturbation_distance_matches_chi_concentration() {
    let layout = [
        ("a", 40_000usize, 0.01),
        ("b", 30_000, 0.02),
        ("c", 30_000, 0.005),
    ];
    let center = Checkpoint::from_records(layout.iter().map(|(n, d, _)| {
        TensorRecord::from_f64(*n, DType::F32, vec![*d], &vec![0.25; *d]).unwrap()
    }))
    .unwrap();
    let sigma: SigmaMap = layout.iter().map(|(n, _, s)| (n.to_string(), *s)).collect();
    let expected = layout
        .iter()
        .map(|(_, d, s)| *d as f64 * s * s)
        .sum::<f64>()
        .sqrt();
    let out = perturb_from_center(&center, &Granularity::PerTensor, &sigma, 17).unwrap();
    let got = global(&out, &center);
    assert!((got / expected - 1.0).abs() < 0.02, "{got} vs {expected}");
}

#[test]
fn two_model_merge_beats_models_and_average() {
    let mut wins = 0;
    for seed in 0..100 {
        let e = sample_ensemble(&one_unit(100 + seed, 10_000, 0.01, 1.0), 2).unwrap();
        let models = e.model_refs();
        let (merged, _) = stock_merge(&e.anchor, &models, &Granularity::PerTensor).unwrap();
        let d = global(&merged, &e.center);
        let avg = global(&uniform_soup(&models).unwrap(), &e.center);
        if models.iter().all(|m| d < global(m, &e.center)) && d < avg {
            wins += 1;
        }
    }
    assert!(wins >= 99, "{wins}/100");
}

#[test]
fn greedy_rejects_far_outlier() {
    let spec = one_unit(5, 1_000, 0.01, 0.0);
    let mut e = sample_ensemble(&spec, 5).unwrap();
    let far: Vec<f64> = e.models[4]
        .get("w")
        .unwrap()
        .to_f64()
        .iter()
        .map(|x| x + 1.0)
        .collect();
    e.models[4] =
        Checkpoint::from_records([
            TensorRecord::from_f64("w", DType::F64, vec![1_000], &far).unwrap()
        ])
        .unwrap();
    let mu = e.center.clone();
    let (out, trace) = greedy_soup(&e.model_refs(), |c| Ok::<_, String>(-global(c, &mu))).unwrap();
    let outlier = trace.steps.iter().find(|s| s.index == 4).unwrap();
    assert!(!outlier.accepted);
    assert!(!trace.selected.contains(&4));
    assert!(global(&out, &mu) < global(&e.models[0], &mu));
}

/// Deltas `m + r e_i` with orthonormal `e_i` orthogonal to `m`: every pair
/// meets at exactly the same angle and the center is `w0 + m`.
fn simplex(n_models: usize, m_norm: f64, r: f64) -> (Checkpoint, Vec<Checkpoint>, Checkpoint) {
    let dim = 8;
    let ckpt = |v: Vec<f64>| {
        Checkpoint::from_records([TensorRecord::from_f64("w", DType::F64, vec![dim], &v).unwrap()])
            .unwrap()
    };
    let w0: Vec<f64> = (0..dim).map(|i| 0.5 - i as f64 * 0.125).collect();
    let mut center = w0.clone();
    center[0] += m_norm;
    let models = (0..n_models)
        .map(|i| {
            let mut v = center.clone();
            v[1 + i] += r;
            ckpt(v)
        })
        .collect();
    (ckpt(w0), models, ckpt(center))
}

#[test]
fn closed_form_is_the_closest_point_on_exact_geometry() {
    for n in 2..=4 {
        for (m_norm, r) in [(1.0, 1.0), (1.0, 0.5), (0.3, 2.0), (2.0, 0.25)] {
            let (w0, models, center) = simplex(n, m_norm, r);
            let refs: Vec<&Checkpoint> = models.iter().collect();
            let (_, report) = stock_merge(&w0, &refs, &Granularity::PerTensor).unwrap();
            let (t_star, _) = brute_force_optimal_t(&w0, &refs, &center, 0.001).unwrap();
            let t = report.units[0].t;
            assert!(
                (t - t_star).abs() <= 0.001,
                "N={n} |m|={m_norm} r={r}: {t} vs {t_star}"
            );
            let cos = m_norm * m_norm / (m_norm * m_norm + r * r);
            assert!((interpolation_ratio(cos, n).unwrap().t - t).abs() < 1e-12);
        }
    }
}

#[test]
fn shell_radius_scales_with_sigma_and_sqrt_n() {
    let radius = |dim: usize, sigma: f64| {
        let e = sample_ensemble(&one_unit(6, dim, sigma, 0.0), 4).unwrap();
        let r: Vec<f64> = e.models.iter().map(|m| global(m, &e.center)).collect();
        reduce::mean_std(&r).0
    };
    let base = radius(10_000, 0.01);
    assert!((radius(10_000, 0.02) / base - 2.0).abs() < 0.02 * 2.0);
    assert!((radius(40_000, 0.01) / base - 2.0).abs() < 0.02 * 2.0);
}

#[test]
fn concentration_predictions_hold() {
    let r = concentration_stats(&one_unit(7, 10_000, 0.01, 0.0), 10).unwrap();
    assert!(r.units[0].norm_rel_dev.abs() < 0.02);
    let r = concentration_stats(&one_unit(8, 10_000, 0.01, 1.0), 10).unwrap();
    let u = &r.units[0];
    assert!((u.predicted_angle_deg.unwrap() - 60.0).abs() < 1e-9);
    assert!((u.measured_angle_mean.unwrap() - 60.0).abs() < 1.5);
}

#[test]
fn trajectory_angles_shrink_and_agree_across_seeds() {
    let spec = one_unit(9, 10_000, 0.01, 1.0);
    let params = TrajectoryParams::decaying(6, 0.3, 0.7, false);
    let seeds: Vec<u64> = (0..20).collect();
    let t = simulate_trajectories(&spec, &params, &seeds).unwrap();
    let mut previous = f64::INFINITY;
    for epoch in 0..params.epochs {
        let at: Vec<&Checkpoint> = t.runs.iter().map(|r| &r[epoch]).collect();
        let g = geometry_report(&at, &t.anchor, &Granularity::PerTensor).unwrap();
        let u = &g.units[0];
        let mean = u.mean_angle_deg.unwrap();
        assert!(
            mean <= previous + 1.0,
            "epoch {epoch}: {mean} after {previous}"
        );
        assert!(u.std_angle_deg.unwrap() < 1.0);
        previous = mean;
    }
}
