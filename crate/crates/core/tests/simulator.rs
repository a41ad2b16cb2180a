mod common;

use common::*;
use ndarray::Array2;
use num_complex::Complex64;
use ptyfuse_core::forward::{predict_dataset, SceneModel, SensorSpec};
use ptyfuse_core::grid::ComplexField;
use ptyfuse_core::scan::{Region, ScanPattern};
use ptyfuse_core::simulator::{
    make_diverging_probe, make_probe, make_resolution_target, simulate_dataset, LineSet, NoiseSpec,
    Orientation, TargetSpec,
};

fn set(lpmm: f64, orientation: Orientation, x: f64, y: f64) -> LineSet {
    LineSet {
        lines_per_mm: lpmm,
        orientation,
        x,
        y,
    }
}

/// Runs of opaque pixels along a line through the middle bar.
fn bar_runs(line: &[f64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in line.iter().enumerate() {
        match (v < 0.5, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

#[test]
fn rendered_sets_have_three_bars_at_the_right_pitch() {
    let g = grid(128);
    for lpmm in [40.0, 56.0, 80.0] {
        let t = make_resolution_target(
            &g,
            &TargetSpec::chrome(vec![set(lpmm, Orientation::Vertical, 0.0, 0.0)]),
        )
        .unwrap();
        let row: Vec<f64> = t.values().row(64).iter().map(|v| v.re).collect();
        let runs = bar_runs(&row);
        assert_eq!(runs.len(), 3, "{lpmm} lines/mm");
        let pitch_px = 1e-3 / lpmm / PITCH;
        let centers: Vec<f64> = runs.iter().map(|(a, b)| (a + b - 1) as f64 / 2.0).collect();
        for w in centers.windows(2) {
            assert!(
                ((w[1] - w[0]) - pitch_px).abs() <= 1.0,
                "{lpmm}: {centers:?}"
            );
        }
    }
}

#[test]
fn finest_set_pitch_in_pixels() {
    let s = set(80.0, Orientation::Vertical, 0.0, 0.0);
    assert!((s.pitch() - 12.5e-6).abs() < 1e-15);
    assert!((s.pitch() / PITCH - 3.623).abs() < 1e-3);
}

#[test]
fn horizontal_set_is_transposed_vertical_set() {
    let g = grid(96);
    let (x, y) = (5.0 * PITCH, -7.0 * PITCH);
    let v = make_resolution_target(
        &g,
        &TargetSpec::chrome(vec![set(48.0, Orientation::Vertical, x, y)]),
    )
    .unwrap();
    let h = make_resolution_target(
        &g,
        &TargetSpec::chrome(vec![set(48.0, Orientation::Horizontal, y, x)]),
    )
    .unwrap();
    assert_eq!(v.values().t(), h.values());
}

#[test]
fn phase_map_keeps_amplitude() {
    let g = grid(32);
    let mut spec = TargetSpec::chrome(vec![]);
    spec.phase = Some(ptyfuse_core::simulator::GaussianPhase {
        peak: 1.0,
        sigma: 10.0 * PITCH,
    });
    let t = make_resolution_target(&g, &spec).unwrap();
    assert!(t.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    assert!((t.values()[[16, 16]].arg() - 1.0).abs() < 1e-12);
}

#[test]
fn hard_disk_area() {
    let g = grid(256);
    let d = 200.0 * PITCH;
    let p = make_probe(&g, d, 0.0).unwrap();
    let inside = p.values().iter().filter(|v| v.re > 0.5).count() as f64;
    let expect = std::f64::consts::PI * (d / 2.0 / PITCH).powi(2);
    assert!((inside - expect).abs() / expect < 0.02);
}

#[test]
fn probe_is_reproducible() {
    let g = grid(128);
    let a = make_probe(&g, 0.3e-3, 10e-6).unwrap();
    let b = make_probe(&g, 0.3e-3, 10e-6).unwrap();
    assert_eq!(a.total_energy().to_bits(), b.total_energy().to_bits());
    let direct: f64 = a.values().iter().map(|v| v.norm_sqr()).sum();
    assert_eq!(direct, a.total_energy());
}

#[test]
fn diverging_probe_keeps_amplitude_and_sets_rim_frequency() {
    let g = grid(128);
    let (d, na) = (0.3e-3, 0.01);
    let flat = make_probe(&g, d, 10e-6).unwrap();
    let curved = make_diverging_probe(&g, d, 10e-6, na).unwrap();
    for (a, b) in flat.values().iter().zip(curved.values()) {
        assert!((a.norm() - b.norm()).abs() < 1e-12);
    }
    assert_eq!(make_diverging_probe(&g, d, 10e-6, 0.0).unwrap(), flat);

    // Local frequency from the phase step between neighbours on the x axis.
    let row = 64;
    let j = 64 + (d / 2.0 / PITCH).round() as usize;
    let step = (curved.values()[(row, j + 1)] * curved.values()[(row, j - 1)].conj()).arg()
        / (2.0 * PITCH);
    let f = step / (2.0 * std::f64::consts::PI);
    let x = (j as f64 - 64.0) * PITCH;
    let expect = na / LAMBDA * x / (d / 2.0);
    assert!((f - expect).abs() / expect < 1e-3, "{f} vs {expect}");
}

#[test]
fn diverging_probe_rejects_aliased_wavefronts() {
    let g = grid(128);
    assert!(make_diverging_probe(&g, 0.3e-3, 10e-6, 0.2).is_err());
    assert!(make_diverging_probe(&g, 0.3e-3, 10e-6, -0.1).is_err());
}

fn small_scene(object_fill: f64, sensors: Vec<SensorSpec>) -> SceneModel {
    let probe = make_probe(&grid(32), 24.0 * PITCH, 4.0 * PITCH).unwrap();
    let scan = ScanPattern::new(
        vec![(0.0, 0.0), (4.0 * PITCH, 0.0)],
        0.0,
        Region::centered_square(1.0).unwrap(),
        0,
    )
    .unwrap();
    SceneModel::assemble(probe, scan, sensors, 2, Complex64::new(object_fill, 0.0)).unwrap()
}

#[test]
fn noiseless_simulation_equals_prediction() {
    let scene = small_scene(1.0, vec![SensorSpec::on_axis("a", 32, 2e-3).unwrap()]);
    let a = simulate_dataset(&scene, &NoiseSpec::noiseless()).unwrap();
    let b = predict_dataset(&scene).unwrap();
    assert_eq!(a, b);
}

#[test]
fn poisson_noise_follows_sqrt_law() {
    // a flat unit-intensity frame: 4096 pixels per frame, 4 frames
    let g = grid(64);
    let probe = ComplexField::constant(g, Complex64::new(1.0, 0.0));
    let scan = ScanPattern::new(
        vec![(0.0, 0.0); 1],
        0.0,
        Region::centered_square(1.0).unwrap(),
        0,
    )
    .unwrap();
    let sensor = SensorSpec::on_axis("a", 64, 1e-3).unwrap();
    let scene =
        SceneModel::assemble(probe, scan, vec![sensor], 0, Complex64::new(1.0, 0.0)).unwrap();
    let clean = predict_dataset(&scene).unwrap();
    let noise = NoiseSpec {
        photon_scale: 1e6,
        quantization_bits: None,
        rng_seed: 3,
    };
    let noisy = simulate_dataset(&scene, &noise).unwrap();
    let (c, n) = (clean.frame(0, 0), noisy.frame(0, 0));
    let rel: Vec<f64> = n
        .iter()
        .zip(c)
        .filter(|(_, &c)| c > 0.5)
        .map(|(n, c)| (n - c) / c)
        .collect();
    assert!(rel.len() >= 2000);
    let mean_i: f64 = c.iter().filter(|&&c| c > 0.5).sum::<f64>() / rel.len() as f64;
    let sd = (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt();
    let expect = 1.0 / (1e6 * mean_i).sqrt();
    assert!(
        (sd / expect - 1.0).abs() < 0.2,
        "sd {sd:e}, expected {expect:e}"
    );
}

#[test]
fn higher_exposure_gives_higher_snr() {
    let a = SensorSpec::on_axis("a", 32, 2e-3).unwrap();
    let mut b = a.clone();
    b.name = "b".into();
    b.exposure_weight = 10.0;
    let scene = small_scene(1.0, vec![a, b]);
    let noise = NoiseSpec {
        photon_scale: 100.0,
        quantization_bits: None,
        rng_seed: 9,
    };
    let noisy = simulate_dataset(&scene, &noise).unwrap();
    let clean = predict_dataset(&scene).unwrap();
    let rel_err = |s: usize, w: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for p in 0..2 {
            for (n, c) in noisy.frame(p, s).iter().zip(clean.frame(p, s)) {
                num += (n / w - c / w).powi(2);
                den += (c / w).powi(2);
            }
        }
        (num / den).sqrt()
    };
    let ratio = rel_err(0, 1.0) / rel_err(1, 10.0);
    assert!((ratio - 10f64.sqrt()).abs() < 0.3, "SNR ratio {ratio}");
}

#[test]
fn noisy_simulation_is_seeded() {
    let scene = small_scene(1.0, vec![SensorSpec::on_axis("a", 32, 2e-3).unwrap()]);
    let noise = NoiseSpec {
        photon_scale: 50.0,
        quantization_bits: Some(8),
        rng_seed: 4,
    };
    let a = simulate_dataset(&scene, &noise).unwrap();
    let b = simulate_dataset(&scene, &noise).unwrap();
    assert_eq!(a, b);
    let other = simulate_dataset(
        &scene,
        &NoiseSpec {
            rng_seed: 5,
            ..noise
        },
    )
    .unwrap();
    assert_ne!(a, other);
    // 8-bit quantization leaves at most 256 distinct values
    let mut levels: Vec<u64> = a
        .frames()
        .iter()
        .flat_map(|f| f.iter().map(|v| v.to_bits()))
        .collect();
    levels.sort_unstable();
    levels.dedup();
    assert!(levels.len() <= 256);
}

#[test]
fn off_axis_signal_needs_object_structure() {
    let z = 15.25e-3;
    let sensors = vec![
        SensorSpec::on_axis("a", 32, z).unwrap(),
        SensorSpec::new("b", 32, 32, 198.0 * PITCH, 0.0, z, 1.0).unwrap(),
    ];
    let mut scene = small_scene(1.0, sensors);
    let energy = |f: &Array2<f64>| f.sum();
    let flat = predict_dataset(&scene).unwrap();
    let ratio_flat = energy(flat.frame(0, 1)) / energy(flat.frame(0, 0));
    // fine vertical bars send light towards the off-axis window
    let spec = TargetSpec::chrome(vec![set(80.0, Orientation::Vertical, 0.0, 0.0)]);
    scene.object = make_resolution_target(scene.object.grid(), &spec).unwrap();
    let bars = predict_dataset(&scene).unwrap();
    let ratio_bars = energy(bars.frame(0, 1)) / energy(bars.frame(0, 0));
    assert!(ratio_flat < 1e-3, "flat {ratio_flat:e}");
    assert!(
        ratio_bars > 10.0 * ratio_flat,
        "bars {ratio_bars:e} flat {ratio_flat:e}"
    );
}
