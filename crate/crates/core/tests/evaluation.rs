mod common;

use common::*;
use num_complex::Complex64;
use ptyfuse_core::evaluation::{
    detection_na, evaluate_target, fringe_visibility, normalize_transmittance, profile_visibility,
    theoretical_resolution, LineSetRegion, PixelRect,
};
use ptyfuse_core::fft::{fft2, ifft2};
use ptyfuse_core::forward::SensorSpec;
use ptyfuse_core::grid::{ComplexField, RealField};
use ptyfuse_core::simulator::{make_resolution_target, LineSet, Orientation, TargetSpec};

/// Profile with minima `lo` at 6, 10, 14 and maxima `hi` elsewhere.
fn bars(lo: f64, hi: f64) -> Vec<f64> {
    (0..21)
        .map(|i| if [6, 10, 14].contains(&i) { lo } else { hi })
        .collect()
}

#[test]
fn visibility_formula_examples() {
    assert_eq!(
        profile_visibility(&bars(0.0, 0.7), 10.0, 4.0, 0.05),
        Some(1.0)
    );
    let v = profile_visibility(&bars(0.2, 0.9), 10.0, 4.0, 0.05).unwrap();
    assert!((v - 7.0 / 11.0).abs() < 1e-12);
    assert_eq!(profile_visibility(&bars(0.5, 0.5), 10.0, 4.0, 0.05), None);
}

#[test]
fn visibility_is_scale_invariant() {
    let base = profile_visibility(&bars(0.2, 0.9), 10.0, 4.0, 0.05).unwrap();
    let scaled: Vec<f64> = bars(0.2, 0.9).iter().map(|v| 3.7 * v).collect();
    let v = profile_visibility(&scaled, 10.0, 4.0, 0.05).unwrap();
    assert!((v - base).abs() < 1e-12);
}

#[test]
fn ground_truth_resolves_every_set_and_gray_resolves_none() {
    let g = grid(320);
    let target = TargetSpec::ladder(PITCH, 1.0);
    let truth = make_resolution_target(&g, &target).unwrap().amplitude();
    for r in evaluate_target(&truth, &target).unwrap() {
        assert!(r.visibility.unwrap() >= 0.99, "{}", r.label());
    }
    let gray = RealField::new(g, ndarray::Array2::from_elem(g.dims(), 0.4)).unwrap();
    for r in evaluate_target(&gray, &target).unwrap() {
        assert_eq!(r.visibility, None, "{}", r.label());
    }
}

#[test]
fn visibility_falls_with_frequency_under_blur() {
    let g = grid(320);
    let target = TargetSpec::ladder(PITCH, 1.0);
    let truth = make_resolution_target(&g, &target).unwrap();
    let mut spec = fft2(&truth);
    let sigma = 45e3; // cycles per meter
    let (fx, fy) = (g.freqs_x(), g.freqs_y());
    for ((i, j), v) in spec.values_mut().indexed_iter_mut() {
        *v *= (-(fx[j] * fx[j] + fy[i] * fy[i]) / (2.0 * sigma * sigma)).exp();
    }
    let blurred = ifft2(&spec).amplitude();
    let reports = evaluate_target(&blurred, &target).unwrap();
    for o in [Orientation::Vertical, Orientation::Horizontal] {
        let seq: Vec<f64> = reports
            .iter()
            .filter(|r| r.orientation == o)
            .map(|r| r.visibility.unwrap_or(0.0))
            .collect();
        assert!(seq[0] > 0.3, "{seq:?}");
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{o:?}: {seq:?}");
        }
    }
}

#[test]
fn region_outside_image_is_rejected() {
    let g = grid(64);
    let far = LineSet {
        lines_per_mm: 40.0,
        orientation: Orientation::Vertical,
        x: 30.0 * PITCH,
        y: 0.0,
    };
    assert!(LineSetRegion::for_line_set(&g, &far).is_err());
    let ok = LineSet { x: 0.0, ..far };
    let region = LineSetRegion::for_line_set(&g, &ok).unwrap();
    let small = RealField::new(grid(16), ndarray::Array2::zeros((16, 16))).unwrap();
    assert!(fringe_visibility(&small, &region).is_err());
}

#[test]
fn resolution_bands() {
    let lam = 561e-9;
    let on = theoretical_resolution(lam, 0.01, 0.015).unwrap();
    assert!((20.0e-6..=25.5e-6).contains(&on));
    let fused = theoretical_resolution(lam, 0.01, 0.036).unwrap();
    assert!((fused - 12.2e-6).abs() < 0.05e-6);
    assert!((11.4e-6..=13.0e-6).contains(&fused));
    for k in 1..10 {
        let a = theoretical_resolution(lam, 0.001 * k as f64, 0.02).unwrap();
        let b = theoretical_resolution(lam, 0.001 * (k + 1) as f64, 0.02).unwrap();
        assert!(b < a);
    }
}

#[test]
fn detection_na_geometry() {
    let on = SensorSpec::on_axis("a", 512, 61e-3).unwrap();
    let na = detection_na(&on, PITCH);
    assert!((na - 0.01448).abs() < 1e-4, "{na}");
    let off = SensorSpec::new("b", 512, 512, 2.649e-3, 0.0, 61e-3, 10.0).unwrap();
    let na = detection_na(&off, PITCH);
    assert!((na - (3.5322f64 / 61.0).atan().sin()).abs() < 1e-4, "{na}");
    assert!((na - 0.0578).abs() < 5e-4);
    let far = SensorSpec::on_axis("a", 512, 1e6).unwrap();
    assert!(detection_na(&far, PITCH) < 1e-9);
}

#[test]
fn transmittance_normalization() {
    let g = grid(16);
    let clear = PixelRect {
        row0: 2,
        col0: 2,
        rows: 4,
        cols: 4,
    };
    let uniform = ComplexField::constant(g, Complex64::new(0.3, 0.4));
    let t = normalize_transmittance(&uniform, &clear).unwrap();
    assert!(t.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

    let f = random_field(g, 2);
    let a = normalize_transmittance(&f, &clear).unwrap();
    let b = normalize_transmittance(&f.scaled(Complex64::from_polar(2.5, 0.7)), &clear).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() < 1e-12);
    }
    let mean: f64 = a.values().slice(ndarray::s![2..6, 2..6]).mean().unwrap();
    assert!((mean - 1.0).abs() < 1e-14);

    let again = ComplexField::new(g, a.values().mapv(|v| Complex64::new(v, 0.0))).unwrap();
    let twice = normalize_transmittance(&again, &clear).unwrap();
    for (x, y) in a.values().iter().zip(twice.values()) {
        assert!((x - y).abs() < 1e-14);
    }
    assert!(normalize_transmittance(&ComplexField::zeros(g), &clear).is_err());
    assert!(normalize_transmittance(
        &f,
        &PixelRect {
            row0: 14,
            col0: 0,
            rows: 4,
            cols: 1
        }
    )
    .is_err());
}
