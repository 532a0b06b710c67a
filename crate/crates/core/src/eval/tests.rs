use alloc::vec;
use alloc::vec::Vec;
use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::dataset::{make_object, Axis, GridSpec, ImageShape, ObjectKind};
use crate::embed::{train, TrainConfig};

fn img(shape: ImageShape, v: &[f64]) -> Image {
    Image::from_vec(shape, v.to_vec()).unwrap()
}

#[test]
fn se_identical_is_zero() {
    let s = ImageShape::new(1, 2, 2);
    let a = vec![img(s, &[0.1, 0.2, 0.3, 0.4]), img(s, &[0.5, 0.5, 0.5, 0.5])];
    assert_eq!(image_se(&a, &a).unwrap(), vec![0.0, 0.0]);
    assert_eq!(velocity_se(&a, &a).unwrap(), vec![0.0]);
}

#[test]
fn se_single_pixel_offset() {
    let s = ImageShape::new(1, 2, 2);
    let gt = vec![img(s, &[0.1, 0.2, 0.3, 0.4]); 3];
    let frames: Vec<Image> = gt
        .iter()
        .map(|g| {
            let mut v = g.as_slice().to_vec();
            v[2] += 0.1;
            img(s, &v)
        })
        .collect();
    for e in image_se(&frames, &gt).unwrap() {
        assert!((e - 0.01).abs() < 1e-15);
    }
    // a constant shift cancels in temporal differences
    for e in velocity_se(&frames, &gt).unwrap() {
        assert!(e.abs() < 1e-15);
    }
}

#[test]
fn velocity_hand_example() {
    let s = ImageShape::new(1, 1, 2);
    let frames = vec![img(s, &[0.0, 0.0]), img(s, &[0.5, 0.25]), img(s, &[1.0, 0.5])];
    let gt = vec![img(s, &[0.0, 0.0]), img(s, &[0.25, 0.25]), img(s, &[1.0, 1.0])];
    // (0.5−0.25)² + 0 = 0.0625; (0.5−0.75)² + (0.25−0.75)² = 0.0625 + 0.25
    let ev = velocity_se(&frames, &gt).unwrap();
    assert!((ev[0] - 0.0625).abs() < 1e-15);
    assert!((ev[1] - 0.3125).abs() < 1e-15);
}

#[test]
fn metric_shape_errors() {
    let s = ImageShape::new(1, 1, 2);
    let a = vec![img(s, &[0.0, 0.0])];
    assert!(image_se(&a, &[]).is_err());
    assert!(velocity_se(&a, &a).is_err());
    let b = vec![Image::zeros(ImageShape::new(1, 2, 2))];
    assert!(image_se(&a, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn se_matches_pixel_loop(data in proptest::collection::vec(0.0f64..1.0, 4 * 12 * 2)) {
        let s = ImageShape::new(1, 3, 4);
        let frames: Vec<Image> = (0..4).map(|k| img(s, &data[k * 12..(k + 1) * 12])).collect();
        let gt: Vec<Image> = (0..4).map(|k| img(s, &data[48 + k * 12..48 + (k + 1) * 12])).collect();
        let se = image_se(&frames, &gt).unwrap();
        let ev = velocity_se(&frames, &gt).unwrap();
        for t in 0..4 {
            let mut naive = 0.0;
            for r in 0..3 {
                for c in 0..4 {
                    let d = frames[t].get(0, r, c) - gt[t].get(0, r, c);
                    naive += d * d;
                }
            }
            prop_assert!((se[t] - naive).abs() <= 1e-12);
        }
        for t in 0..3 {
            let mut naive = 0.0;
            for r in 0..3 {
                for c in 0..4 {
                    let d = (frames[t + 1].get(0, r, c) - frames[t].get(0, r, c)) - (gt[t + 1].get(0, r, c) - gt[t].get(0, r, c));
                    naive += d * d;
                }
            }
            prop_assert!((ev[t] - naive).abs() <= 1e-12);
        }
    }
}

struct Fixture {
    dataset: Dataset,
    mapper: GeomMapper,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let obj = make_object(ObjectKind::Chairlike, 3).unwrap();
        let shape = ImageShape::new(1, 16, 16);
        let dataset = Dataset::generate(obj, GridSpec::new(vec![Axis::Y], 40, 80, 180.0), shape).unwrap();
        let cfg = TrainConfig {
            batch_size: 20,
            neighbors: 4,
            epochs: 10,
            pca_k: 16,
            hidden: vec![32],
            latent_dim: 4,
            ..TrainConfig::desk()
        };
        let mapper = train(&dataset.train, shape, &cfg).unwrap().mapper;
        Fixture { dataset, mapper }
    })
}

#[test]
fn path_endpoints_and_lengths() {
    let f = fixture();
    let (a, b) = (&f.dataset.test[10], &f.dataset.test[22]);
    for t in [2, 5, 10] {
        let paths = [
            interpolate_path(&f.mapper, &f.dataset, a, b, t, &InterpConfig::default()).unwrap(),
            baseline_linear_latent(&f.mapper, &f.dataset, a, b, t).unwrap(),
            baseline_linear_image(&f.dataset, a, b, t).unwrap(),
        ];
        for p in &paths {
            assert_eq!(p.frames.len(), t);
            assert_eq!(p.image_se.len(), t);
            assert_eq!(p.velocity_se.len(), t - 1);
            assert_eq!(p.frames[0], a.image);
            assert_eq!(p.frames[t - 1], b.image);
            assert_eq!(p.image_se[0], 0.0);
            assert_eq!(p.image_se[t - 1], 0.0);
        }
        let c = paths[0].curve.as_ref().unwrap();
        assert_eq!(c.points[0], f.mapper.phi(&a.image).unwrap());
        assert_eq!(*c.points.last().unwrap(), f.mapper.phi(&b.image).unwrap());
    }
}

#[test]
fn same_endpoint_gives_zero_error() {
    let f = fixture();
    let a = &f.dataset.test[5];
    let paths = [
        interpolate_path(&f.mapper, &f.dataset, a, a, 6, &InterpConfig::default()).unwrap(),
        baseline_linear_latent(&f.mapper, &f.dataset, a, a, 6).unwrap(),
        baseline_linear_image(&f.dataset, a, a, 6).unwrap(),
    ];
    for p in paths {
        assert!(p.frames.iter().all(|fr| *fr == a.image));
        assert!(p.image_se.iter().chain(&p.velocity_se).all(|&e| e == 0.0));
    }
}

#[test]
fn ground_truth_path_scores_zero() {
    let f = fixture();
    let (a, b) = (&f.dataset.test[3], &f.dataset.test[9]);
    let gt = f.dataset.ground_truth_path(&a.rotation, &b.rotation, 7).unwrap();
    assert!(image_se(&gt, &gt).unwrap().iter().all(|&e| e == 0.0));
    assert!(velocity_se(&gt, &gt).unwrap().iter().all(|&e| e == 0.0));
}

fn small_suite() -> SuiteConfig {
    SuiteConfig {
        n_paths: 4,
        frames: 5,
        angle_min_deg: 20.0,
        angle_max_deg: 40.0,
        seed: 11,
    }
}

#[test]
fn suite_pairs_respect_range_and_seed() {
    let f = fixture();
    let s = small_suite();
    let p = suite_pairs(&f.dataset, &s).unwrap();
    assert_eq!(p, suite_pairs(&f.dataset, &s).unwrap());
    assert_eq!(p.len(), 4);
    for &(i, j) in &p {
        let g = so3_distance(&f.dataset.test[i].rotation, &f.dataset.test[j].rotation).to_degrees();
        assert!((20.0..=40.0).contains(&g), "{g}");
    }
    let too_many = SuiteConfig { n_paths: 100_000, ..s };
    assert!(matches!(suite_pairs(&f.dataset, &too_many), Err(Error::Config(_))));
    let empty = SuiteConfig { angle_min_deg: 200.0, angle_max_deg: 300.0, ..s };
    assert!(matches!(suite_pairs(&f.dataset, &empty), Err(Error::Config(_))));
}

#[test]
fn suite_summary_is_order_invariant() {
    let f = fixture();
    let s = small_suite();
    let report = evaluate_suite(&f.mapper, &f.dataset, &s, &InterpConfig::default()).unwrap();
    let mut rev = report.results.clone();
    rev.reverse();
    assert_eq!(summarize(&rev).unwrap(), report.summary);
    let csv = report.csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,t,mean_se,std_se,mean_ev,std_ev"));
    assert_eq!(lines.count(), 3 * s.frames);
    for r in &report.summary {
        if r.t == 0 || r.t == s.frames - 1 {
            assert_eq!(r.mean_se, 0.0);
        }
        assert_eq!(r.mean_ev.is_none(), r.t == s.frames - 1);
    }
    assert_eq!(report.scores.len(), 3);
}

#[test]
fn denoise_self_retrieval() {
    let f = fixture();
    let s = small_suite();
    let report = evaluate_suite(&f.mapper, &f.dataset, &s, &InterpConfig::default()).unwrap();
    let bank = report.elastica_bank();
    assert!(matches!(denoise(&f.mapper, &f.dataset.train[0].image, &[]), Err(Error::Config(_))));
    let points = bank_points(&bank, DEFAULT_BANK_DENSITY).unwrap();
    let clean = &f.dataset.test[report.results[0].pair.0].image;
    let w = f.mapper.phi(clean).unwrap();
    let out = denoise(&f.mapper, clean, &bank).unwrap();
    let nearest = points
        .iter()
        .min_by(|a, b| math::dist2(a, &w).total_cmp(&math::dist2(b, &w)))
        .unwrap();
    assert_eq!(out, f.mapper.phi_inv(nearest).unwrap());
    // the endpoint itself sits on its curve
    let roundtrip = f.mapper.phi_inv(&w).unwrap().se(clean).unwrap();
    assert!(out.se(clean).unwrap() <= roundtrip + 1e-9, "{} vs {roundtrip}", out.se(clean).unwrap());
}
