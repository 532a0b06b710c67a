use geomkit::formats::checkpoint;
use geomkit_core::dataset::{make_object, sample_grid, Axis, GridSpec, ImageShape, ObjectKind};
use geomkit_core::embed::{init_mapper, train, TrainConfig, TrainMode};
use geomkit_core::rng;

fn config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        batch_size: 12,
        latent_dim: 3,
        neighbors: 3,
        epochs: 2,
        pca_k: 10,
        hidden: vec![16, 8],
        mode,
        ..TrainConfig::desk()
    }
}

#[test]
fn checkpoints_round_trip_byte_exact() {
    let obj = make_object(ObjectKind::Planelike, 2).unwrap();
    let shape = ImageShape::new(3, 12, 12);
    let (samples, _) = sample_grid(&obj, &GridSpec::new(vec![Axis::X], 24, 2, 180.0), shape).unwrap();
    for mode in [TrainMode::Autoencoder, TrainMode::PriorSampling] {
        let cfg = config(mode);
        let trained = train(&samples, shape, &cfg).unwrap().mapper;
        let untrained = init_mapper(&samples, shape, &cfg, &mut rng::seeded(1)).unwrap();
        for m in [trained, untrained] {
            let bytes = checkpoint::encode(&m).unwrap();
            let back = checkpoint::decode(&bytes, "mem".as_ref()).unwrap();
            assert_eq!(back, m);
            assert_eq!(checkpoint::encode(&back).unwrap(), bytes);
        }
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let obj = make_object(ObjectKind::Chairlike, 1).unwrap();
    let shape = ImageShape::new(1, 10, 10);
    let (samples, _) = sample_grid(&obj, &GridSpec::new(vec![Axis::Y], 24, 2, 180.0), shape).unwrap();
    let m = init_mapper(&samples, shape, &config(TrainMode::Autoencoder), &mut rng::seeded(1)).unwrap();
    let bytes = checkpoint::encode(&m).unwrap();
    let p = "mem".as_ref();
    assert!(checkpoint::decode(&bytes[..bytes.len() - 8], p).is_err());
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 8]);
    assert!(checkpoint::decode(&extra, p).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(checkpoint::decode(&magic, p).is_err());
    let mut version = bytes;
    version[4] = 9;
    assert!(checkpoint::decode(&version, p).is_err());
}
