use std::fs;

use omega_data::dataset::MANIFEST;
use omega_data::pgm::{decode_pgm, encode_pgm, read_image, read_labels, write_image, write_labels, IMAGE_RANGE};
use omega_data::{generate_dataset, read_dataset, write_dataset, DatasetConfig, DataError};

#[test]
fn image_and_label_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let image: Vec<f64> = (0..36).map(|i| i as f64 / 35.0 * IMAGE_RANGE).collect();
    let labels: Vec<u8> = (0..36).map(|i| (i % 6) as u8).collect();
    write_image(&dir.path().join("i.pgm"), &image, 6).unwrap();
    write_labels(&dir.path().join("l.pgm"), &labels, 6).unwrap();
    let (back, h, w) = read_image(&dir.path().join("i.pgm")).unwrap();
    assert_eq!((h, w), (6, 6));
    for (a, b) in image.iter().zip(&back) {
        assert!((a - b).abs() <= IMAGE_RANGE / 65535.0);
    }
    assert_eq!(read_labels(&dir.path().join("l.pgm")).unwrap().0, labels);
}

#[test]
fn malformed_pgm_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&dir.path().join("l.pgm"), &[1, 2, 3, 4], 2).unwrap();
    let bytes = fs::read(dir.path().join("l.pgm")).unwrap();
    let pgm = decode_pgm(&bytes, "l").unwrap();
    assert_eq!(encode_pgm(&pgm), bytes);
    assert!(matches!(decode_pgm(&bytes[..bytes.len() - 1], "short"), Err(DataError::Pgm { .. })));
    assert!(matches!(decode_pgm(b"P2\n2 2\n255\n", "ascii"), Err(DataError::Pgm { .. })));
}

#[test]
fn dataset_round_trip_and_determinism() {
    let cfg = DatasetConfig {
        subjects: 3,
        frames: 2,
        size: 24,
        ..DatasetConfig::desk(5)
    };
    let samples = generate_dataset(&cfg, 2).unwrap();
    assert_eq!(samples.len(), 3 * 5 * 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(a.path(), &samples).unwrap();
    write_dataset(b.path(), &generate_dataset(&cfg, 1).unwrap()).unwrap();
    let manifest = fs::read(a.path().join(MANIFEST)).unwrap();
    assert_eq!(manifest, fs::read(b.path().join(MANIFEST)).unwrap());
    assert_eq!(String::from_utf8(manifest).unwrap().lines().count(), 1 + 30);

    let back = read_dataset(a.path()).unwrap();
    assert_eq!(back.len(), samples.len());
    for (x, y) in samples.iter().zip(&back) {
        assert_eq!((x.subject_id, x.view, x.frame_id), (y.subject_id, y.view, y.frame_id));
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.params, y.params, "poses are written with full precision");
        assert_eq!(x.image, y.image, "generated intensities are stored losslessly");
    }
}

#[test]
fn desk_preset_has_eight_hundred_samples() {
    assert_eq!(DatasetConfig::desk(42).len(), 800);
}
