use std::fs;

use lpn_core::error::CheckpointError;
use lpn_core::model::{init_params, load_weights, save_weights, Architecture};
use lpn_core::Error;

#[test]
fn save_load_save_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for arch in Architecture::ALL {
        let spec = arch.spec();
        let a = tmp.path().join(format!("{arch}-a.lpnw"));
        let b = tmp.path().join(format!("{arch}-b.lpnw"));
        save_weights(&init_params(&spec, 17).unwrap(), &a).unwrap();
        let loaded = load_weights(&a, &spec).unwrap();
        save_weights(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let (found, _) = Architecture::load_any(&a).unwrap();
        assert_eq!(found, arch);
    }
}

#[test]
fn full_model_file_size() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.lpnw");
    let spec = Architecture::LightPneumoNet.spec();
    save_weights(&init_params(&spec, 0).unwrap(), &path).unwrap();
    let len = fs::metadata(&path).unwrap().len() as usize;
    // Payload is 388,082 f32 values plus headers.
    assert!(len > 1_552_328 && len < 1_552_328 + 2048);
}

fn checkpoint_error(bytes: &[u8]) -> CheckpointError {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("x.lpnw");
    fs::write(&path, bytes).unwrap();
    match load_weights(&path, &Architecture::Reduced.spec()) {
        Err(Error::Checkpoint(e)) => e,
        other => panic!("expected a checkpoint error, got {other:?}"),
    }
}

#[test]
fn corruption_kinds_are_distinguished() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ok.lpnw");
    let spec = Architecture::Reduced.spec();
    save_weights(&init_params(&spec, 1).unwrap(), &path).unwrap();
    let good = fs::read(&path).unwrap();

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(
        checkpoint_error(&magic),
        CheckpointError::BadMagic(_)
    ));

    assert!(matches!(
        checkpoint_error(&good[..good.len() - 3]),
        CheckpointError::Truncated { .. }
    ));
    let mut longer = good.clone();
    longer.extend_from_slice(&[0, 0]);
    assert!(matches!(
        checkpoint_error(&longer),
        CheckpointError::TrailingBytes(2)
    ));

    let mut flipped = good.clone();
    flipped[good.len() - 10] ^= 1;
    assert!(matches!(
        checkpoint_error(&flipped),
        CheckpointError::ChecksumMismatch { .. }
    ));

    let mut trailer = good.clone();
    let n = trailer.len();
    trailer[n - 1] ^= 0x80;
    assert!(matches!(
        checkpoint_error(&trailer),
        CheckpointError::ChecksumMismatch { .. }
    ));

    // A valid file for the other architecture is a layout mismatch.
    let full = tmp.path().join("full.lpnw");
    save_weights(
        &init_params(&Architecture::LightPneumoNet.spec(), 1).unwrap(),
        &full,
    )
    .unwrap();
    assert!(matches!(
        checkpoint_error(&fs::read(&full).unwrap()),
        CheckpointError::LayoutMismatch(_)
    ));
}
