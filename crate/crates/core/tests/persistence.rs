mod common;

use chaintwin::container::Persist;
use chaintwin::control::ControlSequence;
use chaintwin::envnet::{self, EnvironmentNetwork, TruncationConfig};
use chaintwin::models::{CircuitLayout, MblParams, XyzParams};
use chaintwin::rom::{ReducedOrderModel, Route};
use chaintwin::Error;
use common::up_at;
use proptest::prelude::*;

fn temp_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("chaintwin-{}-{name}", std::process::id()))
}

#[test]
fn rom_file_roundtrip() {
    let layout = CircuitLayout::mbl(&MblParams::sampled(0.3, 6, 2), 15, 3).unwrap();
    for route in [Route::Chain, Route::Dense] {
        let rom = ReducedOrderModel::build(&layout, &up_at(6, 3), &TruncationConfig::new(1e-3, 32), route).unwrap();
        let path = temp_path("rom.ctw");
        rom.save(&path).unwrap();
        let back = ReducedOrderModel::load(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(back.to_bytes(), rom.to_bytes());
        let c = ControlSequence::random(2, 9, 2, 1);
        assert_eq!(back.propagate(Some(&c)).unwrap(), rom.propagate(Some(&c)).unwrap());
    }
}

#[test]
fn network_with_isometries_roundtrip() {
    let layout = CircuitLayout::xyz(&XyzParams::reference(), 5, 8, 0).unwrap();
    let cfg = TruncationConfig { keep_isometries: true, ..TruncationConfig::new(1e-2, 16) };
    let net = envnet::build_dense_environment(&layout, &up_at(5, 0), &cfg).unwrap().network;
    let bytes = net.to_bytes();
    let back = EnvironmentNetwork::from_bytes(&bytes).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.isometries().unwrap().len(), 9);
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(ControlSequence::load(temp_path("absent.ctw")), Err(Error::Io(_))));
}

proptest! {
    #[test]
    fn controls_roundtrip_bit_identical(k_start in 0usize..50, len in 0usize..20, seed in any::<u64>()) {
        let c = ControlSequence::random(k_start, k_start + len, 2, seed);
        let bytes = c.to_bytes();
        let back = ControlSequence::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, c);
    }

    #[test]
    fn truncated_input_never_panics(cut in 0usize..200, seed in any::<u64>()) {
        let bytes = ControlSequence::random(0, 3, 2, seed).to_bytes();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(ControlSequence::from_bytes(&bytes[..cut]).is_err());
    }

    #[test]
    fn flipped_bytes_never_panic(pos in 0usize..400, byte in any::<u8>()) {
        let mut bytes = ControlSequence::random(1, 4, 2, 0).to_bytes();
        let pos = pos % bytes.len();
        bytes[pos] = byte;
        let _ = ControlSequence::from_bytes(&bytes);
    }
}
