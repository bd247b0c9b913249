use fmce::{checkpoint, fmcs_file, loss_log, FormatError};
use fmce_core::fmcs::{FmcsDataset, FmcsSample};
use fmce_core::nn::{Dims, Sequential};
use fmce_core::original_task::{generate_dataset, OriginalTaskModel};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = FmcsDataset> {
    (2usize..6, 1usize..4, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(k, c, h, w, per)| {
        let len = c * h * w;
        prop::collection::vec(prop::collection::vec(-1e6f32..1e6, len), k * per).prop_map(move |rows| {
            let samples = rows
                .into_iter()
                .enumerate()
                .map(|(i, features)| FmcsSample {
                    features,
                    label: (i % k + 1) as u8,
                    source_index: (i / k) as u32,
                    marker_epoch: 7 * (i % k + 1) as u32,
                })
                .collect();
            FmcsDataset::new(k, Dims::new(c, h, w), samples).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fmcs_round_trip_is_bit_exact(ds in dataset_strategy()) {
        let bytes = fmcs_file::encode(&ds).unwrap();
        let back = fmcs_file::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(fmcs_file::encode(&back).unwrap(), bytes);
    }

    #[test]
    fn any_flipped_byte_is_rejected(ds in dataset_strategy(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = fmcs_file::encode(&ds).unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(fmcs_file::decode(&bytes).is_err());
    }

    #[test]
    fn truncation_is_rejected(ds in dataset_strategy(), cut in 1usize..64) {
        let bytes = fmcs_file::encode(&ds).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(fmcs_file::decode(&bytes[..keep]).is_err());
    }

    #[test]
    fn loss_csv_round_trips(values in prop::collection::vec(1e-12f64..1e6, 2..80)) {
        let parsed = loss_log::parse(&loss_log::to_csv(&values), "p").unwrap();
        prop_assert_eq!(parsed.values(), values.as_slice());
    }
}

#[test]
fn header_corruption_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.fmcs");
    let samples = (0..4)
        .map(|i| FmcsSample { features: vec![i as f32; 3], label: (i % 2 + 1) as u8, source_index: i, marker_epoch: 3 })
        .collect();
    let ds = FmcsDataset::new(2, Dims::new(3, 1, 1), samples).unwrap();
    let sha = fmcs_file::save(&path, &ds).unwrap();
    assert_eq!(sha, fmce::sha256_hex(&std::fs::read(&path).unwrap()));
    assert_eq!(fmcs_file::load(&path).unwrap(), ds);

    let good = std::fs::read(&path).unwrap();
    let mut bad = good.clone();
    bad[4] = 9;
    std::fs::write(&path, &bad).unwrap();
    let err = fmcs_file::load(&path).unwrap_err().to_string();
    assert!(err.contains("d.fmcs"), "{err}");

    // a consistent checksum does not rescue an unknown version
    let body = &bad[..bad.len() - 8];
    let crc = crc::Crc::<u64>::new(&crc::CRC_64_XZ).checksum(body);
    let mut resealed = body.to_vec();
    resealed.extend_from_slice(&crc.to_le_bytes());
    assert!(matches!(fmcs_file::decode(&resealed), Err(FormatError::UnsupportedVersion(9))));
}

#[test]
fn checkpoint_reload_extracts_identical_features() {
    let data = generate_dataset(3, 50).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for seed in [0u64, 1, 99] {
        let model = OriginalTaskModel::new(seed).unwrap();
        let path = dir.path().join(format!("m{seed}.fmck"));
        checkpoint::save(&path, model.graph()).unwrap();
        let back = OriginalTaskModel::from_graph(checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(back.graph(), model.graph());
        let a = model.extract_feature_maps(&Sequential, &data.train.images).unwrap();
        let b = back.extract_feature_maps(&Sequential, &data.train.images).unwrap();
        assert_eq!(a, b);
    }
}
