//! Write-then-read round trips of every on-disk format.

use std::collections::BTreeMap;

use oad_core::heads::LabelTriple;
use oad_core::layers::InitMode;
use oad_core::model::{Integration, Model};
use oad_core::objects::{Detection, SnippetDetections};
use oad_core::synth::{generate_episode, SynthConfig};
use oad_oam::checkpoint::{self, Checkpoint};
use oad_oam::config::RunConfig;
use oad_oam::dataset::{read_dataset, write_dataset};
use oad_oam::detections::{load_detections, write_detections};
use oad_oam::labels::{read_labels, write_labels};
use oad_oam::oadf;
use proptest::prelude::*;

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn detection() -> impl Strategy<Value = Detection> {
    (0usize..50, 0.0f32..=1.0, 0.0f32..0.5, 0.0f32..0.5, 1e-3f32..0.5, 1e-3f32..0.5).prop_map(|(category_id, confidence, x, y, w, h)| {
        Detection {
            category_id,
            confidence,
            bbox: [x, y, x + w, y + h],
        }
    })
}

fn label() -> impl Strategy<Value = LabelTriple> {
    prop_oneof![
        Just(LabelTriple::BACKGROUND),
        (1usize..100, 1usize..100, 1usize..1000).prop_map(|(v, n, a)| LabelTriple::action(v, n, a)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oadf_round_trip(t in 0usize..20, d in 1usize..16, seed in any::<u64>()) {
        let mut rng = oad_core::Rng::new(seed);
        // Arbitrary bit patterns, including NaN payloads and subnormals.
        let data: Vec<f32> = (0..t * d).map(|_| f32::from_bits(rng.next_u64() as u32)).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.oadf");
        oadf::write(&p, t, d, &data).unwrap();
        let back = oadf::read(&p).unwrap();
        prop_assert_eq!((back.snippets, back.dim), (t, d));
        prop_assert_eq!(bits(&back.data), bits(&data));
    }

    #[test]
    fn detections_round_trip(lines in prop::collection::vec(prop::collection::vec(detection(), 0..6), 0..10)) {
        let entries: Vec<SnippetDetections> = lines
            .into_iter()
            .enumerate()
            .map(|(i, detections)| SnippetDetections { video_id: format!("vid {}", i % 3), snippet_index: i, detections })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        write_detections(&p, &entries).unwrap();
        let map = load_detections(&p).unwrap();
        let want: BTreeMap<_, _> = entries.into_iter().map(|s| ((s.video_id.clone(), s.snippet_index), s)).collect();
        prop_assert_eq!(map, want);
    }

    #[test]
    fn labels_round_trip(videos in prop::collection::btree_map("[a-z_0-9,\" ]{1,12}", prop::collection::vec(label(), 1..20), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        write_labels(&p, &videos).unwrap();
        prop_assert_eq!(read_labels(&p).unwrap(), videos);
    }
}

#[test]
fn dataset_round_trip_of_random_episodes() {
    let cfg = SynthConfig {
        num_videos: 10,
        snippets_per_video: 17,
        seed: 99,
        ..SynthConfig::default()
    };
    let records: Vec<_> = (0..10).map(|i| generate_episode(&cfg, i).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&records, dir.path()).unwrap();
    let (back, _) = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!(a.video_id, b.video_id);
        assert_eq!(a.features.shape(), b.features.shape());
        assert_eq!(bits(a.features.data()), bits(b.features.data()));
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.labels, b.labels);
    }
}

#[test]
fn truncated_feature_file_in_dataset() {
    let cfg = SynthConfig {
        num_videos: 2,
        snippets_per_video: 5,
        ..SynthConfig::default()
    };
    let records: Vec<_> = (0..2).map(|i| generate_episode(&cfg, i).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&records, dir.path()).unwrap();
    let p = dir.path().join("features/video_0001.oadf");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
    let e = read_dataset(dir.path()).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    let msg = e.to_string();
    assert!(msg.contains("video_0001.oadf") && msg.contains(&format!("{} bytes", 16 + 5 * 32 * 4)), "{msg}");
}

#[test]
fn checkpoints_round_trip_bitwise_in_every_mode() {
    for (i, mode) in Integration::ALL.into_iter().enumerate() {
        let mut config = RunConfig::default();
        config.model.integration = mode.into();
        let model = Model::<f32>::new(config.model.to_core(), i as u64, InitMode::Random).unwrap();
        let ck = Checkpoint::from_model(&config, &model);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.oadc");
        checkpoint::save(&p, &ck).unwrap();
        let back = checkpoint::load(&p).unwrap();
        assert_eq!(back.config, config);
        let rebuilt = back.model().unwrap();
        for (a, b) in rebuilt.params.iter().zip(model.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            assert_eq!(bits(a.value.data()), bits(b.value.data()));
        }
        checkpoint::save(&p, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), checkpoint::encode(&ck));
    }
}
