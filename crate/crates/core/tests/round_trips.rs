use dogma_core::anchors::{build_anchor_set, AnchorSet};
use dogma_core::decode::{decode, DecodeConfig};
use dogma_core::geometry::{angle_diff, OrientedBox, Shape};
use dogma_core::io::frame::{load_frames_dir, store_frames_dir};
use dogma_core::io::tensor::{load_a_map, load_tensors, store_a_map, store_tensors};
use dogma_core::simulator::{simulate, ObjectSpec, ScenarioConfig, Waypoint};
use dogma_core::targets::{encode_targets, max_iou_map};
use dogma_core::GridMeta;
use proptest::prelude::*;

fn anchors() -> AnchorSet {
    build_anchor_set(&[Shape::from_dims(1.8, 4.5), Shape::from_dims(0.8, 1.9)], 12, 0.3).unwrap()
}

#[test]
fn simulated_frames_survive_disk() {
    let mut sc = ScenarioConfig::new(GridMeta::new(64, 48, 0.25), 6);
    sc.objects.push(ObjectSpec {
        shape: Shape::from_dims(1.8, 4.5),
        waypoints: vec![
            Waypoint { e: 2.0, n: 3.0, time: 0.0 },
            Waypoint { e: 9.0, n: 4.0, time: 0.5 },
        ],
        class_tag: "car".into(),
    });
    sc.static_walls.push(OrientedBox::new(12.0, 9.0, 0.3, 4.0, 0.2));
    let (frames, _) = simulate(&sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    store_frames_dir(dir.path(), &frames).unwrap();
    assert_eq!(load_frames_dir(dir.path()).unwrap(), frames);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stored_tensors_equal_their_single_precision_cast(
        e in 3.0f64..9.0,
        n in 3.0f64..9.0,
        phi in -3.1f64..3.1,
        w in 0.6f64..2.2,
        l in 1.5f64..5.0,
    ) {
        let meta = GridMeta::new(64, 64, 0.2);
        let set = anchors();
        let t = encode_targets(&meta, &[OrientedBox::new(e, n, w, l, phi)], &set).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dgt");
        store_tensors(&p, &t).unwrap();
        let back = load_tensors(&p).unwrap().attach(&meta, &set.cast::<f32>()).unwrap();
        prop_assert_eq!(back, t.cast::<f32>());

        let a = max_iou_map(&t.y_iou);
        let q = dir.path().join("a.dga");
        store_a_map(&q, &a).unwrap();
        let a_back = load_a_map(&q).unwrap();
        prop_assert!(a_back.a_map.iter().zip(a.a_map.iter()).all(|(x, y)| *x == *y as f32));
    }

    #[test]
    fn single_precision_decode_tracks_double(
        e in 3.0f64..9.0,
        n in 3.0f64..9.0,
        phi in -3.1f64..3.1,
        w in 1.4f64..2.2,
        l in 3.5f64..5.5,
    ) {
        let meta = GridMeta::new(64, 64, 0.2);
        let t = encode_targets(&meta, &[OrientedBox::new(e, n, w, l, phi)], &anchors()).unwrap();
        let d64 = decode(&t, &DecodeConfig::default()).unwrap().detections;
        let d32 = decode(&t.cast::<f32>(), &DecodeConfig::default()).unwrap().detections;
        prop_assert_eq!(d64.len(), 1);
        prop_assert_eq!(d32.len(), 1);
        let (a, b) = (d64[0].bbox, d32[0].bbox.cast::<f64>());
        prop_assert!((a.width - w).abs() < 1e-9 && (a.length - l).abs() < 1e-9);
        prop_assert!((a.width - b.width).abs() < 1e-5 && (a.length - b.length).abs() < 1e-5);
        prop_assert!(angle_diff(a.orientation, b.orientation).abs() < 1e-5);
        prop_assert!(angle_diff(a.orientation, phi).abs() < 1e-9);
    }
}
