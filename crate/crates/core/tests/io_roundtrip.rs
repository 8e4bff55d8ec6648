use cascadetrack::depthops::DepthMap;
use cascadetrack::io::{
    decode_raster, encode_raster, format_detections, format_intrinsics, format_tracks,
    parse_detections, parse_intrinsics, parse_tracks, read_sequence_dir, write_sequence_dir,
    DetectionFile, DetectionSequence, FrameDetections, IoError, Raster, SequenceDir, TrackFile,
    TrackRecord, RASTER_HEADER_LEN,
};
use cascadetrack::metrics::{Frame, PanopticMap, Sequence, VOID_CLASS};
use cascadetrack::{CameraIntrinsics, Detection, TrackId};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn detection(dim: usize) -> impl Strategy<Value = Detection> {
    (
        (finite(), finite()),
        prop::collection::vec(finite(), dim),
        finite(),
        any::<u32>(),
        finite(),
    )
        .prop_map(|(center, kernel, mean_depth, category, score)| Detection {
            center,
            kernel,
            mean_depth,
            category,
            score,
        })
}

fn detection_file() -> impl Strategy<Value = DetectionFile> {
    (1usize..5).prop_flat_map(|dim| {
        let frames = prop::collection::vec(
            (1u64..4, prop::collection::vec(detection(dim), 0..4)),
            0..5,
        )
        .prop_map(|steps| {
            let mut frame = 0;
            steps
                .into_iter()
                .map(|(gap, detections)| {
                    frame += gap;
                    FrameDetections { frame, detections }
                })
                .collect::<Vec<_>>()
        });
        prop::collection::vec(frames, 0..4).prop_map(move |seqs| DetectionFile {
            kernel_dim: dim,
            sequences: seqs
                .into_iter()
                .enumerate()
                .filter(|(_, f)| !f.is_empty())
                .map(|(i, frames)| DetectionSequence {
                    id: format!("seq-{i}"),
                    frames,
                })
                .collect(),
        })
    })
}

fn panoptic() -> impl Strategy<Value = PanopticMap> {
    (0usize..6, 0usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(
            prop_oneof![Just((VOID_CLASS, 0u32)), (0u16..0xFFFF, 0u32..=0xFFFF)],
            w * h,
        )
        .prop_map(move |labels| PanopticMap::from_labels(w, h, &labels).unwrap())
    })
}

fn depth(w: usize, h: usize) -> impl Strategy<Value = DepthMap> {
    prop::collection::vec(
        prop_oneof![4 => (0.01f32..200.0).prop_map(|v| Some(v as f64)), 1 => Just(None)],
        w * h,
    )
    .prop_map(move |v| {
        let valid = v.iter().map(Option::is_some).collect();
        let values = v.into_iter().map(|x| x.unwrap_or(0.0)).collect();
        DepthMap::with_mask(w, h, values, valid).unwrap()
    })
}

fn same_depth(a: &DepthMap, b: &DepthMap) -> bool {
    a.width == b.width
        && a.height == b.height
        && a.valid == b.valid
        && a.values
            .iter()
            .zip(&b.values)
            .zip(&a.valid)
            .all(|((x, y), &ok)| !ok || x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn detections_round_trip_exactly(file in detection_file()) {
        let text = format_detections(&file).unwrap();
        let back = parse_detections(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(format_detections(&back).unwrap(), text);
    }

    #[test]
    fn tracks_round_trip_exactly(records in prop::collection::btree_set((0u64..50, 0usize..20), 0..30), ids in prop::collection::vec(1u64..1000, 30)) {
        let recs: Vec<TrackRecord> = records
            .into_iter()
            .zip(ids)
            .map(|((frame, detection), id)| TrackRecord { frame, detection, track_id: TrackId(id) })
            .collect();
        let file = TrackFile { sequences: if recs.is_empty() { vec![] } else { vec![("a".into(), recs)] } };
        let text = format_tracks(&file).unwrap();
        prop_assert_eq!(parse_tracks(&text).unwrap(), file);
    }

    #[test]
    fn panoptic_rasters_round_trip(m in panoptic()) {
        let bytes = encode_raster(&Raster::Panoptic(m.clone())).unwrap();
        prop_assert_eq!(bytes.len(), RASTER_HEADER_LEN + 4 * m.len());
        prop_assert_eq!(decode_raster(&bytes).unwrap(), Raster::Panoptic(m));
    }

    #[test]
    fn depth_rasters_round_trip(d in (0usize..6, 0usize..6).prop_flat_map(|(w, h)| depth(w, h))) {
        let bytes = encode_raster(&Raster::Depth(d.clone())).unwrap();
        match decode_raster(&bytes).unwrap() {
            Raster::Depth(back) => prop_assert!(same_depth(&back, &d)),
            other => prop_assert!(false, "decoded {other:?}"),
        }
    }

    #[test]
    fn intrinsics_round_trip(fx in 1.0..5000.0f64, fy in 1.0..5000.0f64, w in 16.0..4096.0f64, h in 16.0..4096.0f64, cu in 0.0..1.0f64, cv in 0.0..1.0f64) {
        let i = CameraIntrinsics::new(fx, fy, cu * w, cv * h, w, h).unwrap();
        prop_assert_eq!(parse_intrinsics(&format_intrinsics(&i)).unwrap(), i);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_raster(&bytes);
        let mut framed = b"UPRS\x01\x00".to_vec();
        framed.extend_from_slice(&bytes);
        let _ = decode_raster(&framed);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,80}", lines in prop::collection::vec("[ -~]{0,40}", 0..6)) {
        let _ = parse_detections(&text);
        let _ = parse_tracks(&text);
        let _ = parse_intrinsics(&text);
        let body = lines.join("\n");
        let _ = parse_detections(&format!("#detections v1 kernel_dim=2\n{body}"));
        let _ = parse_tracks(&format!("#tracks v1\n{body}"));
    }
}

#[test]
fn malformed_inputs_are_reported() {
    assert!(matches!(decode_raster(b"PNG\x00"), Err(IoError::BadMagic)));
    assert!(matches!(
        decode_raster(b"UPRS\x02\x00\x01\x01\x00\x00\x00\x01\x00\x00\x00"),
        Err(IoError::UnsupportedVersion(2))
    ));
    assert!(matches!(
        decode_raster(b"UPRS\x01\x00\x01\x01\x00\x00\x00\x01\x00\x00\x00\x00"),
        Err(IoError::TruncatedPayload { expected: 4, found: 1 })
    ));
    assert!(matches!(
        decode_raster(b"UPRS\x01\x00\x07\x00\x00\x00\x00\x00\x00\x00\x00"),
        Err(IoError::UnknownKind(7))
    ));
    // Huge dimensions must not allocate or overflow.
    assert!(decode_raster(b"UPRS\x01\x00\x01\xff\xff\xff\xff\xff\xff\xff\xff").is_err());
    assert!(matches!(
        parse_detections("#detections v1 kernel_dim=2\ns 0 1 2 3 4 0.5 1.0\n"),
        Err(IoError::DimMismatch { line: 2, expected: 2, found: 1 })
    ));
    assert!(matches!(
        parse_detections("#detections v1 kernel_dim=1\ns 3\ns 1\n"),
        Err(IoError::Parse { line: 3, .. })
    ));
    assert!(matches!(parse_tracks("#tracks v1\ns 0 0 0\n"), Err(IoError::Parse { line: 2, .. })));
    assert!(matches!(
        parse_tracks("#tracks v1\ns 0 0 1\ns 0 0 2\n"),
        Err(IoError::Parse { line: 3, .. })
    ));
}

#[test]
fn sequence_directories_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<(u16, u32)> = (0..12).map(|i| if i % 5 == 0 { (VOID_CLASS, 0) } else { (i % 3, i as u32 % 2) }).collect();
    let pm = PanopticMap::from_labels(4, 3, &labels).unwrap();
    let d = DepthMap::new(4, 3, (0..12).map(|i| if i == 7 { f64::NAN } else { 1.5 * i as f64 + 0.25 }).collect()).unwrap();
    let seq = Sequence::new(vec![Frame::with_depth(pm.clone(), d), Frame::new(pm)]);
    let original = SequenceDir {
        sequences: vec![("a".into(), vec![3, 10], seq.clone()), ("b".into(), vec![0, 1], seq)],
    };
    write_sequence_dir(dir.path(), &original).unwrap();
    let back = read_sequence_dir(dir.path()).unwrap();
    assert_eq!(back.sequences.len(), 2);
    for ((n1, f1, s1), (n2, f2, s2)) in back.sequences.iter().zip(&original.sequences) {
        assert_eq!((n1, f1), (n2, f2));
        for (a, b) in s1.frames.iter().zip(&s2.frames) {
            assert_eq!(a.panoptic, b.panoptic);
            match (&a.depth, &b.depth) {
                (Some(x), Some(y)) => assert!(same_depth(x, y)),
                (None, None) => {}
                _ => panic!("depth presence differs"),
            }
        }
    }
}
