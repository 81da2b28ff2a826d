use std::io::Cursor;
use std::sync::Arc;

use aura_memory::*;
use proptest::prelude::*;

fn mock() -> Arc<dyn Embedder> {
    Arc::new(MockEmbedder::new())
}

fn lesson(id: &str, text: &str, cause: &str) -> DistilledLesson {
    DistilledLesson {
        id: id.into(),
        created_t: 12.5,
        anomaly_text: text.into(),
        validated_characterisation: format!("{text}; confirmed cause: {cause}"),
        root_cause: cause.into(),
        source_session: format!("session-{id}"),
        origin: Origin::Live,
        validated: true,
        operator_confidence: 0.95,
        embedding: Vec::new(),
    }
}

fn five() -> MemoryStore {
    let s = MemoryStore::new(mock());
    for (id, text, cause) in [
        ("l-3", "heading drift compass swing", "magnetic interference"),
        ("l-1", "depth heave sluggish descent", "ballast trim imbalance"),
        ("l-5", "yaw_rate sluggish turn heading lag", "thruster fouling"),
        ("l-2", "sway surge pull lateral", "tether entanglement"),
        ("l-4", "sway heading pull tether", "tether entanglement"),
    ] {
        s.insert(lesson(id, text, cause)).unwrap();
    }
    s
}

#[test]
fn exact_text_retrieves_itself_first() {
    let s = five();
    let hits = s.query("yaw_rate sluggish turn heading lag", 3, 0.0).unwrap();
    assert_eq!(hits[0].lesson.id, "l-5");
    assert!((hits[0].similarity - 1.0).abs() < 1e-6);
}

#[test]
fn k_limits_and_orders_hits() {
    let s = five();
    let hits = s.query("heading sway", 2, -1.0).unwrap();
    assert_eq!(hits.len(), 2);
    assert!(hits[0].similarity >= hits[1].similarity);
}

#[test]
fn empty_store_returns_nothing() {
    let s = MemoryStore::new(mock());
    assert!(s.query("anything", 3, 0.0).unwrap().is_empty());
    assert!(matches!(s.query("anything", 0, 0.0), Err(MemoryError::InvalidK)));
}

#[test]
fn similarity_floor_filters() {
    let s = five();
    let hits = s.query("completely unrelated words", 5, DEFAULT_MIN_SIMILARITY).unwrap();
    assert!(hits.is_empty(), "{hits:?}");
}

#[test]
fn unvalidated_and_duplicate_rejected() {
    let s = five();
    let mut l = lesson("l-9", "x y", "c");
    l.validated = false;
    assert!(matches!(s.insert(l), Err(MemoryError::Unvalidated(_))));
    assert!(matches!(
        s.insert(lesson("l-1", "a b", "c")),
        Err(MemoryError::Duplicate(_))
    ));
    assert_eq!(s.len(), 5);
}

#[test]
fn wrong_dimension_rejected() {
    let s = MemoryStore::new(mock());
    let mut l = lesson("a", "x", "c");
    l.embedding = vec![1.0; 3];
    assert!(matches!(s.insert(l), Err(MemoryError::Dimension { .. })));
}

#[test]
fn round_trip_is_identical_and_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let s = five();
    let p1 = dir.path().join("a.ndjson");
    let p2 = dir.path().join("b.ndjson");
    s.persist(&p1).unwrap();
    s.persist(&p2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    assert_eq!(b1, std::fs::read(&p2).unwrap());

    let back = MemoryStore::load(&p1, mock()).unwrap();
    assert_eq!(back.lessons(), s.lessons());
    let p3 = dir.path().join("c.ndjson");
    back.persist(&p3).unwrap();
    assert_eq!(b1, std::fs::read(&p3).unwrap());
}

#[test]
fn truncated_files_fail_whole() {
    let text = five().to_ndjson();
    let lines: Vec<&str> = text.lines().collect();

    // cut on a line boundary: header count catches it
    let cut = lines[..4].join("\n") + "\n";
    match MemoryStore::from_reader(Cursor::new(cut), mock()) {
        Err(MemoryError::CorruptRecord { index, .. }) => assert_eq!(index, 3),
        other => panic!("{other:?}"),
    }

    // cut mid-record
    let partial = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
    match MemoryStore::from_reader(Cursor::new(partial), mock()) {
        Err(MemoryError::CorruptRecord { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }

    assert!(matches!(
        MemoryStore::from_reader(Cursor::new(""), mock()),
        Err(MemoryError::CorruptHeader(_))
    ));
}

#[test]
fn tampered_record_names_its_index() {
    let text = five().to_ndjson().replace("\"validated\":true", "\"validated\":false");
    match MemoryStore::from_reader(Cursor::new(text), mock()) {
        Err(MemoryError::CorruptRecord { index, .. }) => assert_eq!(index, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failed_load_leaves_previous_file_usable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ndjson");
    five().persist(&path).unwrap();
    let good = std::fs::read(&path).unwrap();
    std::fs::write(&path, &good[..good.len() - 20]).unwrap();
    assert!(MemoryStore::open(&path, mock()).is_err());
    std::fs::write(&path, &good).unwrap();
    assert_eq!(MemoryStore::open(&path, mock()).unwrap().len(), 5);
}

#[test]
fn write_through_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/m.ndjson");
    {
        let s = MemoryStore::open(&path, mock()).unwrap();
        s.insert(lesson("a", "heading drift", "magnetic interference")).unwrap();
        s.insert(lesson("b", "depth sink", "ballast trim imbalance")).unwrap();
    }
    let s = MemoryStore::open(&path, mock()).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.query("heading drift", 1, 0.0).unwrap()[0].lesson.id, "a");
}

#[test]
fn readers_see_whole_inserts_only() {
    let s = Arc::new(MemoryStore::new(mock()));
    std::thread::scope(|scope| {
        let w = s.clone();
        scope.spawn(move || {
            for i in 0..200 {
                w.insert(lesson(&format!("id-{i:03}"), "heading drift", "m")).unwrap();
            }
        });
        for _ in 0..4 {
            let r = s.clone();
            scope.spawn(move || {
                let mut last = 0;
                for _ in 0..200 {
                    let hits = r.query("heading drift", 500, 0.0).unwrap();
                    assert!(hits.len() >= last);
                    assert!(hits.iter().all(|h| h.lesson.embedding.len() == MOCK_DIMENSION));
                    last = hits.len();
                }
            });
        }
    });
    assert_eq!(s.len(), 200);
}

#[test]
fn token_overlap_orders_similarity() {
    // Ten distinct words each; the pair shares nine of them.
    let base: Vec<String> = (0..10).map(|i| format!("w{i}x")).collect();
    let near: Vec<String> = base[..9].iter().cloned().chain(["other".into()]).collect();
    let far: Vec<String> = (0..10).map(|i| format!("v{i}y")).collect();
    let e = MockEmbedder::new();
    let a = e.embed(&base.join(" ")).unwrap();
    let sim_near = cosine(&a, &e.embed(&near.join(" ")).unwrap());
    let sim_far = cosine(&a, &e.embed(&far.join(" ")).unwrap());
    // Without collisions the shared-token cosine is exactly 9/10.
    assert!(sim_near >= 0.9 - 1e-12, "{sim_near}");
    assert!(sim_near > sim_far);
}

proptest! {
    #[test]
    fn insert_admits_only_validated_confident_lessons(validated in any::<bool>(), conf in -0.5f64..1.5) {
        let s = MemoryStore::new(mock());
        let mut l = lesson("g", "heading drift", "c");
        l.validated = validated;
        l.operator_confidence = conf;
        let ok = s.insert(l).is_ok();
        prop_assert_eq!(ok, validated && conf > 0.9 && conf <= 1.0);
        prop_assert_eq!(s.len(), usize::from(ok));
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in prop::collection::vec(-1e3f64..1e3, 8),
        b in prop::collection::vec(-1e3f64..1e3, 8),
    ) {
        let ab = cosine(&a, &b);
        prop_assert_eq!(ab, cosine(&b, &a));
        prop_assert!((-1.0..=1.0).contains(&ab));
        if a.iter().any(|x| *x != 0.0) {
            prop_assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mock_embedding_unit_norm(text in "[a-z ]{1,60}") {
        prop_assume!(!text.trim().is_empty());
        let v = MockEmbedder::new().embed(&text).unwrap();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-9);
    }
}
