//! Round trips through the on-disk formats shared with the embedding producer.

use iclcover::corpus::{
    load_parses, load_pool, validate_bundle, write_embeddings, write_parses, write_pool, EmbeddingRecord,
    EmbeddingStore, Instance, ParseRecord, MANIFEST_FILE,
};
use iclcover::relevance::{MetricConfig, MetricKind, Resources, Scorer};
use iclcover::setcover::{decompose, greedy_select};
use iclcover::terms::TermScheme;

fn unit(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn records() -> Vec<EmbeddingRecord> {
    let rows = [
        ("a", [1.0, 0.0, 0.0]),
        ("b", [0.0, 1.0, 0.0]),
        ("c", [1.0, 1.0, 0.0]),
        ("t", [1.0, 0.5, 0.1]),
    ];
    rows.iter()
        .map(|(id, v)| {
            let s = unit(v);
            EmbeddingRecord {
                id: id.to_string(),
                sentence: s.clone(),
                tokens: vec![id.to_string(), "x".into()],
                token_vectors: [s.clone(), unit(&[0.0, 0.2, 1.0])].concat(),
            }
        })
        .collect()
}

#[test]
fn bundle_written_to_disk_scores_like_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let instances = vec![
        Instance::new("a", "river runs", "r"),
        Instance::new("b", "state capital", "s"),
        Instance::new("c", "river state", "rs"),
    ];
    write_pool(dir.path().join("pool.jsonl"), &instances).unwrap();
    write_embeddings(dir.path().join("emb"), 3, 3, &records()).unwrap();
    assert!(dir.path().join("emb").join(MANIFEST_FILE).exists());

    let pool = load_pool(dir.path().join("pool.jsonl")).unwrap();
    let store = EmbeddingStore::load(dir.path().join("emb")).unwrap();
    let report = validate_bundle(&pool, Some(&store), None);
    assert_eq!(report.orphaned_embeddings, vec!["t"]);
    assert!(report.missing_embeddings.is_empty());

    let mem = EmbeddingStore::from_records(3, 3, &records()).unwrap();
    let test = Instance::new("t", "river state capital", "");
    for kind in [MetricKind::Cosine, MetricKind::Bsr, MetricKind::Bsp, MetricKind::Bsf1] {
        let disk = Scorer::new(MetricConfig::new(kind), &pool, Resources { store: Some(&store), parses: None }).unwrap();
        let ram = Scorer::new(MetricConfig::new(kind), &pool, Resources { store: Some(&mem), parses: None }).unwrap();
        assert_eq!(disk.rank_independent(&test, 3).unwrap(), ram.rank_independent(&test, 3).unwrap());
    }
}

#[test]
fn parses_on_disk_drive_subtree_bm25() {
    let dir = tempfile::tempdir().unwrap();
    let chain = |id: &str, words: &[&str]| ParseRecord {
        id: id.into(),
        tokens: words.iter().map(|w| w.to_string()).collect(),
        lemmas: words.iter().map(|w| w.to_string()).collect(),
        heads: (0..words.len() as i64).map(|i| i - 1).collect(),
        dep_labels: vec!["dep".into(); words.len()],
    };
    let parses = vec![
        chain("a", &["rivers", "in", "texas"]),
        chain("b", &["texas", "rivers"]),
        chain("c", &["capital", "city"]),
        chain("t", &["rivers", "in", "texas"]),
    ];
    write_parses(dir.path().join("parses.jsonl"), &parses).unwrap();
    let map = load_parses(dir.path().join("parses.jsonl")).unwrap();
    let pool = iclcover::corpus::CandidatePool::new(vec![
        Instance::new("a", "rivers in texas", "x"),
        Instance::new("b", "texas rivers", "y"),
        Instance::new("c", "capital city", "z"),
    ])
    .unwrap();
    let cfg = MetricConfig::new(MetricKind::Bm25(TermScheme::DepSubtree { s_max: 4 }));
    let scorer = Scorer::new(cfg, &pool, Resources { store: None, parses: Some(&map) }).unwrap();
    let test = Instance::new("t", "rivers in texas", "");
    let top = scorer.rank_independent(&test, 3).unwrap();
    assert_eq!(top[0].id, "a");
    assert_eq!(top[2].score, 0.0);

    let d = decompose(&scorer, &test).unwrap();
    let out = greedy_select(&d, 2, "t", "bm25:depst4").unwrap();
    assert_eq!(out.selection.demo_ids[0], "a");
}
