use std::path::PathBuf;

use iclcover::corpus::{load_pool, Selection};
use iclcover::promptkit::{load_templates, order_for_prompt, render_ids, OrderingMode};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn two_demo_prompt_matches_golden_bytes() {
    let pool = load_pool(fixture("golden_pool.jsonl")).unwrap();
    let templates = load_templates(fixture("golden_templates.json")).unwrap();
    let sel = Selection {
        test_id: "geo-test".into(),
        demo_ids: vec!["geo-1".into(), "geo-3".into()],
        instance_scores: vec![0.9, 0.4],
        set_score: None,
        metric_name: "bm25:unigram".into(),
        seed: None,
    };
    let ordered = order_for_prompt(&sel, OrderingMode::ByInstanceScore).unwrap();
    let prompt = render_ids(&ordered, &pool, &templates["geoquery"], "which rivers run through texas").unwrap();
    let golden = std::fs::read_to_string(fixture("golden_prompt.txt")).unwrap();
    assert_eq!(prompt, golden);
}

#[test]
fn break_template_uses_its_own_cue() {
    let templates = load_templates(fixture("golden_templates.json")).unwrap();
    let pool = load_pool(fixture("golden_pool.jsonl")).unwrap();
    let prompt = render_ids(&[], &pool, &templates["break"], "is there a cube").unwrap();
    assert_eq!(prompt, "Sentence: is there a cube\nDecomposition:");
}
