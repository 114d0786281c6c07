use std::collections::BTreeMap;

use proptest::prelude::*;
use trielog_core::config::EngineConfig;
use trielog_core::engine::{Engine, LineMeta};
use trielog_core::expert::{ExpertFeedback, FeedbackSource, KnowledgeBase};
use trielog_core::preprocess::RawLine;
use trielog_core::trie::Decision;
use trielog_core::windows::Window;

const MIN: i64 = 60_000;

fn config(extra: &str) -> EngineConfig {
    let text = format!("[windows]\nmode = \"fixed\"\nspan = \"10m\"\n[expert]\npending_timeout = \"1d\"\n{extra}");
    EngineConfig::from_toml(&text).unwrap()
}

/// Twelve busy templates for `minutes` minutes with one rare line at `rare_at`.
fn stream(minutes: i64, rare_at: i64) -> Vec<RawLine> {
    let mut out = Vec::new();
    for minute in 0..minutes {
        for k in 0..12 {
            for rep in 0..5 {
                let text = format!("service zz{k} heartbeat ok seq {}", 1000 + rep);
                out.push((minute * MIN + rep, text));
            }
        }
        if minute == rare_at {
            out.push((minute * MIN + 30_000, "kernel panic in disk controller".to_string()));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, (t, text))| RawLine { text, line_no: i as u64, timestamp: Some(t) })
        .collect()
}

fn run(engine: &mut Engine, lines: Vec<RawLine>) -> Vec<Window> {
    let mut closed = Vec::new();
    for l in lines {
        closed.extend(engine.ingest(l, LineMeta::default()));
    }
    closed.extend(engine.flush());
    closed
}

#[test]
fn rare_template_flags_its_window_only() {
    let mut e = Engine::from_config(&config("")).unwrap();
    let windows = run(&mut e, stream(40, 25));
    assert_eq!(windows.len(), 4);
    let flagged: Vec<u64> = windows.iter().filter(|w| w.predicted == Some(true)).map(|w| w.window_id).collect();
    assert_eq!(flagged, vec![2]);
    assert_eq!(e.stats().processed, 40 * 60 + 1);
    assert_eq!(e.experts().pending_count(), 1);
}

#[test]
fn feedback_persists_across_engines() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.log");
    let extra = format!("[knowledge_base]\npath = {:?}\n", kb.to_str().unwrap());

    let mut first = Engine::from_config(&config(&extra)).unwrap();
    run(&mut first, stream(40, 25));
    let q = first.experts().pending()[0].clone();
    assert_eq!(q.template_text, "kernel panic in disk controller");
    let fb = ExpertFeedback::new(Decision::Normal, 1.0, FeedbackSource::Human).unwrap();
    let v = first.apply_feedback(q.query_id, fb).unwrap();
    assert_eq!(v.p, 0.0);
    drop(first);

    let reopened = KnowledgeBase::open(&kb).unwrap();
    assert_eq!(reopened.get(&q.template_text).map(|f| f.decision), Some(Decision::Normal));

    // A fresh engine answers the same template from the cache.
    let mut second = Engine::from_config(&config(&extra)).unwrap();
    let windows = run(&mut second, stream(40, 15));
    assert!(windows.iter().all(|w| w.predicted == Some(false)));
    assert_eq!(second.stats().queries_issued, 0);
}

#[test]
fn catalog_export_import_round_trip() {
    let mut a = Engine::from_config(&config("")).unwrap();
    run(&mut a, stream(20, 5));
    let catalog = a.export_catalog();
    let mut b = Engine::from_config(&config("")).unwrap();
    assert_eq!(b.import_catalog(&catalog).unwrap(), catalog.len());
    let key = |e: &Engine| {
        e.templates().into_iter().map(|t| (t.template, t.count)).collect::<BTreeMap<_, _>>()
    };
    assert_eq!(key(&a), key(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// In fixed mode every in-order line lands in exactly one closed window.
    #[test]
    fn fixed_windows_partition_the_stream(
        gaps in proptest::collection::vec(0i64..5 * MIN, 1..300),
        picks in proptest::collection::vec(0usize..6, 300),
    ) {
        let texts = ["disk sda ok", "fan 3 spinning at 1200 rpm", "user alice logged in",
                     "link eth0 up", "temp sensor 4 reads 41", "job 17 finished"];
        let mut e = Engine::from_config(&config("")).unwrap();
        let mut t = 0;
        let lines: Vec<RawLine> = gaps.iter().enumerate().map(|(i, g)| {
            t += g;
            RawLine { text: texts[picks[i]].to_string(), line_no: i as u64, timestamp: Some(t) }
        }).collect();
        let n = lines.len();
        let windows = run(&mut e, lines);
        let mut seen: Vec<u64> = windows.iter().flat_map(|w| w.member_line_nos.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n as u64).collect::<Vec<_>>());
        for w in windows.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for w in &windows {
            prop_assert_eq!(w.end - w.start, 10 * MIN);
        }
        let sum: u64 = e.parser().clusters().map(|c| c.count()).sum();
        prop_assert_eq!(sum, n as u64);
    }
}
