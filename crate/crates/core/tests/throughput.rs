use std::time::Instant;

use delirium_core::corpus::{default_phrase_bank, synth_generate, Note};
use delirium_core::filter::{merge_keywords, KeywordList, Scanner};

/// Run with `cargo test --release -p delirium-core --test throughput -- --ignored`.
#[test]
#[ignore]
fn scans_at_least_50_mb_per_second() {
    let mut list = KeywordList::starter();
    let extra: Vec<String> = (0..45usize.saturating_sub(list.len())).map(|i| format!("filler term {i}")).collect();
    list = merge_keywords(&list, &extra);
    let list = KeywordList::new(list.entries().iter().take(45)).unwrap();
    assert_eq!(list.len(), 45);
    let scanner = Scanner::new(&list).unwrap();
    let notes: Vec<Note> = synth_generate(1, 20_000, &default_phrase_bank())
        .unwrap()
        .into_iter()
        .map(|n| n.note)
        .collect();
    let bytes: usize = notes.iter().map(|n| n.text.len()).sum();
    let start = Instant::now();
    let mut hits = 0;
    for _ in 0..5 {
        for n in &notes {
            hits += scanner.scan(n).hit_count;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mb_s = 5.0 * bytes as f64 / 1e6 / secs;
    println!("{mb_s:.1} MB/s over {bytes} bytes, {hits} hits");
    assert!(mb_s >= 50.0, "{mb_s:.1} MB/s");
}
