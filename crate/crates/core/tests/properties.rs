use std::sync::OnceLock;

use delirium_core::corpus::{
    default_phrase_bank, load_corpus, save_corpus, split_corpus, synth_generate, validate,
    AnnotatedNote, CorpusFormat, Note, SpanAnnotation, SplitPlan, Summary, SymptomCategory,
};
use delirium_core::eval::{
    agreement, confusion_note, match_spans, MatchMode, NoteSpans, Scores, Span,
};
use delirium_core::filter::{
    filter_corpus, filter_corpus_serial, merge_keywords, scan_note, KeywordList, Scanner,
    ThresholdMode,
};
use delirium_core::preprocess::{
    decode_bio, encode_bio, is_bio_valid, label_inventory, preprocess_corpus, split_sentences,
    tokenize, BioLabel,
};
use delirium_core::tagger::{predict_sentence, softmax, train, TaggerModel, TrainConfig};
use proptest::prelude::*;
use proptest::sample::select;

use SymptomCategory::*;

const CATS: [SymptomCategory; 4] = [DisturbedAttention, PsychomotorActivity, Fluctuations, Other];

fn category() -> impl Strategy<Value = SymptomCategory> {
    select(SymptomCategory::ALL.to_vec())
}

fn note_text() -> impl Strategy<Value = String> {
    "[a-zA-Zé0-9 .,;\t\n\\\\()-]{0,80}"
}

/// A note with valid annotations: same-category spans never overlap.
fn annotated_note(id: String) -> impl Strategy<Value = AnnotatedNote> {
    (
        note_text(),
        prop::collection::vec((0usize..100, 1usize..20, category(), prop::option::of("[ab]")), 0..6),
        prop::collection::btree_map("[a-z_]{1,6}", "[a-zA-Z \t\\\\]{0,10}", 0..3),
    )
        .prop_map(move |(text, raw, metadata)| {
            let n = text.chars().count();
            let mut anns: Vec<SpanAnnotation> = Vec::new();
            for (s, len, cat, annotator) in raw {
                if n == 0 {
                    break;
                }
                let s = s % n;
                let e = (s + len).min(n);
                let mut a = SpanAnnotation::from_text(&text, s, e, cat).unwrap();
                a.annotator = annotator;
                if anns
                    .iter()
                    .all(|b| b.category != a.category || b.annotator != a.annotator || !b.overlaps(&a))
                {
                    anns.push(a);
                }
            }
            let mut note = Note::new(id.clone(), text);
            note.metadata = metadata;
            AnnotatedNote::new(note, anns)
        })
}

fn corpus() -> impl Strategy<Value = Vec<AnnotatedNote>> {
    (0usize..6).prop_flat_map(|n| (0..n).map(|i| annotated_note(format!("n{i:03}"))).collect::<Vec<_>>())
}

fn spans() -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec((0usize..40, 1usize..10, select(CATS.to_vec())), 0..7)
        .prop_map(|v| v.into_iter().map(|(s, l, c)| Span::new(s, s + l, c)).collect())
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn corpus_round_trips(corpus in corpus()) {
        for note in &corpus {
            prop_assert!(validate(note).is_empty());
        }
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("c.jsonl");
        save_corpus(&corpus, &jsonl, CorpusFormat::Jsonl).unwrap();
        prop_assert_eq!(&load_corpus(&jsonl, CorpusFormat::Jsonl).unwrap(), &corpus);
        let standoff = dir.path().join("standoff");
        save_corpus(&corpus, &standoff, CorpusFormat::Standoff).unwrap();
        prop_assert_eq!(&load_corpus(&standoff, CorpusFormat::Standoff).unwrap(), &corpus);
    }

    #[test]
    fn summary_percentages_sum_to_100(counts in prop::collection::vec([0u64..500, 0u64..500, 0u64..500], 8)) {
        let summary = Summary::from_counts(&SymptomCategory::SYMPTOMS, &counts);
        for s in 0..3 {
            let total: u64 = counts.iter().map(|c| c[s]).sum();
            let sum: f64 = summary.rows.iter().map(|r| r.splits[s].percent()).sum();
            if total > 0 {
                prop_assert!((sum - 100.0).abs() <= 0.05, "split {} sums to {}", s, sum);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn split_is_pure(seed in any::<u64>(), n in 1usize..40, rotate in 0usize..40) {
        let corpus = synth_generate(1, n, &default_phrase_bank()).unwrap();
        let mut shuffled = corpus.clone();
        shuffled.rotate_left(rotate % n);
        let plan = SplitPlan::Ratios { train: 0.6, dev: 0.2, test: 0.2, seed };
        let a = split_corpus(&corpus, &plan).unwrap();
        let b = split_corpus(&shuffled, &plan).unwrap();
        prop_assert_eq!(&a.spec, &b.spec);
        let (x, y, z) = a.sizes();
        prop_assert_eq!(x + y + z, n);
    }

    #[test]
    fn synthetic_notes_are_valid(seed in any::<u64>()) {
        for note in synth_generate(seed, 5, &default_phrase_bank()).unwrap() {
            prop_assert!(validate(&note).is_empty());
            prop_assert!((3..=6).contains(&note.annotations.len()));
        }
    }

    #[test]
    fn tokens_are_exact_sorted_and_disjoint(text in "\\PC{0,60}") {
        let tokens = tokenize(&text);
        let chars: Vec<char> = text.chars().collect();
        let mut prev_end = 0;
        for t in &tokens {
            prop_assert!(t.start < t.end && t.start >= prev_end);
            prop_assert_eq!(chars[t.start..t.end].iter().collect::<String>(), t.text.clone());
            prop_assert!(!t.text.chars().any(char::is_whitespace));
            prev_end = t.end;
        }
        let non_space: usize = chars.iter().filter(|c| !c.is_whitespace()).count();
        prop_assert_eq!(tokens.iter().map(|t| t.end - t.start).sum::<usize>(), non_space);

        let sentences = split_sentences(&text, &tokens);
        let mut next = 0;
        for r in &sentences {
            prop_assert_eq!(r.start, next);
            prop_assert!(r.end > r.start);
            next = r.end;
        }
        prop_assert_eq!(next, tokens.len());
    }

    #[test]
    fn encode_decode_adjunction(
        text in "[a-z.,é ]{1,60}",
        raw in prop::collection::vec((0usize..60, 1usize..12, select(SymptomCategory::SYMPTOMS.to_vec())), 0..5),
    ) {
        let tokens = tokenize(&text);
        let n = text.chars().count();
        let anns: Vec<SpanAnnotation> = raw
            .into_iter()
            .filter_map(|(s, l, c)| SpanAnnotation::from_text(&text, s % n, (s % n + l).min(n), c))
            .collect();
        let enc = encode_bio(&tokens, &anns);
        prop_assert!(is_bio_valid(&enc.labels));
        prop_assert_eq!(enc.labels.len(), tokens.len());

        // Snap to covered tokens; exact when no two annotations share a token.
        let snapped: Vec<Option<(usize, usize, SymptomCategory)>> = anns
            .iter()
            .map(|a| {
                let covered: Vec<usize> = (0..tokens.len())
                    .filter(|&t| tokens[t].start < a.end && a.start < tokens[t].end)
                    .collect();
                covered.first().map(|&f| (f, *covered.last().unwrap() + 1, a.category))
            })
            .collect();
        let mut claimed = vec![0; tokens.len()];
        for (f, l, _) in snapped.iter().flatten() {
            for c in &mut claimed[*f..*l] {
                *c += 1;
            }
        }
        prop_assume!(claimed.iter().all(|&c| c <= 1));
        let mut expected: Vec<(usize, usize, SymptomCategory)> = snapped
            .into_iter()
            .flatten()
            .map(|(f, l, c)| (tokens[f].start, tokens[l - 1].end, c))
            .collect();
        expected.sort();
        let dec = decode_bio(&tokens, &enc.labels);
        prop_assert_eq!(dec.repairs, 0);
        let got: Vec<_> = dec.spans.iter().map(|s| (s.start, s.end, s.category)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn decode_accepts_any_labels(text in "[a-z ,.]{0,40}", picks in prop::collection::vec(0usize..19, 0..40)) {
        let tokens = tokenize(&text);
        let inventory = label_inventory(true);
        let labels: Vec<BioLabel> = (0..tokens.len()).map(|i| inventory[picks.get(i).copied().unwrap_or(0)]).collect();
        let dec = decode_bio(&tokens, &labels);
        let repaired = labels
            .iter()
            .enumerate()
            .filter(|(i, l)| matches!(l, BioLabel::I(_)) && !l.may_follow(if *i == 0 { None } else { Some(labels[i - 1]) }))
            .count();
        prop_assert_eq!(dec.repairs, repaired);
        for s in &dec.spans {
            prop_assert!(s.first < s.last && s.last <= tokens.len());
        }
    }

    #[test]
    fn softmax_properties(logits in prop::collection::vec(-500.0f64..500.0, 1..20), shift in -1e3f64..1e3) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
        let q = softmax(&shifted);
        prop_assert_eq!(argmax(&p), argmax(&logits));
        prop_assert!(q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn predictions_are_valid_bio(text in "[a-zA-Z .,]{0,80}") {
        let model = small_model();
        let tokens = tokenize(&text);
        let labels = predict_sentence(model, &tokens);
        prop_assert!(is_bio_valid(&labels));
        prop_assert_eq!(decode_bio(&tokens, &labels).repairs, 0);
    }

    #[test]
    fn strict_within_lenient_and_counts_add_up(gold in spans(), pred in spans()) {
        let strict = match_spans(&gold, &pred, MatchMode::Strict);
        let lenient = match_spans(&gold, &pred, MatchMode::Lenient);
        for c in CATS {
            prop_assert!(strict.get(c).tp <= lenient.get(c).tp);
            let n_gold = gold.iter().filter(|s| s.category == c).count() as u64;
            let n_pred = pred.iter().filter(|s| s.category == c).count() as u64;
            for m in [&strict, &lenient] {
                let k = m.get(c);
                prop_assert_eq!(k.tp + k.fn_, n_gold);
                prop_assert_eq!(k.tp + k.fp, n_pred);
            }
        }
        for m in [&strict, &lenient] {
            let s = Scores::from_counts(&m.total());
            prop_assert!(in_unit(s.precision) && in_unit(s.recall) && in_unit(s.f1));
            if s.precision > 0.0 && s.recall > 0.0 {
                prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            }
        }
    }

    #[test]
    fn confusion_reconciles(gold in spans(), pred in spans()) {
        for mode in [MatchMode::Strict, MatchMode::Lenient] {
            let m = confusion_note(&gold, &pred, mode, &CATS);
            let counts = match_spans(&gold, &pred, mode);
            let mut off_o = 0;
            for (i, &c) in CATS.iter().enumerate() {
                let k = counts.get(c);
                prop_assert_eq!(m.cells[i][i], k.tp);
                prop_assert_eq!(m.row_sum(i), k.tp + k.fn_);
                off_o += m.row_sum(i);
            }
            let matched: u64 = (0..CATS.len()).flat_map(|i| (0..CATS.len()).map(move |j| (i, j))).map(|(i, j)| m.cells[i][j]).sum();
            let missed: u64 = (0..CATS.len()).map(|i| m.cells[i][m.outside()]).sum();
            prop_assert_eq!(off_o, matched + missed);
            prop_assert_eq!(off_o, gold.len() as u64);
        }
    }

    #[test]
    fn agreement_swaps_precision_and_recall(a in spans(), b in spans()) {
        let wrap = |s: Vec<Span>| -> NoteSpans { [("n".to_string(), s)].into_iter().collect() };
        let (la, lb) = (wrap(a), wrap(b));
        let ab = agreement(&la, &lb, MatchMode::Strict, &CATS).unwrap();
        let ba = agreement(&lb, &la, MatchMode::Strict, &CATS).unwrap();
        prop_assert_eq!(ab.f1, ba.f1);
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
    }

    #[test]
    fn removing_a_keyword_never_adds_hits(
        words in prop::collection::vec(select(vec!["pt", "is", "confused", "agitated", "not", "sleeping", "well", ".", "Confused,"]), 0..30),
        keep in prop::collection::vec(any::<bool>(), 6),
        drop in 0usize..6,
    ) {
        let pool = ["confused", "agitated", "not sleeping", "sleeping", "is confused", "pt"];
        let list: Vec<&str> = pool.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        prop_assume!(list.len() >= 2);
        let note = Note::new("n", words.join(" "));
        let full = scan_note(&note, &KeywordList::new(&list).unwrap()).unwrap();
        let smaller: Vec<&str> = list.iter().enumerate().filter(|(i, _)| *i != drop % list.len()).map(|(_, p)| *p).collect();
        let reduced = scan_note(&note, &KeywordList::new(&smaller).unwrap()).unwrap();
        prop_assert!(reduced.hit_count <= full.hit_count);
        prop_assert!(reduced.distinct_keywords() <= full.distinct_keywords());
    }

    #[test]
    fn parallel_filter_equals_serial_and_fixpoint_keeps_selection(
        texts in prop::collection::vec("(confused|agitated|pt|not|sleeping|CONFUSED|\\.| ){0,20}", 0..30),
        min_hits in 1usize..4,
        distinct in any::<bool>(),
    ) {
        let notes: Vec<Note> = texts.iter().enumerate().map(|(i, t)| Note::new(format!("n{i}"), t.clone())).collect();
        let mode = if distinct { ThresholdMode::Distinct } else { ThresholdMode::Occurrences };
        let list = KeywordList::new(["confused", "agitated", "not sleeping"]).unwrap();
        let scanner = Scanner::new(&list).unwrap();
        let par = filter_corpus(&notes, &scanner, min_hits, mode).unwrap();
        prop_assert_eq!(&par, &filter_corpus_serial(&notes, &scanner, min_hits, mode).unwrap());

        let merged = merge_keywords(&list, &["CONFUSED", " agitated "]);
        prop_assert_eq!(&merged, &list);
        let again = filter_corpus(&notes, &Scanner::new(&merged).unwrap(), min_hits, mode).unwrap();
        prop_assert_eq!(par, again);
    }
}

fn small_model() -> &'static TaggerModel {
    static MODEL: OnceLock<TaggerModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let corpus = synth_generate(31, 10, &default_phrase_bank()).unwrap();
        let examples = preprocess_corpus(&corpus, false).0;
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        train(&examples, &[], &config).unwrap().0
    })
}

#[test]
fn training_loss_non_increasing_early() {
    let corpus = synth_generate(13, 60, &default_phrase_bank()).unwrap();
    let examples = preprocess_corpus(&corpus, false).0;
    let config = TrainConfig {
        epochs: 5,
        patience: 0,
        ..TrainConfig::default()
    };
    let (_, log) = train(&examples, &[], &config).unwrap();
    for w in log.epochs.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss + 1e-3, "{:?}", log.epochs);
    }
}
