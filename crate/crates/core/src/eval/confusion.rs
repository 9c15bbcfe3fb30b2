use serde::{Deserialize, Serialize};

use super::matching::{greedy_overlap_pairs, strict_pairs};
use super::{note_ids, scoped, MatchMode, NoteSpans, Span};
use crate::corpus::SymptomCategory;

/// Span-level confusion matrix. Rows are gold categories, columns predicted
/// categories; the last row and column stand for "no span" (`O`), so
/// `cells[c][O]` counts missed gold spans and `cells[O][c]` spurious predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub categories: Vec<SymptomCategory>,
    pub cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(categories: &[SymptomCategory]) -> ConfusionMatrix {
        let n = categories.len() + 1;
        ConfusionMatrix {
            categories: categories.to_vec(),
            cells: vec![vec![0; n]; n],
        }
    }

    /// Index of the `O` row/column.
    pub fn outside(&self) -> usize {
        self.categories.len()
    }

    pub fn index_of(&self, category: SymptomCategory) -> Option<usize> {
        self.categories.iter().position(|&c| c == category)
    }

    /// Cell lookup; `None` stands for `O`.
    pub fn get(&self, gold: Option<SymptomCategory>, pred: Option<SymptomCategory>) -> u64 {
        let row = gold.map_or(Some(self.outside()), |c| self.index_of(c));
        let col = pred.map_or(Some(self.outside()), |c| self.index_of(c));
        match (row, col) {
            (Some(r), Some(c)) => self.cells[r][c],
            _ => 0,
        }
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.cells[row].iter().sum()
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        self.cells.iter().map(|r| r[col]).sum()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.categories, other.categories, "matrices over different categories");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn labels(&self) -> Vec<&'static str> {
        self.categories
            .iter()
            .map(|c| c.name())
            .chain(std::iter::once("O"))
            .collect()
    }

    /// CSV grid with a header row of predicted labels and one row per gold label.
    pub fn to_csv(&self) -> String {
        let labels = self.labels();
        let mut out = format!("gold\\pred,{}\n", labels.join(","));
        for (label, row) in labels.iter().zip(&self.cells) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{label},{}\n", cells.join(",")));
        }
        out
    }
}

/// Confusion matrix for one note.
///
/// Same-category matches (per `mode`) land on the diagonal. Remaining spans are
/// then paired across categories: by identical boundaries in strict mode, or
/// by greedy largest overlap in lenient mode. Whatever is left is a miss or a
/// spurious prediction.
pub fn confusion_note(
    gold: &[Span],
    pred: &[Span],
    mode: MatchMode,
    categories: &[SymptomCategory],
) -> ConfusionMatrix {
    let gold = scoped(gold, categories);
    let pred = scoped(pred, categories);
    let mut m = ConfusionMatrix::new(categories);
    let idx = |c: SymptomCategory| categories.iter().position(|&x| x == c).expect("scoped");
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];

    let first_pass = match mode {
        MatchMode::Strict => strict_pairs(&gold, &pred),
        MatchMode::Lenient => {
            greedy_overlap_pairs(&gold, &pred, true, &mut gold_used, &mut pred_used)
        }
    };
    for &(gi, pi) in &first_pass {
        gold_used[gi] = true;
        pred_used[pi] = true;
        m.cells[idx(gold[gi].category)][idx(pred[pi].category)] += 1;
    }

    let cross = match mode {
        MatchMode::Strict => {
            let mut pairs = Vec::new();
            let mut g_order: Vec<usize> = (0..gold.len()).filter(|&i| !gold_used[i]).collect();
            g_order.sort_by_key(|&i| (gold[i], i));
            let mut p_order: Vec<usize> = (0..pred.len()).filter(|&i| !pred_used[i]).collect();
            p_order.sort_by_key(|&i| (pred[i], i));
            for gi in g_order {
                if let Some(pi) = p_order
                    .iter()
                    .copied()
                    .find(|&pi| !pred_used[pi] && gold[gi].same_boundaries(&pred[pi]))
                {
                    gold_used[gi] = true;
                    pred_used[pi] = true;
                    pairs.push((gi, pi));
                }
            }
            pairs
        }
        MatchMode::Lenient => {
            greedy_overlap_pairs(&gold, &pred, false, &mut gold_used, &mut pred_used)
        }
    };
    for &(gi, pi) in &cross {
        m.cells[idx(gold[gi].category)][idx(pred[pi].category)] += 1;
    }

    let o = m.outside();
    for (g, used) in gold.iter().zip(&gold_used) {
        if !used {
            m.cells[idx(g.category)][o] += 1;
        }
    }
    for (p, used) in pred.iter().zip(&pred_used) {
        if !used {
            m.cells[o][idx(p.category)] += 1;
        }
    }
    m
}

/// Corpus-level confusion matrix, summed over notes.
pub fn confusion(
    gold: &NoteSpans,
    pred: &NoteSpans,
    mode: MatchMode,
    categories: &[SymptomCategory],
) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(categories);
    let empty = Vec::new();
    for id in note_ids(gold, pred) {
        m.merge(&confusion_note(
            gold.get(id).unwrap_or(&empty),
            pred.get(id).unwrap_or(&empty),
            mode,
            categories,
        ));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::match_spans;
    use SymptomCategory::*;

    const CATS: [SymptomCategory; 8] = SymptomCategory::SYMPTOMS;

    fn s(start: usize, end: usize, c: SymptomCategory) -> Span {
        Span::new(start, end, c)
    }

    #[test]
    fn perfect_is_diagonal() {
        let g = [s(0, 3, Fluctuations), s(5, 9, DisturbedSleep)];
        for mode in [MatchMode::Strict, MatchMode::Lenient] {
            let m = confusion_note(&g, &g, mode, &CATS);
            for (r, row) in m.cells.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    if r != c {
                        assert_eq!(*v, 0);
                    }
                }
            }
            assert_eq!(m.get(Some(Fluctuations), Some(Fluctuations)), 1);
        }
    }

    #[test]
    fn missed_gold() {
        let m = confusion_note(&[s(0, 9, DisorganizedThinking)], &[], MatchMode::Strict, &CATS);
        assert_eq!(m.get(Some(DisorganizedThinking), None), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn spurious_prediction() {
        let m = confusion_note(&[], &[s(0, 9, PsychomotorActivity)], MatchMode::Lenient, &CATS);
        assert_eq!(m.get(None, Some(PsychomotorActivity)), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn cross_category_cells() {
        let g = [s(0, 9, PsychomotorActivity)];
        let strict = confusion_note(&g, &[s(0, 9, DisturbedAttention)], MatchMode::Strict, &CATS);
        assert_eq!(strict.get(Some(PsychomotorActivity), Some(DisturbedAttention)), 1);
        // partial overlap is not a strict pairing
        let strict = confusion_note(&g, &[s(0, 5, DisturbedAttention)], MatchMode::Strict, &CATS);
        assert_eq!(strict.get(Some(PsychomotorActivity), None), 1);
        assert_eq!(strict.get(None, Some(DisturbedAttention)), 1);
        let lenient = confusion_note(&g, &[s(0, 5, DisturbedAttention)], MatchMode::Lenient, &CATS);
        assert_eq!(lenient.get(Some(PsychomotorActivity), Some(DisturbedAttention)), 1);
    }

    #[test]
    fn reconciles_with_counts() {
        let g = [
            s(0, 5, Fluctuations),
            s(10, 15, Fluctuations),
            s(20, 30, MemoryDeficit),
        ];
        let p = [
            s(0, 5, Fluctuations),
            s(11, 15, DisturbedSleep),
            s(40, 45, MemoryDeficit),
        ];
        for mode in [MatchMode::Strict, MatchMode::Lenient] {
            let m = confusion_note(&g, &p, mode, &CATS);
            let counts = match_spans(&g, &p, mode);
            for (i, &c) in CATS.iter().enumerate() {
                let n = counts.get(c);
                assert_eq!(m.cells[i][i], n.tp);
                assert_eq!(m.row_sum(i), n.tp + n.fn_);
                assert_eq!(m.col_sum(i), n.tp + n.fp);
            }
        }
    }

    #[test]
    fn csv_shape() {
        let m = ConfusionMatrix::new(&CATS);
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.lines().next().unwrap().ends_with(",O"));
    }
}
