use serde::{Deserialize, Serialize};

use super::{AnnotatedNote, Split, SymptomCategory};

/// Count of one category in one split, with its share of the split total in
/// hundredths of a percent (`4553` is 45.53%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCount {
    pub count: u64,
    pub percent_hundredths: u64,
}

impl SplitCount {
    pub fn percent(&self) -> f64 {
        self.percent_hundredths as f64 / 100.0
    }

    pub fn percent_string(&self) -> String {
        format!("{}.{:02}", self.percent_hundredths / 100, self.percent_hundredths % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: SymptomCategory,
    /// Indexed train, dev, test.
    pub splits: [SplitCount; 3],
}

/// Per-category annotation counts and percentages for each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<CategoryRow>,
    pub totals: [u64; 3],
}

/// `round_half_up(100 * count / total)` in hundredths, exact integer arithmetic.
fn percent_hundredths(count: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    (count * 20_000 + total) / (2 * total)
}

impl Summary {
    /// Builds a summary from raw counts; `counts[i]` holds train/dev/test
    /// counts for `categories[i]`.
    pub fn from_counts(categories: &[SymptomCategory], counts: &[[u64; 3]]) -> Summary {
        assert_eq!(categories.len(), counts.len(), "one count row per category");
        let mut totals = [0u64; 3];
        for row in counts {
            for (t, c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        let rows = categories
            .iter()
            .zip(counts)
            .map(|(&category, row)| CategoryRow {
                category,
                splits: std::array::from_fn(|s| SplitCount {
                    count: row[s],
                    percent_hundredths: percent_hundredths(row[s], totals[s]),
                }),
            })
            .collect();
        Summary { rows, totals }
    }

    pub fn row(&self, category: SymptomCategory) -> Option<&CategoryRow> {
        self.rows.iter().find(|r| r.category == category)
    }

    /// Aligned text table, one row per category.
    pub fn render_text(&self) -> String {
        let mut cells: Vec<[String; 4]> = vec![[
            "Symptom concepts".to_string(),
            "Train (%)".to_string(),
            "Dev (%)".to_string(),
            "Test (%)".to_string(),
        ]];
        for row in &self.rows {
            let mut line: [String; 4] = Default::default();
            line[0] = row.category.display_name().to_string();
            for (s, cell) in row.splits.iter().enumerate() {
                line[s + 1] = format!("{} ({}%)", cell.count, cell.percent_string());
            }
            cells.push(line);
        }
        let mut total_line: [String; 4] = Default::default();
        total_line[0] = "Total".into();
        for s in 0..3 {
            total_line[s + 1] = self.totals[s].to_string();
        }
        cells.push(total_line);

        let widths: Vec<usize> = (0..4)
            .map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &cells {
            let mut parts = Vec::with_capacity(4);
            parts.push(format!("{:<w$}", line[0], w = widths[0]));
            for c in 1..4 {
                parts.push(format!("{:>w$}", line[c], w = widths[c]));
            }
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Machine-readable rows: `category,split,count,percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,split,count,percent\n");
        for row in &self.rows {
            for (split, cell) in Split::ALL.iter().zip(&row.splits) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.category.name(),
                    split,
                    cell.count,
                    cell.percent_string()
                ));
            }
        }
        out
    }
}

/// Summarizes annotation counts per category for each split.
pub fn summarize(
    train: &[AnnotatedNote],
    dev: &[AnnotatedNote],
    test: &[AnnotatedNote],
    include_other: bool,
) -> Summary {
    let categories = SymptomCategory::in_scope(include_other);
    let mut counts = vec![[0u64; 3]; categories.len()];
    for (s, notes) in [train, dev, test].into_iter().enumerate() {
        for note in notes {
            for ann in note.scoped(include_other) {
                if let Some(row) = categories.iter().position(|&c| c == ann.category) {
                    counts[row][s] += 1;
                }
            }
        }
    }
    Summary::from_counts(categories, &counts)
}
