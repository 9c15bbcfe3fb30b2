use super::{EvalError, EvalReport, Scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

fn fmt4(x: f64) -> String {
    format!("{:.4}", super::round_half_up(x, 4))
}

/// Renders a report as an aligned text table (one row per category, then the
/// micro average) or as JSON carrying every field.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(report: &EvalReport) -> String {
    let header = [
        "Category",
        "Strict P",
        "Strict R",
        "Strict F1",
        "Lenient P",
        "Lenient R",
        "Lenient F1",
    ];
    let row = |name: &str, s: &Scores, l: &Scores| -> Vec<String> {
        vec![
            name.to_string(),
            fmt4(s.precision),
            fmt4(s.recall),
            fmt4(s.f1),
            fmt4(l.precision),
            fmt4(l.recall),
            fmt4(l.f1),
        ]
    };
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for (cat, strict) in &report.strict.per_category {
        let lenient = report.lenient.per_category.get(cat).copied().unwrap_or_default();
        rows.push(row(cat.display_name(), strict, &lenient));
    }
    rows.push(row("Micro average", &report.strict.micro, &report.lenient.micro));

    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let mut line = format!("{:<w$}", r[0], w = widths[0]);
        for (c, cell) in r.iter().enumerate().skip(1) {
            line.push_str(&format!("  {:>w$}", cell, w = widths[c]));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// One row per mode and category plus a `micro` row per mode:
/// `mode,category,tp,fp,fn,precision,recall,f1`.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("mode,category,tp,fp,fn,precision,recall,f1\n");
    for (name, m) in [("strict", &report.strict), ("lenient", &report.lenient)] {
        let mut line = |cat: &str, c: &super::Counts, s: &Scores| {
            out.push_str(&format!(
                "{name},{cat},{},{},{},{},{},{}\n",
                c.tp,
                c.fp,
                c.fn_,
                fmt4(s.precision),
                fmt4(s.recall),
                fmt4(s.f1)
            ));
        };
        for (cat, s) in &m.per_category {
            line(cat.name(), &m.counts.get(*cat), s);
        }
        line("micro", &m.counts.total(), &m.micro);
    }
    out
}

pub fn parse_report_json(input: &str) -> Result<EvalReport, EvalError> {
    Ok(serde_json::from_str(input)?)
}
