//! Table-style text rendering and CSV export of session reports.

use std::fmt::Write as _;

use super::{paired_t_test, summarize, ConfusionMatrix, EyeStatus, SessionMode, SessionReport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub text: String,
    pub csv: String,
}

/// Percentage with two decimals, halves rounded up: 0.848485 → "84.85%".
pub fn format_percent(fraction: f64) -> String {
    if !fraction.is_finite() {
        return "n/a".to_string();
    }
    // The small nudge keeps binary representations of exact halves
    // (e.g. 0.00125) from rounding down.
    let hundredths = (fraction * 10_000.0 + 0.5 + 1e-9).floor() as i64;
    let sign = if hundredths < 0 { "-" } else { "" };
    let h = hundredths.abs();
    format!("{sign}{}.{:02}%", h / 100, h % 100)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const ID_WIDTH: usize = 24;

/// Renders per-session rows with an Average/STD footer over every session,
/// a per-mode summary, the pooled confusion matrices and, when both modes
/// have the same number of sessions, a paired t-test of natural against
/// instructed accuracy (sessions paired in input order).
pub fn render_report(
    reports: &[SessionReport],
    matrices: &[(String, ConfusionMatrix)],
) -> RenderedReport {
    let mut text = String::new();
    let id_width = reports
        .iter()
        .map(|r| r.session_id.chars().count())
        .max()
        .unwrap_or(0)
        .max(ID_WIDTH);
    let _ = writeln!(
        text,
        "{:<id_width$}  {:<10}  {:>6}  {:>7}  {:>8}  {:>8}",
        "session_id", "mode", "epochs", "correct", "accuracy", "percent"
    );
    for r in reports {
        let _ = writeln!(
            text,
            "{:<id_width$}  {:<10}  {:>6}  {:>7}  {:>8.6}  {:>8}",
            r.session_id,
            r.mode.as_str(),
            r.n_epochs,
            r.n_correct,
            r.accuracy,
            format_percent(r.accuracy)
        );
    }

    let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let mean = super::mean(&accs).ok();
    let std = super::sample_std(&accs).ok();
    let blank = "";
    for (label, value) in [("Average", mean), ("STD", std)] {
        let (frac, pct) = match value {
            Some(v) => (format!("{v:.6}"), format_percent(v)),
            None => ("n/a".to_string(), "n/a".to_string()),
        };
        let _ = writeln!(
            text,
            "{label:<id_width$}  {blank:<10}  {blank:>6}  {blank:>7}  {frac:>8}  {pct:>8}"
        );
    }

    let by_mode = |mode: SessionMode| -> Vec<f64> {
        reports
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.accuracy)
            .collect()
    };
    let instructed = by_mode(SessionMode::Instructed);
    let natural = by_mode(SessionMode::Natural);
    if !instructed.is_empty() && !natural.is_empty() {
        text.push('\n');
        for (mode, accs) in [
            (SessionMode::Instructed, &instructed),
            (SessionMode::Natural, &natural),
        ] {
            let line = match summarize(accs) {
                Ok(s) => format!(
                    "{}: n={} mean={} ({:.6}) std={} ({:.6})",
                    mode.as_str(),
                    accs.len(),
                    format_percent(s.mean),
                    s.mean,
                    format_percent(s.std),
                    s.std
                ),
                Err(_) => format!(
                    "{}: n={} mean={} std=n/a",
                    mode.as_str(),
                    accs.len(),
                    format_percent(accs[0])
                ),
            };
            let _ = writeln!(text, "{line}");
        }
    }

    for (label, m) in matrices {
        text.push('\n');
        let _ = writeln!(text, "confusion matrix: {label} ({} epochs)", m.total());
        let _ = writeln!(text, "{:<18}{:>10}{:>10}", "Estimated\\Actual", "Closed", "Open");
        for est in [EyeStatus::Closed, EyeStatus::Open] {
            let cell = |actual| {
                m.rate(est, actual)
                    .map_or_else(|| "n/a".to_string(), format_percent)
            };
            let name = match est {
                EyeStatus::Closed => "Closed",
                EyeStatus::Open => "Open",
            };
            let _ = writeln!(
                text,
                "{:<18}{:>10}{:>10}",
                name,
                cell(EyeStatus::Closed),
                cell(EyeStatus::Open)
            );
        }
    }

    if !instructed.is_empty() && instructed.len() == natural.len() {
        text.push('\n');
        match paired_t_test(&instructed, &natural) {
            Ok(t) => {
                let _ = writeln!(
                    text,
                    "t-test pairs: {} (natural - instructed), t={:.4}, df={}",
                    instructed.len(),
                    t.t_statistic,
                    t.df
                );
                let _ = writeln!(text, "paired t-test: p={:.6}", t.p_two_tailed);
            }
            Err(e) => {
                let _ = writeln!(text, "paired t-test: p=n/a ({e})");
            }
        }
    }

    let mut csv = String::from("session_id,mode,n_epochs,n_correct,accuracy\n");
    for r in reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6}",
            csv_field(&r.session_id),
            r.mode.as_str(),
            r.n_epochs,
            r.n_correct,
            r.accuracy
        );
    }
    RenderedReport { text, csv }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, mode: SessionMode, correct: usize, n: usize) -> SessionReport {
        SessionReport {
            session_id: id.to_string(),
            mode,
            n_epochs: n,
            n_correct: correct,
            accuracy: correct as f64 / n as f64,
        }
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(0.848485), "84.85%");
        assert_eq!(format_percent(28.0 / 33.0), "84.85%");
        assert_eq!(format_percent(0.00125), "0.13%");
        assert_eq!(format_percent(1.0), "100.00%");
        assert_eq!(format_percent(0.0), "0.00%");
        assert_eq!(format_percent(0.87699), "87.70%");
    }

    #[test]
    fn twelve_rows_plus_footer() {
        let reports: Vec<_> = (0..12)
            .map(|i| report(&format!("s{i}"), SessionMode::Instructed, 28 + i % 3, 33))
            .collect();
        let out = render_report(&reports, &[]);
        let lines: Vec<_> = out.text.lines().collect();
        assert_eq!(lines.len(), 1 + 12 + 2);
        assert!(lines[13].starts_with("Average"));
        assert!(lines[14].starts_with("STD"));
        assert_eq!(out.csv.lines().count(), 13);
        assert_eq!(
            out.csv.lines().nth(1).unwrap(),
            "s0,instructed,33,28,0.848485"
        );
    }

    #[test]
    fn empty_report_has_na_footer() {
        let out = render_report(&[], &[]);
        let lines: Vec<_> = out.text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("n/a"));
        assert!(lines[2].contains("n/a"));
        assert_eq!(out.csv, "session_id,mode,n_epochs,n_correct,accuracy\n");
    }

    #[test]
    fn paired_line_when_modes_balanced() {
        let reports = vec![
            report("a", SessionMode::Instructed, 28, 33),
            report("b", SessionMode::Instructed, 30, 33),
            report("c", SessionMode::Instructed, 29, 33),
            report("a", SessionMode::Natural, 31, 33),
            report("b", SessionMode::Natural, 30, 33),
            report("c", SessionMode::Natural, 32, 33),
        ];
        let out = render_report(&reports, &[]);
        assert!(out.text.trim_end().lines().last().unwrap().starts_with("paired t-test: p="));

        let out = render_report(&reports[..5], &[]);
        assert!(!out.text.contains("paired t-test"));
    }

    #[test]
    fn matrix_layout() {
        let m = ConfusionMatrix::from_counts([[43, 3], [13, 66]]);
        let out = render_report(&[], &[("instructed".into(), m)]);
        assert!(out.text.contains("Estimated\\Actual"));
        let open_row = out.text.lines().find(|l| l.starts_with("Open")).unwrap();
        assert!(open_row.contains("23.21%"), "{open_row}");
    }

    #[test]
    fn csv_quotes_awkward_ids() {
        let out = render_report(&[report("P1,x", SessionMode::Natural, 1, 2)], &[]);
        assert!(out.csv.contains("\"P1,x\",natural,2,1,0.500000"));
    }
}
