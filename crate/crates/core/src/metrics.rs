//! Segment-level confusion counts and the derived scores.
//!
//! MI-task is the positive class. A ratio with a zero denominator is
//! undefined and renders as `NA`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::signal_io::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion_counts(pred: &[Label], truth: &[Label]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p.is_positive(), t.is_positive()) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Values echoed into a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportContext {
    pub output_len: usize,
    pub n_s: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub f1: Option<f64>,
    pub context: Option<ReportContext>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and TPR; undefined when either is undefined
/// or both are zero.
pub fn f1_score(precision: Option<f64>, tpr: Option<f64>) -> Option<f64> {
    match (precision, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    }
}

pub fn compute_metrics(c: Confusion) -> EvalReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let tnr = ratio(c.tn, c.tn + c.fp);
    EvalReport {
        confusion: c,
        precision,
        tpr,
        tnr,
        fpr: tnr.map(|x| 1.0 - x),
        fnr: tpr.map(|x| 1.0 - x),
        f1: f1_score(precision, tpr),
        context: None,
    }
}

/// Relative F1 gain in percent: `100·(f1_new / f1_base − 1)`.
pub fn improvement_ratio(f1_new: f64, f1_base: f64) -> Result<f64> {
    if f1_base == 0.0 || !f1_base.is_finite() || !f1_new.is_finite() {
        return Err(Error::Config(format!(
            "improvement ratio needs a finite non-zero baseline, got {f1_base}"
        )));
    }
    Ok(100.0 * (f1_new / f1_base - 1.0))
}

fn fixed(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn json_value(x: Option<f64>) -> String {
    x.map_or_else(|| "\"NA\"".to_string(), |v| format!("{v:.6}"))
}

pub const REPORT_CSV_HEADER: &str = "Prec.,TPR,TNR,FPR,FNR,F1";

impl EvalReport {
    pub fn with_context(mut self, ctx: ReportContext) -> Self {
        self.context = Some(ctx);
        self
    }

    /// The six scores in table order: Prec., TPR, TNR, FPR, FNR, F1.
    pub fn scores(&self) -> [Option<f64>; 6] {
        [self.precision, self.tpr, self.tnr, self.fpr, self.fnr, self.f1]
    }

    /// The scores as one CSV row, without a newline.
    pub fn csv_row(&self) -> String {
        self.scores()
            .iter()
            .map(|&s| fixed(s))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Header plus one row.
    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn to_json(&self) -> String {
        let c = self.confusion;
        let mut out = String::from("{\n");
        let _ = writeln!(
            out,
            "  \"confusion\": {{\"tp\": {}, \"tn\": {}, \"fp\": {}, \"fn\": {}}},",
            c.tp, c.tn, c.fp, c.fn_
        );
        let names = ["precision", "tpr", "tnr", "fpr", "fnr", "f1"];
        for (name, value) in names.iter().zip(self.scores()) {
            let _ = writeln!(out, "  \"{name}\": {},", json_value(value));
        }
        match self.context {
            Some(ctx) => {
                let _ = writeln!(
                    out,
                    "  \"config\": {{\"output_len\": {}, \"n_s\": {}, \"threshold\": {:.6}}}",
                    ctx.output_len, ctx.n_s, ctx.threshold
                );
            }
            None => out.push_str("  \"config\": null\n"),
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Label::{MiTask as T, Rest as R};

    #[test]
    fn counting_examples() {
        let c = confusion_counts(&[T, T, R], &[T, T, R]).unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 2,
                tn: 1,
                fp: 0,
                fn_: 0
            }
        );
        assert_eq!(confusion_counts(&[T], &[R]).unwrap().fp, 1);
        assert!(confusion_counts(&[T], &[]).is_err());
    }

    #[test]
    fn counting_matches_per_element_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = |rng: &mut ChaCha8Rng| {
            (0..1000)
                .map(|_| if rng.random() { T } else { R })
                .collect::<Vec<_>>()
        };
        let (p, t) = (draw(&mut rng), draw(&mut rng));
        let c = confusion_counts(&p, &t).unwrap();
        let count =
            |a: Label, b: Label| p.iter().zip(&t).filter(|(x, y)| **x == a && **y == b).count() as u64;
        assert_eq!(
            (c.tp, c.tn, c.fp, c.fn_),
            (count(T, T), count(R, R), count(T, R), count(R, T))
        );
        assert_eq!(c.total(), 1000);
    }

    #[test]
    fn empty_is_all_na() {
        let r = compute_metrics(Confusion::default());
        assert!(r.scores().iter().all(Option::is_none));
        assert_eq!(r.to_csv(), "Prec.,TPR,TNR,FPR,FNR,F1\nNA,NA,NA,NA,NA,NA\n");
    }

    #[test]
    fn f1_closed_form_and_complements() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let c = Confusion {
                tp: rng.random_range(0..50),
                tn: rng.random_range(0..50),
                fp: rng.random_range(0..50),
                fn_: rng.random_range(0..50),
            };
            let r = compute_metrics(c);
            if let Some(f1) = r.f1 {
                let closed = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
                assert!((f1 - closed).abs() < 1e-12);
            }
            if let (Some(a), Some(b)) = (r.fpr, r.tnr) {
                assert!((a - (1.0 - b)).abs() < 1e-12);
            }
            assert!(r.scores().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            let more = compute_metrics(Confusion { tp: c.tp + 1, ..c });
            for (old, new) in [(r.precision, more.precision), (r.tpr, more.tpr), (r.f1, more.f1)] {
                if let (Some(o), Some(n)) = (old, new) {
                    assert!(n >= o);
                }
            }
        }
    }

    #[test]
    fn zero_tp_has_undefined_f1() {
        let r = compute_metrics(Confusion {
            tp: 0,
            tn: 3,
            fp: 2,
            fn_: 1,
        });
        assert_eq!(r.precision, Some(0.0));
        assert_eq!(r.f1, None);
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement_ratio(0.7, 0.7).unwrap(), 0.0);
        assert!(improvement_ratio(0.5, 0.0).is_err());
    }

    #[test]
    fn json_layout() {
        let r = compute_metrics(Confusion {
            tp: 1,
            tn: 1,
            fp: 0,
            fn_: 1,
        })
        .with_context(ReportContext {
            output_len: 50,
            n_s: 2,
            threshold: 0.5,
        });
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["precision"], serde_json::json!(1.0));
        assert_eq!(v["confusion"]["fn"], 1);
        assert_eq!(v["config"]["n_s"], 2);
        assert!(r.to_json().contains("\"tpr\": 0.500000,"));
    }
}
