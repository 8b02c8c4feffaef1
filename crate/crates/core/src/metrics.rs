//! Confusion matrices and the rates derived from them.
//!
//! Orientation: `counts[predicted][truth]`, so a row sum is everything the
//! model assigned to a class and a column sum is everything that truly
//! belongs to it.

use std::fmt;
use std::io::Write;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::pipeline::SeverityClass;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

/// Two-class view of one class against the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    /// `(TP + TN) / total`.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.tp + self.fp + self.fn_ + self.tn;
        (total > 0).then(|| (self.tp + self.tn) as f64 / total as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, predicted: SeverityClass, truth: SeverityClass) {
        self.counts[predicted.index()][truth.index()] += 1;
    }

    pub fn get(&self, predicted: SeverityClass, truth: SeverityClass) -> u64 {
        self.counts[predicted.index()][truth.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, predicted: SeverityClass) -> u64 {
        self.counts[predicted.index()].iter().sum()
    }

    pub fn column_sum(&self, truth: SeverityClass) -> u64 {
        self.counts.iter().map(|r| r[truth.index()]).sum()
    }

    /// Trace over total.
    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::Data("accuracy of an empty confusion matrix".into())),
            t => Ok(self.correct() as f64 / t as f64),
        }
    }

    pub fn one_vs_rest(&self, class: SeverityClass) -> BinaryCounts {
        let tp = self.get(class, class);
        let fp = self.row_sum(class) - tp;
        let fn_ = self.column_sum(class) - tp;
        BinaryCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    /// `(precision, recall)` for `class`; `None` where the denominator is zero.
    pub fn precision_recall(&self, class: SeverityClass) -> (Option<f64>, Option<f64>) {
        let b = self.one_vs_rest(class);
        (b.precision(), b.recall())
    }

    pub fn summary(&self) -> Result<Summary> {
        let accuracy = self.accuracy()?;
        let per_class = SeverityClass::ALL.map(|c| {
            let (precision, recall) = self.precision_recall(c);
            ClassRates {
                class: c,
                precision,
                recall,
                support: self.column_sum(c),
            }
        });
        Ok(Summary {
            total: self.total(),
            accuracy,
            per_class,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["predicted", "truth_1", "truth_2", "truth_3"])?;
        for c in SeverityClass::ALL {
            let row = self.counts[c.index()];
            w.write_record([
                c.label().to_string(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
            ])?;
        }
        w.flush().map_err(Error::Stream)?;
        Ok(())
    }

    /// Aligned text table with precision in the last column, recall in the
    /// last row and accuracy in the corner, rates as percentages to 2 places.
    pub fn render(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
        let mut rows: Vec<[String; 5]> = vec![[
            "pred \\ truth".into(),
            "class 1".into(),
            "class 2".into(),
            "class 3".into(),
            "precision".into(),
        ]];
        for c in SeverityClass::ALL {
            let r = self.counts[c.index()];
            rows.push([
                format!("class {}", c.label()),
                r[0].to_string(),
                r[1].to_string(),
                r[2].to_string(),
                pct(self.precision_recall(c).0),
            ]);
        }
        let recalls = SeverityClass::ALL.map(|c| pct(self.precision_recall(c).1));
        let [r1, r2, r3] = recalls;
        rows.push([
            "recall".into(),
            r1,
            r2,
            r3,
            format!("acc {}", pct(self.accuracy().ok())),
        ]);
        let widths: Vec<usize> = (0..5)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    if j == 0 {
                        format!("{v:<w$}", w = widths[j])
                    } else {
                        format!("{v:>w$}", w = widths[j])
                    }
                })
                .collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), Add::add)
    }
}

pub fn accumulate(predictions: &[SeverityClass], truths: &[SeverityClass]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} predictions against {} ground-truth labels",
            predictions.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in predictions.iter().zip(truths) {
        cm.record(*p, *t);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class: SeverityClass,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Ground-truth rows of this class.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: u64,
    pub accuracy: f64,
    pub per_class: [ClassRates; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub pooled: ConfusionMatrix,
    pub summary: Summary,
    pub fold_accuracies: Vec<f64>,
    pub mean_fold_accuracy: f64,
}

/// Pools fold matrices by element-wise sum.
pub fn aggregate_cv(folds: &[ConfusionMatrix]) -> Result<CvReport> {
    if folds.is_empty() {
        return Err(Error::Data("no folds to aggregate".into()));
    }
    let pooled: ConfusionMatrix = folds.iter().copied().sum();
    let fold_accuracies = folds.iter().map(|f| f.accuracy()).collect::<Result<Vec<_>>>()?;
    let mean_fold_accuracy = fold_accuracies.iter().sum::<f64>() / folds.len() as f64;
    Ok(CvReport {
        pooled,
        summary: pooled.summary()?,
        fold_accuracies,
        mean_fold_accuracy,
    })
}
