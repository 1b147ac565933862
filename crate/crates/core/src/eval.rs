//! Accuracy bookkeeping: confusion matrices, overall and per-class accuracy,
//! and the two-column comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{argmax, softmax_cross_entropy, Batch, HeadKind, TwoStreamNet};
use crate::train::Example;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_classes: usize,
    pub overall_accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub class_support: Vec<u64>,
    /// `confusion[true][predicted]`, raw counts.
    pub confusion: Vec<Vec<u64>>,
    /// Unweighted mean over classes with nonzero support.
    pub macro_accuracy: f64,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[usize], labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
        }
        if predicted.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} predictions for {} labels",
                predicted.len(),
                labels.len()
            )));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &y) in predicted.iter().zip(labels) {
            if y >= num_classes || p >= num_classes {
                return Err(Error::Dataset(format!(
                    "class {} out of range for {num_classes} classes",
                    y.max(p)
                )));
            }
            confusion[y][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let num_classes = confusion.len();
        let class_support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
        let total: u64 = class_support.iter().sum();
        let trace: u64 = (0..num_classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy: Vec<Option<f64>> = (0..num_classes)
            .map(|k| (class_support[k] > 0).then(|| confusion[k][k] as f64 / class_support[k] as f64))
            .collect();
        let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
        let macro_accuracy = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        EvalReport {
            num_classes,
            overall_accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            per_class_accuracy,
            class_support,
            confusion,
            macro_accuracy,
        }
    }

    pub fn total(&self) -> u64 {
        self.class_support.iter().sum()
    }
}

/// Forward-only pass over `examples`; returns the report and mean loss.
/// `spatial_embedding` may hold precomputed frozen-tower embeddings.
pub fn evaluate_with_loss<E: Example>(
    model: &TwoStreamNet<f32>,
    head: HeadKind,
    examples: &[E],
    spatial_embedding: Option<&[f32]>,
) -> Result<(EvalReport, f64)> {
    if examples.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
    }
    let classes = model.head(head).classes();
    let e = model.embedding_dim();
    let mut predicted = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    let mut loss_sum = 0.0;
    const CHUNK: usize = 64;
    for (c, chunk) in examples.chunks(CHUNK).enumerate() {
        let batch: Batch<f32> = Batch::assemble(chunk.iter().map(|x| (x.rgb(), x.sod(), x.target())));
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Dataset(format!("label {bad} out of range for {classes} classes")));
        }
        let spatial = match spatial_embedding {
            Some(all) => all[c * CHUNK * e..(c * CHUNK + batch.n) * e].to_vec(),
            None => {
                let logits = model.logits(head, &batch)?;
                collect(&logits, &batch, classes, &mut predicted, &mut labels, &mut loss_sum);
                continue;
            }
        };
        let motion = model.motion_embedding(&batch.sod, batch.n);
        let fused = TwoStreamNet::fuse(&spatial, &motion);
        let logits = model.head_logits(head, &fused, batch.n);
        collect(&logits, &batch, classes, &mut predicted, &mut labels, &mut loss_sum);
    }
    let report = EvalReport::from_predictions(&predicted, &labels, classes)?;
    Ok((report, loss_sum / examples.len() as f64))
}

fn collect(logits: &[f32], batch: &Batch<f32>, classes: usize, predicted: &mut Vec<usize>, labels: &mut Vec<usize>, loss_sum: &mut f64) {
    let (loss, _, _) = softmax_cross_entropy(logits, &batch.labels, classes, 1.0);
    *loss_sum += loss;
    predicted.extend(logits.chunks_exact(classes).map(argmax));
    labels.extend_from_slice(&batch.labels);
}

pub fn evaluate<E: Example>(model: &TwoStreamNet<f32>, head: HeadKind, examples: &[E]) -> Result<EvalReport> {
    evaluate_with_loss(model, head, examples, None).map(|(r, _)| r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub baseline_overall: f64,
    pub candidate_overall: f64,
    pub baseline_macro: f64,
    pub candidate_macro: f64,
}

impl ComparisonRow {
    pub fn delta_overall(&self) -> f64 {
        self.candidate_overall - self.baseline_overall
    }

    pub fn delta_macro(&self) -> f64 {
        self.candidate_macro - self.baseline_macro
    }
}

/// Baseline (random init) against candidate (self-supervised init), one row
/// per evaluated pair, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline_label: String,
    pub candidate_label: String,
    pub rows: Vec<ComparisonRow>,
    /// Per-class accuracy deltas (candidate minus baseline), one vector per row.
    pub per_class_deltas: Vec<Vec<Option<f64>>>,
}

pub const BASELINE_LABEL: &str = "Sup (Rand Init.)";
pub const CANDIDATE_LABEL: &str = "Self-Sup";

fn pct(x: f64) -> f64 {
    x * 100.0
}

impl ComparisonTable {
    pub fn new() -> Self {
        ComparisonTable {
            baseline_label: BASELINE_LABEL.into(),
            candidate_label: CANDIDATE_LABEL.into(),
            rows: Vec::new(),
            per_class_deltas: Vec::new(),
        }
    }

    /// Adds a row from two reports over the same class set.
    pub fn push(&mut self, name: impl Into<String>, baseline: &EvalReport, candidate: &EvalReport) -> Result<()> {
        if baseline.num_classes != candidate.num_classes || baseline.class_support != candidate.class_support {
            return Err(Error::Argument(
                "reports cover different class sets or datasets".into(),
            ));
        }
        self.rows.push(ComparisonRow {
            name: name.into(),
            baseline_overall: pct(baseline.overall_accuracy),
            candidate_overall: pct(candidate.overall_accuracy),
            baseline_macro: pct(baseline.macro_accuracy),
            candidate_macro: pct(candidate.macro_accuracy),
        });
        self.per_class_deltas.push(
            baseline
                .per_class_accuracy
                .iter()
                .zip(&candidate.per_class_accuracy)
                .map(|(b, c)| Some(pct(c.as_ref()? - b.as_ref()?)))
                .collect(),
        );
        Ok(())
    }

    /// Adds a row from accuracies already expressed in percent.
    pub fn push_percent(&mut self, name: impl Into<String>, baseline: f64, candidate: f64) {
        self.rows.push(ComparisonRow {
            name: name.into(),
            baseline_overall: baseline,
            candidate_overall: candidate,
            baseline_macro: baseline,
            candidate_macro: candidate,
        });
        self.per_class_deltas.push(Vec::new());
    }

    pub fn mean_delta_overall(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(ComparisonRow::delta_overall).sum::<f64>() / self.rows.len() as f64
    }

    pub fn wins_or_ties(&self) -> usize {
        self.rows.iter().filter(|r| r.delta_overall() >= 0.0).count()
    }

    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| {:<name_w$} | {:>16} | {:>8} | {:>7} | {:>10} | {:>10} | {:>7} |",
            "", self.baseline_label, self.candidate_label, "Delta", "Macro base", "Macro self", "Delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {:<name_w$} | {:>16.2} | {:>8.2} | {:>+7.2} | {:>10.2} | {:>10.2} | {:>+7.2} |",
                r.name,
                r.baseline_overall,
                r.candidate_overall,
                r.delta_overall(),
                r.baseline_macro,
                r.candidate_macro,
                r.delta_macro()
            );
        }
        if self.rows.len() > 1 {
            let n = self.rows.len() as f64;
            let mean = |f: fn(&ComparisonRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "| {:<name_w$} | {:>16.2} | {:>8.2} | {:>+7.2} | {:>10.2} | {:>10.2} | {:>+7.2} |",
                "mean",
                mean(|r| r.baseline_overall),
                mean(|r| r.candidate_overall),
                self.mean_delta_overall(),
                mean(|r| r.baseline_macro),
                mean(|r| r.candidate_macro),
                mean(ComparisonRow::delta_macro)
            );
        }
        for (r, deltas) in self.rows.iter().zip(&self.per_class_deltas) {
            if deltas.is_empty() {
                continue;
            }
            let cells: Vec<String> = deltas
                .iter()
                .map(|d| d.map_or("n/a".to_string(), |d| format!("{d:+.2}")))
                .collect();
            let _ = writeln!(out, "per-class delta [{}]: {}", r.name, cells.join(" "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let classes = self.per_class_deltas.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = String::from("name,baseline_overall,candidate_overall,delta_overall,baseline_macro,candidate_macro,delta_macro");
        for k in 0..classes {
            let _ = write!(out, ",delta_class_{k}");
        }
        out.push('\n');
        for (r, deltas) in self.rows.iter().zip(&self.per_class_deltas) {
            let _ = write!(
                out,
                "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                r.name,
                r.baseline_overall,
                r.candidate_overall,
                r.delta_overall(),
                r.baseline_macro,
                r.candidate_macro,
                r.delta_macro()
            );
            for k in 0..classes {
                match deltas.get(k).copied().flatten() {
                    Some(d) => {
                        let _ = write!(out, ",{d:.4}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

impl Default for ComparisonTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Single-pair comparison.
pub fn compare_runs(baseline: &EvalReport, candidate: &EvalReport) -> Result<ComparisonTable> {
    let mut table = ComparisonTable::new();
    table.push("run", baseline, candidate)?;
    Ok(table)
}
