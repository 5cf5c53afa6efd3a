use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::{auprc, DEFAULT_AUPRC_THRESHOLDS};
use super::pixel::{confusion, prf_iou, support_weighted, Counts};
use super::tile::{fpr_by_tile, strata_f1, STRONG_PLUME_PIXELS};
use crate::datacube::{BinaryMask, LabelMask, ScoreMap};
use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// Probability cut for neural scores.
pub const DEFAULT_BINARIZE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Methane,
    Minerals,
}

/// Evaluation knobs, stored in every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub threshold: f64,
    pub fpr_min_pixels: usize,
    pub strong_threshold: usize,
    pub auprc_thresholds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_BINARIZE,
            fpr_min_pixels: 1,
            strong_threshold: STRONG_PLUME_PIXELS,
            auprc_thresholds: DEFAULT_AUPRC_THRESHOLDS,
        }
    }
}

/// One evaluated tile: binary predictions per class, optional continuous
/// scores per class, truth and the valid-pixel mask.
#[derive(Clone, Debug)]
pub struct TileOutcome<T> {
    pub pred: Vec<BinaryMask>,
    pub scores: Option<ScoreMap<T>>,
    pub truth: LabelMask,
    pub valid: BinaryMask,
}

impl<T: Scalar> TileOutcome<T> {
    /// Binarizes `scores` at `threshold` (inclusive).
    pub fn from_scores(
        scores: ScoreMap<T>,
        threshold: f64,
        truth: LabelMask,
        valid: BinaryMask,
    ) -> Self {
        let t = T::lit(threshold);
        let pred = (0..scores.channels)
            .map(|c| scores.threshold(c, t))
            .collect();
        Self {
            pred,
            scores: Some(scores),
            truth,
            valid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub support: u64,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub auprc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub task: Task,
    pub tiles: usize,
    pub settings: EvalSettings,
    pub classes: Vec<ClassReport>,
    pub aggregate: ClassReport,
    pub fpr_by_tile: Option<f64>,
    pub f1_strong: Option<f64>,
    pub f1_weak: Option<f64>,
}

fn masked(pred: &BinaryMask, valid: &BinaryMask) -> BinaryMask {
    BinaryMask {
        height: pred.height,
        width: pred.width,
        data: pred
            .data
            .iter()
            .zip(&valid.data)
            .map(|(&p, &v)| p && v)
            .collect(),
    }
}

impl EvalReport {
    /// Pools pixel counts over all tiles per class. Multi-class aggregates
    /// are support-weighted; tile-level rates are reported for methane only.
    pub fn compute<T: Scalar>(
        model: &str,
        task: Task,
        class_names: &[String],
        tiles: &[TileOutcome<T>],
        settings: EvalSettings,
    ) -> Result<Self> {
        let classes = class_names.len();
        if classes == 0 {
            bail!(InvalidArgument, "evaluation needs at least one class");
        }
        if task == Task::Methane && classes != 1 {
            bail!(
                InvalidArgument,
                "the methane task has one class, got {classes}"
            );
        }
        for (i, t) in tiles.iter().enumerate() {
            let (h, w) = (t.truth.height(), t.truth.width());
            if t.truth.classes() != classes || t.pred.len() != classes {
                bail!(Shape, "tile {i}: expected {classes} classes");
            }
            if t.valid.height != h
                || t.valid.width != w
                || t.pred.iter().any(|p| p.height != h || p.width != w)
            {
                bail!(Shape, "tile {i}: extents differ");
            }
            if let Some(s) = &t.scores {
                if (s.height, s.width, s.channels) != (h, w, classes) {
                    bail!(
                        Shape,
                        "tile {i}: score map is {}x{}x{}",
                        s.height,
                        s.width,
                        s.channels
                    );
                }
            }
        }
        let mut rows = Vec::with_capacity(classes);
        for (c, name) in class_names.iter().enumerate() {
            let mut counts = Counts::default();
            for t in tiles {
                counts += confusion(&t.pred[c], &t.truth.class_mask(c), &t.valid)?;
            }
            let auprc_value = if tiles.iter().all(|t| t.scores.is_some()) {
                let (mut s, mut y) = (Vec::new(), Vec::new());
                for t in tiles {
                    let scores = t.scores.as_ref().expect("checked").channel(c);
                    let truth = t.truth.class_mask(c);
                    for p in (0..scores.len()).filter(|&p| t.valid.data[p]) {
                        s.push(scores[p]);
                        y.push(truth.data[p]);
                    }
                }
                auprc(&s, &y, settings.auprc_thresholds)?
            } else {
                None
            };
            let sc = prf_iou(&counts);
            rows.push(ClassReport {
                name: name.clone(),
                support: counts.positives(),
                counts,
                precision: sc.precision,
                recall: sc.recall,
                f1: sc.f1,
                iou: sc.iou,
                auprc: auprc_value,
            });
        }

        let aggregate = if classes == 1 {
            ClassReport {
                name: "all".into(),
                ..rows[0].clone()
            }
        } else {
            let supports: Vec<u64> = rows.iter().map(|r| r.support).collect();
            let weighted = |f: fn(&ClassReport) -> f64| -> Result<f64> {
                support_weighted(&rows.iter().map(f).collect::<Vec<_>>(), &supports)
            };
            let scored: Vec<&ClassReport> = rows.iter().filter(|r| r.auprc.is_some()).collect();
            let auprc_value = if scored.iter().any(|r| r.support > 0) {
                let vals: Vec<f64> = scored.iter().map(|r| r.auprc.expect("filtered")).collect();
                let sup: Vec<u64> = scored.iter().map(|r| r.support).collect();
                Some(support_weighted(&vals, &sup)?)
            } else {
                None
            };
            ClassReport {
                name: "all".into(),
                support: supports.iter().sum(),
                counts: rows.iter().map(|r| r.counts).sum(),
                precision: weighted(|r| r.precision)?,
                recall: weighted(|r| r.recall)?,
                f1: weighted(|r| r.f1)?,
                iou: weighted(|r| r.iou)?,
                auprc: auprc_value,
            }
        };

        let (mut fpr, mut strong, mut weak) = (None, None, None);
        if task == Task::Methane {
            let preds: Vec<BinaryMask> =
                tiles.iter().map(|t| masked(&t.pred[0], &t.valid)).collect();
            let truths: Vec<BinaryMask> = tiles
                .iter()
                .map(|t| masked(&t.truth.class_mask(0), &t.valid))
                .collect();
            if truths.iter().any(|t| t.count() == 0) {
                fpr = Some(fpr_by_tile(&preds, &truths, settings.fpr_min_pixels)?);
            }
            let s = strata_f1(&preds, &truths, settings.strong_threshold)?;
            (strong, weak) = (s.strong, s.weak);
        }

        Ok(Self {
            model: model.to_string(),
            task,
            tiles: tiles.len(),
            settings,
            classes: rows,
            aggregate,
            fpr_by_tile: fpr,
            f1_strong: strong,
            f1_weak: weak,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// Column names in table order.
    pub fn columns(&self) -> Vec<&'static str> {
        match self.task {
            Task::Methane => vec![
                "AUPRC",
                "F1",
                "F1 (strong)",
                "F1 (weak)",
                "Precision",
                "Recall",
                "IoU",
                "FPR by tile",
            ],
            Task::Minerals => vec!["AUPRC", "F1", "Precision", "Recall", "IoU"],
        }
    }

    fn row(&self, r: &ClassReport, tile_level: bool) -> Vec<Option<f64>> {
        let mut v = vec![r.auprc, Some(r.f1)];
        if self.task == Task::Methane {
            let pick = |x: Option<f64>| if tile_level { x } else { None };
            v.extend([pick(self.f1_strong), pick(self.f1_weak)]);
        }
        v.extend([Some(r.precision), Some(r.recall), Some(r.iou)]);
        if self.task == Task::Methane {
            v.push(if tile_level { self.fpr_by_tile } else { None });
        }
        v
    }

    /// Aligned text table, scores in percent, `N/A` where undefined.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
        if self.classes.len() > 1 {
            for c in &self.classes {
                rows.push((format!("{} / {}", self.model, c.name), self.row(c, false)));
            }
        }
        rows.push((self.model.clone(), self.row(&self.aggregate, true)));
        let cells: Vec<Vec<String>> = rows
            .iter()
            .map(|(name, vals)| {
                std::iter::once(name.clone())
                    .chain(vals.iter().map(|v| match v {
                        Some(x) => format!("{:.2}", 100.0 * x),
                        None => "N/A".to_string(),
                    }))
                    .collect()
            })
            .collect();
        let header: Vec<String> = std::iter::once("Model".to_string())
            .chain(self.columns().into_iter().map(String::from))
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(cells.iter()) {
            let mut s = String::new();
            for (i, cell) in line.iter().enumerate() {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[i]);
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        }
        out
    }
}
