use crate::error::bail;
use crate::error::Result;
use crate::scalar::Scalar;

/// Threshold budget above which the curve is sampled at quantiles of the
/// unique scores.
pub const DEFAULT_AUPRC_THRESHOLDS: usize = 10_000;

/// Area under the precision-recall curve.
///
/// Pixels are predicted positive at `score ≥ τ` for each unique score τ in
/// descending order, or at `num_thresholds` evenly spaced ranks of the unique
/// scores when there are more. The curve starts at recall 0 with the first
/// threshold's precision and is integrated by trapezoids over recall.
/// Returns `None` when `truth` has no positives.
pub fn auprc<T: Scalar>(
    scores: &[T],
    truth: &[bool],
    num_thresholds: usize,
) -> Result<Option<f64>> {
    if scores.len() != truth.len() {
        bail!(Shape, "{} scores for {} labels", scores.len(), truth.len());
    }
    if num_thresholds == 0 {
        bail!(InvalidArgument, "at least one threshold is required");
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        bail!(Numeric, "score {i} is not finite");
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    // cumulative (tp, fp) at the end of every run of equal scores
    let mut groups = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if truth[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last = k + 1 == order.len() || scores[order[k + 1]] != scores[i];
        if last {
            groups.push((tp, fp));
        }
    }
    let u = groups.len();
    let picked: Vec<(usize, usize)> = if u <= num_thresholds {
        groups
    } else {
        (1..=num_thresholds)
            .map(|i| groups[(i * u).div_ceil(num_thresholds) - 1])
            .collect()
    };

    let point =
        |(tp, fp): (usize, usize)| (tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64);
    let (mut r0, mut p0) = (0.0, point(picked[0]).1);
    let mut area = 0.0;
    for &g in &picked {
        let (r, p) = point(g);
        area += (r - r0) * (p + p0) / 2.0;
        (r0, p0) = (r, p);
    }
    Ok(Some(area))
}
