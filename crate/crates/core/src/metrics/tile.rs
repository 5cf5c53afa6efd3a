use serde::{Deserialize, Serialize};

use super::pixel::{confusion, prf_iou, Counts};
use crate::datacube::BinaryMask;
use crate::error::bail;
use crate::error::Result;

/// Plume events with more truth pixels than this are strong.
pub const STRONG_PLUME_PIXELS: usize = 1000;

fn check_pairs(preds: &[BinaryMask], truths: &[BinaryMask]) -> Result<()> {
    if preds.len() != truths.len() {
        bail!(
            Shape,
            "{} predicted tiles for {} truth tiles",
            preds.len(),
            truths.len()
        );
    }
    if let Some(i) = preds
        .iter()
        .zip(truths)
        .position(|(p, t)| !p.same_extent(t))
    {
        bail!(Shape, "tile {i}: prediction and truth extents differ");
    }
    Ok(())
}

/// Fraction of truth-negative tiles whose prediction has at least
/// `min_pixels` positive pixels.
pub fn fpr_by_tile(preds: &[BinaryMask], truths: &[BinaryMask], min_pixels: usize) -> Result<f64> {
    check_pairs(preds, truths)?;
    let (mut negatives, mut flagged) = (0usize, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        if t.count() > 0 {
            continue;
        }
        negatives += 1;
        if p.count() >= min_pixels.max(1) {
            flagged += 1;
        }
    }
    if negatives == 0 {
        bail!(
            InvalidArgument,
            "tile false-positive rate needs at least one negative tile"
        );
    }
    Ok(flagged as f64 / negatives as f64)
}

/// F1 pooled over tiles whose truth event is strong or weak. Tiles without
/// truth pixels belong to neither stratum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrataF1 {
    pub strong: Option<f64>,
    pub weak: Option<f64>,
}

pub fn strata_f1(
    preds: &[BinaryMask],
    truths: &[BinaryMask],
    strong_threshold: usize,
) -> Result<StrataF1> {
    check_pairs(preds, truths)?;
    let (mut strong, mut weak): (Option<Counts>, Option<Counts>) = (None, None);
    for (p, t) in preds.iter().zip(truths) {
        let size = t.count();
        if size == 0 {
            continue;
        }
        let c = confusion(p, t, &BinaryMask::ones(t.height, t.width))?;
        let slot = if size > strong_threshold {
            &mut strong
        } else {
            &mut weak
        };
        *slot.get_or_insert_with(Counts::default) += c;
    }
    Ok(StrataF1 {
        strong: strong.map(|c| prf_iou(&c).f1),
        weak: weak.map(|c| prf_iou(&c).f1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(size: usize, n: usize, offset: usize) -> BinaryMask {
        let mut m = BinaryMask::zeros(size, size);
        for k in 0..n {
            let p = (offset + k) % (size * size);
            m.data[p] = true;
        }
        m
    }

    #[test]
    fn silent_predictions_have_zero_rate() {
        let truths = vec![BinaryMask::zeros(4, 4); 5];
        assert_eq!(fpr_by_tile(&truths.clone(), &truths, 1).unwrap(), 0.0);
    }

    #[test]
    fn three_of_ten_flagged() {
        let truths = vec![BinaryMask::zeros(4, 4); 10];
        let mut preds = truths.clone();
        for p in preds.iter_mut().take(3) {
            p.set(1, 2, true);
        }
        assert!((fpr_by_tile(&preds, &truths, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(fpr_by_tile(&preds, &truths, 17).unwrap(), 0.0);
    }

    #[test]
    fn positive_tiles_are_ignored() {
        let truths = vec![block(4, 3, 0), BinaryMask::zeros(4, 4)];
        let preds = vec![BinaryMask::ones(4, 4), BinaryMask::zeros(4, 4)];
        assert_eq!(fpr_by_tile(&preds, &truths, 1).unwrap(), 0.0);
        assert!(fpr_by_tile(&preds[..1], &truths[..1], 1).is_err());
    }

    #[test]
    fn all_strong_matches_overall() {
        let truths = vec![block(40, 1001, 0), block(40, 1200, 7)];
        let preds = vec![block(40, 900, 50), block(40, 1300, 0)];
        let s = strata_f1(&preds, &truths, STRONG_PLUME_PIXELS).unwrap();
        assert_eq!(s.weak, None);
        let all: Counts = preds
            .iter()
            .zip(&truths)
            .map(|(p, t)| confusion(p, t, &BinaryMask::ones(40, 40)).unwrap())
            .sum();
        assert_eq!(s.strong, Some(prf_iou(&all).f1));
    }

    #[test]
    fn boundary_is_strict() {
        let truths = vec![block(40, 1000, 0)];
        let s = strata_f1(&truths.clone(), &truths, STRONG_PLUME_PIXELS).unwrap();
        assert_eq!(
            s,
            StrataF1 {
                strong: None,
                weak: Some(1.0)
            }
        );
    }

    #[test]
    fn hand_built_mixed_set() {
        // strong tile: 1100 truth, 1000 hit, 100 extra -> tp 1000 fp 100 fn 100
        // weak tiles: 10 truth, 5 hit, 5 extra -> tp 5 fp 5 fn 5 (twice)
        let truths = vec![
            block(40, 1100, 0),
            block(8, 10, 0),
            block(8, 10, 0),
            BinaryMask::zeros(8, 8),
        ];
        let preds = vec![
            block(40, 1100, 100),
            block(8, 10, 5),
            block(8, 10, 5),
            BinaryMask::ones(8, 8),
        ];
        let s = strata_f1(&preds, &truths, STRONG_PLUME_PIXELS).unwrap();
        let f1 = |tp: f64, fp: f64, fn_: f64| 2.0 * tp / (2.0 * tp + fp + fn_);
        assert!((s.strong.unwrap() - f1(1000.0, 100.0, 100.0)).abs() < 1e-15);
        assert!((s.weak.unwrap() - f1(10.0, 10.0, 10.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rate_non_increasing_in_min_pixels(
            sizes in proptest::collection::vec((0usize..17, 0usize..3), 1..30)
        ) {
            let preds: Vec<BinaryMask> = sizes.iter().map(|&(n, _)| block(4, n, 0)).collect();
            let truths: Vec<BinaryMask> = sizes.iter().map(|&(_, t)| block(4, t, 5)).collect();
            if truths.iter().all(|t| t.count() > 0) {
                return Ok(());
            }
            let mut prev = f64::INFINITY;
            for k in 1..=17 {
                let r = fpr_by_tile(&preds, &truths, k).unwrap();
                prop_assert!(r <= prev);
                prev = r;
            }
        }
    }
}
