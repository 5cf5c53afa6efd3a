use super::plume::ConcentrationMap;
use crate::datacube::HyperCube;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Beer–Lambert attenuation: every valid sample becomes
/// `clean · exp(-alpha[pixel] · s[band])`. Nodata pixels pass through.
pub fn inject_plume<T: Scalar>(
    clean: &HyperCube<T>,
    alpha: &ConcentrationMap<T>,
    s: &[T],
) -> Result<HyperCube<T>> {
    if alpha.height() != clean.height() || alpha.width() != clean.width() {
        bail!(
            Shape,
            "concentration map is {}x{}, cube is {}x{}",
            alpha.height(),
            alpha.width(),
            clean.height(),
            clean.width()
        );
    }
    if s.len() != clean.bands() {
        bail!(
            Shape,
            "absorption vector has {} entries, cube has {} bands",
            s.len(),
            clean.bands()
        );
    }
    if let Some(b) = s.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        bail!(
            InvalidArgument,
            "absorption at band {b} must be finite and non-negative"
        );
    }
    let a = alpha.alpha();
    clean.map_valid(|p, b, v| {
        let k = a[p] * s[b];
        if k == T::zero() {
            v
        } else {
            v * (-k).exp()
        }
    })
}
