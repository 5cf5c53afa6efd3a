use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datacube::BinaryMask;
use crate::error::Error;

/// 3×3 structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphKernel {
    /// Middle row and middle column set.
    Cross3,
    /// All nine entries set.
    Ones3,
}

impl MorphKernel {
    pub fn values(self) -> [[bool; 3]; 3] {
        match self {
            MorphKernel::Cross3 => [
                [false, true, false],
                [true, true, true],
                [false, true, false],
            ],
            MorphKernel::Ones3 => [[true; 3]; 3],
        }
    }

    fn offsets(self) -> impl Iterator<Item = (isize, isize)> {
        let v = self.values();
        (0..3usize)
            .flat_map(move |r| (0..3usize).map(move |c| (r, c)))
            .filter(move |&(r, c)| v[r][c])
            .map(|(r, c)| (r as isize - 1, c as isize - 1))
    }
}

impl fmt::Display for MorphKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MorphKernel::Cross3 => "cross3",
            MorphKernel::Ones3 => "ones3",
        })
    }
}

impl FromStr for MorphKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross3" | "cross" => Ok(MorphKernel::Cross3),
            "ones3" | "ones" => Ok(MorphKernel::Ones3),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel {other:?} (expected cross3 or ones3)"
            ))),
        }
    }
}

fn neighbor(mask: &BinaryMask, r: usize, c: usize, dr: isize, dc: isize) -> bool {
    let (rr, cc) = (r as isize + dr, c as isize + dc);
    if rr < 0 || cc < 0 || rr >= mask.height as isize || cc >= mask.width as isize {
        return false;
    }
    mask.get(rr as usize, cc as usize)
}

/// A pixel survives when every kernel-covered neighbor is set. Pixels
/// outside the mask count as unset.
pub fn erode(mask: &BinaryMask, kernel: MorphKernel) -> BinaryMask {
    let offsets: Vec<_> = kernel.offsets().collect();
    let mut out = BinaryMask::zeros(mask.height, mask.width);
    for r in 0..mask.height {
        for c in 0..mask.width {
            let keep = offsets.iter().all(|&(dr, dc)| neighbor(mask, r, c, dr, dc));
            out.set(r, c, keep);
        }
    }
    out
}

/// A pixel is set when any kernel-covered neighbor is set.
pub fn dilate(mask: &BinaryMask, kernel: MorphKernel) -> BinaryMask {
    let offsets: Vec<_> = kernel.offsets().collect();
    let mut out = BinaryMask::zeros(mask.height, mask.width);
    for r in 0..mask.height {
        for c in 0..mask.width {
            let hit = offsets.iter().any(|&(dr, dc)| neighbor(mask, r, c, dr, dc));
            out.set(r, c, hit);
        }
    }
    out
}

/// Erosion followed by dilation; removes specks smaller than the kernel.
pub fn opening(mask: &BinaryMask, kernel: MorphKernel) -> BinaryMask {
    dilate(&erode(mask, kernel), kernel)
}
