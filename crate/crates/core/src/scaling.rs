//! Per-variable affine normalisation, `u = (v − offset) / scale`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub offset: [f64; 3],
    pub scale: [f64; 3],
}

impl AffineScaler {
    pub fn identity() -> Self {
        AffineScaler {
            offset: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    /// Maps each variable's observed range onto [−1, 1]. A constant variable
    /// keeps unit scale and is only shifted to zero.
    pub fn min_max(values: &[[f64; 3]]) -> Result<Self> {
        Self::min_max_to(values, 1.0)
    }

    /// Maps each variable's observed range onto `[−half_width, half_width]`.
    pub fn min_max_to(values: &[[f64; 3]], half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument("half width must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in values {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let offset = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
        let scale = std::array::from_fn(|d| {
            let half = 0.5 * (hi[d] - lo[d]);
            if half > 0.0 {
                half / half_width
            } else {
                1.0
            }
        });
        Self::checked(offset, scale)
    }

    /// Zero mean, unit standard deviation per variable.
    pub fn z_score(values: &[[f64; 3]]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = values.len() as f64;
        let mut mean = [0.0; 3];
        for v in values {
            for d in 0..3 {
                mean[d] += v[d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 3];
        for v in values {
            for d in 0..3 {
                var[d] += (v[d] - mean[d]).powi(2);
            }
        }
        let scale = std::array::from_fn(|d| {
            let sd = (var[d] / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        });
        Self::checked(mean, scale)
    }

    fn checked(offset: [f64; 3], scale: [f64; 3]) -> Result<Self> {
        if offset.iter().chain(&scale).any(|v| !v.is_finite()) || scale.contains(&0.0) {
            return Err(Error::InvalidArgument("non-finite or zero scaling".into()));
        }
        Ok(AffineScaler { offset, scale })
    }

    pub fn apply(&self, v: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| (v[d] - self.offset[d]) / self.scale[d])
    }

    pub fn invert(&self, u: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| u[d] * self.scale[d] + self.offset[d])
    }
}
