//! Kronecker dictionary `(1, v, v², sin v, cos v)^{⊗3}`.

use serde::{Deserialize, Serialize};

/// Functions per variable.
pub const BASIS_LEN: usize = 5;
/// Lifted dimension, `5³`.
pub const LIFTED_DIM: usize = BASIS_LEN * BASIS_LEN * BASIS_LEN;
/// Positions of the linear monomials of variables 1, 2, 3.
pub const LINEAR_INDICES: [usize; 3] = [25, 5, 1];

/// Ordering tag written into serialized models.
pub const ORDERING_TAG: &str = "kron(1,v,v2,sin,cos)^3;var1-slowest;index=i1*25+i2*5+i3";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dictionary;

impl Dictionary {
    pub fn dim(&self) -> usize {
        LIFTED_DIM
    }

    pub fn basis(v: f64) -> [f64; BASIS_LEN] {
        let (s, c) = v.sin_cos();
        [1.0, v, v * v, s, c]
    }

    /// Flat position of the product `b_{i1}(x1)·b_{i2}(x2)·b_{i3}(x3)`.
    pub fn index(i1: usize, i2: usize, i3: usize) -> usize {
        i1 * BASIS_LEN * BASIS_LEN + i2 * BASIS_LEN + i3
    }

    pub fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        debug_assert_eq!(out.len(), LIFTED_DIM);
        let b1 = Self::basis(x[0]);
        let b2 = Self::basis(x[1]);
        let b3 = Self::basis(x[2]);
        let mut k = 0;
        for u in b1 {
            for v in b2 {
                let uv = u * v;
                for w in b3 {
                    out[k] = uv * w;
                    k += 1;
                }
            }
        }
    }

    pub fn lift(&self, x: &[f64; 3]) -> [f64; LIFTED_DIM] {
        let mut out = [0.0; LIFTED_DIM];
        self.lift_into(x, &mut out);
        out
    }
}
