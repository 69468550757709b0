//! Workspace bounds and pose sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ik::{solve_ik, IkSolution};
use crate::params::RobotParams;

/// Heights tried when searching for the neutral pose, as fractions of
/// `l_KS + l_KQ + h`.
const SCAN_STEPS: usize = 400;

/// Lowest and highest z_p at which the neutral orientation (β = γ = 0) is
/// solvable, scanning `(0, 1.2]·(l_KS + l_KQ + h)`.
pub fn neutral_range(params: &RobotParams) -> Option<(f64, f64)> {
    let top = 1.2 * (params.reach() + params.h);
    let mut lo = None;
    let mut hi = None;
    for k in 1..=SCAN_STEPS {
        let z = top * k as f64 / SCAN_STEPS as f64;
        if solve_ik(params, z, 0.0, 0.0).is_ok() {
            lo.get_or_insert(z);
            hi = Some(z);
        }
    }
    Some((lo?, hi?))
}

/// Fraction of `l_KS + l_KQ + h` used as the home height.
const HOME_FRACTION: f64 = 0.945;

/// Height of the neutral pose. Prefers `0.945·(l_KS + l_KQ + h)`, the centre
/// of [`WorkspaceBox::regular`], and falls back to the middle of
/// [`neutral_range`] when that height is not solvable.
pub fn neutral_height(params: &RobotParams) -> Option<f64> {
    let home = HOME_FRACTION * (params.reach() + params.h);
    if solve_ik(params, home, 0.0, 0.0).is_ok() {
        return Some(home);
    }
    neutral_range(params).map(|(lo, hi)| 0.5 * (lo + hi))
}

/// Axis-aligned box of poses used for random sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub z_p: (f64, f64),
    pub beta: (f64, f64),
    pub gamma: (f64, f64),
}

impl WorkspaceBox {
    /// `z_p ∈ [0.7, 1.0]·(l_KS + l_KQ + h)`, `β, γ ∈ [−20°, 20°]`. Poses in the
    /// box are not all reachable; samplers discard failures.
    pub fn standard(params: &RobotParams) -> Self {
        let top = params.reach() + params.h;
        let tilt = 20f64.to_radians();
        WorkspaceBox {
            z_p: (0.7 * top, top),
            beta: (-tilt, tilt),
            gamma: (-tilt, tilt),
        }
    }

    /// A box on which the pose-to-angle map is one-to-one with a
    /// well-conditioned Jacobian: `z_p ∈ [0.90, 0.99]·(l_KS + l_KQ + h)`,
    /// `β ∈ [−6°, 8°]`, `γ ∈ [−10°, 10°]`.
    ///
    /// The standard box straddles fold lines of that map (θ1 and θ3 are even
    /// in β at γ = 0), so distinct poses there can share motor angles. FK
    /// round trips and learned estimators use this box instead.
    pub fn regular(params: &RobotParams) -> Self {
        let top = params.reach() + params.h;
        WorkspaceBox {
            z_p: (0.90 * top, 0.99 * top),
            beta: ((-6f64).to_radians(), 8f64.to_radians()),
            gamma: ((-10f64).to_radians(), 10f64.to_radians()),
        }
    }

    pub fn contains(&self, z_p: f64, beta: f64, gamma: f64) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(z_p, self.z_p) && inside(beta, self.beta) && inside(gamma, self.gamma)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        (
            rng.random_range(self.z_p.0..=self.z_p.1),
            rng.random_range(self.beta.0..=self.beta.1),
            rng.random_range(self.gamma.0..=self.gamma.1),
        )
    }
}

/// Draws poses from `bounds` until `count` of them solve, in draw order.
/// Returns the solutions and the number of rejected draws.
pub fn sample_solutions<R: Rng + ?Sized>(
    params: &RobotParams,
    bounds: &WorkspaceBox,
    count: usize,
    rng: &mut R,
) -> (Vec<IkSolution>, usize) {
    let mut out = Vec::with_capacity(count);
    let mut rejected = 0;
    while out.len() < count {
        let (z, b, g) = bounds.draw(rng);
        match solve_ik(params, z, b, g) {
            Ok(sol) => out.push(sol),
            Err(_) => rejected += 1,
        }
    }
    (out, rejected)
}
