//! Closed-form inverse kinematics.
//!
//! Each chain's two constraints are circles in that chain's (z1, z2) plane;
//! Q sits on their intersection. The actuated pair S-K-Q is then a planar
//! two-link arm, inverted in closed form. Only configurations with the motor
//! angle in (90°, 180°) are admissible.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geometry::{derive_translation, ChainCoefficients, ChainId, Pose};
use crate::params::RobotParams;

/// Intersections closer than this fraction of the larger radius are merged.
const TANGENCY_TOL: f64 = 1e-9;

/// Which intersection root and which elbow were used for a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchTag {
    /// 0 is the intersection with the larger z2, 1 the other one.
    pub root: u8,
    /// Sign of the passive angle phi; `true` when phi >= 0.
    pub elbow_positive: bool,
    /// More than one candidate passed the theta rule and the tie-break decided.
    pub tie_broken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSolution {
    pub chain: ChainId,
    /// Actuated joint angle at S_i (rad).
    pub theta: f64,
    /// Passive joint angle at K_i (rad).
    pub phi: f64,
    /// Planar coordinates (z1, z2) of Q_i.
    pub q_planar: [f64; 2],
    pub branch: BranchTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub pose: Pose,
    pub chains: [ChainSolution; 3],
}

impl IkSolution {
    pub fn thetas(&self) -> [f64; 3] {
        self.chains.map(|c| c.theta)
    }

    pub fn phis(&self) -> [f64; 3] {
        self.chains.map(|c| c.phi)
    }

    /// The six constraint residuals `[f1, f2]` of each chain, in mm².
    pub fn residuals(&self, params: &RobotParams) -> [f64; 6] {
        crate::fk::fk_residual(params, &self.thetas(), &self.unknowns())
    }

    /// `(phi1, phi2, phi3, z_p, beta, gamma)`, the unknowns of forward kinematics.
    pub fn unknowns(&self) -> [f64; 6] {
        let [p1, p2, p3] = self.phis();
        [
            p1,
            p2,
            p3,
            self.pose.z_p(),
            self.pose.beta(),
            self.pose.gamma(),
        ]
    }
}

/// Intersection points of two circles, ordered by decreasing second coordinate.
pub fn intersect_circles(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64) -> Result<Vec<[f64; 2]>> {
    if r1 < 0.0 || r2 < 0.0 {
        return Err(Error::InvalidArgument("circle radius must be non-negative".into()));
    }
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = dx.hypot(dy);
    let scale = r1.max(r2);
    let tol = TANGENCY_TOL * scale.max(f64::MIN_POSITIVE);
    if d < tol {
        // concentric: either no intersection or infinitely many
        return Err(Error::NoIntersection);
    }
    if d > r1 + r2 + tol || d < (r1 - r2).abs() - tol {
        return Err(Error::NoIntersection);
    }
    // distance from c1 to the chord midpoint along the center line
    let along = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let half_chord2 = r1 * r1 - along * along;
    let (ux, uy) = (dx / d, dy / d);
    let mid = [c1[0] + along * ux, c1[1] + along * uy];
    if half_chord2 <= (tol * 0.5).powi(2) {
        return Ok(vec![mid]);
    }
    let half = half_chord2.sqrt();
    let a = [mid[0] - half * uy, mid[1] + half * ux];
    let b = [mid[0] + half * uy, mid[1] - half * ux];
    Ok(if a[1] >= b[1] { vec![a, b] } else { vec![b, a] })
}

/// Inverts the planar two-link map
/// `(l1·cosθ + l2·cos(θ+φ), l1·sinθ + l2·sin(θ+φ))`.
///
/// Returns one pair at full extension or folding, two otherwise (φ ≥ 0
/// first). Angles are wrapped to (-π, π].
pub fn two_link_ik(z1: f64, z2: f64, l1: f64, l2: f64) -> Result<Vec<(f64, f64)>> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::InvalidArgument("link lengths must be positive".into()));
    }
    let r = z1.hypot(z2);
    let eps = 1e-12 * (l1 + l2);
    if r > l1 + l2 + eps || r < (l1 - l2).abs() - eps || r <= eps {
        return Err(Error::OutOfReach { distance: r });
    }
    let cos_phi = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let phi = cos_phi.acos();
    let heading = z2.atan2(z1);
    let solve = |phi: f64| {
        let theta = heading - (l2 * phi.sin()).atan2(l1 + l2 * phi.cos());
        (wrap_angle(theta), wrap_angle(phi))
    };
    if phi.sin().abs() < 1e-12 {
        Ok(vec![solve(phi)])
    } else {
        Ok(vec![solve(phi), solve(-phi)])
    }
}

/// Wraps to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn theta_admissible(theta: f64) -> bool {
    theta > FRAC_PI_2 && theta < PI
}

pub fn solve_chain(params: &RobotParams, pose: &Pose, chain: ChainId) -> Result<ChainSolution> {
    let coeffs = ChainCoefficients::unchecked(params, pose, chain);
    if coeffs.a[2] < 0.0 || coeffs.a[5] < 0.0 {
        return Err(Error::WorkspaceViolation { chain });
    }
    let [(c1, r1), (c2, r2)] = coeffs.circles();
    let roots = intersect_circles(c1, r1, c2, r2).map_err(|_| Error::WorkspaceViolation { chain })?;

    let mut candidates = Vec::with_capacity(4);
    let mut reachable = false;
    for (root, q) in roots.iter().enumerate() {
        let Ok(pairs) = two_link_ik(q[0], q[1], params.l_ks, params.l_kq) else {
            continue;
        };
        reachable = true;
        for (theta, phi) in pairs {
            if theta_admissible(theta) {
                candidates.push(ChainSolution {
                    chain,
                    theta,
                    phi,
                    q_planar: *q,
                    branch: BranchTag {
                        root: root as u8,
                        elbow_positive: phi >= 0.0,
                        tie_broken: false,
                    },
                });
            }
        }
    }
    if !reachable {
        return Err(Error::WorkspaceViolation { chain });
    }
    let tie = candidates.len() > 1;
    // roots arrive with the larger z2 first; among elbows of the same root
    // prefer the positive one
    let mut best = candidates
        .into_iter()
        .min_by(|a, b| {
            b.q_planar[1]
                .total_cmp(&a.q_planar[1])
                .then(b.branch.elbow_positive.cmp(&a.branch.elbow_positive))
        })
        .ok_or(Error::BranchViolation { chain })?;
    best.branch.tie_broken = tie;
    Ok(best)
}

pub fn solve_pose(params: &RobotParams, pose: &Pose) -> Result<IkSolution> {
    let mut chains = Vec::with_capacity(3);
    for chain in ChainId::ALL {
        chains.push(solve_chain(params, pose, chain)?);
    }
    Ok(IkSolution {
        pose: *pose,
        chains: [chains[0], chains[1], chains[2]],
    })
}

pub fn solve_ik(params: &RobotParams, z_p: f64, beta: f64, gamma: f64) -> Result<IkSolution> {
    if !(z_p.is_finite() && beta.is_finite() && gamma.is_finite()) {
        return Err(Error::InvalidArgument("pose must be finite".into()));
    }
    solve_pose(params, &derive_translation(params, z_p, beta, gamma))
}
