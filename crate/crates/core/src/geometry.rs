//! Frame conventions, the 3-1-2 rotation, derived translations and the
//! per-chain constraint coefficients.
//!
//! Frame O is the base, frame P the brace. Chains 1 and 3 operate in the
//! XZ plane (S1 on +x, S3 on -x), chain 2 in the YZ plane (S2 on +y). Every
//! chain is described in its own planar coordinates (z1, z2): z1 is measured
//! from S_i towards the base axis, z2 is the height above the base plate.

use std::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::params::RobotParams;

/// One of the three identical chains, numbered 1 to 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainId(u8);

impl ChainId {
    pub const ALL: [ChainId; 3] = [ChainId(1), ChainId(2), ChainId(3)];

    pub fn new(number: u8) -> Option<Self> {
        (1..=3).contains(&number).then_some(ChainId(number))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based position, convenient for array indexing.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// Sign with which z1 enters the constraints: `+1` for chains 1 and 2,
    /// `-1` for chain 3, whose S joint sits on the negative x axis.
    pub fn z1_sign(self) -> f64 {
        if self.0 == 3 {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Space-three 3-1-2 rotation from frame O to frame P.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Entry at `[row][col]`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Rows in `[row][col]` order.
    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.0[(r, c)]))
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

pub fn rotation_312(alpha: f64, beta: f64, gamma: f64) -> RotationMatrix {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    RotationMatrix(Matrix3::new(
        sa * sb * sg + cg * ca,
        ca * sb * sg - cg * sa,
        cb * sg,
        sa * cb,
        ca * cb,
        -sb,
        sa * sb * cg - sg * ca,
        ca * sb * cg + sg * sa,
        cb * cg,
    ))
}

/// End-effector pose. Only `z_p`, `beta` and `gamma` are free; `x_p` and
/// `y_p` follow from the planar constraints on A1..A3 and axial rotation is
/// always zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    z_p: f64,
    beta: f64,
    gamma: f64,
    x_p: f64,
    y_p: f64,
}

impl Pose {
    pub fn z_p(&self) -> f64 {
        self.z_p
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn x_p(&self) -> f64 {
        self.x_p
    }
    pub fn y_p(&self) -> f64 {
        self.y_p
    }

    /// Origin of frame P expressed in frame O.
    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x_p, self.y_p, self.z_p)
    }

    pub fn rotation(&self) -> RotationMatrix {
        rotation_312(0.0, self.beta, self.gamma)
    }
}

pub fn derive_translation(params: &RobotParams, z_p: f64, beta: f64, gamma: f64) -> Pose {
    let (sb, cb) = beta.sin_cos();
    let sg = gamma.sin();
    Pose {
        z_p,
        beta,
        gamma,
        x_p: params.h * cb * sg - params.r_a * sb * sg,
        y_p: -params.h * sb,
    }
}

/// A_i in frame P.
pub fn local_a_points(params: &RobotParams) -> [Vector3<f64>; 3] {
    [
        Vector3::new(params.r_a, 0.0, -params.h),
        Vector3::new(0.0, params.r_a, -params.h),
        Vector3::new(-params.r_a, 0.0, -params.h),
    ]
}

/// E_i in frame P; the E plane is z = 0 of frame P.
pub fn local_e_points(params: &RobotParams) -> [Vector3<f64>; 3] {
    [
        Vector3::new(params.r_e, 0.0, 0.0),
        Vector3::new(0.0, params.r_e, 0.0),
        Vector3::new(-params.r_e, 0.0, 0.0),
    ]
}

fn to_base(pose: &Pose, local: [Vector3<f64>; 3]) -> [Vector3<f64>; 3] {
    let rot = pose.rotation();
    let t = pose.translation();
    local.map(|p| t + rot.apply(&p))
}

/// ^O A_1, ^O A_2, ^O A_3.
pub fn intermediate_points(params: &RobotParams, pose: &Pose) -> [Vector3<f64>; 3] {
    to_base(pose, local_a_points(params))
}

/// ^O E_1, ^O E_2, ^O E_3.
pub fn e_points(params: &RobotParams, pose: &Pose) -> [Vector3<f64>; 3] {
    to_base(pose, local_e_points(params))
}

/// Coefficients a1..a6 of the two constraints of one chain:
///
/// ```text
/// f1: (a1 + s·z1)² + (a2 − z2)² = a3
/// f2: (a4 + s·z1)² + (a5 − z2)² = a6
/// ```
///
/// with `s = chain.z1_sign()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCoefficients {
    pub chain: ChainId,
    pub a: [f64; 6],
}

impl ChainCoefficients {
    /// Evaluates the coefficients without checking that a3 and a6 are
    /// non-negative. The forward-kinematics residual needs them at arbitrary
    /// iterates.
    pub fn unchecked(params: &RobotParams, pose: &Pose, chain: ChainId) -> Self {
        let (sb, cb) = pose.beta.sin_cos();
        let (sg, cg) = pose.gamma.sin_cos();
        let (x_p, y_p, z_p) = (pose.x_p, pose.y_p, pose.z_p);
        let RobotParams {
            r_a, r_s, r_e, h, ..
        } = *params;
        let l_qe2 = params.l_qe * params.l_qe;
        let l_qa2 = params.l_qa * params.l_qa;
        let a = match chain.number() {
            1 => {
                // y of E1 is y_p since axial rotation is zero
                let y_e = y_p;
                [
                    x_p + r_e * cg - r_s,
                    z_p - r_e * sg,
                    l_qe2 - y_e * y_e,
                    x_p + r_a * cg - h * cb * sg - r_s,
                    z_p - r_a * sg - h * cb * cg,
                    l_qa2,
                ]
            }
            2 => {
                let x_e = x_p + r_e * sb * sg;
                [
                    y_p + r_e * cb - r_s,
                    z_p + r_e * sb * cg,
                    l_qe2 - x_e * x_e,
                    r_a * cb - r_s,
                    z_p + r_a * sb * cg - h * cb * cg,
                    l_qa2,
                ]
            }
            _ => {
                let y_e = y_p;
                [
                    x_p - r_e * cg + r_s,
                    z_p + r_e * sg,
                    l_qe2 - y_e * y_e,
                    x_p - r_a * cg - h * cb * sg + r_s,
                    z_p + r_a * sg - h * cb * cg,
                    l_qa2,
                ]
            }
        };
        ChainCoefficients { chain, a }
    }

    /// Constraint values `[f1 − a3, f2 − a6]` at planar point (z1, z2).
    pub fn residual(&self, z1: f64, z2: f64) -> [f64; 2] {
        let s = self.chain.z1_sign();
        let [a1, a2, a3, a4, a5, a6] = self.a;
        [
            (a1 + s * z1).powi(2) + (a2 - z2).powi(2) - a3,
            (a4 + s * z1).powi(2) + (a5 - z2).powi(2) - a6,
        ]
    }

    /// The two constraints as circles `(center, radius)` in the (z1, z2)
    /// plane: Q must lie on both.
    pub fn circles(&self) -> [([f64; 2], f64); 2] {
        let s = self.chain.z1_sign();
        let [a1, a2, a3, a4, a5, a6] = self.a;
        [
            ([-s * a1, a2], a3.max(0.0).sqrt()),
            ([-s * a4, a5], a6.max(0.0).sqrt()),
        ]
    }
}

pub fn chain_coefficients(
    params: &RobotParams,
    pose: &Pose,
    chain: ChainId,
) -> Result<ChainCoefficients> {
    let c = ChainCoefficients::unchecked(params, pose, chain);
    for (coefficient, value) in [("a3", c.a[2]), ("a6", c.a[5])] {
        if value < 0.0 {
            return Err(Error::Domain {
                chain,
                coefficient,
                value,
            });
        }
    }
    Ok(c)
}

/// Planar position of Q produced by the actuated link pair.
pub fn planar_point(params: &RobotParams, theta: f64, phi: f64) -> [f64; 2] {
    [
        params.l_ks * theta.cos() + params.l_kq * (theta + phi).cos(),
        params.l_ks * theta.sin() + params.l_kq * (theta + phi).sin(),
    ]
}

/// Q of a chain in frame O, from its planar coordinates.
pub fn q_point(params: &RobotParams, chain: ChainId, z1: f64, z2: f64) -> Vector3<f64> {
    match chain.number() {
        1 => Vector3::new(params.r_s - z1, 0.0, z2),
        2 => Vector3::new(0.0, params.r_s - z1, z2),
        _ => Vector3::new(-params.r_s + z1, 0.0, z2),
    }
}
