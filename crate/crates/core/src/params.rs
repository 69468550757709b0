//! Geometric constants of the mechanism.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const PROTOTYPE_JSON: &str = include_str!("../data/prototype.json");

/// Dimensions shared by all three chains, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Radius of the circle through A1 A2 A3.
    #[serde(rename = "r_A")]
    pub r_a: f64,
    /// Radius of the circle through the base joints S1 S2 S3.
    #[serde(rename = "r_S")]
    pub r_s: f64,
    /// Radius of the circle through E1 E2 E3.
    #[serde(rename = "r_E")]
    pub r_e: f64,
    /// Distance between plane A1A2A3 and plane E1E2E3.
    pub h: f64,
    #[serde(rename = "l_QA")]
    pub l_qa: f64,
    #[serde(rename = "l_QE")]
    pub l_qe: f64,
    #[serde(rename = "l_KS")]
    pub l_ks: f64,
    #[serde(rename = "l_KQ")]
    pub l_kq: f64,
    /// Not used by the kinematics; kept for completeness of the parameter file.
    #[serde(rename = "l_EA")]
    pub l_ea: f64,
}

impl RobotParams {
    /// Dimensions of the fabricated prototype.
    pub fn prototype() -> Self {
        serde_json::from_str(PROTOTYPE_JSON).expect("bundled prototype parameters are valid json")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let params: RobotParams = serde_json::from_str(json)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    fn lengths(&self) -> [(&'static str, f64); 9] {
        [
            ("r_A", self.r_a),
            ("r_S", self.r_s),
            ("r_E", self.r_e),
            ("h", self.h),
            ("l_QA", self.l_qa),
            ("l_QE", self.l_qe),
            ("l_KS", self.l_ks),
            ("l_KQ", self.l_kq),
            ("l_EA", self.l_ea),
        ]
    }

    /// Checks positivity of every length and that the neutral pose is reachable.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.lengths() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be a positive length, got {value}"
                )));
            }
        }
        if crate::workspace::neutral_height(self).is_none() {
            return Err(Error::InvalidParams(
                "no height admits a branch-valid neutral pose".into(),
            ));
        }
        Ok(())
    }

    /// Maximum planar reach of the two actuated links.
    pub fn reach(&self) -> f64 {
        self.l_ks + self.l_kq
    }

    /// Hex SHA-256 of the bit patterns of all constants.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, value) in self.lengths() {
            hasher.update(name.as_bytes());
            hasher.update(value.to_bits().to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::prototype()
    }
}
