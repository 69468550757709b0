//! EDMD fit of the Koopman matrix and pose prediction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, LIFTED_DIM, LINEAR_INDICES, ORDERING_TAG};
use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::scaling::AffineScaler;

pub const DEFAULT_SVD_THRESHOLD: f64 = 1e-10;

/// Samples per partial sum. Fixed so the reduction order, and hence every
/// bit of G and A, does not depend on the thread count.
const CHUNK: usize = 2048;

/// Normalised data moments `G = (1/M) Σ Ψ(x)ᵀΨ(x)`, `A = (1/M) Σ Ψ(x)ᵀΨ(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub samples: usize,
}

impl Moments {
    /// `inputs`, `outputs` are already scaled. Pairs are summed in a
    /// canonical order, so the result does not depend on sample order.
    pub fn accumulate(inputs: &[[f64; 3]], outputs: &[[f64; 3]]) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: outputs.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut pairs: Vec<([f64; 3], [f64; 3])> =
            inputs.iter().copied().zip(outputs.iter().copied()).collect();
        pairs.par_sort_unstable_by(|a, b| {
            let key = |p: &([f64; 3], [f64; 3])| [p.0[0], p.0[1], p.0[2], p.1[0], p.1[1], p.1[2]];
            key(a)
                .iter()
                .zip(key(b).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let (xs, ys): (Vec<[f64; 3]>, Vec<[f64; 3]>) = pairs.into_iter().unzip();
        let partials: Vec<(DMatrix<f64>, DMatrix<f64>)> = xs
            .par_chunks(CHUNK)
            .zip(ys.par_chunks(CHUNK))
            .map(|(xs, ys)| {
                let pxt = lifted_rows(xs).transpose();
                let py = lifted_rows(ys);
                let g = &pxt * pxt.transpose();
                let a = &pxt * py;
                (g, a)
            })
            .collect();
        let mut g = DMatrix::zeros(LIFTED_DIM, LIFTED_DIM);
        let mut a = DMatrix::zeros(LIFTED_DIM, LIFTED_DIM);
        for (pg, pa) in &partials {
            g += pg;
            a += pa;
        }
        let m = inputs.len() as f64;
        g /= m;
        a /= m;
        Ok(Moments {
            g,
            a,
            samples: inputs.len(),
        })
    }
}

/// One lifted sample per row.
pub fn lifted_rows(xs: &[[f64; 3]]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(xs.len(), LIFTED_DIM);
    let mut row = [0.0; LIFTED_DIM];
    for (i, x) in xs.iter().enumerate() {
        Dictionary.lift_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Least-squares solution `G†·rhs` through the SVD of `g`, keeping singular
/// values `≥ threshold·σ_max`. Returns the solution and the retained rank.
///
/// Evaluated as `V_r·(S_r⁻¹·(U_rᵀ·rhs))` so every column of the result lies
/// in the retained subspace to working precision.
pub fn truncated_solve(g: &DMatrix<f64>, rhs: &DMatrix<f64>, threshold: f64) -> (DMatrix<f64>, usize) {
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = threshold * sigma_max;
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 0.0 && svd.singular_values[k] >= cutoff)
        .collect();
    let u_r = u.select_columns(&kept);
    let v_r = v_t.select_rows(&kept).transpose();
    let mut coeff = u_r.transpose() * rhs;
    for (row, &k) in kept.iter().enumerate() {
        coeff.row_mut(row).scale_mut(1.0 / svd.singular_values[k]);
    }
    (v_r * coeff, kept.len())
}

/// Fitted Koopman matrix with its normalisation.
///
/// Lifted vectors are rows: the model predicts `Ψ(y) ≈ Ψ(x)·K`, so
/// `K = G†A` directly and its right eigenvectors define eigenfunctions
/// `φ_n(x) = Ψ(x)·ξ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    k: DMatrix<f64>,
    input_scaling: AffineScaler,
    output_scaling: AffineScaler,
    svd_threshold: f64,
    rank: usize,
}

impl KoopmanModel {
    pub fn fit(train: &Dataset, svd_threshold: f64) -> Result<Self> {
        Self::fit_pairs(&train.inputs(), &train.outputs(), svd_threshold)
    }

    /// Fits on raw input/output triples; the output triple is ordered
    /// `(β, γ, z_p)` for pose data.
    pub fn fit_pairs(inputs: &[[f64; 3]], outputs: &[[f64; 3]], svd_threshold: f64) -> Result<Self> {
        if !(svd_threshold >= 0.0 && svd_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "svd threshold must lie in [0, 1), got {svd_threshold}"
            )));
        }
        let input_scaling = AffineScaler::min_max(inputs)?;
        let output_scaling = AffineScaler::min_max(outputs)?;
        let xs: Vec<[f64; 3]> = inputs.iter().map(|x| input_scaling.apply(x)).collect();
        let ys: Vec<[f64; 3]> = outputs.iter().map(|y| output_scaling.apply(y)).collect();
        let moments = Moments::accumulate(&xs, &ys)?;
        Self::from_moments(&moments, input_scaling, output_scaling, svd_threshold)
    }

    pub fn from_moments(
        moments: &Moments,
        input_scaling: AffineScaler,
        output_scaling: AffineScaler,
        svd_threshold: f64,
    ) -> Result<Self> {
        if moments.g.iter().chain(moments.a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData);
        }
        let (k, rank) = truncated_solve(&moments.g, &moments.a, svd_threshold);
        if rank == 0 {
            return Err(Error::DegenerateData);
        }
        Ok(KoopmanModel {
            k,
            input_scaling,
            output_scaling,
            svd_threshold,
            rank,
        })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn input_scaling(&self) -> &AffineScaler {
        &self.input_scaling
    }

    pub fn output_scaling(&self) -> &AffineScaler {
        &self.output_scaling
    }

    pub fn svd_threshold(&self) -> f64 {
        self.svd_threshold
    }

    /// Number of singular values of G retained by the truncation.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Ψ of the scaled input, as a row vector.
    pub fn lift_input(&self, theta: &[f64; 3]) -> [f64; LIFTED_DIM] {
        Dictionary.lift(&self.input_scaling.apply(theta))
    }

    /// Predicted lifted output `Ψ(x)·K`.
    pub fn predict_lifted(&self, theta: &[f64; 3]) -> Vec<f64> {
        let psi = self.lift_input(theta);
        (0..LIFTED_DIM)
            .map(|j| {
                self.k
                    .column(j)
                    .iter()
                    .zip(psi.iter())
                    .map(|(k, p)| k * p)
                    .sum()
            })
            .collect()
    }

    /// Unscales the readout coordinates of a lifted output.
    pub fn read_out(&self, lifted: &[f64]) -> [f64; 3] {
        let scaled = LINEAR_INDICES.map(|i| lifted[i]);
        self.output_scaling.invert(&scaled)
    }

    pub fn predict_raw(&self, theta: &[f64; 3]) -> [f64; 3] {
        self.read_out(&self.predict_lifted(theta))
    }

    pub fn predict(&self, theta: &[f64; 3]) -> Target {
        Target::from_array(self.predict_raw(theta))
    }

    /// `J = ½ Σ ‖Ψ(y_j) − Ψ(x_j)K‖²` over raw pairs, in scaled units.
    pub fn objective(&self, inputs: &[[f64; 3]], outputs: &[[f64; 3]]) -> f64 {
        objective_with(&self.k, self, inputs, outputs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&KoopmanFile::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: KoopmanFile = serde_json::from_str(json)?;
        file.try_into()
    }
}

/// Objective for an arbitrary operator `k` using the normalisation of `model`.
pub fn objective_with(
    k: &DMatrix<f64>,
    model: &KoopmanModel,
    inputs: &[[f64; 3]],
    outputs: &[[f64; 3]],
) -> f64 {
    let xs: Vec<[f64; 3]> = inputs.iter().map(|x| model.input_scaling.apply(x)).collect();
    let ys: Vec<[f64; 3]> = outputs.iter().map(|y| model.output_scaling.apply(y)).collect();
    let px = lifted_rows(&xs);
    let py = lifted_rows(&ys);
    0.5 * (py - px * k).norm_squared()
}

pub const MODEL_KIND: &str = "koopman";

#[derive(Serialize, Deserialize)]
struct KoopmanFile {
    kind: String,
    dictionary: String,
    /// Row-major, `k[row][col]`.
    k: Vec<Vec<f64>>,
    input_scaling: AffineScaler,
    output_scaling: AffineScaler,
    readout_indices: [usize; 3],
    svd_threshold: f64,
    rank: usize,
}

impl From<&KoopmanModel> for KoopmanFile {
    fn from(m: &KoopmanModel) -> Self {
        KoopmanFile {
            kind: MODEL_KIND.into(),
            dictionary: ORDERING_TAG.into(),
            k: m.k.row_iter().map(|r| r.iter().copied().collect()).collect(),
            input_scaling: m.input_scaling,
            output_scaling: m.output_scaling,
            readout_indices: LINEAR_INDICES,
            svd_threshold: m.svd_threshold,
            rank: m.rank,
        }
    }
}

impl TryFrom<KoopmanFile> for KoopmanModel {
    type Error = Error;

    fn try_from(f: KoopmanFile) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("koopman model file: {msg}"));
        if f.kind != MODEL_KIND {
            return Err(bad("kind is not 'koopman'"));
        }
        if f.dictionary != ORDERING_TAG || f.readout_indices != LINEAR_INDICES {
            return Err(bad("unsupported dictionary ordering"));
        }
        if f.k.len() != LIFTED_DIM || f.k.iter().any(|r| r.len() != LIFTED_DIM) {
            return Err(bad("K must be 125x125"));
        }
        let k = DMatrix::from_fn(LIFTED_DIM, LIFTED_DIM, |r, c| f.k[r][c]);
        if k.iter().any(|v| !v.is_finite()) {
            return Err(bad("K has non-finite entries"));
        }
        if f.input_scaling.scale.contains(&0.0) || f.output_scaling.scale.contains(&0.0) {
            return Err(bad("zero scale factor"));
        }
        Ok(KoopmanModel {
            k,
            input_scaling: f.input_scaling,
            output_scaling: f.output_scaling,
            svd_threshold: f.svd_threshold,
            rank: f.rank,
        })
    }
}
