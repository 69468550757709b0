//! Trajectory metrics and model comparison reports.
//!
//! Positions are compared in mm after rebuilding `(x_p, y_p)` from the
//! angles; orientations in degrees. No other module converts units.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::data::{fmt_f64, Dataset, Target};
use crate::error::{Error, Result};
use crate::estimator::{FkEstimator, Trained};
use crate::geometry::derive_translation;
use crate::params::RobotParams;

pub const PRED_CSV_HEADER: &str = "step,beta_true_deg,gamma_true_deg,zp_true_mm,xp_true_mm,yp_true_mm,\
beta_pred_deg,gamma_pred_deg,zp_pred_mm,xp_pred_mm,yp_pred_mm,model";

fn same_len<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn position(params: &RobotParams, t: &Target) -> [f64; 3] {
    let pose = derive_translation(params, t.z_p, t.beta, t.gamma);
    [pose.x_p(), pose.y_p(), pose.z_p()]
}

/// Per-step `(Δx_p, Δy_p, Δz_p)` in mm, prediction minus truth.
pub fn position_error_series(params: &RobotParams, pred: &[Target], truth: &[Target]) -> Result<Vec<[f64; 3]>> {
    same_len(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let (a, b) = (position(params, p), position(params, t));
            [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
        })
        .collect())
}

/// Per-step `(Δβ, Δγ)` in degrees, prediction minus truth.
pub fn orientation_error_series(pred: &[Target], truth: &[Target]) -> Result<Vec<[f64; 2]>> {
    same_len(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| [(p.beta - t.beta).to_degrees(), (p.gamma - t.gamma).to_degrees()])
        .collect())
}

/// Mean of the squared components over all steps and dimensions.
pub fn mse<const N: usize>(errors: &[[f64; N]]) -> Result<f64> {
    if errors.is_empty() || N == 0 {
        return Err(Error::EmptyDataset);
    }
    let sum: f64 = errors.iter().flatten().map(|e| e * e).sum();
    Ok(sum / (errors.len() * N) as f64)
}

/// `1 − SS_res/SS_tot` over the flattened output matrix, with `SS_tot`
/// measured from each dimension's own mean.
pub fn r2<const N: usize>(pred: &[[f64; N]], truth: &[[f64; N]]) -> Result<f64> {
    same_len(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = truth.len() as f64;
    let mut mean = [0.0; N];
    for t in truth {
        for d in 0..N {
            mean[d] += t[d] / n;
        }
    }
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for d in 0..N {
            ss_res += (p[d] - t[d]).powi(2);
            ss_tot += (t[d] - mean[d]).powi(2);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `(β in deg, γ in deg, z_p in mm)`, the units metrics are reported in.
pub fn report_units(t: &Target) -> [f64; 3] {
    [t.beta.to_degrees(), t.gamma.to_degrees(), t.z_p]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub model: String,
    /// mm², averaged over x_p, y_p and z_p.
    pub mse_position: f64,
    /// deg², averaged over β and γ.
    pub mse_orientation: f64,
    pub r2: f64,
    pub train_time_s: Option<f64>,
    pub n_samples: usize,
}

impl Metrics {
    pub fn compute(
        params: &RobotParams,
        model: &str,
        pred: &[Target],
        truth: &[Target],
        train_time_s: Option<f64>,
    ) -> Result<Self> {
        let pos = position_error_series(params, pred, truth)?;
        let ori = orientation_error_series(pred, truth)?;
        let p: Vec<[f64; 3]> = pred.iter().map(report_units).collect();
        let t: Vec<[f64; 3]> = truth.iter().map(report_units).collect();
        Ok(Metrics {
            model: model.to_string(),
            mse_position: mse(&pos)?,
            mse_orientation: mse(&ori)?,
            r2: r2(&p, &t)?,
            train_time_s,
            n_samples: truth.len(),
        })
    }

    fn line(&self) -> String {
        let time = self
            .train_time_s
            .map_or_else(|| "n/a".to_string(), |t| format!("{t:.3}"));
        format!(
            "model={} n_samples={} mse_position_mm2={:.6e} mse_orientation_deg2={:.6e} r2={:.6} train_time_s={}",
            self.model, self.n_samples, self.mse_position, self.mse_orientation, self.r2, time
        )
    }
}

/// Predictions of one model on a test set with their metrics.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Target>,
}

pub fn evaluate(
    params: &RobotParams,
    name: &str,
    estimator: &dyn FkEstimator,
    train_time_s: Option<f64>,
    test: &Dataset,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = estimator.predict_all(&test.inputs())?;
    let metrics = Metrics::compute(params, name, &predictions, &test.targets(), train_time_s)?;
    Ok(Evaluation { metrics, predictions })
}

/// A named ratio; `None` when the denominator is zero or unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratio {
    pub name: String,
    pub value: Option<f64>,
}

fn ratio(name: String, num: Option<f64>, den: Option<f64>) -> Ratio {
    let value = match (num, den) {
        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
        _ => None,
    };
    Ratio { name, value }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub evaluations: Vec<Evaluation>,
    pub ratios: Vec<Ratio>,
}

impl Report {
    pub fn single(evaluation: Evaluation) -> Self {
        Report {
            evaluations: vec![evaluation],
            ratios: Vec::new(),
        }
    }

    /// `fast` is the model expected to train quicker and `accurate` the one
    /// expected to predict better; ratios above one confirm both.
    pub fn pair(fast: Evaluation, accurate: Evaluation) -> Self {
        let (a, b) = (&fast.metrics, &accurate.metrics);
        let ratios = vec![
            ratio(
                format!("train_time {}/{}", b.model, a.model),
                b.train_time_s,
                a.train_time_s,
            ),
            ratio(
                format!("mse_position {}/{}", a.model, b.model),
                Some(a.mse_position),
                Some(b.mse_position),
            ),
            ratio(
                format!("mse_orientation {}/{}", a.model, b.model),
                Some(a.mse_orientation),
                Some(b.mse_orientation),
            ),
        ];
        Report {
            evaluations: vec![fast, accurate],
            ratios,
        }
    }

    pub fn metrics(&self) -> Vec<&Metrics> {
        self.evaluations.iter().map(|e| &e.metrics).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# mse_position averages x_p, y_p and z_p in mm^2; x_p and y_p are rebuilt from the angles\n");
        out.push_str("# mse_orientation averages beta and gamma in deg^2\n");
        out.push_str("# r2 is taken over the flattened (beta deg, gamma deg, z_p mm) outputs\n");
        for e in &self.evaluations {
            out.push_str(&e.metrics.line());
            out.push('\n');
        }
        for r in &self.ratios {
            let v = r.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "ratio {}={}", r.name, v);
        }
        out
    }

    /// Long-format predictions: one row per step and model.
    pub fn write_predictions<W: Write>(&self, params: &RobotParams, test: &Dataset, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PRED_CSV_HEADER.split(','))
            .map_err(csv_error)?;
        let truth = test.targets();
        for e in &self.evaluations {
            same_len(&e.predictions, &truth)?;
            for (step, (p, t)) in e.predictions.iter().zip(&truth).enumerate() {
                let (tp, pp) = (position(params, t), position(params, p));
                let (tu, pu) = (report_units(t), report_units(p));
                let mut row = vec![step.to_string()];
                row.extend([tu[0], tu[1], tu[2], tp[0], tp[1]].map(fmt_f64));
                row.extend([pu[0], pu[1], pu[2], pp[0], pp[1]].map(fmt_f64));
                row.push(e.metrics.model.clone());
                w.write_record(&row).map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.txt` and `pred.csv` into `dir`, creating it if needed.
    pub fn write_dir(&self, params: &RobotParams, test: &Dataset, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.render())?;
        let file = std::fs::File::create(dir.join("pred.csv"))?;
        self.write_predictions(params, test, std::io::BufWriter::new(file))
    }
}

pub const PREDICT_CSV_HEADER: &str =
    "step,theta1_deg,theta2_deg,theta3_deg,beta_pred_deg,gamma_pred_deg,zp_pred_mm,xp_pred_mm,yp_pred_mm";

/// Predictions without ground truth, one row per input.
pub fn write_prediction_csv<W: Write>(
    params: &RobotParams,
    thetas: &[[f64; 3]],
    pred: &[Target],
    out: W,
) -> Result<()> {
    same_len(thetas, pred)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICT_CSV_HEADER.split(',')).map_err(csv_error)?;
    for (step, (theta, p)) in thetas.iter().zip(pred).enumerate() {
        let pos = position(params, p);
        let u = report_units(p);
        let mut row = vec![step.to_string()];
        row.extend(theta.map(|t| fmt_f64(t.to_degrees())));
        row.extend([u[0], u[1], u[2], pos[0], pos[1]].map(fmt_f64));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Evaluates two trained estimators on the same test set.
pub fn compare(
    params: &RobotParams,
    fast: (&str, &Trained),
    accurate: (&str, &Trained),
    test: &Dataset,
) -> Result<Report> {
    let a = evaluate(params, fast.0, fast.1.estimator.as_ref(), fast.1.train_time_s, test)?;
    let b = evaluate(params, accurate.0, accurate.1.estimator.as_ref(), accurate.1.train_time_s, test)?;
    Ok(Report::pair(a, b))
}
