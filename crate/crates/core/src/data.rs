//! Supervised datasets generated from inverse kinematics, and their CSV form.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fk::fk_residual;
use crate::ik::{solve_ik, theta_admissible, IkSolution};
use crate::params::RobotParams;
use crate::workspace::{sample_solutions, WorkspaceBox};

pub const CSV_HEADER: [&str; 6] = [
    "theta1_rad",
    "theta2_rad",
    "theta3_rad",
    "beta_rad",
    "gamma_rad",
    "zp_mm",
];

/// End-effector output in the order `(β, γ, z_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub beta: f64,
    pub gamma: f64,
    pub z_p: f64,
}

impl Target {
    pub fn new(beta: f64, gamma: f64, z_p: f64) -> Self {
        Target { beta, gamma, z_p }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.beta, self.gamma, self.z_p]
    }

    pub fn from_array([beta, gamma, z_p]: [f64; 3]) -> Self {
        Target { beta, gamma, z_p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub theta: [f64; 3],
    pub target: Target,
}

impl Sample {
    /// Rejects motor angles outside (π/2, π).
    pub fn new(theta: [f64; 3], target: Target) -> Result<Self> {
        if let Some(bad) = theta.iter().find(|t| !theta_admissible(**t)) {
            return Err(Error::InvalidArgument(format!(
                "motor angle {bad} rad outside (pi/2, pi)"
            )));
        }
        Ok(Sample { theta, target })
    }

    pub fn from_ik(sol: &IkSolution) -> Self {
        Sample {
            theta: sol.thetas(),
            target: Target::new(sol.pose.beta(), sol.pose.gamma(), sol.pose.z_p()),
        }
    }

    /// Largest absolute chain-constraint residual (mm²) with the stored motor
    /// angles. Passive angles are recovered by re-solving the stored pose.
    pub fn max_residual(&self, params: &RobotParams) -> Result<f64> {
        let t = self.target;
        let sol = solve_ik(params, t.z_p, t.beta, t.gamma)?;
        let residual = fk_residual(params, &self.theta, &sol.unknowns());
        Ok(residual.iter().fold(0.0f64, |m, r| m.max(r.abs())))
    }
}

/// Inclusive range `min, min + step, …, ≤ max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) || max < min || step <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid axis needs min <= max and step > 0, got {min}:{max}:{step}"
            )));
        }
        Ok(GridAxis { min, max, step })
    }

    /// A single point.
    pub fn point(value: f64) -> Self {
        GridAxis {
            min: value,
            max: value,
            step: 1.0,
        }
    }

    /// Evenly spaced axis with `count` points covering `[min, max]`.
    pub fn with_count(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Ok(Self::point(min));
        }
        Self::new(min, max, (max - min) / (count - 1) as f64)
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    /// Same axis with every bound and step multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        GridAxis {
            min: self.min * factor,
            max: self.max * factor,
            step: self.step * factor,
        }
    }
}

/// Parameters of the periodic test trajectory
/// `β = B·sin(2πt/T)`, `γ = G·cos(2πt/T)`, `z_p = z0 + A_z·sin(2πt/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub amp_beta: f64,
    pub amp_gamma: f64,
    pub amp_z: f64,
    pub z0: f64,
    pub period: usize,
    pub len: usize,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.len < 2 || self.period == 0 {
            return Err(Error::InvalidArgument(
                "trajectory needs len >= 2 and period >= 1".into(),
            ));
        }
        let finite = [self.amp_beta, self.amp_gamma, self.amp_z, self.z0];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite trajectory parameter".into()));
        }
        Ok(())
    }

    /// `(z_p, β, γ)` at step `t`.
    pub fn pose_at(&self, t: usize) -> (f64, f64, f64) {
        let (s, c) = (2.0 * PI * t as f64 / self.period as f64).sin_cos();
        (
            self.z0 + self.amp_z * s,
            self.amp_beta * s,
            self.amp_gamma * c,
        )
    }
}

/// Bounding box of skipped grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipBounds {
    pub z_p: (f64, f64),
    pub beta: (f64, f64),
    pub gamma: (f64, f64),
}

/// How a dataset came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Provenance {
    Grid {
        z_p: GridAxis,
        beta: GridAxis,
        gamma: GridAxis,
        raw_points: usize,
        skipped: usize,
        skipped_bounds: Option<SkipBounds>,
    },
    Uniform {
        bounds: WorkspaceBox,
        seed: u64,
        rejected: usize,
    },
    Trajectory(TrajectorySpec),
    Csv,
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Fingerprint of the parameters that generated the samples; unknown for
    /// data read back from CSV.
    pub params_fingerprint: Option<String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            samples,
            params_fingerprint: None,
            provenance: Provenance::Manual,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Vec<[f64; 3]> {
        self.samples.iter().map(|s| s.theta).collect()
    }

    pub fn targets(&self) -> Vec<Target> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Targets as `(β, γ, z_p)` triples.
    pub fn outputs(&self) -> Vec<[f64; 3]> {
        self.samples.iter().map(|s| s.target.to_array()).collect()
    }

    /// Largest residual over all samples; fails on the first sample whose
    /// pose no longer solves.
    pub fn max_residual(&self, params: &RobotParams) -> Result<f64> {
        self.samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| s.max_residual(params).map_err(|e| e.at_step(i)))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

pub fn generate_grid(
    params: &RobotParams,
    z_p: GridAxis,
    beta: GridAxis,
    gamma: GridAxis,
) -> Result<Dataset> {
    let (nz, nb, ng) = (z_p.len(), beta.len(), gamma.len());
    let raw_points = nz * nb * ng;
    let solved: Vec<(usize, Option<Sample>)> = (0..raw_points)
        .into_par_iter()
        .map(|idx| {
            let (iz, rest) = (idx / (nb * ng), idx % (nb * ng));
            let (ib, ig) = (rest / ng, rest % ng);
            let sample = solve_ik(params, z_p.value(iz), beta.value(ib), gamma.value(ig))
                .ok()
                .map(|sol| Sample::from_ik(&sol));
            (idx, sample)
        })
        .collect();

    let mut samples = Vec::with_capacity(raw_points);
    let mut skipped_bounds: Option<SkipBounds> = None;
    for (idx, sample) in solved {
        match sample {
            Some(s) => samples.push(s),
            None => {
                let (iz, rest) = (idx / (nb * ng), idx % (nb * ng));
                let (z, b, g) = (z_p.value(iz), beta.value(rest / ng), gamma.value(rest % ng));
                let bounds = skipped_bounds.get_or_insert(SkipBounds {
                    z_p: (z, z),
                    beta: (b, b),
                    gamma: (g, g),
                });
                widen(&mut bounds.z_p, z);
                widen(&mut bounds.beta, b);
                widen(&mut bounds.gamma, g);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let skipped = raw_points - samples.len();
    Ok(Dataset {
        samples,
        params_fingerprint: Some(params.fingerprint()),
        provenance: Provenance::Grid {
            z_p,
            beta,
            gamma,
            raw_points,
            skipped,
            skipped_bounds,
        },
    })
}

fn widen(range: &mut (f64, f64), v: f64) {
    range.0 = range.0.min(v);
    range.1 = range.1.max(v);
}

/// Seeded uniform sampling inside `bounds`; unreachable draws are discarded.
pub fn generate_uniform(
    params: &RobotParams,
    bounds: &WorkspaceBox,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (solutions, rejected) = sample_solutions(params, bounds, count, &mut rng);
    Ok(Dataset {
        samples: solutions.iter().map(Sample::from_ik).collect(),
        params_fingerprint: Some(params.fingerprint()),
        provenance: Provenance::Uniform {
            bounds: *bounds,
            seed,
            rejected,
        },
    })
}

pub fn generate_trajectory(params: &RobotParams, spec: &TrajectorySpec) -> Result<Dataset> {
    spec.validate()?;
    let samples = (0..spec.len)
        .map(|t| {
            let (z, b, g) = spec.pose_at(t);
            solve_ik(params, z, b, g)
                .map(|sol| Sample::from_ik(&sol))
                .map_err(|e| e.at_step(t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        params_fingerprint: Some(params.fingerprint()),
        provenance: Provenance::Trajectory(*spec),
    })
}

/// 17 significant digits, enough to round-trip every f64 exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    writer.write_record(CSV_HEADER).map_err(io)?;
    for s in &dataset.samples {
        let row = [
            s.theta[0],
            s.theta[1],
            s.theta[2],
            s.target.beta,
            s.target.gamma,
            s.target.z_p,
        ];
        writer.write_record(row.map(fmt_f64)).map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, BufWriter::new(File::create(path)?))
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut samples = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Format {
                    line,
                    message: format!("{other:?}"),
                },
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            if record.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Format {
                    line,
                    message: format!("expected header {}", CSV_HEADER.join(",")),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Format {
                line,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let mut values = [0.0; 6];
        for (slot, field) in values.iter_mut().zip(record.iter()) {
            *slot = field.trim().parse().map_err(|_| Error::Format {
                line,
                message: format!("not a number: '{field}'"),
            })?;
        }
        let [t1, t2, t3, beta, gamma, z_p] = values;
        let sample = Sample::new([t1, t2, t3], Target::new(beta, gamma, z_p)).map_err(|e| {
            Error::Format {
                line,
                message: e.to_string(),
            }
        })?;
        samples.push(sample);
    }
    if !saw_header {
        return Err(Error::Format {
            line: 1,
            message: "missing header".into(),
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        samples,
        params_fingerprint: None,
        provenance: Provenance::Csv,
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::neutral_height;

    fn params() -> RobotParams {
        RobotParams::prototype()
    }

    fn to_string(ds: &Dataset) -> String {
        let mut buf = Vec::new();
        write_csv(ds, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn axis_lengths() {
        assert_eq!(GridAxis::new(0.0, 1.0, 0.25).unwrap().len(), 5);
        assert_eq!(GridAxis::new(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert_eq!(GridAxis::point(3.0).len(), 1);
        assert_eq!(GridAxis::with_count(-1.0, 1.0, 63).unwrap().len(), 63);
        assert!(GridAxis::new(1.0, 0.0, 0.1).is_err());
        assert!(GridAxis::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_point_grid_is_symmetric() {
        let p = params();
        let z0 = neutral_height(&p).unwrap();
        let ds = generate_grid(&p, GridAxis::point(z0), GridAxis::point(0.0), GridAxis::point(0.0))
            .unwrap();
        assert_eq!(ds.len(), 1);
        let t = ds.samples[0].theta;
        assert!((t[0] - t[1]).abs() < 1e-12 && (t[0] - t[2]).abs() < 1e-12);
    }

    #[test]
    fn grid_past_reach_skips_and_keeps_valid_samples() {
        let p = params();
        let ds = generate_grid(
            &p,
            GridAxis::new(150.0, 300.0, 25.0).unwrap(),
            GridAxis::with_count(-0.3, 0.3, 3).unwrap(),
            GridAxis::with_count(-0.3, 0.3, 3).unwrap(),
        )
        .unwrap();
        let Provenance::Grid {
            skipped,
            raw_points,
            skipped_bounds,
            ..
        } = ds.provenance
        else {
            panic!("grid provenance expected");
        };
        assert_eq!(raw_points, 7 * 9);
        assert!(skipped > 0);
        assert_eq!(ds.len() + skipped, raw_points);
        assert!(skipped_bounds.unwrap().z_p.1 >= 275.0);
        assert!(ds.max_residual(&p).unwrap() < 1e-9);
    }

    #[test]
    fn grid_beyond_reach_everywhere_is_empty() {
        let p = params();
        let err = generate_grid(
            &p,
            GridAxis::point(1e4),
            GridAxis::point(0.0),
            GridAxis::point(0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn grid_order_is_row_major() {
        let p = params();
        let ds = generate_grid(
            &p,
            GridAxis::new(150.0, 160.0, 10.0).unwrap(),
            GridAxis::with_count(-0.1, 0.1, 2).unwrap(),
            GridAxis::with_count(-0.1, 0.1, 3).unwrap(),
        )
        .unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.samples[0].target.z_p, 150.0);
        assert_eq!(ds.samples[5].target.z_p, 150.0);
        assert_eq!(ds.samples[6].target.z_p, 160.0);
        assert_eq!(ds.samples[1].target.gamma, 0.0);
        assert_eq!(ds.samples[3].target.beta, 0.1);
    }

    #[test]
    fn zero_amplitude_trajectory_is_constant() {
        let p = params();
        let spec = TrajectorySpec {
            amp_beta: 0.0,
            amp_gamma: 0.0,
            amp_z: 0.0,
            z0: neutral_height(&p).unwrap(),
            period: 10,
            len: 5,
        };
        let ds = generate_trajectory(&p, &spec).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.samples.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn trajectory_reports_failing_step() {
        let p = params();
        let spec = TrajectorySpec {
            amp_beta: 0.0,
            amp_gamma: 0.0,
            amp_z: 200.0,
            z0: 160.0,
            period: 8,
            len: 8,
        };
        let err = generate_trajectory(&p, &spec).unwrap_err();
        // step 1 already rises above the reachable heights
        assert_eq!(err.step(), Some(1));
        assert_eq!(err.kind(), "WorkspaceViolation");
    }

    #[test]
    fn trajectory_spec_validation() {
        let spec = TrajectorySpec {
            amp_beta: 0.0,
            amp_gamma: 0.0,
            amp_z: 0.0,
            z0: 160.0,
            period: 8,
            len: 1,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let p = params();
        let ds = generate_uniform(&p, &WorkspaceBox::standard(&p), 40, 11).unwrap();
        let text = to_string(&ds);
        assert!(text.starts_with("theta1_rad,theta2_rad,theta3_rad,beta_rad,gamma_rad,zp_mm\n"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.samples, ds.samples);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            for (x, y) in a.theta.iter().zip(&b.theta) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn csv_wrong_column_count_names_line() {
        let text = "theta1_rad,theta2_rad,theta3_rad,beta_rad,gamma_rad,zp_mm\n\
                    2.0,2.0,2.0,0.0,0.0,150.0\n\
                    2.0,2.0,2.0,0.0,0.0\n";
        match read_csv(text.as_bytes()).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_inadmissible_theta() {
        let bad = 80f64.to_radians();
        let text = format!(
            "theta1_rad,theta2_rad,theta3_rad,beta_rad,gamma_rad,zp_mm\n{bad},2.0,2.0,0.0,0.0,150.0\n"
        );
        match read_csv(text.as_bytes()).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_bad_header_and_garbage() {
        assert!(matches!(
            read_csv("a,b,c,d,e,f\n".as_bytes()).unwrap_err(),
            Error::Format { line: 1, .. }
        ));
        let text = "theta1_rad,theta2_rad,theta3_rad,beta_rad,gamma_rad,zp_mm\n2.0,x,2.0,0,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes()).unwrap_err(),
            Error::Format { line: 2, .. }
        ));
    }

    #[test]
    fn csv_file_round_trip() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate_uniform(&p, &WorkspaceBox::standard(&p), 5, 1).unwrap();
        save_csv(&ds, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap().samples, ds.samples);
        assert!(matches!(
            load_csv(dir.path().join("missing.csv")).unwrap_err(),
            Error::Io(_)
        ));
    }
}
