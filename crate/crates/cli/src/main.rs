//! `rrur`: inverse/forward kinematics, dataset generation, training and
//! evaluation for the 3-RRUR neck brace.
//!
//! Angles on the command line and in printed output are degrees; lengths are
//! mm. Dataset and model files store radians.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rrur_core::data::{
    generate_grid, generate_trajectory, generate_uniform, load_csv, save_csv, Dataset, GridAxis, TrajectorySpec,
};
use rrur_core::estimator::{save, Registry, TrainOptions, Trained};
use rrur_core::eval::{compare, evaluate, write_prediction_csv, Report};
use rrur_core::fk::{fk_solve, FkProblem};
use rrur_core::ik::solve_ik;
use rrur_core::koopman::DEFAULT_SVD_THRESHOLD;
use rrur_core::rnn::{Optimizer, RnnConfig};
use rrur_core::workspace::{neutral_height, WorkspaceBox};
use rrur_core::{Error, RobotParams};

const DEFAULT_SEED: u64 = 7;

#[derive(Parser, Debug)]
#[command(
    name = "rrur",
    version,
    about = "Kinematics and learned forward kinematics for a 3-RRUR parallel neck brace",
    long_about = "Kinematics and learned forward kinematics for a 3-RRUR parallel neck brace.\n\n\
                  Angles on the command line and in printed output are in degrees, lengths in mm. \
                  Dataset CSVs and model files store angles in radians.\n\n\
                  Exit status: 0 on success, 1 on domain errors (one `error=...` line on stderr), \
                  2 on usage errors."
)]
struct Cli {
    /// Robot parameter file (JSON); defaults to the bundled prototype.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,

    /// Seed for random sampling and RNN initialisation [default: 7].
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Motor angles for a pose; prints one line per chain.
    Ik {
        /// Platform height z_p in mm.
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        /// Flexion angle in degrees.
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        /// Lateral bending angle in degrees.
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
    },
    /// Pose for motor angles by Newton iteration.
    Fk {
        /// Motor angles θ1,θ2,θ3 in degrees.
        #[arg(long, value_name = "DEG,DEG,DEG", allow_hyphen_values = true)]
        theta: Triple,
        /// Starting pose z_p,β,γ (mm, degrees); defaults to the neutral pose.
        #[arg(long, value_name = "MM,DEG,DEG", allow_hyphen_values = true)]
        guess: Option<Triple>,
    },
    /// Generate a dataset CSV.
    #[command(subcommand)]
    GenData(GenData),
    /// Train an estimator and write its model file.
    #[command(subcommand)]
    Train(Train),
    /// Predict poses for the motor angles of a dataset.
    Predict {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Output CSV.
        #[arg(short = 'o', long = "out", value_name = "CSV")]
        out: PathBuf,
    },
    /// Score one model on a test set; writes report.txt and pred.csv.
    Eval {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        test: PathBuf,
        #[arg(short = 'o', long = "out", value_name = "DIR")]
        out: PathBuf,
    },
    /// Score a Koopman and an RNN model side by side.
    Compare {
        #[arg(long, value_name = "JSON")]
        koopman: PathBuf,
        #[arg(long, value_name = "JSON")]
        rnn: PathBuf,
        #[arg(long, value_name = "CSV")]
        test: PathBuf,
        #[arg(short = 'o', long = "out", value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum GenData {
    /// Regular grid of poses; unreachable points are skipped.
    Grid {
        /// z_p range in mm as MIN:MAX:STEP, or a single value.
        #[arg(long, allow_hyphen_values = true)]
        z: Range,
        /// β range in degrees as MIN:MAX:STEP, or a single value.
        #[arg(long, allow_hyphen_values = true)]
        beta: Range,
        /// γ range in degrees as MIN:MAX:STEP, or a single value.
        #[arg(long, allow_hyphen_values = true)]
        gamma: Range,
        #[arg(short = 'o', long = "out", value_name = "CSV")]
        out: PathBuf,
    },
    /// Periodic trajectory β = B·sin, γ = G·cos, z_p = z0 + A_z·sin.
    Traj {
        /// B in degrees.
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        amp_beta: f64,
        /// G in degrees.
        #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
        amp_gamma: f64,
        /// A_z in mm.
        #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
        amp_z: f64,
        /// Centre height in mm [default: neutral height].
        #[arg(long)]
        z0: Option<f64>,
        /// Steps per period.
        #[arg(long, default_value_t = 401)]
        period: usize,
        /// Number of steps.
        #[arg(long, default_value_t = 802)]
        len: usize,
        #[arg(short = 'o', long = "out", value_name = "CSV")]
        out: PathBuf,
    },
    /// Seeded uniform draws from a pose box.
    Uniform {
        #[arg(long)]
        count: usize,
        #[arg(long = "box", value_enum, default_value_t = BoxKind::Regular)]
        region: BoxKind,
        #[arg(short = 'o', long = "out", value_name = "CSV")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BoxKind {
    /// z_p ∈ [0.90, 0.99]·top, β ∈ [−6°, 8°], γ ∈ [−10°, 10°].
    Regular,
    /// z_p ∈ [0.7, 1.0]·top, β, γ ∈ [−20°, 20°].
    Standard,
}

#[derive(Subcommand, Debug)]
enum Train {
    /// EDMD fit of the Koopman matrix.
    Koopman {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Relative singular-value cutoff for the pseudoinverse.
        #[arg(long, default_value_t = DEFAULT_SVD_THRESHOLD)]
        svd_tol: f64,
        #[command(flatten)]
        output: ModelOutput,
    },
    /// Elman RNN trained with backpropagation.
    Rnn {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, value_name = "CSV")]
        val: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Overrides the global --seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        seq_len: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
        optimizer: OptimizerArg,
        #[command(flatten)]
        output: ModelOutput,
    },
}

#[derive(Args, Debug)]
struct ModelOutput {
    #[arg(short = 'o', long = "out", value_name = "JSON")]
    out: PathBuf,
    /// Store the measured training time in the model file. Off by default so
    /// that repeated runs write identical files.
    #[arg(long)]
    record_time: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug)]
struct Triple([f64; 3]);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated numbers, got '{s}'"));
        }
        let mut out = [0.0; 3];
        for (slot, p) in out.iter_mut().zip(&parts) {
            *slot = parse_finite(p)?;
        }
        Ok(Triple(out))
    }
}

/// `MIN:MAX:STEP` or a single value.
#[derive(Clone, Copy, Debug)]
struct Range {
    min: f64,
    max: f64,
    step: Option<f64>,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => {
                let v = parse_finite(v)?;
                Ok(Range {
                    min: v,
                    max: v,
                    step: None,
                })
            }
            [a, b, c] => {
                let (min, max, step) = (parse_finite(a)?, parse_finite(b)?, parse_finite(c)?);
                if max < min || step <= 0.0 {
                    return Err(format!("need MIN <= MAX and STEP > 0, got '{s}'"));
                }
                Ok(Range {
                    min,
                    max,
                    step: Some(step),
                })
            }
            _ => Err(format!("expected MIN:MAX:STEP or a single value, got '{s}'")),
        }
    }
}

impl Range {
    fn axis(self, factor: f64) -> rrur_core::Result<GridAxis> {
        match self.step {
            None => Ok(GridAxis::point(self.min * factor)),
            Some(step) => Ok(GridAxis::new(self.min, self.max, step)?.scaled(factor)),
        }
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a finite number")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> rrur_core::Result<()> {
    let params = match &cli.params {
        Some(path) => RobotParams::load(path)?,
        None => RobotParams::prototype(),
    };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Ik { z, beta, gamma } => ik(&params, z, beta, gamma),
        Command::Fk { theta, guess } => fk(&params, theta.0, guess.map(|g| g.0)),
        Command::GenData(cmd) => gen_data(&params, seed, cmd),
        Command::Train(cmd) => train(&params, seed, cmd),
        Command::Predict { model, data, out } => predict(&params, &model, &data, &out),
        Command::Eval { model, test, out } => {
            let registry = Registry::with_defaults(params);
            let trained = load_model(&registry, &model)?;
            let test = load_csv(&test)?;
            let kind = trained.estimator.kind().to_string();
            let ev = evaluate(&params, &kind, trained.estimator.as_ref(), trained.train_time_s, &test)?;
            finish_report(&params, Report::single(ev), &test, &out)
        }
        Command::Compare {
            koopman,
            rnn,
            test,
            out,
        } => {
            let registry = Registry::with_defaults(params);
            let k = load_model(&registry, &koopman)?;
            let r = load_model(&registry, &rnn)?;
            let test = load_csv(&test)?;
            let report = compare(&params, ("koopman", &k), ("rnn", &r), &test)?;
            finish_report(&params, report, &test, &out)
        }
    }
}

fn ik(params: &RobotParams, z: f64, beta: f64, gamma: f64) -> rrur_core::Result<()> {
    let sol = solve_ik(params, z, beta.to_radians(), gamma.to_radians())?;
    for c in &sol.chains {
        println!(
            "chain={} theta_deg={:.12} phi_deg={:.12} z1_mm={:.9} z2_mm={:.9}",
            c.chain,
            c.theta.to_degrees(),
            c.phi.to_degrees(),
            c.q_planar[0],
            c.q_planar[1]
        );
    }
    Ok(())
}

fn fk(params: &RobotParams, theta: [f64; 3], guess: Option<[f64; 3]>) -> rrur_core::Result<()> {
    let mut problem = FkProblem::new(*params, theta.map(f64::to_radians));
    if let Some([z, b, g]) = guess {
        let start = solve_ik(params, z, b.to_radians(), g.to_radians())?;
        problem = problem.with_guess(start.unknowns());
    }
    let sol = fk_solve(&problem)?;
    let p = &sol.pose;
    println!(
        "z_p_mm={:.9} beta_deg={:.12} gamma_deg={:.12} x_p_mm={:.9} y_p_mm={:.9}",
        p.z_p(),
        p.beta().to_degrees(),
        p.gamma().to_degrees(),
        p.x_p(),
        p.y_p()
    );
    println!(
        "iterations={} residual_norm={:.3e} branch_valid={}",
        sol.iterations, sol.residual_norm, sol.branch_valid
    );
    Ok(())
}

fn gen_data(params: &RobotParams, seed: u64, cmd: GenData) -> rrur_core::Result<()> {
    let deg = 1f64.to_radians();
    let (dataset, out) = match cmd {
        GenData::Grid { z, beta, gamma, out } => {
            let ds = generate_grid(params, z.axis(1.0)?, beta.axis(deg)?, gamma.axis(deg)?)?;
            (ds, out)
        }
        GenData::Traj {
            amp_beta,
            amp_gamma,
            amp_z,
            z0,
            period,
            len,
            out,
        } => {
            let z0 = match z0 {
                Some(z) => z,
                None => neutral_height(params).ok_or_else(|| {
                    Error::InvalidArgument("no solvable neutral height; pass --z0".into())
                })?,
            };
            let spec = TrajectorySpec {
                amp_beta: amp_beta * deg,
                amp_gamma: amp_gamma * deg,
                amp_z,
                z0,
                period,
                len,
            };
            (generate_trajectory(params, &spec)?, out)
        }
        GenData::Uniform { count, region, out } => {
            let bounds = match region {
                BoxKind::Regular => WorkspaceBox::regular(params),
                BoxKind::Standard => WorkspaceBox::standard(params),
            };
            (generate_uniform(params, &bounds, count, seed)?, out)
        }
    };
    let residual = dataset.max_residual(params)?;
    save_csv(&dataset, &out)?;
    let skipped = match &dataset.provenance {
        rrur_core::data::Provenance::Grid { skipped, .. } => *skipped,
        rrur_core::data::Provenance::Uniform { rejected, .. } => *rejected,
        _ => 0,
    };
    println!(
        "samples={} skipped={} max_residual={:.3e} out={}",
        dataset.len(),
        skipped,
        residual,
        out.display()
    );
    Ok(())
}

fn train(params: &RobotParams, global_seed: u64, cmd: Train) -> rrur_core::Result<()> {
    let registry = Registry::with_defaults(*params);
    let (trained, output) = match cmd {
        Train::Koopman { data, svd_tol, output } => {
            let options = TrainOptions {
                svd_threshold: svd_tol,
                ..TrainOptions::default()
            };
            let train = load_csv(&data)?;
            (registry.train("koopman", &train, None, &options)?, output)
        }
        Train::Rnn {
            data,
            val,
            epochs,
            hidden,
            seed,
            lr,
            batch,
            seq_len,
            optimizer,
            output,
        } => {
            let rnn = RnnConfig {
                hidden_size: hidden,
                seq_len,
                epochs,
                batch_size: batch,
                learning_rate: lr,
                optimizer: match optimizer {
                    OptimizerArg::Sgd => Optimizer::Sgd,
                    OptimizerArg::Adam => Optimizer::Adam,
                },
                seed: seed.unwrap_or(global_seed),
            };
            let options = TrainOptions {
                rnn,
                ..TrainOptions::default()
            };
            let (train, val) = (load_csv(&data)?, load_csv(&val)?);
            (registry.train("rnn", &train, Some(&val), &options)?, output)
        }
    };
    std::fs::write(&output.out, save(&trained, output.record_time)?)?;
    println!(
        "model={} train_time_s={:.3} out={}",
        trained.estimator.kind(),
        trained.train_time_s.unwrap_or(0.0),
        output.out.display()
    );
    Ok(())
}

fn load_model(registry: &Registry, path: &Path) -> rrur_core::Result<Trained> {
    registry.load(&std::fs::read_to_string(path)?)
}

fn predict(params: &RobotParams, model: &Path, data: &Path, out: &Path) -> rrur_core::Result<()> {
    let registry = Registry::with_defaults(*params);
    let trained = load_model(&registry, model)?;
    let data: Dataset = load_csv(data)?;
    let thetas = data.inputs();
    let pred = trained.estimator.predict_all(&thetas)?;
    write_prediction_csv(params, &thetas, &pred, BufWriter::new(File::create(out)?))?;
    println!("samples={} out={}", pred.len(), out.display());
    Ok(())
}

fn finish_report(params: &RobotParams, report: Report, test: &Dataset, out: &Path) -> rrur_core::Result<()> {
    report.write_dir(params, test, out)?;
    print!("{}", report.render());
    Ok(())
}
