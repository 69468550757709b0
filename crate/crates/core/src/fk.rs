//! Numerical forward kinematics by damped Newton iteration on the six chain
//! constraints. This is the reference the learned estimators are judged
//! against, not a fast path.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{derive_translation, planar_point, ChainCoefficients, ChainId, Pose};
use crate::ik::{solve_pose, theta_admissible};
use crate::params::RobotParams;
use crate::workspace;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Central-difference step, in each unknown's own unit (rad or mm).
pub const FD_STEP: f64 = 1e-6;
const MAX_HALVINGS: usize = 20;
const MAX_CONDITION: f64 = 1e12;

/// Unknown vector layout: `(phi1, phi2, phi3, z_p, beta, gamma)`.
pub type Unknowns = [f64; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct FkProblem {
    pub params: RobotParams,
    pub theta: [f64; 3],
    pub initial_guess: Unknowns,
    pub tol: f64,
    pub max_iter: usize,
}

impl FkProblem {
    /// Problem seeded from the neutral configuration.
    pub fn new(params: RobotParams, theta: [f64; 3]) -> Self {
        let initial_guess = neutral_guess(&params);
        FkProblem {
            params,
            theta,
            initial_guess,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_guess(mut self, guess: Unknowns) -> Self {
        self.initial_guess = guess;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkSolution {
    pub phi: [f64; 3],
    pub pose: Pose,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Residual norm at the guess and after every accepted step.
    pub residual_history: Vec<f64>,
    /// All motor angles are admissible and inverse kinematics of the returned
    /// pose reproduces them to 1e-6.
    pub branch_valid: bool,
}

impl FkSolution {
    pub fn unknowns(&self) -> Unknowns {
        [
            self.phi[0],
            self.phi[1],
            self.phi[2],
            self.pose.z_p(),
            self.pose.beta(),
            self.pose.gamma(),
        ]
    }
}

/// Unknowns of the neutral pose, a serviceable default starting point.
pub fn neutral_guess(params: &RobotParams) -> Unknowns {
    let z0 = workspace::neutral_height(params).unwrap_or(params.reach());
    match crate::ik::solve_ik(params, z0, 0.0, 0.0) {
        Ok(sol) => sol.unknowns(),
        Err(_) => [0.0, 0.0, 0.0, z0, 0.0, 0.0],
    }
}

pub fn fk_residual(params: &RobotParams, theta: &[f64; 3], u: &Unknowns) -> [f64; 6] {
    let pose = derive_translation(params, u[3], u[4], u[5]);
    let mut out = [0.0; 6];
    for chain in ChainId::ALL {
        let i = chain.index();
        let [z1, z2] = planar_point(params, theta[i], u[i]);
        let [f1, f2] = ChainCoefficients::unchecked(params, &pose, chain).residual(z1, z2);
        out[2 * i] = f1;
        out[2 * i + 1] = f2;
    }
    out
}

fn residual_vec(params: &RobotParams, theta: &[f64; 3], u: &Unknowns) -> Vector6<f64> {
    Vector6::from(fk_residual(params, theta, u))
}

/// Central-difference Jacobian of the residual with respect to the unknowns.
pub fn fd_jacobian(params: &RobotParams, theta: &[f64; 3], u: &Unknowns, step: f64) -> Matrix6<f64> {
    let mut jac = Matrix6::zeros();
    for k in 0..6 {
        let mut plus = *u;
        let mut minus = *u;
        plus[k] += step;
        minus[k] -= step;
        let col = (residual_vec(params, theta, &plus) - residual_vec(params, theta, &minus))
            / (2.0 * step);
        jac.set_column(k, &col);
    }
    jac
}

pub fn fk_solve(problem: &FkProblem) -> Result<FkSolution> {
    let FkProblem {
        params,
        theta,
        initial_guess,
        tol,
        max_iter,
    } = problem;
    if !(*tol > 0.0) || *max_iter == 0 {
        return Err(Error::InvalidArgument("tol must be > 0 and max_iter >= 1".into()));
    }
    if initial_guess.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite guess or motor angle".into()));
    }

    let mut u = *initial_guess;
    let mut r = residual_vec(params, theta, &u);
    let mut norm = r.norm();
    let mut history = vec![norm];
    let mut iterations = 0;

    while norm >= *tol {
        if iterations == *max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual_norm: norm,
                best: u,
            });
        }
        let jac = fd_jacobian(params, theta, &u, FD_STEP);
        let sv = jac.singular_values();
        let condition = sv.max() / sv.min();
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::SingularJacobian {
                condition,
                iterate: u,
            });
        }
        let Some(step) = jac.lu().solve(&(-r)) else {
            return Err(Error::SingularJacobian {
                condition: f64::INFINITY,
                iterate: u,
            });
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = u;
            for (t, s) in trial.iter_mut().zip(step.iter()) {
                *t += scale * s;
            }
            let trial_r = residual_vec(params, theta, &trial);
            let trial_norm = trial_r.norm();
            if trial_norm < norm {
                accepted = Some((trial, trial_r, trial_norm));
                break;
            }
            scale *= 0.5;
        }
        let Some((next_u, next_r, next_norm)) = accepted else {
            return Err(Error::NoConvergence {
                iterations,
                residual_norm: norm,
                best: u,
            });
        };
        u = next_u;
        r = next_r;
        norm = next_norm;
        history.push(norm);
        iterations += 1;
    }

    let pose = derive_translation(params, u[3], u[4], u[5]);
    let branch_valid = theta.iter().all(|&t| theta_admissible(t))
        && solve_pose(params, &pose)
            .map(|sol| {
                sol.thetas()
                    .iter()
                    .zip(theta.iter())
                    .all(|(a, b)| (a - b).abs() < 1e-6)
            })
            .unwrap_or(false);
    Ok(FkSolution {
        phi: [u[0], u[1], u[2]],
        pose,
        iterations,
        residual_norm: norm,
        residual_history: history,
        branch_valid,
    })
}

/// Solves along a sequence of motor angles, warm-starting each solve from
/// the previous solution.
pub fn fk_trajectory(
    params: &RobotParams,
    thetas: &[[f64; 3]],
    seed_guess: Unknowns,
) -> Result<Vec<FkSolution>> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("empty motor-angle sequence".into()));
    }
    let mut out: Vec<FkSolution> = Vec::with_capacity(thetas.len());
    let mut guess = seed_guess;
    for (step, theta) in thetas.iter().enumerate() {
        let problem = FkProblem {
            params: *params,
            theta: *theta,
            initial_guess: guess,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        };
        let sol = fk_solve(&problem).map_err(|e| e.at_step(step))?;
        guess = sol.unknowns();
        out.push(sol);
    }
    Ok(out)
}
