//! Projected gradient ascent for the normalized first eigenvalue over
//! boundary densities in a fixed conformal class, plus free-boundary
//! diagnostics at the optimum.
//!
//! The weighted boundary length is pinned to 1 by rescaling: the functional
//! is 0-homogeneous in the density, so the projection is exact. Maximizers
//! generically carry a multiple first eigenvalue, so stalling inside a
//! cluster is reported as success-with-flag rather than failure.

use thiserror::Error;

use crate::density::{self, BoundaryDensity};
use crate::mesh::SurfaceMesh;
use crate::spectral::{self, SpectralError};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("projection produced an identically zero density")]
    ProjectionCollapsed,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Density(#[from] crate::density::DensityError),
}

pub type Result<T> = std::result::Result<T, OptimizeError>;

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial step size for the backtracking line search.
    pub step: f64,
    /// Stop when the projected-gradient norm falls below this.
    pub tol_grad: f64,
    /// Relative gap threshold for eigenvalue clustering.
    pub gap_tol: f64,
    /// Minimum density value; 0 lets densities vanish (edges leave the
    /// active set, mirroring the Neumann fold).
    pub floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 200,
            step: 0.5,
            tol_grad: 1e-6,
            gap_tol: 1e-6,
            floor: 0.0,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.step > 0.0) || !(self.tol_grad > 0.0) || !(self.gap_tol > 0.0) {
            return Err(OptimizeError::BadConfig(
                "max_iters, step, tol_grad and gap_tol must be positive".into(),
            ));
        }
        if self.floor < 0.0 {
            return Err(OptimizeError::BadConfig("floor must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected-gradient norm fell below `tol_grad`.
    GradientTolerance,
    /// Iteration budget exhausted.
    MaxIters,
    /// Line search could not improve; expected signature of a maximizer with
    /// a clustered first eigenvalue.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub sigma_bar: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub multiplicity: usize,
}

#[derive(Debug)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub final_density: BoundaryDensity,
    pub termination: Termination,
}

impl OptimizationTrace {
    pub fn final_sigma_bar(&self) -> f64 {
        self.records.last().map(|r| r.sigma_bar).unwrap_or(f64::NAN)
    }

    pub fn final_multiplicity(&self) -> usize {
        self.records.last().map(|r| r.multiplicity).unwrap_or(0)
    }
}

/// Clamps to the floor and rescales to unit weighted length.
pub fn project(mesh: &SurfaceMesh, values: &[f64], floor: f64) -> Result<BoundaryDensity> {
    let mut vals: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    // Rescaling can push clamped values back under a positive floor; a few
    // rounds settle it.
    for _ in 0..16 {
        let rho = BoundaryDensity::new(mesh, vals.clone()).map_err(|_| OptimizeError::ProjectionCollapsed)?;
        let l = density::weighted_length(mesh, &rho);
        if l <= 0.0 {
            return Err(OptimizeError::ProjectionCollapsed);
        }
        vals.iter_mut().for_each(|v| *v /= l);
        if vals.iter().all(|&v| v >= floor * (1.0 - 1e-12)) {
            break;
        }
        vals.iter_mut().for_each(|v| *v = v.max(floor));
    }
    BoundaryDensity::new(mesh, vals).map_err(|_| OptimizeError::ProjectionCollapsed)
}

const ARMIJO_ACCEPT: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MIN_STEP_FACTOR: f64 = 1e-10;
const EIGENPAIR_BUDGET: usize = 8;

/// Projected gradient ascent on the normalized first eigenvalue.
pub fn maximize_density(
    mesh: &SurfaceMesh,
    rho0: &BoundaryDensity,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    let mut rho = project(mesh, rho0.values(), cfg.floor)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        let (sigma_bar, mult, grad) = evaluate(mesh, &rho, cfg)?;
        let pg = projected_direction(&rho, &grad, cfg.floor);
        let grad_norm = pg.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut record = IterationRecord {
            iter,
            sigma_bar,
            grad_norm,
            step: 0.0,
            multiplicity: mult,
        };
        if grad_norm <= cfg.tol_grad {
            termination = Termination::GradientTolerance;
            records.push(record);
            break;
        }
        // Backtracking Armijo line search on sigma_bar.
        let mut step = cfg.step;
        let mut accepted = None;
        while step >= cfg.step * MIN_STEP_FACTOR {
            let trial_vals: Vec<f64> = rho
                .values()
                .iter()
                .zip(pg.iter())
                .map(|(r, g)| r + step * g)
                .collect();
            match project(mesh, &trial_vals, cfg.floor) {
                Ok(trial) => {
                    let trial_sigma = sigma_bar_of(mesh, &trial)?;
                    if trial_sigma >= sigma_bar + ARMIJO_ACCEPT * step * grad_norm * grad_norm {
                        accepted = Some((trial, trial_sigma));
                        break;
                    }
                }
                Err(_) => {}
            }
            step *= ARMIJO_SHRINK;
        }
        match accepted {
            Some((trial, _)) => {
                record.step = step;
                records.push(record);
                rho = trial;
            }
            None => {
                termination = Termination::Stalled;
                records.push(record);
                break;
            }
        }
    }
    if records.last().map(|r| r.iter) != Some(records.len().saturating_sub(1)) {
        // unreachable bookkeeping guard
    }
    if termination == Termination::MaxIters {
        // Record the final state reached by the last accepted step.
        let (sigma_bar, mult, grad) = evaluate(mesh, &rho, cfg)?;
        let pg = projected_direction(&rho, &grad, cfg.floor);
        records.push(IterationRecord {
            iter: cfg.max_iters,
            sigma_bar,
            grad_norm: pg.iter().map(|g| g * g).sum::<f64>().sqrt(),
            step: 0.0,
            multiplicity: mult,
        });
    }
    Ok(OptimizationTrace {
        records,
        final_density: rho,
        termination,
    })
}

fn sigma_bar_of(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Result<f64> {
    let na = spectral::active_set(mesh, rho).len();
    let spec = spectral::steklov_spectrum(mesh, rho, 2.min(na))?;
    Ok(spectral::normalized_eigenvalues(&spec, mesh, rho)[1])
}

/// One full evaluation: normalized eigenvalue, cluster size, ascent direction.
/// With a clustered first eigenvalue the direction is the subgradient choice:
/// the cluster member whose gradient has the best worst-case directional
/// derivative across the cluster.
fn evaluate(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    cfg: &OptimizerConfig,
) -> Result<(f64, usize, Vec<f64>)> {
    let na = spectral::active_set(mesh, rho).len();
    let count = EIGENPAIR_BUDGET.min(na);
    let (spec, dtn) = spectral::steklov_spectrum_with_operator(mesh, rho, count)?;
    let sigma_bar = spectral::normalized_eigenvalues(&spec, mesh, rho)[1];
    let mult = spectral::sigma1_cluster_size(&spec.eigenvalues, cfg.gap_tol);
    let grad = if mult <= 1 {
        spectral::gradient_from_trace(mesh, rho, &dtn, &spec, 1)
    } else {
        let cluster: Vec<Vec<f64>> = (1..=mult.min(count - 1))
            .map(|j| spectral::gradient_from_trace(mesh, rho, &dtn, &spec, j))
            .collect();
        // Pick the candidate maximizing the minimum inner product with every
        // cluster gradient: the safest ascent direction for the min of the
        // cluster. Heuristic, documented as such.
        let score = |g: &[f64]| -> f64 {
            cluster
                .iter()
                .map(|h| g.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        };
        cluster
            .iter()
            .max_by(|a, b| score(a).partial_cmp(&score(b)).unwrap())
            .unwrap()
            .clone()
    };
    Ok((sigma_bar, mult, grad))
}

/// Zeroes descent components that push a floored edge further into the floor.
fn projected_direction(rho: &BoundaryDensity, grad: &[f64], floor: f64) -> Vec<f64> {
    rho.values()
        .iter()
        .zip(grad.iter())
        .map(|(&r, &g)| if r <= floor && g < 0.0 { 0.0 } else { g })
        .collect()
}

/// Cluster size of the first eigenvalue under a relative gap threshold; the
/// candidate ambient dimension for a free boundary immersion.
pub fn multiplicity_report(spectrum: &spectral::SteklovSpectrum, gap_tol: f64) -> usize {
    spectral::sigma1_cluster_size(&spectrum.eigenvalues, gap_tol)
}

/// Free-boundary-immersion diagnostic from the first-eigenvalue cluster.
#[derive(Debug, Clone)]
pub struct ImmersionReport {
    /// Cluster size of the first eigenvalue: the candidate ambient dimension.
    pub dimension: usize,
    /// Max deviation of the rescaled coordinate-candidate norm from 1 on the
    /// boundary; `None` when the cluster is simple (no candidate exists).
    pub deviation: Option<f64>,
}

/// Assembles the first-eigenfunction boundary traces, rescales their square
/// sum to best-fit 1 on the boundary, and reports the residual deviation.
pub fn candidate_immersion(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    gap_tol: f64,
) -> Result<ImmersionReport> {
    let na = spectral::active_set(mesh, rho).len();
    let spec = spectral::steklov_spectrum(mesh, rho, EIGENPAIR_BUDGET.min(na))?;
    let n = spectral::sigma1_cluster_size(&spec.eigenvalues, gap_tol);
    if n <= 1 {
        return Ok(ImmersionReport {
            dimension: n,
            deviation: None,
        });
    }
    let rows = spec.active_set.len();
    let q: Vec<f64> = (0..rows)
        .map(|x| (1..=n).map(|j| spec.eigenvectors[(x, j)].powi(2)).sum())
        .collect();
    // Least-squares fit of c^2 in c^2 * q ~ 1.
    let num: f64 = q.iter().sum();
    let den: f64 = q.iter().map(|v| v * v).sum();
    let c2 = num / den;
    let deviation = q
        .iter()
        .map(|&v| ((c2 * v).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ImmersionReport {
        dimension: n,
        deviation: Some(deviation),
    })
}
