//! Boundary densities and conformal factors.
//!
//! Densities are piecewise constant per boundary edge: the discrete class of
//! nonnegative L-infinity weights on the boundary measure. It is closed under
//! zeroing on whole arcs, which keeps the zero-density-equals-Neumann
//! identification exact on entire edges.

use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{BoundaryArc, SurfaceMesh};

/// Per-loop mass conservation tolerance of the heat smoother (relative to the
/// loop length).
pub const HEAT_MASS_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("density has {got} values but the mesh has {want} boundary edges")]
    EdgeCountMismatch { got: usize, want: usize },
    #[error("density value at edge {0} is negative")]
    NegativeValue(usize),
    #[error("density vanishes identically")]
    IdenticallyZero,
    #[error("conformal factor has {got} values but the mesh has {want} vertices")]
    FactorCountMismatch { got: usize, want: usize },
    #[error("conformal factor value at vertex {0} is negative")]
    NegativeFactor(usize),
    #[error("smoothing time must be positive, got {0}")]
    BadTime(f64),
    #[error("invalid arc: {0}")]
    BadArc(String),
}

pub type Result<T> = std::result::Result<T, DensityError>;

/// Nonnegative piecewise-constant density on boundary edges, stored in the
/// mesh's canonical boundary-edge order (loop by loop, along each loop).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDensity {
    values: Vec<f64>,
}

impl BoundaryDensity {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self> {
        let want = mesh.boundary_edge_count();
        if values.len() != want {
            return Err(DensityError::EdgeCountMismatch {
                got: values.len(),
                want,
            });
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0 || !v.is_finite()) {
            return Err(DensityError::NegativeValue(i));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(DensityError::IdenticallyZero);
        }
        Ok(BoundaryDensity { values })
    }

    /// Builds a density by evaluating `f(loop, edge)` on every boundary edge.
    pub fn from_fn(mesh: &SurfaceMesh, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = mesh.boundary_edges().iter().map(|&(l, e, _, _, _)| f(l, e)).collect();
        Self::new(mesh, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(DensityError::NegativeValue(0));
        }
        Ok(BoundaryDensity {
            values: self.values.iter().map(|v| v * c).collect(),
        })
    }

    /// Offset of loop `l` into the flat value vector.
    pub fn loop_offset(mesh: &SurfaceMesh, l: usize) -> usize {
        (0..l).map(|i| mesh.boundary_loops()[i].len()).sum()
    }
}

/// Nonnegative vertex function modelling a conformal factor; zeros are allowed
/// only at isolated vertices.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    values: Vec<f64>,
}

impl ConformalFactor {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(DensityError::FactorCountMismatch {
                got: values.len(),
                want: mesh.vertex_count(),
            });
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0 || !v.is_finite()) {
            return Err(DensityError::NegativeFactor(i));
        }
        Ok(ConformalFactor { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The density identically one; recovers the unweighted Steklov problem.
pub fn uniform_density(mesh: &SurfaceMesh) -> BoundaryDensity {
    BoundaryDensity {
        values: vec![1.0; mesh.boundary_edge_count()],
    }
}

/// Weighted boundary length `sum_e rho_e len(e)`.
pub fn weighted_length(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> f64 {
    mesh.boundary_edges()
        .iter()
        .zip(rho.values.iter())
        .map(|(&(_, _, _, _, len), &v)| v * len)
        .sum()
}

/// `sum_e |rho1_e - rho2_e| len(e)`.
pub fn l1_distance(mesh: &SurfaceMesh, a: &BoundaryDensity, b: &BoundaryDensity) -> f64 {
    mesh.boundary_edges()
        .iter()
        .zip(a.values.iter().zip(b.values.iter()))
        .map(|(&(_, _, _, _, len), (&x, &y))| (x - y).abs() * len)
        .sum()
}

/// Outcome of [`heat_smooth`]: the smoothed density plus the loops that
/// carried no mass and therefore stayed identically zero.
#[derive(Debug, Clone)]
pub struct SmoothedDensity {
    pub density: BoundaryDensity,
    pub zero_loops: Vec<usize>,
}

/// Periodic Gaussian smoothing in arclength, loop by loop, with variance `2t`.
///
/// Each output edge value is the exact average over the edge of the wrapped
/// Gaussian convolution of the piecewise-constant input, so per-loop mass is
/// conserved up to the truncation of the wrap sum. Loops with zero total mass
/// stay zero and are reported.
pub fn heat_smooth(mesh: &SurfaceMesh, rho: &BoundaryDensity, t: f64) -> Result<SmoothedDensity> {
    if !(t > 0.0) {
        return Err(DensityError::BadTime(t));
    }
    check_match(mesh, rho)?;
    let mut values = Vec::with_capacity(rho.values.len());
    let mut zero_loops = Vec::new();
    let mut offset = 0;
    for (li, lp) in mesh.boundary_loops().iter().enumerate() {
        let n = lp.len();
        let lens = mesh.loop_edge_lengths(li);
        let total: f64 = lens.iter().sum();
        let vals = &rho.values[offset..offset + n];
        if vals.iter().all(|&v| v == 0.0) {
            zero_loops.push(li);
            values.extend(std::iter::repeat(0.0).take(n));
            offset += n;
            continue;
        }
        // Cumulative arclength positions of edge starts.
        let mut pos = Vec::with_capacity(n + 1);
        let mut s = 0.0;
        for &l in lens {
            pos.push(s);
            s += l;
        }
        pos.push(s);
        // Wrap far enough that the truncated tail is below machine noise.
        let reach = 12.0 * t.sqrt();
        let kmax = (reach / total).ceil() as i64 + 1;
        for e in 0..n {
            let (a, b) = (pos[e], pos[e + 1]);
            let mut acc = 0.0;
            for f in 0..n {
                if vals[f] == 0.0 {
                    continue;
                }
                let (c, d) = (pos[f], pos[f + 1]);
                let mut w = 0.0;
                for k in -kmax..=kmax {
                    let shift = k as f64 * total;
                    w += gauss_box(b - c + shift, t) - gauss_box(a - c + shift, t)
                        - gauss_box(b - d + shift, t)
                        + gauss_box(a - d + shift, t);
                }
                acc += vals[f] * w;
            }
            values.push(acc / lens[e]);
        }
        offset += n;
    }
    Ok(SmoothedDensity {
        density: BoundaryDensity { values },
        zero_loops,
    })
}

/// Second antiderivative of the heat kernel `exp(-z^2/(4t)) / sqrt(4 pi t)`;
/// the double integral of the kernel over two intervals is a 4-point
/// difference of this function.
fn gauss_box(z: f64, t: f64) -> f64 {
    0.5 * z * libm::erf(z / (2.0 * t.sqrt())) + (t / PI).sqrt() * (-z * z / (4.0 * t)).exp()
}

/// Sets the density to zero on the given arcs; everything else is unchanged.
pub fn zero_on_arcs(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    arcs: &[BoundaryArc],
) -> Result<BoundaryDensity> {
    check_match(mesh, rho)?;
    let mut values = rho.values.clone();
    for arc in arcs {
        let lp = mesh
            .boundary_loops()
            .get(arc.loop_idx)
            .ok_or_else(|| DensityError::BadArc(format!("no loop {}", arc.loop_idx)))?;
        let n = lp.len();
        if arc.edge_count > n {
            return Err(DensityError::BadArc(format!(
                "arc with {} edges on a loop of {} edges",
                arc.edge_count, n
            )));
        }
        let off = BoundaryDensity::loop_offset(mesh, arc.loop_idx);
        for i in 0..arc.edge_count {
            values[off + (arc.start_edge + i) % n] = 0.0;
        }
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(DensityError::IdenticallyZero);
    }
    Ok(BoundaryDensity { values })
}

/// Pushes a conformal factor onto the density: per boundary edge, the value is
/// multiplied by the average of the factor at the edge endpoints.
pub fn push_conformal(
    mesh: &SurfaceMesh,
    f: &ConformalFactor,
    rho: &BoundaryDensity,
) -> Result<BoundaryDensity> {
    check_match(mesh, rho)?;
    let values: Vec<f64> = mesh
        .boundary_edges()
        .iter()
        .zip(rho.values.iter())
        .map(|(&(_, _, a, b, _), &v)| v * 0.5 * (f.values[a] + f.values[b]))
        .collect();
    if values.iter().all(|&v| v == 0.0) {
        return Err(DensityError::IdenticallyZero);
    }
    Ok(BoundaryDensity { values })
}

/// Transports a density through a gluing: every boundary edge of the quotient
/// inherits the value of the source edge it came from. Edges on the glued arcs
/// have left the boundary and simply drop out.
pub fn descend_through_glue(
    source: &SurfaceMesh,
    rho: &BoundaryDensity,
    vertex_map: &[usize],
    quotient: &SurfaceMesh,
) -> Result<BoundaryDensity> {
    check_match(source, rho)?;
    let mut by_edge = std::collections::HashMap::new();
    for (&(_, _, a, b, _), &v) in source.boundary_edges().iter().zip(rho.values.iter()) {
        let (ma, mb) = (vertex_map[a], vertex_map[b]);
        by_edge.insert((ma.min(mb), ma.max(mb)), v);
    }
    let values: Vec<f64> = quotient
        .boundary_edges()
        .iter()
        .map(|&(_, _, a, b, _)| by_edge.get(&(a.min(b), a.max(b))).copied().unwrap_or(0.0))
        .collect();
    BoundaryDensity::new(quotient, values)
}

fn check_match(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Result<()> {
    let want = mesh.boundary_edge_count();
    if rho.values.len() != want {
        return Err(DensityError::EdgeCountMismatch {
            got: rho.values.len(),
            want,
        });
    }
    Ok(())
}
