//! Discrete Steklov eigenproblem.
//!
//! Piecewise-linear Dirichlet energy (cotangent weights) over the whole mesh,
//! a consistent 1D boundary mass for the density-weighted boundary measure,
//! Schur-complement reduction to a discrete Dirichlet-to-Neumann operator on
//! the active boundary vertices, and a dense symmetric generalized solve.
//!
//! Boundary vertices all of whose incident boundary edges carry zero density
//! are folded into the interior block: a zero Steklov density is a natural
//! Neumann condition, and the fold keeps the boundary mass positive definite
//! on the active set.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use sprs::{CsMat, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};
use thiserror::Error;

use crate::density::{self, BoundaryDensity};
use crate::mesh::SurfaceMesh;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("triangle {0} is degenerate; cannot assemble")]
    DegenerateElement(usize),
    #[error("density mismatch: {0}")]
    Density(#[from] crate::density::DensityError),
    #[error("active boundary set is empty")]
    EmptyActiveSet,
    #[error("interior elimination failed: {0}")]
    InteriorSolve(String),
    #[error("requested {want} eigenpairs but the active set has {have} vertices")]
    CountTooLarge { want: usize, have: usize },
    #[error("boundary mass is not positive definite on the active set (internal bug)")]
    MassNotPositive,
    #[error("first eigenvalue is degenerate (gap {gap:.3e} <= tol {tol:.3e}); gradient refused")]
    DegenerateEigenvalue { gap: f64, tol: f64 },
    #[error("spectrum must contain sigma_0, sigma_1 and sigma_2 for this operation")]
    NotEnoughEigenpairs,
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Sparse symmetric Dirichlet-energy matrix over all vertices. Positive
/// semidefinite with the constants in its kernel.
pub struct StiffnessMatrix {
    mat: CsMat<f64>,
}

impl StiffnessMatrix {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// `v^T K v`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&val, (i, j)) in self.mat.iter() {
            acc += v[i] * val * v[j];
        }
        acc
    }
}

/// Symmetric boundary mass matrix for the measure `rho dsigma`, supported on
/// boundary vertices joined by positive-density edges.
pub struct BoundaryMass {
    mat: CsMat<f64>,
    total: f64,
}

impl BoundaryMass {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.mat
    }

    /// Sum of all entries; equals the weighted boundary length.
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Dense Dirichlet-to-Neumann matrix on the active boundary vertices, plus
/// the interior factorization needed to extend boundary data harmonically.
pub struct DtnOperator {
    matrix: DMatrix<f64>,
    active: Vec<usize>,
    interior: Vec<usize>,
    factor: InteriorFactor,
    /// Interior-by-active coupling block of the stiffness matrix.
    k_ia: CsMat<f64>,
}

/// Factorization of the interior stiffness block. The LDL path needs at least
/// a 2x2 system; a single interior vertex is inverted directly.
enum InteriorFactor {
    Empty,
    Scalar(f64),
    Ldl(LdlNumeric<f64, usize>),
}

impl InteriorFactor {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            InteriorFactor::Empty => Vec::new(),
            InteriorFactor::Scalar(d) => vec![rhs[0] / d],
            InteriorFactor::Ldl(f) => f.solve(rhs),
        }
    }
}

impl DtnOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Extends active-set boundary data to the whole mesh by the discrete
    /// harmonic extension (with natural Neumann conditions on folded boundary
    /// vertices). Returns a full vertex vector.
    pub fn extend(&self, trace: &DVector<f64>, vertex_count: usize) -> Vec<f64> {
        let mut full = vec![0.0; vertex_count];
        for (k, &v) in self.active.iter().enumerate() {
            full[v] = trace[k];
        }
        if !self.interior.is_empty() {
            let mut rhs = vec![0.0; self.interior.len()];
            for (&val, (i, j)) in self.k_ia.iter() {
                rhs[i] -= val * trace[j];
            }
            let sol = self.factor.solve(&rhs);
            for (k, &v) in self.interior.iter().enumerate() {
                full[v] = sol[k];
            }
        }
        full
    }
}

/// Steklov spectrum restricted to the active boundary vertices. Eigenvectors
/// are boundary traces, orthonormal in the boundary-mass inner product, with
/// the sign fixed so the first entry of largest magnitude is positive.
pub struct SteklovSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the trace of eigenfunction `j` on the active set.
    pub eigenvectors: DMatrix<f64>,
    /// Global vertex ids of the active set, ascending.
    pub active_set: Vec<usize>,
    /// Per-pair residuals `||K u - sigma M u||_2`.
    pub residuals: Vec<f64>,
}

impl SteklovSpectrum {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Trace value of eigenfunction `j` at a global vertex, if active.
    pub fn trace_at(&self, j: usize, vertex: usize) -> Option<f64> {
        self.active_set
            .binary_search(&vertex)
            .ok()
            .map(|k| self.eigenvectors[(k, j)])
    }
}

/// Assembles the cotangent-weight Dirichlet energy from the intrinsic metric.
pub fn assemble_stiffness(mesh: &SurfaceMesh) -> Result<StiffnessMatrix> {
    let n = mesh.vertex_count();
    let mut tri = TriMat::new((n, n));
    for (ti, t) in mesh.triangles().iter().enumerate() {
        let l = mesh.triangle_lengths(ti);
        let area = mesh.triangle_area(ti);
        if !(area > 0.0) {
            return Err(SpectralError::DegenerateElement(ti));
        }
        for k in 0..3 {
            let (u, v) = (t[(k + 1) % 3], t[(k + 2) % 3]);
            let (a, b, c) = (l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
            // cot of the angle at corner k, opposite the edge (u, v).
            let cot = (b * b + c * c - a * a) / (4.0 * area);
            let w = 0.5 * cot;
            tri.add_triplet(u, v, -w);
            tri.add_triplet(v, u, -w);
            tri.add_triplet(u, u, w);
            tri.add_triplet(v, v, w);
        }
    }
    Ok(StiffnessMatrix {
        mat: tri.to_csr(),
    })
}

/// Assembles the consistent 1D boundary mass `sum_e rho_e len(e) [[1/3,1/6],[1/6,1/3]]`.
pub fn assemble_boundary_mass(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Result<BoundaryMass> {
    let n = mesh.vertex_count();
    let edges = mesh.boundary_edges();
    if edges.len() != rho.values().len() {
        return Err(SpectralError::Density(
            crate::density::DensityError::EdgeCountMismatch {
                got: rho.values().len(),
                want: edges.len(),
            },
        ));
    }
    let mut tri = TriMat::new((n, n));
    let mut total = 0.0;
    for (&(_, _, a, b, len), &r) in edges.iter().zip(rho.values().iter()) {
        if r == 0.0 {
            continue;
        }
        let m = r * len;
        total += m;
        tri.add_triplet(a, a, m / 3.0);
        tri.add_triplet(b, b, m / 3.0);
        tri.add_triplet(a, b, m / 6.0);
        tri.add_triplet(b, a, m / 6.0);
    }
    Ok(BoundaryMass {
        mat: tri.to_csr(),
        total,
    })
}

/// Boundary vertices incident to at least one positive-density boundary edge,
/// ascending. This is where the discrete eigenproblem lives.
pub fn active_set(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Vec<usize> {
    let mut active: Vec<usize> = mesh
        .boundary_edges()
        .iter()
        .zip(rho.values().iter())
        .filter(|(_, &r)| r > 0.0)
        .flat_map(|(&(_, _, a, b, _), _)| [a, b])
        .collect();
    active.sort_unstable();
    active.dedup();
    active
}

/// Schur-complement condensation of the stiffness matrix onto `active`:
/// `K_aa - K_ai K_ii^{-1} K_ia`, the discrete Dirichlet-to-Neumann operator.
pub fn dtn_reduce(k: &StiffnessMatrix, active: &[usize]) -> Result<DtnOperator> {
    if active.is_empty() {
        return Err(SpectralError::EmptyActiveSet);
    }
    let n = k.dim();
    let na = active.len();
    let mut apos = vec![usize::MAX; n];
    for (i, &v) in active.iter().enumerate() {
        apos[v] = i;
    }
    let interior: Vec<usize> = (0..n).filter(|&v| apos[v] == usize::MAX).collect();
    let ni = interior.len();
    let mut ipos = vec![usize::MAX; n];
    for (i, &v) in interior.iter().enumerate() {
        ipos[v] = i;
    }

    let mut kaa = DMatrix::<f64>::zeros(na, na);
    let mut kii = TriMat::new((ni, ni));
    let mut kia = TriMat::new((ni, na));
    for (&val, (r, c)) in k.matrix().iter() {
        match (apos[r] != usize::MAX, apos[c] != usize::MAX) {
            (true, true) => kaa[(apos[r], apos[c])] += val,
            (false, false) => kii.add_triplet(ipos[r], ipos[c], val),
            (false, true) => kia.add_triplet(ipos[r], apos[c], val),
            (true, false) => {} // handled through the transpose of kia
        }
    }
    let k_ia: CsMat<f64> = kia.to_csr();

    if ni == 0 {
        return Ok(DtnOperator {
            matrix: kaa,
            active: active.to_vec(),
            interior,
            factor: InteriorFactor::Empty,
            k_ia,
        });
    }

    let kii: CsMat<f64> = kii.to_csr();
    let factor = if ni == 1 {
        let d = *kii.get(0, 0).ok_or_else(|| {
            SpectralError::InteriorSolve("singular 1x1 interior block".into())
        })?;
        InteriorFactor::Scalar(d)
    } else {
        InteriorFactor::Ldl(
            Ldl::new()
                .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
                .numeric(kii.view())
                .map_err(|e| SpectralError::InteriorSolve(format!("{e:?}")))?,
        )
    };

    let mut schur = kaa;
    let mut rhs = vec![0.0; ni];
    for j in 0..na {
        rhs.iter_mut().for_each(|x| *x = 0.0);
        for (&val, (i, jj)) in k_ia.iter() {
            if jj == j {
                rhs[i] = val;
            }
        }
        let x = factor.solve(&rhs[..]);
        // schur[:, j] -= K_ai x  (K_ai = K_ia^T)
        for (&val, (i, jj)) in k_ia.iter() {
            schur[(jj, j)] -= val * x[i];
        }
    }
    // The condensation is symmetric; remove the roundoff skew.
    let sym = 0.5 * (&schur + schur.transpose());
    Ok(DtnOperator {
        matrix: sym,
        active: active.to_vec(),
        interior,
        factor,
        k_ia,
    })
}

/// Solves the pencil `DtN u = sigma M u` on the active set and returns the
/// `count` smallest eigenpairs.
pub fn solve_pencil(dtn: &DtnOperator, mass: &BoundaryMass, count: usize) -> Result<SteklovSpectrum> {
    let na = dtn.active.len();
    if count > na {
        return Err(SpectralError::CountTooLarge { want: count, have: na });
    }
    let mut apos: HashMap<usize, usize> = HashMap::with_capacity(na);
    for (i, &v) in dtn.active.iter().enumerate() {
        apos.insert(v, i);
    }
    let mut m = DMatrix::<f64>::zeros(na, na);
    for (&val, (r, c)) in mass.matrix().iter() {
        let (Some(&i), Some(&j)) = (apos.get(&r), apos.get(&c)) else {
            // Mass outside the active set contradicts the fold construction.
            return Err(SpectralError::MassNotPositive);
        };
        m[(i, j)] += val;
    }
    let chol = Cholesky::new(m.clone()).ok_or(SpectralError::MassNotPositive)?;
    let l = chol.l();
    // A = L^{-1} S L^{-T}, symmetric.
    let mut a = dtn.matrix.clone();
    l.solve_lower_triangular_mut(&mut a);
    a.transpose_mut();
    l.solve_lower_triangular_mut(&mut a);
    let a = 0.5 * (&a + a.transpose());
    let eig = a.symmetric_eigen();

    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = DMatrix::<f64>::zeros(na, count);
    let mut residuals = Vec::with_capacity(count);
    let lt = l.transpose();
    for (out, &idx) in order.iter().take(count).enumerate() {
        let sigma = eig.eigenvalues[idx];
        let y = eig.eigenvectors.column(idx).clone_owned();
        let mut u = y;
        lt.solve_upper_triangular_mut(&mut u);
        // Deterministic sign: largest-magnitude entry positive.
        let piv = u.iter().enumerate().max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        if let Some((_, &v)) = piv {
            if v < 0.0 {
                u.neg_mut();
            }
        }
        let r = (&dtn.matrix * &u - sigma * (&m * &u)).norm();
        eigenvalues.push(sigma);
        eigenvectors.set_column(out, &u);
        residuals.push(r);
    }
    Ok(SteklovSpectrum {
        eigenvalues,
        eigenvectors,
        active_set: dtn.active.clone(),
        residuals,
    })
}

/// End-to-end Steklov solve for a mesh and boundary density.
pub fn steklov_spectrum(mesh: &SurfaceMesh, rho: &BoundaryDensity, count: usize) -> Result<SteklovSpectrum> {
    let (spec, _) = steklov_spectrum_with_operator(mesh, rho, count)?;
    Ok(spec)
}

/// Like [`steklov_spectrum`] but also hands back the reduced operator so
/// callers can reuse the interior factorization.
pub fn steklov_spectrum_with_operator(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    count: usize,
) -> Result<(SteklovSpectrum, DtnOperator)> {
    let k = assemble_stiffness(mesh)?;
    let mass = assemble_boundary_mass(mesh, rho)?;
    let active = active_set(mesh, rho);
    let dtn = dtn_reduce(&k, &active)?;
    let spec = solve_pencil(&dtn, &mass, count)?;
    Ok((spec, dtn))
}

/// Solves the pencil for a new density reusing an existing reduction; valid
/// only when the active set induced by `rho` is unchanged.
pub fn solve_with_operator(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    dtn: &DtnOperator,
    count: usize,
) -> Result<SteklovSpectrum> {
    let mass = assemble_boundary_mass(mesh, rho)?;
    solve_pencil(dtn, &mass, count)
}

/// Scale-invariant normalized eigenvalues `sigma_k * L_{g,rho}`.
pub fn normalized_eigenvalues(spectrum: &SteklovSpectrum, mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Vec<f64> {
    let l = density::weighted_length(mesh, rho);
    spectrum.eigenvalues.iter().map(|s| s * l).collect()
}

/// Size of the eigenvalue cluster containing `sigma_1`, chained with relative
/// gap threshold `gap_tol_rel * sigma_1`.
pub fn sigma1_cluster_size(eigenvalues: &[f64], gap_tol_rel: f64) -> usize {
    if eigenvalues.len() < 2 {
        return 0;
    }
    let sigma1 = eigenvalues[1];
    let tol = gap_tol_rel * sigma1.abs().max(f64::MIN_POSITIVE);
    let mut size = 1;
    for w in eigenvalues[1..].windows(2) {
        if w[1] - w[0] <= tol {
            size += 1;
        } else {
            break;
        }
    }
    size
}

/// Derivative of the normalized first eigenvalue with respect to each
/// boundary-edge density value, by first-order perturbation of the pencil.
///
/// Requires `sigma_1` simple: the relative gap to `sigma_2` must exceed
/// `gap_tol_rel`.
pub fn eigenvalue_gradient(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    spectrum: &SteklovSpectrum,
    gap_tol_rel: f64,
) -> Result<Vec<f64>> {
    if spectrum.count() < 3 {
        return Err(SpectralError::NotEnoughEigenpairs);
    }
    let sigma1 = spectrum.eigenvalues[1];
    let gap = spectrum.eigenvalues[2] - sigma1;
    if gap <= gap_tol_rel * sigma1.abs() {
        return Err(SpectralError::DegenerateEigenvalue {
            gap,
            tol: gap_tol_rel * sigma1.abs(),
        });
    }
    let k = assemble_stiffness(mesh)?;
    let dtn = dtn_reduce(&k, &spectrum.active_set)?;
    Ok(gradient_from_trace(mesh, rho, &dtn, spectrum, 1))
}

/// Gradient of `sigma_bar` for eigenfunction column `j` of the spectrum,
/// using an existing reduction for the harmonic extension. No gap check.
pub fn gradient_from_trace(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    dtn: &DtnOperator,
    spectrum: &SteklovSpectrum,
    j: usize,
) -> Vec<f64> {
    let sigma = spectrum.eigenvalues[j];
    let l_rho = density::weighted_length(mesh, rho);
    let trace = spectrum.eigenvectors.column(j).clone_owned();
    let full = dtn.extend(&trace, mesh.vertex_count());
    mesh.boundary_edges()
        .iter()
        .map(|&(_, _, a, b, len)| {
            let (ua, ub) = (full[a], full[b]);
            // u^T (dM/drho_e) u per unit density.
            let q = len * (ua * ua + ua * ub + ub * ub) / 3.0;
            sigma * (len - l_rho * q)
        })
        .collect()
}
