//! Experiment drivers: density-convergence probes, the boundary-gluing
//! bracketing study, and reference checks against closed-form targets on the
//! disk and the flat cylinder. Studies emit append-only records that carry
//! their parameters, observables and the tolerance they were judged against.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{self, BoundaryDensity, DensityError};
use crate::mesh::{
    self, build_cylinder, build_disk, refine, snap_to_circle, snap_to_cylinder, BoundaryArc,
    GluingSpec, MeshError, SurfaceMesh,
};
use crate::spectral::{self, SpectralError};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("bad schedule: {0}")]
    BadSchedule(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub params: BTreeMap<String, f64>,
    pub observables: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ExperimentRecord {
    pub fn new(id: &str, params: &[(&str, f64)], observables: &[(&str, f64)], tolerance: f64, pass: bool) -> Self {
        ExperimentRecord {
            id: id.to_string(),
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            observables: observables.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            tolerance,
            pass,
        }
    }

    pub fn obs(&self, key: &str) -> f64 {
        self.observables.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// Conjunction of the per-record verdicts; the exit status of a study.
pub fn study_pass(records: &[ExperimentRecord]) -> bool {
    !records.is_empty() && records.iter().all(|r| r.pass)
}

fn thread_cap() -> usize {
    std::env::var("STEKLOV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

/// Maps `f` over the schedule points, concurrently when `STEKLOV_THREADS`
/// allows; output order always matches input order.
fn run_schedule<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    let cap = thread_cap().min(n);
    if cap <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::with_capacity(n));
    std::thread::scope(|s| {
        for _ in 0..cap {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i, &items[i]);
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|p| p.0);
    out.into_iter().map(|p| p.1).collect()
}

fn sigma1(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Result<f64> {
    Ok(spectral::steklov_spectrum(mesh, rho, 2)?.eigenvalues[1])
}

fn sigma_bar1(mesh: &SurfaceMesh, rho: &BoundaryDensity) -> Result<f64> {
    Ok(sigma1(mesh, rho)? * density::weighted_length(mesh, rho))
}

fn max_boundary_edge(mesh: &SurfaceMesh) -> f64 {
    mesh.boundary_edges().iter().map(|e| e.4).fold(0.0, f64::max)
}

/// The two density families whose eigenvalue convergence the study probes:
/// heat smoothing at time `t`, or zeroing on arcs of half-length `t` around
/// fixed centers.
#[derive(Debug, Clone)]
pub enum ConvergenceFamily {
    Heat,
    /// Centers given as `(loop index, vertex position within the loop)`.
    ZeroOnArcs { centers: Vec<(usize, usize)> },
}

/// Arcs of roughly `2 * eps` arclength centered at the given loop positions,
/// snapped to whole boundary edges (at least one edge per side).
pub fn arcs_around(mesh: &SurfaceMesh, centers: &[(usize, usize)], eps: f64) -> Result<Vec<BoundaryArc>> {
    if !(eps > 0.0) {
        return Err(LabError::BadSchedule(format!("arc half-length {eps} must be positive")));
    }
    let mut arcs = Vec::with_capacity(centers.len());
    for &(l, pos) in centers {
        let loops = mesh.boundary_loops();
        let lp = loops
            .get(l)
            .ok_or_else(|| LabError::BadSchedule(format!("no boundary loop {l}")))?;
        let n = lp.len();
        let h = mesh.loop_length(l) / n as f64;
        let k = ((eps / h).round() as usize).max(1);
        if 2 * k >= n {
            return Err(LabError::BadSchedule(format!(
                "arc of half-length {eps} covers loop {l} entirely"
            )));
        }
        arcs.push(BoundaryArc {
            loop_idx: l,
            start_edge: (pos + n - k) % n,
            edge_count: 2 * k,
        });
    }
    Ok(arcs)
}

fn check_decreasing(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(LabError::BadSchedule("empty schedule".into()));
    }
    if schedule.iter().any(|&t| !(t > 0.0)) {
        return Err(LabError::BadSchedule("schedule values must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::BadSchedule("schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Tracks `sigma_1` along a density family converging to `rho` in L1.
///
/// Each record carries the L1 distance and the eigenvalue gap at its
/// schedule point; a record passes when the gap did not grow compared to the
/// previous point, and the final record additionally requires
/// `gap <= tol_rel * sigma_1(rho)`.
pub fn convergence_study(
    mesh: &SurfaceMesh,
    rho: &BoundaryDensity,
    schedule: &[f64],
    family: &ConvergenceFamily,
    tol_rel: f64,
) -> Result<Vec<ExperimentRecord>> {
    check_decreasing(schedule)?;
    let sigma_base = sigma1(mesh, rho)?;
    let evals: Vec<Result<(f64, f64)>> = run_schedule(schedule, |_, &t| {
        let rho_t = match family {
            ConvergenceFamily::Heat => density::heat_smooth(mesh, rho, t)?.density,
            ConvergenceFamily::ZeroOnArcs { centers } => {
                let arcs = arcs_around(mesh, centers, t)?;
                density::zero_on_arcs(mesh, rho, &arcs)?
            }
        };
        Ok((sigma1(mesh, &rho_t)?, density::l1_distance(mesh, rho, &rho_t)))
    });
    let id = match family {
        ConvergenceFamily::Heat => "convergence-heat",
        ConvergenceFamily::ZeroOnArcs { .. } => "convergence-arcs",
    };
    let mut records = Vec::with_capacity(schedule.len());
    let mut prev_gap = f64::INFINITY;
    let last = schedule.len() - 1;
    for (i, r) in evals.into_iter().enumerate() {
        let (sig, l1) = r?;
        let gap = (sig - sigma_base).abs();
        let mut pass = gap <= prev_gap * (1.0 + 1e-12) + 1e-14;
        if i == last {
            pass = pass && gap <= tol_rel * sigma_base;
        }
        records.push(ExperimentRecord::new(
            id,
            &[("t", schedule[i]), ("index", i as f64)],
            &[
                ("sigma1_base", sigma_base),
                ("sigma1_t", sig),
                ("l1", l1),
                ("gap", gap),
            ],
            tol_rel,
            pass,
        ));
        prev_gap = gap;
    }
    Ok(records)
}

/// Matched simplicial arc pair for gluing: `m` consecutive edges starting at
/// the given positions of two distinct loops, identified head-to-tail.
pub fn arc_pair_spec(
    mesh: &SurfaceMesh,
    (l1, start1): (usize, usize),
    (l2, start2): (usize, usize),
    m: usize,
) -> Result<GluingSpec> {
    let loops = mesh.boundary_loops();
    for &l in [l1, l2].iter() {
        if l >= loops.len() {
            return Err(LabError::BadSchedule(format!("no boundary loop {l}")));
        }
        if m + 1 > loops[l].len() {
            return Err(LabError::BadSchedule(format!(
                "arc of {m} edges does not fit on loop {l} ({} edges)",
                loops[l].len()
            )));
        }
    }
    let take = |l: usize, start: usize| {
        let lp = &loops[l];
        let n = lp.len();
        (0..=m).map(|i| lp[(start + i) % n]).collect::<Vec<_>>()
    };
    let a1 = take(l1, start1);
    let half = {
        let arc = mesh.arc_edges(l1, &a1)?;
        mesh.arc_length(&arc) / 2.0
    };
    Ok(GluingSpec {
        arc1: (l1, a1),
        arc2: (l2, take(l2, start2)),
        half_length: half,
    })
}

/// Glues ever-shorter arc pairs of a two-boundary surface into a quotient of
/// higher genus and compares eigenvalues on both sides.
///
/// For each `eps`: the density zeroed on the arcs on the source, the quotient
/// surface with the descended density, and the unmodified base. The record
/// passes when the subspace inequality
/// `sigma_1(source, zeroed) <= sigma_1(quotient, descended)` holds to
/// relative solver tolerance, and the normalized eigenvalues of quotient and
/// base are within `delta_coeff * (eps + h)`.
pub fn gluing_study(
    base: &SurfaceMesh,
    rho: &BoundaryDensity,
    eps_schedule: &[f64],
    delta_coeff: f64,
) -> Result<Vec<ExperimentRecord>> {
    check_decreasing(eps_schedule)?;
    if base.boundary_loops().len() < 2 {
        return Err(LabError::BadSchedule("gluing needs at least two boundary loops".into()));
    }
    let h = max_boundary_edge(base);
    let sigma_bar_base = sigma_bar1(base, rho)?;
    type Point = (f64, f64, f64, f64, f64);
    let evals: Vec<Result<Point>> = run_schedule(eps_schedule, |_, &eps| {
        let h0 = base.loop_length(0) / base.boundary_loops()[0].len() as f64;
        let m = ((2.0 * eps / h0).round() as usize).max(2);
        let spec = arc_pair_spec(base, (0, 0), (1, 0), m)?;
        let arcs = [
            base.arc_edges(0, &spec.arc1.1)?,
            base.arc_edges(1, &spec.arc2.1)?,
        ];
        let zeroed = density::zero_on_arcs(base, rho, &arcs)?;
        let glued = mesh::glue_segments(base, &spec)?;
        let descended = density::descend_through_glue(base, &zeroed, &glued.vertex_map, &glued.mesh)?;
        let s_tilde = sigma1(base, &zeroed)?;
        let s_glued = sigma1(&glued.mesh, &descended)?;
        let sb_glued = s_glued * density::weighted_length(&glued.mesh, &descended);
        Ok((eps, m as f64, s_tilde, s_glued, sb_glued))
    });
    let mut records = Vec::with_capacity(eps_schedule.len());
    for r in evals {
        let (eps, m, s_tilde, s_glued, sb_glued) = r?;
        let bracket_residual = s_tilde - s_glued;
        let bracket_ok = bracket_residual <= 1e-9 * s_tilde.abs();
        let delta = delta_coeff * (eps + h);
        let closeness = (sb_glued - sigma_bar_base).abs();
        records.push(ExperimentRecord::new(
            "gluing",
            &[("eps", eps), ("m", m), ("h", h)],
            &[
                ("sigma1_zeroed", s_tilde),
                ("sigma1_glued", s_glued),
                ("sigma_bar_glued", sb_glued),
                ("sigma_bar_base", sigma_bar_base),
                ("bracket_residual", bracket_residual),
                ("closeness", closeness),
                ("delta", delta),
            ],
            delta,
            bracket_ok && closeness <= delta,
        ));
    }
    Ok(records)
}

const DISK_TARGET: f64 = 2.0 * std::f64::consts::PI;

/// Disk refinement study: per-level records plus a summary with the observed
/// convergence order over the last three levels and the fitted `C` in
/// `error ~ C h^2`.
pub fn weinstock_check(refinements: usize) -> Result<Vec<ExperimentRecord>> {
    if refinements < 2 {
        return Err(LabError::BadSchedule("need at least 2 refinement levels".into()));
    }
    let snap = snap_to_circle(1.0);
    let mut m = build_disk(2, 8, 1.0)?;
    let mut records = Vec::new();
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for level in 0..=refinements {
        let rho = density::uniform_density(&m);
        let sb = sigma_bar1(&m, &rho)?;
        let rel_err = (sb - DISK_TARGET).abs() / DISK_TARGET;
        let h = max_boundary_edge(&m);
        errs.push(rel_err);
        hs.push(h);
        records.push(ExperimentRecord::new(
            "weinstock-level",
            &[("level", level as f64), ("h", h)],
            &[("sigma_bar", sb), ("rel_err", rel_err)],
            5e-3,
            true,
        ));
        if level < refinements {
            m = refine(&m, Some(&snap))?;
        }
    }
    let n = errs.len();
    let order = 0.5
        * ((errs[n - 3] / errs[n - 2]).log2() / (hs[n - 3] / hs[n - 2]).log2()
            + (errs[n - 2] / errs[n - 1]).log2() / (hs[n - 2] / hs[n - 1]).log2());
    let fitted_c = errs[n - 1] * DISK_TARGET / (hs[n - 1] * hs[n - 1]);
    let final_err = errs[n - 1];
    records.push(ExperimentRecord::new(
        "weinstock",
        &[("levels", refinements as f64)],
        &[
            ("final_rel_err", final_err),
            ("order", order),
            ("fitted_c", fitted_c),
            ("target", DISK_TARGET),
        ],
        5e-3,
        final_err <= 5e-3 && order >= 1.7,
    ));
    Ok(records)
}

/// Root of `T tanh T = 1` by bisection to 1e-12; the half-height of the
/// critical flat cylinder.
pub fn critical_half_height() -> f64 {
    let f = |t: f64| t * t.tanh() - 1.0;
    let (mut lo, mut hi) = (1.0, 1.5);
    debug_assert!(f(lo) < 0.0 && f(hi) > 0.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Relative gap threshold for counting the eigenvalue cluster at the mode
/// crossing. The crossing splits at the discretization order, so the
/// threshold must sit above that splitting and below the distance to the
/// next band (about 0.4 relative).
pub const CROSSING_GAP_TOL: f64 = 0.05;

/// Flat cylinder at the critical half-height: normalized first eigenvalue
/// against the separated-modes target `4 pi tanh T*`, and the cluster size 3
/// coming from the crossing of the constant-in-angle and first angular modes.
pub fn catenoid_check(refinements: usize) -> Result<Vec<ExperimentRecord>> {
    let t_star = critical_half_height();
    let target = 4.0 * std::f64::consts::PI * t_star.tanh();
    let snap = snap_to_cylinder();
    let mut m = build_cylinder(t_star, 8, 16)?;
    let mut records = Vec::new();
    let mut final_state = (f64::NAN, 0usize);
    for level in 0..=refinements {
        let rho = density::uniform_density(&m);
        let spec = spectral::steklov_spectrum(&m, &rho, 6)?;
        let sb = spec.eigenvalues[1] * density::weighted_length(&m, &rho);
        let cluster = spectral::sigma1_cluster_size(&spec.eigenvalues, CROSSING_GAP_TOL);
        let rel_err = (sb - target).abs() / target;
        records.push(ExperimentRecord::new(
            "catenoid-level",
            &[("level", level as f64), ("h", max_boundary_edge(&m))],
            &[("sigma_bar", sb), ("rel_err", rel_err), ("cluster", cluster as f64)],
            1e-2,
            true,
        ));
        final_state = (rel_err, cluster);
        if level < refinements {
            m = refine(&m, Some(&snap))?;
        }
    }
    let (rel_err, cluster) = final_state;
    records.push(ExperimentRecord::new(
        "catenoid",
        &[("levels", refinements as f64), ("t_star", t_star)],
        &[
            ("target", target),
            ("final_rel_err", rel_err),
            ("cluster", cluster as f64),
        ],
        1e-2,
        rel_err <= 1e-2 && cluster == 3,
    ));
    Ok(records)
}

// Records as flat CSV: fixed columns, then the union of parameter and
// observable keys prefixed `p:` and `o:`. Values print as `{:.17e}` so a
// round trip is byte-exact.

pub fn write_records_csv<W: Write>(w: &mut W, records: &[ExperimentRecord]) -> Result<()> {
    let mut pkeys: Vec<String> = Vec::new();
    let mut okeys: Vec<String> = Vec::new();
    for r in records {
        for k in r.params.keys() {
            if !pkeys.contains(k) {
                pkeys.push(k.clone());
            }
        }
        for k in r.observables.keys() {
            if !okeys.contains(k) {
                okeys.push(k.clone());
            }
        }
    }
    pkeys.sort();
    okeys.sort();
    write!(w, "id,tolerance,pass")?;
    for k in &pkeys {
        write!(w, ",p:{k}")?;
    }
    for k in &okeys {
        write!(w, ",o:{k}")?;
    }
    writeln!(w)?;
    for r in records {
        write!(w, "{},{:.17e},{}", r.id, r.tolerance, r.pass)?;
        for k in &pkeys {
            match r.params.get(k) {
                Some(v) => write!(w, ",{v:.17e}")?,
                None => write!(w, ",")?,
            }
        }
        for k in &okeys {
            match r.observables.get(k) {
                Some(v) => write!(w, ",{v:.17e}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_records_csv<R: BufRead>(r: R) -> Result<Vec<ExperimentRecord>> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(LabError::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "tolerance" || cols[2] != "pass" {
        return Err(LabError::Parse {
            line: 1,
            msg: "expected header starting with id,tolerance,pass".into(),
        });
    }
    let keys: Vec<(bool, String)> = cols[3..]
        .iter()
        .map(|c| {
            if let Some(k) = c.strip_prefix("p:") {
                Ok((true, k.to_string()))
            } else if let Some(k) = c.strip_prefix("o:") {
                Ok((false, k.to_string()))
            } else {
                Err(LabError::Parse {
                    line: 1,
                    msg: format!("column {c:?} lacks a p: or o: prefix"),
                })
            }
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(LabError::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let tolerance = fields[1].parse::<f64>().map_err(|e| LabError::Parse {
            line: lineno,
            msg: format!("bad tolerance: {e}"),
        })?;
        let pass = fields[2].parse::<bool>().map_err(|e| LabError::Parse {
            line: lineno,
            msg: format!("bad pass flag: {e}"),
        })?;
        let mut rec = ExperimentRecord {
            id: fields[0].to_string(),
            params: BTreeMap::new(),
            observables: BTreeMap::new(),
            tolerance,
            pass,
        };
        for ((is_param, key), field) in keys.iter().zip(fields[3..].iter()) {
            if field.is_empty() {
                continue;
            }
            let v = field.parse::<f64>().map_err(|e| LabError::Parse {
                line: lineno,
                msg: format!("bad value for {key}: {e}"),
            })?;
            if *is_param {
                rec.params.insert(key.clone(), v);
            } else {
                rec.observables.insert(key.clone(), v);
            }
        }
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::uniform_density;

    fn cylinder_spec_density(m: &SurfaceMesh) -> BoundaryDensity {
        uniform_density(m)
    }

    #[test]
    fn trivial_family_has_zero_errors() {
        let m = build_disk(2, 12, 1.0).unwrap();
        let rho = uniform_density(&m);
        // Heat smoothing of the uniform density is the identity up to
        // quadrature noise: all gaps at roundoff.
        let recs =
            convergence_study(&m, &rho, &[0.4, 0.2, 0.1], &ConvergenceFamily::Heat, 1e-6).unwrap();
        assert_eq!(recs.len(), 3);
        for r in &recs {
            assert!(r.obs("gap") < 1e-9, "gap {}", r.obs("gap"));
            assert!(r.pass);
        }
    }

    #[test]
    fn heat_family_on_spiky_density_converges() {
        let m = build_disk(2, 24, 1.0).unwrap();
        let ne = m.boundary_edge_count();
        let vals: Vec<f64> = (0..ne).map(|e| if e < ne / 4 { 4.0 } else { 0.25 }).collect();
        let rho = BoundaryDensity::new(&m, vals).unwrap();
        let recs = convergence_study(
            &m,
            &rho,
            &[0.1, 0.05, 0.02, 0.005, 0.002],
            &ConvergenceFamily::Heat,
            0.05,
        )
        .unwrap();
        assert!(study_pass(&recs), "{recs:#?}");
        let gaps: Vec<f64> = recs.iter().map(|r| r.obs("gap")).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{gaps:?}");
    }

    #[test]
    fn arc_family_l1_tracks_arc_length() {
        let t_star = critical_half_height();
        let m = build_cylinder(t_star, 4, 32).unwrap();
        let rho = cylinder_spec_density(&m);
        let h = m.loop_length(0) / 32.0;
        let centers = vec![(0, 0), (1, 0)];
        let schedule = [4.0 * h, 2.0 * h, h];
        let recs = convergence_study(
            &m,
            &rho,
            &schedule,
            &ConvergenceFamily::ZeroOnArcs { centers },
            1.0,
        )
        .unwrap();
        for (r, &eps) in recs.iter().zip(schedule.iter()) {
            // Two arcs of 2*eps each, uniform density: the L1 distance is the
            // zeroed length.
            assert!((r.obs("l1") - 4.0 * eps).abs() < 1e-10, "{r:#?}");
        }
        let gaps: Vec<f64> = recs.iter().map(|r| r.obs("gap")).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{gaps:?}");
    }

    #[test]
    fn schedule_validation() {
        let m = build_disk(1, 6, 1.0).unwrap();
        let rho = uniform_density(&m);
        for bad in [&[][..], &[0.1, 0.2][..], &[0.1, -0.05][..]] {
            assert!(convergence_study(&m, &rho, bad, &ConvergenceFamily::Heat, 1e-3).is_err());
        }
        // Arc covering a full loop is rejected.
        assert!(arcs_around(&m, &[(0, 0)], 100.0).is_err());
    }

    #[test]
    fn gluing_study_brackets_and_approaches() {
        let t_star = critical_half_height();
        let m = build_cylinder(t_star, 8, 32).unwrap();
        let rho = uniform_density(&m);
        let h = m.loop_length(0) / 32.0;
        let eps: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * h).collect();
        let recs = gluing_study(&m, &rho, &eps, 10.0).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert!(
                r.obs("bracket_residual") <= 1e-9 * r.obs("sigma1_zeroed"),
                "bracketing violated: {r:#?}"
            );
            assert!(r.pass, "{r:#?}");
        }
    }

    #[test]
    fn gluing_study_rejects_full_overlap() {
        let t_star = critical_half_height();
        let m = build_cylinder(t_star, 4, 16).unwrap();
        let rho = uniform_density(&m);
        let h = m.loop_length(0) / 16.0;
        assert!(gluing_study(&m, &rho, &[20.0 * h], 10.0).is_err());
    }

    #[test]
    fn weinstock_small_run() {
        let recs = weinstock_check(3).unwrap();
        let summary = recs.last().unwrap();
        assert_eq!(summary.id, "weinstock");
        assert!(summary.obs("final_rel_err") < 0.02, "{summary:#?}");
        let last_level = &recs[recs.len() - 2];
        assert!(last_level.obs("rel_err") < 0.02);
    }

    #[test]
    fn critical_half_height_matches_reference() {
        let t = critical_half_height();
        assert!((t * t.tanh() - 1.0).abs() < 1e-11);
        assert!((t - 1.19968).abs() < 1e-5);
    }

    #[test]
    fn catenoid_small_run_sees_the_cluster() {
        let recs = catenoid_check(2).unwrap();
        let summary = recs.last().unwrap();
        assert_eq!(summary.obs("cluster"), 3.0, "{summary:#?}");
        assert!(summary.obs("final_rel_err") < 0.05, "{summary:#?}");
    }

    #[test]
    fn records_round_trip_csv_byte_identically() {
        let recs = vec![
            ExperimentRecord::new(
                "a",
                &[("eps", 0.125), ("level", 3.0)],
                &[("sigma", 1.0 / 3.0)],
                1e-3,
                true,
            ),
            ExperimentRecord::new("b", &[("t", 0.7)], &[("gap", 2.5e-4), ("l1", 0.01)], 1e-2, false),
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs).unwrap();
        let back = read_records_csv(&buf[..]).unwrap();
        assert_eq!(back, recs);
        let mut buf2 = Vec::new();
        write_records_csv(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "id,tolerance,pass,p:x\na,1.0,true,0.5\nb,oops,true,0.5\n";
        match read_records_csv(bad.as_bytes()) {
            Err(LabError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schedule_runner_is_order_stable_under_threads() {
        std::env::set_var("STEKLOV_THREADS", "4");
        let items: Vec<usize> = (0..40).collect();
        let out = run_schedule(&items, |i, &x| {
            std::thread::sleep(std::time::Duration::from_millis((40 - i as u64) % 7));
            x * 2
        });
        std::env::remove_var("STEKLOV_THREADS");
        assert_eq!(out, (0..40).map(|x| x * 2).collect::<Vec<_>>());
    }
}
