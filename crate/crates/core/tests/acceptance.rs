//! Acceptance gate: one test per release criterion, each printing a verdict
//! line. Tolerances and budgets are pinned here and nowhere else.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steklov::density::{self, BoundaryDensity};
use steklov::lab::{self, ConvergenceFamily};
use steklov::mesh::{self, build_cylinder, build_disk, refine, snap_to_circle, SurfaceMesh};
use steklov::optimize::{self, OptimizerConfig, Termination};
use steklov::spectral;

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} ({name}): {} [{detail}]", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn level5_disk() -> SurfaceMesh {
    let snap = snap_to_circle(1.0);
    let mut m = build_disk(2, 8, 1.0).unwrap();
    for _ in 0..5 {
        m = refine(&m, Some(&snap)).unwrap();
    }
    m
}

#[test]
fn criterion_1_disk_value_and_order() {
    let start = Instant::now();
    let records = lab::weinstock_check(5).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let summary = records.last().unwrap();
    let err = summary.obs("final_rel_err");
    let order = summary.obs("order");
    let pass = err <= 5e-3 && order >= 1.7 && elapsed <= 60.0;
    verdict(
        1,
        "disk value 2pi, order >= 1.7",
        pass,
        &format!("rel_err {err:.2e}, order {order:.2}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_2_disk_spectrum_shape() {
    let m = level5_disk();
    let rho = density::uniform_density(&m);
    let spec = spectral::steklov_spectrum(&m, &rho, 7).unwrap();
    let mut worst = 0.0_f64;
    // Eigenvalues of the unit disk come in pairs m = 1, 2, 3 over constants.
    let got = &spec.eigenvalues;
    let mut ok = got[0].abs() < 1e-8;
    for (k, want) in [(1, 1.0), (2, 1.0), (3, 2.0), (4, 2.0), (5, 3.0), (6, 3.0)] {
        let rel = (got[k] - want).abs() / want;
        worst = worst.max(rel);
        ok &= rel <= 1e-2;
    }
    verdict(
        2,
        "disk spectrum 0,1,1,2,2,3,3",
        ok,
        &format!("worst rel dev {worst:.2e}, sigma0 {:.1e}", got[0]),
    );
}

#[test]
fn criterion_3_critical_cylinder() {
    let start = Instant::now();
    let records = lab::catenoid_check(3).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let summary = records.last().unwrap();
    let err = summary.obs("final_rel_err");
    let cluster = summary.obs("cluster");
    let pass = err <= 1e-2 && cluster == 3.0 && elapsed <= 120.0;
    verdict(
        3,
        "critical cylinder value and triple cluster",
        pass,
        &format!("rel_err {err:.2e}, cluster {cluster}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_4_exact_bracketing() {
    let t = lab::critical_half_height();
    let m = build_cylinder(t, 8, 32).unwrap();
    let rho = density::uniform_density(&m);
    let h = m.loop_length(0) / 32.0;
    let eps: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * h).collect();
    let records = lab::gluing_study(&m, &rho, &eps, 10.0).unwrap();
    let worst = records
        .iter()
        .map(|r| r.obs("bracket_residual") / r.obs("sigma1_zeroed"))
        .fold(f64::MIN, f64::max);
    let pass = records.len() == 4 && worst <= 1e-9;
    verdict(
        4,
        "gluing bracketing exact to solver tolerance",
        pass,
        &format!("worst relative residual {worst:.2e}"),
    );
}

#[test]
fn criterion_5_density_convergence() {
    // Heat family on a disk with a step density; smoothing is edge-average
    // exact, so the family reaches the target on the fixed mesh.
    let m = build_disk(2, 24, 1.0).unwrap();
    let ne = m.boundary_edge_count();
    let rho = BoundaryDensity::new(&m, (0..ne).map(|e| if e < ne / 4 { 4.0 } else { 0.25 }).collect()).unwrap();
    let heat = lab::convergence_study(
        &m,
        &rho,
        &[0.05, 0.02, 0.005, 1e-3, 1e-4, 1e-6, 1e-8],
        &ConvergenceFamily::Heat,
        1e-3,
    )
    .unwrap();
    let heat_ok = lab::study_pass(&heat);
    let heat_final = heat.last().unwrap().obs("gap") / heat.last().unwrap().obs("sigma1_base");

    // Arc-zeroing family on a cylinder whose density already dips where the
    // arcs shrink to, so the removed mass is first-order small.
    let t = lab::critical_half_height();
    let c = build_cylinder(t, 4, 64).unwrap();
    let lp0 = c.boundary_loops()[0].len();
    let dip = |e: usize, n: usize| {
        let d = e.min(n - e);
        if d <= 5 {
            0.01
        } else {
            1.0
        }
    };
    let mut vals = Vec::new();
    for l in 0..c.boundary_loops().len() {
        let n = c.boundary_loops()[l].len();
        vals.extend((0..n).map(|e| dip(e, n)));
    }
    let rho_c = BoundaryDensity::new(&c, vals).unwrap();
    let h = c.loop_length(0) / lp0 as f64;
    let arcs = lab::convergence_study(
        &c,
        &rho_c,
        &[4.0 * h, 2.0 * h, h],
        &ConvergenceFamily::ZeroOnArcs { centers: vec![(0, 0), (1, 0)] },
        1e-3,
    )
    .unwrap();
    let arcs_ok = lab::study_pass(&arcs);
    let arcs_final = arcs.last().unwrap().obs("gap") / arcs.last().unwrap().obs("sigma1_base");

    verdict(
        5,
        "eigenvalue convergence along density families",
        heat_ok && arcs_ok,
        &format!("heat final rel gap {heat_final:.2e}, arcs final rel gap {arcs_final:.2e}"),
    );
}

#[test]
fn criterion_6_topology_arithmetic() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20260825);
    let mut checked = 0usize;
    for _ in 0..200 {
        let circ = rng.gen_range(8..16) * 2;
        // At least 3 axial segments: with only 2, one vertex row touches
        // both circles and aligned arcs would pinch into a non-manifold edge.
        let axial = rng.gen_range(3..6);
        let mut m = build_cylinder(rng.gen_range(0.5..2.0), axial, circ).unwrap();
        let (mut genus, mut loops) = (0usize, 2usize);
        if rng.gen_bool(0.7) {
            // Glue matched arcs of the two circles: genus up, loops down.
            let msz = rng.gen_range(2..circ / 2);
            let s1 = rng.gen_range(0..circ);
            let s2 = rng.gen_range(0..circ);
            let spec = lab::arc_pair_spec(&m, (0, s1), (1, s2), msz).unwrap();
            m = mesh::glue_segments(&m, &spec).unwrap().mesh;
            genus += 1;
            loops -= 1;
        }
        for _ in 0..rng.gen_range(0..3) {
            // Puncture a random interior vertex: one more loop.
            let v = rng.gen_range(0..m.vertex_count());
            if let Ok(p) = mesh::puncture(&m, v) {
                m = p;
                loops += 1;
            }
        }
        m.validate().unwrap();
        let t = m.topology().unwrap();
        assert_eq!(t.genus, genus, "genus mismatch");
        assert_eq!(t.boundary_count, loops, "loop count mismatch");
        assert_eq!(t.euler, 2 - 2 * genus as i64 - loops as i64, "euler mismatch");
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        6,
        "200 random glue/puncture sequences keep the topology ledger",
        checked == 200 && elapsed <= 30.0,
        &format!("{checked} sequences, {elapsed:.1}s"),
    );
}

fn random_pair(rng: &mut ChaCha8Rng) -> (SurfaceMesh, BoundaryDensity) {
    let m = if rng.gen_bool(0.5) {
        build_disk(rng.gen_range(1..3), rng.gen_range(6..12), rng.gen_range(0.5..2.0)).unwrap()
    } else {
        build_cylinder(rng.gen_range(0.6..1.6), rng.gen_range(2..4), rng.gen_range(6..12)).unwrap()
    };
    let vals = (0..m.boundary_edge_count()).map(|_| rng.gen_range(0.5..2.0)).collect();
    let rho = BoundaryDensity::new(&m, vals).unwrap();
    (m, rho)
}

#[test]
fn criterion_7_gradient_vs_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0usize;
    let mut worst = 0.0_f64;
    while done < 20 {
        let (m, rho) = random_pair(&mut rng);
        let spec = spectral::steklov_spectrum(&m, &rho, 3).unwrap();
        let gap = (spec.eigenvalues[2] - spec.eigenvalues[1]) / spec.eigenvalues[1];
        if gap < 0.05 {
            continue;
        }
        let grad = spectral::eigenvalue_gradient(&m, &rho, &spec, 0.02).unwrap();
        let step = 1e-6;
        let mut fd = Vec::with_capacity(grad.len());
        for e in 0..grad.len() {
            let eval = |delta: f64| {
                let mut v = rho.values().to_vec();
                v[e] += delta;
                let r = BoundaryDensity::new(&m, v).unwrap();
                let s = spectral::steklov_spectrum(&m, &r, 2).unwrap();
                s.eigenvalues[1] * density::weighted_length(&m, &r)
            };
            fd.push((eval(step) - eval(-step)) / (2.0 * step));
        }
        let diff: f64 = grad.iter().zip(fd.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
        done += 1;
    }
    verdict(
        7,
        "analytic gradient matches central differences",
        worst <= 1e-3,
        &format!("worst relative deviation {worst:.2e} over 20 pairs"),
    );
}

#[test]
fn criterion_8_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for _ in 0..6 {
        let (m, rho) = random_pair(&mut rng);
        let base = spectral::steklov_spectrum(&m, &rho, 6).unwrap();
        let base_sb = spectral::normalized_eigenvalues(&base, &m, &rho);
        let ms = m.scaled(2.7).unwrap();
        let mesh_sb = spectral::normalized_eigenvalues(
            &spectral::steklov_spectrum(&ms, &rho, 6).unwrap(),
            &ms,
            &rho,
        );
        let rs = rho.scaled(3.3).unwrap();
        let rho_sb = spectral::normalized_eigenvalues(
            &spectral::steklov_spectrum(&m, &rs, 6).unwrap(),
            &m,
            &rs,
        );
        for k in 1..6 {
            worst = worst.max((mesh_sb[k] - base_sb[k]).abs() / base_sb[k]);
            worst = worst.max((rho_sb[k] - base_sb[k]).abs() / base_sb[k]);
        }
    }
    verdict(
        8,
        "normalized eigenvalues invariant under mesh and density scaling",
        worst <= 1e-10,
        &format!("worst relative drift {worst:.2e}"),
    );
}

#[test]
fn criterion_9_optimizer_ceiling() {
    // Fit the discretization constant from the disk refinement family, then
    // demand no optimizer iterate beats the ceiling 2pi + slack * C h^2.
    let w = lab::weinstock_check(4).unwrap();
    let c_fit = w.last().unwrap().obs("fitted_c");
    let m = build_disk(3, 24, 1.0).unwrap();
    let h = m
        .boundary_edges()
        .iter()
        .map(|e| e.4)
        .fold(0.0, f64::max);
    let ceiling = 2.0 * PI + 3.0 * c_fit * h * h;
    let cfg = OptimizerConfig {
        max_iters: 120,
        step: 0.5,
        tol_grad: 1e-5,
        gap_tol: 0.02,
        floor: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut max_seen = f64::MIN;
    let mut all_multiple = true;
    for _ in 0..10 {
        let vals = (0..m.boundary_edge_count()).map(|_| rng.gen_range(0.25..4.0)).collect();
        let rho0 = BoundaryDensity::new(&m, vals).unwrap();
        let trace = optimize::maximize_density(&m, &rho0, &cfg).unwrap();
        for r in &trace.records {
            max_seen = max_seen.max(r.sigma_bar);
        }
        let stalled_ok = matches!(
            trace.termination,
            Termination::Stalled | Termination::GradientTolerance
        );
        all_multiple &= stalled_ok && trace.final_multiplicity() >= 2;
    }
    let pass = max_seen <= ceiling && all_multiple;
    verdict(
        9,
        "10 random starts stay under the fitted disk ceiling with multiplicity >= 2",
        pass,
        &format!("max sigma_bar {max_seen:.6}, ceiling {ceiling:.6}, all multiple {all_multiple}"),
    );
}
