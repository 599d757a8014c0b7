//! Triangulated surfaces with boundary.
//!
//! A [`SurfaceMesh`] carries its piecewise-linear metric through per-triangle
//! edge lengths. For meshes built from coordinates the lengths are just the
//! Euclidean distances, but the boundary-gluing construction produces
//! quotient surfaces whose intrinsic metric is no longer realized by any
//! vertex embedding; the per-triangle lengths stay authoritative there.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

/// Relative tolerance for matching corresponding arc edge lengths in a gluing.
pub const GLUE_LENGTH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("triangle {0} is degenerate (non-positive area)")]
    DegenerateTriangle(usize),
    #[error("vertex index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("inconsistent orientation or non-manifold edge ({0}, {1})")]
    NonManifoldEdge(usize, usize),
    #[error("interior edge ({0}, {1}) has mismatched lengths in its two triangles")]
    MetricMismatch(usize, usize),
    #[error("mesh is not connected")]
    Disconnected,
    #[error("vertex {0} is not referenced by any triangle")]
    UnusedVertex(usize),
    #[error("boundary traversal failed near vertex {0}")]
    BoundaryWalk(usize),
    #[error("puncture rejected: {0}")]
    BadPuncture(String),
    #[error("gluing rejected: {0}")]
    BadGluing(String),
    #[error("Euler characteristic {chi} with {k} boundary loops gives non-integer genus")]
    BrokenTopology { chi: i64, k: usize },
    #[error("operation requires an embedded mesh (coordinates realizing the metric)")]
    NotEmbedded,
}

pub type Result<T> = std::result::Result<T, MeshError>;

/// Genus, boundary component count and Euler characteristic of a surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub genus: usize,
    pub boundary_count: usize,
    pub euler: i64,
}

/// An arc of consecutive boundary edges, addressed along a loop's orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryArc {
    pub loop_idx: usize,
    /// Index of the first edge along the loop (edge `i` joins loop vertex `i`
    /// to loop vertex `i + 1` modulo the loop length).
    pub start_edge: usize,
    pub edge_count: usize,
}

/// Two boundary arcs of equal combinatorial length plus the half-length of the
/// identified segment.
#[derive(Debug, Clone)]
pub struct GluingSpec {
    /// `(loop index, consecutive boundary vertex ids along the loop)`.
    pub arc1: (usize, Vec<usize>),
    pub arc2: (usize, Vec<usize>),
    /// Half of the arc length on either side.
    pub half_length: f64,
}

/// Result of a gluing: the quotient mesh plus the vertex identification map.
#[derive(Debug, Clone)]
pub struct GlueResult {
    pub mesh: SurfaceMesh,
    /// Maps vertex ids of the source mesh to vertex ids of the quotient.
    pub vertex_map: Vec<usize>,
}

/// Triangulated surface with ordered, oriented boundary loops.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    /// `tri_lengths[t][i]` is the length of the edge opposite corner `i`,
    /// i.e. of the edge joining corners `i+1` and `i+2` (mod 3).
    tri_lengths: Vec<[f64; 3]>,
    /// Cyclically ordered vertex sequences, surface to the left.
    boundary_loops: Vec<Vec<usize>>,
    /// Per-loop edge lengths, aligned with the loop's edge indexing.
    boundary_lengths: Vec<Vec<f64>>,
    /// Whether vertex coordinates realize the metric exactly.
    embedded: bool,
}

impl SurfaceMesh {
    /// Builds a mesh from coordinates, deriving the metric from them.
    pub fn from_coordinates(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let tri_lengths = triangles
            .iter()
            .map(|t| {
                let l = |a: usize, b: usize| dist(&vertices[t[a]], &vertices[t[b]]);
                [l(1, 2), l(2, 0), l(0, 1)]
            })
            .collect();
        Self::from_parts(vertices, triangles, tri_lengths, true)
    }

    /// Builds a mesh from an explicit intrinsic metric. Coordinates are kept
    /// for reference only.
    pub fn from_metric(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        tri_lengths: Vec<[f64; 3]>,
    ) -> Result<Self> {
        Self::from_parts(vertices, triangles, tri_lengths, false)
    }

    fn from_parts(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        tri_lengths: Vec<[f64; 3]>,
        embedded: bool,
    ) -> Result<Self> {
        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            tri_lengths,
            boundary_loops: Vec::new(),
            boundary_lengths: Vec::new(),
            embedded,
        };
        mesh.validate_core()?;
        mesh.extract_boundary()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn is_embedded(&self) -> bool {
        self.embedded
    }

    /// Edge lengths of loop `l`, edge `i` joining loop vertices `i` and `i+1`.
    pub fn loop_edge_lengths(&self, l: usize) -> &[f64] {
        &self.boundary_lengths[l]
    }

    /// Total number of boundary edges over all loops.
    pub fn boundary_edge_count(&self) -> usize {
        self.boundary_loops.iter().map(|l| l.len()).sum()
    }

    /// Flat list of boundary edges in canonical order (loop by loop, along
    /// each loop's orientation): `(loop, edge, tail vertex, head vertex, length)`.
    pub fn boundary_edges(&self) -> Vec<(usize, usize, usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.boundary_edge_count());
        for (li, lp) in self.boundary_loops.iter().enumerate() {
            let n = lp.len();
            for i in 0..n {
                out.push((li, i, lp[i], lp[(i + 1) % n], self.boundary_lengths[li][i]));
            }
        }
        out
    }

    /// Length of a boundary loop.
    pub fn loop_length(&self, l: usize) -> f64 {
        self.boundary_lengths[l].iter().sum()
    }

    /// Set of vertices lying on any boundary loop.
    pub fn boundary_vertex_set(&self) -> HashSet<usize> {
        self.boundary_loops.iter().flatten().copied().collect()
    }

    /// Edge lengths of triangle `t` as stored (edge `i` opposite corner `i`).
    pub fn triangle_lengths(&self, t: usize) -> [f64; 3] {
        self.tri_lengths[t]
    }

    /// Area of triangle `t` from its intrinsic edge lengths.
    pub fn triangle_area(&self, t: usize) -> f64 {
        heron(self.tri_lengths[t])
    }

    /// Interior angles of triangle `t` at its three corners.
    pub fn corner_angles(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.tri_lengths[t];
        // Angle at corner i is opposite edge i.
        let ang = |opp: f64, x: f64, y: f64| ((x * x + y * y - opp * opp) / (2.0 * x * y)).clamp(-1.0, 1.0).acos();
        [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
    }

    /// Sum of incident triangle angles at a vertex.
    pub fn vertex_angle_sum(&self, v: usize) -> f64 {
        let mut sum = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                if tri[i] == v {
                    sum += self.corner_angles(t)[i];
                }
            }
        }
        sum
    }

    /// Genus, boundary count and Euler characteristic.
    pub fn topology(&self) -> Result<Topology> {
        let v = self.vertices.len() as i64;
        let f = self.triangles.len() as i64;
        let e = self.edge_count() as i64;
        let chi = v - e + f;
        let k = self.boundary_loops.len();
        let two_genus = 2 - chi - k as i64;
        if two_genus < 0 || two_genus % 2 != 0 {
            return Err(MeshError::BrokenTopology { chi, k });
        }
        Ok(Topology {
            genus: (two_genus / 2) as usize,
            boundary_count: k,
            euler: chi,
        })
    }

    pub fn edge_count(&self) -> usize {
        let mut edges = HashSet::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Rescales the metric (and coordinates) by a positive factor.
    pub fn scaled(&self, t: f64) -> Result<SurfaceMesh> {
        if !(t > 0.0) {
            return Err(MeshError::InvalidParameter(format!("scale factor {t} must be positive")));
        }
        let vertices = self.vertices.iter().map(|p| [p[0] * t, p[1] * t, p[2] * t]).collect();
        let tri_lengths = self.tri_lengths.iter().map(|l| [l[0] * t, l[1] * t, l[2] * t]).collect();
        Self::from_parts(vertices, self.triangles.clone(), tri_lengths, self.embedded)
    }

    /// Runs the full invariant suite; cheap enough to call from tests.
    pub fn validate(&self) -> Result<()> {
        let mut copy = self.clone();
        copy.validate_core()?;
        copy.extract_boundary()?;
        if copy.boundary_loops.len() != self.boundary_loops.len() {
            return Err(MeshError::BoundaryWalk(0));
        }
        Ok(())
    }

    fn validate_core(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.triangles.is_empty() {
            return Err(MeshError::InvalidParameter("mesh has no triangles".into()));
        }
        let mut used = vec![false; nv];
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange(v));
                }
                used[v] = true;
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::DegenerateTriangle(ti));
            }
            let l = self.tri_lengths[ti];
            let scale = l[0].max(l[1]).max(l[2]);
            if !(heron(l) > 1e-14 * scale * scale) {
                return Err(MeshError::DegenerateTriangle(ti));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::UnusedVertex(v));
        }

        // Each directed edge at most once; interior edges carry equal lengths
        // in both incident triangles.
        let mut directed: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let a = t[(i + 1) % 3];
                let b = t[(i + 2) % 3];
                let len = self.tri_lengths[ti][i];
                if directed.insert((a, b), (ti, len)).is_some() {
                    return Err(MeshError::NonManifoldEdge(a, b));
                }
            }
        }
        for (&(a, b), &(_, len)) in &directed {
            if let Some(&(_, len2)) = directed.get(&(b, a)) {
                if (len - len2).abs() > 1e-9 * len.max(len2) {
                    return Err(MeshError::MetricMismatch(a, b));
                }
            }
        }

        // Connectivity over triangles sharing an edge.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.triangles.len()];
        for (&(a, b), &(ti, _)) in &directed {
            if let Some(&(tj, _)) = directed.get(&(b, a)) {
                adj[ti].push(tj);
            }
        }
        let mut seen = vec![false; self.triangles.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(t) = queue.pop_front() {
            for &u in &adj[t] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(MeshError::Disconnected);
        }
        Ok(())
    }

    fn directed_edge_map(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                m.insert((t[i], t[(i + 1) % 3]), ti);
            }
        }
        m
    }

    fn extract_boundary(&mut self) -> Result<()> {
        let directed = self.directed_edge_map();
        // Boundary directed edges: reverse is absent. With counter-clockwise
        // triangles these run with the surface on their left.
        let mut boundary: HashSet<(usize, usize)> = directed
            .keys()
            .filter(|&&(a, b)| !directed.contains_key(&(b, a)))
            .copied()
            .collect();
        let third = |ti: usize, a: usize, b: usize| -> usize {
            let t = self.triangles[ti];
            *t.iter().find(|&&v| v != a && v != b).unwrap()
        };
        let mut loops = Vec::new();
        while let Some(&start) = boundary.iter().min() {
            let mut lp = Vec::new();
            let (mut a, mut b) = start;
            loop {
                boundary.remove(&(a, b));
                lp.push(a);
                // Rotate the triangle fan around b to find the outgoing
                // boundary edge.
                let ti = *directed.get(&(a, b)).ok_or(MeshError::BoundaryWalk(b))?;
                let mut y = third(ti, a, b);
                let mut guard = 0;
                while let Some(&tj) = directed.get(&(y, b)) {
                    y = third(tj, y, b);
                    guard += 1;
                    if guard > self.triangles.len() {
                        return Err(MeshError::BoundaryWalk(b));
                    }
                }
                let next = (b, y);
                if next == start {
                    lp.push(b);
                    // close: lp currently lists tail vertices plus the last head
                    lp.pop();
                    break;
                }
                a = next.0;
                b = next.1;
            }
            loops.push(lp);
        }
        // Edge lengths per loop, read from the unique incident triangle.
        let mut lengths = Vec::with_capacity(loops.len());
        for lp in &loops {
            let n = lp.len();
            let mut ll = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = (lp[i], lp[(i + 1) % n]);
                let ti = *directed.get(&(a, b)).ok_or(MeshError::BoundaryWalk(a))?;
                let t = self.triangles[ti];
                let corner = (0..3).find(|&c| t[(c + 1) % 3] == a && t[(c + 2) % 3] == b).unwrap();
                ll.push(self.tri_lengths[ti][corner]);
            }
            lengths.push(ll);
        }
        self.boundary_loops = loops;
        self.boundary_lengths = lengths;
        Ok(())
    }

    /// Position of a vertex within a boundary loop, if it lies on one.
    pub fn loop_position(&self, v: usize) -> Option<(usize, usize)> {
        for (li, lp) in self.boundary_loops.iter().enumerate() {
            if let Some(pos) = lp.iter().position(|&x| x == v) {
                return Some((li, pos));
            }
        }
        None
    }

    /// Converts a consecutive vertex run on a loop into its edge-range form.
    pub fn arc_edges(&self, loop_idx: usize, vertices: &[usize]) -> Result<BoundaryArc> {
        if vertices.len() < 2 {
            return Err(MeshError::InvalidParameter("arc needs at least 2 vertices".into()));
        }
        let lp = self
            .boundary_loops
            .get(loop_idx)
            .ok_or_else(|| MeshError::InvalidParameter(format!("no boundary loop {loop_idx}")))?;
        let n = lp.len();
        let start = lp
            .iter()
            .position(|&x| x == vertices[0])
            .ok_or_else(|| MeshError::InvalidParameter(format!("vertex {} not on loop {loop_idx}", vertices[0])))?;
        for (i, &v) in vertices.iter().enumerate() {
            if lp[(start + i) % n] != v {
                return Err(MeshError::InvalidParameter(
                    "arc vertices are not consecutive along the loop".into(),
                ));
            }
        }
        Ok(BoundaryArc {
            loop_idx,
            start_edge: start,
            edge_count: vertices.len() - 1,
        })
    }

    /// Vertex run of an edge-range arc, in loop order.
    pub fn arc_vertices(&self, arc: &BoundaryArc) -> Vec<usize> {
        let lp = &self.boundary_loops[arc.loop_idx];
        let n = lp.len();
        (0..=arc.edge_count).map(|i| lp[(arc.start_edge + i) % n]).collect()
    }

    /// Total length of an edge-range arc.
    pub fn arc_length(&self, arc: &BoundaryArc) -> f64 {
        let ll = &self.boundary_lengths[arc.loop_idx];
        let n = ll.len();
        (0..arc.edge_count).map(|i| ll[(arc.start_edge + i) % n]).sum()
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Triangle area from edge lengths, in a numerically stable form.
fn heron(l: [f64; 3]) -> f64 {
    // Kahan's stable ordering: a >= b >= c.
    let mut s = l;
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let (a, b, c) = (s[0], s[1], s[2]);
    let term = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if term <= 0.0 {
        0.0
    } else {
        0.25 * term.sqrt()
    }
}

/// Planar polar-grid triangulation of a disk of the given radius.
///
/// Topology `(0, 1, 1)`; the boundary loop has `n_sectors` vertices forming a
/// regular polygon inscribed in the circle.
pub fn build_disk(n_rings: usize, n_sectors: usize, radius: f64) -> Result<SurfaceMesh> {
    if n_rings < 1 {
        return Err(MeshError::InvalidParameter("n_rings must be >= 1".into()));
    }
    if n_sectors < 3 {
        return Err(MeshError::InvalidParameter("n_sectors must be >= 3".into()));
    }
    if !(radius > 0.0) {
        return Err(MeshError::InvalidParameter("radius must be positive".into()));
    }
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    for ring in 1..=n_rings {
        let r = radius * ring as f64 / n_rings as f64;
        for j in 0..n_sectors {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n_sectors as f64;
            vertices.push([r * th.cos(), r * th.sin(), 0.0]);
        }
    }
    let at = |ring: usize, j: usize| 1 + (ring - 1) * n_sectors + (j % n_sectors);
    let mut triangles = Vec::new();
    for j in 0..n_sectors {
        triangles.push([0, at(1, j), at(1, j + 1)]);
    }
    for ring in 1..n_rings {
        for j in 0..n_sectors {
            let (a, b) = (at(ring, j), at(ring, j + 1));
            let (c, d) = (at(ring + 1, j), at(ring + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    SurfaceMesh::from_coordinates(vertices, triangles)
}

/// Flat cylinder `[-T, T] x S^1` of circumference `2 pi`, embedded as a right
/// cylinder of radius 1. Topology `(0, 2, 0)`.
pub fn build_cylinder(half_height: f64, n_axial: usize, n_circ: usize) -> Result<SurfaceMesh> {
    if !(half_height > 0.0) {
        return Err(MeshError::InvalidParameter("half_height must be positive".into()));
    }
    if n_axial < 1 {
        return Err(MeshError::InvalidParameter("n_axial must be >= 1".into()));
    }
    if n_circ < 3 {
        return Err(MeshError::InvalidParameter("n_circ must be >= 3".into()));
    }
    let mut vertices = Vec::with_capacity((n_axial + 1) * n_circ);
    for i in 0..=n_axial {
        let t = -half_height + 2.0 * half_height * i as f64 / n_axial as f64;
        for j in 0..n_circ {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n_circ as f64;
            vertices.push([th.cos(), th.sin(), t]);
        }
    }
    let at = |i: usize, j: usize| i * n_circ + (j % n_circ);
    let mut triangles = Vec::new();
    for i in 0..n_axial {
        for j in 0..n_circ {
            let (a, b) = (at(i, j), at(i, j + 1));
            let (c, d) = (at(i + 1, j + 1), at(i + 1, j));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    SurfaceMesh::from_coordinates(vertices, triangles)
}

/// Removes the open star of an interior vertex, opening a new boundary loop
/// along its link. Genus unchanged, boundary count +1, Euler characteristic -1.
pub fn puncture(mesh: &SurfaceMesh, vertex: usize) -> Result<SurfaceMesh> {
    if vertex >= mesh.vertex_count() {
        return Err(MeshError::IndexOutOfRange(vertex));
    }
    let boundary = mesh.boundary_vertex_set();
    if boundary.contains(&vertex) {
        return Err(MeshError::BadPuncture(format!("vertex {vertex} lies on the boundary")));
    }
    let mut star = Vec::new();
    let mut link: HashSet<usize> = HashSet::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if t.contains(&vertex) {
            star.push(ti);
            for &v in t {
                if v != vertex {
                    link.insert(v);
                }
            }
        }
    }
    if star.len() < 3 {
        return Err(MeshError::BadPuncture(format!(
            "vertex {vertex} has only {} incident triangles",
            star.len()
        )));
    }
    if link.iter().any(|v| boundary.contains(v)) {
        return Err(MeshError::BadPuncture(
            "link touches the boundary; removal would pinch the surface".into(),
        ));
    }
    let star_set: HashSet<usize> = star.iter().copied().collect();
    let mut vertices = Vec::with_capacity(mesh.vertex_count() - 1);
    let mut remap = vec![usize::MAX; mesh.vertex_count()];
    for (v, p) in mesh.vertices.iter().enumerate() {
        if v != vertex {
            remap[v] = vertices.len();
            vertices.push(*p);
        }
    }
    let mut triangles = Vec::new();
    let mut tri_lengths = Vec::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if !star_set.contains(&ti) {
            triangles.push([remap[t[0]], remap[t[1]], remap[t[2]]]);
            tri_lengths.push(mesh.tri_lengths[ti]);
        }
    }
    SurfaceMesh::from_parts(vertices, triangles, tri_lengths, mesh.embedded).map_err(|e| match e {
        MeshError::Disconnected => MeshError::BadPuncture("removal would disconnect the mesh".into()),
        other => other,
    })
}

/// Glues two matched boundary arcs by the orientation-reversing simplicial
/// identification (first vertex of arc1 with last vertex of arc2, and so on).
/// Genus +1, boundary count -1, Euler characteristic -1.
pub fn glue_segments(mesh: &SurfaceMesh, spec: &GluingSpec) -> Result<GlueResult> {
    let (l1, ref a1) = spec.arc1;
    let (l2, ref a2) = spec.arc2;
    if l1 == l2 {
        return Err(MeshError::BadGluing("arcs lie on the same boundary loop".into()));
    }
    let arc1 = mesh.arc_edges(l1, a1).map_err(|e| MeshError::BadGluing(e.to_string()))?;
    let arc2 = mesh.arc_edges(l2, a2).map_err(|e| MeshError::BadGluing(e.to_string()))?;
    let m = arc1.edge_count;
    if m < 2 {
        return Err(MeshError::BadGluing("arcs must contain at least 2 edges".into()));
    }
    if arc2.edge_count != m {
        return Err(MeshError::BadGluing(format!(
            "edge counts differ: {} vs {}",
            m, arc2.edge_count
        )));
    }
    let set1: HashSet<usize> = a1.iter().copied().collect();
    if a2.iter().any(|v| set1.contains(v)) {
        return Err(MeshError::BadGluing("arcs are not disjoint".into()));
    }
    // Corresponding edge i of arc1 is identified with edge m-1-i of arc2.
    let ll1 = mesh.loop_edge_lengths(l1);
    let ll2 = mesh.loop_edge_lengths(l2);
    let n1 = ll1.len();
    let n2 = ll2.len();
    for i in 0..m {
        let e1 = ll1[(arc1.start_edge + i) % n1];
        let e2 = ll2[(arc2.start_edge + m - 1 - i) % n2];
        if (e1 - e2).abs() > GLUE_LENGTH_TOL * e1.max(e2) {
            return Err(MeshError::BadGluing(format!(
                "edge {i} lengths differ beyond tolerance: {e1} vs {e2}"
            )));
        }
    }
    let total = mesh.arc_length(&arc1);
    if (total - 2.0 * spec.half_length).abs() > 1e-6 * total.max(1.0) {
        return Err(MeshError::BadGluing(format!(
            "arc length {total} does not match 2*half_length = {}",
            2.0 * spec.half_length
        )));
    }

    // Identify a2[m - i] with a1[i].
    let mut target = vec![usize::MAX; mesh.vertex_count()];
    for i in 0..=m {
        target[a2[m - i]] = a1[i];
    }
    let mut vertices = Vec::new();
    let mut vertex_map = vec![usize::MAX; mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        if target[v] == usize::MAX {
            vertex_map[v] = vertices.len();
            vertices.push(mesh.vertices[v]);
        }
    }
    for v in 0..mesh.vertex_count() {
        if target[v] != usize::MAX {
            vertex_map[v] = vertex_map[target[v]];
        }
    }
    let mut triangles = Vec::with_capacity(mesh.triangle_count());
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let nt = [vertex_map[t[0]], vertex_map[t[1]], vertex_map[t[2]]];
        if nt[0] == nt[1] || nt[1] == nt[2] || nt[0] == nt[2] {
            return Err(MeshError::BadGluing(format!(
                "identification collapses triangle {ti}"
            )));
        }
        triangles.push(nt);
    }
    let quotient = SurfaceMesh::from_parts(vertices, triangles, mesh.tri_lengths.clone(), false)
        .map_err(|e| match e {
            MeshError::NonManifoldEdge(a, b) => MeshError::BadGluing(format!(
                "identification creates a non-manifold edge ({a}, {b})"
            )),
            other => other,
        })?;
    Ok(GlueResult {
        mesh: quotient,
        vertex_map,
    })
}

/// Uniform 1-to-4 subdivision. New boundary vertices are optionally snapped
/// onto the analytic boundary curve via `snap`.
pub fn refine(mesh: &SurfaceMesh, snap: Option<&dyn Fn([f64; 3]) -> [f64; 3]>) -> Result<SurfaceMesh> {
    if !mesh.embedded {
        return Err(MeshError::NotEmbedded);
    }
    let directed = mesh.directed_edge_map();
    let is_boundary = |a: usize, b: usize| !directed.contains_key(&(b, a)) || !directed.contains_key(&(a, b));
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&v) = midpoint.get(&key) {
            return v;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let mut p = [
            0.5 * (pa[0] + pb[0]),
            0.5 * (pa[1] + pb[1]),
            0.5 * (pa[2] + pb[2]),
        ];
        if is_boundary(a, b) {
            if let Some(f) = snap {
                p = f(p);
            }
        }
        let v = vertices.len();
        vertices.push(p);
        midpoint.insert(key, v);
        v
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangle_count());
    for t in &mesh.triangles {
        let [a, b, c] = *t;
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    SurfaceMesh::from_coordinates(vertices, triangles)
}

/// Projection of boundary midpoints onto a circle of the given radius in the
/// z = const plane (for refined disks).
pub fn snap_to_circle(radius: f64) -> impl Fn([f64; 3]) -> [f64; 3] {
    move |p| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r == 0.0 {
            p
        } else {
            [p[0] * radius / r, p[1] * radius / r, p[2]]
        }
    }
}

/// Projection of boundary midpoints onto the unit cylinder (for refined
/// cylinders); preserves the axial coordinate.
pub fn snap_to_cylinder() -> impl Fn([f64; 3]) -> [f64; 3] {
    move |p| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r == 0.0 {
            p
        } else {
            [p[0] / r, p[1] / r, p[2]]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disk_single_fan() {
        let m = build_disk(1, 3, 1.0).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.triangle_count(), 3);
        let t = m.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 1, 1));
    }

    #[test]
    fn disk_topology() {
        let m = build_disk(3, 12, 1.0).unwrap();
        let t = m.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 1, 1));
        assert_eq!(m.boundary_loops()[0].len(), 12);
        m.validate().unwrap();
    }

    #[test]
    fn disk_boundary_scales() {
        let m1 = build_disk(2, 16, 1.0).unwrap();
        let m2 = build_disk(2, 16, 2.0).unwrap();
        assert_relative_eq!(m2.loop_length(0), 2.0 * m1.loop_length(0), max_relative = 1e-12);
        // Inscribed polygon perimeter.
        let n = 16.0_f64;
        assert_relative_eq!(
            m1.loop_length(0),
            n * 2.0 * (std::f64::consts::PI / n).sin(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn disk_bad_params() {
        assert!(build_disk(0, 8, 1.0).is_err());
        assert!(build_disk(2, 2, 1.0).is_err());
        assert!(build_disk(2, 8, -1.0).is_err());
    }

    #[test]
    fn cylinder_topology_and_boundary() {
        let m = build_cylinder(1.0, 4, 16).unwrap();
        let t = m.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 2, 0));
        // Two polygonal circles; length independent of the half-height.
        let m2 = build_cylinder(3.0, 4, 16).unwrap();
        let total: f64 = (0..2).map(|l| m.loop_length(l)).sum();
        let total2: f64 = (0..2).map(|l| m2.loop_length(l)).sum();
        assert_relative_eq!(total, total2, max_relative = 1e-12);
        assert_relative_eq!(total, 2.0 * 16.0 * 2.0 * (std::f64::consts::PI / 16.0).sin(), max_relative = 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn puncture_disk_and_cylinder() {
        let m = build_disk(3, 12, 1.0).unwrap();
        let p = puncture(&m, 0).unwrap();
        let t = p.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 2, 0));
        p.validate().unwrap();

        let c = build_cylinder(1.0, 4, 12).unwrap();
        // Interior vertex: row 2.
        let pc = puncture(&c, 2 * 12 + 3).unwrap();
        let t = pc.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 3, -1));
    }

    #[test]
    fn puncture_twice_distant() {
        let m = build_disk(5, 16, 1.0).unwrap();
        let a = puncture(&m, 0).unwrap();
        // Vertex on ring 3, away from the fresh hole at the center.
        let v = 1 + 2 * 16 + 8;
        let b = puncture(&a, v - 1).unwrap(); // index shifted by removing vertex 0
        let t = b.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 3, -1));
    }

    #[test]
    fn puncture_rejects_boundary_vertex() {
        let m = build_disk(2, 8, 1.0).unwrap();
        let bv = m.boundary_loops()[0][0];
        assert!(matches!(puncture(&m, bv), Err(MeshError::BadPuncture(_))));
    }

    fn cylinder_glue_spec(mesh: &SurfaceMesh, m: usize) -> GluingSpec {
        let lp0 = &mesh.boundary_loops()[0];
        let lp1 = &mesh.boundary_loops()[1];
        let n0 = lp0.len();
        let n1 = lp1.len();
        let arc1: Vec<usize> = (0..=m).map(|i| lp0[i % n0]).collect();
        let arc2: Vec<usize> = (0..=m).map(|i| lp1[i % n1]).collect();
        let mut spec = GluingSpec {
            arc1: (0, arc1),
            arc2: (1, arc2),
            half_length: 0.0,
        };
        let arc = mesh.arc_edges(0, &spec.arc1 .1).unwrap();
        spec.half_length = 0.5 * mesh.arc_length(&arc);
        spec
    }

    #[test]
    fn glue_cylinder_counts_and_topology() {
        let m = build_cylinder(1.0, 4, 16).unwrap();
        let spec = cylinder_glue_spec(&m, 4);
        let v0 = m.vertex_count();
        let e0 = m.edge_count();
        let f0 = m.triangle_count();
        let g = glue_segments(&m, &spec).unwrap();
        let t = g.mesh.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (1, 1, -1));
        assert_eq!(g.mesh.vertex_count(), v0 - 5);
        assert_eq!(g.mesh.edge_count(), e0 - 4);
        assert_eq!(g.mesh.triangle_count(), f0);
        g.mesh.validate().unwrap();
    }

    #[test]
    fn glue_three_holes_to_genus_one() {
        let c = build_cylinder(1.0, 6, 16).unwrap();
        let p = puncture(&c, 3 * 16 + 8).unwrap();
        assert_eq!(p.topology().unwrap().boundary_count, 3);
        // The two original circles keep matched subdivisions.
        let (l1, l2) = {
            let mut circles = Vec::new();
            for (li, lp) in p.boundary_loops().iter().enumerate() {
                if lp.len() == 16 {
                    circles.push(li);
                }
            }
            (circles[0], circles[1])
        };
        let a1: Vec<usize> = (0..=3).map(|i| p.boundary_loops()[l1][i]).collect();
        let a2: Vec<usize> = (0..=3).map(|i| p.boundary_loops()[l2][i]).collect();
        let arc = p.arc_edges(l1, &a1).unwrap();
        let spec = GluingSpec {
            arc1: (l1, a1),
            arc2: (l2, a2),
            half_length: 0.5 * p.arc_length(&arc),
        };
        let g = glue_segments(&p, &spec).unwrap();
        let t = g.mesh.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (1, 2, -2));
    }

    #[test]
    fn glue_endpoint_angle_sum_near_two_pi() {
        let m = build_cylinder(1.0, 4, 32).unwrap();
        let spec = cylinder_glue_spec(&m, 4);
        // Flat-mesh angle defect near the arcs of the source mesh.
        let mut delta: f64 = 0.0;
        for &v in spec.arc1 .1.iter().chain(spec.arc2 .1.iter()) {
            delta = delta.max((m.vertex_angle_sum(v) - std::f64::consts::PI).abs());
        }
        let g = glue_segments(&m, &spec).unwrap();
        for &old in &[spec.arc1 .1[0], *spec.arc1 .1.last().unwrap()] {
            let v = g.vertex_map[old];
            let sum = g.mesh.vertex_angle_sum(v);
            assert!(
                (sum - 2.0 * std::f64::consts::PI).abs() <= 2.0 * delta + 1e-9,
                "angle sum {sum} differs from 2 pi beyond defect {delta}"
            );
        }
    }

    #[test]
    fn glue_preserves_boundary_away_from_arcs() {
        let m = build_cylinder(1.0, 4, 16).unwrap();
        let before: f64 = (0..2).map(|l| m.loop_length(l)).sum();
        let spec = cylinder_glue_spec(&m, 4);
        let arc = m.arc_edges(0, &spec.arc1 .1).unwrap();
        let removed = 2.0 * m.arc_length(&arc);
        let g = glue_segments(&m, &spec).unwrap();
        assert_eq!(g.mesh.boundary_loops().len(), 1);
        assert_relative_eq!(g.mesh.loop_length(0), before - removed, max_relative = 1e-12);
    }

    #[test]
    fn glue_identification_is_a_bijection() {
        let m = build_cylinder(1.0, 4, 16).unwrap();
        let spec = cylinder_glue_spec(&m, 4);
        let g = glue_segments(&m, &spec).unwrap();
        let mm = spec.arc1 .1.len() - 1;
        let mut seen = HashSet::new();
        for i in 0..=mm {
            let im1 = g.vertex_map[spec.arc1 .1[i]];
            let im2 = g.vertex_map[spec.arc2 .1[mm - i]];
            assert_eq!(im1, im2);
            assert!(seen.insert(im1), "arc vertex mapped twice");
        }
    }

    #[test]
    fn glue_rejects_same_loop_and_mismatches() {
        let m = build_cylinder(1.0, 4, 16).unwrap();
        let lp0: Vec<usize> = m.boundary_loops()[0].clone();
        let bad = GluingSpec {
            arc1: (0, lp0[0..4].to_vec()),
            arc2: (0, lp0[8..12].to_vec()),
            half_length: 1.0,
        };
        assert!(matches!(glue_segments(&m, &bad), Err(MeshError::BadGluing(_))));

        let mut spec = cylinder_glue_spec(&m, 4);
        spec.arc2 .1.pop();
        assert!(glue_segments(&m, &spec).is_err());
    }

    #[test]
    fn refine_disk_keeps_topology_and_snaps() {
        let m = build_disk(2, 8, 1.0).unwrap();
        let snap = snap_to_circle(1.0);
        let r = refine(&m, Some(&snap)).unwrap();
        let t = r.topology().unwrap();
        assert_eq!((t.genus, t.boundary_count, t.euler), (0, 1, 1));
        assert_eq!(r.boundary_loops()[0].len(), 16);
        for &v in &r.boundary_loops()[0] {
            let p = r.vertices()[v];
            assert_relative_eq!((p[0] * p[0] + p[1] * p[1]).sqrt(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn scaled_mesh_metric() {
        let m = build_disk(2, 8, 1.0).unwrap();
        let s = m.scaled(3.0).unwrap();
        assert_relative_eq!(s.loop_length(0), 3.0 * m.loop_length(0), max_relative = 1e-12);
    }
}
