//! Conforming triangulations with newest-vertex bisection.
//!
//! Every triangle is stored as `[a, b, c]` in counter-clockwise order. The
//! refinement edge is always the local edge opposite vertex `c` (that is the
//! edge `a-b`), and `c` is the newest vertex. Bisecting `[a, b, c]` at the
//! midpoint `m` of `a-b` yields the children `[c, a, m]` and `[b, c, m]`,
//! which keeps the convention intact for the next generation.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Local index of the refinement edge (the edge opposite local vertex 2).
pub const REFINEMENT_EDGE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    UnitSquare,
    LShape,
    Slit,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::UnitSquare => "unit_square",
            DomainKind::LShape => "l_shape",
            DomainKind::Slit => "slit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit_square" | "square" => Some(DomainKind::UnitSquare),
            "l_shape" | "lshape" => Some(DomainKind::LShape),
            "slit" => Some(DomainKind::Slit),
            _ => None,
        }
    }

    /// Area of the domain.
    pub fn area(self) -> f64 {
        match self {
            DomainKind::UnitSquare | DomainKind::Slit => 1.0,
            DomainKind::LShape => 0.75,
        }
    }

    fn default_cells(self) -> usize {
        match self {
            DomainKind::UnitSquare => 1,
            DomainKind::LShape | DomainKind::Slit => 2,
        }
    }
}

/// Description of a coarse mesh.
///
/// The coarse mesh is a structured grid with `cells_per_side` squares along
/// the unit length, each split along its (0,0)-(1,1) diagonal. For the
/// L-shape and the slit the cell count must be even so that the line
/// `x = 1/2` and `y = 1/2` are mesh lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub initial_refinements: usize,
    pub cells_per_side: usize,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, initial_refinements: usize) -> Self {
        Self {
            kind,
            initial_refinements,
            cells_per_side: kind.default_cells(),
        }
    }

    pub fn with_cells(mut self, cells_per_side: usize) -> Self {
        self.cells_per_side = cells_per_side;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    parent: Vec<Option<usize>>,
    generation: Vec<u32>,
    /// For vertices created by bisection: the endpoints of the bisected edge.
    vertex_parents: Vec<Option<[usize; 2]>>,
    edges: Vec<[usize; 2]>,
    /// `tri_edges[t][k]` is the global edge opposite local vertex `k`.
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[Option<usize>; 2]>,
}

impl Mesh {
    /// Builds a mesh from raw vertex and triangle lists.
    ///
    /// Triangles must be counter-clockwise; local edge 2 (`t[0]-t[1]`) is
    /// taken as the refinement edge.
    pub fn from_parts(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        let nt = triangles.len();
        let mesh = Self::assemble(
            vertices,
            triangles,
            vec![None; nt],
            vec![0; nt],
            vec![None; nv],
        )?;
        Ok(mesh)
    }

    fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        parent: Vec<Option<usize>>,
        generation: Vec<u32>,
        vertex_parents: Vec<Option<[usize; 2]>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::with_capacity(edges.capacity());
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.capacity());

        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is not positively oriented (signed area {area:e})"
                )));
            }
            let mut te = [0usize; 3];
            for (k, slot) in te.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                match edge_tris[e] {
                    [None, _] => edge_tris[e][0] = Some(t),
                    [Some(_), None] => edge_tris[e][1] = Some(t),
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "edge {}-{} is shared by more than two triangles",
                            key.0, key.1
                        )))
                    }
                }
                *slot = e;
            }
            tri_edges.push(te);
        }

        let mut boundary = vec![false; nv];
        for (e, tris) in edge_tris.iter().enumerate() {
            if tris[1].is_none() {
                boundary[edges[e][0]] = true;
                boundary[edges[e][1]] = true;
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary,
            parent,
            generation,
            vertex_parents,
            edges,
            tri_edges,
            edge_tris,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary.iter().enumerate().filter(|(_, b)| **b).map(|(v, _)| v)
    }

    pub fn num_interior_vertices(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    pub fn vertex_parents(&self, v: usize) -> Option<[usize; 2]> {
        self.vertex_parents[v]
    }

    /// Global edges, stored with the lower vertex index first.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1].is_none()
    }

    pub fn refinement_edge(&self, t: usize) -> [usize; 2] {
        let tri = self.triangles[t];
        [tri[0], tri[1]]
    }

    pub fn points(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.points(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Unit normal of edge `e`: the tangent from the lower to the higher
    /// vertex index, rotated clockwise.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let len = dist(p, q);
        [(q[1] - p[1]) / len, -(q[0] - p[0]) / len]
    }

    /// +1 if the global normal of local edge `k` points out of triangle `t`.
    pub fn edge_sign(&self, t: usize, k: usize) -> f64 {
        let tri = self.triangles[t];
        if tri[(k + 1) % 3] < tri[(k + 2) % 3] {
            1.0
        } else {
            -1.0
        }
    }

    /// Gradients of the barycentric coordinates on triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.points(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ]
    }

    /// Maps barycentric coordinates on triangle `t` to physical coordinates.
    pub fn map_point(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.points(t);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Checks orientation and conformity.
    ///
    /// Every edge already has at most two triangles (enforced on
    /// construction). A hanging node shows up as a single-sided edge `a-b`
    /// whose midpoint `m` closes single-sided edges `a-m` and `m-b`. The test
    /// is topological, so vertices duplicated along a slit are not flagged.
    pub fn check_conforming(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has nonpositive area")));
            }
        }
        let mut single: HashMap<(usize, usize), usize> = HashMap::new();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); self.num_vertices()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.is_boundary_edge(e) {
                single.insert((a, b), e);
                neighbours[a].push(b);
                neighbours[b].push(a);
            }
        }
        for (&(a, b), &e) in &single {
            let mid = self.edge_midpoint(e);
            let tol = 1e-12 * self.edge_length(e);
            for &m in &neighbours[a] {
                let p = self.vertices[m];
                let at_mid = (p[0] - mid[0]).abs() <= tol && (p[1] - mid[1]).abs() <= tol;
                if at_mid && single.contains_key(&(m.min(b), m.max(b))) {
                    return Err(Error::InvalidMesh(format!("hanging node {m} on edge {a}-{b}")));
                }
            }
        }
        Ok(())
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds the coarse mesh of the requested domain and refines it uniformly
/// `initial_refinements` times.
pub fn create_domain(spec: &DomainSpec) -> Result<Mesh> {
    let n = spec.cells_per_side;
    if n == 0 {
        return Err(Error::InvalidParameter("cells_per_side must be positive".into()));
    }
    if spec.kind != DomainKind::UnitSquare && n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "{} needs an even cells_per_side, got {n}",
            spec.kind.name()
        )));
    }
    let half = n / 2;
    let h = 1.0 / n as f64;

    let mut ids: HashMap<(usize, usize, bool), usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    // Along the slit the cells above use their own copies of the vertices.
    let is_slit_vertex =
        |i: usize, j: usize| spec.kind == DomainKind::Slit && j == half && i > half;

    for j in 0..n {
        for i in 0..n {
            if spec.kind == DomainKind::LShape && i >= half && j < half {
                continue;
            }
            let above_slit = spec.kind == DomainKind::Slit && j == half;
            let mut vid = |ii: usize, jj: usize| -> usize {
                let upper = above_slit && jj == j && is_slit_vertex(ii, jj);
                *ids.entry((ii, jj, upper)).or_insert_with(|| {
                    vertices.push([ii as f64 * h, jj as f64 * h]);
                    vertices.len() - 1
                })
            };
            let p00 = vid(i, j);
            let p10 = vid(i + 1, j);
            let p11 = vid(i + 1, j + 1);
            let p01 = vid(i, j + 1);
            // hypotenuse p00-p11 is the refinement edge of both halves
            triangles.push([p11, p00, p10]);
            triangles.push([p00, p11, p01]);
        }
    }

    let mut mesh = Mesh::from_parts(vertices, triangles)?;
    for _ in 0..spec.initial_refinements {
        mesh = refine_uniform(&mesh);
    }
    Ok(mesh)
}

/// Newest-vertex bisection of the marked triangles.
///
/// Each marked triangle has all three edges bisected. The closure then
/// bisects the refinement edge of every triangle that has any bisected
/// edge, which keeps the result conforming. Vertex indices of `mesh` are a
/// prefix of the output's; `parent` of each output triangle is the input
/// triangle it descends from.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Mesh {
    let mut edge_marked = vec![false; mesh.num_edges()];
    let mut queue: Vec<usize> = Vec::new();
    for &t in marked {
        for &e in &mesh.tri_edges[t] {
            if !edge_marked[e] {
                edge_marked[e] = true;
                queue.extend(mesh.edge_tris[e].iter().flatten());
            }
        }
    }
    close_marking(mesh, &mut edge_marked, queue);
    bisect_marked_edges(mesh, &edge_marked)
}

/// One uniform refinement: every edge is bisected, each triangle is split
/// into four.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    bisect_marked_edges(mesh, &vec![true; mesh.num_edges()])
}

fn close_marking(mesh: &Mesh, edge_marked: &mut [bool], mut queue: Vec<usize>) {
    while let Some(t) = queue.pop() {
        let ref_edge = mesh.tri_edges[t][REFINEMENT_EDGE];
        if edge_marked[ref_edge] {
            continue;
        }
        if mesh.tri_edges[t].iter().any(|&e| edge_marked[e]) {
            edge_marked[ref_edge] = true;
            queue.extend(mesh.edge_tris[ref_edge].iter().flatten());
        }
    }
}

fn bisect_marked_edges(mesh: &Mesh, edge_marked: &[bool]) -> Mesh {
    if !edge_marked.iter().any(|&m| m) {
        // same geometry and topology; genealogy points at the input mesh
        let mut out = mesh.clone();
        out.parent = (0..mesh.num_triangles()).map(Some).collect();
        return out;
    }
    let mut vertices = mesh.vertices.clone();
    let mut vertex_parents = mesh.vertex_parents.clone();
    let mut midpoint = vec![usize::MAX; mesh.num_edges()];
    for (e, &m) in edge_marked.iter().enumerate() {
        if m {
            midpoint[e] = vertices.len();
            vertices.push(mesh.edge_midpoint(e));
            vertex_parents.push(Some(mesh.edges[e]));
        }
    }

    let mids: HashMap<(usize, usize), usize> = mesh
        .edges
        .iter()
        .zip(&midpoint)
        .filter(|(_, &m)| m != usize::MAX)
        .map(|(&[a, b], &m)| ((a, b), m))
        .collect();
    let mid_of = |a: usize, b: usize| mids.get(&(a.min(b), a.max(b))).copied();

    let mut triangles = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut parent = Vec::with_capacity(triangles.capacity());
    let mut generation = Vec::with_capacity(triangles.capacity());
    for (t, &tri) in mesh.triangles.iter().enumerate() {
        let mut stack = vec![(tri, 0u32)];
        while let Some(([a, b, c], depth)) = stack.pop() {
            match mid_of(a, b) {
                Some(m) => {
                    // push in reverse so the [c, a, m] child comes first
                    stack.push(([b, c, m], depth + 1));
                    stack.push(([c, a, m], depth + 1));
                }
                None => {
                    triangles.push([a, b, c]);
                    parent.push(Some(t));
                    generation.push(mesh.generation[t] + depth);
                }
            }
        }
    }

    Mesh::assemble(vertices, triangles, parent, generation, vertex_parents)
        .expect("bisection of a valid mesh is valid")
}
