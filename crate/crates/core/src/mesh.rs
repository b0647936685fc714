//! Triangulations of the canonical half-annulus and a plain-text mesh format.
//!
//! The canonical domain is `{(r cos t, r sin t) : delta < r < 1, 0 < t < pi}` with the
//! negative material on `0 < t < pi/4` and the positive one on `pi/4 < t < pi`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Minus,
    Plus,
}

impl Region {
    pub fn tag(self) -> u8 {
        match self {
            Region::Minus => 0,
            Region::Plus => 1,
        }
    }

    pub fn from_tag(tag: i64) -> Option<Self> {
        match tag {
            0 => Some(Region::Minus),
            1 => Some(Region::Plus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    /// Sorted, Dirichlet nodes.
    pub boundary_nodes: Vec<usize>,
    /// Edges shared by a `Minus` and a `Plus` triangle, endpoints sorted.
    pub interface_edges: Vec<[usize; 2]>,
}

/// How the rings between `r = delta` and `r = 1` are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialLayers {
    /// `n` layers, `r_i = delta^(1 - i/n)`: the same topology for every `delta`.
    Count(usize),
    /// Layers of fixed width `step` in `ln r`, anchored at `r = 1`; the innermost layer
    /// absorbs the remainder (width in `[step, 2 step)`), with at least two layers.
    Step(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalMeshParams {
    pub delta: f64,
    pub radial: RadialLayers,
    /// Angular subdivisions of `(0, pi/4)`; `(pi/4, pi)` gets three times as many.
    pub n_angular_minus: usize,
}

impl CanonicalMeshParams {
    pub fn new(delta: f64, n_radial: usize, n_angular_minus: usize) -> Self {
        Self {
            delta,
            radial: RadialLayers::Count(n_radial),
            n_angular_minus,
        }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn n_angular_total(&self) -> usize {
        4 * self.n_angular_minus
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain {
                value: self.delta,
                domain: "(0, 1)",
            });
        }
        match self.radial {
            RadialLayers::Count(n) if n < 2 => {
                return Err(Error::InvalidInput(format!("n_radial must be >= 2, got {n}")))
            }
            RadialLayers::Step(h) if !(h > 0.0 && h.is_finite()) => {
                return Err(Error::InvalidInput(format!("radial step must be positive, got {h}")))
            }
            _ => {}
        }
        if self.n_angular_minus < 1 {
            return Err(Error::InvalidInput("n_angular_minus must be >= 1".into()));
        }
        Ok(())
    }

    /// Ring radii from `delta` (index 0) to `1` (last index).
    pub fn radii(&self) -> Vec<f64> {
        let delta = self.delta;
        match self.radial {
            RadialLayers::Count(n) => (0..=n)
                .map(|i| {
                    if i == 0 {
                        delta
                    } else if i == n {
                        1.0
                    } else {
                        delta.powf(1.0 - i as f64 / n as f64)
                    }
                })
                .collect(),
            RadialLayers::Step(h) => {
                let depth = -delta.ln();
                let m = ((depth / h).floor() as usize).max(2);
                let uniform = (depth / h).floor() < 2.0;
                let mut r: Vec<f64> = (0..=m)
                    .map(|j| {
                        if j == 0 {
                            1.0
                        } else if j == m {
                            delta
                        } else if uniform {
                            (-depth * j as f64 / m as f64).exp()
                        } else {
                            (-(j as f64) * h).exp()
                        }
                    })
                    .collect();
                r.reverse();
                r
            }
        }
    }

    pub fn n_radial(&self) -> usize {
        self.radii().len() - 1
    }
}

impl TriMesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].nodes;
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].nodes;
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Longest edge over all triangles.
    pub fn h_max(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                let [a, b, c] = t.nodes;
                [(a, b), (b, c), (c, a)]
            })
            .map(|(i, j)| dist(self.nodes[i], self.nodes[j]))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.nodes[t.nodes[k]];
                let q = self.nodes[t.nodes[(k + 1) % 3]];
                let r = self.nodes[t.nodes[(k + 2) % 3]];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist(p, q) * dist(p, r));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Undirected edges with their multiplicity.
    pub fn edge_counts(&self) -> HashMap<[usize; 2], usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            let [a, b, c] = t.nodes;
            for (i, j) in [(a, b), (b, c), (c, a)] {
                *counts.entry(sorted_pair(i, j)).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge belongs to one or two triangles, and edges with one triangle
    /// join two boundary nodes.
    pub fn check_conformity(&self) -> Result<()> {
        let boundary: std::collections::HashSet<usize> =
            self.boundary_nodes.iter().copied().collect();
        let mut counts: Vec<_> = self.edge_counts().into_iter().collect();
        counts.sort_unstable();
        for (e, n) in counts {
            if n > 2 {
                return Err(Error::Mesh(format!("edge {e:?} shared by {n} triangles")));
            }
            if n == 1 && !(boundary.contains(&e[0]) && boundary.contains(&e[1])) {
                return Err(Error::Mesh(format!(
                    "edge {e:?} has a single triangle but is not on the boundary"
                )));
            }
        }
        Ok(())
    }

    fn compute_interface_edges(triangles: &[Triangle]) -> Vec<[usize; 2]> {
        let mut owner: HashMap<[usize; 2], Region> = HashMap::new();
        let mut out = Vec::new();
        for t in triangles {
            let [a, b, c] = t.nodes;
            for (i, j) in [(a, b), (b, c), (c, a)] {
                let e = sorted_pair(i, j);
                match owner.get(&e) {
                    Some(r) if *r != t.region => out.push(e),
                    Some(_) => {}
                    None => {
                        owner.insert(e, t.region);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Structured mesh of `(0,1)^2` with `n x n` cells, all `Plus`, boundary marked.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("unit square needs n >= 1".into()));
        }
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        let mut boundary = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * h, j as f64 * h]);
                if i == 0 || j == 0 || i == n || j == n {
                    boundary.push(idx(i, j));
                }
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let cell = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
                push_cell(&mut triangles, cell, (i + j) % 2 == 1, Region::Plus);
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary_nodes: boundary,
            interface_edges: Vec::new(),
        })
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn sorted_pair(i: usize, j: usize) -> [usize; 2] {
    if i < j {
        [i, j]
    } else {
        [j, i]
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Split the cell `[a, b, c, d]` (counter-clockwise) along `a-c`, or `b-d` if `flip`.
fn push_cell(out: &mut Vec<Triangle>, [a, b, c, d]: [usize; 4], flip: bool, region: Region) {
    if flip {
        out.push(Triangle { nodes: [a, b, d], region });
        out.push(Triangle { nodes: [b, c, d], region });
    } else {
        out.push(Triangle { nodes: [a, b, c], region });
        out.push(Triangle { nodes: [a, c, d], region });
    }
}

/// Structured polar mesh of the half-annulus.
///
/// Nodes are numbered ring by ring (radius-major) from `r = delta` outwards, so the
/// stiffness bandwidth is about one ring. Diagonals alternate like a checkerboard,
/// which makes the pattern mirror-symmetric across every angular grid line, in
/// particular across the interface `theta = pi/4`.
pub fn build_canonical(params: &CanonicalMeshParams) -> Result<TriMesh> {
    params.validate()?;
    let radii = params.radii();
    let nr = radii.len() - 1;
    let nm = params.n_angular_minus;
    let nt = params.n_angular_total();
    let ring = nt + 1;
    let idx = |i: usize, j: usize| i * ring + j;

    let mut nodes = Vec::with_capacity((nr + 1) * ring);
    let mut boundary = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        for j in 0..=nt {
            let p = if j == 0 {
                [r, 0.0]
            } else if j == nt {
                [-r, 0.0]
            } else if j == nm {
                let c = r * FRAC_PI_4.cos();
                [c, c]
            } else if 2 * j == nt {
                [0.0, r]
            } else {
                let t = j as f64 * PI / nt as f64;
                [r * t.cos(), r * t.sin()]
            };
            nodes.push(p);
            if i == 0 || i == nr || j == 0 || j == nt {
                boundary.push(idx(i, j));
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * nr * nt);
    for i in 0..nr {
        for j in 0..nt {
            let region = if j < nm { Region::Minus } else { Region::Plus };
            let cell = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
            push_cell(&mut triangles, cell, (i + j) % 2 == 1, region);
        }
    }
    let interface_edges = (0..nr).map(|i| [idx(i, nm), idx(i + 1, nm)]).collect();

    Ok(TriMesh {
        nodes,
        triangles,
        boundary_nodes: boundary,
        interface_edges,
    })
}

const REFLECT_TOL: f64 = 1e-12;

/// Whether the triangles touching the interface are mirror images of each other
/// across the line `y = x` (the ray `theta = pi/4`).
pub fn reflect_check(mesh: &TriMesh) -> bool {
    if mesh.interface_edges.is_empty() {
        return true;
    }
    let iface: std::collections::HashSet<usize> =
        mesh.interface_edges.iter().flatten().copied().collect();
    let near: Vec<usize> = (0..mesh.triangles.len())
        .filter(|&t| mesh.triangles[t].nodes.iter().any(|n| iface.contains(n)))
        .collect();

    let mut near_nodes: Vec<usize> = near
        .iter()
        .flat_map(|&t| mesh.triangles[t].nodes)
        .collect();
    near_nodes.sort_unstable();
    near_nodes.dedup();

    let mirror_of = |n: usize| -> Option<usize> {
        let [x, y] = mesh.nodes[n];
        near_nodes
            .iter()
            .copied()
            .find(|&m| dist(mesh.nodes[m], [y, x]) <= REFLECT_TOL)
    };
    let mut mirror = HashMap::new();
    for &n in &near_nodes {
        match mirror_of(n) {
            Some(m) => {
                mirror.insert(n, m);
            }
            None => return false,
        }
    }
    let key = |mut v: [usize; 3]| {
        v.sort_unstable();
        v
    };
    let present: std::collections::HashSet<[usize; 3]> =
        near.iter().map(|&t| key(mesh.triangles[t].nodes)).collect();
    near.iter().all(|&t| {
        let [a, b, c] = mesh.triangles[t].nodes;
        present.contains(&key([mirror[&a], mirror[&b], mirror[&c]]))
    })
}

/// Which geometry an ingested mesh claims to represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// No geometric checks beyond orientation and conformity.
    Generic,
    /// Canonical half-annulus: triangles must not straddle `theta = pi/4`.
    Canonical,
}

struct Tokens<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, std::io::Result<String>)> + 'a>>,
    current: Vec<String>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new<R: BufRead + 'a>(reader: R) -> Self {
        let it: Box<dyn Iterator<Item = _>> =
            Box::new(reader.lines().enumerate().map(|(i, l)| (i + 1, l)));
        Self {
            lines: it.peekable(),
            current: Vec::new(),
            line: 0,
        }
    }

    /// Next non-empty line split on whitespace.
    fn next_line(&mut self) -> Result<&[String]> {
        loop {
            match self.lines.next() {
                None => {
                    return Err(Error::Parse {
                        line: self.line + 1,
                        msg: "unexpected end of input".into(),
                    })
                }
                Some((n, l)) => {
                    let l = l?;
                    self.line = n;
                    let toks: Vec<String> = l.split_whitespace().map(String::from).collect();
                    if !toks.is_empty() {
                        self.current = toks;
                        return Ok(&self.current);
                    }
                }
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse {what} from {tok:?}")))
    }
}

/// Read the text mesh format:
///
/// ```text
/// N_nodes N_triangles
/// x y                      (N_nodes lines)
/// i j k region_tag         (N_triangles lines, 0-based, tag 0 = Minus, 1 = Plus)
/// N_boundary
/// b0 b1 ...                (boundary node indices, any line layout)
/// ```
///
/// Clockwise triangles are flipped.
pub fn read_mesh<R: BufRead>(reader: R, geometry: Geometry) -> Result<TriMesh> {
    let mut tk = Tokens::new(reader);
    let header = tk.next_line()?.to_vec();
    if header.len() != 2 {
        return Err(tk.err("header must be `N_nodes N_triangles`"));
    }
    let n_nodes: usize = tk.parse(&header[0], "node count")?;
    let n_tris: usize = tk.parse(&header[1], "triangle count")?;

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let l = tk.next_line()?.to_vec();
        if l.len() != 2 {
            return Err(tk.err("node line must be `x y`"));
        }
        let x: f64 = tk.parse(&l[0], "x")?;
        let y: f64 = tk.parse(&l[1], "y")?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(tk.err("non-finite coordinate"));
        }
        nodes.push([x, y]);
    }

    let mut triangles = Vec::with_capacity(n_tris);
    for t in 0..n_tris {
        let l = tk.next_line()?.to_vec();
        if l.len() != 4 {
            return Err(tk.err("triangle line must be `i j k region_tag`"));
        }
        let mut v = [0usize; 3];
        for k in 0..3 {
            v[k] = tk.parse(&l[k], "node index")?;
            if v[k] >= n_nodes {
                return Err(tk.err(format!(
                    "triangle {t} references node {} but there are {n_nodes} nodes",
                    v[k]
                )));
            }
        }
        if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
            return Err(tk.err(format!("triangle {t} repeats a node")));
        }
        let tag: i64 = tk.parse(&l[3], "region tag")?;
        let region = Region::from_tag(tag)
            .ok_or_else(|| tk.err(format!("region tag {tag} is not 0 or 1")))?;
        let area = signed_area(nodes[v[0]], nodes[v[1]], nodes[v[2]]);
        if area == 0.0 {
            return Err(tk.err(format!("triangle {t} has zero area")));
        }
        if area < 0.0 {
            v.swap(1, 2);
        }
        triangles.push(Triangle { nodes: v, region });
    }

    let l = tk.next_line()?.to_vec();
    if l.len() != 1 {
        return Err(tk.err("expected `N_boundary`"));
    }
    let n_boundary: usize = tk.parse(&l[0], "boundary count")?;
    let mut boundary = Vec::with_capacity(n_boundary);
    while boundary.len() < n_boundary {
        let l = tk.next_line()?.to_vec();
        for tok in &l {
            let b: usize = tk.parse(tok, "boundary node")?;
            if b >= n_nodes {
                return Err(tk.err(format!("boundary node {b} out of range")));
            }
            boundary.push(b);
        }
    }
    if boundary.len() != n_boundary {
        return Err(tk.err("too many boundary indices"));
    }
    boundary.sort_unstable();
    boundary.dedup();

    let interface_edges = TriMesh::compute_interface_edges(&triangles);
    let mesh = TriMesh {
        nodes,
        triangles,
        boundary_nodes: boundary,
        interface_edges,
    };
    mesh.check_conformity()?;
    if geometry == Geometry::Canonical {
        check_canonical_regions(&mesh)?;
    }
    Ok(mesh)
}

fn check_canonical_regions(mesh: &TriMesh) -> Result<()> {
    // side of the line y = x, scaled by the local size
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let sides: Vec<f64> = tri
            .nodes
            .iter()
            .map(|&n| {
                let [x, y] = mesh.nodes[n];
                (y - x) / (1.0 + x.abs() + y.abs())
            })
            .collect();
        let above = sides.iter().any(|&s| s > 1e-12);
        let below = sides.iter().any(|&s| s < -1e-12);
        if above && below {
            return Err(Error::Mesh(format!("triangle {t} straddles the interface")));
        }
        let [cx, cy] = mesh.centroid(t);
        let expected = if cy.atan2(cx) < FRAC_PI_4 {
            Region::Minus
        } else {
            Region::Plus
        };
        if expected != tri.region {
            log::warn!("triangle {t}: region tag {:?} disagrees with centroid angle", tri.region);
        }
    }
    Ok(())
}

pub fn read_mesh_file(path: &std::path::Path, geometry: Geometry) -> Result<TriMesh> {
    let f = std::fs::File::open(path)?;
    read_mesh(std::io::BufReader::new(f), geometry)
}

/// Write the text format with 17 significant digits.
pub fn write_mesh<W: Write>(mesh: &TriMesh, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", mesh.nodes.len(), mesh.triangles.len())?;
    for [x, y] in &mesh.nodes {
        writeln!(w, "{x:.16e} {y:.16e}")?;
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.nodes;
        writeln!(w, "{a} {b} {c} {}", t.region.tag())?;
    }
    writeln!(w, "{}", mesh.boundary_nodes.len())?;
    let list: Vec<String> = mesh.boundary_nodes.iter().map(|b| b.to_string()).collect();
    writeln!(w, "{}", list.join(" "))?;
    Ok(())
}
