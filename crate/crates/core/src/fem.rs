//! P1 finite elements: sigma-weighted stiffness, consistent mass, Dirichlet elimination.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::sparse::{CsrMatrix, SymAccumulator};
use crate::linalg::SymBand;
use crate::material::MaterialContrast;
use crate::mesh::{Region, TriMesh};

/// Reduced pencil `(A, M)` on the interior degrees of freedom.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Stiffness, indefinite when the contrast changes sign.
    pub a: CsrMatrix,
    /// Consistent mass, SPD.
    pub m: CsrMatrix,
    /// `dof_nodes[dof] = node`.
    pub dof_nodes: Vec<usize>,
    /// `node_dof[node]`, `None` on Dirichlet nodes.
    pub node_dof: Vec<Option<usize>>,
    pub h_max: f64,
    /// Half-bandwidth of `A` and `M` in the chosen dof ordering.
    pub bandwidth: usize,
}

/// Gradients of the barycentric coordinates and the (positive) area.
fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(p[0], p[1], p[2]);
    let inv = 1.0 / (2.0 * area);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        g[i] = [(p[j][1] - p[k][1]) * inv, (p[k][0] - p[j][0]) * inv];
    }
    (g, area)
}

/// Element stiffness `sigma * area * grad(l_i) . grad(l_j)` and mass `area (1 + d_ij) / 12`.
pub fn element_matrices(p: [[f64; 2]; 3], sigma: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let (g, area) = p1_gradients(p);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = sigma * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    (k, m)
}

fn sigma_of(contrast: &MaterialContrast, region: Region) -> f64 {
    match region {
        Region::Plus => contrast.sigma_plus(),
        Region::Minus => contrast.sigma_minus(),
    }
}

fn corners(mesh: &TriMesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.triangles[t].nodes;
    [mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]]
}

fn check_degenerate(mesh: &TriMesh) -> Result<f64> {
    let h = mesh.h_max();
    for t in 0..mesh.triangles.len() {
        let area = mesh.signed_area(t);
        if area < 1e-14 * h * h {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
    }
    Ok(h)
}

/// Stiffness and mass over all nodes, before Dirichlet elimination.
pub fn assemble_full(mesh: &TriMesh, contrast: &MaterialContrast) -> Result<(CsrMatrix, CsrMatrix)> {
    check_degenerate(mesh)?;
    let n = mesh.nodes.len();
    let mut a = SymAccumulator::new(n);
    let mut m = SymAccumulator::new(n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (ke, me) = element_matrices(corners(mesh, t), sigma_of(contrast, tri.region));
        for i in 0..3 {
            for j in i..3 {
                let (gi, gj) = (tri.nodes[i], tri.nodes[j]);
                a.add(gi, gj, ke[i][j]);
                m.add(gi, gj, me[i][j]);
            }
        }
    }
    Ok((a.build(), m.build()))
}

/// Interior nodes in the order with the smaller bandwidth: mesh order or reverse
/// Cuthill–McKee.
fn dof_ordering(mesh: &TriMesh) -> Vec<usize> {
    let n = mesh.nodes.len();
    let mut is_dirichlet = vec![false; n];
    for &b in &mesh.boundary_nodes {
        is_dirichlet[b] = true;
    }
    let natural: Vec<usize> = (0..n).filter(|&i| !is_dirichlet[i]).collect();

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for &i in &t.nodes {
            for &j in &t.nodes {
                if i != j && !is_dirichlet[i] && !is_dirichlet[j] {
                    adj[i].push(j);
                }
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let bandwidth = |order: &[usize]| {
        let mut pos = vec![usize::MAX; n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        order
            .iter()
            .flat_map(|&v| adj[v].iter().map(move |&w| (v, w)))
            .map(|(v, w)| pos[v].abs_diff(pos[w]))
            .max()
            .unwrap_or(0)
    };

    let mut seen = vec![false; n];
    let mut rcm = Vec::with_capacity(natural.len());
    let mut by_degree = natural.clone();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            rcm.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    rcm.reverse();
    if bandwidth(&rcm) < bandwidth(&natural) {
        rcm
    } else {
        natural
    }
}

/// Assemble the pencil and eliminate the Dirichlet nodes.
pub fn assemble(mesh: &TriMesh, contrast: &MaterialContrast) -> Result<AssembledSystem> {
    let h_max = check_degenerate(mesh)?;
    let dof_nodes = dof_ordering(mesh);
    let mut node_dof = vec![None; mesh.nodes.len()];
    for (d, &v) in dof_nodes.iter().enumerate() {
        node_dof[v] = Some(d);
    }
    let n = dof_nodes.len();
    let mut a = SymAccumulator::new(n);
    let mut m = SymAccumulator::new(n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (ke, me) = element_matrices(corners(mesh, t), sigma_of(contrast, tri.region));
        for i in 0..3 {
            let Some(di) = node_dof[tri.nodes[i]] else { continue };
            for j in 0..3 {
                let Some(dj) = node_dof[tri.nodes[j]] else { continue };
                if di <= dj {
                    a.add(di, dj, ke[i][j]);
                    m.add(di, dj, me[i][j]);
                }
            }
        }
    }
    let a = a.build();
    let m = m.build();
    let bandwidth = a.bandwidth().max(m.bandwidth());
    Ok(AssembledSystem {
        a,
        m,
        dof_nodes,
        node_dof,
        h_max,
        bandwidth,
    })
}

impl AssembledSystem {
    /// Wrap a raw pencil; every index is a degree of freedom and there is no mesh.
    pub fn from_matrices(a: CsrMatrix, m: CsrMatrix) -> Result<Self> {
        if a.dim() != m.dim() {
            return Err(Error::SizeMismatch {
                expected: a.dim(),
                got: m.dim(),
            });
        }
        let n = a.dim();
        let bandwidth = a.bandwidth().max(m.bandwidth());
        Ok(Self {
            a,
            m,
            dof_nodes: (0..n).collect(),
            node_dof: (0..n).map(Some).collect(),
            h_max: 0.0,
            bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Banded copy of `A - shift M` with room for pivoting fill.
    pub fn shifted_band(&self, shift: f64) -> SymBand {
        let cap = 3 * self.bandwidth.max(1);
        SymBand::from_csr_combination(&self.a, Some((-shift, &self.m)), cap)
    }

    /// Restrict a nodal vector to the degrees of freedom.
    pub fn restrict(&self, nodal: &[f64]) -> Result<Vec<f64>> {
        if nodal.len() != self.node_dof.len() {
            return Err(Error::SizeMismatch {
                expected: self.node_dof.len(),
                got: nodal.len(),
            });
        }
        Ok(self.dof_nodes.iter().map(|&v| nodal[v]).collect())
    }

    /// Nodal vector from dof values, zero on Dirichlet nodes.
    pub fn extend(&self, dofs: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.node_dof.len()];
        for (d, &v) in self.dof_nodes.iter().enumerate() {
            u[v] = dofs[d];
        }
        u
    }

    /// Matrix dump: `row col value` lines sorted, 17 significant digits.
    pub fn write_triplets<W: Write>(matrix: &CsrMatrix, mut w: W) -> Result<()> {
        for (i, j, v) in matrix.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}

/// `sqrt(sum_T area_T |grad u|^2)`, the `H^1_0` norm `||grad u||_{L^2}`.
pub fn h1_seminorm(mesh: &TriMesh, u: &[f64]) -> Result<f64> {
    if u.len() != mesh.nodes.len() {
        return Err(Error::SizeMismatch {
            expected: mesh.nodes.len(),
            got: u.len(),
        });
    }
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = p1_gradients(corners(mesh, t));
        let mut grad = [0.0; 2];
        for i in 0..3 {
            grad[0] += u[tri.nodes[i]] * g[i][0];
            grad[1] += u[tri.nodes[i]] * g[i][1];
        }
        s += area * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    Ok(s.sqrt())
}

/// Load `f = left` on `x < threshold`, `f = right` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneLoad {
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for HalfPlaneLoad {
    /// `f = 100` for `x < -0.5`, `0` otherwise.
    fn default() -> Self {
        Self {
            threshold: -0.5,
            left: 100.0,
            right: 0.0,
        }
    }
}

/// Part of the triangle `p` with `x < t` (`keep_left`) or `x >= t`.
fn clip_x(p: &[[f64; 2]], t: f64, keep_left: bool) -> Vec<[f64; 2]> {
    let inside = |q: &[f64; 2]| if keep_left { q[0] < t } else { q[0] >= t };
    let mut out = Vec::with_capacity(4);
    for i in 0..p.len() {
        let a = p[i];
        let b = p[(i + 1) % p.len()];
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let s = (t - a[0]) / (b[0] - a[0]);
            out.push([t, a[1] + s * (b[1] - a[1])]);
        }
    }
    out
}

/// Exact `int_T f * phi_i` for the piecewise-constant half-plane load, element cut
/// by polygon clipping.
pub fn load_vector(mesh: &TriMesh, f: &HalfPlaneLoad) -> Vec<f64> {
    let mut b = vec![0.0; mesh.nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = corners(mesh, t);
        let area = mesh.signed_area(t);
        for (value, keep_left) in [(f.left, true), (f.right, false)] {
            if value == 0.0 {
                continue;
            }
            let poly = clip_x(&p, f.threshold, keep_left);
            if poly.len() < 3 {
                continue;
            }
            // fan triangulation; barycentric coordinates are linear so the centroid rule is exact
            for k in 1..poly.len() - 1 {
                let (q0, q1, q2) = (poly[0], poly[k], poly[k + 1]);
                let sub = crate::mesh::signed_area(q0, q1, q2);
                if sub == 0.0 {
                    continue;
                }
                let c = [(q0[0] + q1[0] + q2[0]) / 3.0, (q0[1] + q1[1] + q2[1]) / 3.0];
                for i in 0..3 {
                    let j = (i + 1) % 3;
                    let l = (i + 2) % 3;
                    let lam = crate::mesh::signed_area(c, p[j], p[l]) / area;
                    b[tri.nodes[i]] += value * sub * lam;
                }
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_canonical, CanonicalMeshParams};

    fn unit() -> MaterialContrast {
        MaterialContrast::new(1.0, -0.5).unwrap()
    }

    #[test]
    fn element_matrices_of_unit_right_triangle() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (k, m) = element_matrices(p, 1.0);
        let k_exact = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let m_exact = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - k_exact[i][j]).abs() < 1e-15);
                assert!((m[i][j] - m_exact[i][j] / 24.0).abs() < 1e-15);
            }
        }
        let (kneg, _) = element_matrices(p, -1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(kneg[i][j], -k[i][j]);
            }
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let mut mesh = TriMesh::unit_square(2).unwrap();
        mesh.nodes[4] = [0.5, 0.0];
        let err = assemble(&mesh, &unit()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle { .. }), "{err}");
    }

    #[test]
    fn mass_sums_to_area() {
        let mesh = build_canonical(&CanonicalMeshParams::new(0.3, 6, 2)).unwrap();
        let (_, m) = assemble_full(&mesh, &unit()).unwrap();
        let total: f64 = m.triplets().map(|(_, _, v)| v).sum();
        assert!((total - mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn exact_symmetry() {
        let mesh = build_canonical(&CanonicalMeshParams::new(0.3, 6, 2)).unwrap();
        let s = assemble(&mesh, &unit()).unwrap();
        for (i, j, v) in s.a.triplets() {
            assert_eq!(v, s.a.get(j, i));
        }
        for (i, j, v) in s.m.triplets() {
            assert_eq!(v, s.m.get(j, i));
        }
    }

    #[test]
    fn h1_seminorm_cases() {
        let mesh = TriMesh::unit_square(3).unwrap();
        let c = vec![2.5; mesh.nodes.len()];
        assert_eq!(h1_seminorm(&mesh, &c).unwrap(), 0.0);
        let x: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
        assert!((h1_seminorm(&mesh, &x).unwrap() - 1.0).abs() < 1e-14);
        assert!(h1_seminorm(&mesh, &x[1..]).is_err());
    }

    #[test]
    fn load_vector_integrates_exactly() {
        // f = 1 on x < 0.3 over the unit square: total 0.3, first moment in x 0.045
        let mesh = TriMesh::unit_square(5).unwrap();
        let f = HalfPlaneLoad { threshold: 0.3, left: 1.0, right: 0.0 };
        let b = load_vector(&mesh, &f);
        let total: f64 = b.iter().sum();
        assert!((total - 0.3).abs() < 1e-14);
        let moment: f64 = b.iter().zip(&mesh.nodes).map(|(bi, p)| bi * p[0]).sum();
        assert!((moment - 0.045).abs() < 1e-14);
    }

    #[test]
    fn restrict_and_extend() {
        let mesh = TriMesh::unit_square(3).unwrap();
        let s = assemble(&mesh, &unit()).unwrap();
        assert_eq!(s.dim(), 4);
        let nodal: Vec<f64> = (0..mesh.nodes.len()).map(|i| i as f64).collect();
        let d = s.restrict(&nodal).unwrap();
        let back = s.extend(&d);
        for &v in &s.dof_nodes {
            assert_eq!(back[v], nodal[v]);
        }
        for &b in &mesh.boundary_nodes {
            assert_eq!(back[b], 0.0);
        }
        assert!(s.restrict(&nodal[1..]).is_err());
    }

    #[test]
    fn triplet_dump_is_sorted() {
        let mesh = TriMesh::unit_square(3).unwrap();
        let s = assemble(&mesh, &unit()).unwrap();
        let mut buf = Vec::new();
        AssembledSystem::write_triplets(&s.a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<(usize, usize)> = text
            .lines()
            .map(|l| {
                let t: Vec<&str> = l.split(' ').collect();
                (t[0].parse().unwrap(), t[1].parse().unwrap())
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        assert_eq!(keys.len(), s.a.nnz());
    }
}
