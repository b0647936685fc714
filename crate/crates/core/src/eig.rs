//! Generalized symmetric eigenproblem `A x = lambda M x` with `A` indefinite, `M` SPD.
//!
//! Two paths: a dense reduction (Cholesky, Householder, QL) used as an oracle, and
//! shift-invert Lanczos on `(A - s M)^{-1} M` with a banded indefinite factorization
//! whose inertia certifies that no eigenvalue of smaller modulus was missed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::linalg::dense;
use crate::linalg::sparse::{axpy, dot, norm2};
use crate::linalg::{BandLdlt, Inertia};

pub const DEFAULT_DENSE_CAP: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SEED: u64 = 0x5167_f11b;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    DenseOracle,
    ShiftInvert,
}

impl SolverTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::DenseOracle => "dense",
            SolverTag::ShiftInvert => "shift_invert",
        }
    }
}

impl std::fmt::Display for SolverTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Eigenvalues of smallest modulus at one `delta`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub delta: f64,
    pub eigenvalues: Vec<f64>,
    /// `||A x - lambda M x|| / ||M x||` per pair.
    pub residuals: Vec<f64>,
    pub n_neg: usize,
    pub n_pos: usize,
    pub solver_tag: SolverTag,
    pub seed: u64,
}

impl SpectrumRecord {
    fn from_pairs(delta: f64, mut pairs: Vec<(f64, f64)>, tag: SolverTag, seed: u64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n_neg = pairs.iter().filter(|p| p.0 < 0.0).count();
        Self {
            delta,
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            residuals: pairs.iter().map(|p| p.1).collect(),
            n_neg,
            n_pos: pairs.len() - n_neg,
            solver_tag: tag,
            seed,
        }
    }

    /// Eigenvalue of smallest modulus (ties toward the negative one).
    pub fn smallest_modulus(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
    }

    /// Negative eigenvalues ordered by increasing modulus.
    pub fn negative_branch(&self) -> Vec<f64> {
        self.eigenvalues.iter().rev().copied().filter(|v| *v < 0.0).collect()
    }

    /// Nonnegative eigenvalues ordered by increasing modulus.
    pub fn positive_branch(&self) -> Vec<f64> {
        self.eigenvalues.iter().copied().filter(|v| *v >= 0.0).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    /// Largest Lanczos basis per run.
    pub max_basis: usize,
    pub max_restarts: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            k: 10,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            max_basis: 200,
            max_restarts: 40,
        }
    }
}

impl EigOptions {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

/// Typical eigenvalue magnitude `max|A| / max|M|`.
fn pencil_scale(system: &AssembledSystem) -> f64 {
    let m = system.m.max_abs();
    if m == 0.0 {
        1.0
    } else {
        system.a.max_abs() / m
    }
}

fn factor_shifted(system: &AssembledSystem, shift: f64) -> BandLdlt {
    BandLdlt::factor(system.shifted_band(shift))
}

/// Signature of `A - shift M`; `negative` counts the eigenvalues below `shift`.
pub fn inertia(system: &AssembledSystem, shift: f64) -> Inertia {
    factor_shifted(system, shift).inertia()
}

/// Most negative eigenvalue by bisection on the inertia, to relative width `rel_tol`.
/// `None` when the pencil has no negative eigenvalue.
pub fn min_eigenvalue(system: &AssembledSystem, rel_tol: f64) -> Option<f64> {
    if inertia(system, 0.0).negative == 0 {
        return None;
    }
    let mut lo = -pencil_scale(system).max(1.0);
    while inertia(system, lo).negative > 0 {
        lo *= 2.0;
    }
    let mut hi = 0.0f64;
    while hi - lo > rel_tol * lo.abs().max(hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if inertia(system, mid).negative > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Full spectrum by dense reduction, ascending.
pub fn dense_solve(system: &AssembledSystem, cap: usize) -> Result<Vec<f64>> {
    let n = system.dim();
    if n > cap {
        return Err(Error::DenseCap { dim: n, cap });
    }
    dense::generalized_eigenvalues(&system.a.to_dense(), &system.m.to_dense(), n)
}

/// `k` smallest-modulus values from a full spectrum, ties toward the negative value.
pub fn select_smallest_modulus(all: &[f64], k: usize) -> Vec<f64> {
    let mut v = all.to_vec();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    v.truncate(k);
    v.sort_by(f64::total_cmp);
    v
}

fn residual(system: &AssembledSystem, lambda: f64, x: &[f64]) -> f64 {
    let ax = system.a.apply(x);
    let mx = system.m.apply(x);
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(a, m)| a - lambda * m).collect();
    norm2(&r) / norm2(&mx)
}

fn rayleigh(system: &AssembledSystem, x: &[f64]) -> f64 {
    dot(x, &system.a.apply(x)) / dot(x, &system.m.apply(x))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dense oracle restricted to the `k` smallest-modulus eigenvalues; residuals come from
/// two steps of inverse iteration at each eigenvalue.
pub fn dense_smallest_modulus(system: &AssembledSystem, k: usize, delta: f64, cap: usize) -> Result<SpectrumRecord> {
    let all = dense_solve(system, cap)?;
    let chosen = select_smallest_modulus(&all, k);
    let scale = pencil_scale(system);
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut pairs = Vec::with_capacity(chosen.len());
    for &lambda in &chosen {
        let mut res = f64::INFINITY;
        for rel in [1e-10, 1e-8, 1e-6] {
            let f = factor_shifted(system, lambda + rel * scale.max(lambda.abs()));
            if f.is_singular() {
                continue;
            }
            let mut x = random_vector(&mut rng, system.dim());
            for _ in 0..3 {
                let mut y = system.m.apply(&x);
                f.solve_in_place(&mut y)?;
                let nrm = norm2(&y);
                x = y.into_iter().map(|v| v / nrm).collect();
            }
            res = residual(system, lambda, &x);
            break;
        }
        pairs.push((lambda, res));
    }
    Ok(SpectrumRecord::from_pairs(delta, pairs, SolverTag::DenseOracle, DEFAULT_SEED))
}

struct Locked {
    values: Vec<f64>,
    residuals: Vec<f64>,
    vecs: Vec<Vec<f64>>,
    mvecs: Vec<Vec<f64>>,
}

impl Locked {
    fn push(&mut self, lambda: f64, res: f64, x: Vec<f64>, mx: Vec<f64>) {
        self.values.push(lambda);
        self.residuals.push(res);
        self.vecs.push(x);
        self.mvecs.push(mx);
    }

    /// Remove the `M`-components along the locked vectors.
    fn deflate(&self, w: &mut [f64]) {
        for (x, mx) in self.vecs.iter().zip(&self.mvecs) {
            let c = dot(mx, w);
            axpy(-c, x, w);
        }
    }
}

/// Up to three inverse-iteration steps on a Ritz vector, keeping the best Rayleigh pair.
fn refine(
    system: &AssembledSystem,
    factor: &BandLdlt,
    shift: f64,
    locked: &Locked,
    mut y: Vec<f64>,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..3 {
        let my = system.m.apply(&y);
        let mut yy = my.clone();
        factor.solve_in_place(&mut yy)?;
        // one step of iterative refinement on the shifted solve
        let ay = system.a.apply(&yy);
        let myy0 = system.m.apply(&yy);
        let mut r: Vec<f64> = (0..yy.len()).map(|i| my[i] - (ay[i] - shift * myy0[i])).collect();
        factor.solve_in_place(&mut r)?;
        axpy(1.0, &r, &mut yy);
        locked.deflate(&mut yy);
        let myy = system.m.apply(&yy);
        let s = dot(&yy, &myy).sqrt();
        let yy: Vec<f64> = yy.iter().map(|x| x / s).collect();
        let myy: Vec<f64> = myy.iter().map(|x| x / s).collect();
        let lambda = rayleigh(system, &yy);
        let res = residual(system, lambda, &yy);
        let improved = best.as_ref().is_none_or(|b| res < 0.5 * b.1);
        y = yy.clone();
        if best.as_ref().is_none_or(|b| res < b.1) {
            best = Some((lambda, res, yy, myy));
        }
        if !improved {
            break;
        }
    }
    Ok(best.expect("at least one step"))
}

/// One Lanczos run from `start`; converged pairs are appended to `locked`.
#[allow(clippy::too_many_arguments)]
fn lanczos_run(
    system: &AssembledSystem,
    factor: &BandLdlt,
    shift: f64,
    start: Vec<f64>,
    locked: &mut Locked,
    want: usize,
    max_basis: usize,
    tol: f64,
) -> Result<()> {
    let n = system.dim();
    let free = n.saturating_sub(locked.values.len());
    let m_max = max_basis.min(free);
    if m_max == 0 {
        return Ok(());
    }
    let mut v = start;
    locked.deflate(&mut v);
    locked.deflate(&mut v);
    let mut mv = system.m.apply(&v);
    let nrm = dot(&v, &mv).sqrt();
    if !(nrm > 0.0) {
        return Ok(());
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    mv.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut mbasis: Vec<Vec<f64>> = vec![mv];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = Vec::new();
    let mut passing_before = 0;
    let mut stalled = 0;

    loop {
        let j = basis.len() - 1;
        let mut w = mbasis[j].clone();
        factor.solve_in_place(&mut w)?;
        let a = dot(&mbasis[j], &w);
        alpha.push(a);
        for _ in 0..2 {
            locked.deflate(&mut w);
            for (b, mb) in basis.iter().zip(&mbasis) {
                let c = dot(mb, &w);
                axpy(-c, b, &mut w);
            }
        }
        let mw = system.m.apply(&w);
        let b = dot(&w, &mw).max(0.0).sqrt();
        let steps = alpha.len();
        let breakdown = b <= 1e-13 * alpha.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let done = breakdown || steps == m_max;

        if done || (steps >= want && steps % 10 == 0) {
            // Ritz pairs of the tridiagonal projection
            let mut d = alpha.clone();
            let mut e = beta.clone();
            e.push(0.0);
            let mut z = vec![0.0; steps * steps];
            for i in 0..steps {
                z[i * steps + i] = 1.0;
            }
            dense::tridiagonal_ql(&mut d, &mut e, Some(&mut z))?;
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&p, &q| d[q].abs().total_cmp(&d[p].abs()));
            let check = want.min(steps);
            let mut candidates = Vec::with_capacity(check);
            let mut all_ok = true;
            best.clear();
            for &i in order.iter().take(check) {
                // skip the refinement while the Ritz estimate is still far off
                let estimate = (b * z[(steps - 1) * steps + i]).abs();
                if d[i] == 0.0 || (!done && estimate > 1e-3 * d[i].abs()) {
                    all_ok = false;
                    continue;
                }
                let mut y = vec![0.0; n];
                for (l, bl) in basis.iter().enumerate() {
                    axpy(z[l * steps + i], bl, &mut y);
                }
                // inverse-iteration steps, then Rayleigh quotient
                let (lambda, res, yy, myy) = refine(system, factor, shift, locked, y)?;
                best.push(res);
                if res <= tol {
                    candidates.push((lambda, res, yy, myy));
                } else {
                    all_ok = false;
                }
            }
            if candidates.len() > passing_before {
                passing_before = candidates.len();
                stalled = 0;
            } else {
                stalled += 1;
            }
            if all_ok || done || (stalled >= 3 && !candidates.is_empty()) {
                // orthogonalize accepted vectors among themselves before locking
                for (lambda, res, mut x, _) in candidates {
                    let before = dot(&x, &system.m.apply(&x)).sqrt();
                    locked.deflate(&mut x);
                    let mx = system.m.apply(&x);
                    let after = dot(&x, &mx).sqrt();
                    if after < 0.5 * before {
                        continue;
                    }
                    let x: Vec<f64> = x.iter().map(|v| v / after).collect();
                    let mx: Vec<f64> = mx.iter().map(|v| v / after).collect();
                    let lambda2 = rayleigh(system, &x);
                    let res2 = residual(system, lambda2, &x);
                    let (lam, r) = if res2 <= tol { (lambda2, res2) } else { (lambda, res) };
                    locked.push(lam, r, x, mx);
                }
                return Ok(());
            }
        }
        if done {
            return Ok(());
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
        mbasis.push(mw.iter().map(|x| x / b).collect());
    }
}

/// The `k` eigenvalues of smallest modulus by certified shift-invert Lanczos.
pub fn smallest_modulus(system: &AssembledSystem, opts: &EigOptions, delta: f64) -> Result<SpectrumRecord> {
    let n = system.dim();
    if opts.k == 0 || opts.k >= n {
        return Err(Error::InvalidInput(format!(
            "k = {} must satisfy 1 <= k < dimension {n}",
            opts.k
        )));
    }
    let scale = pencil_scale(system);

    let mut shift = 0.0;
    let mut factor = factor_shifted(system, shift);
    let mut attempt = 0;
    while factor.is_singular() {
        attempt += 1;
        if attempt > 3 {
            return Err(Error::Singular { shift });
        }
        shift = 1e-8 * scale * attempt as f64;
        log::debug!("singular shift, retrying at {shift:e}");
        factor = factor_shifted(system, shift);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked = Locked {
        values: Vec::new(),
        residuals: Vec::new(),
        vecs: Vec::new(),
        mvecs: Vec::new(),
    };
    let mut best: Vec<f64> = Vec::new();
    for restart in 0..opts.max_restarts {
        let want = if locked.values.len() >= opts.k {
            2
        } else {
            opts.k - locked.values.len() + 2
        };
        let start = random_vector(&mut rng, n);
        lanczos_run(system, &factor, shift, start, &mut locked, want, opts.max_basis, opts.tol)?;
        best = locked.residuals.clone();
        if locked.values.len() < opts.k {
            continue;
        }
        if certify(system, &locked.values, opts.k, opts.tol)? {
            let mut idx: Vec<usize> = (0..locked.values.len()).collect();
            idx.sort_by(|&a, &b| {
                let (x, y) = (locked.values[a], locked.values[b]);
                x.abs().total_cmp(&y.abs()).then(x.total_cmp(&y))
            });
            let pairs = idx
                .into_iter()
                .take(opts.k)
                .map(|i| (locked.values[i], locked.residuals[i]))
                .collect();
            log::debug!("certified after {} runs", restart + 1);
            return Ok(SpectrumRecord::from_pairs(delta, pairs, SolverTag::ShiftInvert, opts.seed));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        best_residuals: best,
    })
}

/// Inertia check: every eigenvalue strictly inside `|lambda| < R` (with a margin) has
/// been found, where `R` is the `k`-th smallest modulus among the found values.
fn certify(system: &AssembledSystem, found: &[f64], k: usize, tol: f64) -> Result<bool> {
    let mut mods: Vec<f64> = found.iter().map(|v| v.abs()).collect();
    mods.sort_by(f64::total_cmp);
    let r = mods[k - 1];
    let mut a = r - (1e-9 * r).max(10.0 * tol);
    if a <= 0.0 {
        return Ok(true);
    }
    for _ in 0..4 {
        let hi = factor_shifted(system, a);
        let lo = factor_shifted(system, -a);
        if hi.is_singular() || lo.is_singular() {
            a *= 1.0 - 1e-7;
            continue;
        }
        let exact = hi.inertia().negative - lo.inertia().negative;
        let have = found.iter().filter(|v| -a <= **v && **v < a).count();
        if exact < have {
            log::warn!("inertia reports {exact} eigenvalues in (-{a:e}, {a:e}) but {have} were found");
        }
        return Ok(exact <= have);
    }
    Ok(false)
}

/// Solve `A x = rhs` (nodal load, Dirichlet entries ignored) by the banded indefinite
/// factorization with iterative refinement; returns the nodal solution.
pub fn solve_source(system: &AssembledSystem, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let b = system.restrict(rhs)?;
    let bn = norm2(&b);
    if bn == 0.0 {
        return Ok(vec![0.0; rhs.len()]);
    }
    let factor = factor_shifted(system, 0.0);
    if factor.is_singular() {
        return Err(Error::Singular { shift: 0.0 });
    }
    let mut x = b.clone();
    factor.solve_in_place(&mut x)?;
    for _ in 0..5 {
        let ax = system.a.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm2(&r) <= tol * bn {
            return Ok(system.extend(&x));
        }
        factor.solve_in_place(&mut r)?;
        axpy(1.0, &r, &mut x);
    }
    let ax = system.a.apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if norm2(&r) <= tol * bn {
        Ok(system.extend(&x))
    } else {
        Err(Error::NoConvergence {
            iterations: 5,
            best_residuals: vec![norm2(&r) / bn],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::linalg::sparse::SymAccumulator;
    use crate::material::MaterialContrast;
    use crate::mesh::{build_canonical, CanonicalMeshParams, TriMesh};

    fn diag(values: &[f64]) -> crate::linalg::CsrMatrix {
        let mut acc = SymAccumulator::new(values.len());
        for (i, v) in values.iter().enumerate() {
            acc.add(i, i, *v);
        }
        acc.build()
    }

    #[test]
    fn diagonal_pencil_inertia_and_dense() {
        let s = AssembledSystem::from_matrices(diag(&[2.0, -3.0]), diag(&[1.0, 1.0])).unwrap();
        assert_eq!(dense_solve(&s, 10).unwrap(), vec![-3.0, 2.0]);
        let i = inertia(&s, 0.0);
        assert_eq!((i.negative, i.zero, i.positive), (1, 0, 1));
    }

    #[test]
    fn identity_pencil() {
        let n = 8;
        let s = AssembledSystem::from_matrices(diag(&vec![1.0; n]), diag(&vec![1.0; n])).unwrap();
        assert!(dense_solve(&s, 100).unwrap().iter().all(|v| *v == 1.0));
        let rec = smallest_modulus(&s, &EigOptions::with_k(3), 0.5).unwrap();
        assert_eq!(rec.eigenvalues.len(), 3);
        for (v, r) in rec.eigenvalues.iter().zip(&rec.residuals) {
            assert!((v - 1.0).abs() < 1e-12);
            assert!(*r < 1e-9);
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let s = AssembledSystem::from_matrices(diag(&[1.0; 5]), diag(&[1.0; 5])).unwrap();
        assert!(matches!(dense_solve(&s, 4), Err(Error::DenseCap { dim: 5, cap: 4 })));
    }

    #[test]
    fn unit_square_multiplicities() {
        let mesh = TriMesh::unit_square(12).unwrap();
        let s = assemble(&mesh, &MaterialContrast::new(1.0, -0.5).unwrap()).unwrap();
        let all = dense_solve(&s, 2000).unwrap();
        let rec = smallest_modulus(&s, &EigOptions::with_k(6), 1.0).unwrap();
        let oracle = select_smallest_modulus(&all, 6);
        for (a, b) in rec.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn canonical_matches_dense() {
        let c = MaterialContrast::new(1.0, -0.9).unwrap();
        let mesh = build_canonical(&CanonicalMeshParams::new(0.4, 8, 3)).unwrap();
        let s = assemble(&mesh, &c).unwrap();
        let all = dense_solve(&s, 2000).unwrap();
        let rec = smallest_modulus(&s, &EigOptions::with_k(10), 0.4).unwrap();
        let oracle = select_smallest_modulus(&all, 10);
        assert_eq!(rec.eigenvalues.len(), 10);
        for (a, b) in rec.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
        }
        assert!(rec.residuals.iter().all(|r| *r <= DEFAULT_TOL));
        let i = inertia(&s, 0.0);
        assert_eq!(i.negative, all.iter().filter(|v| **v < 0.0).count());
        let lo = min_eigenvalue(&s, 1e-12).unwrap();
        assert!((lo - all[0]).abs() <= 1e-10 * all[0].abs(), "{lo} vs {}", all[0]);
        let sq = assemble(&TriMesh::unit_square(4).unwrap(), &c).unwrap();
        assert_eq!(min_eigenvalue(&sq, 1e-12), None);
    }

    #[test]
    fn source_solve_zero_and_consistency() {
        let mesh = TriMesh::unit_square(6).unwrap();
        let s = assemble(&mesh, &MaterialContrast::new(1.0, -0.5).unwrap()).unwrap();
        let zero = solve_source(&s, &vec![0.0; mesh.nodes.len()], 1e-12).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let x: Vec<f64> = (0..mesh.nodes.len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let xd = s.restrict(&x).unwrap();
        let b = s.extend(&s.a.apply(&xd));
        let u = solve_source(&s, &b, 1e-13).unwrap();
        for &d in &s.dof_nodes {
            assert!((u[d] - x[d]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_source_is_reported() {
        let s = AssembledSystem::from_matrices(diag(&[1.0, 0.0]), diag(&[1.0, 1.0])).unwrap();
        assert!(matches!(solve_source(&s, &[1.0, 1.0], 1e-12), Err(Error::Singular { .. })));
    }
}
