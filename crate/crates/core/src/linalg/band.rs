//! Banded symmetric-indefinite `L D L^T` factorization with Bunch–Kaufman pivoting.
//!
//! The factor is kept in LINPACK product form: each step records its own symmetric
//! interchange and elimination column, and later interchanges are not applied to
//! earlier columns. Interchanges widen the active band, so the working storage has a
//! capacity larger than the input bandwidth; an interchange that would exceed it is
//! replaced by a local pivot (counted in [`BandLdlt::restricted_pivots`]).

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;

/// Upper band storage: `data[i * (cap + 1) + d] = a(i, i + d)`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    cap: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, cap: usize) -> Self {
        Self {
            n,
            cap,
            data: vec![0.0; n * (cap + 1)],
        }
    }

    /// Band copy of `a + shift_scale * b`; `cap` must be at least the bandwidth.
    pub fn from_csr_combination(a: &CsrMatrix, b: Option<(f64, &CsrMatrix)>, cap: usize) -> Self {
        let mut s = Self::zeros(a.dim(), cap);
        for (i, j, v) in a.triplets() {
            if j >= i {
                assert!(j - i <= cap, "entry ({i}, {j}) outside band capacity {cap}");
                s.data[i * (cap + 1) + j - i] += v;
            }
        }
        if let Some((alpha, b)) = b {
            for (i, j, v) in b.triplets() {
                if j >= i {
                    assert!(j - i <= cap, "entry ({i}, {j}) outside band capacity {cap}");
                    s.data[i * (cap + 1) + j - i] += alpha * v;
                }
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j - i <= self.cap);
        i * (self.cap + 1) + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j - i > self.cap {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Largest offset `d` with `a(i, i + d) != 0`.
    fn extent(&self, i: usize) -> usize {
        let lim = self.cap.min(self.n - 1 - i);
        let row = &self.data[i * (self.cap + 1)..i * (self.cap + 1) + lim + 1];
        (1..=lim).rev().find(|&d| row[d] != 0.0).unwrap_or(0)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Signature `(n_minus, n_zero, n_plus)` of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    /// 1x1 block at `k` after interchanging `k` and `swap`.
    One { k: usize, swap: usize, ext: usize },
    /// 2x2 block at `(k, k+1)` after interchanging `k + 1` and `swap`.
    Two { k: usize, swap: usize, ext: usize },
}

#[derive(Debug, Clone)]
pub struct BandLdlt {
    f: SymBand,
    pivots: Vec<Pivot>,
    inertia: Inertia,
    singular: bool,
    restricted: usize,
}

const ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + sqrt(17)) / 8

impl BandLdlt {
    /// Factor a symmetric band matrix in place.
    pub fn factor(a: SymBand) -> Self {
        let n = a.n;
        let scale = a.max_abs();
        let zero_tol = 16.0 * f64::EPSILON * scale * (n.max(1) as f64).sqrt();
        let mut f = a;
        let mut pivots = Vec::with_capacity(n);
        let mut inertia = Inertia::default();
        let mut singular = false;
        let mut restricted = 0;
        let mut l0 = vec![0.0; f.cap + 2];
        let mut l1 = vec![0.0; f.cap + 2];
        let mut row0 = vec![0.0; f.cap + 2];
        let mut row1 = vec![0.0; f.cap + 2];

        let mut k = 0;
        while k < n {
            let (block, swap) = choose_pivot(&mut f, k, &mut restricted);
            if block == 1 {
                let ext = f.extent(k);
                let d = f.get(k, k);
                if d.abs() <= zero_tol {
                    inertia.zero += 1;
                    singular = true;
                    for e in 0..=ext {
                        f.set(k, k + e, 0.0);
                    }
                    pivots.push(Pivot::One { k, swap, ext: 0 });
                    k += 1;
                    continue;
                }
                if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                for e in 1..=ext {
                    row0[e] = f.get(k, k + e);
                    l0[e] = row0[e] / d;
                }
                for i in 1..=ext {
                    let li = l0[i];
                    if li == 0.0 {
                        continue;
                    }
                    let base = f.idx(k + i, k + i);
                    for j in i..=ext {
                        f.data[base + (j - i)] -= li * row0[j];
                    }
                }
                for e in 1..=ext {
                    f.set(k, k + e, l0[e]);
                }
                pivots.push(Pivot::One { k, swap, ext });
                k += 1;
            } else {
                let ext = f.extent(k).max(f.extent(k + 1) + 1);
                let (a, b, c) = (f.get(k, k), f.get(k, k + 1), f.get(k + 1, k + 1));
                let det = a * c - b * b;
                if det.abs() <= zero_tol * zero_tol {
                    // only reachable through a restricted pivot on an exactly singular block
                    singular = true;
                    inertia.zero += 1;
                    if a + c > 0.0 {
                        inertia.positive += 1;
                    } else if a + c < 0.0 {
                        inertia.negative += 1;
                    } else {
                        inertia.zero += 1;
                    }
                } else if det < 0.0 {
                    inertia.negative += 1;
                    inertia.positive += 1;
                } else if a + c > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                for e in 2..=ext {
                    row0[e] = f.get(k, k + e);
                    row1[e] = f.get(k + 1, k + e);
                    if singular {
                        l0[e] = 0.0;
                        l1[e] = 0.0;
                    } else {
                        l0[e] = (c * row0[e] - b * row1[e]) / det;
                        l1[e] = (a * row1[e] - b * row0[e]) / det;
                    }
                }
                for i in 2..=ext {
                    let (x0, x1) = (l0[i], l1[i]);
                    if x0 == 0.0 && x1 == 0.0 {
                        continue;
                    }
                    let base = f.idx(k + i, k + i);
                    for j in i..=ext {
                        f.data[base + (j - i)] -= x0 * row0[j] + x1 * row1[j];
                    }
                }
                for e in 2..=ext {
                    f.set(k, k + e, l0[e]);
                    f.set(k + 1, k + e, l1[e]);
                }
                pivots.push(Pivot::Two { k, swap, ext });
                k += 2;
            }
        }

        Self {
            f,
            pivots,
            inertia,
            singular,
            restricted,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn is_singular(&self) -> bool {
        self.singular || self.inertia.zero > 0
    }

    pub fn restricted_pivots(&self) -> usize {
        self.restricted
    }

    pub fn dim(&self) -> usize {
        self.f.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if self.is_singular() {
            return Err(Error::Singular { shift: f64::NAN });
        }
        let f = &self.f;
        for p in &self.pivots {
            match *p {
                Pivot::One { k, swap, ext } => {
                    b.swap(k, swap);
                    let bk = b[k];
                    if bk != 0.0 {
                        for e in 1..=ext {
                            b[k + e] -= f.get(k, k + e) * bk;
                        }
                    }
                }
                Pivot::Two { k, swap, ext } => {
                    b.swap(k + 1, swap);
                    let (b0, b1) = (b[k], b[k + 1]);
                    for e in 2..=ext {
                        b[k + e] -= f.get(k, k + e) * b0 + f.get(k + 1, k + e) * b1;
                    }
                }
            }
        }
        for p in &self.pivots {
            match *p {
                Pivot::One { k, .. } => b[k] /= f.get(k, k),
                Pivot::Two { k, .. } => {
                    let (a, bb, c) = (f.get(k, k), f.get(k, k + 1), f.get(k + 1, k + 1));
                    let det = a * c - bb * bb;
                    let (x0, x1) = (b[k], b[k + 1]);
                    b[k] = (c * x0 - bb * x1) / det;
                    b[k + 1] = (a * x1 - bb * x0) / det;
                }
            }
        }
        for p in self.pivots.iter().rev() {
            match *p {
                Pivot::One { k, swap, ext } => {
                    let mut s = 0.0;
                    for e in 1..=ext {
                        s += f.get(k, k + e) * b[k + e];
                    }
                    b[k] -= s;
                    b.swap(k, swap);
                }
                Pivot::Two { k, swap, ext } => {
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for e in 2..=ext {
                        s0 += f.get(k, k + e) * b[k + e];
                        s1 += f.get(k + 1, k + e) * b[k + e];
                    }
                    b[k] -= s0;
                    b[k + 1] -= s1;
                    b.swap(k + 1, swap);
                }
            }
        }
        Ok(())
    }
}

/// Bunch–Kaufman pivot choice at step `k`; performs the interchange and returns the
/// block size together with the interchanged index (or the unchanged position).
fn choose_pivot(f: &mut SymBand, k: usize, restricted: &mut usize) -> (usize, usize) {
    let n = f.n;
    let ext = f.extent(k);
    let (mut lambda, mut r) = (0.0, k);
    for d in 1..=ext {
        let v = f.get(k, k + d).abs();
        if v > lambda {
            lambda = v;
            r = k + d;
        }
    }
    let akk = f.get(k, k).abs();
    if lambda == 0.0 || akk >= ALPHA * lambda {
        return (1, k);
    }
    let lo = r.saturating_sub(f.cap).max(k);
    let hi = (r + f.cap).min(n - 1);
    let sigma = (lo..=hi)
        .filter(|&j| j != r)
        .map(|j| f.get(r, j).abs())
        .fold(0.0, f64::max);
    if akk * sigma >= ALPHA * lambda * lambda {
        return (1, k);
    }
    if f.get(r, r).abs() >= ALPHA * sigma {
        if can_swap(f, k, r) {
            swap_sym(f, k, k, r);
            return (1, r);
        }
    } else if r == k + 1 {
        return (2, k + 1);
    } else if can_swap(f, k + 1, r) {
        swap_sym(f, k, k + 1, r);
        return (2, r);
    }
    // interchange would overflow the band capacity: best local pivot instead
    *restricted += 1;
    if k + 1 < n {
        let (a, b, c) = (f.get(k, k), f.get(k, k + 1), f.get(k + 1, k + 1));
        let det = a * c - b * b;
        if a == 0.0 || det.abs() > 1e-3 * (a * c).abs().max(b * b) {
            return (2, k + 1);
        }
    }
    (1, k)
}

fn can_swap(f: &SymBand, p: usize, r: usize) -> bool {
    r + f.extent(r) - p <= f.cap
}

/// Symmetric interchange of rows/columns `p < r` within the active block starting at `k`.
fn swap_sym(f: &mut SymBand, k: usize, p: usize, r: usize) {
    debug_assert!(k <= p && p < r);
    let n = f.n;
    let tmp = f.get(p, p);
    f.set(p, p, f.get(r, r));
    f.set(r, r, tmp);
    for i in k..p {
        let (x, y) = (f.get(i, p), f.get(i, r));
        f.set(i, p, y);
        f.set(i, r, x);
    }
    for j in p + 1..r {
        let (x, y) = (f.get(p, j), f.get(j, r));
        f.set(p, j, y);
        f.set(j, r, x);
    }
    let hi = (r + f.cap).min(n - 1);
    for j in r + 1..=hi {
        let x = if j - p <= f.cap { f.get(p, j) } else { 0.0 };
        let y = f.get(r, j);
        if j - p <= f.cap {
            f.set(p, j, y);
        } else {
            debug_assert!(y == 0.0);
        }
        f.set(r, j, x);
    }
}
