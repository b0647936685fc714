//! Delta sweeps and the checks built on them: spectra along `-ln delta`, one-period
//! defects, zero crossings and the source-norm sweep.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::eig::{self, EigOptions, SpectrumRecord};
use crate::error::{Error, Result};
use crate::fem::{self, HalfPlaneLoad};
use crate::material::{self, MaterialContrast};
use crate::mesh::{build_canonical, CanonicalMeshParams};

/// Bisection stops once the `ln delta` bracket is narrower than this.
pub const CROSSING_WIDTH: f64 = 1e-4;
pub const DEFAULT_BRACKET: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub contrast: MaterialContrast,
    /// Strictly decreasing, inside `(0, 1)`.
    pub delta_grid: Vec<f64>,
    pub k: usize,
    /// Topology shared by every grid point; `delta` is replaced per point.
    pub mesh: CanonicalMeshParams,
    pub tol: f64,
    pub seed: u64,
    /// Half-width in `ln delta` of the bracket searched around each predicted crossing.
    pub bracket: f64,
}

impl SweepPlan {
    pub fn new(contrast: MaterialContrast, delta_grid: Vec<f64>, mesh: CanonicalMeshParams) -> Self {
        Self {
            contrast,
            delta_grid,
            k: 10,
            mesh,
            tol: eig::DEFAULT_TOL,
            seed: eig::DEFAULT_SEED,
            bracket: DEFAULT_BRACKET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_grid.is_empty() {
            return Err(Error::Plan("empty delta grid".into()));
        }
        for (i, d) in self.delta_grid.iter().enumerate() {
            if !(*d > 0.0 && *d < 1.0) {
                return Err(Error::Plan(format!("grid point {i} = {d} outside (0, 1)")));
            }
            if i > 0 && !(*d < self.delta_grid[i - 1]) {
                return Err(Error::Plan(format!("grid not strictly decreasing at index {i}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Plan("k must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Plan(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.bracket > 0.0) {
            return Err(Error::Plan(format!("bracket must be positive, got {}", self.bracket)));
        }
        self.mesh.with_delta(0.5).validate()
    }

    fn eig_options(&self) -> EigOptions {
        EigOptions {
            k: self.k,
            tol: self.tol,
            seed: self.seed,
            ..EigOptions::default()
        }
    }

    fn system_at(&self, delta: f64) -> Result<fem::AssembledSystem> {
        let mesh = build_canonical(&self.mesh.with_delta(delta))?;
        fem::assemble(&mesh, &self.contrast)
    }
}

/// `points` values log-uniform from `exp(ln_max)` down to `exp(ln_min)`.
pub fn log_uniform_grid(ln_max: f64, ln_min: f64, points: usize) -> Result<Vec<f64>> {
    if !(ln_min < ln_max && ln_max < 0.0) || points == 0 {
        return Err(Error::Plan(format!(
            "invalid grid: ln delta in [{ln_min}, {ln_max}] with {points} points"
        )));
    }
    if points == 1 {
        return Ok(vec![ln_max.exp()]);
    }
    let step = (ln_max - ln_min) / (points - 1) as f64;
    Ok((0..points).map(|i| (ln_max - step * i as f64).exp()).collect())
}

/// Log-uniform grid whose step divides `period` exactly, so that `delta` and
/// `delta * exp(-period)` are both grid points. The step is the one closest to that of a
/// `points`-point grid; the grid starts at `ln_max` and stops before passing `ln_min`.
pub fn periodic_grid(ln_max: f64, ln_min: f64, points: usize, period: f64) -> Result<Vec<f64>> {
    if !(ln_min < ln_max && ln_max < 0.0) || points < 2 || !(period > 0.0) {
        return Err(Error::Plan(format!(
            "invalid periodic grid: ln delta in [{ln_min}, {ln_max}], {points} points, period {period}"
        )));
    }
    let nominal = (ln_max - ln_min) / (points - 1) as f64;
    let per_period = (period / nominal).round().max(1.0);
    let step = period / per_period;
    let count = ((ln_max - ln_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| (ln_max - step * i as f64).exp()).collect())
}

/// Smallest-modulus spectrum at one `delta`.
pub fn solve_at(plan: &SweepPlan, delta: f64) -> Result<SpectrumRecord> {
    let system = plan.system_at(delta)?;
    eig::smallest_modulus(&system, &plan.eig_options(), delta)
}

/// A sweep that stopped early: records before the failing grid point, and the error.
#[derive(Debug)]
pub struct SweepFailure {
    pub partial: Vec<SpectrumRecord>,
    pub error: Error,
}

/// One record per grid point, in grid order. Points are solved concurrently on the
/// current rayon pool.
pub fn run_sweep(plan: &SweepPlan) -> std::result::Result<Vec<SpectrumRecord>, SweepFailure> {
    if let Err(error) = plan.validate() {
        return Err(SweepFailure {
            partial: Vec::new(),
            error,
        });
    }
    let results: Vec<Result<SpectrumRecord>> = plan.delta_grid.par_iter().map(|&d| solve_at(plan, d)).collect();
    let mut records = Vec::with_capacity(results.len());
    for (res, &delta) in results.into_iter().zip(&plan.delta_grid) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => {
                return Err(SweepFailure {
                    partial: records,
                    error: Error::Sweep {
                        delta,
                        source: Box::new(e),
                    },
                })
            }
        }
    }
    Ok(records)
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Branch `j` of a record: `j >= 0` is the `j`-th nonnegative eigenvalue, `j < 0` the
/// `(-j)`-th negative one, both counted by increasing modulus.
pub fn branch_value(record: &SpectrumRecord, j: i64) -> Option<f64> {
    if j >= 0 {
        record.positive_branch().get(j as usize).copied()
    } else {
        record.negative_branch().get((-j - 1) as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityRow {
    pub j: i64,
    pub delta: f64,
    pub delta_shifted: f64,
    pub lambda: f64,
    pub lambda_shifted: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PeriodicityReport {
    pub rows: Vec<PeriodicityRow>,
    /// Pairs `(delta, delta_shifted)` whose sign counts differ; no rows are produced
    /// for them.
    pub mismatches: Vec<(f64, f64)>,
}

impl PeriodicityReport {
    /// Largest defect of branch `j`.
    pub fn max_defect(&self, j: i64) -> Option<f64> {
        self.rows.iter().filter(|r| r.j == j).map(|r| r.defect).reduce(f64::max)
    }

    /// Row of branch `j` with the smallest `delta_shifted`.
    pub fn smallest_pair(&self, j: i64) -> Option<&PeriodicityRow> {
        self.rows
            .iter()
            .filter(|r| r.j == j)
            .min_by(|a, b| a.delta_shifted.total_cmp(&b.delta_shifted))
    }
}

/// One-period defects `|l_j(d) - l_j(d e^{-T})| / (1 + |l_j(d)|)`, `T = pi / mu`.
pub fn verify_periodicity(records: &[SpectrumRecord], mu: f64, j_range: &[i64]) -> Result<PeriodicityReport> {
    if !(mu > 0.0) {
        return Err(Error::Plan(format!("mu must be positive, got {mu}")));
    }
    let period = std::f64::consts::PI / mu;
    let lns: Vec<f64> = records.iter().map(|r| r.delta.ln()).collect();
    let ln_min = lns.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9;
    let mut report = PeriodicityReport::default();
    let mut pairs = 0;
    for (a, rec) in records.iter().enumerate() {
        let target = lns[a] - period;
        if target < ln_min - tol {
            continue;
        }
        let Some(b) = lns.iter().position(|l| (l - target).abs() <= tol * (1.0 + target.abs())) else {
            return Err(Error::Plan(format!(
                "delta = {} has no partner at delta * exp(-{period})",
                rec.delta
            )));
        };
        pairs += 1;
        let shifted = &records[b];
        if rec.n_neg != shifted.n_neg || rec.n_pos != shifted.n_pos {
            report.mismatches.push((rec.delta, shifted.delta));
            continue;
        }
        for &j in j_range {
            let (Some(l), Some(ls)) = (branch_value(rec, j), branch_value(shifted, j)) else {
                continue;
            };
            report.rows.push(PeriodicityRow {
                j,
                delta: rec.delta,
                delta_shifted: shifted.delta,
                lambda: l,
                lambda_shifted: ls,
                defect: (l - ls).abs() / (1.0 + l.abs()),
            });
        }
    }
    if pairs == 0 {
        return Err(Error::Plan("no one-period pairs in the records".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingReport {
    pub n: u32,
    pub delta_predicted: f64,
    /// `None` when no sign change was found in the bracket.
    pub delta_found: Option<f64>,
    pub error_lndelta: Option<f64>,
}

/// Bisection in `ln delta` for a change of `count` (the number of negative eigenvalues)
/// between `ln_lo` and `ln_hi`. Returns `None` if the end counts agree.
pub fn bisect_count_change<F>(count: F, ln_lo: f64, ln_hi: f64, width: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<(usize, usize)>,
{
    let (mut lo, mut hi) = (ln_lo, ln_hi);
    let (c_lo, z_lo) = count(lo.exp())?;
    if z_lo > 0 {
        return Ok(Some(lo.exp()));
    }
    let (c_hi, z_hi) = count(hi.exp())?;
    if z_hi > 0 {
        return Ok(Some(hi.exp()));
    }
    if c_lo == c_hi {
        return Ok(None);
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let (c, z) = count(mid.exp())?;
        if z > 0 {
            return Ok(Some(mid.exp()));
        }
        if c == c_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some((0.5 * (lo + hi)).exp()))
}

fn negative_count(plan: &SweepPlan, delta: f64) -> Result<(usize, usize)> {
    let inertia = eig::inertia(&plan.system_at(delta)?, 0.0);
    Ok((inertia.negative, inertia.zero))
}

/// Zero crossings of the spectrum. For a critical contrast, one report per `n` in
/// `1..=n_max`, searched in `[ln delta^n - bracket, ln delta^n + bracket]`. For other
/// contrasts the plan grid is scanned and every detected crossing is reported with
/// `n = 0` and no prediction.
pub fn locate_crossings(plan: &SweepPlan, n_max: u32) -> Result<Vec<CrossingReport>> {
    plan.validate()?;
    if !plan.contrast.is_critical() {
        let counts: Vec<(usize, usize)> = plan
            .delta_grid
            .par_iter()
            .map(|&d| negative_count(plan, d))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for i in 1..counts.len() {
            if counts[i] != counts[i - 1] {
                let found = bisect_count_change(
                    |d| negative_count(plan, d),
                    plan.delta_grid[i].ln(),
                    plan.delta_grid[i - 1].ln(),
                    CROSSING_WIDTH,
                )?
                .unwrap_or(plan.delta_grid[i]);
                out.push(CrossingReport {
                    n: 0,
                    delta_predicted: f64::NAN,
                    delta_found: Some(found),
                    error_lndelta: None,
                });
            }
        }
        return Ok(out);
    }
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let predicted = material::delta_n(&plan.contrast, n)?;
            let c = predicted.ln();
            let lo = c - plan.bracket;
            let hi = (c + plan.bracket).min(-1e-12);
            let found = bisect_count_change(|d| negative_count(plan, d), lo, hi, CROSSING_WIDTH)?;
            Ok(CrossingReport {
                n,
                delta_predicted: predicted,
                delta_found: found,
                error_lndelta: found.map(|f| (f.ln() - c).abs()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePoint {
    pub delta: f64,
    /// `None` where the stiffness matrix is numerically singular.
    pub h1_norm: Option<f64>,
}

/// `||u||_{H^1_0}` of the source problem at every grid point.
pub fn source_sweep(plan: &SweepPlan, load: &HalfPlaneLoad) -> Result<Vec<SourcePoint>> {
    plan.validate()?;
    plan.delta_grid
        .par_iter()
        .map(|&delta| {
            let mesh = build_canonical(&plan.mesh.with_delta(delta))?;
            let system = fem::assemble(&mesh, &plan.contrast)?;
            let rhs = fem::load_vector(&mesh, load);
            match eig::solve_source(&system, &rhs, 1e-10) {
                Ok(u) => Ok(SourcePoint {
                    delta,
                    h1_norm: Some(fem::h1_seminorm(&mesh, &u)?),
                }),
                Err(Error::Singular { .. }) => Ok(SourcePoint { delta, h1_norm: None }),
                Err(e) => Err(Error::Sweep {
                    delta,
                    source: Box::new(e),
                }),
            }
        })
        .collect()
}

/// Interior local maxima `(delta, norm)` of a source sweep, largest first. Singular
/// points count as infinite.
pub fn source_peaks(points: &[SourcePoint]) -> Vec<(f64, f64)> {
    let v: Vec<f64> = points.iter().map(|p| p.h1_norm.unwrap_or(f64::INFINITY)).collect();
    let mut peaks: Vec<(f64, f64)> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .map(|i| (points[i].delta, v[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_spectrum_csv<W: Write>(mut w: W, records: &[SpectrumRecord]) -> Result<()> {
    writeln!(w, "delta,neg_ln_delta,ev_rank,eigenvalue,residual,n_neg,n_pos,solver_tag")?;
    for r in records {
        for (rank, (ev, res)) in r.eigenvalues.iter().zip(&r.residuals).enumerate() {
            writeln!(
                w,
                "{},{},{rank},{},{},{},{},{}",
                fmt(r.delta),
                fmt(-r.delta.ln()),
                fmt(*ev),
                fmt(*res),
                r.n_neg,
                r.n_pos,
                r.solver_tag
            )?;
        }
    }
    Ok(())
}

pub fn write_crossings_csv<W: Write>(mut w: W, reports: &[CrossingReport]) -> Result<()> {
    writeln!(w, "n,delta_predicted,delta_found,error_lndelta")?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_else(|| "nan".into());
    for r in reports {
        writeln!(
            w,
            "{},{},{},{}",
            r.n,
            fmt(r.delta_predicted),
            opt(r.delta_found),
            opt(r.error_lndelta)
        )?;
    }
    Ok(())
}

pub fn write_periodicity_csv<W: Write>(mut w: W, report: &PeriodicityReport) -> Result<()> {
    writeln!(w, "j,delta,delta_shifted,lambda,lambda_shifted,defect")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.j,
            fmt(r.delta),
            fmt(r.delta_shifted),
            fmt(r.lambda),
            fmt(r.lambda_shifted),
            fmt(r.defect)
        )?;
    }
    Ok(())
}

pub fn write_source_csv<W: Write>(mut w: W, points: &[SourcePoint]) -> Result<()> {
    writeln!(w, "delta,one_minus_delta,h1_norm,singular_flag")?;
    for p in points {
        let (norm, flag) = match p.h1_norm {
            Some(v) => (fmt(v), 0),
            None => ("nan".to_string(), 1),
        };
        writeln!(w, "{},{},{norm},{flag}", fmt(p.delta), fmt(1.0 - p.delta))?;
    }
    Ok(())
}

fn write_columns(path: &Path, header: &str, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# {header}")?;
    for (x, y) in rows {
        writeln!(w, "{} {}", fmt(x), fmt(y))?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column gnuplot files for a spectrum sweep: all eigenvalues against `-ln delta`
/// (`spectrum_critical.dat` or `spectrum_noncritical.dat`) and, for a critical contrast,
/// the first positive and first negative eigenvalue. Returns the files written.
pub fn write_spectrum_plots(dir: &Path, contrast: &MaterialContrast, records: &[SpectrumRecord]) -> Result<Vec<String>> {
    let name = if contrast.is_critical() {
        "spectrum_critical.dat"
    } else {
        "spectrum_noncritical.dat"
    };
    write_columns(
        &dir.join(name),
        "neg_ln_delta eigenvalue",
        records
            .iter()
            .flat_map(|r| r.eigenvalues.iter().map(move |e| (-r.delta.ln(), *e))),
    )?;
    let mut files = vec![name.to_string()];
    if contrast.is_critical() {
        write_columns(
            &dir.join("first_positive.dat"),
            "neg_ln_delta first_positive_eigenvalue",
            records
                .iter()
                .filter_map(|r| branch_value(r, 0).map(|v| (-r.delta.ln(), v))),
        )?;
        write_columns(
            &dir.join("first_negative.dat"),
            "neg_ln_delta first_negative_eigenvalue",
            records
                .iter()
                .filter_map(|r| branch_value(r, -1).map(|v| (-r.delta.ln(), v))),
        )?;
        files.push("first_positive.dat".into());
        files.push("first_negative.dat".into());
    }
    Ok(files)
}

/// `source_norm.dat`: `1 - delta` against the norm, singular points skipped.
pub fn write_source_plot(dir: &Path, points: &[SourcePoint]) -> Result<String> {
    write_columns(
        &dir.join("source_norm.dat"),
        "one_minus_delta h1_norm",
        points.iter().filter_map(|p| p.h1_norm.map(|v| (1.0 - p.delta, v))),
    )?;
    Ok("source_norm.dat".into())
}
