mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use signflip_core::eig::{self, EigOptions};
use signflip_core::experiments::{self, SweepPlan};
use signflip_core::fem::{self, HalfPlaneLoad};
use signflip_core::material::{self, ContrastClass, MaterialContrast};
use signflip_core::mesh::{build_canonical, CanonicalMeshParams};
use signflip_core::Error;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "signflip", version, about = "Spectra of sign-changing diffusion on a rounded corner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long, global = true, allow_hyphen_values = true)]
    sigma_plus: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    sigma_minus: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    delta_min: Option<f64>,
    #[arg(long, global = true)]
    delta_max: Option<f64>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n_radial: Option<usize>,
    #[arg(long, global = true)]
    n_angular_minus: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to SIGNFLIP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singular exponent mu and the period pi/mu.
    Mu,
    /// Exponents with |Re| <= window.
    Lattice {
        #[arg(long)]
        window: Option<f64>,
    },
    /// The sequence delta^1 .. delta^n.
    DeltaN {
        #[arg(long)]
        n: Option<u32>,
    },
    /// Smallest-modulus eigenvalues at one delta.
    Spectrum {
        /// Use the dense reduction instead of shift-invert Lanczos.
        #[arg(long)]
        dense: bool,
    },
    /// Spectra over a log-uniform delta grid.
    Sweep,
    /// Zero crossings near delta^n.
    Crossings {
        #[arg(long)]
        n_max: Option<u32>,
        #[arg(long)]
        bracket: Option<f64>,
    },
    /// One-period defects of the spectral branches.
    Periodicity {
        /// Comma-separated branch indices; negative values select negative eigenvalues.
        #[arg(long, allow_hyphen_values = true)]
        branches: Option<String>,
    },
    /// H^1_0 norm of the source problem over the grid.
    Source,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Mu => "mu",
            Command::Lattice { .. } => "lattice",
            Command::DeltaN { .. } => "delta-n",
            Command::Spectrum { .. } => "spectrum",
            Command::Sweep => "sweep",
            Command::Crossings { .. } => "crossings",
            Command::Periodicity { .. } => "periodicity",
            Command::Source => "source",
        }
    }
}

/// Exit code 2: bad input or configuration. Exit code 3: the numerics failed.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_)
            | Error::ForbiddenContrast
            | Error::NonCritical(_)
            | Error::Domain { .. }
            | Error::Parse { .. }
            | Error::Mesh(_)
            | Error::Plan(_)
            | Error::SizeMismatch { .. }
            | Error::Io(_) => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::invalid(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    let c = &cli.common;
    if let Some(path) = &c.config {
        cfg.load_file(path).map_err(|e| Failure::invalid(e.0))?;
    }
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = c.$f { cfg.$f = v; } )* };
    }
    over!(sigma_plus, sigma_minus, delta, delta_min, delta_max, grid_points, k, n_radial, n_angular_minus, tol, seed);
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    if cfg.threads.is_none() {
        if let Ok(v) = std::env::var("SIGNFLIP_THREADS") {
            let t = v
                .trim()
                .parse()
                .map_err(|_| Failure::invalid(format!("SIGNFLIP_THREADS is not a count: {v:?}")))?;
            cfg.threads = Some(t);
        }
    }
    match &cli.command {
        Command::Lattice { window: Some(w) } => cfg.window = *w,
        Command::DeltaN { n: Some(n) } => cfg.n = *n,
        Command::Spectrum { dense: true } => cfg.dense = true,
        Command::Crossings { n_max, bracket } => {
            if let Some(v) = n_max {
                cfg.n_max = *v;
            }
            if let Some(v) = bracket {
                cfg.bracket = *v;
            }
        }
        Command::Periodicity { branches: Some(b) } => cfg.set("branches", b).map_err(|e| Failure::invalid(e.0))?,
        _ => {}
    }
    Ok(cfg)
}

fn contrast(cfg: &RunConfig) -> Result<MaterialContrast, Failure> {
    Ok(MaterialContrast::new(cfg.sigma_plus, cfg.sigma_minus)?)
}

fn mesh_params(cfg: &RunConfig) -> Result<CanonicalMeshParams, Failure> {
    let p = CanonicalMeshParams::new(cfg.delta, cfg.n_radial, cfg.n_angular_minus);
    p.validate()?;
    Ok(p)
}

fn grid(cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    if !(cfg.delta_min > 0.0 && cfg.delta_max < 1.0 && cfg.delta_min < cfg.delta_max) && cfg.grid_points != 1 {
        return Err(Failure::invalid(format!(
            "invalid grid: need 0 < delta_min < delta_max < 1, got [{}, {}]",
            cfg.delta_min, cfg.delta_max
        )));
    }
    if cfg.grid_points == 1 {
        if !(cfg.delta_max > 0.0 && cfg.delta_max < 1.0) {
            return Err(Failure::invalid(format!("delta_max = {} outside (0, 1)", cfg.delta_max)));
        }
        return Ok(vec![cfg.delta_max]);
    }
    Ok(experiments::log_uniform_grid(
        cfg.delta_max.ln(),
        cfg.delta_min.ln(),
        cfg.grid_points,
    )?)
}

fn plan(cfg: &RunConfig, grid: Vec<f64>) -> Result<SweepPlan, Failure> {
    let mut p = SweepPlan::new(contrast(cfg)?, grid, mesh_params(cfg)?);
    p.k = cfg.k;
    p.tol = cfg.tol;
    p.seed = cfg.seed;
    p.bracket = cfg.bracket;
    p.validate()?;
    Ok(p)
}

fn threaded<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match cfg.threads {
        Some(t) => Ok(experiments::with_threads(t, f)?),
        None => Ok(f()),
    }
}

fn sig15(v: f64) -> String {
    format!("{v:.14e}")
}

/// Output directory, created up front so an unwritable location fails before any work.
fn out_dir(cfg: &RunConfig, required: bool) -> Result<Option<PathBuf>, Failure> {
    let dir = match (&cfg.out, required) {
        (Some(d), _) => d.clone(),
        (None, true) => PathBuf::from("signflip_out"),
        (None, false) => return Ok(None),
    };
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".signflip_write_test");
    fs::write(&probe, b"")
        .map_err(|e| Failure::invalid(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(Some(dir))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_meta(dir: &Path, command: &str, cfg: &RunConfig, started: Instant, status: &str, files: &[String]) -> Outcome {
    let mut w = create(dir, "run.meta")?;
    writeln!(w, "# signflip run metadata; feed back with --config to reproduce")?;
    writeln!(w, "# command = {command}")?;
    writeln!(w, "# signflip_version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# core_version = {}", signflip_core::VERSION)?;
    writeln!(w, "# wall_time_s = {:.3}", started.elapsed().as_secs_f64())?;
    writeln!(w, "# status = {status}")?;
    writeln!(w, "# files = {}", files.join(" "))?;
    write!(w, "{}", cfg.to_text())?;
    w.flush()?;
    Ok(())
}

fn cmd_mu(cfg: &RunConfig) -> Outcome {
    let c = contrast(cfg)?;
    let mu = material::compute_mu(&c)?;
    let class = match c.class() {
        ContrastClass::CriticalInterval => "critical",
        ContrastClass::OutsideCritical => "outside-critical",
        ContrastClass::LimitThird => "limit-third",
        ContrastClass::Forbidden => "forbidden",
    };
    println!("kappa = {}", sig15(c.kappa()));
    println!("class = {class}");
    println!("mu = {} {:+.14e}i", sig15(mu.re), mu.im);
    let period = material::period_lndelta(&c).ok();
    match period {
        Some(p) => println!("period = {}", sig15(p)),
        None => println!("period = undefined"),
    }
    if let Some(dir) = out_dir(cfg, false)? {
        let mut w = create(&dir, "mu.csv")?;
        writeln!(w, "kappa,mu_re,mu_im,period")?;
        let p = period.map(sig15).unwrap_or_else(|| "nan".into());
        writeln!(w, "{},{},{},{p}", sig15(c.kappa()), sig15(mu.re), sig15(mu.im))?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_lattice(cfg: &RunConfig) -> Outcome {
    let c = contrast(cfg)?;
    if !(cfg.window >= 0.0) {
        return Err(Failure::invalid(format!("window must be >= 0, got {}", cfg.window)));
    }
    let pts = material::lattice(&c, cfg.window)?;
    let mut rows = vec!["re,im".to_string()];
    rows.extend(pts.iter().map(|z| format!("{},{}", sig15(z.re), sig15(z.im))));
    for r in &rows {
        println!("{r}");
    }
    if let Some(dir) = out_dir(cfg, false)? {
        let mut w = create(&dir, "lattice.csv")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_delta_n(cfg: &RunConfig) -> Outcome {
    let c = contrast(cfg)?;
    if cfg.n == 0 {
        return Err(Failure::invalid("n must be >= 1"));
    }
    let mut rows = vec!["n,delta".to_string()];
    for n in 1..=cfg.n {
        rows.push(format!("{n},{}", sig15(material::delta_n(&c, n)?)));
    }
    for r in &rows {
        println!("{r}");
    }
    if let Some(dir) = out_dir(cfg, false)? {
        let mut w = create(&dir, "delta_n.csv")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_spectrum(cfg: &RunConfig, started: Instant) -> Outcome {
    let c = contrast(cfg)?;
    let params = mesh_params(cfg)?;
    let dir = out_dir(cfg, true)?.expect("required");
    let mesh = build_canonical(&params)?;
    let system = fem::assemble(&mesh, &c)?;
    let record = if cfg.dense {
        eig::dense_smallest_modulus(&system, cfg.k, cfg.delta, eig::DEFAULT_DENSE_CAP)
    } else {
        let opts = EigOptions {
            k: cfg.k,
            tol: cfg.tol,
            seed: cfg.seed,
            ..EigOptions::default()
        };
        eig::smallest_modulus(&system, &opts, cfg.delta)
    };
    let record = match record {
        Ok(r) => r,
        Err(e) => {
            write_meta(&dir, "spectrum", cfg, started, &format!("failed: {e}"), &[])?;
            return Err(e.into());
        }
    };
    let mut w = create(&dir, "spectrum.csv")?;
    experiments::write_spectrum_csv(&mut w, std::slice::from_ref(&record))?;
    w.flush()?;
    for (ev, res) in record.eigenvalues.iter().zip(&record.residuals) {
        println!("{} residual {:.3e}", sig15(*ev), res);
    }
    write_meta(&dir, "spectrum", cfg, started, "ok", &["spectrum.csv".into()])
}

fn cmd_sweep(cfg: &RunConfig, started: Instant, periodicity: bool) -> Outcome {
    let c = contrast(cfg)?;
    let name = if periodicity { "periodicity" } else { "sweep" };
    let mu = if periodicity { Some(material::critical_mu(&c)?) } else { None };
    let g = match mu {
        Some(mu) => experiments::periodic_grid(
            cfg.delta_max.ln(),
            cfg.delta_min.ln(),
            cfg.grid_points,
            std::f64::consts::PI / mu,
        )?,
        None => grid(cfg)?,
    };
    let p = plan(cfg, g)?;
    let dir = out_dir(cfg, true)?.expect("required");
    let result = threaded(cfg, || experiments::run_sweep(&p))?;
    let (records, failure) = match result {
        Ok(r) => (r, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let mut files = vec!["spectrum.csv".to_string()];
    let mut w = create(&dir, "spectrum.csv")?;
    experiments::write_spectrum_csv(&mut w, &records)?;
    w.flush()?;
    files.extend(experiments::write_spectrum_plots(&dir, &c, &records)?);
    if let Some(e) = failure {
        write_meta(&dir, name, cfg, started, &format!("failed: {e}"), &files)?;
        return Err(e.into());
    }
    if let Some(mu) = mu {
        let report = experiments::verify_periodicity(&records, mu, &cfg.branches)?;
        let mut w = create(&dir, "periodicity.csv")?;
        experiments::write_periodicity_csv(&mut w, &report)?;
        w.flush()?;
        files.push("periodicity.csv".into());
        for &j in &cfg.branches {
            if let Some(row) = report.smallest_pair(j) {
                println!(
                    "branch {j}: max defect {:.3e}, smallest pair defect {:.3e}",
                    report.max_defect(j).unwrap_or(f64::NAN),
                    row.defect
                );
            }
        }
        if !report.mismatches.is_empty() {
            println!("{} pairs with differing sign counts", report.mismatches.len());
        }
    }
    println!("{} records written to {}", records.len(), dir.display());
    write_meta(&dir, name, cfg, started, "ok", &files)
}

fn cmd_crossings(cfg: &RunConfig, started: Instant) -> Outcome {
    let p = plan(cfg, grid(cfg)?)?;
    let dir = out_dir(cfg, true)?.expect("required");
    let reports = match threaded(cfg, || experiments::locate_crossings(&p, cfg.n_max))? {
        Ok(r) => r,
        Err(e) => {
            write_meta(&dir, "crossings", cfg, started, &format!("failed: {e}"), &[])?;
            return Err(e.into());
        }
    };
    let mut w = create(&dir, "crossings.csv")?;
    experiments::write_crossings_csv(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        match (r.delta_found, r.error_lndelta) {
            (Some(f), Some(e)) => println!("n = {}: predicted {} found {} |d ln delta| {:.3e}", r.n, sig15(r.delta_predicted), sig15(f), e),
            (Some(f), None) => println!("crossing at {}", sig15(f)),
            _ => println!("n = {}: predicted {} not found", r.n, sig15(r.delta_predicted)),
        }
    }
    write_meta(&dir, "crossings", cfg, started, "ok", &["crossings.csv".into()])
}

fn cmd_source(cfg: &RunConfig, started: Instant) -> Outcome {
    let p = plan(cfg, grid(cfg)?)?;
    let dir = out_dir(cfg, true)?.expect("required");
    let points = match threaded(cfg, || experiments::source_sweep(&p, &HalfPlaneLoad::default()))? {
        Ok(r) => r,
        Err(e) => {
            write_meta(&dir, "source", cfg, started, &format!("failed: {e}"), &[])?;
            return Err(e.into());
        }
    };
    let mut w = create(&dir, "source.csv")?;
    experiments::write_source_csv(&mut w, &points)?;
    w.flush()?;
    let plot = experiments::write_source_plot(&dir, &points)?;
    for (d, v) in experiments::source_peaks(&points).iter().take(3) {
        println!("peak at delta = {} (norm {:.6e})", sig15(*d), v);
    }
    write_meta(&dir, "source", cfg, started, "ok", &["source.csv".into(), plot])
}

fn run(cli: &Cli) -> Outcome {
    let started = Instant::now();
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Mu => cmd_mu(&cfg),
        Command::Lattice { .. } => cmd_lattice(&cfg),
        Command::DeltaN { .. } => cmd_delta_n(&cfg),
        Command::Spectrum { .. } => cmd_spectrum(&cfg, started),
        Command::Sweep => cmd_sweep(&cfg, started, false),
        Command::Periodicity { .. } => cmd_sweep(&cfg, started, true),
        Command::Crossings { .. } => cmd_crossings(&cfg, started),
        Command::Source => cmd_source(&cfg, started),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("signflip {}: {}", cli.command.name(), f.message);
            ExitCode::from(f.code)
        }
    }
}
