//! Command-line entry point. Every run writes its CSV artifacts and a
//! `manifest.txt` into the output directory; the manifest is written even
//! when the run fails.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{BinsConfig, Command, DomainConfig, RunConfig, SamplingConfig, ZGridConfig};

use crate::cell_solver::{solve_cell, CellSlice};
use crate::eps::{counterexample_run, gamma_convergence_run, homogenized_reference, solve_eps, DomainSpec, ReferenceSpec};
use crate::error::{invalid, Error, Result};
use crate::hom::{hom_iterate, hom_joint, hom_query, ZGrid, DEFAULT_KAPPA};
use crate::integrand::{check_convexity, check_growth, check_lipschitz, BorelVariant, Integrand, Sampling};
use crate::measure::{center_of_mass, empirical_young, YoungBins};
use crate::periodic::PeriodicGrid;
use crate::scales::{Eps, ScaleFamily};

#[derive(Debug, Parser)]
#[command(name = "multihom", version, about = "Homogenization of multiscale periodic convex integrands")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// integrand file (overrides the config)
    #[arg(long)]
    pub integrand: Option<PathBuf>,
    /// output directory (overrides the config; default `out`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Solve single cell problems at the configured gradients
    Cell(Common),
    /// Tabulate f_hom by homogenizing one scale at a time
    Iterate(Common),
    /// Solve the joint problem over stacked correctors
    Joint(Common),
    /// Minimize the oscillating functional for each eps
    Eps(Common),
    /// Compare minimum energies with the homogenized reference
    Gamma(Common),
    /// Evaluate a Borel diagonal counterexample along u(x) = x
    Counterexample {
        #[command(flatten)]
        common: Common,
        /// brutto, finalUno or finalDue
        #[arg(long, value_parser = parse_variant)]
        variant: Option<BorelVariant>,
        /// values of h: a range `2..7` (inclusive) or a list `2,4,6`
        #[arg(long, value_parser = parse_h)]
        h: Option<HList>,
        /// growth exponent of the law (default 2)
        #[arg(long)]
        p: Option<f64>,
    },
    /// Histogram a minimizer's gradients against the fast variables
    Young(Common),
    /// Sample growth, convexity and Lipschitz checks of an integrand
    Audit(Common),
}

fn parse_variant(s: &str) -> std::result::Result<BorelVariant, String> {
    match s.to_ascii_lowercase().replace('_', "").as_str() {
        "brutto" => Ok(BorelVariant::Brutto),
        "finaluno" => Ok(BorelVariant::FinalUno),
        "finaldue" => Ok(BorelVariant::FinalDue),
        _ => Err(format!("unknown variant '{s}' (brutto, finalUno, finalDue)")),
    }
}

/// Values of `h` given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HList(pub Vec<i64>);

fn parse_h(s: &str) -> std::result::Result<HList, String> {
    parse_h_values(s).map(HList)
}

fn parse_h_values(s: &str) -> std::result::Result<Vec<i64>, String> {
    let num = |t: &str| t.trim().parse::<i64>().map_err(|_| format!("bad integer '{t}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if b < a {
            return Err(format!("empty range {s}"));
        }
        Ok((a..=b).collect())
    } else {
        s.split(',').map(num).collect()
    }
}

/// Outcome of a pipeline: artifacts plus whether everything converged.
struct Outcome {
    files: Vec<(String, String)>,
    ok: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { files: Vec::new(), ok: true, notes: Vec::new() }
    }

    fn file(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn flag(&mut self, ok: bool, note: impl Into<String>) {
        if !ok {
            self.ok = false;
            self.notes.push(note.into());
        }
    }
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    run(cli)
}

/// Exit status: 0 when every solve converged, 1 on numerical failure or
/// audit violations, 2 on usage and configuration errors.
pub fn run(cli: Cli) -> i32 {
    let (command, common, overrides) = match cli.command {
        Sub::Cell(c) => (Command::Cell, c, None),
        Sub::Iterate(c) => (Command::Iterate, c, None),
        Sub::Joint(c) => (Command::Joint, c, None),
        Sub::Eps(c) => (Command::Eps, c, None),
        Sub::Gamma(c) => (Command::Gamma, c, None),
        Sub::Counterexample { common, variant, h, p } => (Command::Counterexample, common, Some((variant, h, p))),
        Sub::Young(c) => (Command::Young, c, None),
        Sub::Audit(c) => (Command::Audit, c, None),
    };
    let started = Instant::now();
    let mut cfg = match &common.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: config {}: {e}", p.display());
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(i) = &common.integrand {
        cfg.integrand = Some(std::env::current_dir().map(|d| d.join(i)).unwrap_or_else(|_| i.clone()));
    }
    if let Some((variant, h, p)) = overrides {
        cfg.variant = variant.or(cfg.variant);
        cfg.h = h.map(|h| h.0).or(cfg.h.take());
        cfg.p = p.or(cfg.p);
    }
    let out = common.out.clone().or_else(|| cfg.output.as_ref().map(|o| cfg.resolve(o))).unwrap_or_else(|| "out".into());
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 2;
    }
    let threads = common.threads.unwrap_or_else(rayon::current_num_threads);

    let result = (|| {
        if let Some(c) = cfg.command {
            if c != command {
                return invalid(format!("config is for '{c:?}', command line asked for '{command:?}'"));
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(command, &cfg))
    })();

    let mut manifest = String::new();
    let _ = writeln!(manifest, "command: {command:?}");
    let _ = writeln!(manifest, "version: {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "threads: {threads}");
    let _ = writeln!(manifest, "seed: {}", cfg.seed.map_or("none".into(), |s| s.to_string()));
    let _ = writeln!(manifest, "config: {}", config_echo(&cfg));
    let code = match result {
        Ok(outcome) => {
            let mut code = if outcome.ok { 0 } else { 1 };
            for (name, body) in &outcome.files {
                if let Err(e) = std::fs::write(out.join(name), body) {
                    eprintln!("error: writing {name}: {e}");
                    code = 1;
                }
                let _ = writeln!(manifest, "artifact: {name}");
            }
            let _ = writeln!(manifest, "converged: {}", outcome.ok);
            for n in &outcome.notes {
                let _ = writeln!(manifest, "note: {n}");
                eprintln!("{n}");
            }
            code
        }
        Err(e) => {
            let code = exit_code(&e);
            let _ = writeln!(manifest, "error: {e}");
            eprintln!("error: {e}");
            code
        }
    };
    let _ = writeln!(manifest, "wall_time_s: {:.3}", started.elapsed().as_secs_f64());
    let _ = writeln!(manifest, "exit: {code}");
    if let Err(e) = std::fs::write(out.join("manifest.txt"), manifest) {
        eprintln!("error: writing manifest: {e}");
    }
    code
}

/// The effective configuration without unset keys.
fn config_echo(cfg: &RunConfig) -> String {
    match serde_json::to_value(cfg) {
        Ok(serde_json::Value::Object(mut m)) => {
            m.retain(|_, v| !v.is_null());
            serde_json::Value::Object(m).to_string()
        }
        _ => String::new(),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::OutOfBox(_) | Error::NonFinite(_) => 1,
        _ => 2,
    }
}

fn load_integrand(cfg: &RunConfig) -> Result<Integrand> {
    let f = Integrand::load(cfg.integrand_path()?)?;
    cfg.check_caps(f.dim())?;
    Ok(f)
}

fn grids(cfg: &RunConfig, f: &Integrand) -> Result<Vec<PeriodicGrid>> {
    let ns = cfg.grids.clone().unwrap_or_else(|| vec![64; f.scales()]);
    if ns.len() != f.scales() {
        return invalid(format!("integrand has {} scales but {} grids are given", f.scales(), ns.len()));
    }
    ns.into_iter().map(|n| PeriodicGrid::new(f.dim(), n)).collect()
}

fn zgrid(cfg: &RunConfig, dim: usize) -> Result<ZGrid> {
    let z = cfg.zgrid.clone().unwrap_or(ZGridConfig { radius: 1.0, count: 41 });
    ZGrid::new(dim, z.radius, z.count)
}

fn x_point(cfg: &RunConfig, dim: usize) -> Result<Vec<f64>> {
    let x = cfg.x.clone().unwrap_or_else(|| vec![0.5; dim]);
    if x.len() != dim {
        return invalid(format!("x must have {dim} components"));
    }
    Ok(x)
}

fn default_z(dim: usize) -> Vec<f64> {
    let mut z = vec![0.0; dim];
    z[0] = 1.0;
    z
}

fn z_list(cfg: &RunConfig, dim: usize) -> Result<Vec<Vec<f64>>> {
    let zs = cfg.z.clone().unwrap_or_else(|| vec![default_z(dim)]);
    if zs.iter().any(|z| z.len() != dim) {
        return invalid(format!("every z must have {dim} components"));
    }
    Ok(zs)
}

fn domain(cfg: &RunConfig, dim: usize) -> Result<DomainSpec> {
    let d = cfg.domain.clone().unwrap_or(DomainConfig { cells: 256, z: None, sample: Default::default() });
    let mut spec = DomainSpec::new(dim, d.cells, d.z.unwrap_or_else(|| default_z(dim)))?;
    spec.sample = d.sample;
    Ok(spec)
}

fn scale_family(cfg: &RunConfig, n: usize) -> Result<ScaleFamily> {
    match &cfg.scales {
        Some(e) => {
            let s = ScaleFamily::new(e.clone())?;
            if s.len() != n {
                return invalid(format!("{} exponents for {n} scales", s.len()));
            }
            Ok(s)
        }
        None => Ok(ScaleFamily::powers(n)),
    }
}

fn eps_list(cfg: &RunConfig) -> Result<Vec<Eps>> {
    let mut list: Vec<Eps> = cfg.eps_inverse.iter().flatten().map(|&h| Eps::Inverse(h)).collect();
    list.extend(cfg.eps.iter().flatten().map(|&e| Eps::Value(e)));
    if list.is_empty() {
        list = [4, 8, 16, 32].map(Eps::Inverse).to_vec();
    }
    for e in &list {
        e.validate()?;
    }
    Ok(list)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    let opts = cfg.solver()?;
    let mut out = Outcome::new();
    match command {
        Command::Cell => {
            let f = load_integrand(cfg)?;
            let g = grids(cfg, &f)?;
            let x = x_point(cfg, f.dim())?;
            let slow: Vec<f64> = g[..g.len() - 1]
                .iter()
                .flat_map(|_| std::iter::repeat_n(0.0, f.dim()))
                .collect();
            let slice = CellSlice::from_integrand(&f, &x, &slow, *g.last().unwrap())?;
            let mut table = String::from("z,value,grad_norm,iterations,converged\n");
            for (i, z) in z_list(cfg, f.dim())?.iter().enumerate() {
                let s = solve_cell(&slice, z, &opts)?;
                let _ = writeln!(table, "{},{},{},{},{}", fmt_vec(z), s.value, s.grad_norm, s.iterations, s.converged);
                out.flag(s.converged, format!("cell solve at z = {z:?} did not converge"));
                out.file(format!("corrector_{i}.csv"), s.corrector.to_csv(slice.grid()));
            }
            out.file("cell.csv", table);
        }
        Command::Iterate => {
            let f = load_integrand(cfg)?;
            let g = grids(cfg, &f)?;
            let x = x_point(cfg, f.dim())?;
            let it = hom_iterate(&f, &x, zgrid(cfg, f.dim())?, &g, &opts, cfg.kappa.unwrap_or(DEFAULT_KAPPA))?;
            for t in &it.tables {
                out.file(format!("table_level_{}.csv", t.level), t.to_csv());
            }
            let mut q = String::from("z,value\n");
            for z in z_list(cfg, f.dim())? {
                let _ = writeln!(q, "{},{}", fmt_vec(&z), hom_query(it.f_hom(), &[], &z)?);
            }
            out.file("fhom.csv", q);
            out.flag(it.unconverged() == 0, format!("{} cell solves did not converge", it.unconverged()));
        }
        Command::Joint => {
            let f = load_integrand(cfg)?;
            let g = grids(cfg, &f)?;
            let x = x_point(cfg, f.dim())?;
            let mut table = String::from("z,value,grad_norm,iterations,converged,max_fast_mean\n");
            for (i, z) in z_list(cfg, f.dim())?.iter().enumerate() {
                let s = hom_joint(&f, &x, z, &g, &opts)?;
                let _ = writeln!(
                    table,
                    "{},{},{},{},{},{}",
                    fmt_vec(z),
                    s.value,
                    s.grad_norm,
                    s.iterations,
                    s.converged,
                    s.correctors.max_fast_mean()
                );
                out.flag(s.converged, format!("joint solve at z = {z:?} did not converge"));
                for (k, field) in s.correctors.fields.iter().enumerate() {
                    let body: String = std::iter::once("index,value\n".to_string())
                        .chain(field.values.iter().enumerate().map(|(j, v)| format!("{j},{v}\n")))
                        .collect();
                    out.file(format!("corrector_{i}_level_{}.csv", k + 1), body);
                }
            }
            out.file("joint.csv", table);
        }
        Command::Eps => {
            let f = load_integrand(cfg)?;
            let s = scale_family(cfg, f.scales())?;
            let dom = domain(cfg, f.dim())?;
            let mut table = String::from("eps,energy,affine_energy,iterations,converged\n");
            for (i, eps) in eps_list(cfg)?.into_iter().enumerate() {
                let sol = solve_eps(&f, &s, eps, &dom, &opts)?;
                let _ = writeln!(
                    table,
                    "{},{},{},{},{}",
                    eps.value(),
                    sol.energy,
                    sol.affine_energy,
                    sol.iterations,
                    sol.converged
                );
                out.flag(sol.converged, format!("eps = {eps} did not converge"));
                out.file(format!("u_{i}.csv"), node_csv(&dom, &sol.u.values));
            }
            out.file("eps.csv", table);
        }
        Command::Gamma => {
            let f = load_integrand(cfg)?;
            let s = scale_family(cfg, f.scales())?;
            let dom = domain(cfg, f.dim())?;
            let spec = ReferenceSpec {
                zgrid: zgrid(cfg, f.dim())?,
                grids: grids(cfg, &f)?,
                kappa: cfg.kappa.unwrap_or(DEFAULT_KAPPA),
                x_samples: cfg.x_samples.unwrap_or(8),
            };
            let reference = homogenized_reference(&f, &dom.z, &spec, &opts)?;
            let report = gamma_convergence_run(&f, &s, &eps_list(cfg)?, &dom, reference, &opts)?;
            out.flag(report.all_converged(), "some eps solves did not converge");
            if !report.monotone() {
                out.notes.push(format!("gap increases at terms {:?}", report.increases));
            }
            out.file("gamma.csv", report.to_csv());
        }
        Command::Counterexample => {
            let variant = cfg.variant.ok_or_else(|| Error::Invalid("counterexample needs a variant".into()))?;
            let h = cfg.h.clone().unwrap_or_else(|| (2..=7).collect());
            let r = counterexample_run(variant, &h, cfg.p.unwrap_or(2.0), cfg.m_min.unwrap_or(64))?;
            out.notes.push(format!("{} samples per h", r.m));
            out.file("counterexample.csv", r.to_csv());
        }
        Command::Young => {
            let f = load_integrand(cfg)?;
            let s = scale_family(cfg, f.scales())?;
            let dom = domain(cfg, f.dim())?;
            let eps = *eps_list(cfg)?.first().unwrap();
            let b = cfg.bins.unwrap_or(BinsConfig { y_bins: 2, z_bins: 64, z_range: 3.0 });
            let sol = solve_eps(&f, &s, eps, &dom, &opts)?;
            out.flag(sol.converged, format!("eps = {eps} did not converge"));
            let m = empirical_young(&sol.u, &dom, &s, eps, YoungBins { y_bins: b.y_bins, z_bins: b.z_bins, z_range: b.z_range })?;
            if m.clipped > 0 {
                out.notes.push(format!("{} gradient samples clipped into the outer z bins", m.clipped));
            }
            let mut com = String::from("y_bin,mass,mean_gradient\n");
            for (i, (c, w)) in center_of_mass(&m).iter().zip(m.y_marginal()).enumerate() {
                let _ = writeln!(com, "{i},{w},{}", c.as_deref().map_or("absent".into(), fmt_vec));
            }
            out.file("young.csv", m.to_csv());
            out.file("center_of_mass.csv", com);
        }
        Command::Audit => {
            let f = load_integrand(cfg)?;
            let s = cfg.sampling.map_or_else(Sampling::default, |s| Sampling { count: s.count, z_radius: s.z_radius });
            let mut table = String::from("check,samples,violations,worst_margin\n");
            let mut details = String::new();
            for (name, r) in [
                ("growth", check_growth(&f, &s)?),
                ("convexity", check_convexity(&f, &s)?),
                ("lipschitz", check_lipschitz(&f, &s)?),
            ] {
                let _ = writeln!(table, "{name},{},{},{}", r.samples, r.violations, r.worst_margin);
                for d in &r.details {
                    let _ = writeln!(details, "{name}: {d}");
                }
                out.flag(r.passed(), format!("{name}: {} violations", r.violations));
            }
            out.file("audit.csv", table);
            if !details.is_empty() {
                out.file("violations.txt", details);
            }
        }
    }
    Ok(out)
}

fn node_csv(dom: &DomainSpec, u: &[f64]) -> String {
    let mut s = format!("# d={},M={}\nindex,value\n", dom.dim, dom.cells);
    for (i, v) in u.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}

/// Runs the binary's logic on explicit arguments; for tests.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(c) => run(c),
        Err(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_lists() {
        assert_eq!(parse_h_values("2..7").unwrap(), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(parse_h_values("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_h_values("3,5").unwrap(), vec![3, 5]);
        assert!(parse_h_values("7..2").is_err());
        assert!(parse_h_values("x").is_err());
        assert_eq!(parse_variant("finalDue").unwrap(), BorelVariant::FinalDue);
        assert_eq!(parse_variant("final_uno").unwrap(), BorelVariant::FinalUno);
    }
}
