//! Configuration and implementation of the `mfgpdi` commands.
//!
//! A run is described by a JSON [`RunConfig`]; `--set key=value` overrides
//! are applied to the JSON tree before validation, with dotted keys for
//! nested fields and values parsed as JSON when possible (strings otherwise).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assembly::{Discretization, ProblemData, StabilizationParams};
use crate::error::{Error, Result};
use crate::fespace::{NodalFunction, QuadratureRule};
use crate::mesh::Mesh;
use crate::mfg::{solve_mfg, MfgConfig, MfgSolution};
use crate::problems::{
    custom_problem, exact_errors_experiment1, reference_errors, ErrorBundle, ExperimentOne, ExperimentTwo,
    Nonlinearity, ReferenceSolution, REFERENCE_FORMAT,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

pub const CSV_HEADER: &str = "h,u_h1_rel,m_l2_rel,m_h1_rel,drift_l2_rel,outer_iters";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    #[default]
    Exp1,
    Exp2,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub n: usize,
    /// Defaults to `reference_exp2_n<n>.json` inside `output_dir` (or the
    /// working directory).
    pub path: Option<PathBuf>,
    /// Tolerance used for every stopping criterion of the reference solve.
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            n: 512,
            path: None,
            tol: 1e-11,
        }
    }
}

/// `F[m] = g(m) + f`, `G = c` under the eikonal Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    pub nonlinearity: Nonlinearity,
    pub f: f64,
    pub c: f64,
}

impl Default for CustomConfig {
    fn default() -> Self {
        CustomConfig {
            nonlinearity: Nonlinearity::Tanh,
            f: 1.0,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    /// Subdivisions per side for `solve` and `check-mesh`.
    pub n: usize,
    /// Subdivisions per side of each level of `convergence`.
    pub n_levels: Vec<usize>,
    pub nu: f64,
    pub kappa: f64,
    pub stabilization: StabilizationParams,
    pub quadrature_degree: usize,
    pub mfg: MfgConfig,
    pub output_dir: Option<PathBuf>,
    pub reference: ReferenceConfig,
    pub custom: CustomConfig,
    /// Write `x,y,u,m` for every node after `solve`.
    pub dump_nodal: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentKind::Exp1,
            n: 16,
            n_levels: vec![8, 16, 32],
            nu: 1.0,
            kappa: 0.0,
            stabilization: StabilizationParams::zero(),
            quadrature_degree: 4,
            mfg: MfgConfig::default(),
            output_dir: None,
            reference: ReferenceConfig::default(),
            custom: CustomConfig::default(),
            dump_nodal: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if self.n_levels.contains(&0) {
            return Err(Error::invalid("n_levels", "levels must be at least 1"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("must be non-negative, got {}", self.kappa)));
        }
        self.stabilization.validate()?;
        QuadratureRule::with_degree(self.quadrature_degree)
            .map_err(|_| Error::invalid("quadrature_degree", format!("{} is not in 1..=6", self.quadrature_degree)))?;
        self.mfg.validate()?;
        if self.reference.n < 2 {
            return Err(Error::invalid("reference.n", "must be at least 2"));
        }
        if !(self.reference.tol > 0.0) {
            return Err(Error::invalid("reference.tol", "must be positive"));
        }
        Ok(())
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        QuadratureRule::with_degree(self.quadrature_degree)
    }

    pub fn problem(&self) -> ProblemData {
        match self.experiment {
            ExperimentKind::Exp1 => ExperimentOne {
                nu: self.nu,
                kappa: self.kappa,
            }
            .problem_data(),
            ExperimentKind::Exp2 => ExperimentTwo::new(self.nu, self.kappa).problem_data(),
            ExperimentKind::Custom => {
                custom_problem(self.nu, self.kappa, self.custom.nonlinearity, self.custom.f, self.custom.c)
            }
        }
    }

    pub fn reference_path(&self) -> PathBuf {
        self.reference.path.clone().unwrap_or_else(|| {
            let name = format!("reference_exp2_n{}.json", self.reference.n);
            match &self.output_dir {
                Some(d) => d.join(name),
                None => PathBuf::from(name),
            }
        })
    }

    /// Reads a config file (or starts from defaults) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = match path {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets `a.b.c=value` inside a JSON object tree.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid("--set", format!("`{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid("--set", format!("malformed key `{key}`")));
    }
    let mut node = tree;
    for p in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(key, "cannot descend into a non-object"))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::invalid(key, "cannot descend into a non-object"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "mfgpdi", version, about = "Monotone P1 finite elements for stationary mean field games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set mfg.damping=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem on one mesh and print a summary.
    Solve(ConfigArgs),
    /// Solve on every level of `n_levels` and print an error table.
    Convergence(ConfigArgs),
    /// Print mesh statistics and the acuteness classification.
    CheckMesh {
        #[command(flatten)]
        args: ConfigArgs,
        /// Subdivisions per side (overrides `n`).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compute and store the fine-mesh reference of the second experiment.
    Reference(ConfigArgs),
}

/// Maps a library error to a process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence { .. } | Error::SingularMatrix(_) | Error::NonFinite(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(&RunConfig::load(a.config.as_deref(), &a.overrides)?, out),
        Command::Convergence(a) => cmd_convergence(&RunConfig::load(a.config.as_deref(), &a.overrides)?, out),
        Command::CheckMesh { args, n } => {
            let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
            let n = n.unwrap_or(cfg.n);
            if n == 0 {
                return Err(Error::invalid("n", "must be at least 1"));
            }
            out.write_all(check_mesh_report(n).as_bytes())?;
            Ok(())
        }
        Command::Reference(a) => cmd_reference(&RunConfig::load(a.config.as_deref(), &a.overrides)?, out),
    }
}

pub fn check_mesh_report(n: usize) -> String {
    let mesh = Mesh::unit_square(n);
    let r = mesh.acuteness_report();
    let mut s = String::new();
    let _ = writeln!(s, "n {n}");
    let _ = writeln!(s, "nodes {}", mesh.n_nodes());
    let _ = writeln!(s, "elements {}", mesh.n_elements());
    let _ = writeln!(s, "interior_nodes {}", mesh.n_nodes() - mesh.boundary_nodes().len());
    let _ = writeln!(s, "h {:.16e}", mesh.h());
    let _ = writeln!(s, "sigma {:.16e}", r.sigma_mesh);
    let _ = writeln!(s, "min_margin {:.16e}", r.min_margin);
    let _ = writeln!(s, "classification {}", r.classification);
    s
}

/// Result of one mesh level.
#[derive(Debug)]
pub struct LevelRun {
    pub n: usize,
    pub h: f64,
    pub disc: Discretization,
    pub solution: MfgSolution,
}

pub fn solve_level(cfg: &RunConfig, data: &ProblemData, n: usize) -> Result<LevelRun> {
    let mesh = Mesh::unit_square(n);
    let h = mesh.h();
    let disc = Discretization::for_problem(mesh, cfg.rule()?, data, &cfg.stabilization)?;
    let solution = solve_mfg(&disc, data, &cfg.mfg, None)?;
    Ok(LevelRun { n, h, disc, solution })
}

/// A loaded reference with its discretization and recomputed field.
pub struct LoadedReference {
    pub disc: Discretization,
    pub solution: MfgSolution,
}

pub fn load_reference(cfg: &RunConfig, data: &ProblemData) -> Result<LoadedReference> {
    let path = cfg.reference_path();
    if !path.exists() {
        return Err(Error::invalid(
            "reference.path",
            format!("{} not found; run `mfgpdi reference` first", path.display()),
        ));
    }
    let r = ReferenceSolution::load(&path)?;
    if r.experiment != "exp2" || r.nu != cfg.nu || r.kappa != cfg.kappa {
        return Err(Error::invalid("reference", "stored reference was computed for different problem data"));
    }
    let disc = Discretization::for_problem(
        Mesh::unit_square(r.n),
        QuadratureRule::with_degree(r.quadrature_degree)?,
        data,
        &r.stabilization,
    )?;
    let solution = MfgSolution::from_pair(&disc, data, r.u(), r.m())?;
    Ok(LoadedReference { disc, solution })
}

fn errors_for(cfg: &RunConfig, data: &ProblemData, run: &LevelRun, reference: Option<&LoadedReference>) -> Result<Option<ErrorBundle>> {
    match cfg.experiment {
        ExperimentKind::Exp1 => Ok(Some(exact_errors_experiment1(&run.disc, &run.solution)?)),
        ExperimentKind::Exp2 => reference
            .map(|r| reference_errors(&run.disc, &run.solution, &r.disc, &r.solution, data.hamiltonian.as_ref()))
            .transpose(),
        ExperimentKind::Custom => Ok(None),
    }
}

fn prepare_output_dir(cfg: &RunConfig) -> Result<()> {
    if let Some(d) = &cfg.output_dir {
        fs::create_dir_all(d)?;
    }
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    prepare_output_dir(cfg)?;
    let data = cfg.problem();
    let reference = match cfg.experiment {
        ExperimentKind::Exp2 if cfg.reference_path().exists() => Some(load_reference(cfg, &data)?),
        _ => None,
    };
    if let Some(r) = &reference {
        check_finer(cfg.n, r)?;
    }
    let run = solve_level(cfg, &data, cfg.n)?;
    let errors = errors_for(cfg, &data, &run, reference.as_ref())?;
    let d = &run.solution.diagnostics;
    let mut s = String::new();
    let _ = writeln!(s, "experiment {}", experiment_name(cfg.experiment));
    let _ = writeln!(s, "n {}", run.n);
    let _ = writeln!(s, "h {:.16e}", run.h);
    let _ = writeln!(s, "dofs {}", run.disc.space().n_dofs());
    let _ = writeln!(s, "outer_iters {}", run.solution.outer_iterations);
    let _ = writeln!(
        s,
        "policy_iters {}",
        run.solution.history.iter().map(|h| h.hjb_iterations).sum::<usize>()
    );
    let _ = writeln!(s, "h1_norm_u {:.16e}", d.h1_norm_u);
    let _ = writeln!(s, "h1_norm_m {:.16e}", d.h1_norm_m);
    let _ = writeln!(s, "min_nodal_m {:.16e}", d.min_nodal_m);
    let _ = writeln!(s, "dmp_violation {}", d.dmp_violation);
    let _ = writeln!(s, "hjb_residual {:.16e}", d.hjb_residual);
    let _ = writeln!(s, "kfp_residual {:.16e}", d.kfp_residual);
    if let Some(e) = errors {
        let _ = writeln!(s, "u_h1_rel {:.16e}", e.u_h1_rel);
        let _ = writeln!(s, "m_l2_rel {:.16e}", e.m_l2_rel);
        let _ = writeln!(s, "m_h1_rel {:.16e}", e.m_h1_rel);
        let _ = writeln!(s, "drift_l2_rel {:.16e}", e.drift_l2_rel);
    }
    out.write_all(s.as_bytes())?;
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("summary.txt"), &s)?;
        if cfg.dump_nodal {
            fs::write(dir.join("nodal.csv"), nodal_csv(&run))?;
        }
    }
    Ok(())
}

fn nodal_csv(run: &LevelRun) -> String {
    let space = run.disc.space();
    let u = space.full_nodal_values(&run.solution.u);
    let m = space.full_nodal_values(&run.solution.m);
    let mut s = String::from("x,y,u,m\n");
    for (k, p) in space.mesh().nodes().iter().enumerate() {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], u[k], m[k]);
    }
    s
}

fn experiment_name(e: ExperimentKind) -> &'static str {
    match e {
        ExperimentKind::Exp1 => "exp1",
        ExperimentKind::Exp2 => "exp2",
        ExperimentKind::Custom => "custom",
    }
}

fn check_finer(n: usize, r: &LoadedReference) -> Result<()> {
    let nr = r.disc.space().mesh().subdivisions().unwrap_or(0);
    if nr <= n || nr % n != 0 {
        return Err(Error::NonNested(format!(
            "reference level n = {nr} is not strictly finer than (and a multiple of) level n = {n}"
        )));
    }
    Ok(())
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub h: f64,
    pub errors: ErrorBundle,
    pub outer_iters: usize,
}

/// Observed rates `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` between successive rows.
pub fn rates(rows: &[TableRow]) -> Vec<ErrorBundle> {
    rows.windows(2)
        .map(|w| {
            let lh = (w[0].h / w[1].h).ln();
            let r = |a: f64, b: f64| (a / b).ln() / lh;
            ErrorBundle {
                u_h1_rel: r(w[0].errors.u_h1_rel, w[1].errors.u_h1_rel),
                m_l2_rel: r(w[0].errors.m_l2_rel, w[1].errors.m_l2_rel),
                m_h1_rel: r(w[0].errors.m_h1_rel, w[1].errors.m_h1_rel),
                drift_l2_rel: r(w[0].errors.drift_l2_rel, w[1].errors.drift_l2_rel),
            }
        })
        .collect()
}

pub fn format_csv(rows: &[TableRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in rows {
        let e = &r.errors;
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.h, e.u_h1_rel, e.m_l2_rel, e.m_h1_rel, e.drift_l2_rel, r.outer_iters
        );
    }
    for e in rates(rows) {
        let _ = writeln!(
            s,
            "rate,{:.16e},{:.16e},{:.16e},{:.16e},",
            e.u_h1_rel, e.m_l2_rel, e.m_h1_rel, e.drift_l2_rel
        );
    }
    s
}

pub fn cmd_convergence(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    if cfg.n_levels.len() < 2 {
        return Err(Error::invalid("n_levels", "a convergence study needs at least two levels"));
    }
    if cfg.experiment == ExperimentKind::Custom {
        return Err(Error::invalid("experiment", "convergence studies need exp1 or exp2"));
    }
    prepare_output_dir(cfg)?;
    let data = cfg.problem();
    let reference = match cfg.experiment {
        ExperimentKind::Exp2 => {
            let r = load_reference(cfg, &data)?;
            for &n in &cfg.n_levels {
                check_finer(n, &r)?;
            }
            Some(r)
        }
        _ => None,
    };
    let mut rows = Vec::new();
    for &n in &cfg.n_levels {
        let run = solve_level(cfg, &data, n)?;
        let errors = errors_for(cfg, &data, &run, reference.as_ref())?.expect("errors exist for exp1 and exp2");
        log::info!("level n = {n} done in {} outer iterations", run.solution.outer_iterations);
        rows.push(TableRow {
            h: run.h,
            errors,
            outer_iters: run.solution.outer_iterations,
        });
    }
    let csv = format_csv(&rows);
    out.write_all(csv.as_bytes())?;
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("convergence.csv"), &csv)?;
    }
    Ok(())
}

/// Solves the second experiment at `reference.n` with every tolerance set
/// to `reference.tol`.
pub fn compute_reference(cfg: &RunConfig) -> Result<ReferenceSolution> {
    if cfg.experiment != ExperimentKind::Exp2 {
        return Err(Error::invalid("experiment", "reference solutions are defined for exp2 only"));
    }
    let tol = cfg.reference.tol;
    let mut fine = cfg.clone();
    fine.mfg.tol_m = tol;
    fine.mfg.tol_u = tol;
    fine.mfg.hjb.tol_increment = tol;
    fine.mfg.hjb.tol_residual = tol;
    let data = fine.problem();
    let run = solve_level(&fine, &data, cfg.reference.n)?;
    Ok(ReferenceSolution {
        format: REFERENCE_FORMAT.to_string(),
        experiment: "exp2".into(),
        n: cfg.reference.n,
        nu: cfg.nu,
        kappa: cfg.kappa,
        quadrature_degree: cfg.quadrature_degree,
        stabilization: cfg.stabilization,
        tol,
        outer_iterations: run.solution.outer_iterations,
        u: run.solution.u.into_values(),
        m: run.solution.m.into_values(),
    })
}

pub fn cmd_reference(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    prepare_output_dir(cfg)?;
    let r = compute_reference(cfg)?;
    let path = cfg.reference_path();
    r.save(&path)?;
    let min_m = NodalFunction::new(r.m.clone()).values().iter().copied().fold(f64::INFINITY, f64::min);
    writeln!(out, "reference n {} written to {}", r.n, path.display())?;
    writeln!(out, "outer_iters {}", r.outer_iterations)?;
    writeln!(out, "min_nodal_m {:.16e}", if min_m.is_finite() { min_m } else { 0.0 })?;
    Ok(())
}
