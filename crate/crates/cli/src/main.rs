use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spherepol::geometry::{validate, Alternation, Configuration, LatticeSpec};
use spherepol::harness::{run_convergence_in_ellmax, run_plan, ChargeProfile, ExperimentKind, ExperimentPlan, ResultTable};
use spherepol::io::{write_coefficients, SolveMetadata};
use spherepol::operators::{inf_sup_bound, ContextOptions, OperatorContext};
use spherepol::parallel::{current_threads, init_thread_pool, ExecMode};
use spherepol::solver::{solve_induced_charge, solve_potential_form, Formulation, SolverSettings};

#[derive(Parser)]
#[command(name = "spherepol", version, about = "Polarisation of dielectric spheres by a spectral Galerkin boundary-integral method")]
struct Cli {
    /// Worker threads (falls back to RAYON_NUM_THREADS, then the core count).
    #[arg(long, global = true, env = "SPHEREPOL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its coefficients and metadata.
    Solve(SolveArgs),
    /// Error against a reference solve over growing lattices.
    Scaling(ScalingArgs),
    /// Error against a reference solve over a range of degrees.
    Convergence(ConvergenceArgs),
    /// GMRES iteration counts of both charge formulations over growing lattices.
    Iterations(IterationArgs),
    /// Compare matrix-free solves with dense quadrature solves on random configurations.
    OracleCheck(OracleArgs),
    /// Check a configuration and print its geometry summary.
    Validate(GeometryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pattern {
    Checkerboard,
    Layers,
    Uniform,
}

impl From<Pattern> for Alternation {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Checkerboard => Alternation::Checkerboard,
            Pattern::Layers => Alternation::Layers,
            Pattern::Uniform => Alternation::Uniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    InducedCharge,
    SecondKind,
    Potential,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::InducedCharge => Formulation::InducedCharge,
            FormulationArg::SecondKind => Formulation::SecondKind,
            FormulationArg::Potential => Formulation::Potential,
        }
    }
}

#[derive(Args, Clone)]
struct LatticeArgs {
    /// Lattice edge length.
    #[arg(long, default_value_t = 10.0)]
    edge: f64,
    #[arg(long, value_enum, default_value = "checkerboard")]
    pattern: Pattern,
    /// Exterior dielectric constant.
    #[arg(long, default_value_t = 1.0)]
    kappa0: f64,
    /// Multiply the template free charges (±1) by this factor.
    #[arg(long, default_value_t = 1.0)]
    charge_scale: f64,
    /// Add a tilted dipole of this relative strength to every free charge.
    #[arg(long)]
    dipole: Option<f64>,
}

impl LatticeArgs {
    fn spec(&self) -> LatticeSpec {
        let mut spec = LatticeSpec::standard(self.edge);
        spec.pattern = self.pattern.into();
        spec.kappa0 = self.kappa0;
        spec
    }

    fn profiles(&self) -> Vec<ChargeProfile> {
        let mut out = Vec::new();
        if self.charge_scale != 1.0 {
            out.push(ChargeProfile::Scaled { factor: self.charge_scale });
        }
        if let Some(strength) = self.dipole {
            out.push(ChargeProfile::MonopoleDipole { strength });
        }
        out
    }

    fn charge(&self) -> Result<ChargeProfile> {
        match self.profiles().as_slice() {
            [] => Ok(ChargeProfile::Templates),
            [one] => Ok(*one),
            _ => bail!("--charge-scale and --dipole cannot be combined in a sweep"),
        }
    }
}

#[derive(Args, Clone)]
struct GeometryArgs {
    /// Configuration file (JSON); overrides the lattice flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of lattice spheres when no configuration file is given.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[command(flatten)]
    lattice: LatticeArgs,
}

impl GeometryArgs {
    fn configuration(&self) -> Result<Configuration> {
        if let Some(path) = &self.config {
            return Configuration::load(path).with_context(|| format!("loading {}", path.display()));
        }
        let mut config = self.lattice.spec().first_sites(self.n)?;
        for p in self.lattice.profiles() {
            p.apply(&mut config);
        }
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct NumericArgs {
    /// GMRES relative tolerance.
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// GMRES restart length (unrestarted when omitted).
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long, value_enum, default_value = "induced-charge")]
    formulation: FormulationArg,
    /// Right-precondition by the single-sphere diagonal.
    #[arg(long)]
    jacobi: bool,
    /// Polar quadrature nodes per unit of ell_max + 1.
    #[arg(long, default_value_t = 2)]
    oversample: usize,
    /// Use exactly the oversampled grid, without the alias-driven refinement.
    #[arg(long)]
    fixed_grid: bool,
    /// Sequential execution and zeroed timings for byte-identical output.
    #[arg(long)]
    deterministic: bool,
}

impl NumericArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            rel_tol: self.tol,
            max_iters: self.max_iters,
            restart: self.restart,
            formulation: self.formulation.into(),
            jacobi: self.jacobi,
        }
    }

    fn context(&self) -> ContextOptions {
        let base = if self.fixed_grid {
            ContextOptions::fixed(self.oversample)
        } else {
            ContextOptions {
                oversample: self.oversample,
                ..ContextOptions::default()
            }
        };
        base.with_exec(if self.deterministic {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        })
    }

    fn apply(&self, plan: &mut ExperimentPlan) {
        plan.solver = self.settings();
        let ctx = self.context();
        plan.oversample = ctx.oversample;
        plan.alias_tol = ctx.alias_tol;
        plan.deterministic = self.deterministic;
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long, default_value_t = 6)]
    ell_max: usize,
    #[command(flatten)]
    numeric: NumericArgs,
    /// Output prefix; writes PREFIX.sphc and PREFIX.json.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCommon {
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Sphere counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 27, 64])]
    n: Vec<usize>,
    #[command(flatten)]
    numeric: NumericArgs,
    /// CSV output; a log-lin variant is written beside it as NAME.plot.csv.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    common: SweepCommon,
    #[arg(long, default_value_t = 6)]
    ell_max: usize,
    #[arg(long, default_value_t = 20)]
    reference: usize,
    /// Reference degree cap for N > 64.
    #[arg(long, default_value_t = 16)]
    large_n_cap: usize,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: SweepCommon,
    /// Working degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 6, 7, 8, 9, 10])]
    ell_max: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    reference: usize,
}

#[derive(Args)]
struct IterationArgs {
    #[command(flatten)]
    common: SweepCommon,
    #[arg(long, default_value_t = 6)]
    ell_max: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 20)]
    cases: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[command(flatten)]
    numeric: NumericArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn sweep_plan(kind: ExperimentKind, common: &SweepCommon) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::new(kind, common.lattice.spec());
    plan.n_values = common.n.clone();
    plan.charge = common.lattice.charge()?;
    plan.output = common.output.clone();
    common.numeric.apply(&mut plan);
    Ok(plan)
}

fn print_table(table: &ResultTable) -> Result<()> {
    print!("{}", table.to_csv()?);
    Ok(())
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn solve(args: &SolveArgs) -> Result<()> {
    let config = args.geometry.configuration()?;
    let ctx = OperatorContext::with_options(&config, args.ell_max, args.numeric.context())?;
    let sigma = ctx.free_charge();
    let settings = args.numeric.settings();
    let report = solve_induced_charge(&ctx, &sigma, &settings)?;
    let hash = config.hash();
    println!("config hash      {hash}");
    println!("spheres          {}", config.len());
    println!("ell_max          {}", args.ell_max);
    println!("polar nodes      {}", ctx.grid().n_theta);
    println!("formulation      {:?}", report.formulation);
    println!("iterations       {}", report.iterations);
    println!("final residual   {:.3e}", report.final_residual);
    println!("energy           {:.16e}", report.energy);
    if let Ok(beta) = inf_sup_bound(&config) {
        println!("inf-sup bound    {beta:.6}");
    }
    if let Some(prefix) = &args.output {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        write_coefficients(&with_extension(prefix, "sphc"), &report.solution)?;
        let meta = SolveMetadata::from_report(&report, &settings, &hash, args.numeric.deterministic);
        meta.save(&with_extension(prefix, "json"))?;
        if settings.formulation == Formulation::Potential {
            let lam = solve_potential_form(&ctx, &sigma, &settings)?;
            write_coefficients(&with_extension(prefix, "potential.sphc"), &lam.solution)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        init_thread_pool(threads);
    }
    match &cli.command {
        Command::Solve(args) => solve(args)?,
        Command::Scaling(args) => {
            let mut plan = sweep_plan(ExperimentKind::ScalingInN, &args.common)?;
            plan.ell_max_list = vec![args.ell_max];
            plan.reference_ell_max = args.reference;
            plan.large_n_reference_cap = Some(args.large_n_cap);
            print_table(&run_plan(&plan)?)?;
        }
        Command::Convergence(args) => {
            let mut plan = sweep_plan(ExperimentKind::ConvergenceInEllMax, &args.common)?;
            plan.ell_max_list = args.ell_max.clone();
            plan.reference_ell_max = args.reference;
            let study = run_convergence_in_ellmax(&plan)?;
            run_plan_output(&plan, &study.table)?;
            print_table(&study.table)?;
            if let Some(fit) = study.fit {
                eprintln!("ln(err) fit: slope {:.6}, R² {:.6}", fit.slope, fit.r_squared);
            }
            if let Some(fit) = study.energy_fit {
                eprintln!("ln(energy err) fit: slope {:.6}, R² {:.6}", fit.slope, fit.r_squared);
            }
        }
        Command::Iterations(args) => {
            let mut plan = sweep_plan(ExperimentKind::IterationCounts, &args.common)?;
            plan.ell_max_list = vec![args.ell_max];
            print_table(&run_plan(&plan)?)?;
        }
        Command::OracleCheck(args) => {
            let mut plan = ExperimentPlan::new(ExperimentKind::OracleCheck, LatticeSpec::standard(10.0));
            plan.oracle_cases = args.cases;
            plan.seed = args.seed;
            plan.output = args.output.clone();
            args.numeric.apply(&mut plan);
            print_table(&run_plan(&plan)?)?;
        }
        Command::Validate(args) => {
            let config = args.configuration()?;
            let stats = validate(&config)?;
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "config_hash": config.hash(),
                "n_spheres": stats.n_spheres,
                "min_radius": stats.min_radius,
                "max_radius": stats.max_radius,
                "min_separation": if stats.min_separation.is_finite() { Some(stats.min_separation) } else { None },
                "min_kappa": stats.min_kappa,
                "max_kappa": stats.max_kappa,
                "inf_sup_bound": inf_sup_bound(&config).ok(),
                "threads": current_threads(),
            }))?);
        }
    }
    Ok(())
}

fn run_plan_output(plan: &ExperimentPlan, table: &ResultTable) -> Result<()> {
    if let Some(path) = &plan.output {
        spherepol::harness::emit_csv(table, path)?;
        spherepol::harness::emit_plotdata(table, &spherepol::harness::plotdata_path(path))?;
    }
    Ok(())
}
