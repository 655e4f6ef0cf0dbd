//! Experiment plans for the lattice studies and their CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, FreeCharge, LatticeSpec};
use crate::harmonics::block_len;
use crate::operators::{ContextOptions, OperatorContext};
use crate::oracle::{assemble_v_dense, min_symmetric_eigenvalue, random_configuration, solve_dense};
use crate::parallel::ExecMode;
use crate::solver::{charge_sum_deviation, solve_induced_charge, Formulation, SolveReport, SolverSettings};
use crate::trace_space::{dual_norm, GlobalCoefficients, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ScalingInN,
    ConvergenceInEllMax,
    IterationCounts,
    SingleSolve,
    OracleCheck,
}

/// How free charges are assigned to lattice spheres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChargeProfile {
    /// Whatever the sphere templates carry (uniform ±1 by default).
    #[default]
    Templates,
    /// The template monopole plus a dipole of relative `strength` along a fixed tilted axis.
    MonopoleDipole { strength: f64 },
    /// Every template charge multiplied by `factor`.
    Scaled { factor: f64 },
}

const TILT: [f64; 3] = [0.267_261_241_912_424_4, 0.534_522_483_824_848_8, 0.801_783_725_737_273_2];

impl ChargeProfile {
    pub fn apply(&self, config: &mut Configuration) {
        for s in &mut config.spheres {
            let total = match &s.free_charge {
                FreeCharge::Monopole { total } | FreeCharge::MonopoleDipole { total, .. } => *total,
                FreeCharge::Coefficients { .. } => continue,
            };
            match *self {
                ChargeProfile::Templates => {}
                ChargeProfile::MonopoleDipole { strength } => {
                    let p = strength * s.radius;
                    s.free_charge = FreeCharge::MonopoleDipole {
                        total,
                        dipole: [p * TILT[0], p * TILT[1], p * TILT[2]],
                    };
                }
                ChargeProfile::Scaled { factor } => {
                    s.free_charge = match s.free_charge {
                        FreeCharge::MonopoleDipole { dipole, .. } => FreeCharge::MonopoleDipole {
                            total: factor * total,
                            dipole: dipole.map(|d| factor * d),
                        },
                        _ => FreeCharge::Monopole { total: factor * total },
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub lattice: LatticeSpec,
    /// Sphere counts; lattices take the first `N` sites of the smallest enclosing cube.
    pub n_values: Vec<usize>,
    pub ell_max_list: Vec<usize>,
    pub reference_ell_max: usize,
    /// Cap on the reference degree for `N > 64`.
    pub large_n_reference_cap: Option<usize>,
    pub charge: ChargeProfile,
    pub solver: SolverSettings,
    pub oversample: usize,
    pub alias_tol: Option<f64>,
    pub output: Option<PathBuf>,
    /// Sequential execution and zeroed timings, for byte-identical output.
    pub deterministic: bool,
    pub oracle_cases: usize,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(kind: ExperimentKind, lattice: LatticeSpec) -> Self {
        Self {
            kind,
            lattice,
            n_values: vec![8],
            ell_max_list: vec![6],
            reference_ell_max: 20,
            large_n_reference_cap: Some(16),
            charge: ChargeProfile::Templates,
            solver: SolverSettings::default(),
            oversample: 2,
            alias_tol: ContextOptions::default().alias_tol,
            output: None,
            deterministic: false,
            oracle_cases: 20,
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.ell_max_list.is_empty() {
            return Err(Error::InvalidParameter("the ell_max list is empty".into()));
        }
        if matches!(self.kind, ExperimentKind::ScalingInN | ExperimentKind::ConvergenceInEllMax) {
            let top = *self.ell_max_list.iter().max().unwrap();
            if self.reference_ell_max < top {
                return Err(Error::InvalidParameter(format!(
                    "reference ell_max {} is below the largest working ell_max {top}",
                    self.reference_ell_max
                )));
            }
        }
        if self.kind != ExperimentKind::OracleCheck {
            if self.n_values.is_empty() {
                return Err(Error::InvalidParameter("no sphere counts given".into()));
            }
            for &n in &self.n_values {
                self.configuration(n)?;
            }
        }
        Ok(())
    }

    pub fn configuration(&self, n: usize) -> Result<Configuration> {
        let mut config = self.lattice.first_sites(n)?;
        self.charge.apply(&mut config);
        Ok(config)
    }

    /// Reference degree used for a lattice of `n` spheres.
    pub fn reference_for(&self, n: usize) -> usize {
        match self.large_n_reference_cap {
            Some(cap) if n > 64 => self.reference_ell_max.min(cap),
            _ => self.reference_ell_max,
        }
    }

    pub fn context_options(&self) -> ContextOptions {
        ContextOptions {
            oversample: self.oversample,
            alias_tol: self.alias_tol,
            exec: if self.deterministic {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            },
        }
    }

    fn seconds(&self, start: Instant) -> f64 {
        if self.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        }
    }

    fn expect_kind(&self, kind: ExperimentKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidParameter(format!("plan is {:?}, expected {kind:?}", self.kind)));
        }
        self.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            // 17 significant digits
            Value::Float(f) => format!("{f:.16e}"),
            Value::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row does not match the table schema");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows.iter().map(|r| r[k].as_f64()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Log-lin view: non-error columns pass through, each `err*` column becomes `log10_err*`.
    pub fn to_plotdata(&self) -> ResultTable {
        let mut out = ResultTable {
            columns: self
                .columns
                .iter()
                .map(|c| if c.starts_with("err") { format!("log10_{c}") } else { c.clone() })
                .collect(),
            rows: Vec::new(),
        };
        for row in &self.rows {
            out.rows.push(
                row.iter()
                    .zip(&self.columns)
                    .map(|(v, c)| match (c.starts_with("err"), v.as_f64()) {
                        (true, Some(x)) => Value::Float(x.log10()),
                        _ => v.clone(),
                    })
                    .collect(),
            );
        }
        out
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    write_text(path, &table.to_csv()?)
}

pub fn emit_plotdata(table: &ResultTable, path: &Path) -> Result<()> {
    write_text(path, &table.to_plotdata().to_csv()?)
}

/// Least-squares line `y = slope x + intercept` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

fn solve_at(
    plan: &ExperimentPlan,
    config: &Configuration,
    ell_max: usize,
    settings: &SolverSettings,
) -> Result<(OperatorContext, GlobalCoefficients, SolveReport)> {
    let ctx = OperatorContext::with_options(config, ell_max, plan.context_options())?;
    let sigma = ctx.free_charge();
    let report = solve_induced_charge(&ctx, &sigma, settings)?;
    Ok((ctx, sigma, report))
}

fn dual_error(reference: &GlobalCoefficients, working: &GlobalCoefficients) -> Result<f64> {
    let lifted = working.resized(reference.ell_max());
    dual_norm(&(reference - &lifted))
}

pub const SCALING_COLUMNS: &[&str] = &[
    "n_spheres",
    "ell_max",
    "ref_ell_max",
    "err_total",
    "err_avg_per_sphere",
    "err_dual_over_sqrt_n",
    "err_energy",
    "iterations",
    "iterations_ref",
    "energy",
    "energy_ref",
    "wall_time",
    "config_hash",
];

pub fn run_scaling_in_n(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.expect_kind(ExperimentKind::ScalingInN)?;
    let ell_max = plan.ell_max_list[0];
    let mut table = ResultTable::new(SCALING_COLUMNS);
    for &n in &plan.n_values {
        let start = Instant::now();
        let config = plan.configuration(n)?;
        let ref_l = plan.reference_for(n).max(ell_max);
        let (_, _, reference) = solve_at(plan, &config, ref_l, &plan.solver)?;
        let (_, _, working) = solve_at(plan, &config, ell_max, &plan.solver)?;
        let err = dual_error(&reference.solution, &working.solution)?;
        let nf = n as f64;
        table.push(vec![
            n.into(),
            ell_max.into(),
            ref_l.into(),
            err.into(),
            (err / nf).into(),
            (err / nf.sqrt()).into(),
            (reference.energy - working.energy).abs().into(),
            working.iterations.into(),
            reference.iterations.into(),
            working.energy.into(),
            reference.energy.into(),
            plan.seconds(start).into(),
            config.hash().into(),
        ]);
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub table: ResultTable,
    /// Fit of `ln(err)` against `ell_max` over rows with a nonzero error.
    pub fit: Option<LinearFit>,
    pub energy_fit: Option<LinearFit>,
}

pub const CONVERGENCE_COLUMNS: &[&str] = &[
    "ell_max",
    "ref_ell_max",
    "err",
    "log_err",
    "err_energy",
    "iterations",
    "energy",
    "wall_time",
    "config_hash",
];

pub fn run_convergence_in_ellmax(plan: &ExperimentPlan) -> Result<ConvergenceStudy> {
    plan.expect_kind(ExperimentKind::ConvergenceInEllMax)?;
    let n = plan.n_values[0];
    let config = plan.configuration(n)?;
    let hash = config.hash();
    let ref_l = plan.reference_for(n).max(*plan.ell_max_list.iter().max().unwrap());
    let (_, _, reference) = solve_at(plan, &config, ref_l, &plan.solver)?;
    let mut table = ResultTable::new(CONVERGENCE_COLUMNS);
    let (mut xs, mut ys, mut exs, mut eys) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &l in &plan.ell_max_list {
        let start = Instant::now();
        let (_, _, working) = solve_at(plan, &config, l, &plan.solver)?;
        let err = dual_error(&reference.solution, &working.solution)?;
        let e_err = (reference.energy - working.energy).abs();
        if err > 0.0 {
            xs.push(l as f64);
            ys.push(err.ln());
        }
        if e_err > 0.0 {
            exs.push(l as f64);
            eys.push(e_err.ln());
        }
        table.push(vec![
            l.into(),
            ref_l.into(),
            err.into(),
            err.ln().into(),
            e_err.into(),
            working.iterations.into(),
            working.energy.into(),
            plan.seconds(start).into(),
            hash.clone().into(),
        ]);
    }
    Ok(ConvergenceStudy {
        table,
        fit: fit_line(&xs, &ys),
        energy_fit: fit_line(&exs, &eys),
    })
}

pub const ITERATION_COLUMNS: &[&str] = &[
    "n_spheres",
    "ell_max",
    "iterations_induced_charge",
    "iterations_second_kind",
    "residual_induced_charge",
    "residual_second_kind",
    "wall_time",
    "config_hash",
];

pub fn run_iteration_counts(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.expect_kind(ExperimentKind::IterationCounts)?;
    let ell_max = plan.ell_max_list[0];
    let mut table = ResultTable::new(ITERATION_COLUMNS);
    for &n in &plan.n_values {
        let start = Instant::now();
        let config = plan.configuration(n)?;
        let ctx = OperatorContext::with_options(&config, ell_max, plan.context_options())?;
        let sigma = ctx.free_charge();
        let a = solve_induced_charge(&ctx, &sigma, &plan.solver.with_formulation(Formulation::InducedCharge))?;
        let b = solve_induced_charge(&ctx, &sigma, &plan.solver.with_formulation(Formulation::SecondKind))?;
        table.push(vec![
            n.into(),
            ell_max.into(),
            a.iterations.into(),
            b.iterations.into(),
            a.final_residual.into(),
            b.final_residual.into(),
            plan.seconds(start).into(),
            config.hash().into(),
        ]);
    }
    Ok(table)
}

pub const ORACLE_COLUMNS: &[&str] = &[
    "case",
    "n_spheres",
    "ell_max",
    "err_rel_dual",
    "min_eigenvalue_v",
    "charge_sum_deviation",
    "wall_time",
    "config_hash",
];

/// Random configurations cycling `N` over `1..=4` and `ell_max` over `1..=4`, each seeded
/// from the plan seed and its index, with random free-charge coefficients.
pub fn oracle_cases(seed: u64, count: usize) -> Vec<(Configuration, usize, Vec<f64>)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = 1 + k % 4;
            let l = 1 + (k / 4 + k) % 4;
            let config = random_configuration(&mut rng, n, 1.0);
            let sigma = (0..n * block_len(l)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (config, l, sigma)
        })
        .collect()
}

pub fn run_oracle_check(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.expect_kind(ExperimentKind::OracleCheck)?;
    let mut table = ResultTable::new(ORACLE_COLUMNS);
    for (k, (config, l, sigma)) in oracle_cases(plan.seed, plan.oracle_cases).into_iter().enumerate() {
        let start = Instant::now();
        let ctx = OperatorContext::with_options(&config, l, plan.context_options())?;
        let sigma = ctx.from_vec(Role::Density, sigma)?;
        let fast = solve_induced_charge(&ctx, &sigma, &plan.solver)?;
        let dense = solve_dense(&config, l, &sigma)?;
        let err = dual_norm(&(&dense - &fast.solution))? / dual_norm(&dense)?;
        let min_eig = min_symmetric_eigenvalue(&assemble_v_dense(&config, l)?);
        let (_, dev) = charge_sum_deviation(&ctx, &fast.solution, &sigma);
        table.push(vec![
            k.into(),
            config.len().into(),
            l.into(),
            err.into(),
            min_eig.into(),
            dev.into(),
            plan.seconds(start).into(),
            config.hash().into(),
        ]);
    }
    Ok(table)
}

/// Runs a tabular plan and writes its CSV (and the log-lin variant beside it) if an output
/// path is set.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultTable> {
    let table = match plan.kind {
        ExperimentKind::ScalingInN => run_scaling_in_n(plan)?,
        ExperimentKind::ConvergenceInEllMax => run_convergence_in_ellmax(plan)?.table,
        ExperimentKind::IterationCounts => run_iteration_counts(plan)?,
        ExperimentKind::OracleCheck => run_oracle_check(plan)?,
        ExperimentKind::SingleSolve => {
            return Err(Error::InvalidParameter(
                "single solves produce a coefficient file, not a table".into(),
            ))
        }
    };
    if let Some(path) = &plan.output {
        emit_csv(&table, path)?;
        emit_plotdata(&table, &plotdata_path(path))?;
    }
    Ok(table)
}

/// `results.csv` → `results.plot.csv`.
pub fn plotdata_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name = String::new();
    let _ = write!(name, "{stem}.plot.csv");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable::new(&["a", "b"]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n");
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let mut t = ResultTable::new(&["x", "err"]);
        t.push(vec![Value::Int(3), Value::Float(0.1)]);
        let csv = t.to_csv().unwrap();
        let field = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
        assert_eq!(field, "1.0000000000000001e-1");
        assert_eq!(field.parse::<f64>().unwrap(), 0.1);
        let plot = t.to_plotdata();
        assert_eq!(plot.columns, vec!["x", "log10_err"]);
        assert!((plot.rows[0][1].as_f64().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = ResultTable::new(&["n", "err", "hash"]);
        t.push(vec![8usize.into(), 1.234e-9.into(), "abcd".into()]);
        t.push(vec![27usize.into(), std::f64::consts::PI.into(), "ef01".into()]);
        let text = t.to_csv().unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(r.headers().unwrap().len(), 3);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(&rows[0][2], "abcd");
    }

    #[test]
    fn line_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn plan_validation() {
        let mut plan = ExperimentPlan::new(ExperimentKind::ConvergenceInEllMax, LatticeSpec::standard(5.0));
        plan.ell_max_list = vec![2, 4];
        plan.reference_ell_max = 3;
        assert!(plan.validate().is_err());
        plan.reference_ell_max = 4;
        plan.validate().unwrap();
        plan.lattice.edge_length = 2.5;
        assert!(matches!(plan.validate(), Err(Error::Overlap { .. })));
        plan.reference_ell_max = 20;
        assert_eq!(plan.reference_for(125), 16);
        assert_eq!(plan.reference_for(64), 20);
    }

    #[test]
    fn charge_profiles() {
        let plan = ExperimentPlan::new(ExperimentKind::SingleSolve, LatticeSpec::standard(5.0));
        let base = plan.configuration(2).unwrap();
        let mut tilted = base.clone();
        ChargeProfile::MonopoleDipole { strength: 0.5 }.apply(&mut tilted);
        match &tilted.spheres[1].free_charge {
            FreeCharge::MonopoleDipole { total, dipole } => {
                assert_eq!(*total, 1.0);
                let norm = dipole.iter().map(|d| d * d).sum::<f64>().sqrt();
                assert!((norm - 0.5 * 2.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        let mut scaled = base;
        ChargeProfile::Scaled { factor: 3.0 }.apply(&mut scaled);
        assert_eq!(scaled.spheres[0].free_charge, FreeCharge::Monopole { total: -3.0 });
    }

    #[test]
    fn matched_media_scaling_is_exact() {
        let mut lattice = LatticeSpec::standard(10.0);
        lattice.type_a.kappa = 1.0;
        lattice.type_b.kappa = 1.0;
        let mut plan = ExperimentPlan::new(ExperimentKind::ScalingInN, lattice);
        plan.n_values = vec![1, 8];
        plan.ell_max_list = vec![2];
        plan.reference_ell_max = 5;
        let t = run_scaling_in_n(&plan).unwrap();
        for e in t.column("err_total").unwrap() {
            assert!(e < 1e-13);
        }
        assert_eq!(t.column("iterations").unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn deterministic_output_is_reproducible() {
        let mut plan = ExperimentPlan::new(ExperimentKind::IterationCounts, LatticeSpec::standard(10.0));
        plan.n_values = vec![2, 3];
        plan.ell_max_list = vec![2];
        plan.deterministic = true;
        let a = run_plan(&plan).unwrap().to_csv().unwrap();
        let b = run_plan(&plan).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }
}
