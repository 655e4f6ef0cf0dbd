use spherepol::geometry::{Configuration, LatticeSpec, SphereSpec};
use spherepol::harness::{
    plotdata_path, run_convergence_in_ellmax, run_plan, run_scaling_in_n, ExperimentKind, ExperimentPlan,
    CONVERGENCE_COLUMNS, SCALING_COLUMNS,
};
use spherepol::io::{read_coefficients, write_coefficients, SolveMetadata};
use spherepol::operators::OperatorContext;
use spherepol::oracle::single_sphere_solution;
use spherepol::solver::{solve_induced_charge, SolverSettings};

fn scaling_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(ExperimentKind::ScalingInN, LatticeSpec::standard(10.0));
    plan.n_values = vec![1, 8];
    plan.ell_max_list = vec![2];
    plan.reference_ell_max = 5;
    plan.deterministic = true;
    plan
}

#[test]
fn solution_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = LatticeSpec::standard(5.0).first_sites(2).unwrap();
    let ctx = OperatorContext::new(&config, 3).unwrap();
    let settings = SolverSettings::default();
    let report = solve_induced_charge(&ctx, &ctx.free_charge(), &settings).unwrap();

    let coeffs = dir.path().join("sol.sphc");
    write_coefficients(&coeffs, &report.solution).unwrap();
    let back = read_coefficients(&coeffs).unwrap();
    assert_eq!(back.as_slice(), report.solution.as_slice());
    assert_eq!(back.radii(), report.solution.radii());
    assert_eq!(back.role(), report.solution.role());

    let meta_path = dir.path().join("sol.json");
    let meta = SolveMetadata::from_report(&report, &settings, &config.hash(), true);
    meta.save(&meta_path).unwrap();
    assert_eq!(SolveMetadata::load(&meta_path).unwrap(), meta);

    let cfg_path = dir.path().join("config.json");
    config.save(&cfg_path).unwrap();
    let loaded = Configuration::load(&cfg_path).unwrap();
    assert_eq!(loaded, config);
    assert_eq!(loaded.hash(), config.hash());
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let mut plan = scaling_plan();
        let path = dir.path().join(format!("run{k}.csv"));
        plan.output = Some(path.clone());
        run_plan(&plan).unwrap();
        assert!(plotdata_path(&path).exists());
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn csv_rows_have_the_declared_columns() {
    let table = run_scaling_in_n(&scaling_plan()).unwrap();
    assert_eq!(table.columns, SCALING_COLUMNS);
    let csv = table.to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        assert_eq!(line.split(',').count(), SCALING_COLUMNS.len());
    }

    let mut plan = ExperimentPlan::new(ExperimentKind::ConvergenceInEllMax, LatticeSpec::standard(10.0));
    plan.n_values = vec![8];
    plan.ell_max_list = vec![1, 2, 3];
    plan.reference_ell_max = 6;
    let study = run_convergence_in_ellmax(&plan).unwrap();
    assert_eq!(study.table.columns, CONVERGENCE_COLUMNS);
    assert_eq!(study.table.rows.len(), 3);
    assert!(study.fit.unwrap().slope < 0.0);
}

#[test]
fn single_site_scaling_matches_closed_form() {
    let table = run_scaling_in_n(&scaling_plan()).unwrap();
    let energy = table.column("energy").unwrap();
    // One sphere: radius 1, kappa 10, total free charge -1 in unit background.
    let config = Configuration::new(1.0, vec![SphereSpec::new([0.0; 3], 1.0, 10.0)]);
    let ctx = OperatorContext::new(&config, 2).unwrap();
    let sigma = LatticeSpec::standard(10.0).first_sites(1).map(|c| OperatorContext::new(&c, 2).unwrap().free_charge()).unwrap();
    let nu = single_sphere_solution(1.0, 10.0, 1.0, sigma.block(0)).unwrap();
    let nu = ctx.from_vec(spherepol::trace_space::Role::Density, nu).unwrap();
    let expected = ctx.energy(&sigma, &nu).unwrap();
    assert!((energy[0] - expected).abs() <= 1e-12 * expected.abs());
    assert!(table.column("err_total").unwrap()[0] < 1e-13);
}
