use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spherepol::harmonics::block_len;
use spherepol::operators::OperatorContext;
use spherepol::oracle::{min_symmetric_eigenvalue, operator_matrix, random_configuration};
use spherepol::solver::{charge_sum_deviation, solve_induced_charge, Formulation, SolverSettings};
use spherepol::trace_space::{dual_norm, l2_inner, truncate, Role};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_layer_is_symmetric_and_coercive(seed in any::<u64>(), n in 1usize..=8, l in 0usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_configuration(&mut rng, n, 0.5);
        let ctx = OperatorContext::new(&config, l).unwrap();
        let dim = n * block_len(l);
        // Galerkin matrix <u_j, V u_k> in the weighted inner product.
        let basis = |k: usize| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            ctx.from_vec(Role::Density, v).unwrap()
        };
        let vcols = operator_matrix(dim, |x| Ok(ctx.apply_v(&ctx.from_vec(Role::Density, x.to_vec())?)?.into_vec())).unwrap();
        let mut g = nalgebra::DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for k in 0..dim {
                let vk = ctx.from_vec(Role::Trace, vcols.column(k).iter().copied().collect()).unwrap();
                g[(j, k)] = l2_inner(&basis(j), &vk).unwrap();
            }
        }
        let asym = (&g - g.transpose()).amax() / g.amax();
        prop_assert!(asym < 1e-11, "asymmetry {asym:e}");
        let sym = (&g + g.transpose()) * 0.5;
        let lam = min_symmetric_eigenvalue(&sym);
        eprintln!("N={n} L={l} coercivity constant {lam:.3e} asymmetry {asym:.1e}");
        prop_assert!(lam > 0.0);
    }

    #[test]
    fn adjoint_pair_identity(seed in any::<u64>(), n in 1usize..=4, l in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_configuration(&mut rng, n, 0.5);
        let ctx = OperatorContext::new(&config, l).unwrap();
        let dim = n * block_len(l);
        let nu = ctx.from_vec(Role::Density, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lam = ctx.from_vec(Role::Trace, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lhs = l2_inner(&ctx.apply_a_star(&nu).unwrap(), &lam).unwrap();
        let rhs = l2_inner(&nu, &ctx.apply_a(&lam).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn solutions_respect_the_charge_sum_rule(seed in any::<u64>(), n in 1usize..=4, l in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_configuration(&mut rng, n, 0.5);
        let ctx = OperatorContext::new(&config, l).unwrap();
        let sigma = ctx.free_charge();
        let report = solve_induced_charge(&ctx, &sigma, &SolverSettings::default()).unwrap();
        let (_, dev) = charge_sum_deviation(&ctx, &report.solution, &sigma);
        prop_assert!(dev <= 1e-10 * (1.0 + sigma.coefficient_norm()), "deviation {dev:e}");
    }
}

#[test]
fn truncation_is_stable_in_the_dual_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let config = random_configuration(&mut rng, 3, 1.0);
    let dim = 3 * block_len(8);
    let ctx = OperatorContext::new(&config, 8).unwrap();
    // Decaying coefficients, so truncation errors shrink with the degree.
    let mut data: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for (k, v) in data.iter_mut().enumerate() {
        let ell = ((k % block_len(8)) as f64).sqrt().floor();
        *v *= (-ell).exp();
    }
    let u = ctx.from_vec(Role::Density, data).unwrap();
    let full = dual_norm(&u).unwrap();
    let mut previous = f64::INFINITY;
    for l in 0..8 {
        let t = truncate(&u, l).unwrap().resized(8);
        let err = dual_norm(&(&u - &t)).unwrap() / full;
        eprintln!("truncation to L={l}: relative dual error {err:.3e}");
        assert!(err < previous);
        assert!(dual_norm(&truncate(&u, l).unwrap()).unwrap() <= full * (1.0 + 1e-14));
        previous = err;
    }
}

#[test]
fn formulations_agree_on_a_lattice() {
    let lattice = spherepol::geometry::LatticeSpec::standard(5.0);
    let config = lattice.first_sites(8).unwrap();
    let ctx = OperatorContext::new(&config, 4).unwrap();
    let sigma = ctx.free_charge();
    let base = solve_induced_charge(&ctx, &sigma, &SolverSettings::default()).unwrap();
    for f in [Formulation::SecondKind, Formulation::Potential] {
        let other = solve_induced_charge(&ctx, &sigma, &SolverSettings::default().with_formulation(f)).unwrap();
        let rel = dual_norm(&(&base.solution - &other.solution)).unwrap() / dual_norm(&base.solution).unwrap();
        assert!(rel < 1e-10, "{f:?}: {rel:e}");
    }
}
