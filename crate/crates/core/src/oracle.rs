//! Brute-force reference implementations: dense single-layer assembly by direct kernel
//! quadrature, dense LU solves and single-sphere closed forms.
//!
//! Entries of the dense single-layer matrix are the `L²` pairings
//! `G[(i,a),(j,b)] = ∫_{S_i} ∫_{S_j} Y_a(x) Y_b(y) / (4π |x - y|) dy dx`.
//!
//! Off-diagonal blocks use a tensor Gauss rule on both spheres. On a diagonal block put the
//! outer point at the pole of a rotated frame, `y = cos γ x + sin γ (cos α e1 + sin α e2)`.
//! Then `|x - y| = 2r sin(γ/2)` and `dy = 2r² sin(γ/2) cos(γ/2) dγ dα`, so
//!
//! ```text
//! ∫ Y_b(y) / (4π |x - y|) dy = r / (4π) ∫_0^{2π} ∫_0^π Y_b(y(γ, α)) cos(γ/2) dγ dα
//! ```
//!
//! with a smooth integrand, done with Gauss-Legendre in `γ` and the trapezoid rule in `α`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{distance, validate, Configuration, SphereSpec};
use crate::harmonics::{block_len, degrees, gauss_legendre, HarmonicIndex, Legendre, SphereQuadrature};
use crate::trace_space::{GlobalCoefficients, Role};

/// Largest dense dimension the oracle will assemble.
pub const GUARD_RAIL: usize = 4096;

/// Polar-order multiplier relative to the fast path's default grid.
pub const ORDER_FACTOR: usize = 4;

/// Dense realisation of the induced-charge system in the coefficient layout.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub ell_max: usize,
    pub n_spheres: usize,
}

impl DenseSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, sphere: usize, ell: usize, m: i64) -> usize {
        sphere * block_len(self.ell_max) + HarmonicIndex { ell, m }.flat()
    }

    pub fn entry(&self, row: usize) -> (usize, HarmonicIndex) {
        let nb = block_len(self.ell_max);
        (row / nb, HarmonicIndex::from_flat(row % nb))
    }
}

fn check_guard(config: &Configuration, ell_max: usize) -> Result<usize> {
    let dim = config.len() * block_len(ell_max);
    if dim > GUARD_RAIL {
        return Err(Error::GuardRail { dim, limit: GUARD_RAIL });
    }
    Ok(dim)
}

// Harmonics sampled at quadrature nodes, premultiplied by the surface weights.
fn weighted_basis(grid: &SphereQuadrature, legendre: &Legendre, radius: f64) -> (Vec<[f64; 3]>, DMatrix<f64>) {
    let nb = block_len(legendre.ell_max());
    let units = grid.unit_vectors();
    let mut b = DMatrix::zeros(units.len(), nb);
    let mut y = vec![0.0; nb];
    for (n, (u, node)) in units.iter().zip(&grid.nodes).enumerate() {
        legendre.harmonics(*u, &mut y);
        let w = node.weight * radius * radius;
        for k in 0..nb {
            b[(n, k)] = w * y[k];
        }
    }
    (units, b)
}

fn pair_order(ell_max: usize, ra: f64, rb: f64, d: f64, refine: usize) -> usize {
    // decay rate of the kernel expansion seen from either sphere
    let rho = (ra / (d - rb)).max(rb / (d - ra));
    let need = ((1e-17f64).ln() / rho.ln() / 2.0).ceil() as usize + ell_max;
    need.max(ORDER_FACTOR * 2 * (ell_max + 1)) * refine
}

fn offdiag_block(config: &Configuration, i: usize, j: usize, ell_max: usize, refine: usize) -> Result<DMatrix<f64>> {
    let (a, b) = (&config.spheres[i], &config.spheres[j]);
    let nt = pair_order(ell_max, a.radius, b.radius, distance(&a.center, &b.center), refine);
    let grid = SphereQuadrature::new(nt, 2 * nt)?;
    let legendre = Legendre::new(ell_max);
    let (units, ba) = weighted_basis(&grid, &legendre, a.radius);
    let (_, bb) = weighted_basis(&grid, &legendre, b.radius);
    let xs: Vec<[f64; 3]> = units
        .iter()
        .map(|u| [a.center[0] + a.radius * u[0], a.center[1] + a.radius * u[1], a.center[2] + a.radius * u[2]])
        .collect();
    let ys: Vec<[f64; 3]> = units
        .iter()
        .map(|u| [b.center[0] + b.radius * u[0], b.center[1] + b.radius * u[1], b.center[2] + b.radius * u[2]])
        .collect();
    let n = xs.len();
    let kernel = DMatrix::from_fn(n, n, |p, q| 1.0 / (4.0 * PI * distance(&xs[p], &ys[q])));
    Ok(ba.transpose() * (kernel * bb))
}

/// Dense single-layer block of the unit sphere, `∫∫ Y_a Y_b / (4π|x - y|)`.
pub fn unit_self_block(ell_max: usize, refine: usize) -> Result<DMatrix<f64>> {
    let nb = block_len(ell_max);
    let legendre = Legendre::new(ell_max);
    let outer = SphereQuadrature::new(2 * (ell_max + 1), 4 * (ell_max + 1))?;
    let n_gamma = ORDER_FACTOR * 2 * (ell_max + 1) * refine;
    let n_alpha = 2 * n_gamma;
    let (g_nodes, g_weights) = gauss_legendre(n_gamma);
    // map [-1, 1] to [0, π]
    let gammas: Vec<(f64, f64)> = g_nodes
        .iter()
        .zip(&g_weights)
        .map(|(t, w)| (0.5 * PI * (t + 1.0), 0.5 * PI * w))
        .collect();
    let d_alpha = 2.0 * PI / n_alpha as f64;

    let mut block = DMatrix::zeros(nb, nb);
    let mut y_out = vec![0.0; nb];
    let mut y_in = vec![0.0; nb];
    let mut inner = vec![0.0; nb];
    for (x, node) in outer.unit_vectors().iter().zip(&outer.nodes) {
        let (e1, e2) = orthonormal_frame(*x);
        inner.iter_mut().for_each(|v| *v = 0.0);
        for &(gamma, wg) in &gammas {
            let (sg, cg) = gamma.sin_cos();
            let w = wg * (0.5 * gamma).cos() * d_alpha;
            for k in 0..n_alpha {
                let (sa, ca) = (k as f64 * d_alpha).sin_cos();
                let y = [
                    cg * x[0] + sg * (ca * e1[0] + sa * e2[0]),
                    cg * x[1] + sg * (ca * e1[1] + sa * e2[1]),
                    cg * x[2] + sg * (ca * e1[2] + sa * e2[2]),
                ];
                legendre.harmonics(y, &mut y_in);
                for (acc, v) in inner.iter_mut().zip(&y_in) {
                    *acc += w * v;
                }
            }
        }
        legendre.harmonics(*x, &mut y_out);
        let w = node.weight / (4.0 * PI);
        for a in 0..nb {
            for b in 0..nb {
                block[(a, b)] += w * y_out[a] * inner[b];
            }
        }
    }
    Ok(block)
}

fn orthonormal_frame(x: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let t = if x[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = t[0] * x[0] + t[1] * x[1] + t[2] * x[2];
    let mut e1 = [t[0] - dot * x[0], t[1] - dot * x[1], t[2] - dot * x[2]];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        x[1] * e1[2] - x[2] * e1[1],
        x[2] * e1[0] - x[0] * e1[2],
        x[0] * e1[1] - x[1] * e1[0],
    ];
    (e1, e2)
}

/// Dense `L²` Galerkin matrix of the single-layer operator in the coefficient layout.
pub fn assemble_v_dense(config: &Configuration, ell_max: usize) -> Result<DMatrix<f64>> {
    assemble_v_dense_refined(config, ell_max, 1)
}

/// As [`assemble_v_dense`] with every quadrature order multiplied by `refine`.
pub fn assemble_v_dense_refined(config: &Configuration, ell_max: usize, refine: usize) -> Result<DMatrix<f64>> {
    validate(config)?;
    let dim = check_guard(config, ell_max)?;
    if refine == 0 {
        return Err(Error::InvalidParameter("refine must be at least 1".into()));
    }
    let nb = block_len(ell_max);
    let unit = unit_self_block(ell_max, refine)?;
    let mut g = DMatrix::zeros(dim, dim);
    for (i, s) in config.spheres.iter().enumerate() {
        g.view_mut((i * nb, i * nb), (nb, nb)).copy_from(&(&unit * s.radius.powi(3)));
        for j in i + 1..config.len() {
            let block = offdiag_block(config, i, j, ell_max, refine)?;
            g.view_mut((i * nb, j * nb), (nb, nb)).copy_from(&block);
            g.view_mut((j * nb, i * nb), (nb, nb)).copy_from(&block.transpose());
        }
    }
    Ok(g)
}

/// Dense `I - M_c DtN V` with right-hand side `(4π/κ0) σ_f`.
pub fn assemble_dense_system(config: &Configuration, ell_max: usize, sigma_f: &GlobalCoefficients) -> Result<DenseSystem> {
    sigma_f.expect_role(Role::Density)?;
    if sigma_f.n_spheres() != config.len() || sigma_f.ell_max() > ell_max {
        return Err(Error::ShapeMismatch("free charge does not fit the dense system".into()));
    }
    let g = assemble_v_dense(config, ell_max)?;
    let nb = block_len(ell_max);
    let dim = g.nrows();
    let k0 = config.kappa0;
    let mut matrix = DMatrix::identity(dim, dim);
    for (i, s) in config.spheres.iter().enumerate() {
        let c = (k0 - s.kappa) / k0;
        for (a, l) in degrees(ell_max).enumerate() {
            // coefficient of V from its L² pairing, then DtN and contrast
            let f = c * (l as f64 / s.radius) / (s.radius * s.radius);
            let row = i * nb + a;
            for col in 0..dim {
                matrix[(row, col)] -= f * g[(row, col)];
            }
        }
    }
    let sigma = sigma_f.resized(ell_max);
    let rhs = DVector::from_iterator(dim, sigma.as_slice().iter().map(|v| 4.0 * PI / k0 * v));
    Ok(DenseSystem {
        matrix,
        rhs,
        ell_max,
        n_spheres: config.len(),
    })
}

/// Induced charge from a dense LU solve.
pub fn solve_dense(config: &Configuration, ell_max: usize, sigma_f: &GlobalCoefficients) -> Result<GlobalCoefficients> {
    let system = assemble_dense_system(config, ell_max, sigma_f)?;
    let x = system.matrix.lu().solve(&system.rhs).ok_or(Error::SingularMatrix)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    GlobalCoefficients::from_vec(config.radii().into(), ell_max, Role::Density, x.as_slice().to_vec())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// `[ν]_ℓm = (4π/κ0) [σ]_ℓm / (1 - ((κ0 - κ)/κ0) ℓ/(2ℓ + 1))` on one sphere.
pub fn single_sphere_solution(radius: f64, kappa: f64, kappa0: f64, sigma_block: &[f64]) -> Result<Vec<f64>> {
    if !(radius > 0.0 && kappa > 0.0 && kappa0 > 0.0) {
        return Err(Error::InvalidParameter("radius and permittivities must be positive".into()));
    }
    let nb = sigma_block.len();
    let ell_max = (nb as f64).sqrt() as usize - 1;
    if block_len(ell_max) != nb {
        return Err(Error::ShapeMismatch(format!("{nb} is not a harmonic block length")));
    }
    let c = (kappa0 - kappa) / kappa0;
    Ok(sigma_block
        .iter()
        .zip(degrees(ell_max))
        .map(|(s, l)| {
            let denom = 1.0 - c * l as f64 / (2 * l + 1) as f64;
            // c < 1 and ℓ/(2ℓ + 1) < 1/2 keep this above 1/2
            debug_assert!(denom > 0.5);
            4.0 * PI / kappa0 * s / denom
        })
        .collect())
}

/// A random well-separated configuration for cross-checks.
///
/// Radii are drawn from `[0.5, 1.5]`, dielectric constants log-uniformly from `[0.2, 20]`
/// (never equal to `κ0 = 1`), and centres are placed by rejection so that every surface gap
/// is at least `min_gap`.
pub fn random_configuration(rng: &mut impl Rng, n: usize, min_gap: f64) -> Configuration {
    let mut spheres: Vec<SphereSpec> = Vec::with_capacity(n);
    let half_box = 1.5 + (n as f64).cbrt() * (1.5 + min_gap);
    while spheres.len() < n {
        let radius = rng.gen_range(0.5..1.5);
        let kappa = loop {
            let k: f64 = (rng.gen_range((0.2f64).ln()..(20.0f64).ln())).exp();
            if (k - 1.0).abs() > 1e-3 {
                break k;
            }
        };
        let center = [
            rng.gen_range(-half_box..half_box),
            rng.gen_range(-half_box..half_box),
            rng.gen_range(-half_box..half_box),
        ];
        if spheres
            .iter()
            .all(|s| distance(&s.center, &center) - (s.radius + radius) >= min_gap)
        {
            spheres.push(SphereSpec::new(center, radius, kappa));
        }
    }
    Configuration::new(1.0, spheres)
}

/// Column-by-column matrix of a linear map on coefficient vectors of length `dim`.
pub fn operator_matrix(dim: usize, mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e[col] = 1.0;
        let y = apply(&e)?;
        e[col] = 0.0;
        if y.len() != dim {
            return Err(Error::ShapeMismatch(format!("map returned {} entries, expected {dim}", y.len())));
        }
        m.set_column(col, &DVector::from_vec(y));
    }
    Ok(m)
}
