//! Matrix-free boundary operators on a sphere configuration.
//!
//! On a single sphere of radius `r` every operator is diagonal in the real harmonics:
//!
//! ```text
//! V Y_l^m   = r / (2ℓ + 1) · Y_l^m        single layer
//! DtN Y_l^m = ℓ / r · Y_l^m               interior Dirichlet-to-Neumann map
//! ```
//!
//! The single-layer eigenvalue follows from the interior/exterior expansions of `S Y_l^m`,
//! `(ρ/r)^ℓ` inside and `(r/ρ)^{ℓ+1}` outside, scaled so that the jump of the normal
//! derivative, `ℓ/r + (ℓ+1)/r`, reproduces the density.
//!
//! Interactions between distinct spheres use the exterior expansion of the source
//! potential, evaluated exactly at the quadrature nodes of the target sphere and projected
//! with a forward transform. The target grid is fine enough that the projection agrees with
//! the exact `L²` projection to near machine precision (see [`ContextOptions`]).

use std::borrow::Cow;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{distance, validate, Configuration};
use crate::harmonics::{block_len, degrees, Legendre, SphTransform, SphereQuadrature, MAX_DEGREE};
use crate::parallel::{map_indexed, ExecMode};
use crate::trace_space::{free_charge_density, l2_inner, GlobalCoefficients, Role};

/// `r / (2ℓ + 1)`.
#[inline]
pub fn single_layer_eigenvalue(ell: usize, radius: f64) -> f64 {
    radius / (2 * ell + 1) as f64
}

/// `ℓ / r`.
#[inline]
pub fn dtn_eigenvalue(ell: usize, radius: f64) -> f64 {
    ell as f64 / radius
}

/// Grid sizing for cross-sphere projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextOptions {
    /// Polar nodes per unit of `ell_max + 1`.
    pub oversample: usize,
    /// When set, the polar node count is raised until the aliasing bound
    /// `ρ^(2 n_theta - ell_max)` drops below this value, where `ρ` is the
    /// [`proximity_ratio`] of the configuration.
    pub alias_tol: Option<f64>,
    pub exec: ExecMode,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            oversample: 2,
            alias_tol: Some(1e-15),
            exec: ExecMode::default(),
        }
    }
}

impl ContextOptions {
    pub fn fixed(oversample: usize) -> Self {
        Self {
            oversample,
            alias_tol: None,
            ..Self::default()
        }
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }
}

/// Largest `r_i / (|x_i - x_j| - r_j)` over ordered pairs; zero for one sphere.
///
/// The potential of sphere `j` is harmonic outside a ball of radius `r_j` about its centre,
/// so its harmonic coefficients on sphere `i` decay at least like this ratio to the degree.
pub fn proximity_ratio(config: &Configuration) -> f64 {
    let mut rho: f64 = 0.0;
    for (i, a) in config.spheres.iter().enumerate() {
        for (j, b) in config.spheres.iter().enumerate() {
            if i != j {
                rho = rho.max(a.radius / (distance(&a.center, &b.center) - b.radius));
            }
        }
    }
    rho
}

fn polar_nodes(config: &Configuration, ell_max: usize, opts: &ContextOptions) -> usize {
    let base = opts.oversample * (ell_max + 1);
    let Some(tol) = opts.alias_tol else {
        return base;
    };
    let rho = proximity_ratio(config);
    if config.len() < 2 || rho <= 0.0 {
        return base;
    }
    let decay = tol.ln() / rho.ln();
    let need = ((ell_max as f64 + decay) / 2.0).ceil() as usize;
    base.max(need).min(4 * (MAX_DEGREE + 1))
}

/// Precomputed geometry and spectral tables for applying the boundary operators.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    config: Configuration,
    ell_max: usize,
    options: ContextOptions,
    radii: Arc<[f64]>,
    grid: SphereQuadrature,
    transform: SphTransform,
    legendre: Legendre,
    nodes: Vec<Vec<[f64; 3]>>,
    v_eig: Vec<Vec<f64>>,
    dtn_eig: Vec<Vec<f64>>,
    contrast: Vec<f64>,
}

impl OperatorContext {
    pub fn new(config: &Configuration, ell_max: usize) -> Result<Self> {
        Self::with_options(config, ell_max, ContextOptions::default())
    }

    pub fn with_options(config: &Configuration, ell_max: usize, options: ContextOptions) -> Result<Self> {
        if options.oversample == 0 {
            return Err(Error::InvalidParameter("oversample must be at least 1".into()));
        }
        let n_theta = polar_nodes(config, ell_max, &options);
        Self::with_grid(config, ell_max, options, n_theta)
    }

    /// Like [`with_options`](Self::with_options) but with an explicit polar node count.
    pub fn with_grid(config: &Configuration, ell_max: usize, options: ContextOptions, n_theta: usize) -> Result<Self> {
        validate(config)?;
        if ell_max > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "ell_max {ell_max} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let grid = SphereQuadrature::new(n_theta, 2 * n_theta)?;
        let transform = SphTransform::new(&grid, ell_max)?;
        let units = grid.unit_vectors();
        let nodes = config
            .spheres
            .iter()
            .map(|s| {
                units
                    .iter()
                    .map(|u| {
                        [
                            s.center[0] + s.radius * u[0],
                            s.center[1] + s.radius * u[1],
                            s.center[2] + s.radius * u[2],
                        ]
                    })
                    .collect()
            })
            .collect();
        let table_degree = ell_max * options.oversample;
        let v_eig = config
            .spheres
            .iter()
            .map(|s| (0..=table_degree).map(|l| single_layer_eigenvalue(l, s.radius)).collect())
            .collect();
        let dtn_eig = config
            .spheres
            .iter()
            .map(|s| (0..=table_degree).map(|l| dtn_eigenvalue(l, s.radius)).collect())
            .collect();
        let contrast = config
            .spheres
            .iter()
            .map(|s| (config.kappa0 - s.kappa) / config.kappa0)
            .collect();
        Ok(Self {
            config: config.clone(),
            ell_max,
            options,
            radii: config.radii().into(),
            grid,
            transform,
            legendre: Legendre::new(ell_max),
            nodes,
            v_eig,
            dtn_eig,
            contrast,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn ell_max(&self) -> usize {
        self.ell_max
    }

    pub fn options(&self) -> &ContextOptions {
        &self.options
    }

    pub fn n_spheres(&self) -> usize {
        self.config.len()
    }

    pub fn kappa0(&self) -> f64 {
        self.config.kappa0
    }

    pub fn radii(&self) -> &Arc<[f64]> {
        &self.radii
    }

    pub fn grid(&self) -> &SphereQuadrature {
        &self.grid
    }

    /// Quadrature nodes of sphere `i` in global coordinates.
    pub fn nodes(&self, i: usize) -> &[[f64; 3]] {
        &self.nodes[i]
    }

    pub fn single_layer_eigenvalues(&self, i: usize) -> &[f64] {
        &self.v_eig[i]
    }

    pub fn dtn_eigenvalues(&self, i: usize) -> &[f64] {
        &self.dtn_eig[i]
    }

    /// `(κ0 - κ_i) / κ0` per sphere.
    pub fn contrast(&self) -> &[f64] {
        &self.contrast
    }

    /// `(κ0 - κ_i) / (κ0 + κ_i)` per sphere.
    pub fn second_kind_contrast(&self) -> Vec<f64> {
        let k0 = self.config.kappa0;
        self.config.spheres.iter().map(|s| (k0 - s.kappa) / (k0 + s.kappa)).collect()
    }

    /// `κ0 / (κ0 + κ_i)` per sphere, the row scaling between the two charge formulations.
    pub fn second_kind_scaling(&self) -> Vec<f64> {
        let k0 = self.config.kappa0;
        self.config.spheres.iter().map(|s| k0 / (k0 + s.kappa)).collect()
    }

    pub fn zeros(&self, role: Role) -> GlobalCoefficients {
        GlobalCoefficients::zeros(self.radii.clone(), self.ell_max, role)
    }

    pub fn from_vec(&self, role: Role, data: Vec<f64>) -> Result<GlobalCoefficients> {
        GlobalCoefficients::from_vec(self.radii.clone(), self.ell_max, role, data)
    }

    /// The configured free charges at this context's degree.
    pub fn free_charge(&self) -> GlobalCoefficients {
        let mut sigma = free_charge_density(&self.config, self.ell_max);
        // share the radii allocation so shape checks hit the pointer fast path
        sigma = GlobalCoefficients::from_vec(self.radii.clone(), self.ell_max, Role::Density, sigma.into_vec())
            .expect("free charge has context shape");
        sigma
    }

    fn check_input(&self, u: &GlobalCoefficients, role: Role) -> Result<()> {
        u.expect_role(role)?;
        if u.n_spheres() != self.n_spheres() || u.radii()[..] != self.radii[..] {
            return Err(Error::ShapeMismatch(
                "coefficients belong to a different configuration".into(),
            ));
        }
        if u.ell_max() > self.ell_max {
            return Err(Error::ShapeMismatch(format!(
                "degree {} exceeds the context degree {}",
                u.ell_max(),
                self.ell_max
            )));
        }
        Ok(())
    }

    fn lift<'a>(&self, u: &'a GlobalCoefficients) -> Cow<'a, GlobalCoefficients> {
        if u.ell_max() == self.ell_max {
            Cow::Borrowed(u)
        } else {
            Cow::Owned(u.resized(self.ell_max))
        }
    }

    /// Adds the exterior potential of one source sphere at `targets` into `samples`.
    ///
    /// `weighted` holds the source density already multiplied by `r_j / (2ℓ + 1)`.
    fn add_exterior(
        &self,
        source: usize,
        weighted: &[f64],
        targets: &[[f64; 3]],
        samples: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        let s = &self.config.spheres[source];
        let r = s.radius;
        let l_max = self.ell_max;
        for (x, out) in targets.iter().zip(samples.iter_mut()) {
            let rel = [x[0] - s.center[0], x[1] - s.center[1], x[2] - s.center[2]];
            let rho = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
            if rho <= r {
                return Err(Error::DivergenceGuard { sphere: source });
            }
            let inv = 1.0 / rho;
            self.legendre
                .harmonics([rel[0] * inv, rel[1] * inv, rel[2] * inv], scratch);
            let t = r * inv;
            let mut tp = t;
            let mut acc = 0.0;
            for l in 0..=l_max {
                let lo = l * l;
                let hi = lo + 2 * l + 1;
                let mut partial = 0.0;
                for k in lo..hi {
                    partial += weighted[k] * scratch[k];
                }
                acc += tp * partial;
                tp *= t;
            }
            *out += acc;
        }
        Ok(())
    }

    fn weighted_sources(&self, nu: &GlobalCoefficients) -> Vec<Vec<f64>> {
        nu.blocks()
            .enumerate()
            .map(|(j, b)| {
                b.iter()
                    .zip(degrees(self.ell_max))
                    .map(|(v, l)| v * self.v_eig[j][l])
                    .collect()
            })
            .collect()
    }

    fn v_block(&self, target: usize, weighted: &[Vec<f64>]) -> Result<Vec<f64>> {
        let nb = block_len(self.ell_max);
        let mut out = vec![0.0; nb];
        if self.n_spheres() > 1 {
            let nodes = &self.nodes[target];
            let mut samples = vec![0.0; nodes.len()];
            let mut scratch = vec![0.0; nb];
            for (j, w) in weighted.iter().enumerate() {
                if j != target {
                    self.add_exterior(j, w, nodes, &mut samples, &mut scratch)?;
                }
            }
            self.transform.forward(&samples, &mut out);
        }
        for (o, w) in out.iter_mut().zip(&weighted[target]) {
            *o += w;
        }
        Ok(out)
    }

    /// Single-layer boundary operator: density → projected trace of its potential.
    pub fn apply_v(&self, nu: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        self.check_input(nu, Role::Density)?;
        let full = self.lift(nu);
        let weighted = self.weighted_sources(&full);
        let blocks = map_indexed(self.n_spheres(), self.options.exec, |i| self.v_block(i, &weighted));
        let mut data = Vec::with_capacity(full.as_slice().len());
        for b in blocks {
            data.extend_from_slice(&b?);
        }
        let out = self.from_vec(Role::Trace, data)?;
        Ok(if nu.ell_max() == self.ell_max {
            out
        } else {
            out.resized(nu.ell_max())
        })
    }

    /// Interior Dirichlet-to-Neumann map: trace → density, `ℓ/r` per coefficient.
    pub fn apply_dtn(&self, lam: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        self.check_input(lam, Role::Trace)?;
        let mut out = lam.clone().with_role(Role::Density);
        out.scale_degrees(|i, l| self.dtn_eig[i][l]);
        Ok(out)
    }

    /// `DtN ∘ V`, which equals `½ I + K*`.
    pub fn apply_dtn_v(&self, nu: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        self.apply_dtn(&self.apply_v(nu)?)
    }

    /// Induced-charge operator `A* ν = ν - ((κ0 - κ)/κ0) DtN V ν`.
    pub fn apply_a_star(&self, nu: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        let mut t = self.apply_dtn_v(nu)?;
        t.scale_spheres(&self.contrast);
        Ok(nu - &t)
    }

    /// Potential operator `A λ = λ - V DtN(((κ0 - κ)/κ0) λ)`.
    pub fn apply_a(&self, lam: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        let mut scaled = lam.clone();
        scaled.scale_spheres(&self.contrast);
        let t = self.apply_v(&self.apply_dtn(&scaled)?)?;
        Ok(lam - &t)
    }

    /// Second-kind form `½ ν - ((κ0 - κ)/(κ0 + κ)) K* ν` with `K* = DtN V - ½ I`.
    pub fn apply_second_kind(&self, nu: &GlobalCoefficients) -> Result<GlobalCoefficients> {
        let mut k_star = self.apply_dtn_v(nu)?;
        k_star.axpy(-0.5, nu)?;
        k_star.scale_spheres(&self.second_kind_contrast());
        Ok(&(0.5 * nu) - &k_star)
    }

    /// Electrostatic energy `½ ⟨σ_f, V ν⟩`.
    pub fn energy(&self, sigma_f: &GlobalCoefficients, nu: &GlobalCoefficients) -> Result<f64> {
        self.check_input(sigma_f, Role::Density)?;
        let v_nu = self.apply_v(&self.lift(nu))?;
        let sigma = self.lift(sigma_f);
        Ok(0.5 * l2_inner(&v_nu, &sigma)?)
    }

    /// Single-layer potential `Φ(x) = ∫ ν(y) / (4π |x - y|) dy` off the sphere surfaces.
    pub fn eval_potential(&self, nu: &GlobalCoefficients, points: &[[f64; 3]]) -> Result<Vec<f64>> {
        self.check_input(nu, Role::Density)?;
        let l_max = nu.ell_max();
        let weighted: Vec<Vec<f64>> = nu
            .blocks()
            .enumerate()
            .map(|(j, b)| {
                b.iter()
                    .zip(degrees(l_max))
                    .map(|(v, l)| v * single_layer_eigenvalue(l, self.radii[j]))
                    .collect()
            })
            .collect();
        let legendre = Legendre::new(l_max);
        let mut scratch = vec![0.0; block_len(l_max)];
        let mut values = Vec::with_capacity(points.len());
        for x in points {
            let mut phi = 0.0;
            for (j, s) in self.config.spheres.iter().enumerate() {
                let rel = [x[0] - s.center[0], x[1] - s.center[1], x[2] - s.center[2]];
                let rho = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
                let r = s.radius;
                if (rho - r).abs() < 1e-10 * r {
                    return Err(Error::PointOnBoundary { sphere: j, point: *x });
                }
                let dir = if rho > 0.0 {
                    [rel[0] / rho, rel[1] / rho, rel[2] / rho]
                } else {
                    [0.0, 0.0, 1.0]
                };
                legendre.harmonics(dir, &mut scratch);
                let (mut f, step) = if rho < r { (1.0, rho / r) } else { (r / rho, r / rho) };
                let w = &weighted[j];
                for l in 0..=l_max {
                    let lo = l * l;
                    let partial: f64 = (lo..lo + 2 * l + 1).map(|k| w[k] * scratch[k]).sum();
                    phi += f * partial;
                    f *= step;
                }
            }
            values.push(phi);
        }
        Ok(values)
    }
}

/// Inf-sup lower bound `β` of the potential formulation in the spectral norms.
///
/// With `N±` the spheres where `κ_j - κ0` is positive or negative,
/// `β = min{min_{N+} (κ_j - κ0)/κ0, min_{N-} (κ_j/κ0)(κ0 - κ_j)/κ0} / max_j |κ_j - κ0|/κ0`.
pub fn inf_sup_bound(config: &Configuration) -> Result<f64> {
    validate(config)?;
    let k0 = config.kappa0;
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for (i, s) in config.spheres.iter().enumerate() {
        let k = s.kappa;
        if k == k0 {
            return Err(Error::DegenerateKappa { sphere: i });
        }
        let c = (k - k0) / k0;
        let term = if k > k0 { c } else { (k / k0) * (k0 - k) / k0 };
        lower = lower.min(term);
        upper = upper.max(c.abs());
    }
    Ok(lower / upper)
}

/// Potential of a uniformly charged spherical shell with total charge `q`.
pub fn shell_potential(q: f64, radius: f64, distance_from_center: f64) -> f64 {
    q / (4.0 * PI * distance_from_center.max(radius))
}
