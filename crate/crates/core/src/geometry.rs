//! Sphere configurations, their validation, and the cubic test lattices.
//!
//! A [`Configuration`] is the union of `N` open balls with radii `r_i`, centres `x_i` and
//! dielectric constants `kappa_i`, embedded in a homogeneous medium with constant `kappa0`.
//! Balls must be pairwise strictly separated; touching spheres are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Prescribed free charge on one sphere surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeCharge {
    /// Uniform surface density carrying `total` units of charge.
    Monopole { total: f64 },
    /// Uniform charge plus a `cos`-type density with the given dipole moment.
    MonopoleDipole { total: f64, dipole: [f64; 3] },
    /// Explicit real spherical harmonic coefficients of the density, (ℓ, m) row-major.
    Coefficients { ell_max: usize, values: Vec<f64> },
}

impl Default for FreeCharge {
    fn default() -> Self {
        FreeCharge::Monopole { total: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub kappa: f64,
    #[serde(default)]
    pub free_charge: FreeCharge,
}

impl SphereSpec {
    pub fn new(center: [f64; 3], radius: f64, kappa: f64) -> Self {
        Self {
            center,
            radius,
            kappa,
            free_charge: FreeCharge::default(),
        }
    }

    pub fn with_charge(mut self, free_charge: FreeCharge) -> Self {
        self.free_charge = free_charge;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub kappa0: f64,
    pub spheres: Vec<SphereSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryStats {
    pub n_spheres: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Smallest `|x_i - x_j| - r_i - r_j`; `+inf` for a single sphere.
    pub min_separation: f64,
    pub min_kappa: f64,
    pub max_kappa: f64,
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn check_positive(what: &str, index: usize, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} of sphere {index} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

/// Checks every invariant of `config` and summarises its geometry.
pub fn validate(config: &Configuration) -> Result<GeometryStats> {
    if config.spheres.is_empty() {
        return Err(Error::InvalidParameter(
            "a configuration needs at least one sphere".into(),
        ));
    }
    if !(config.kappa0.is_finite() && config.kappa0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa0 must be positive and finite, got {}",
            config.kappa0
        )));
    }
    for (i, s) in config.spheres.iter().enumerate() {
        check_positive("radius", i, s.radius)?;
        check_positive("kappa", i, s.kappa)?;
        if s.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "centre of sphere {i} is not finite"
            )));
        }
    }

    let mut min_separation = f64::INFINITY;
    for (i, a) in config.spheres.iter().enumerate() {
        for (j, b) in config.spheres.iter().enumerate().skip(i + 1) {
            let gap = distance(&a.center, &b.center) - (a.radius + b.radius);
            if gap <= 0.0 {
                return Err(Error::Overlap { i, j, gap });
            }
            min_separation = min_separation.min(gap);
        }
    }

    let fold = |f: fn(&SphereSpec) -> f64| {
        config
            .spheres
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (min_radius, max_radius) = fold(|s| s.radius);
    let (min_kappa, max_kappa) = fold(|s| s.kappa);

    Ok(GeometryStats {
        n_spheres: config.spheres.len(),
        min_radius,
        max_radius,
        min_separation,
        min_kappa,
        max_kappa,
    })
}

impl Configuration {
    pub fn new(kappa0: f64, spheres: Vec<SphereSpec>) -> Self {
        Self { kappa0, spheres }
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.spheres.iter().map(|s| s.radius).collect()
    }

    pub fn validate(&self) -> Result<GeometryStats> {
        validate(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Short stable digest of the serialized configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration is always serializable");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Radius, dielectric constant and free charge shared by all lattice sites of one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereTemplate {
    pub radius: f64,
    pub kappa: f64,
    pub free_charge: FreeCharge,
}

impl SphereTemplate {
    /// Radius 1, dielectric constant 10, net charge -1.
    pub fn type_a() -> Self {
        Self {
            radius: 1.0,
            kappa: 10.0,
            free_charge: FreeCharge::Monopole { total: -1.0 },
        }
    }

    /// Radius 2, dielectric constant 5, net charge +1.
    pub fn type_b() -> Self {
        Self {
            radius: 2.0,
            kappa: 5.0,
            free_charge: FreeCharge::Monopole { total: 1.0 },
        }
    }

    fn place(&self, center: [f64; 3]) -> SphereSpec {
        SphereSpec {
            center,
            radius: self.radius,
            kappa: self.kappa,
            free_charge: self.free_charge.clone(),
        }
    }
}

/// Rule deciding which template occupies lattice site `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternation {
    /// Type A where `i + j + k` is even.
    #[default]
    Checkerboard,
    /// Type A where `k` is even.
    Layers,
    /// Type A everywhere.
    Uniform,
}

impl Alternation {
    fn is_type_a(self, i: usize, j: usize, k: usize) -> bool {
        match self {
            Alternation::Checkerboard => (i + j + k) % 2 == 0,
            Alternation::Layers => k % 2 == 0,
            Alternation::Uniform => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub edge_length: f64,
    pub type_a: SphereTemplate,
    pub type_b: SphereTemplate,
    #[serde(default)]
    pub pattern: Alternation,
    pub kappa0: f64,
}

impl LatticeSpec {
    /// The two-species lattice in vacuum with the given edge length.
    pub fn standard(edge_length: f64) -> Self {
        Self {
            edge_length,
            type_a: SphereTemplate::type_a(),
            type_b: SphereTemplate::type_b(),
            pattern: Alternation::Checkerboard,
            kappa0: 1.0,
        }
    }

    fn site(&self, i: usize, j: usize, k: usize) -> SphereSpec {
        let center = [
            i as f64 * self.edge_length,
            j as f64 * self.edge_length,
            k as f64 * self.edge_length,
        ];
        if self.pattern.is_type_a(i, j, k) {
            self.type_a.place(center)
        } else {
            self.type_b.place(center)
        }
    }

    /// Full `side_count³` cube with sites at `(i, j, k) * edge_length`.
    pub fn cube(&self, side_count: usize) -> Result<Configuration> {
        if side_count == 0 {
            return Err(Error::InvalidParameter("side_count must be at least 1".into()));
        }
        self.first_sites(side_count.pow(3))
    }

    /// The first `n` sites, in lexicographic `(i, j, k)` order, of the smallest cube holding
    /// at least `n` sites.
    pub fn first_sites(&self, n: usize) -> Result<Configuration> {
        if n == 0 {
            return Err(Error::InvalidParameter("a lattice needs at least one site".into()));
        }
        if !(self.edge_length.is_finite() && self.edge_length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "edge length must be positive, got {}",
                self.edge_length
            )));
        }
        let mut side = 1;
        while side * side * side < n {
            side += 1;
        }
        let mut spheres = Vec::with_capacity(n);
        'outer: for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    if spheres.len() == n {
                        break 'outer;
                    }
                    spheres.push(self.site(i, j, k));
                }
            }
        }
        let config = Configuration::new(self.kappa0, spheres);
        validate(&config)?;
        Ok(config)
    }
}

/// Cube of `side_count³` spheres alternating between two templates.
pub fn make_cubic_lattice(
    side_count: usize,
    edge_length: f64,
    type_a: SphereTemplate,
    type_b: SphereTemplate,
    pattern: Alternation,
    kappa0: f64,
) -> Result<Configuration> {
    LatticeSpec {
        edge_length,
        type_a,
        type_b,
        pattern,
        kappa0,
    }
    .cube(side_count)
}
