//! Piecewise spherical-harmonic functions on the union of sphere surfaces.
//!
//! A [`GlobalCoefficients`] holds one coefficient block per sphere. The same storage represents
//! both boundary densities (charges, `H^{-1/2}`) and traces (potentials, `H^{1/2}`); the
//! [`Role`] tag only guards against mixing them up in the norms below.
//!
//! With `u = Σ u_{ℓm} Y_l^m((x - x_i)/r_i)` on sphere `i`, the norms are diagonal in the
//! coefficients:
//!
//! ```text
//! (u, v)_{L²}  = Σ_i r_i² Σ_{ℓm} u v
//! |||u|||²     = Σ_i r_i² u_00² + Σ_i r_i² Σ_{ℓ≥1} (ℓ/r_i) u²
//! |||s|||*²    = Σ_i r_i² s_00² + Σ_i Σ_{ℓ≥1} (r_i³/ℓ) s²
//! ```
//!
//! The dual weights follow from maximising `Σ r² s u` subject to `|||u||| = 1`: with diagonal
//! weights `w` the maximiser is `u ∝ r² s / w`, giving `|||s|||*² = Σ (r² s)² / w`.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, FreeCharge};
use crate::harmonics::{block_len, degrees, flat_index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Surface charge density.
    Density,
    /// Surface potential.
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCoefficients {
    role: Role,
    ell_max: usize,
    radii: Arc<[f64]>,
    data: Vec<f64>,
}

impl GlobalCoefficients {
    pub fn zeros(radii: Arc<[f64]>, ell_max: usize, role: Role) -> Self {
        let data = vec![0.0; radii.len() * block_len(ell_max)];
        Self {
            role,
            ell_max,
            radii,
            data,
        }
    }

    pub fn from_vec(radii: Arc<[f64]>, ell_max: usize, role: Role, data: Vec<f64>) -> Result<Self> {
        let expect = radii.len() * block_len(ell_max);
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients given, {} spheres at degree {} need {}",
                data.len(),
                radii.len(),
                ell_max,
                expect
            )));
        }
        Ok(Self {
            role,
            ell_max,
            radii,
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.radii.clone(), self.ell_max, self.role)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ell_max(&self) -> usize {
        self.ell_max
    }

    pub fn n_spheres(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &Arc<[f64]> {
        &self.radii
    }

    pub fn block_len(&self) -> usize {
        block_len(self.ell_max)
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let n = self.block_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.block_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn blocks(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.block_len())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, sphere: usize, ell: usize, m: i64) -> f64 {
        self.block(sphere)[flat_index(ell, m)]
    }

    pub fn set(&mut self, sphere: usize, ell: usize, m: i64, value: f64) {
        self.block_mut(sphere)[flat_index(ell, m)] = value;
    }

    /// The same coefficients viewed in the other role.
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn expect_role(&self, expected: Role) -> Result<()> {
        if self.role != expected {
            return Err(Error::RoleMismatch {
                expected,
                found: self.role,
            });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.ell_max != other.ell_max || self.radii.len() != other.radii.len() {
            return Err(Error::ShapeMismatch(format!(
                "({} spheres, degree {}) vs ({} spheres, degree {})",
                self.radii.len(),
                self.ell_max,
                other.radii.len(),
                other.ell_max
            )));
        }
        if !Arc::ptr_eq(&self.radii, &other.radii) && self.radii[..] != other.radii[..] {
            return Err(Error::ShapeMismatch("radii differ".into()));
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Multiplies block `i` by `factors[i]`.
    pub fn scale_spheres(&mut self, factors: &[f64]) {
        let n = self.block_len();
        for (block, f) in self.data.chunks_mut(n).zip(factors) {
            block.iter_mut().for_each(|v| *v *= f);
        }
    }

    /// Multiplies every `ℓ`-coefficient of sphere `i` by `weight(i, ℓ)`.
    pub fn scale_degrees(&mut self, weight: impl Fn(usize, usize) -> f64) {
        let n = self.block_len();
        let l_max = self.ell_max;
        for (i, block) in self.data.chunks_mut(n).enumerate() {
            for (v, l) in block.iter_mut().zip(degrees(l_max)) {
                *v *= weight(i, l);
            }
        }
    }

    /// Zero-pads (or truncates) every block to degree `new_ell_max`.
    pub fn resized(&self, new_ell_max: usize) -> Self {
        let mut out = Self::zeros(self.radii.clone(), new_ell_max, self.role);
        let keep = block_len(self.ell_max.min(new_ell_max));
        for i in 0..self.n_spheres() {
            out.block_mut(i)[..keep].copy_from_slice(&self.block(i)[..keep]);
        }
        out
    }

    /// Coefficient-space Euclidean norm.
    pub fn coefficient_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&GlobalCoefficients> for &GlobalCoefficients {
            type Output = GlobalCoefficients;
            fn $f(self, rhs: &GlobalCoefficients) -> GlobalCoefficients {
                self.check_same_shape(rhs).expect("operands must share shape");
                let mut out = self.clone();
                for (a, b) in out.data.iter_mut().zip(&rhs.data) {
                    *a = *a $op *b;
                }
                out
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);

impl Mul<&GlobalCoefficients> for f64 {
    type Output = GlobalCoefficients;
    fn mul(self, rhs: &GlobalCoefficients) -> GlobalCoefficients {
        let mut out = rhs.clone();
        out.data.iter_mut().for_each(|v| *v *= self);
        out
    }
}

impl Neg for &GlobalCoefficients {
    type Output = GlobalCoefficients;
    fn neg(self) -> GlobalCoefficients {
        -1.0 * self
    }
}

// Pairwise summation keeps reductions reproducible and accurate independent of block size.
fn pairwise_sum(terms: &[f64]) -> f64 {
    if terms.len() <= 8 {
        return terms.iter().sum();
    }
    let (a, b) = terms.split_at(terms.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `Σ_i Σ_{ℓm} weight(r_i, ℓ) u v`, summed pairwise within a sphere and then in sphere order.
fn weighted_pairing(
    u: &GlobalCoefficients,
    v: &GlobalCoefficients,
    weight: impl Fn(f64, usize) -> f64,
) -> Result<f64> {
    u.check_same_shape(v)?;
    let mut terms = Vec::with_capacity(u.block_len());
    let mut total = 0.0;
    for (i, (a, b)) in u.blocks().zip(v.blocks()).enumerate() {
        let r = u.radii[i];
        terms.clear();
        terms.extend(
            a.iter()
                .zip(b)
                .zip(degrees(u.ell_max))
                .map(|((x, y), l)| weight(r, l) * x * y),
        );
        total += pairwise_sum(&terms);
    }
    Ok(total)
}

/// `L²(∂Ω)` inner product; also the duality pairing between a density and a trace.
pub fn l2_inner(u: &GlobalCoefficients, v: &GlobalCoefficients) -> Result<f64> {
    weighted_pairing(u, v, |r, _| r * r)
}

/// Inner product of the spectral trace space, `r² u_00 v_00 + r² Σ_{ℓ≥1} (ℓ/r) u v`.
pub fn w_inner(u: &GlobalCoefficients, v: &GlobalCoefficients) -> Result<f64> {
    u.expect_role(Role::Trace)?;
    v.expect_role(Role::Trace)?;
    weighted_pairing(u, v, w_weight)
}

fn w_weight(r: f64, l: usize) -> f64 {
    if l == 0 {
        r * r
    } else {
        r * l as f64
    }
}

fn dual_weight(r: f64, l: usize) -> f64 {
    if l == 0 {
        r * r
    } else {
        r * r * r / l as f64
    }
}

fn hs_weight(r: f64, l: usize, s: f64) -> f64 {
    if l == 0 {
        r * r
    } else {
        r * r * (l as f64 / r).powf(2.0 * s)
    }
}

/// `|||u|||`, the mean-value-plus-DtN-energy norm on traces.
pub fn triple_norm(u: &GlobalCoefficients) -> Result<f64> {
    u.expect_role(Role::Trace)?;
    Ok(weighted_pairing(u, u, w_weight)?.sqrt())
}

/// `|||s|||*`, the dual of [`triple_norm`] with respect to the `L²` pairing.
pub fn dual_norm(s: &GlobalCoefficients) -> Result<f64> {
    s.expect_role(Role::Density)?;
    Ok(weighted_pairing(s, s, dual_weight)?.sqrt())
}

/// Spectral `H^s` norm with weights `(ℓ/r)^{2s}`; `s = 1/2` reproduces [`triple_norm`].
pub fn hs_norm(u: &GlobalCoefficients, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("H^s norm needs s >= 0, got {s}")));
    }
    let value = if s == 0.5 {
        weighted_pairing(u, u, w_weight)?
    } else {
        weighted_pairing(u, u, |r, l| hs_weight(r, l, s))?
    };
    Ok(value.sqrt())
}

/// Keeps only the per-sphere constant parts.
pub fn project_piecewise_constant(u: &GlobalCoefficients) -> GlobalCoefficients {
    let mut out = u.clone();
    out.scale_degrees(|_, l| if l == 0 { 1.0 } else { 0.0 });
    out
}

/// Removes the per-sphere constant parts.
pub fn project_fluctuation(u: &GlobalCoefficients) -> GlobalCoefficients {
    let mut out = u.clone();
    out.scale_degrees(|_, l| if l == 0 { 0.0 } else { 1.0 });
    out
}

/// `L²`-orthogonal projection onto the harmonics of degree `≤ new_ell_max`.
pub fn truncate(u: &GlobalCoefficients, new_ell_max: usize) -> Result<GlobalCoefficients> {
    if new_ell_max > u.ell_max {
        return Err(Error::InvalidParameter(format!(
            "cannot truncate degree {} up to {}",
            u.ell_max, new_ell_max
        )));
    }
    Ok(u.resized(new_ell_max))
}

/// Coefficient block for one sphere's free charge, cut at degree `ell_max`.
pub fn free_charge_block(charge: &FreeCharge, radius: f64, ell_max: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut block = vec![0.0; block_len(ell_max)];
    let monopole = |total: f64| total / ((4.0 * PI).sqrt() * radius * radius);
    match charge {
        FreeCharge::Monopole { total } => block[0] = monopole(*total),
        FreeCharge::MonopoleDipole { total, dipole } => {
            block[0] = monopole(*total);
            if ell_max >= 1 {
                // σ = 3 (p·n) / (4π r³) carries dipole moment p; n_x = √(4π/3) Y_1^1 etc.
                let c = (3.0 / (4.0 * PI)).sqrt() / radius.powi(3);
                block[flat_index(1, -1)] = c * dipole[1];
                block[flat_index(1, 0)] = c * dipole[2];
                block[flat_index(1, 1)] = c * dipole[0];
            }
        }
        FreeCharge::Coefficients { ell_max: l, values } => {
            let keep = block_len((*l).min(ell_max)).min(values.len());
            block[..keep].copy_from_slice(&values[..keep]);
        }
    }
    block
}

/// Free charge density of every sphere in `config`, as a [`Role::Density`].
pub fn free_charge_density(config: &Configuration, ell_max: usize) -> GlobalCoefficients {
    let radii: Arc<[f64]> = config.radii().into();
    let mut out = GlobalCoefficients::zeros(radii, ell_max, Role::Density);
    for (i, s) in config.spheres.iter().enumerate() {
        let block = free_charge_block(&s.free_charge, s.radius, ell_max);
        out.block_mut(i).copy_from_slice(&block);
    }
    out
}
