//! Real spherical harmonics and spectral transforms on the unit sphere.
//!
//! Harmonics are the real `L²`-orthonormal family
//!
//! ```text
//! Y_l^m = √2 N_l^|m| P_l^|m|(cos θ) sin(|m| φ)   m < 0
//! Y_l^0 =    N_l^0   P_l^0(cos θ)
//! Y_l^m = √2 N_l^m   P_l^m(cos θ) cos(m φ)       m > 0
//! ```
//!
//! with the Condon–Shortley phase of `P_l^m` cancelled by the `(-1)^m` prefactor, so that
//! `Y_1^1 ∝ x`, `Y_1^{-1} ∝ y` and `Y_1^0 ∝ z`. Coefficient blocks are flat arrays of length
//! `(ell_max + 1)²` in `(ℓ, m)` row-major order with `m` running from `-ℓ` to `ℓ`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Degree cap for every table built by this crate.
pub const MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    pub ell: usize,
    pub m: i64,
}

impl HarmonicIndex {
    pub fn new(ell: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > ell {
            return Err(Error::InvalidParameter(format!(
                "order {m} exceeds degree {ell}"
            )));
        }
        Ok(Self { ell, m })
    }

    /// Position inside a coefficient block.
    #[inline]
    pub fn flat(self) -> usize {
        flat_index(self.ell, self.m)
    }

    pub fn from_flat(k: usize) -> Self {
        let ell = (k as f64).sqrt() as usize;
        // guard against rounding of the square root
        let ell = if (ell + 1) * (ell + 1) <= k { ell + 1 } else { ell };
        let m = k as i64 - (ell * ell + ell) as i64;
        Self { ell, m }
    }
}

#[inline]
pub fn flat_index(ell: usize, m: i64) -> usize {
    ((ell * ell + ell) as i64 + m) as usize
}

#[inline]
pub fn block_len(ell_max: usize) -> usize {
    (ell_max + 1) * (ell_max + 1)
}

/// Degree of every entry in a block, in storage order.
pub fn degrees(ell_max: usize) -> impl Iterator<Item = usize> {
    (0..=ell_max).flat_map(|l| std::iter::repeat(l).take(2 * l + 1))
}

#[inline]
fn tri(ell: usize, m: usize) -> usize {
    ell * (ell + 1) / 2 + m
}

/// Recurrence coefficients for normalised associated Legendre functions up to a fixed degree.
///
/// Stores the rescaled functions `Q_l^m = N_l^m P_l^m / sin^m θ` (without Condon–Shortley
/// phase), which obey the same three-term recurrence in `ℓ` as `P_l^m` but stay finite at the
/// poles. Multiplying by `sin^m θ` (or by `(x + iy)^m` in Cartesian form) recovers the harmonic.
#[derive(Debug, Clone)]
pub struct Legendre {
    ell_max: usize,
    seed: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Legendre {
    pub fn new(ell_max: usize) -> Self {
        let mut seed = Vec::with_capacity(ell_max + 1);
        let mut c = 1.0 / (4.0 * PI).sqrt();
        seed.push(c);
        for m in 1..=ell_max {
            c *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
            seed.push(c);
        }
        let n = tri(ell_max, ell_max) + 1;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for l in 1..=ell_max {
            for m in 0..l {
                let (lf, mf) = (l as f64, m as f64);
                a[tri(l, m)] = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let lm1 = lf - 1.0;
                b[tri(l, m)] = ((lm1 * lm1 - mf * mf) / (4.0 * lm1 * lm1 - 1.0)).max(0.0).sqrt();
            }
        }
        Self { ell_max, seed, a, b }
    }

    pub fn ell_max(&self) -> usize {
        self.ell_max
    }

    /// Fills `out[tri(l, m)]` with `Q_l^m(z)` for all `m ≤ l ≤ ell_max`.
    pub fn rescaled(&self, z: f64, out: &mut [f64]) {
        for m in 0..=self.ell_max {
            self.column(m, z, |l, q| out[tri(l, m)] = q);
        }
    }

    #[inline]
    fn column(&self, m: usize, z: f64, mut sink: impl FnMut(usize, f64)) {
        let mut q2 = 0.0;
        let mut q1 = self.seed[m];
        sink(m, q1);
        for l in (m + 1)..=self.ell_max {
            let k = tri(l, m);
            let q = self.a[k] * (z * q1 - self.b[k] * q2);
            sink(l, q);
            q2 = q1;
            q1 = q;
        }
    }

    /// Evaluates every real harmonic of degree `≤ ell_max` at the unit vector `(x, y, z)`.
    pub fn harmonics(&self, dir: [f64; 3], out: &mut [f64]) {
        let [x, y, z] = dir;
        let sqrt2 = std::f64::consts::SQRT_2;
        // (x + iy)^m = sin^m θ · e^{imφ}
        let (mut cr, mut ci) = (1.0, 0.0);
        for m in 0..=self.ell_max {
            if m == 0 {
                self.column(0, z, |l, q| out[l * l + l] = q);
            } else {
                let (re, im) = (sqrt2 * cr, sqrt2 * ci);
                self.column(m, z, |l, q| {
                    let c = l * l + l;
                    out[c + m] = q * re;
                    out[c - m] = q * im;
                });
            }
            let nr = cr * x - ci * y;
            ci = cr * y + ci * x;
            cr = nr;
        }
    }
}

/// Unit vector for polar angle `theta` and azimuth `phi`.
#[inline]
pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Value of a single real harmonic at `(theta, phi)`.
pub fn eval_real_sph_harm(idx: HarmonicIndex, theta: f64, phi: f64) -> f64 {
    let leg = Legendre::new(idx.ell);
    let mut out = vec![0.0; block_len(idx.ell)];
    leg.harmonics(unit_vector(theta, phi), &mut out);
    out[flat_index(idx.ell, idx.m)]
}

/// Gauss–Legendre nodes on `[-1, 1]` (ascending) and weights, by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() <= 1e-16 * t.abs().max(1.0) {
                let (_, d) = legendre_and_derivative(n, t);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

/// Tensor grid: Gauss–Legendre in `cos θ` times uniform `φ`, weights summing to `4π`.
///
/// Node `k * n_phi + j` sits at `(theta[k], phi[j])`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n_theta: usize,
    pub n_phi: usize,
    pub cos_theta: Vec<f64>,
    pub theta_weights: Vec<f64>,
    pub phi: Vec<f64>,
    pub nodes: Vec<QuadNode>,
}

impl SphereQuadrature {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one node in each direction".into(),
            ));
        }
        let (x, w) = gauss_legendre(n_theta);
        // descending cos θ, i.e. ascending θ
        let cos_theta: Vec<f64> = x.into_iter().rev().collect();
        let theta_weights: Vec<f64> = w.into_iter().rev().collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in cos_theta.iter().zip(&theta_weights) {
            let theta = ct.clamp(-1.0, 1.0).acos();
            for &p in &phi {
                nodes.push(QuadNode {
                    theta,
                    phi: p,
                    weight: wt * dphi,
                });
            }
        }
        Ok(Self {
            n_theta,
            n_phi,
            cos_theta,
            theta_weights,
            phi,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Highest degree `L` for which products of harmonics of degree `≤ L` integrate exactly.
    pub fn resolved_degree(&self) -> usize {
        (self.n_theta - 1).min(self.n_phi.saturating_sub(1) / 2)
    }

    pub fn unit_vectors(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for &ct in &self.cos_theta {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for &p in &self.phi {
                let (sp, cp) = p.sin_cos();
                out.push([st * cp, st * sp, ct]);
            }
        }
        out
    }

    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.nodes.iter().zip(samples).map(|(n, s)| n.weight * s).sum()
    }

    fn check_degree(&self, ell_max: usize) -> Result<()> {
        if self.n_theta < ell_max + 1 || self.n_phi < 2 * ell_max + 1 {
            return Err(Error::GridTooCoarse {
                n_theta: self.n_theta,
                ell_max,
            });
        }
        Ok(())
    }
}

/// Grid with `n_theta = oversample * (ell_max + 1)` and `n_phi = 2 * n_theta`.
pub fn make_quadrature(ell_max: usize, oversample: usize) -> Result<SphereQuadrature> {
    if oversample == 0 {
        return Err(Error::InvalidParameter("oversample must be at least 1".into()));
    }
    let n_theta = oversample * (ell_max + 1);
    SphereQuadrature::new(n_theta, 2 * n_theta)
}

/// Analysis/synthesis pair on a fixed grid, with its Legendre and Fourier tables cached.
#[derive(Debug, Clone)]
pub struct SphTransform {
    ell_max: usize,
    n_theta: usize,
    n_phi: usize,
    tw: Vec<f64>,
    dphi: f64,
    // P̄_l^m(cos θ_k) at [k * tri_len + tri(l, m)]
    legendre: Vec<f64>,
    tri_len: usize,
    // cos(m φ_j), sin(m φ_j) at [j * (ell_max + 1) + m]
    cos_tab: Vec<f64>,
    sin_tab: Vec<f64>,
}

impl SphTransform {
    pub fn new(grid: &SphereQuadrature, ell_max: usize) -> Result<Self> {
        grid.check_degree(ell_max)?;
        let leg = Legendre::new(ell_max);
        let tri_len = tri(ell_max, ell_max) + 1;
        let mut legendre = vec![0.0; grid.n_theta * tri_len];
        let mut row = vec![0.0; tri_len];
        for (k, &ct) in grid.cos_theta.iter().enumerate() {
            leg.rescaled(ct, &mut row);
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut sm = 1.0;
            for m in 0..=ell_max {
                for l in m..=ell_max {
                    legendre[k * tri_len + tri(l, m)] = row[tri(l, m)] * sm;
                }
                sm *= st;
            }
        }
        let stride = ell_max + 1;
        let mut cos_tab = vec![0.0; grid.n_phi * stride];
        let mut sin_tab = vec![0.0; grid.n_phi * stride];
        for (j, &p) in grid.phi.iter().enumerate() {
            for m in 0..=ell_max {
                let (s, c) = (m as f64 * p).sin_cos();
                cos_tab[j * stride + m] = c;
                sin_tab[j * stride + m] = s;
            }
        }
        Ok(Self {
            ell_max,
            n_theta: grid.n_theta,
            n_phi: grid.n_phi,
            tw: grid.theta_weights.clone(),
            dphi: 2.0 * PI / grid.n_phi as f64,
            legendre,
            tri_len,
            cos_tab,
            sin_tab,
        })
    }

    pub fn ell_max(&self) -> usize {
        self.ell_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }

    /// `out[(ℓ, m)] = Σ_nodes w · f · Y_l^m`, overwriting `out`.
    pub fn forward(&self, samples: &[f64], out: &mut [f64]) {
        let l_max = self.ell_max;
        let stride = l_max + 1;
        let sqrt2 = std::f64::consts::SQRT_2;
        out[..block_len(l_max)].iter_mut().for_each(|v| *v = 0.0);
        let mut fc = vec![0.0; stride];
        let mut fs = vec![0.0; stride];
        for k in 0..self.n_theta {
            fc.iter_mut().for_each(|v| *v = 0.0);
            fs.iter_mut().for_each(|v| *v = 0.0);
            let row = &samples[k * self.n_phi..(k + 1) * self.n_phi];
            for (j, &f) in row.iter().enumerate() {
                let c = &self.cos_tab[j * stride..(j + 1) * stride];
                let s = &self.sin_tab[j * stride..(j + 1) * stride];
                for m in 0..stride {
                    fc[m] += f * c[m];
                    fs[m] += f * s[m];
                }
            }
            let w = self.tw[k] * self.dphi;
            let p = &self.legendre[k * self.tri_len..(k + 1) * self.tri_len];
            for l in 0..=l_max {
                let c = l * l + l;
                out[c] += w * p[tri(l, 0)] * fc[0];
                for m in 1..=l {
                    let pw = w * sqrt2 * p[tri(l, m)];
                    out[c + m] += pw * fc[m];
                    out[c - m] += pw * fs[m];
                }
            }
        }
    }

    /// Pointwise synthesis `Σ_{ℓm} u_{ℓm} Y_l^m` at the grid nodes, overwriting `out`.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        let l_max = self.ell_max;
        let stride = l_max + 1;
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut ac = vec![0.0; stride];
        let mut as_ = vec![0.0; stride];
        for k in 0..self.n_theta {
            ac.iter_mut().for_each(|v| *v = 0.0);
            as_.iter_mut().for_each(|v| *v = 0.0);
            let p = &self.legendre[k * self.tri_len..(k + 1) * self.tri_len];
            for l in 0..=l_max {
                let c = l * l + l;
                ac[0] += coeffs[c] * p[tri(l, 0)];
                for m in 1..=l {
                    let pl = sqrt2 * p[tri(l, m)];
                    ac[m] += coeffs[c + m] * pl;
                    as_[m] += coeffs[c - m] * pl;
                }
            }
            let row = &mut out[k * self.n_phi..(k + 1) * self.n_phi];
            for (j, v) in row.iter_mut().enumerate() {
                let c = &self.cos_tab[j * stride..(j + 1) * stride];
                let s = &self.sin_tab[j * stride..(j + 1) * stride];
                let mut acc = ac[0];
                for m in 1..stride {
                    acc += ac[m] * c[m] + as_[m] * s[m];
                }
                *v = acc;
            }
        }
    }
}

/// Coefficients `[u]_l^m = Σ w · f · Y_l^m` of nodal samples, on the unit sphere measure.
pub fn forward_transform(
    samples: &[f64],
    grid: &SphereQuadrature,
    ell_max: usize,
) -> Result<Vec<f64>> {
    if samples.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples for a grid of {} nodes",
            samples.len(),
            grid.len()
        )));
    }
    let t = SphTransform::new(grid, ell_max)?;
    let mut out = vec![0.0; block_len(ell_max)];
    t.forward(samples, &mut out);
    Ok(out)
}

/// Nodal values of the expansion with the given coefficient block.
pub fn inverse_transform(coeffs: &[f64], grid: &SphereQuadrature) -> Result<Vec<f64>> {
    let ell_max = (coeffs.len() as f64).sqrt() as usize - 1;
    if block_len(ell_max) != coeffs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} is not a square coefficient count",
            coeffs.len()
        )));
    }
    let t = SphTransform::new(grid, ell_max)?;
    let mut out = vec![0.0; grid.len()];
    t.inverse(coeffs, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Closed form with explicit polynomial Legendre functions, Condon–Shortley phase included.
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn binom(n: usize, k: usize) -> f64 {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    fn assoc_legendre_explicit(l: usize, m: usize, x: f64) -> f64 {
        // P_l(x) = 2^-l Σ_k (-1)^k C(l,k) C(2l-2k, l) x^(l-2k); differentiate m times.
        let mut acc = 0.0;
        for k in 0..=l / 2 {
            let p = l - 2 * k;
            if p < m {
                continue;
            }
            let c = (-1f64).powi(k as i32) * binom(l, k) * binom(2 * l - 2 * k, l);
            let falling = factorial(p) / factorial(p - m);
            acc += c * falling * x.powi((p - m) as i32);
        }
        acc /= 2f64.powi(l as i32);
        (-1f64).powi(m as i32) * (1.0 - x * x).powf(m as f64 / 2.0) * acc
    }

    fn y_explicit(l: usize, m: i64, theta: f64, phi: f64) -> f64 {
        let am = m.unsigned_abs() as usize;
        let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
        let p = assoc_legendre_explicit(l, am, theta.cos());
        let sign = (-1f64).powi(m as i32);
        match m.cmp(&0) {
            std::cmp::Ordering::Less => sign * 2f64.sqrt() * norm * p * (am as f64 * phi).sin(),
            std::cmp::Ordering::Equal => norm * p,
            std::cmp::Ordering::Greater => sign * 2f64.sqrt() * norm * p * (am as f64 * phi).cos(),
        }
    }

    #[test]
    fn low_degree_values() {
        let y00 = eval_real_sph_harm(HarmonicIndex::new(0, 0).unwrap(), 1.1, 0.3);
        assert!((y00 - 0.28209479177387814).abs() < 1e-15);
        let y10 = eval_real_sph_harm(HarmonicIndex::new(1, 0).unwrap(), 0.0, 0.0);
        assert!((y10 - 0.4886025119029199).abs() < 1e-15);
        // √(15/4π) sinθ cosθ cosφ at θ = π/4, φ = π/3
        let y21 = eval_real_sph_harm(HarmonicIndex::new(2, 1).unwrap(), PI / 4.0, PI / 3.0);
        let expected = 0.25 * (15.0 / (4.0 * PI)).sqrt();
        assert!((y21 - expected).abs() < 1e-15);
        assert!((y21 - y_explicit(2, 1, PI / 4.0, PI / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn recurrence_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let leg = Legendre::new(12);
        let mut out = vec![0.0; block_len(12)];
        for _ in 0..20 {
            let theta = rng.gen_range(0.0..PI);
            let phi = rng.gen_range(0.0..2.0 * PI);
            leg.harmonics(unit_vector(theta, phi), &mut out);
            for l in 0..=12 {
                for m in -(l as i64)..=(l as i64) {
                    let e = y_explicit(l, m, theta, phi);
                    let got = out[flat_index(l, m)];
                    assert!((got - e).abs() < 1e-11, "l={l} m={m}: {got} vs {e}");
                }
            }
        }
    }

    #[test]
    fn poles_are_finite() {
        let leg = Legendre::new(64);
        let mut out = vec![0.0; block_len(64)];
        for z in [1.0, -1.0] {
            leg.harmonics([0.0, 0.0, z], &mut out);
            assert!(out.iter().all(|v| v.is_finite()));
            for l in 0..=64 {
                let expect = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * z.powi(l as i32);
                assert!((out[l * l + l] - expect).abs() < 1e-12 * expect.abs().max(1.0));
                for m in 1..=l as i64 {
                    assert_eq!(out[flat_index(l, m)], 0.0);
                    assert_eq!(out[flat_index(l, -m)], 0.0);
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact() {
        for n in 1..40 {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "n={n}");
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn grid_shapes_and_weights() {
        let g = make_quadrature(0, 1).unwrap();
        assert_eq!((g.n_theta, g.n_phi), (1, 2));
        for (l, o) in [(0, 1), (3, 2), (10, 1), (20, 2)] {
            let g = make_quadrature(l, o).unwrap();
            let total: f64 = g.nodes.iter().map(|n| n.weight).sum();
            assert!((total / (4.0 * PI) - 1.0).abs() < 1e-13);
            assert!((g.integrate(&vec![1.0; g.len()]) - 4.0 * PI).abs() < 1e-13 * 4.0 * PI);
        }
        assert!(make_quadrature(3, 0).is_err());
    }

    // Midpoint rule in θ and trapezoid in φ, unrelated to the Gauss grid.
    fn brute_integral(f: impl Fn(f64, f64) -> f64) -> f64 {
        let (nt, np) = (2000, 64);
        let dt = PI / nt as f64;
        let dp = 2.0 * PI / np as f64;
        let mut acc = 0.0;
        for i in 0..nt {
            let t = (i as f64 + 0.5) * dt;
            for j in 0..np {
                let p = j as f64 * dp;
                acc += f(t, p) * t.sin() * dt * dp;
            }
        }
        acc
    }

    #[test]
    fn y32_is_normalised() {
        let g = make_quadrature(3, 1).unwrap();
        let idx = HarmonicIndex::new(3, 2).unwrap();
        let samples: Vec<f64> = g
            .nodes
            .iter()
            .map(|n| eval_real_sph_harm(idx, n.theta, n.phi).powi(2))
            .collect();
        assert!((g.integrate(&samples) - 1.0).abs() < 1e-12);
        let brute = brute_integral(|t, p| y_explicit(3, 2, t, p).powi(2));
        assert!((brute - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthonormality_on_grid() {
        let l_max = 8;
        let g = make_quadrature(l_max, 1).unwrap();
        let leg = Legendre::new(l_max);
        let nb = block_len(l_max);
        let mut table = vec![0.0; g.len() * nb];
        for (i, d) in g.unit_vectors().iter().enumerate() {
            leg.harmonics(*d, &mut table[i * nb..(i + 1) * nb]);
        }
        for a in 0..nb {
            for b in 0..nb {
                let ip: f64 = (0..g.len())
                    .map(|i| g.nodes[i].weight * table[i * nb + a] * table[i * nb + b])
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn forward_picks_single_harmonic() {
        let g = make_quadrature(4, 1).unwrap();
        let idx = HarmonicIndex::new(2, 1).unwrap();
        let samples: Vec<f64> = g
            .nodes
            .iter()
            .map(|n| eval_real_sph_harm(idx, n.theta, n.phi))
            .collect();
        let c = forward_transform(&samples, &g, 4).unwrap();
        for (k, v) in c.iter().enumerate() {
            let expect = if k == idx.flat() { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_of_constant() {
        let g = make_quadrature(5, 2).unwrap();
        let c = forward_transform(&vec![2.5; g.len()], &g, 5).unwrap();
        assert!((c[0] - 2.5 * (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn inverse_of_trivial_blocks() {
        let g = make_quadrature(3, 2).unwrap();
        let zero = inverse_transform(&vec![0.0; 16], &g).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let mut c = vec![0.0; 16];
        c[0] = (4.0 * PI).sqrt();
        let one = inverse_transform(&c, &g).unwrap();
        assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = make_quadrature(3, 1).unwrap();
        assert!(matches!(
            forward_transform(&vec![0.0; g.len()], &g, 4),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn flat_index_round_trip() {
        for k in 0..block_len(30) {
            let h = HarmonicIndex::from_flat(k);
            assert_eq!(h.flat(), k);
            assert!(h.m.unsigned_abs() as usize <= h.ell);
        }
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn transform_round_trip(l_max in 0usize..14, oversample in 1usize..3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = make_quadrature(l_max, oversample).unwrap();
            let t = SphTransform::new(&g, l_max).unwrap();
            let coeffs: Vec<f64> = (0..block_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut samples = vec![0.0; g.len()];
            t.inverse(&coeffs, &mut samples);
            let mut back = vec![0.0; coeffs.len()];
            t.forward(&samples, &mut back);
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
