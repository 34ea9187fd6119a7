//! Covariance square-root kernels `q`, smooth cutoffs `χ_N`, the covariance
//! `κ = q ⋆ q`, and the per-N parameter schedule `(s_N, ε_N, δ_N)`.
//!
//! All kernels are radial and nonnegative. The Bargmann–Fock kernel
//! `q(x) = (2/π)^{d/4} e^{−|x|²}` has the closed-form covariance
//! `κ(x) = e^{−|x|²/2}`; for the others `κ` is computed by quadrature of the
//! convolution. Decay is tracked through the exponent `β` (`q(x) ≲ |x|^{−β}`),
//! with `+∞` as the sentinel for super-polynomial decay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("covariance quadrature did not converge: last change {last_change:e} > {tol:e}")]
    QuadratureNonConvergent { last_change: f64, tol: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    BargmannFock,
    RationalQuadratic { beta: f64 },
    /// Radial profile given by samples `(radius, value)`, zero beyond the
    /// last radius, linearly interpolated in between.
    TabulatedRadial { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub d: usize,
    /// Decay exponent β; `f64::INFINITY` for super-polynomial decay.
    pub decay_exponent: f64,
}

impl KernelSpec {
    pub fn bargmann_fock(d: usize) -> Self {
        KernelSpec { family: KernelFamily::BargmannFock, d, decay_exponent: f64::INFINITY }
    }

    pub fn rational_quadratic(beta: f64, d: usize) -> Result<Self, KernelError> {
        let spec = KernelSpec {
            family: KernelFamily::RationalQuadratic { beta },
            d,
            decay_exponent: beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, beta: f64, d: usize) -> Result<Self, KernelError> {
        let spec = KernelSpec {
            family: KernelFamily::TabulatedRadial { radii, values },
            d,
            decay_exponent: beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses a two-column CSV `radius,value` (strictly increasing radii).
    pub fn tabulated_from_csv(text: &str, beta: f64, d: usize) -> Result<Self, KernelError> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let bad = || KernelError::InvalidSpec(format!("kernel csv line {}: expected `radius,value`", lineno + 1));
            let r: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if cols.next().is_some() {
                return Err(bad());
            }
            radii.push(r);
            values.push(v);
        }
        Self::tabulated(radii, values, beta, d)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.d == 0 {
            return Err(KernelError::InvalidSpec("dimension must be positive".into()));
        }
        if !(self.decay_exponent > self.d as f64 / 2.0) {
            return Err(KernelError::InvalidSpec(format!(
                "decay exponent {} must exceed d/2 = {}",
                self.decay_exponent,
                self.d as f64 / 2.0
            )));
        }
        match &self.family {
            KernelFamily::BargmannFock => {}
            KernelFamily::RationalQuadratic { beta } => {
                if *beta != self.decay_exponent {
                    return Err(KernelError::InvalidSpec("decay exponent must equal the rational-quadratic β".into()));
                }
            }
            KernelFamily::TabulatedRadial { radii, values } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return Err(KernelError::InvalidSpec("tabulated profile needs ≥ 2 (radius, value) rows".into()));
                }
                if radii[0] < 0.0 {
                    return Err(KernelError::InvalidSpec("radii must be nonnegative".into()));
                }
                if radii.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(KernelError::InvalidSpec("radii must be strictly increasing".into()));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(KernelError::InvalidSpec("profile values must be finite and ≥ 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Radial profile `q(r)`.
    pub fn q_radial(&self, r: f64) -> f64 {
        match &self.family {
            KernelFamily::BargmannFock => {
                (2.0 / std::f64::consts::PI).powf(self.d as f64 / 4.0) * (-r * r).exp()
            }
            KernelFamily::RationalQuadratic { beta } => (1.0 + r * r).powf(-beta / 2.0),
            KernelFamily::TabulatedRadial { radii, values } => {
                if r <= radii[0] {
                    return values[0];
                }
                if r >= *radii.last().unwrap() {
                    return 0.0;
                }
                let j = radii.partition_point(|x| *x <= r);
                let (r0, r1) = (radii[j - 1], radii[j]);
                let (v0, v1) = (values[j - 1], values[j]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// Radius beyond which `q < tol` (the numeric support of the kernel).
    pub fn numeric_radius(&self, tol: f64) -> f64 {
        match &self.family {
            KernelFamily::BargmannFock => {
                let amp = (2.0 / std::f64::consts::PI).powf(self.d as f64 / 4.0);
                (amp / tol).ln().max(0.0).sqrt()
            }
            KernelFamily::RationalQuadratic { beta } => (tol.powf(-2.0 / beta) - 1.0).max(0.0).sqrt(),
            KernelFamily::TabulatedRadial { radii, .. } => *radii.last().unwrap(),
        }
    }
}

/// `q(x)`; total, nonnegative, invariant under signed permutations of `x`.
pub fn eval_q(spec: &KernelSpec, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), spec.d);
    spec.q_radial(norm2(x))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Absolute tolerance of the κ quadrature.
pub const KAPPA_TOL: f64 = 1e-6;

/// `κ(x) = (q ⋆ q)(x)`. Closed form for Bargmann–Fock; adaptive quadrature
/// otherwise, with absolute tolerance [`KAPPA_TOL`].
pub fn eval_kappa(spec: &KernelSpec, x: &[f64]) -> Result<f64, KernelError> {
    debug_assert_eq!(x.len(), spec.d);
    if let KernelFamily::BargmannFock = spec.family {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        return Ok((-r2 / 2.0).exp());
    }
    kappa_quadrature(spec, norm2(x))
}

/// Quadrature of the convolution, usable for any family (the Bargmann–Fock
/// self-consistency check routes through here on purpose).
pub fn kappa_quadrature(spec: &KernelSpec, a: f64) -> Result<f64, KernelError> {
    // Reduce the d-dimensional convolution integral at offset a·e₁ to the
    // half-plane (t, r): ∫ q(y) q(x−y) dy
    //   = S_{d−2} ∫_{r≥0} ∫_t q(√(t²+r²)) q(√((t−a)²+r²)) r^{d−2} dt dr,
    // where S_{d−2} is the surface area of the unit (d−2)-sphere.
    let d = spec.d;
    let radius = kappa_box_radius(spec);
    let t_lo = -radius;
    let t_hi = a + radius;
    let r_hi = radius;
    let weight = sphere_area(d as u32 - 2);
    let f = |t: f64, r: f64| {
        let q1 = spec.q_radial((t * t + r * r).sqrt());
        let q2 = spec.q_radial(((t - a) * (t - a) + r * r).sqrt());
        let geom = if d == 2 { 1.0 } else { r.powi(d as i32 - 2) };
        q1 * q2 * geom
    };
    // integrate in t = sinh(u), r = sinh(v): the substitution packs nodes
    // into the unit-scale peak while the polynomial tails stay coarse, so
    // the refinement below converges even when radius ≫ 1
    let g = |u: f64, v: f64| f(u.sinh(), v.sinh()) * u.cosh() * v.cosh();
    let u_lo = t_lo.asinh();
    let u_hi = t_hi.asinh();
    let v_hi = r_hi.asinh();
    let mut prev = f64::NAN;
    let mut n = 64usize;
    let mut last_change = f64::INFINITY;
    for _ in 0..8 {
        let val = weight * simpson2(&g, u_lo, u_hi, 0.0, v_hi, 2 * n, n);
        if prev.is_finite() {
            last_change = (val - prev).abs();
            if last_change < KAPPA_TOL {
                return Ok(val);
            }
        }
        prev = val;
        n *= 2;
    }
    Err(KernelError::QuadratureNonConvergent { last_change, tol: KAPPA_TOL })
}

/// Integration radius: the smaller of the kernel's numeric support and the
/// radius where the tail mass of q·q(·−x) drops below the tolerance.
fn kappa_box_radius(spec: &KernelSpec) -> f64 {
    let support = spec.numeric_radius(1e-9) + 1.0;
    let beta = spec.decay_exponent;
    if !beta.is_finite() {
        return support;
    }
    let d = spec.d as f64;
    // ∫_{|y|>T} |y|^{−2β} ≈ S_{d−1} T^{d−2β}/(2β−d) < KAPPA_TOL/10
    let s = sphere_area(spec.d as u32 - 1);
    let t = (s / ((2.0 * beta - d) * KAPPA_TOL / 10.0)).powf(1.0 / (2.0 * beta - d));
    support.min(t.max(4.0))
}

/// Surface area of the unit k-sphere in R^{k+1}; k=0 gives 2 (two points).
fn sphere_area(k: u32) -> f64 {
    let pi = std::f64::consts::PI;
    2.0 * pi.powf((k as f64 + 1.0) / 2.0) / gamma_half(k + 1)
}

/// Γ(k/2) for integer k ≥ 1.
fn gamma_half(k: u32) -> f64 {
    let pi = std::f64::consts::PI;
    if k % 2 == 0 {
        let n = k / 2; // Γ(n) = (n−1)!
        (1..n).map(|i| i as f64).product()
    } else {
        // Γ(1/2)=√π, Γ(z+1)=zΓ(z)
        let mut g = pi.sqrt();
        let mut z = 0.5;
        while z + 1.0 <= k as f64 / 2.0 + 1e-12 {
            g *= z;
            z += 1.0;
        }
        g
    }
}

/// Composite Simpson on a product grid; `nt`, `nr` are interval counts
/// (forced even).
fn simpson2(f: &impl Fn(f64, f64) -> f64, t0: f64, t1: f64, r0: f64, r1: f64, nt: usize, nr: usize) -> f64 {
    let nt = nt + nt % 2;
    let nr = nr + nr % 2;
    let ht = (t1 - t0) / nt as f64;
    let hr = (r1 - r0) / nr as f64;
    let w = |i: usize, n: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut sum = 0.0;
    for i in 0..=nt {
        let t = t0 + i as f64 * ht;
        let wt = w(i, nt);
        let mut row = 0.0;
        for j in 0..=nr {
            row += w(j, nr) * f(t, r0 + j as f64 * hr);
        }
        sum += wt * row;
    }
    sum * ht * hr / 9.0
}

/// Smooth radial cutoff at truncation range `N`: `χ_N(x) = 1` for
/// `|x| ≤ N/4`, `0` for `|x| ≥ N/2`, C^∞ ramp in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub n: f64,
}

impl CutoffSpec {
    pub fn new(n: f64) -> Self {
        assert!(n > 0.0, "truncation range must be positive");
        CutoffSpec { n }
    }

    /// Ramp profile in the normalized variable `u = |x|/N`.
    pub fn profile(&self, u: f64) -> f64 {
        if u <= 0.25 {
            1.0
        } else if u >= 0.5 {
            0.0
        } else {
            let a = bump(2.0 - 4.0 * u);
            let b = bump(4.0 * u - 1.0);
            a / (a + b)
        }
    }
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// `χ_N(x)`.
pub fn eval_cutoff(cut: &CutoffSpec, x: &[f64]) -> f64 {
    cut.profile(norm2(x) / cut.n)
}

/// The per-N triple `(s_N, ε_N, δ_N)` with its exponents. `δ_N` underflows
/// to zero for moderate `N`; `log_delta = −N^γ` is kept alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub n: f64,
    pub eta: f64,
    pub gamma: f64,
    pub s: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub log_delta: f64,
}

/// Standard schedule: `s = N^{−η}`, `ε = N^{−β+d/2}`, `δ = e^{−N^γ}` with
/// `γ = 2β−d−2η`. Requires `η ∈ (0, β−d)`, which forces `γ > d`.
pub fn schedule(n: f64, eta: f64, beta: f64, d: usize) -> Result<ParamSchedule, KernelError> {
    if n < 1.0 {
        return Err(KernelError::InvalidSchedule(format!("N = {n} must be ≥ 1")));
    }
    if !beta.is_finite() {
        return Err(KernelError::InvalidSchedule(
            "schedule needs a finite decay exponent; super-polynomial kernels admit any finite β as a bound".into(),
        ));
    }
    let df = d as f64;
    if !(eta > 0.0 && eta < beta - df) {
        return Err(KernelError::InvalidSchedule(format!(
            "η = {eta} outside (0, β−d) = (0, {})",
            beta - df
        )));
    }
    let gamma = 2.0 * beta - df - 2.0 * eta;
    let log_delta = -n.powf(gamma);
    Ok(ParamSchedule {
        n,
        eta,
        gamma,
        s: n.powf(-eta),
        epsilon: n.powf(-beta + df / 2.0),
        delta: log_delta.exp(),
        log_delta,
    })
}

/// Super-polynomial (Bargmann–Fock) schedule: for any fixed `γ > d`,
/// `s = N^{γ/2} e^{−(c/2)N²}`, `ε = e^{−(c/2)N²}`, `δ = e^{−N^γ}`.
pub fn bf_schedule(n: f64, gamma: f64, c: f64, d: usize) -> Result<ParamSchedule, KernelError> {
    if n < 1.0 {
        return Err(KernelError::InvalidSchedule(format!("N = {n} must be ≥ 1")));
    }
    if !(gamma > d as f64) {
        return Err(KernelError::InvalidSchedule(format!("γ = {gamma} must exceed d = {d}")));
    }
    if !(c > 0.0) {
        return Err(KernelError::InvalidSchedule(format!("c = {c} must be positive")));
    }
    let log_delta = -n.powf(gamma);
    Ok(ParamSchedule {
        n,
        eta: f64::NAN,
        gamma,
        s: n.powf(gamma / 2.0) * (-c / 2.0 * n * n).exp(),
        epsilon: (-c / 2.0 * n * n).exp(),
        delta: log_delta.exp(),
        log_delta,
    })
}

/// Inverse lookup for the super-polynomial schedule: the `N ≥ √(γ/c)` with
/// `s_N = s` (the `N ≍ √(log s^{−1})` regime).
pub fn bf_n_for_sprinkling(s: f64, gamma: f64, c: f64, d: usize) -> Result<f64, KernelError> {
    if !(s > 0.0) {
        return Err(KernelError::InvalidSchedule("target sprinkling must be positive".into()));
    }
    let n_min = (gamma / c).sqrt().max(1.0);
    let s_at = |n: f64| bf_schedule(n, gamma, c, d).map(|p| p.s).unwrap_or(f64::NAN);
    if s >= s_at(n_min) {
        return Err(KernelError::InvalidSchedule(format!(
            "target sprinkling {s} not reachable: schedule is decreasing only below s(N_min) = {}",
            s_at(n_min)
        )));
    }
    let mut hi = n_min;
    while s_at(hi) > s {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(KernelError::InvalidSchedule(format!("target sprinkling {s} too small")));
        }
    }
    let mut lo = (hi / 2.0).max(n_min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s_at(mid) > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn q_closed_forms() {
        let bf = KernelSpec::bargmann_fock(2);
        assert_abs_diff_eq!(eval_q(&bf, &[0.0, 0.0]), (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            eval_q(&bf, &[1.0, 0.0]),
            (2.0 / std::f64::consts::PI).sqrt() * (-1.0f64).exp(),
            epsilon = 1e-15
        );
        let rq = KernelSpec::rational_quadratic(3.0, 2).unwrap();
        assert_abs_diff_eq!(eval_q(&rq, &[0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_q(&rq, &[3.0, 4.0]), 26.0f64.powf(-1.5), epsilon = 1e-15);
    }

    #[test]
    fn kappa_bargmann_fock_closed_form() {
        let bf = KernelSpec::bargmann_fock(2);
        assert_eq!(eval_kappa(&bf, &[0.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(eval_kappa(&bf, &[1.0, 0.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(eval_kappa(&bf, &[0.6, 0.8]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn kappa_quadrature_matches_bargmann_fock_closed_form() {
        // quadrature self-consistency at scattered offsets
        let bf = KernelSpec::bargmann_fock(2);
        let mut rng_state = 0x1234_5678_u64;
        let mut unit = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let a = 3.0 * unit();
            let v = kappa_quadrature(&bf, a).unwrap();
            assert_abs_diff_eq!(v, (-a * a / 2.0).exp(), epsilon = 1e-5);
        }
        let bf3 = KernelSpec::bargmann_fock(3);
        let v = kappa_quadrature(&bf3, 1.0).unwrap();
        assert_abs_diff_eq!(v, (-0.5f64).exp(), epsilon = 1e-5);
    }

    #[test]
    fn kappa_rational_quadratic_at_zero() {
        // ∫ (1+|y|²)^{−β} dy = π/(β−1) in d=2 and π²/4 for β=3 in d=3
        let rq2 = KernelSpec::rational_quadratic(3.0, 2).unwrap();
        let v2 = eval_kappa(&rq2, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v2, std::f64::consts::PI / 2.0, epsilon = 2e-6);

        let rq3 = KernelSpec::rational_quadratic(3.0, 3).unwrap();
        let v3 = eval_kappa(&rq3, &[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v3, std::f64::consts::PI.powi(2) / 4.0, epsilon = 2e-6);
    }

    #[test]
    fn tabulated_interpolates_and_truncates() {
        let spec = KernelSpec::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0], 3.0, 2).unwrap();
        assert_eq!(eval_q(&spec, &[0.0, 0.0]), 1.0);
        assert_abs_diff_eq!(eval_q(&spec, &[0.5, 0.0]), 0.75, epsilon = 1e-15);
        assert_eq!(eval_q(&spec, &[5.0, 0.0]), 0.0);
        assert_eq!(spec.numeric_radius(1e-9), 2.0);
    }

    #[test]
    fn tabulated_csv_rejects_disorder() {
        assert!(KernelSpec::tabulated_from_csv("0,1\n1,0.5\n2,0\n", 3.0, 2).is_ok());
        assert!(KernelSpec::tabulated_from_csv("0,1\n2,0.5\n1,0\n", 3.0, 2).is_err());
        assert!(KernelSpec::tabulated_from_csv("0,1,9\n1,0\n", 3.0, 2).is_err());
    }

    #[test]
    fn beta_must_exceed_half_dimension() {
        assert!(KernelSpec::rational_quadratic(1.0, 2).is_err());
        assert!(KernelSpec::rational_quadratic(1.01, 2).is_ok());
    }

    #[test]
    fn cutoff_plateaus_are_exact() {
        let cut = CutoffSpec::new(8.0);
        assert_eq!(eval_cutoff(&cut, &[1.0, 0.0]), 1.0);
        assert_eq!(eval_cutoff(&cut, &[2.0, 0.0]), 1.0); // |x| = N/4
        assert_eq!(eval_cutoff(&cut, &[8.0, 0.0]), 0.0); // |x| = N
        assert_eq!(eval_cutoff(&cut, &[4.0, 0.0]), 0.0); // |x| = N/2
        let mid = eval_cutoff(&cut, &[3.0, 0.0]); // |x| = 3N/8
        assert!(mid > 0.0 && mid < 1.0);
        assert_abs_diff_eq!(mid, 0.5, epsilon = 1e-12); // ramp is symmetric about 3/8
    }

    #[test]
    fn cutoff_profile_glues_flatly_to_its_plateaus() {
        // the gap to each plateau vanishes faster than any power of the
        // distance to the junction, so every derivative matches across it
        let cut = CutoffSpec::new(1.0);
        for (t, k) in [(1e-2, 4), (5e-3, 8), (2.5e-3, 12)] {
            let upper = 1.0 - cut.profile(0.25 + t);
            let lower = cut.profile(0.5 - t);
            assert!((0.0..=t.powi(k)).contains(&upper), "gap {upper} at 1/4 beats t^{k}");
            assert!((0.0..=t.powi(k)).contains(&lower), "gap {lower} at 1/2 beats t^{k}");
        }
        // slope at the symmetry point 3/8 is −2 φ'(1/2)/φ(1/2) = −8
        let h = 1e-4;
        let slope = (cut.profile(0.375 + h) - cut.profile(0.375 - h)) / (2.0 * h);
        assert_abs_diff_eq!(slope, -8.0, epsilon = 1e-4);
    }

    #[test]
    fn schedule_reference_values() {
        let p = schedule(16.0, 0.5, 3.0, 2).unwrap();
        assert_eq!(p.s, 0.25);
        assert_eq!(p.epsilon, 16.0f64.powi(-2));
        assert_eq!(p.gamma, 3.0);
        assert_eq!(p.log_delta, -4096.0);
        assert_eq!(p.delta, 0.0); // e^{−4096} underflows

        let p1 = schedule(1.0, 0.3, 3.0, 2).unwrap();
        assert_eq!(p1.s, 1.0);
        assert_eq!(p1.epsilon, 1.0);
        assert_abs_diff_eq!(p1.delta, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_eta() {
        assert!(schedule(8.0, 0.99, 3.0, 2).is_ok());
        assert!(schedule(8.0, 1.0, 3.0, 2).is_err());
        assert!(schedule(8.0, 0.0, 3.0, 2).is_err());
        assert!(schedule(8.0, 1.5, 3.0, 2).is_err());
        assert!(schedule(8.0, 0.5, f64::INFINITY, 2).is_err());
        assert!(schedule(0.5, 0.5, 3.0, 2).is_err());
    }

    #[test]
    fn schedule_componentwise_decreasing_in_n() {
        let mut prev: Option<ParamSchedule> = None;
        for n in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let p = schedule(n, 0.5, 3.0, 2).unwrap();
            if let Some(q) = prev {
                assert!(p.s < q.s && p.epsilon < q.epsilon && p.delta <= q.delta);
            }
            prev = Some(p);
        }
    }

    #[test]
    fn bf_schedule_and_inverse() {
        let p = bf_schedule(4.0, 3.0, 1.0, 2).unwrap();
        assert_abs_diff_eq!(p.s, 4.0f64.powf(1.5) * (-8.0f64).exp(), epsilon = 1e-18);
        assert_abs_diff_eq!(p.epsilon, (-8.0f64).exp(), epsilon = 1e-18);
        let n = bf_n_for_sprinkling(p.s, 3.0, 1.0, 2).unwrap();
        assert_abs_diff_eq!(n, 4.0, epsilon = 1e-6);
        // N ≍ √(log s⁻¹) regime
        let s = 1e-12;
        let n = bf_n_for_sprinkling(s, 3.0, 1.0, 2).unwrap();
        let log_inv = (1.0f64 / s).ln();
        assert!(n > (log_inv).sqrt() && n < (2.5 * log_inv).sqrt(), "n = {n}");
        assert!(bf_schedule(4.0, 1.5, 1.0, 2).is_err());
    }

    proptest! {
        #[test]
        fn q_invariant_under_signed_permutations(x in prop::collection::vec(-3.0f64..3.0, 2), flip in prop::bool::ANY, swap in prop::bool::ANY) {
            let spec = KernelSpec::rational_quadratic(2.5, 2).unwrap();
            let mut y = x.clone();
            if flip { y[0] = -y[0]; }
            if swap { y.swap(0, 1); }
            prop_assert!((eval_q(&spec, &x) - eval_q(&spec, &y)).abs() < 1e-14);
            prop_assert!(eval_q(&spec, &x) >= 0.0);
        }

        #[test]
        fn cutoff_isotropic_and_monotone(r1 in 0.0f64..10.0, r2 in 0.0f64..10.0, angle in 0.0f64..6.28) {
            let cut = CutoffSpec::new(7.0);
            let v1 = eval_cutoff(&cut, &[r1 * angle.cos(), r1 * angle.sin()]);
            let v1_axis = eval_cutoff(&cut, &[r1, 0.0]);
            prop_assert!((v1 - v1_axis).abs() < 1e-12);
            let (a, b) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let va = eval_cutoff(&cut, &[a, 0.0]);
            let vb = eval_cutoff(&cut, &[b, 0.0]);
            prop_assert!(va >= vb - 1e-15);
            prop_assert!((0.0..=1.0).contains(&va));
        }
    }
}
