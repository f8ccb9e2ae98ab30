//! Beta exponential family in natural coordinates.
//!
//! A Beta(a, b) density is written as exp(η·s(θ) − A(η)) with natural
//! parameter η = (a − 1, b − 1), sufficient statistics s(θ) = (ln θ, ln(1 − θ))
//! and log-partition A(η) = ln B(a, b). The moment map is ∇A and the Fisher
//! information is ∇²A.
//!
//! The same coordinates also carry unnormalized factors (local likelihood
//! approximations), which may sit outside the normalizable region. Only
//! parameters used as a distribution have to satisfy a, b > 0.

mod model;
pub mod special;

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

pub use model::{DataSummary, LikelihoodModel, Objective};
use special::{digamma, ln_beta, trigamma};

/// Samples are clamped into this interval before logs are taken.
pub const SAMPLE_CLAMP: f64 = 1e-12;

/// FIM inversions are refused above this condition number.
pub const MAX_FIM_CONDITION: f64 = 1e12;

/// Natural parameter of a (possibly unnormalized) Beta factor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NaturalParam(pub [f64; 2]);

/// Expected sufficient statistics (E[ln θ], E[ln(1 − θ)]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParam(pub [f64; 2]);

impl NaturalParam {
    pub const ZERO: NaturalParam = NaturalParam([0.0, 0.0]);

    pub fn new(eta1: f64, eta2: f64) -> Self {
        NaturalParam([eta1, eta2])
    }

    pub fn from_shape(a: f64, b: f64) -> Self {
        NaturalParam([a - 1.0, b - 1.0])
    }

    pub fn to_shape(self) -> (f64, f64) {
        (self.0[0] + 1.0, self.0[1] + 1.0)
    }

    pub fn coords(self) -> [f64; 2] {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn is_normalizable(self) -> bool {
        let (a, b) = self.to_shape();
        a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
    }

    /// Shape parameters, or a domain error if this is not a proper Beta.
    pub fn shape_checked(self) -> Result<(f64, f64)> {
        if self.is_normalizable() {
            Ok(self.to_shape())
        } else {
            let (a, b) = self.to_shape();
            Err(Error::Domain(format!("Beta({a}, {b}) is not normalizable")))
        }
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(self, other: NaturalParam) -> f64 {
        (self.0[0] - other.0[0]).abs().max((self.0[1] - other.0[1]).abs())
    }
}

impl Add for NaturalParam {
    type Output = NaturalParam;
    fn add(self, rhs: Self) -> Self {
        NaturalParam([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1]])
    }
}

impl Sub for NaturalParam {
    type Output = NaturalParam;
    fn sub(self, rhs: Self) -> Self {
        NaturalParam([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1]])
    }
}

impl Neg for NaturalParam {
    type Output = NaturalParam;
    fn neg(self) -> Self {
        NaturalParam([-self.0[0], -self.0[1]])
    }
}

impl Mul<f64> for NaturalParam {
    type Output = NaturalParam;
    fn mul(self, rhs: f64) -> Self {
        NaturalParam([self.0[0] * rhs, self.0[1] * rhs])
    }
}

impl AddAssign for NaturalParam {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for NaturalParam {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl std::iter::Sum for NaturalParam {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(NaturalParam::ZERO, Add::add)
    }
}

/// Symmetric 2×2 Fisher information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim(pub [[f64; 2]; 2]);

impl Fim {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Ratio of largest to smallest eigenvalue; infinite when not PD.
    pub fn condition_number(&self) -> f64 {
        let m = &self.0;
        let half_trace = 0.5 * (m[0][0] + m[1][1]);
        let gap = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).max(0.0).sqrt();
        let hi = half_trace + gap;
        let lo = self.det() / hi;
        if !(lo > 0.0) || !hi.is_finite() {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let condition = self.condition_number();
        if !(condition <= MAX_FIM_CONDITION) {
            return Err(Error::SingularFim { condition });
        }
        let m = &self.0;
        let inv_det = 1.0 / self.det();
        Ok([
            [m[1][1] * inv_det, -m[0][1] * inv_det],
            [-m[1][0] * inv_det, m[0][0] * inv_det],
        ])
    }

    /// Solves FIM · x = v.
    pub fn solve(&self, v: [f64; 2]) -> Result<[f64; 2]> {
        let inv = self.inverse()?;
        Ok(mat_vec(&inv, v))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.0, v)
    }
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Log-partition A(η) = ln B(a, b).
pub fn log_partition(eta: NaturalParam) -> Result<f64> {
    let (a, b) = eta.shape_checked()?;
    Ok(ln_beta(a, b))
}

/// μ(η) = (ψ(a) − ψ(a+b), ψ(b) − ψ(a+b)).
pub fn moment_map(eta: NaturalParam) -> Result<MomentParam> {
    let (a, b) = eta.shape_checked()?;
    let total = digamma(a + b);
    Ok(MomentParam([digamma(a) - total, digamma(b) - total]))
}

/// Hessian of the log-partition, equal to the Jacobian of [`moment_map`].
pub fn fim(eta: NaturalParam) -> Result<Fim> {
    let (a, b) = eta.shape_checked()?;
    let cross = trigamma(a + b);
    Ok(Fim([[trigamma(a) - cross, -cross], [-cross, trigamma(b) - cross]]))
}

/// KL(Beta(p) ‖ Beta(q)) in closed form.
pub fn kl(p: NaturalParam, q: NaturalParam) -> Result<f64> {
    let (a1, b1) = p.shape_checked()?;
    let (a2, b2) = q.shape_checked()?;
    if p == q {
        return Ok(0.0);
    }
    let value = ln_beta(a2, b2) - ln_beta(a1, b1)
        + (a1 - a2) * digamma(a1)
        + (b1 - b2) * digamma(b1)
        + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
    // Rounding can push an essentially-zero divergence slightly negative.
    Ok(value.max(0.0))
}

/// Log-density of Beta(η) at θ ∈ (0, 1).
pub fn log_density(eta: NaturalParam, theta: f64) -> Result<f64> {
    let a_part = log_partition(eta)?;
    let s = sufficient_stats(theta);
    Ok(eta.0[0] * s[0] + eta.0[1] * s[1] - a_part)
}

/// (ln θ, ln(1 − θ)) with θ clamped away from the endpoints.
pub fn sufficient_stats(theta: f64) -> [f64; 2] {
    let t = theta.clamp(SAMPLE_CLAMP, 1.0 - SAMPLE_CLAMP);
    [t.ln(), (-t).ln_1p()]
}

/// `n` i.i.d. draws from Beta(η), clamped into [1e-12, 1 − 1e-12].
pub fn sample<R: Rng + ?Sized>(eta: NaturalParam, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    let sampler = beta_sampler(eta)?;
    Ok((0..n).map(|_| draw(&sampler, rng)).collect())
}

pub(crate) fn beta_sampler(eta: NaturalParam) -> Result<Beta<f64>> {
    let (a, b) = eta.shape_checked()?;
    Beta::new(a, b).map_err(|e| Error::Domain(format!("Beta({a}, {b}): {e}")))
}

pub(crate) fn draw<R: Rng + ?Sized>(sampler: &Beta<f64>, rng: &mut R) -> f64 {
    sampler.sample(rng).clamp(SAMPLE_CLAMP, 1.0 - SAMPLE_CLAMP)
}

/// ∇_μ ln q(θ | η) = FIM(η)⁻¹ (s(θ) − μ(η)).
pub fn score_in_moment_coords(eta: NaturalParam, theta: f64) -> Result<[f64; 2]> {
    let mu = moment_map(eta)?;
    let f = fim(eta)?;
    score_with(&f, mu, theta)
}

pub(crate) fn score_with(f: &Fim, mu: MomentParam, theta: f64) -> Result<[f64; 2]> {
    let s = sufficient_stats(theta);
    f.solve([s[0] - mu.0[0], s[1] - mu.0[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn shape_round_trip_examples() {
        assert_eq!(NaturalParam::new(1.0, 1.0).to_shape(), (2.0, 2.0));
        assert_eq!(NaturalParam::new(0.0, 0.0).to_shape(), (1.0, 1.0));
        assert_eq!(NaturalParam::new(-0.5, 2.0).to_shape(), (0.5, 3.0));
    }

    #[test]
    fn moment_map_examples() {
        let mu = moment_map(NaturalParam::from_shape(2.0, 2.0)).unwrap();
        assert!((mu.0[0] + 5.0 / 6.0).abs() < 1e-13);
        assert!((mu.0[1] + 5.0 / 6.0).abs() < 1e-13);
        let mu = moment_map(NaturalParam::from_shape(1.0, 1.0)).unwrap();
        assert!((mu.0[0] + 1.0).abs() < 1e-13 && (mu.0[1] + 1.0).abs() < 1e-13);
        let mu = moment_map(NaturalParam::from_shape(3.7, 3.7)).unwrap();
        assert_eq!(mu.0[0], mu.0[1]);
        assert!(matches!(moment_map(NaturalParam::from_shape(0.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn moment_map_uniform_matches_quadrature() {
        // ∫₀¹ ln θ dθ by midpoint rule
        let m = 1_000_000;
        let h = 1.0 / m as f64;
        let integral: f64 = (0..m).map(|i| ((i as f64 + 0.5) * h).ln() * h).sum();
        let mu = moment_map(NaturalParam::from_shape(1.0, 1.0)).unwrap();
        assert!((integral - mu.0[0]).abs() < 1e-6);
    }

    #[test]
    fn fim_examples() {
        let f = fim(NaturalParam::from_shape(2.0, 2.0)).unwrap();
        assert!((f.0[0][0] - 0.36114).abs() < 1e-4);
        assert!((f.0[0][1] + 0.28382).abs() < 1e-4);
        assert_eq!(f.0[0][1], f.0[1][0]);

        let f = fim(NaturalParam::from_shape(1.0, 1.0)).unwrap();
        let tg2 = PI * PI / 6.0 - 1.0;
        assert!((f.0[0][0] - (PI * PI / 6.0 - tg2)).abs() < 1e-12);
        assert!((f.0[0][1] + tg2).abs() < 1e-12);
        assert!(f.det() > 0.0);
    }

    #[test]
    fn fim_singular_is_refused() {
        let f = Fim([[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(f.inverse(), Err(Error::SingularFim { .. })));
        let f = Fim([[1.0, 0.0], [0.0, 1e-13]]);
        assert!(matches!(f.inverse(), Err(Error::SingularFim { .. })));
    }

    #[test]
    fn kl_examples() {
        let p = NaturalParam::from_shape(2.0, 2.0);
        assert_eq!(kl(p, p).unwrap(), 0.0);
        let value = kl(NaturalParam::from_shape(1.0, 1.0), p).unwrap();
        assert!((value - 0.2082).abs() < 1e-4, "{value}");
        assert!(kl(NaturalParam::from_shape(-1.0, 2.0), p).is_err());
    }

    #[test]
    fn kl_uniform_vs_beta22_by_quadrature() {
        // KL(U ‖ Beta(2,2)) = −∫ ln(6θ(1−θ)) dθ on a 10^5-point grid
        let m = 100_000;
        let h = 1.0 / m as f64;
        let quad: f64 = (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                -(6.0 * t * (1.0 - t)).ln() * h
            })
            .sum();
        let closed = kl(NaturalParam::from_shape(1.0, 1.0), NaturalParam::from_shape(2.0, 2.0)).unwrap();
        // The ln θ endpoint singularity limits the midpoint rule to ~1e-5 here.
        assert!((quad - closed).abs() < 1e-4, "{quad} vs {closed}");
        // Analytic value: −ln 6 − 2∫ln θ dθ = 2 − ln 6
        assert!((closed - (2.0 - 6f64.ln())).abs() < 1e-13);
    }

    #[test]
    fn sample_is_deterministic_and_unbiased() {
        let eta = NaturalParam::from_shape(5.0, 1.0);
        let a = sample(eta, &mut ChaCha8Rng::seed_from_u64(7), 1000).unwrap();
        let b = sample(eta, &mut ChaCha8Rng::seed_from_u64(7), 1000).unwrap();
        assert_eq!(a, b);

        for &(sa, sb) in &[(2.0, 2.0), (5.0, 1.0)] {
            let n = 1_000_000;
            let xs = sample(NaturalParam::from_shape(sa, sb), &mut ChaCha8Rng::seed_from_u64(11), n).unwrap();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let expected = sa / (sa + sb);
            let var = sa * sb / ((sa + sb).powi(2) * (sa + sb + 1.0));
            assert!((mean - expected).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
            assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn sample_log_moments_match_moment_map() {
        let eta = NaturalParam::from_shape(0.7, 3.0);
        let n = 1_000_000;
        let xs = sample(eta, &mut ChaCha8Rng::seed_from_u64(3), n).unwrap();
        let mu = moment_map(eta).unwrap();
        for j in 0..2 {
            let vals: Vec<f64> = xs.iter().map(|&x| sufficient_stats(x)[j]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - mu.0[j]).abs() < 4.0 * (var / n as f64).sqrt(), "coord {j}");
        }
    }

    #[test]
    fn score_examples() {
        let eta = NaturalParam::from_shape(2.0, 2.0);
        let score = score_in_moment_coords(eta, 0.5).unwrap();
        // Assembled from the closed-form moment and FIM values
        let d = 0.5f64.ln() + 5.0 / 6.0;
        let tg2 = PI * PI / 6.0 - 1.0;
        let tg4 = PI * PI / 6.0 - 1.0 - 0.25 - 1.0 / 9.0;
        let (p, q) = (tg2 - tg4, -tg4);
        let det = p * p - q * q;
        let expected = (p * d - q * d) / det;
        assert!((score[0] - expected).abs() < 1e-10);
        assert!((score[1] - expected).abs() < 1e-10);

        let eta = NaturalParam::from_shape(3.0, 0.8);
        let f = fim(eta).unwrap();
        let mu = moment_map(eta).unwrap();
        let s = sufficient_stats(0.3);
        let back = f.apply(score_in_moment_coords(eta, 0.3).unwrap());
        assert!((back[0] - (s[0] - mu.0[0])).abs() < 1e-10);
        assert!((back[1] - (s[1] - mu.0[1])).abs() < 1e-10);
    }

    #[test]
    fn score_has_zero_mean() {
        let eta = NaturalParam::from_shape(2.5, 4.0);
        let n = 1_000_000;
        let xs = sample(eta, &mut ChaCha8Rng::seed_from_u64(5), n).unwrap();
        let scores: Vec<[f64; 2]> = xs.iter().map(|&x| score_in_moment_coords(eta, x).unwrap()).collect();
        for j in 0..2 {
            let mean = scores.iter().map(|s| s[j]).sum::<f64>() / n as f64;
            let var = scores.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "coord {j}: {mean}");
        }
    }

    #[test]
    fn fim_is_jacobian_of_moment_map() {
        let grid = [0.5, 1.0, 2.0, 8.0];
        let h = 1e-5;
        for &a in &grid {
            for &b in &grid {
                let eta = NaturalParam::from_shape(a, b);
                let f = fim(eta).unwrap();
                for j in 0..2 {
                    let mut dp = [0.0; 2];
                    dp[j] = h;
                    let up = moment_map(eta + NaturalParam(dp)).unwrap();
                    let dn = moment_map(eta - NaturalParam(dp)).unwrap();
                    for i in 0..2 {
                        let fd = (up.0[i] - dn.0[i]) / (2.0 * h);
                        assert!((fd - f.0[i][j]).abs() < 1e-5, "a={a} b={b}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn shape_round_trip(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let (a2, b2) = NaturalParam::from_shape(a, b).to_shape();
            prop_assert!((a2 - a).abs() <= 1e-12 * a.max(1.0));
            prop_assert!((b2 - b).abs() <= 1e-12 * b.max(1.0));
        }

        #[test]
        fn kl_is_nonnegative(a1 in 0.05f64..200.0, b1 in 0.05f64..200.0,
                             a2 in 0.05f64..200.0, b2 in 0.05f64..200.0) {
            let p = NaturalParam::from_shape(a1, b1);
            let q = NaturalParam::from_shape(a2, b2);
            prop_assert!(kl(p, q).unwrap() >= 0.0);
            prop_assert_eq!(kl(p, p).unwrap(), 0.0);
        }

        #[test]
        fn fim_is_symmetric_pd(a in 0.05f64..500.0, b in 0.05f64..500.0) {
            let f = fim(NaturalParam::from_shape(a, b)).unwrap();
            prop_assert_eq!(f.0[0][1], f.0[1][0]);
            prop_assert!(f.det() > 0.0);
            prop_assert!(f.0[0][0] > 0.0);
        }
    }
}
