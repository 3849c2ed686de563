//! Galton-Watson branching process with answers of rarity `n`.
//!
//! Every node of the process holds the answer independently with probability
//! `p = 1/n`. `φ_i` is the probability that none of the nodes in the first
//! `i` levels holds an answer and `λ_i = φ_{i-1} - φ_i` is the probability
//! that the first answer appears at level `i`.
//!
//! `φ` obeys `φ_i = t(φ_{i-1})` with `t(x) = Σ_j c_j ((1-p) x)^j`. Deep in the
//! tail `φ` settles on its limit and the subtraction `φ_{i-1} - φ_i` loses all
//! relative precision, so [`BranchingProfile`] computes `λ` through the
//! divided difference of `t` instead:
//!
//! ```text
//! λ_{i+1} = t(φ_{i-1}) - t(φ_i) = λ_i · Σ_j c_j (1-p)^j Σ_{m<j} φ_{i-1}^m φ_i^{j-1-m}
//! ```
//!
//! which only ever multiplies non-negative terms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::PropertyCheck;

/// Iteration cap for the extinction fixed point.
pub const EXTINCTION_MAX_ITERATIONS: usize = 1_000_000;

/// Probabilities below this are treated as underflowed when used as divisors.
pub const DEGENERATE_PROBABILITY: f64 = 1e-300;

const SUM_TOLERANCE: f64 = 1e-12;
const RELATIVE_TOLERANCE: f64 = 1e-12;

/// The law `D = {c_i}` of the number of children of a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionLiteral", into = "DistributionLiteral")]
pub struct OffspringDistribution {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionLiteral {
    d: usize,
    c: Vec<f64>,
}

impl TryFrom<DistributionLiteral> for OffspringDistribution {
    type Error = Error;

    fn try_from(lit: DistributionLiteral) -> Result<Self> {
        if lit.c.len() != lit.d + 1 {
            return Err(Error::InvalidDistribution(format!(
                "expected d + 1 = {} probabilities, got {}",
                lit.d + 1,
                lit.c.len()
            )));
        }
        Self::new(lit.c)
    }
}

impl From<OffspringDistribution> for DistributionLiteral {
    fn from(dist: OffspringDistribution) -> Self {
        Self {
            d: dist.max_children(),
            c: dist.probs,
        }
    }
}

impl OffspringDistribution {
    /// Build from `c_0..c_d`; index is the child count.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(
                "d must be a positive integer (need at least c_0 and c_1)".into(),
            ));
        }
        if let Some((i, c)) = probs
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "c_{i} = {c} is not a non-negative probability"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Build from `(child count, probability)` pairs; unspecified counts get 0.
    pub fn from_sparse(d: usize, entries: &[(usize, f64)]) -> Result<Self> {
        let mut probs = vec![0.0; d + 1];
        for &(i, c) in entries {
            if i > d {
                return Err(Error::InvalidDistribution(format!(
                    "child count {i} exceeds d = {d}"
                )));
            }
            probs[i] += c;
        }
        Self::new(probs)
    }

    /// Every node has exactly one child.
    pub fn chain() -> Self {
        Self {
            probs: vec![0.0, 1.0],
        }
    }

    /// `d`, the largest possible number of children.
    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `b = Σ i c_i`.
    pub fn branching_factor(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, c)| i as f64 * c)
            .sum()
    }

    /// The probability generating function `Ψ(x) = Σ c_i x^i`.
    pub fn pgf(&self, x: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `Ψ'(x)`.
    pub fn pgf_derivative(&self, x: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c)
    }

    /// Draw a child count.
    pub fn sample_children<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, c) in self.probs.iter().enumerate() {
            acc += c;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap above the last partial sum
        self.probs
            .iter()
            .rposition(|c| *c > 0.0)
            .unwrap_or(self.max_children())
    }
}

pub fn branching_factor(dist: &OffspringDistribution) -> f64 {
    dist.branching_factor()
}

/// Smallest fixed point of `Ψ` on `[0, 1]`.
///
/// Iterates `Ψ` from 0 until successive iterates differ by less than `tol`.
/// The critical and subcritical cases (`b < 1`, or `b = 1` with `c_0 > 0`)
/// return exactly 1, and `c_0 = 0` returns exactly 0.
pub fn extinction_probability(dist: &OffspringDistribution, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let b = dist.branching_factor();
    let c0 = dist.probs[0];
    if b < 1.0 - SUM_TOLERANCE || ((b - 1.0).abs() <= SUM_TOLERANCE && c0 > 0.0) {
        return Ok(1.0);
    }
    if c0 == 0.0 {
        return Ok(0.0);
    }
    let mut x = 0.0;
    for _ in 0..EXTINCTION_MAX_ITERATIONS {
        let next = dist.pgf(x);
        if (next - x).abs() < tol {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        iterations: EXTINCTION_MAX_ITERATIONS,
        last: x,
    })
}

/// The generating function of "no answer among the children", `t(x)`.
#[derive(Debug, Clone, Copy)]
struct QueryPgf<'a> {
    dist: &'a OffspringDistribution,
    /// `1 - p`
    miss: f64,
}

impl QueryPgf<'_> {
    fn value(&self, x: f64) -> f64 {
        self.dist.pgf(self.miss * x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.miss * self.dist.pgf_derivative(self.miss * x)
    }

    /// `(t(u) - t(v)) / (u - v)`, evaluated without cancellation.
    fn divided_difference(&self, u: f64, v: f64) -> f64 {
        // h_j = Σ_{m<j} u^m v^{j-1-m}, h_{j+1} = u h_j + v^j
        let mut h = 1.0;
        let mut v_pow = 1.0;
        let mut miss_pow = self.miss;
        let mut total = 0.0;
        for c in self.dist.probs.iter().skip(1) {
            total += c * miss_pow * h;
            v_pow *= v;
            h = u * h + v_pow;
            miss_pow *= self.miss;
        }
        total
    }

    /// `1 - t(1) = Σ c_j (1 - (1-p)^j)`.
    fn first_level_hit(&self) -> f64 {
        let log_miss = self.miss.ln();
        self.dist
            .probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, c)| c * -(j as f64 * log_miss).exp_m1())
            .sum()
    }
}

/// `φ_0..φ_h` by iterating `t` from 1.
pub fn no_answer_probabilities(dist: &OffspringDistribution, n: f64, h: usize) -> Result<Vec<f64>> {
    let p = crate::answer_probability(n)?;
    let t = QueryPgf {
        dist,
        miss: 1.0 - p,
    };
    let mut phi = Vec::with_capacity(h + 1);
    phi.push(1.0);
    for i in 1..=h {
        phi.push(t.value(phi[i - 1]));
    }
    Ok(phi)
}

/// `λ_1..λ_h` as the plain differences `φ_{i-1} - φ_i`.
///
/// Accurate while `λ` is large relative to machine epsilon; use
/// [`BranchingProfile`] for deep tails.
pub fn first_answer_distribution(phi: &[f64]) -> Vec<f64> {
    phi.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect()
}

/// Structural levels and constants of the `λ` sequence when `b > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    /// Last level of guaranteed geometric growth.
    pub ell1: usize,
    /// Smallest level attaining the maximum of `λ`.
    pub ellstar: usize,
    /// `ℓ(ε) = max{i : φ_i ≥ 1 - ε}`.
    pub ell_epsilon: usize,
    /// Growth factor below `ell1`.
    pub rho: f64,
    /// Smallest finite-horizon tail constant after `ellstar + 1`.
    pub gamma: f64,
    pub epsilon: f64,
}

/// Per-level `φ` and `λ` arrays for a fixed distribution and rarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingProfile {
    pub dist: OffspringDistribution,
    pub n: f64,
    pub h_max: usize,
    /// `φ_0..φ_{h_max}`.
    pub phi: Vec<f64>,
    /// `λ_1..λ_{h_max}`, stored zero-based.
    pub lambda: Vec<f64>,
    pub zeta: f64,
    pub landmarks: Option<Landmarks>,
}

impl BranchingProfile {
    /// Compute `φ`, `λ` and `ζ`; landmarks are filled in when the regime
    /// supports them.
    pub fn new(dist: &OffspringDistribution, n: f64, h_max: usize) -> Result<Self> {
        let p = crate::answer_probability(n)?;
        let phi = no_answer_probabilities(dist, n, h_max)?;
        let t = QueryPgf {
            dist,
            miss: 1.0 - p,
        };
        let mut lambda = Vec::with_capacity(h_max);
        if h_max >= 1 {
            lambda.push(t.first_level_hit());
        }
        for i in 1..h_max {
            let ratio = t.divided_difference(phi[i - 1], phi[i]);
            lambda.push(lambda[i - 1] * ratio);
        }
        let zeta = extinction_probability(dist, 1e-15)?;
        let mut profile = Self {
            dist: dist.clone(),
            n,
            h_max,
            phi,
            lambda,
            zeta,
            landmarks: None,
        };
        profile.landmarks = profile.compute_landmarks().ok();
        Ok(profile)
    }

    pub fn p(&self) -> f64 {
        1.0 / self.n
    }

    pub fn branching_factor(&self) -> f64 {
        self.dist.branching_factor()
    }

    /// `λ_i` for `1 ≤ i ≤ h_max`.
    pub fn lambda_at(&self, i: usize) -> f64 {
        self.lambda[i - 1]
    }

    /// The first `h` values of `λ`.
    pub fn lambda_prefix(&self, h: usize) -> &[f64] {
        &self.lambda[..h.min(self.lambda.len())]
    }

    fn query_pgf(&self) -> QueryPgf<'_> {
        QueryPgf {
            dist: &self.dist,
            miss: 1.0 - self.p(),
        }
    }

    /// `t'(x)`.
    pub fn query_pgf_derivative(&self, x: f64) -> f64 {
        self.query_pgf().derivative(x)
    }

    /// `1 - φ_i`, accumulated from `λ` to avoid cancellation near 1.
    pub fn answer_mass(&self, i: usize) -> f64 {
        self.lambda[..i].iter().sum()
    }

    /// Compute the landmarks, or explain why the regime is unsupported.
    pub fn compute_landmarks(&self) -> Result<Landmarks> {
        let b = self.branching_factor();
        let d = self.dist.max_children() as f64;
        if b <= 1.0 {
            return Err(Error::UnsupportedRegime(format!(
                "branching factor b = {b} must exceed 1"
            )));
        }
        let effective = (1.0 - self.p()) * b;
        if effective <= 1.0 {
            return Err(Error::UnsupportedRegime(format!(
                "(1 - 1/n) * b = {effective} must exceed 1; increase n"
            )));
        }
        if self.h_max == 0 {
            return Err(Error::InvalidHorizon(0));
        }
        let epsilon = 0.5 * ((1.0 - 1.0 / effective) / (5.0 * d)).min(1.0 - self.zeta);
        let rho = effective * (1.0 - 5.0 * epsilon * d);
        if rho <= 1.0 {
            return Err(Error::UnsupportedRegime(format!(
                "rho = (1 - 1/n) * b * (1 - 5 eps d) = {rho} must exceed 1"
            )));
        }
        let ell_epsilon = self
            .phi
            .iter()
            .rposition(|&phi| phi >= 1.0 - epsilon)
            .unwrap_or(0);
        let ell1 = ell_epsilon.saturating_sub(1).max(1);

        let mut ellstar = 1;
        for i in 2..=self.h_max {
            if self.lambda_at(i) > self.lambda_at(ellstar) {
                ellstar = i;
            }
        }

        let mut gamma: f64 = 1.0;
        let mut tail = 0.0;
        for i in (ellstar + 2..=self.h_max).rev() {
            let lam = self.lambda_at(i);
            tail += lam;
            if lam < DEGENERATE_PROBABILITY {
                return Err(Error::Degenerate {
                    level: i,
                    reason: format!("lambda = {lam:e} underflows; lower h"),
                });
            }
            gamma = gamma.max(tail / lam);
        }

        Ok(Landmarks {
            ell1,
            ellstar,
            ell_epsilon,
            rho,
            gamma,
            epsilon,
        })
    }
}

/// Landmarks of `λ` for a distribution, rarity and horizon.
pub fn landmarks(dist: &OffspringDistribution, n: f64, h: usize) -> Result<Landmarks> {
    BranchingProfile::new(dist, n, h)?.compute_landmarks()
}

/// Named checks on the structure of `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub checks: Vec<PropertyCheck>,
}

impl LambdaReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_RATIO_BRACKET: &str = "ratio_bracket";
pub const CHECK_SINGLE_PEAK: &str = "single_peak";
pub const CHECK_GEOMETRIC_GROWTH: &str = "geometric_growth";
pub const CHECK_TAIL_BOUND: &str = "tail_bound";
pub const CHECK_MASS_RATIO: &str = "mass_ratio_bound";
pub const CHECK_LANDMARK_ORDER: &str = "landmark_order";

/// Evaluate the structural properties of `λ` on the computed range.
///
/// Checks that need landmarks are reported as failing with a note when the
/// profile has none (`b ≤ 1` or an unsupported `n`).
pub fn verify_lambda_properties(profile: &BranchingProfile) -> LambdaReport {
    let h = profile.h_max;
    let lam = |i: usize| profile.lambda_at(i);
    let tprime = |x: f64| profile.query_pgf_derivative(x);

    let mut ratio = PropertyCheck::new(CHECK_RATIO_BRACKET);
    for i in 1..h {
        let r = lam(i + 1) / lam(i);
        let lo = tprime(profile.phi[i]);
        let hi = tprime(profile.phi[i - 1]);
        let scale = r.abs().max(f64::MIN_POSITIVE);
        let excess = (lo - r).max(r - hi) / scale;
        ratio.observe(excess, RELATIVE_TOLERANCE);
    }

    let mut checks = vec![ratio];
    let Some(marks) = profile.landmarks.as_ref() else {
        let why = match profile.compute_landmarks() {
            Err(e) => e.to_string(),
            Ok(_) => "landmarks not computed".into(),
        };
        for name in [
            CHECK_SINGLE_PEAK,
            CHECK_GEOMETRIC_GROWTH,
            CHECK_TAIL_BOUND,
            CHECK_MASS_RATIO,
            CHECK_LANDMARK_ORDER,
        ] {
            let mut c = PropertyCheck::new(name).with_note(why.clone());
            c.pass = false;
            checks.push(c);
        }
        return LambdaReport { checks };
    };

    let mut peak = PropertyCheck::new(CHECK_SINGLE_PEAK);
    for i in 2..=h {
        // non-decreasing up to the peak, strictly decreasing after it
        let excess = if i <= marks.ellstar {
            lam(i - 1) - lam(i)
        } else if lam(i) >= lam(i - 1) {
            (lam(i) - lam(i - 1)).max(f64::MIN_POSITIVE)
        } else {
            lam(i) - lam(i - 1)
        };
        peak.observe(excess, 0.0);
    }

    let mut growth = PropertyCheck::new(CHECK_GEOMETRIC_GROWTH);
    for i in 1..marks.ell1.min(h) {
        let excess = (marks.rho * lam(i) - lam(i + 1)) / lam(i + 1);
        growth.observe(excess, RELATIVE_TOLERANCE);
    }

    let mut tail = PropertyCheck::new(CHECK_TAIL_BOUND)
        .with_note(format!("gamma = {} (finite horizon h = {h})", marks.gamma));
    let mut suffix = 0.0;
    for i in (marks.ellstar + 2..=h).rev() {
        suffix += lam(i);
        let excess = (suffix - marks.gamma * lam(i)) / suffix;
        tail.observe(excess, RELATIVE_TOLERANCE);
    }

    let b = profile.branching_factor();
    let zeta = profile.zeta;
    let slope = 1.0 - profile.dist.pgf_derivative(zeta);
    let mut mass = PropertyCheck::new(CHECK_MASS_RATIO);
    for i in 1..h {
        let phi = profile.phi[i];
        if phi <= zeta {
            continue;
        }
        let bound = (1.0 / (b - 1.0)).max(1.0 / ((phi - zeta) * slope));
        let value = profile.answer_mass(i) / lam(i + 1);
        mass.observe((value - bound) / bound, RELATIVE_TOLERANCE);
    }

    let mut order = PropertyCheck::new(CHECK_LANDMARK_ORDER);
    order.observe(marks.ell1 as f64 - marks.ellstar as f64, 0.0);

    checks.extend([peak, growth, tail, mass, order]);
    LambdaReport { checks }
}
