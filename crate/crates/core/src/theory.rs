//! Closed-form convergence and communication constants.
//!
//! For `n` workers of which `b ≤ f` are Byzantine (`h = n − b` fault-free),
//! smoothness `L`, strong convexity `μ`, relative noise `σ` and deviation
//! ratio `r`:
//!
//! ```text
//! k_x = 1 + (x − 1)/√(2x − 1)
//! β   = (n − 2f)(μ − r(1 + σ)L)/(1 + r) − b(1 + k_h σ)L
//! α_h = hσ² + (1 + k_h σ)²
//! γ   = nL²(h(1 + σ²) + b α_h)
//! ρ(η) = 1 − 2βη + γη²
//! ```
//!
//! `ρ` is minimized at `η = β/γ` with value `1 − β²/γ`, and is below one for
//! every `η ∈ (0, 2β/γ)`.

use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("k_x is defined for x >= 1, got {0}")]
    Domain(f64),
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("fault fraction {x} is not below the maximum {x_max}")]
    FaultFractionTooLarge { x: f64, x_max: f64 },
}

/// `k_x = 1 + (x − 1)/√(2x − 1)`
pub fn k_of(x: f64) -> Result<f64, TheoryError> {
    if !(x >= 1.0) {
        return Err(TheoryError::Domain(x));
    }
    Ok(1.0 + (x - 1.0) / (2.0 * x - 1.0).sqrt())
}

/// The supremum of `k_x / √x` over `x ≥ 1` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KStar {
    pub value: f64,
    pub argmax: f64,
}

fn k_over_sqrt(x: f64) -> f64 {
    (1.0 + (x - 1.0) / (2.0 * x - 1.0).sqrt()) / x.sqrt()
}

/// Golden-section maximization of `k_x/√x` on `[1, 10]`.
///
/// The function is unimodal there: it rises from 1 at `x = 1`, peaks near
/// `x ≈ 1.91` and decreases towards `1/√2` as `x → ∞`.
pub fn k_star_search() -> KStar {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1.0_f64, 10.0_f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (k_over_sqrt(c), k_over_sqrt(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = k_over_sqrt(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = k_over_sqrt(d);
        }
    }
    let argmax = 0.5 * (a + b);
    KStar {
        value: k_over_sqrt(argmax),
        argmax,
    }
}

/// `k* = sup_{x ≥ 1} k_x/√x ≈ 1.1157`, computed once per process.
pub fn k_star() -> f64 {
    static K_STAR: OnceLock<KStar> = OnceLock::new();
    K_STAR.get_or_init(k_star_search).value
}

/// Inputs to the convergence constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub n: usize,
    pub f: usize,
    /// Fault-free workers in the execution.
    pub h: usize,
    /// Byzantine workers in the execution.
    pub b: usize,
    pub mu: f64,
    pub l: f64,
    pub sigma: f64,
    pub r: f64,
}

impl SystemParams {
    /// Worst case: `b = f` Byzantine workers.
    pub fn worst_case(n: usize, f: usize, mu: f64, l: f64, sigma: f64, r: f64) -> Self {
        Self {
            n,
            f,
            h: n.saturating_sub(f),
            b: f,
            mu,
            l,
            sigma,
            r,
        }
    }

    fn validate(&self) -> Result<(), TheoryError> {
        let fail = |msg: String| Err(TheoryError::InfeasibleConfig(msg));
        if self.n <= 2 * self.f {
            return fail(format!("need n > 2f (n = {}, f = {})", self.n, self.f));
        }
        if self.h + self.b != self.n {
            return fail(format!(
                "h + b = {} differs from n = {}",
                self.h + self.b,
                self.n
            ));
        }
        if self.b > self.f {
            return fail(format!("b = {} exceeds f = {}", self.b, self.f));
        }
        if !(self.mu > 0.0) || !(self.l >= self.mu) || !self.l.is_finite() {
            return fail(format!(
                "need 0 < mu <= L (mu = {}, L = {})",
                self.mu, self.l
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return fail(format!("need sigma >= 0 (sigma = {})", self.sigma));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return fail(format!("need r > 0 (r = {})", self.r));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub k_h: f64,
    pub k_n: f64,
    pub k_star: f64,
    pub alpha_h: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho_min: f64,
    pub r_max_general: f64,
    pub r_max_strict: f64,
    pub eta_max: f64,
    /// Lower bound on the probability that a gradient lands in the echo ball.
    pub p: f64,
    /// Communication ratio bound, `None` when `f/n` is at or past `x_max`.
    pub c: Option<CommBounds>,
}

impl TheoryConstants {
    /// `ρ(η) = 1 − 2βη + γη²`
    pub fn rho_at(&self, eta: f64) -> f64 {
        1.0 - 2.0 * self.beta * eta + self.gamma * eta * eta
    }

    /// Step size minimizing `ρ`.
    pub fn eta_opt(&self) -> f64 {
        self.beta / self.gamma
    }
}

pub fn constants(params: &SystemParams) -> Result<TheoryConstants, TheoryError> {
    params.validate()?;
    let SystemParams {
        n,
        f,
        h,
        b,
        mu,
        l,
        sigma,
        r,
    } = *params;
    let (nf, ff, hf, bf) = (n as f64, f as f64, h as f64, b as f64);
    let k_h = k_of(hf)?;
    let k_n = k_of(nf)?;
    let beta =
        (nf - 2.0 * ff) * (mu - r * (1.0 + sigma) * l) / (1.0 + r) - bf * (1.0 + k_h * sigma) * l;
    let alpha_h = hf * sigma * sigma + (1.0 + k_h * sigma).powi(2);
    let gamma = nf * l * l * (hf * (1.0 + sigma * sigma) + bf * alpha_h);
    let (r_max_general, r_max_strict) = r_bounds(n, f, mu, l, sigma);
    let x = ff / nf;
    Ok(TheoryConstants {
        k_h,
        k_n,
        k_star: k_star(),
        alpha_h,
        beta,
        gamma,
        rho_min: 1.0 - beta * beta / gamma,
        r_max_general,
        r_max_strict,
        eta_max: 2.0 * beta / gamma,
        p: echo_probability_bound(sigma, r),
        c: comm_bounds(sigma, x, mu / l, n, r).ok(),
    })
}

/// Upper bounds on the deviation ratio `r`.
///
/// The general bound uses `k_n σ`; the strict one replaces it with `k*`,
/// which is valid when `σ < 1/√n`. A non-positive value means no `r` works.
pub fn r_bounds(n: usize, f: usize, mu: f64, l: f64, sigma: f64) -> (f64, f64) {
    let (nf, ff) = (n as f64, f as f64);
    let bound = |k_sigma: f64| {
        (nf * mu - (3.0 + k_sigma) * ff * l)
            / ((nf - 2.0 * ff) * (1.0 + sigma) * l + (1.0 + k_sigma) * ff * l)
    };
    let k_n = k_of(nf.max(1.0)).expect("n >= 1");
    (bound(k_n * sigma), bound(k_star()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub checks: Vec<Check>,
}

impl FeasibilityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

pub const CHECK_MAJORITY: &str = "n > 2f";
pub const CHECK_RESILIENCE: &str = "n*mu - (3 + k*) f L > 0";
pub const CHECK_SIGMA: &str = "sigma < 1/sqrt(n)";
pub const CHECK_R: &str = "0 < r < r_max_strict";
pub const CHECK_ETA: &str = "0 < eta < 2 beta/gamma";
pub const CHECK_BETA: &str = "beta > 0";
pub const CHECK_RHO: &str = "rho(eta) in [0, 1)";

/// Diagnoses every convergence condition for the worst case `b = f`.
pub fn feasibility(
    n: usize,
    f: usize,
    mu: f64,
    l: f64,
    sigma: f64,
    r: f64,
    eta: f64,
) -> FeasibilityReport {
    let (nf, ff) = (n as f64, f as f64);
    let k = k_star();
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| {
        checks.push(Check {
            name,
            passed,
            detail,
        })
    };

    push(CHECK_MAJORITY, n > 2 * f, format!("n = {n}, f = {f}"));
    let slack = nf * mu - (3.0 + k) * ff * l;
    push(CHECK_RESILIENCE, slack > 0.0, format!("{slack:.6}"));
    let sigma_max = 1.0 / nf.sqrt();
    push(
        CHECK_SIGMA,
        sigma < sigma_max,
        format!("sigma = {sigma}, 1/sqrt(n) = {sigma_max:.6}"),
    );
    let (_, r_strict) = r_bounds(n, f, mu, l, sigma);
    push(
        CHECK_R,
        r > 0.0 && r < r_strict,
        format!("r = {r}, r_max_strict = {r_strict:.6}"),
    );

    match constants(&SystemParams::worst_case(n, f, mu, l, sigma, r)) {
        Ok(c) => {
            let eta_ok = eta > 0.0 && eta < c.eta_max;
            push(
                CHECK_ETA,
                eta_ok,
                format!("eta = {eta}, 2 beta/gamma = {:.6e}", c.eta_max),
            );
            push(CHECK_BETA, c.beta > 0.0, format!("beta = {:.6}", c.beta));
            let rho = c.rho_at(eta);
            push(
                CHECK_RHO,
                (0.0..1.0).contains(&rho),
                format!("rho = {rho:.6}"),
            );
        }
        Err(e) => {
            for name in [CHECK_ETA, CHECK_BETA, CHECK_RHO] {
                push(name, false, e.to_string());
            }
        }
    }
    FeasibilityReport { checks }
}

/// `p = 1 − (1 + 2/r)² σ²`
pub fn echo_probability_bound(sigma: f64, r: f64) -> f64 {
    1.0 - (1.0 + 2.0 / r).powi(2) * sigma * sigma
}

/// Largest fault fraction `x = f/n` for which the communication bound exists.
pub fn x_max(sigma: f64, mu_over_l: f64, n: usize) -> f64 {
    mu_over_l / (3.0 + sigma * k_star() * (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommBounds {
    /// Probability bound for the supplied `r`.
    pub p: f64,
    /// Bound on the Echo-CGC / raw-gradient traffic ratio, evaluated at the
    /// largest admissible deviation ratio.
    pub c: f64,
}

impl CommBounds {
    /// A ratio above one says nothing about savings.
    pub fn is_vacuous(&self) -> bool {
        self.c > 1.0
    }

    pub fn reported_c(&self) -> f64 {
        self.c.min(1.0)
    }
}

/// `p` for the given `r`, and
/// `C = σ²(1 + 2((1−2x)(1+σ) + (1+σk*√n)x)/(μ/L − (3+σk*√n)x))²`.
pub fn comm_bounds(
    sigma: f64,
    x: f64,
    mu_over_l: f64,
    n: usize,
    r: f64,
) -> Result<CommBounds, TheoryError> {
    let x_max = x_max(sigma, mu_over_l, n);
    if !(x >= 0.0) || x >= x_max {
        return Err(TheoryError::FaultFractionTooLarge { x, x_max });
    }
    let s = sigma * k_star() * (n as f64).sqrt();
    let num = (1.0 - 2.0 * x) * (1.0 + sigma) + (1.0 + s) * x;
    let den = mu_over_l - (3.0 + s) * x;
    let c = sigma * sigma * (1.0 + 2.0 * num / den).powi(2);
    Ok(CommBounds {
        p: echo_probability_bound(sigma, r),
        c,
    })
}

/// The deviation ratio that the communication bound is evaluated at:
/// `(μ/L − (3+σk*√n)x)/((1−2x)(1+σ) + (1+σk*√n)x)`.
pub fn comm_bound_r(sigma: f64, x: f64, mu_over_l: f64, n: usize) -> f64 {
    let s = sigma * k_star() * (n as f64).sqrt();
    (mu_over_l - (3.0 + s) * x) / ((1.0 - 2.0 * x) * (1.0 + sigma) + (1.0 + s) * x)
}
