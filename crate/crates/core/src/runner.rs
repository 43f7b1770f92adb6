//! Building simulations from a [`RunConfig`] and writing results as CSV.
//!
//! Randomness is derived from the configured seed only. The problem instance
//! (optimum, starting point, Hessian rotation) comes from stream 0 of a
//! ChaCha8 generator seeded with `seed`; replica `i` draws its worker and
//! adversary streams from stream `i + 1`. Replicas therefore share the
//! problem and differ only in noise, and adding replicas never changes the
//! earlier ones.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::accounting::{round_ratio, CostModel, RoundMetrics};
use crate::config::{ConfigError, RunConfig, SweepAxis};
use crate::cost::{CostError, NoiseModel, QuadraticCost};
use crate::geometry::DenseVector;
use crate::protocol::{
    Adversary, AdversaryKind, ProtocolError, ProtocolParams, RoundRngs, Simulation,
};
use crate::theory::{
    comm_bound_r, comm_bounds, constants, feasibility, x_max, CommBounds, FeasibilityReport,
    SystemParams, TheoryConstants, TheoryError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Worst-case `β/γ`, the step size used when none is configured.
pub fn default_eta(config: &RunConfig) -> Result<f64, RunError> {
    let c = constants(&SystemParams::worst_case(
        config.n,
        config.f,
        config.mu,
        config.l,
        config.sigma,
        config.r,
    ))?;
    if !(c.beta > 0.0) {
        return Err(ConfigError::Invalid(format!(
            "beta = {:.6e} is not positive, so there is no default step size; set eta explicitly",
            c.beta
        ))
        .into());
    }
    Ok(c.eta_opt())
}

fn cost_model(config: &RunConfig) -> CostModel {
    let mut model = CostModel::for_workers(config.n);
    if let Some(bits) = config.bits_per_scalar {
        model.bits_per_scalar = bits;
    }
    if let Some(bits) = config.header_bits {
        model.header_bits = bits;
    }
    model
}

fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64 + 1);
    rng
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> DenseVector {
    DenseVector::new((0..d).map(|_| rng.sample(StandardNormal)).collect()).expect("finite samples")
}

/// A validated configuration with its problem instance.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: RunConfig,
    params: ProtocolParams,
    cost: QuadraticCost,
    noise: NoiseModel,
    adversary: Adversary,
    cost_model: CostModel,
    w0: DenseVector,
}

impl Experiment {
    pub fn new(config: &RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let eta = match config.eta {
            Some(eta) => eta,
            None => default_eta(config)?,
        };
        let params = ProtocolParams {
            n: config.n,
            f: config.f,
            r: config.r,
            eta,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let optimum = gaussian_vector(&mut rng, config.d);
        let mut w0 = gaussian_vector(&mut rng, config.d);
        w0.axpy(1.0, &optimum);
        let rotation_seed: u64 = rng.random();
        let spectrum = config
            .hessian_spectrum
            .build(config.d, config.mu, config.l)?;
        let cost = QuadraticCost::new(optimum, spectrum, config.rotate.then_some(rotation_seed))?;
        let adversary = Adversary::new(config.adversary, config.byzantine_ids());
        adversary.validate(config.n, config.f)?;
        Ok(Self {
            config: config.clone(),
            params,
            cost,
            noise: NoiseModel::new(config.sigma)?,
            adversary,
            cost_model: cost_model(config),
            w0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    pub fn w0(&self) -> &DenseVector {
        &self.w0
    }

    /// Worst-case feasibility of the configured parameters and step size.
    pub fn feasibility(&self) -> FeasibilityReport {
        let c = &self.config;
        feasibility(c.n, c.f, c.mu, c.l, c.sigma, c.r, self.params.eta)
    }

    /// A fresh simulation for one replica.
    pub fn simulation(&self, replica: usize) -> Result<Simulation, RunError> {
        let mut source = replica_rng(self.config.seed, replica);
        let rngs = RoundRngs::derive(self.config.n, &mut source);
        let sim = Simulation::new(
            self.params,
            self.cost.clone(),
            self.noise,
            self.adversary.clone(),
            self.w0.clone(),
            rngs,
        )?;
        Ok(sim.with_cost_model(self.cost_model))
    }

    pub fn run_replica(&self, replica: usize) -> Result<Vec<RoundMetrics>, RunError> {
        Ok(self.simulation(replica)?.run(self.config.rounds)?)
    }

    /// All replicas, run in parallel, returned in replica order.
    pub fn run_all(&self) -> Result<Vec<Vec<RoundMetrics>>, RunError> {
        (0..self.config.replicas)
            .into_par_iter()
            .map(|i| self.run_replica(i))
            .collect()
    }

    /// Mean bits-sent ratio over every round of every replica.
    pub fn mean_ratio(runs: &[Vec<RoundMetrics>], model: &CostModel, n: usize, d: usize) -> f64 {
        let ratios: Vec<f64> = runs
            .iter()
            .flatten()
            .map(|m| round_ratio(m, model, n, d))
            .collect();
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

pub const CONVERGE_HEADER: [&str; 9] = [
    "replica",
    "round",
    "distance_sq",
    "bits_sent",
    "echo_count",
    "ball_count",
    "detections",
    "raw_count",
    "next_distance_sq",
];

pub fn write_converge_csv<W: Write>(out: W, runs: &[Vec<RoundMetrics>]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGE_HEADER)?;
    for (replica, run) in runs.iter().enumerate() {
        for m in run {
            let detections: Vec<String> = m.detections.iter().map(usize::to_string).collect();
            w.write_record([
                replica.to_string(),
                m.round_index.to_string(),
                format_float(m.distance_sq),
                m.bits_sent.to_string(),
                m.echo_count.to_string(),
                m.ball_count.to_string(),
                detections.join(";"),
                m.raw_count.to_string(),
                format_float(m.next_distance_sq),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Constants for the worst case `b = f`, and for the configured adversary
/// when it controls fewer than `f` slots.
#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub worst_case: TheoryConstants,
    pub actual: Option<(usize, TheoryConstants)>,
    pub eta: f64,
    pub x_max: f64,
    pub comm_bound_r: f64,
    pub feasibility: FeasibilityReport,
}

pub fn theory_report(config: &RunConfig) -> Result<TheoryReport, RunError> {
    config.validate()?;
    let c = config;
    let worst_case = constants(&SystemParams::worst_case(c.n, c.f, c.mu, c.l, c.sigma, c.r))?;
    let b = c.byzantine_ids().len();
    let actual = if b < c.f {
        let params = SystemParams {
            h: c.n - b,
            b,
            ..SystemParams::worst_case(c.n, c.f, c.mu, c.l, c.sigma, c.r)
        };
        Some((b, constants(&params)?))
    } else {
        None
    };
    // Fall back to the raw optimizer so infeasible configurations still
    // produce a full report.
    let eta = c.eta.unwrap_or_else(|| worst_case.eta_opt());
    let x = c.f as f64 / c.n as f64;
    Ok(TheoryReport {
        worst_case,
        actual,
        eta,
        x_max: x_max(c.sigma, c.mu / c.l, c.n),
        comm_bound_r: comm_bound_r(c.sigma, x, c.mu / c.l, c.n),
        feasibility: feasibility(c.n, c.f, c.mu, c.l, c.sigma, c.r, eta),
    })
}

fn constant_rows(prefix: &str, k: &TheoryConstants, eta: f64) -> Vec<(String, String)> {
    let mut rows: Vec<(String, f64)> = vec![
        ("k_h".into(), k.k_h),
        ("k_n".into(), k.k_n),
        ("k_star".into(), k.k_star),
        ("alpha_h".into(), k.alpha_h),
        ("beta".into(), k.beta),
        ("gamma".into(), k.gamma),
        ("eta_opt".into(), k.eta_opt()),
        ("eta_max".into(), k.eta_max),
        ("rho_min".into(), k.rho_min),
        ("rho_at_eta".into(), k.rho_at(eta)),
        ("r_max_general".into(), k.r_max_general),
        ("r_max_strict".into(), k.r_max_strict),
        ("p".into(), k.p),
    ];
    if let Some(cb) = k.c {
        rows.push(("c".into(), cb.c));
        rows.push(("c_reported".into(), cb.reported_c()));
    }
    let mut out: Vec<(String, String)> = rows
        .into_iter()
        .map(|(name, v)| (format!("{prefix}{name}"), format_float(v)))
        .collect();
    if let Some(cb) = k.c {
        out.push((format!("{prefix}c_vacuous"), cb.is_vacuous().to_string()));
    } else {
        out.push((format!("{prefix}c"), "domain_error".into()));
    }
    out
}

/// `name,value` rows: the constants, then one `check:<condition>` row per
/// feasibility condition.
pub fn write_theory_csv<W: Write>(out: W, report: &TheoryReport) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "value"])?;
    w.write_record(["eta", &format_float(report.eta)])?;
    for (name, value) in constant_rows("", &report.worst_case, report.eta) {
        w.write_record([name, value])?;
    }
    w.write_record(["x_max", &format_float(report.x_max)])?;
    w.write_record(["comm_bound_r", &format_float(report.comm_bound_r)])?;
    if let Some((b, k)) = &report.actual {
        w.write_record(["actual.b", &b.to_string()])?;
        for (name, value) in constant_rows("actual.", k, report.eta) {
            w.write_record([name, value])?;
        }
    }
    for check in &report.feasibility.checks {
        w.write_record([
            format!("check:{}", check.name),
            if check.passed { "pass" } else { "fail" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One grid point of a communication sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub sigma: f64,
    pub x: f64,
    pub mu_over_l: f64,
    pub n: usize,
    pub x_max: f64,
    /// Deviation ratio the bound is evaluated at and the empirical runs use.
    pub r: f64,
    /// `None` when `x ≥ x_max`.
    pub bounds: Option<CommBounds>,
    pub empirical_ratio: Option<f64>,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        match self.bounds {
            None => "domain_error",
            Some(b) if b.is_vacuous() => "vacuous",
            Some(_) => "ok",
        }
    }
}

struct SweepPoint {
    sigma: f64,
    x: f64,
    mu_over_l: f64,
    n: usize,
}

fn sweep_point(config: &RunConfig, axis: SweepAxis, value: f64) -> SweepPoint {
    let mut p = SweepPoint {
        sigma: config.sigma,
        x: config.f as f64 / config.n as f64,
        mu_over_l: config.mu / config.l,
        n: config.n,
    };
    match axis {
        SweepAxis::Sigma => p.sigma = value,
        SweepAxis::X => p.x = value,
        SweepAxis::MuOverL => p.mu_over_l = value,
        SweepAxis::N => p.n = value.round().max(1.0) as usize,
    }
    p
}

/// Fault-free simulation at one sweep point. `f` is `⌊x n⌋`, `L` is kept
/// and `μ = (μ/L)·L` with a two-point spectrum when `μ < L`.
fn empirical_ratio(config: &RunConfig, point: &SweepPoint, r: f64) -> Result<f64, RunError> {
    let mu = point.mu_over_l * config.l;
    let spectrum = if point.mu_over_l < 1.0 {
        match config.hessian_spectrum {
            crate::cost::SpectrumMode::Isotropic => crate::cost::SpectrumMode::TwoPoint,
            other => other,
        }
    } else {
        crate::cost::SpectrumMode::Isotropic
    };
    let run = RunConfig {
        n: point.n,
        f: (point.x * point.n as f64).floor() as usize,
        sigma: point.sigma,
        mu,
        r,
        hessian_spectrum: spectrum,
        adversary: AdversaryKind::None,
        byzantine_slots: None,
        sweep: Default::default(),
        ..config.clone()
    };
    let exp = Experiment::new(&run)?;
    let runs = exp.run_all()?;
    Ok(Experiment::mean_ratio(
        &runs,
        exp.cost_model(),
        run.n,
        run.d,
    ))
}

/// Evaluates the communication bound on the configured grid. With
/// `empirical`, each point with a finite, positive `r` also gets the mean
/// measured ratio of fault-free runs at that `r`.
pub fn sweep(config: &RunConfig, empirical: bool) -> Result<Vec<SweepRow>, RunError> {
    config.validate()?;
    let axis = config.sweep.axis;
    config
        .sweep
        .grid()
        .into_par_iter()
        .map(|value| {
            let pt = sweep_point(config, axis, value);
            let r = comm_bound_r(pt.sigma, pt.x, pt.mu_over_l, pt.n);
            let bounds = comm_bounds(pt.sigma, pt.x, pt.mu_over_l, pt.n, r).ok();
            let empirical_ratio = match (empirical, bounds) {
                (true, Some(_)) if r.is_finite() && r > 0.0 => {
                    Some(empirical_ratio(config, &pt, r)?)
                }
                _ => None,
            };
            Ok(SweepRow {
                value,
                sigma: pt.sigma,
                x: pt.x,
                mu_over_l: pt.mu_over_l,
                n: pt.n,
                x_max: x_max(pt.sigma, pt.mu_over_l, pt.n),
                r,
                bounds,
                empirical_ratio,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 14] = [
    "axis",
    "value",
    "sigma",
    "x",
    "mu_over_L",
    "n",
    "x_max",
    "r",
    "p",
    "c",
    "c_reported",
    "vacuous",
    "status",
    "empirical_ratio",
];

pub fn write_sweep_csv<W: Write>(
    out: W,
    axis: SweepAxis,
    rows: &[SweepRow],
) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        let (p, c, reported, vacuous) = match row.bounds {
            Some(b) => (
                format_float(b.p),
                format_float(b.c),
                format_float(b.reported_c()),
                b.is_vacuous().to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([
            axis.name().to_string(),
            format_float(row.value),
            format_float(row.sigma),
            format_float(row.x),
            format_float(row.mu_over_l),
            row.n.to_string(),
            format_float(row.x_max),
            format_float(row.r),
            p,
            c,
            reported,
            vacuous,
            row.status().to_string(),
            row.empirical_ratio.map(format_float).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n: 10,
            f: 1,
            d: 4,
            sigma: 0.01,
            r: 0.05,
            rounds: 5,
            replicas: 3,
            seed: 42,
            ..RunConfig::default()
        }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12_345.678_9] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn replicas_are_deterministic_and_independent() {
        let exp = Experiment::new(&small()).unwrap();
        let all = exp.run_all().unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[1], exp.run_replica(1).unwrap());
        assert_ne!(all[0], all[1]);

        let more = Experiment::new(&RunConfig {
            replicas: 5,
            ..small()
        })
        .unwrap();
        assert_eq!(more.run_all().unwrap()[..3], all[..]);
    }

    #[test]
    fn converge_csv_shape() {
        let exp = Experiment::new(&small()).unwrap();
        let mut buf = Vec::new();
        write_converge_csv(&mut buf, &exp.run_all().unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CONVERGE_HEADER.join(","));
        assert_eq!(lines.len(), 1 + 3 * 5);
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn default_eta_requires_positive_beta() {
        let cfg = RunConfig { r: 10.0, ..small() };
        assert!(matches!(
            default_eta(&cfg),
            Err(RunError::Config(ConfigError::Invalid(_)))
        ));
        assert!(Experiment::new(&RunConfig {
            eta: Some(1e-3),
            ..cfg
        })
        .is_ok());
    }

    #[test]
    fn theory_csv_lists_checks() {
        let cfg = RunConfig {
            adversary: AdversaryKind::Zero,
            byzantine_slots: Some(vec![0]),
            f: 2,
            ..small()
        };
        let report = theory_report(&cfg).unwrap();
        assert_eq!(report.actual.as_ref().unwrap().0, 1);
        let mut buf = Vec::new();
        write_theory_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,value\n"));
        assert!(text.contains("\nbeta,"));
        assert!(text.contains("\nactual.beta,"));
        assert!(text.contains("check:n > 2f,pass"));
    }

    #[test]
    fn sweep_marks_domain_errors() {
        let mut cfg = RunConfig::default();
        cfg.sweep.axis = SweepAxis::X;
        cfg.sweep.start = 0.0;
        cfg.sweep.end = 0.3;
        cfg.sweep.points = 4;
        let rows = sweep(&cfg, false).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].status(), "ok");
        assert_eq!(rows[3].status(), "domain_error");
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, SweepAxis::X, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().last().unwrap().contains(",domain_error,"));
    }

    #[test]
    fn empirical_sweep_attaches_ratios() {
        let mut cfg = RunConfig {
            n: 20,
            f: 1,
            d: 10,
            rounds: 3,
            ..RunConfig::default()
        };
        cfg.sweep.start = 0.0;
        cfg.sweep.end = 0.01;
        cfg.sweep.points = 2;
        let rows = sweep(&cfg, true).unwrap();
        for row in rows {
            let ratio = row.empirical_ratio.unwrap();
            assert!(ratio > 0.0 && ratio <= 1.0, "{ratio}");
        }
    }
}
