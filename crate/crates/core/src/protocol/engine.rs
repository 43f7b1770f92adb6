use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    cgc_apply, slot_message, Adversary, Message, ProtocolError, RoundContext, ServerSlotTable,
};
use crate::accounting::{message_bits, CostModel, RoundMetrics};
use crate::cost::{NoiseModel, QuadraticCost};
use crate::geometry::{in_ball, DenseVector, GeometryError, GradientBasis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub n: usize,
    pub f: usize,
    /// Deviation ratio of the send check.
    pub r: f64,
    /// Step size.
    pub eta: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let invalid = |m: String| Err(ProtocolError::Invalid(m));
        if self.n == 0 {
            return invalid("need at least one worker".into());
        }
        if self.n <= 2 * self.f {
            return invalid(format!("need n > 2f (n = {}, f = {})", self.n, self.f));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return invalid(format!("deviation ratio must be positive, got {}", self.r));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return invalid(format!("step size must be positive, got {}", self.eta));
        }
        Ok(())
    }
}

/// Everything a round reads but never changes.
#[derive(Debug, Clone, Copy)]
pub struct RoundEnv<'a> {
    pub params: ProtocolParams,
    pub cost: &'a QuadraticCost,
    pub noise: &'a NoiseModel,
    pub adversary: &'a Adversary,
    pub cost_model: CostModel,
}

impl RoundEnv<'_> {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.params.validate()?;
        self.adversary.validate(self.params.n, self.params.f)
    }
}

/// Private random streams: one per worker for its data batches and one
/// for the adversary.
#[derive(Debug, Clone)]
pub struct RoundRngs {
    pub workers: Vec<ChaCha8Rng>,
    pub adversary: ChaCha8Rng,
}

impl RoundRngs {
    /// Derives all streams from a single generator.
    pub fn derive<R: Rng + ?Sized>(n: usize, source: &mut R) -> Self {
        let workers = (0..n)
            .map(|_| ChaCha8Rng::seed_from_u64(source.random()))
            .collect();
        let adversary = ChaCha8Rng::seed_from_u64(source.random());
        Self { workers, adversary }
    }
}

/// Full record of one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub next: DenseVector,
    pub metrics: RoundMetrics,
    pub true_gradient: DenseVector,
    /// Sampled gradients of fault-free workers, `None` for Byzantine ones.
    pub local_gradients: Vec<Option<DenseVector>>,
    /// Message sent in each slot, as delivered to everyone.
    pub transcript: Vec<Message>,
    /// `G` after the communication phase.
    pub received: Vec<DenseVector>,
    /// `G` after the CGC filter.
    pub filtered: Vec<DenseVector>,
    pub threshold: f64,
}

/// Runs one synchronous round from parameter `w`.
///
/// Computation: each fault-free worker samples a gradient at `w`.
/// Communication: slots `0..n` in order; each message goes to the server
/// and every later worker. Aggregation: CGC filter, then
/// `w ← w − η Σ ĝ_j`.
pub fn run_round(
    env: &RoundEnv<'_>,
    w: &DenseVector,
    round: usize,
    rngs: &mut RoundRngs,
) -> Result<RoundOutcome, ProtocolError> {
    env.validate()?;
    let ProtocolParams { n, f, r, eta } = env.params;
    if rngs.workers.len() != n {
        return Err(ProtocolError::Invalid(format!(
            "{} worker streams for {n} workers",
            rngs.workers.len()
        )));
    }
    let d = env.cost.dim();
    let true_gradient = env.cost.true_gradient(w)?;

    let local_gradients: Vec<Option<DenseVector>> = rngs
        .workers
        .iter_mut()
        .enumerate()
        .map(|(j, rng)| {
            (!env.adversary.is_byzantine(j)).then(|| env.noise.perturb(&true_gradient, rng))
        })
        .collect();
    // Every worker overhears the same broadcasts, so the basis of the
    // worker in slot j is exactly the one built from raw messages in slots
    // before j. A single incremental basis serves all of them.
    let mut heard = GradientBasis::new(d);

    let mut table = ServerSlotTable::new(n, d);
    let mut transcript = Vec::with_capacity(n);
    let (mut bits_sent, mut echo_count) = (0u64, 0usize);

    for slot in 0..n {
        let msg = match &local_gradients[slot] {
            Some(g) => slot_message(&heard, g, r),
            None => {
                let ctx = RoundContext {
                    round,
                    w,
                    true_gradient: &true_gradient,
                    honest_gradients: &local_gradients,
                    table: &table,
                };
                env.adversary.message(slot, &ctx, &mut rngs.adversary)
            }
        };
        bits_sent += message_bits(&env.cost_model, &msg, d);
        echo_count += usize::from(msg.is_echo());
        table.receive(slot, &msg)?;
        if let Message::Raw(g) = &msg {
            if g.dim() == d {
                heard.insert(slot, g.clone())?;
            }
        }
        transcript.push(msg);
    }

    let outcome = table.finalize();
    let cgc = cgc_apply(&outcome.gradients, f);
    let mut next = w.clone();
    for g in &cgc.gradients {
        next.axpy(-eta, g);
    }
    if let Some((index, &value)) = next.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GeometryError::NonFinite { index, value }.into());
    }

    let optimum = env.cost.optimum();
    let ball_count = local_gradients
        .iter()
        .flatten()
        .filter(|g| in_ball(g, &true_gradient, r))
        .count();
    let metrics = RoundMetrics {
        round_index: round,
        bits_sent,
        echo_count,
        raw_count: n - echo_count,
        ball_count,
        detections: outcome.detected,
        distance_sq: w.distance_sq(optimum),
        next_distance_sq: next.distance_sq(optimum),
    };
    Ok(RoundOutcome {
        next,
        metrics,
        true_gradient,
        local_gradients,
        transcript,
        received: outcome.gradients,
        filtered: cgc.gradients,
        threshold: cgc.threshold,
    })
}

/// A running simulation: owns the problem, the parameter and the streams.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ProtocolParams,
    cost: QuadraticCost,
    noise: NoiseModel,
    adversary: Adversary,
    cost_model: CostModel,
    w: DenseVector,
    round: usize,
    rngs: RoundRngs,
}

impl Simulation {
    pub fn new(
        params: ProtocolParams,
        cost: QuadraticCost,
        noise: NoiseModel,
        adversary: Adversary,
        w0: DenseVector,
        rngs: RoundRngs,
    ) -> Result<Self, ProtocolError> {
        w0.check_dim(cost.dim())?;
        let sim = Self {
            params,
            cost_model: CostModel::for_workers(params.n),
            cost,
            noise,
            adversary,
            w: w0,
            round: 0,
            rngs,
        };
        sim.env().validate()?;
        if sim.rngs.workers.len() != params.n {
            return Err(ProtocolError::Invalid(
                "one random stream per worker required".into(),
            ));
        }
        Ok(sim)
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    fn env(&self) -> RoundEnv<'_> {
        RoundEnv {
            params: self.params,
            cost: &self.cost,
            noise: &self.noise,
            adversary: &self.adversary,
            cost_model: self.cost_model,
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn cost(&self) -> &QuadraticCost {
        &self.cost
    }

    pub fn adversary(&self) -> &Adversary {
        &self.adversary
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    pub fn w(&self) -> &DenseVector {
        &self.w
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn distance_sq(&self) -> f64 {
        self.w.distance_sq(self.cost.optimum())
    }

    /// Runs the next round and advances the parameter.
    pub fn step(&mut self) -> Result<RoundOutcome, ProtocolError> {
        let env = RoundEnv {
            params: self.params,
            cost: &self.cost,
            noise: &self.noise,
            adversary: &self.adversary,
            cost_model: self.cost_model,
        };
        let outcome = run_round(&env, &self.w, self.round, &mut self.rngs)?;
        self.w = outcome.next.clone();
        self.round += 1;
        Ok(outcome)
    }

    /// Runs `rounds` rounds keeping only the metrics.
    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundMetrics>, ProtocolError> {
        (0..rounds)
            .map(|_| self.step().map(|o| o.metrics))
            .collect()
    }
}
