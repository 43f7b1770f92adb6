use echo_cgc::accounting::message_bits;
use echo_cgc::config::RunConfig;
use echo_cgc::geometry::DenseVector;
use echo_cgc::protocol::{
    cgc_apply, AdversaryKind, Message, RoundOutcome, ServerSlotTable, WorkerState,
};
use echo_cgc::runner::Experiment;
use proptest::prelude::*;

fn outcomes(cfg: &RunConfig) -> Vec<RoundOutcome> {
    let exp = Experiment::new(cfg).unwrap();
    let mut sim = exp.simulation(0).unwrap();
    (0..cfg.rounds).map(|_| sim.step().unwrap()).collect()
}

fn config(n: usize, d: usize, sigma: f64, r: f64, seed: u64) -> RunConfig {
    RunConfig {
        n,
        f: 0,
        d,
        sigma,
        r,
        eta: Some(0.5 / n as f64),
        rounds: 4,
        seed,
        ..RunConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn echoes_preserve_norm_and_pass_the_send_check(
        n in 2usize..30, d in 1usize..12, sigma in 0.0..0.3f64, r in 0.05..1.0f64, seed in any::<u64>(),
    ) {
        for out in outcomes(&config(n, d, sigma, r, seed)) {
            for (j, msg) in out.transcript.iter().enumerate() {
                let (Some(echo), Some(g)) = (msg.as_echo(), &out.local_gradients[j]) else { continue };
                let rebuilt = &out.received[j];
                prop_assert!((rebuilt.norm() - g.norm()).abs() <= 1e-9 * g.norm());
                let projected = rebuilt.scaled(1.0 / echo.ratio);
                prop_assert!(projected.distance(g) <= r * g.norm() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn every_party_sees_the_same_transcript(
        n in 2usize..25, d in 1usize..10, sigma in 0.0..0.3f64, r in 0.05..1.0f64, seed in any::<u64>(),
    ) {
        let mut cfg = config(n, d, sigma, r, seed);
        if n >= 5 {
            cfg.f = 2;
            cfg.adversary = AdversaryKind::WithinThreshold { scale: 0.5 };
            cfg.byzantine_slots = Some(vec![1, n - 1]);
        }
        for out in outcomes(&cfg) {
            // each fault-free worker, replaying what it overheard, sends
            // exactly the recorded message
            for (j, g) in out.local_gradients.iter().enumerate() {
                let Some(g) = g else { continue };
                let mut worker = WorkerState::new(j, g.clone());
                for (i, msg) in out.transcript[..j].iter().enumerate() {
                    worker.overhear(i, msg).unwrap();
                }
                prop_assert_eq!(&worker.slot_action(r), &out.transcript[j]);
            }
            // the server, fed the same transcript, rebuilds the same table
            let mut table = ServerSlotTable::new(n, d);
            for (i, msg) in out.transcript.iter().enumerate() {
                table.receive(i, msg).unwrap();
            }
            prop_assert_eq!(&table.finalize().gradients, &out.received);
        }
    }

    #[test]
    fn bits_sent_is_the_sum_of_message_sizes(
        n in 1usize..30, d in 1usize..50, sigma in 0.0..0.2f64, seed in any::<u64>(),
    ) {
        let cfg = config(n, d, sigma, 0.5, seed);
        let model = *Experiment::new(&cfg).unwrap().cost_model();
        for out in outcomes(&cfg) {
            let total: u64 = out.transcript.iter().map(|m| message_bits(&model, m, d)).sum();
            prop_assert_eq!(out.metrics.bits_sent, total);
            prop_assert_eq!(out.metrics.messages(), n);
        }
    }

    #[test]
    fn echo_count_is_at_least_ball_count_minus_one(
        n in 2usize..40, d in 1usize..20, sigma in 0.0..0.2f64, r in 0.05..1.0f64, seed in any::<u64>(),
    ) {
        for out in outcomes(&config(n, d, sigma, r, seed)) {
            prop_assert!(out.metrics.echo_count + 1 >= out.metrics.ball_count);
        }
    }

    #[test]
    fn cgc_clips_only_the_largest(
        raw in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 3), 1..20),
        f_frac in 0.0..0.5f64,
    ) {
        let n = raw.len();
        let f = ((n as f64 * f_frac) as usize).min((n - 1) / 2);
        let input: Vec<DenseVector> = raw.into_iter().map(|v| DenseVector::new(v).unwrap()).collect();
        let out = cgc_apply(&input, f);
        for g in &out.gradients {
            prop_assert!(g.norm() <= out.threshold * (1.0 + 1e-12));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| input[a].norm().total_cmp(&input[b].norm()).then(a.cmp(&b)));
        for &i in &order[..n - f] {
            prop_assert_eq!(&out.gradients[i], &input[i]);
        }
        prop_assert_eq!(out.threshold, input[order[n - f - 1]].norm());
    }
}

#[test]
fn large_norm_vectors_are_clipped_to_the_threshold() {
    let cfg = RunConfig {
        n: 20,
        f: 2,
        d: 5,
        adversary: AdversaryKind::LargeNorm { scale: 1e3 },
        ..config(20, 5, 0.05, 0.1, 1)
    };
    for out in outcomes(&cfg) {
        for id in cfg.byzantine_ids() {
            assert!((out.filtered[id].norm() - out.threshold).abs() <= 1e-12 * out.threshold);
        }
    }
}

#[test]
fn bogus_echoes_are_detected_every_round() {
    let cfg = RunConfig {
        n: 10,
        f: 2,
        d: 4,
        adversary: AdversaryKind::BogusEchoMissingId,
        byzantine_slots: Some(vec![2, 5]),
        rounds: 10,
        ..config(10, 4, 0.05, 0.1, 2)
    };
    for out in outcomes(&cfg) {
        assert_eq!(
            out.metrics.detections.iter().copied().collect::<Vec<_>>(),
            vec![2, 5]
        );
        assert!(out.received[2].is_zero() && out.received[5].is_zero());
        assert!(matches!(out.transcript[2], Message::Echo(_)));
    }
}
