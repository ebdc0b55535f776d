use std::collections::{HashMap, VecDeque};

use proptest::prelude::*;
use pracsim::dram::{act_budget_per_window, acts_per_trefi};
use pracsim::queue::Observed;
use pracsim::security::{n_online, pool_sequence, secure_trh, AnalysisConfig};
use pracsim::sim::{run_pattern, ChannelState, MitigationPolicy, Proactive, RunOptions, ServiceQueue, SimEvent, TraceStep};
use pracsim::{CounterWidth, DramTimings, FifoQueue, PracParams, Psq};

#[derive(Debug, Clone)]
enum Op {
    Observe(u32, u32),
    Pop(usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        4 => (0u32..12, 0u32..20).prop_map(|(r, c)| Op::Observe(r, c)),
        1 => (1usize..4).prop_map(Op::Pop),
    ];
    prop::collection::vec(op, 0..200)
}

/// Brute-force PSQ: an unordered list, sorted only when asked.
#[derive(Default)]
struct ModelPsq {
    cap: usize,
    rows: Vec<(u32, u32, u64)>,
}

impl ModelPsq {
    fn observe(&mut self, row: u32, count: u32, seq: u64) {
        self.rows.retain(|e| !(count == 0 && e.0 == row));
        if count == 0 {
            return;
        }
        if let Some(e) = self.rows.iter_mut().find(|e| e.0 == row) {
            *e = (row, count, seq);
        } else if self.rows.len() < self.cap {
            self.rows.push((row, count, seq));
        } else {
            let min = self.rows.iter().map(|e| e.1).min().unwrap();
            if count > min {
                let stale = self.rows.iter().enumerate().filter(|(_, e)| e.1 == min).min_by_key(|(_, e)| e.2).unwrap().0;
                self.rows[stale] = (row, count, seq);
            }
        }
    }

    fn ordered(&self) -> Vec<(u32, u32)> {
        let mut v = self.rows.clone();
        v.sort_by_key(|e| (std::cmp::Reverse(e.1), e.2));
        v.into_iter().map(|e| (e.0, e.1)).collect()
    }

    fn pop(&mut self, k: usize) -> Vec<(u32, u32)> {
        let out: Vec<_> = self.ordered().into_iter().take(k).collect();
        self.rows.retain(|e| !out.iter().any(|o| o.0 == e.0));
        out
    }
}

fn tracked_and_truth(ch: &ChannelState) -> (Vec<u32>, Vec<u32>) {
    let ServiceQueue::Psq(q) = ch.bank(0).queue() else { unreachable!() };
    let mut truth: Vec<u32> = ch.bank(0).counters().into_iter().map(|(_, c)| c).filter(|&c| c > 0).collect();
    truth.sort_unstable_by(|a, b| b.cmp(a));
    (q.entries().iter().map(|e| e.count).collect(), truth)
}

fn pairs(psq: &Psq) -> Vec<(u32, u32)> {
    psq.entries().iter().map(|e| (e.row_id, e.count)).collect()
}

proptest! {
    #[test]
    fn psq_matches_brute_force(ops in ops(), cap in 1usize..7) {
        let mut psq = Psq::new(cap);
        let mut model = ModelPsq { cap, ..Default::default() };
        for (seq, op) in ops.into_iter().enumerate() {
            match op {
                Op::Observe(r, c) => {
                    psq.observe(r, c, seq as u64);
                    model.observe(r, c, seq as u64);
                }
                Op::Pop(k) => {
                    let got: Vec<_> = psq.pop_top(k).iter().map(|e| (e.row_id, e.count)).collect();
                    prop_assert_eq!(got, model.pop(k));
                }
            }
            prop_assert_eq!(pairs(&psq), model.ordered());
        }
    }

    #[test]
    fn psq_eviction_and_bypass(ops in ops(), cap in 1usize..7) {
        let mut psq = Psq::new(cap);
        for (seq, op) in ops.into_iter().enumerate() {
            let Op::Observe(r, c) = op else {
                continue;
            };
            let full_min = psq.is_full().then(|| psq.min_count()).flatten();
            let was_in = psq.contains(r);
            match psq.observe(r, c, seq as u64) {
                Observed::Evicted(victim) => prop_assert_eq!(Some(victim.count), full_min),
                Observed::Rejected => prop_assert!(c == 0 || full_min.is_some_and(|m| c <= m)),
                Observed::Inserted | Observed::Updated => {}
            }
            if full_min.is_some_and(|m| c > m) || (was_in && c > 0) {
                prop_assert!(psq.contains(r));
            }
            prop_assert!(psq.len() <= cap);
        }
    }

    #[test]
    fn fifo_keeps_accepted_order(ops in prop::collection::vec(prop_oneof![3 => (0u32..40).prop_map(Some), 1 => Just(None)], 0..200), cap in 1usize..8) {
        let mut q = FifoQueue::new(cap);
        let mut model = VecDeque::new();
        for op in ops {
            match op {
                Some(r) => {
                    let accepted = q.offer(r);
                    prop_assert_eq!(accepted, model.len() < cap);
                    if accepted {
                        model.push_back(r);
                    }
                }
                None => prop_assert_eq!(q.pop_front(), model.pop_front()),
            }
            prop_assert_eq!(q.iter().collect::<Vec<_>>(), model.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn psq_holds_top_rows_before_any_mitigation(n in 6u32..40, extra in 1u32..8, rounds in 1u32..12) {
        let p = PracParams::new(rounds + extra, 1).unwrap();
        let mut ch = ChannelState::new(p, DramTimings::default(), MitigationPolicy::qprac(&p), CounterWidth::default()).unwrap();
        let round: Vec<TraceStep> = (0..n).map(|k| TraceStep::Act { bank: 0, row: 10 + 5 * k }).collect();
        for _ in 0..rounds {
            run_pattern(&mut ch, &round, RunOptions { auto_refresh: false, ..RunOptions::default() }).unwrap();
            let (tracked, truth) = tracked_and_truth(&ch);
            prop_assert_eq!(&tracked[..], &truth[..tracked.len()]);
            prop_assert_eq!(tracked.len(), truth.len().min(5));
        }
    }

    #[test]
    fn psq_entries_match_true_counts(n in 6u32..40, n_bo in 1u32..8, n_mit in prop::sample::select(vec![1u32, 2, 4]), rounds in 1usize..12) {
        let p = PracParams::new(n_bo, n_mit).unwrap();
        let mut ch = ChannelState::new(p, DramTimings::default(), MitigationPolicy::qprac(&p), CounterWidth::default()).unwrap();
        let round: Vec<TraceStep> = (0..n).map(|k| TraceStep::Act { bank: 0, row: 10 + 5 * k }).collect();
        for _ in 0..rounds {
            run_pattern(&mut ch, &round, RunOptions { auto_refresh: false, ..RunOptions::default() }).unwrap();
            let ServiceQueue::Psq(q) = ch.bank(0).queue() else { unreachable!() };
            for e in q.entries() {
                prop_assert_eq!(e.count, ch.count(0, e.row_id));
            }
        }
    }

    #[test]
    fn counters_only_move_by_known_steps(pattern in prop::collection::vec((0u32..24, 0usize..3, 0u8..40), 1..400), n_mit in prop::sample::select(vec![1u32, 2, 4])) {
        let p = PracParams::new(8, n_mit).unwrap();
        let policy = MitigationPolicy::qprac(&p).with_proactive(Proactive::EveryRef);
        let mut ch = ChannelState::new(p, DramTimings::default(), policy, CounterWidth::default()).unwrap();
        let mut model: HashMap<(usize, u32), u32> = HashMap::new();
        for (row, bank, roll) in pattern {
            let events = if roll == 0 {
                ch.refresh_tick().unwrap()
            } else if ch.window_remaining() == Some(0) {
                ch.service_alert().unwrap()
            } else {
                *model.entry((bank, row)).or_default() += 1;
                ch.activate(bank, row).unwrap()
            };
            for e in events {
                match e {
                    SimEvent::Mitigated { bank, row, .. } => {
                        model.remove(&(bank, row));
                    }
                    SimEvent::VictimRefreshed { bank, row, count } => {
                        let c = model.entry((bank, row)).or_default();
                        *c += 1;
                        prop_assert_eq!(*c, count);
                    }
                    _ => {}
                }
            }
            for b in 0..3 {
                for (r, c) in ch.bank(b).counters() {
                    prop_assert_eq!(model.get(&(b, r)).copied().unwrap_or(0), c);
                }
            }
        }
    }

    #[test]
    fn identical_runs_identical_stats(pattern in prop::collection::vec((0u32..30, 0usize..4), 1..600), n_bo in 1u32..16) {
        let p = PracParams::new(n_bo, 2).unwrap();
        let steps: Vec<TraceStep> = pattern.into_iter().map(|(row, bank)| TraceStep::Act { bank, row }).collect();
        let run = || {
            let mut ch = ChannelState::new(p, DramTimings::default(), MitigationPolicy::qprac(&p), CounterWidth::default()).unwrap();
            run_pattern(&mut ch, &steps, RunOptions::default()).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn proactive_alerts_bounded_by_its_mitigations(k in 1u32..12, reps in 200usize..3000, n_bo in 8u32..64, n_mit in prop::sample::select(vec![1u32, 2, 4])) {
        let p = PracParams::new(n_bo, n_mit).unwrap();
        let steps: Vec<TraceStep> = (0..reps).map(|i| TraceStep::Act { bank: 0, row: 7 * (i as u32 % k) }).collect();
        let run = |proactive| {
            let policy = MitigationPolicy::qprac(&p).with_proactive(proactive);
            let mut ch = ChannelState::new(p, DramTimings::default(), policy, CounterWidth::default()).unwrap();
            run_pattern(&mut ch, &steps, RunOptions::default()).unwrap()
        };
        let (on, off) = (run(Proactive::EveryRef), run(Proactive::Off));
        prop_assert!(on.alerts <= off.alerts + on.mitigations_by_kind.proactive);
    }

    #[test]
    fn budget_is_consistent(t_refi in 1_000u64..10_000, rfc_frac in 1u64..50, t_rc in 20u64..120, windows in 1u64..40) {
        let t = DramTimings { t_refi, t_rfc: t_refi * rfc_frac / 100, t_rc, t_refw: t_refi * windows, ..DramTimings::default() };
        prop_assert!(acts_per_trefi(&t) * t.refs_per_window() <= act_budget_per_window(&t) + acts_per_trefi(&t));
        let longer = DramTimings { t_refw: t.t_refw + t_refi, ..t };
        prop_assert!(act_budget_per_window(&longer) >= act_budget_per_window(&t));
        let slower = DramTimings { t_rc: t_rc + 1, ..t };
        prop_assert!(act_budget_per_window(&slower) <= act_budget_per_window(&t));
        prop_assert!(acts_per_trefi(&slower) <= acts_per_trefi(&t));
    }

    #[test]
    fn online_bound_monotone_in_pool(r1 in 1u64..131_072, step in 1u64..5_000, n_mit in prop::sample::select(vec![1u32, 2, 4])) {
        let cfg = AnalysisConfig::prac(n_mit).unwrap();
        prop_assert!(n_online(r1, &cfg).unwrap() <= n_online(r1 + step, &cfg).unwrap());
    }

    #[test]
    fn pool_shrinks_every_round(r1 in 6u64..131_072, n_mit in prop::sample::select(vec![1u32, 2, 4])) {
        let p = PracParams::new(1, n_mit).unwrap();
        let seq = pool_sequence(r1, &p, |_| 0).unwrap();
        prop_assert!(seq.pools.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn secure_trh_monotone_and_proactive_dominates() {
    for n_mit in [1, 2, 4] {
        let off = AnalysisConfig::prac(n_mit).unwrap();
        let on = off.with_proactive(true);
        let mut prev = 0;
        for n_bo in 1..=256 {
            let a = secure_trh(n_bo, &off).unwrap();
            assert!(a >= prev, "n_mit {n_mit} n_bo {n_bo}");
            assert!(secure_trh(n_bo, &on).unwrap() <= a, "n_mit {n_mit} n_bo {n_bo}");
            prev = a;
        }
    }
}

/// After a mitigation, freed slots can go to fresh victims while rejected
/// ties stay untracked: the queue keeps the maximum but not the full top set.
#[test]
fn psq_top_set_drifts_after_mitigation() {
    let p = PracParams::new(2, 2).unwrap();
    let mut ch = ChannelState::new(p, DramTimings::default(), MitigationPolicy::qprac(&p), CounterWidth::default()).unwrap();
    let mut live: Vec<u32> = (0..10).map(|k| 10 + 5 * k).collect();
    let mut drifted = false;
    for _ in 0..4 {
        let mut dropped = Vec::new();
        for &row in &live {
            if dropped.contains(&row) {
                continue;
            }
            if ch.window_remaining() == Some(0) {
                for e in ch.service_alert().unwrap() {
                    if let SimEvent::Mitigated { row, .. } = e {
                        dropped.push(row);
                    }
                }
            }
            ch.activate(0, row).unwrap();
        }
        live.retain(|r| !dropped.contains(r));
        let (tracked, truth) = tracked_and_truth(&ch);
        assert_eq!(tracked.first(), truth.first());
        drifted |= tracked[..] != truth[..tracked.len()];
    }
    assert!(drifted);
}
