//! Return estimators against brute-force oracles written from their
//! definitions.

use po_suite_core::ppo::{discounted_returns, lambda_return, nstep_returns, SegmentEnd};
use po_suite_core::replay::{nstep_return, ReplayBuffer, Transition};
use proptest::prelude::*;

/// `G_t^(n)`: n rewards then the value of the state reached, or the full
/// remainder when the segment ends first.
fn oracle_nstep(rewards: &[f64], values: &[f64], gamma: f64, t: usize, n: usize, end: SegmentEnd) -> f64 {
    let len = rewards.len();
    let stop = (t + n).min(len);
    let mut g = 0.0;
    for (i, r) in rewards[t..stop].iter().enumerate() {
        g += gamma.powi(i as i32) * r;
    }
    let tail = if stop < len { values[stop] } else { end.value() };
    g + gamma.powi((stop - t) as i32) * tail
}

/// The λ-weighted average of every n-step return, as a direct sum.
fn oracle_lambda(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64, end: SegmentEnd) -> Vec<f64> {
    let len = rewards.len();
    (0..len)
        .map(|t| {
            let h = len - t;
            let mut total = 0.0;
            for n in 1..h {
                total += (1.0 - lambda) * lambda.powi(n as i32 - 1) * oracle_nstep(rewards, values, gamma, t, n, end);
            }
            total + lambda.powi(h as i32 - 1) * oracle_nstep(rewards, values, gamma, t, h, end)
        })
        .collect()
}

fn coefficient_sum(lambda: f64, h: usize) -> f64 {
    let mut s = 0.0;
    for n in 1..h {
        s += (1.0 - lambda) * lambda.powi(n as i32 - 1);
    }
    s + lambda.powi(h as i32 - 1)
}

#[test]
fn lambda_weights_sum_to_one() {
    for lambda in [0.0, 0.25, 0.5, 0.9, 0.97, 1.0] {
        for h in 1..=100 {
            let s = coefficient_sum(lambda, h);
            assert!((s - 1.0).abs() <= 1e-12, "λ={lambda} h={h}: {s}");
        }
    }
}

fn segment() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64, SegmentEnd)> {
    (1usize..=10)
        .prop_flat_map(|len| {
            (
                prop::collection::vec(-1.0f64..1.0, len),
                prop::collection::vec(-5.0f64..5.0, len),
                0.5f64..1.0,
                0.0f64..=1.0,
                prop_oneof![Just(None), (-5.0f64..5.0).prop_map(Some)],
            )
        })
        .prop_map(|(r, v, g, l, e)| {
            let end = e.map_or(SegmentEnd::Terminal, SegmentEnd::Bootstrap);
            (r, v, g, l, end)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lambda_return_matches_weighted_nstep_sum((r, v, g, l, end) in segment()) {
        let fast = lambda_return(&r, &v, g, l, end);
        let slow = oracle_lambda(&r, &v, g, l, end);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn lambda_advantage_is_discounted_td_error_sum((r, v, g, l, end) in segment()) {
        let ret = lambda_return(&r, &v, g, l, end);
        let len = r.len();
        let value_at = |k: usize| if k < len { v[k] } else { end.value() };
        let delta: Vec<f64> = (0..len).map(|k| r[k] + g * value_at(k + 1) - v[k]).collect();
        for t in 0..len {
            let mut s = 0.0;
            for l_ in 0..len - t {
                s += (g * l).powi(l_ as i32) * delta[t + l_];
            }
            prop_assert!((ret[t] - v[t] - s).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_horizon_returns_match_oracle((r, v, g, _l, end) in segment(), n in 1usize..12) {
        let fast = nstep_returns(&r, &v, g, n, end);
        for (t, a) in fast.iter().enumerate() {
            prop_assert!((a - oracle_nstep(&r, &v, g, t, n, end)).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_limits((r, v, g, _l, end) in segment()) {
        // λ = 1: full-horizon return; λ = 0: one-step TD target.
        let full = lambda_return(&r, &v, g, 1.0, end);
        let mc = discounted_returns(&r, g, end);
        let one = lambda_return(&r, &v, g, 0.0, end);
        let td = nstep_returns(&r, &v, g, 1, end);
        for t in 0..r.len() {
            prop_assert!((full[t] - mc[t]).abs() < 1e-12);
            prop_assert!((one[t] - td[t]).abs() < 1e-12);
        }
    }
}

/// One synthetic episode for the replay test: rewards, a value per visited
/// state (one more than rewards) and how it ended.
#[derive(Debug, Clone)]
struct Episode {
    rewards: Vec<f64>,
    values: Vec<f64>,
    terminal: bool,
}

fn episodes() -> impl Strategy<Value = Vec<Episode>> {
    let ep = (1usize..=20).prop_flat_map(|len| {
        (
            prop::collection::vec(-1.0f64..1.0, len),
            prop::collection::vec(-5.0f64..5.0, len + 1),
            any::<bool>(),
        )
            .prop_map(|(rewards, values, terminal)| Episode {
                rewards,
                values,
                terminal,
            })
    });
    prop::collection::vec(ep, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Every stored window, for horizons 1..=6, against a plain discounted
    /// sum that stops at the episode boundary.
    #[test]
    fn replay_windows_match_discounted_sum(eps in episodes(), gamma in 0.5f64..1.0) {
        // Observation = a unique state id, so the bootstrap value is a lookup.
        let mut table = Vec::new();
        let mut buf = ReplayBuffer::new(4096, 1, 1);
        let mut starts = Vec::new();
        for ep in &eps {
            let base = table.len();
            table.extend_from_slice(&ep.values);
            let len = ep.rewards.len();
            for t in 0..len {
                starts.push((base, t));
                buf.store(&Transition {
                    obs: vec![(base + t) as f64],
                    action: vec![0.0],
                    reward: ep.rewards[t],
                    next_obs: vec![(base + t + 1) as f64],
                    terminal: ep.terminal && t + 1 == len,
                    truncated: !ep.terminal && t + 1 == len,
                })
                .unwrap();
            }
        }
        let mut k = 0;
        for ep in &eps {
            let len = ep.rewards.len();
            for t in 0..len {
                for n in 1..=6 {
                    let w = buf.window(buf.slot(k), n);
                    let id = w.next_obs[0] as usize;
                    let got = nstep_return(&w.rewards, gamma, table[id], w.terminal);
                    let m = n.min(len - t);
                    let mut want = 0.0;
                    for i in 0..m {
                        want += gamma.powi(i as i32) * ep.rewards[t + i];
                    }
                    if !(ep.terminal && t + m == len) {
                        want += gamma.powi(m as i32) * ep.values[t + m];
                    }
                    prop_assert_eq!(w.rewards.len(), m);
                    prop_assert_eq!(id, starts[k].0 + t + m);
                    prop_assert!((got - want).abs() <= 1e-12, "t={} n={} {} vs {}", t, n, got, want);
                }
                k += 1;
            }
        }
    }
}
