//! Independent reference computations used by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uso_core::trading::{
    issue_obligations, Assignment, CompletionReport, IssueConfig, Ledger, Milestone, PenaltyRouting, SimConfig,
    TradePolicy,
};

/// OLS through the raw (uncentred) normal equations, solved by Cramer's rule.
pub struct NormalEquationsFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub t_intercept: f64,
    pub t_slope: f64,
}

pub fn normal_equations(xs: &[f64], ys: &[f64]) -> NormalEquationsFit {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    // [n  sx ] [a]   [sy ]
    // [sx sxx] [b] = [sxy]
    let det = n * sxx - sx * sx;
    let intercept = (sy * sxx - sx * sxy) / det;
    let slope = (n * sxy - sx * sy) / det;

    let mean_y = sy / n;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let s2 = sse / (n - 2.0);
    // diag of s² (XᵀX)⁻¹
    let var_a = s2 * sxx / det;
    let var_b = s2 * n / det;
    NormalEquationsFit {
        intercept,
        slope,
        r_squared: 1.0 - sse / sst,
        t_intercept: intercept / var_a.sqrt(),
        t_slope: slope / var_b.sqrt(),
    }
}

/// Present value of 1 per year for `lifetime` years, summed term by term.
pub fn annuity_pv(rate: f64, lifetime: u32) -> f64 {
    let mut pv = 0.0;
    let mut discount = 1.0;
    for _ in 0..lifetime {
        discount /= 1.0 + rate;
        pv += discount;
    }
    pv
}

/// Every ordering of `items`.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Completion-cost sequence of length `k` whose prefix sums are all minimal,
/// found by enumerating every ordering of the milestones.
pub fn min_prefix_cost_sequence(costs: &[f64], k: usize) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    for perm in permutations(costs) {
        let prefix: Vec<f64> = perm[..k].to_vec();
        let better = match &best {
            None => true,
            Some(b) => {
                let (mut sa, mut sb) = (0.0, 0.0);
                let mut verdict = None;
                for (x, y) in prefix.iter().zip(b) {
                    sa += x;
                    sb += y;
                    if sa != sb {
                        verdict = Some(sa < sb);
                        break;
                    }
                }
                verdict.unwrap_or(false)
            }
        };
        if better {
            best = Some(prefix);
        }
    }
    best.unwrap_or_default()
}

/// Bundled exchange table (density, cost per line) pairs, typed in independently of the fixture file.
pub const TABLE3_DENSITY_COST: [(f64, f64); 10] = [
    (2.8, 20.8),
    (3.9, 20.3),
    (4.4, 15.6),
    (5.3, 13.9),
    (15.7, 9.3),
    (10.9, 12.8),
    (7.0, 11.9),
    (43.6, 5.9),
    (25.4, 9.6),
    (24.8, 6.5),
];

/// Double-log OLS on the exchange table evaluated in 40-digit arithmetic, rounded to f64.
pub mod table3_fit {
    pub const INTERCEPT: f64 = 3.464_711_933_188_665_7;
    pub const SLOPE: f64 = -0.440_190_735_071_579_33;
    pub const R_SQUARED: f64 = 0.907_432_502_456_217_7;
    pub const T_INTERCEPT: f64 = 28.458_740_745_212_831;
    pub const T_SLOPE: f64 = -8.855_700_031_065_366;
}

/// Freshly issued ledger with 2-4 operators and up to 6 milestones.
pub fn random_ledger(rng: &mut ChaCha8Rng) -> (Ledger, Vec<String>) {
    let n_ops = rng.random_range(2..=4);
    let ops: Vec<String> = (0..n_ops).map(|i| format!("op{i}")).collect();
    let n_ms = rng.random_range(1..=6);
    let milestones = (0..n_ms)
        .map(|i| {
            let mut costs = BTreeMap::new();
            for op in &ops {
                if rng.random_bool(0.7) {
                    costs.insert(op.clone(), rng.random_range(1..=9) as f64);
                }
            }
            if costs.is_empty() {
                costs.insert(ops[0].clone(), 5.0);
            }
            Milestone {
                id: format!("m{i}"),
                task: String::new(),
                costs,
            }
        })
        .collect::<Vec<_>>();
    let cfg = IssueConfig {
        commitments: rng.random_range(1..=n_ms),
        milestones,
        due_period: rng.random_range(0..4),
        assignment: if rng.random_bool(0.5) {
            Assignment::RoundRobin
        } else {
            Assignment::SeededRandom
        },
        enforce_milestone_surplus: true,
        seed: rng.random(),
    };
    (issue_obligations(&cfg, &ops).unwrap(), ops)
}

/// Applies `steps` random operations, valid or not. Failed operations must
/// leave the ledger untouched.
pub fn drive(ledger: &mut Ledger, ops: &[String], routing: PenaltyRouting, steps: usize, rng: &mut ChaCha8Rng) {
    let commitments: Vec<String> = ledger.commitments().map(|c| c.id.clone()).collect();
    let milestones: Vec<String> = ledger.milestones().map(|m| m.milestone.id.clone()).collect();
    let policy = TradePolicy {
        anti_speculation_window: rng.random_bool(0.5).then(|| rng.random_range(1..4)),
    };
    for _ in 0..steps {
        let before = ledger.clone();
        let ok = if rng.random_bool(0.6) {
            let c = commitments.choose(rng).unwrap();
            let owner = ledger.commitment(c).unwrap().owner.clone();
            let from = if rng.random_bool(0.8) { owner } else { ops.choose(rng).unwrap().clone() };
            let to = ops.choose(rng).unwrap();
            let new_due = ledger.period() + rng.random_range(0..3);
            let price = rng.random_range(0..20) as f64;
            ledger.trade(c, &from, to, new_due, price, &policy).is_ok()
        } else {
            let reports: Vec<CompletionReport> = (0..rng.random_range(0..3))
                .map(|_| CompletionReport {
                    commitment_id: commitments.choose(rng).unwrap().clone(),
                    milestone_id: milestones.choose(rng).unwrap().clone(),
                })
                .collect();
            let period = if rng.random_bool(0.9) { ledger.period() } else { ledger.period() + 1 };
            ledger.settle_period(period, &reports, 10.0, routing).is_ok()
        };
        if !ok {
            assert_eq!(*ledger, before, "failed operation modified the ledger");
        }
    }
}

/// One greedy operator with capacity 1 and a period per commitment.
pub fn single_greedy(costs: &[f64], commitments: usize) -> SimConfig {
    let milestones: Vec<_> = costs
        .iter()
        .enumerate()
        .map(|(i, c)| serde_json::json!({ "id": format!("m{i}"), "costs": { "op": c } }))
        .collect();
    serde_json::from_value(serde_json::json!({
        "milestones": milestones,
        "operators": [{ "id": "op", "budget": 1000.0, "strategy": "greedy_least_cost", "capacity": 1 }],
        "commitments": commitments,
        "periods": commitments,
        "penalty": 50.0,
        "seed": 3
    }))
    .unwrap()
}

/// Every cost vector of length `m` over {1, 2, 3}.
pub fn cost_vectors(m: usize) -> Vec<Vec<f64>> {
    (0..3usize.pow(m as u32))
        .map(|mut k| {
            (0..m)
                .map(|_| {
                    let c = (k % 3 + 1) as f64;
                    k /= 3;
                    c
                })
                .collect()
        })
        .collect()
}
