//! Period-by-period simulation of operators working off their obligations.
//!
//! Each period runs three phases:
//!
//! 1. **act**: Operators, in a seeded random order, plan completions.
//!    Greedy operators take their cheapest affordable open milestones up to
//!    capacity; scripted operators replay their script.
//! 2. **trade**: Commitments due this period that their owner will not meet
//!    are offered to other operators. The seller will pay up to the penalty it
//!    would otherwise face; a buyer asks for its own completion cost (zero for
//!    a pass-through trader). The cheapest ask wins if it does not exceed the
//!    bid, and the price is the midpoint.
//! 3. **settle**: The ledger records completions, defaults and penalties.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ledger::{issue_obligations, Assignment, CompletionReport, IssueConfig, Ledger, PenaltyRouting, TradePolicy};
use super::{CommitmentId, Event, Milestone, MilestoneId, OperatorId};
use crate::error::{Error, Result, TradingError};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GreedyLeastCost,
    PassThrough,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScriptedAction {
    Complete {
        period: u32,
        commitment: CommitmentId,
        milestone: MilestoneId,
    },
    Sell {
        period: u32,
        commitment: CommitmentId,
        to: OperatorId,
        new_due: u32,
        price: f64,
    },
}

impl ScriptedAction {
    fn period(&self) -> u32 {
        match self {
            ScriptedAction::Complete { period, .. } | ScriptedAction::Sell { period, .. } => *period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub id: OperatorId,
    pub budget: f64,
    pub strategy: Strategy,
    /// Milestones the operator can complete per period.
    pub capacity: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptedAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntiSpeculation {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_window")]
    pub window: u32,
}

fn yes() -> bool {
    true
}

fn default_window() -> u32 {
    3
}

impl Default for AntiSpeculation {
    fn default() -> Self {
        AntiSpeculation {
            enabled: true,
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub milestones: Vec<Milestone>,
    pub operators: Vec<OperatorConfig>,
    pub commitments: usize,
    /// Due period of every issued commitment; defaults to the last simulated period.
    #[serde(default)]
    pub due_period: Option<u32>,
    #[serde(default)]
    pub assignment: Assignment,
    pub periods: u32,
    pub penalty: f64,
    pub seed: u64,
    #[serde(default)]
    pub routing: PenaltyRouting,
    #[serde(default)]
    pub anti_speculation: AntiSpeculation,
    #[serde(default = "yes")]
    pub enforce_milestone_surplus: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), TradingError> {
        let mut ids = BTreeSet::new();
        for op in &self.operators {
            if !ids.insert(op.id.as_str()) {
                return Err(TradingError::DuplicateId(op.id.clone()));
            }
            if !op.budget.is_finite() {
                return Err(TradingError::Config(format!("operator `{}` budget must be finite", op.id)));
            }
        }
        if !(self.penalty.is_finite() && self.penalty >= 0.0) {
            return Err(TradingError::Config("penalty must be finite and non-negative".into()));
        }
        if self.anti_speculation.enabled && self.anti_speculation.window == 0 {
            return Err(TradingError::Config("anti-speculation window must be positive".into()));
        }
        Ok(())
    }

    pub fn trade_policy(&self) -> TradePolicy {
        TradePolicy {
            anti_speculation_window: self.anti_speculation.enabled.then_some(self.anti_speculation.window),
        }
    }

    fn issue_config(&self) -> IssueConfig {
        IssueConfig {
            milestones: self.milestones.clone(),
            commitments: self.commitments,
            due_period: self.due_period.unwrap_or(self.periods.saturating_sub(1)),
            assignment: self.assignment,
            enforce_milestone_surplus: self.enforce_milestone_surplus,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub period: u32,
    pub commitment_id: CommitmentId,
    pub milestone_id: MilestoneId,
    pub operator: OperatorId,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSummary {
    pub operator: OperatorId,
    pub completions: u32,
    pub trades: u32,
    pub penalties: u32,
    pub completion_cost: f64,
    pub penalty_total: f64,
    /// Trade payments made minus trade payments received.
    pub net_trade_payments: f64,
    pub total_cost: f64,
    pub budget_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub seed: u64,
    pub periods: u32,
    pub completion_order: Vec<CompletionRecord>,
    pub operators: Vec<OperatorSummary>,
    /// (charged operator, commitment, amount), in ledger order.
    pub penalties: Vec<(OperatorId, CommitmentId, f64)>,
    pub ledger: Ledger,
}

struct Agent<'a> {
    config: &'a OperatorConfig,
    budget: f64,
    capacity_left: u32,
}

/// (buyer, ask, milestone the buyer would complete and its cost)
type Ask = (String, f64, Option<(MilestoneId, f64)>);

struct Period<'l, 'c> {
    ledger: &'l mut Ledger,
    agents: BTreeMap<&'c str, Agent<'c>>,
    reserved: BTreeSet<MilestoneId>,
    planned: Vec<CompletionReport>,
    planned_commitments: BTreeSet<CommitmentId>,
}

impl Period<'_, '_> {
    /// Cheapest milestone `op` can complete and afford, ties broken by lowest id.
    fn cheapest_for(&self, op: &str) -> Option<(MilestoneId, f64)> {
        let budget = self.agents[op].budget;
        self.ledger
            .milestones()
            .filter(|m| m.completed_by.is_none() && !self.reserved.contains(&m.milestone.id))
            .filter_map(|m| m.milestone.cost_for(op).map(|c| (m.milestone.id.clone(), c)))
            .filter(|(_, c)| *c <= budget)
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
    }

    fn plan(&mut self, op: &str, commitment: CommitmentId, milestone: MilestoneId, cost: f64) {
        let agent = self.agents.get_mut(op).expect("known agent");
        agent.budget -= cost;
        agent.capacity_left = agent.capacity_left.saturating_sub(1);
        self.reserved.insert(milestone.clone());
        self.planned_commitments.insert(commitment.clone());
        self.planned.push(CompletionReport {
            commitment_id: commitment,
            milestone_id: milestone,
        });
    }

    fn unplanned_open(&self, op: &str) -> Vec<(CommitmentId, u32)> {
        self.ledger
            .open_commitments_of(op)
            .into_iter()
            .filter(|c| !self.planned_commitments.contains(&c.id))
            .map(|c| (c.id.clone(), c.due_period))
            .collect()
    }

    fn act_greedy(&mut self, op: &str) {
        for (commitment, _) in self.unplanned_open(op) {
            if self.agents[op].capacity_left == 0 {
                break;
            }
            match self.cheapest_for(op) {
                Some((m, cost)) => self.plan(op, commitment, m, cost),
                None => break,
            }
        }
    }

    fn act_scripted(&mut self, op: &str, period: u32, policy: &TradePolicy) -> Result<()> {
        let script = &self.agents[op].config.script;
        let actions: Vec<ScriptedAction> = script.iter().filter(|a| a.period() == period).cloned().collect();
        for action in actions {
            match action {
                ScriptedAction::Complete { commitment, milestone, .. } => {
                    let c = self
                        .ledger
                        .commitment(&commitment)
                        .ok_or_else(|| TradingError::UnknownCommitment(commitment.clone()))?;
                    if c.owner != op {
                        return Err(TradingError::NotOwner {
                            operator: op.to_string(),
                            commitment,
                        }
                        .into());
                    }
                    let cost = self
                        .ledger
                        .milestone(&milestone)
                        .ok_or_else(|| TradingError::UnknownMilestone(milestone.clone()))?
                        .milestone
                        .cost_for(op)
                        .ok_or_else(|| TradingError::Incapable {
                            operator: op.to_string(),
                            milestone: milestone.clone(),
                        })?;
                    self.plan(op, commitment, milestone, cost);
                }
                ScriptedAction::Sell {
                    commitment,
                    to,
                    new_due,
                    price,
                    ..
                } => {
                    self.ledger.trade(&commitment, op, &to, new_due, price, policy)?;
                    self.transfer(op, &to, price);
                }
            }
        }
        Ok(())
    }

    fn transfer(&mut self, from: &str, to: &str, price: f64) {
        if let Some(a) = self.agents.get_mut(from) {
            a.budget -= price;
        }
        if let Some(a) = self.agents.get_mut(to) {
            a.budget += price;
        }
    }

    /// Best ask among eligible buyers.
    fn best_ask(&self, seller: &str, order: &[&str], policy: &TradePolicy) -> Option<Ask> {
        let mut best: Option<Ask> = None;
        for &buyer in order {
            if buyer == seller || self.ledger.is_barred(buyer, policy) {
                continue;
            }
            let agent = &self.agents[buyer];
            let ask = match agent.config.strategy {
                Strategy::GreedyLeastCost => {
                    if agent.capacity_left == 0 {
                        continue;
                    }
                    match self.cheapest_for(buyer) {
                        Some((m, cost)) => (cost, Some((m, cost))),
                        None => continue,
                    }
                }
                Strategy::PassThrough => (0.0, None),
                Strategy::Scripted => continue,
            };
            let better = match &best {
                None => true,
                Some((b, a, _)) => ask.0 < *a || (ask.0 == *a && buyer < b.as_str()),
            };
            if better {
                best = Some((buyer.to_string(), ask.0, ask.1));
            }
        }
        best
    }

    fn offer_due(&mut self, seller: &str, period: u32, order: &[&str], penalty: f64, policy: &TradePolicy) -> Result<()> {
        let due: Vec<CommitmentId> = self
            .unplanned_open(seller)
            .into_iter()
            .filter(|(_, d)| *d == period)
            .map(|(c, _)| c)
            .collect();
        for commitment in due {
            let bid = penalty.min(self.agents[seller].budget.max(0.0));
            let Some((buyer, ask, completion)) = self.best_ask(seller, order, policy) else {
                break;
            };
            if ask > bid {
                continue;
            }
            let price = 0.5 * (bid + ask);
            let new_due = if completion.is_some() { period } else { period + 1 };
            self.ledger.trade(&commitment, seller, &buyer, new_due, price, policy)?;
            self.transfer(seller, &buyer, price);
            if let Some((m, cost)) = completion {
                self.plan(&buyer, commitment, m, cost);
            }
        }
        Ok(())
    }
}

/// Runs the configured market for `config.periods` periods.
///
/// Identical configurations (including the seed) give identical outcomes.
pub fn run_simulation(config: &SimConfig) -> Result<SimulationOutcome> {
    config.validate()?;
    let operator_ids: Vec<OperatorId> = config.operators.iter().map(|o| o.id.clone()).collect();
    let mut ledger = issue_obligations(&config.issue_config(), &operator_ids)?;
    let policy = config.trade_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut budgets: BTreeMap<&str, f64> = config.operators.iter().map(|o| (o.id.as_str(), o.budget)).collect();

    for period in 0..config.periods {
        let mut order: Vec<&str> = operator_ids.iter().map(String::as_str).collect();
        order.shuffle(&mut rng);

        let mut state = Period {
            ledger: &mut ledger,
            agents: config
                .operators
                .iter()
                .map(|o| {
                    (
                        o.id.as_str(),
                        Agent {
                            config: o,
                            budget: budgets[o.id.as_str()],
                            capacity_left: o.capacity,
                        },
                    )
                })
                .collect(),
            reserved: BTreeSet::new(),
            planned: Vec::new(),
            planned_commitments: BTreeSet::new(),
        };

        for &op in &order {
            match state.agents[op].config.strategy {
                Strategy::GreedyLeastCost => state.act_greedy(op),
                Strategy::Scripted => state.act_scripted(op, period, &policy)?,
                Strategy::PassThrough => {}
            }
        }
        for &op in &order {
            if state.agents[op].config.strategy != Strategy::Scripted {
                state.offer_due(op, period, &order, config.penalty, &policy)?;
            }
        }

        let Period { ledger, agents, planned, .. } = state;
        for (op, agent) in &agents {
            budgets.insert(*op, agent.budget);
        }
        let report = ledger.settle_period(period, &planned, config.penalty, config.routing)?;
        for (charged, _, amount) in &report.penalties {
            if let Some(b) = budgets.get_mut(charged.as_str()) {
                *b -= amount;
            }
        }
    }

    Ok(outcome(config, ledger, &budgets))
}

fn outcome(config: &SimConfig, ledger: Ledger, budgets: &BTreeMap<&str, f64>) -> SimulationOutcome {
    let mut completion_order = Vec::new();
    let mut penalties = Vec::new();
    for e in ledger.events() {
        match e {
            Event::Completed {
                period,
                commitment_id,
                milestone_id,
                operator,
                cost,
            } => completion_order.push(CompletionRecord {
                period: *period,
                commitment_id: commitment_id.clone(),
                milestone_id: milestone_id.clone(),
                operator: operator.clone(),
                cost: *cost,
            }),
            Event::Penalty {
                commitment_id,
                operator,
                amount,
                ..
            } => penalties.push((operator.clone(), commitment_id.clone(), *amount)),
            _ => {}
        }
    }
    let operators = config
        .operators
        .iter()
        .map(|o| {
            let s = ledger.operator_stats(&o.id).cloned().unwrap_or_default();
            let net_trade_payments = s.trade_paid - s.trade_received;
            OperatorSummary {
                operator: o.id.clone(),
                completions: s.completions,
                trades: s.trades,
                penalties: s.penalties,
                completion_cost: s.completion_cost,
                penalty_total: s.penalty_total,
                net_trade_payments,
                total_cost: s.completion_cost + s.penalty_total + net_trade_payments,
                budget_remaining: budgets[o.id.as_str()],
            }
        })
        .collect();
    SimulationOutcome {
        seed: config.seed,
        periods: config.periods,
        completion_order,
        operators,
        penalties,
        ledger,
    }
}

/// Runs the same market under each seed; outcomes follow seed order.
pub fn run_seed_sweep(config: &SimConfig, seeds: &[u64], exec: Execution) -> Vec<Result<SimulationOutcome>> {
    exec.map(seeds, |&seed| {
        let mut c = config.clone();
        c.seed = seed;
        run_simulation(&c)
    })
}

/// Per-operator summary: operator, completions, trades, penalties, total cost.
pub fn write_summary_csv<W: Write>(outcome: &SimulationOutcome, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["operator", "completions", "trades", "penalties", "total_cost"])
        .map_err(csv_err)?;
    for s in &outcome.operators {
        w.write_record([
            s.operator.clone(),
            s.completions.to_string(),
            s.trades.to_string(),
            s.penalties.to_string(),
            s.total_cost.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
