use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Commitment, CommitmentId, CommitmentStatus, Event, Milestone, MilestoneId, OperatorId};
use crate::error::TradingError;

type Result<T> = std::result::Result<T, TradingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRouting {
    /// Charge the seller of the most recent trade; the owner if never traded.
    #[default]
    PreviousOwner,
    CurrentOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    RoundRobin,
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueConfig {
    pub milestones: Vec<Milestone>,
    pub commitments: usize,
    pub due_period: u32,
    pub assignment: Assignment,
    /// Require at least as many milestones as commitments.
    pub enforce_milestone_surplus: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TradePolicy {
    /// When set, a buyer must have completed one milestone per this many trades.
    pub anti_speculation_window: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub commitment_id: CommitmentId,
    pub milestone_id: MilestoneId,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorStats {
    pub completions: u32,
    pub trades: u32,
    pub defaults: u32,
    pub penalties: u32,
    pub penalty_total: f64,
    pub completion_cost: f64,
    pub trade_paid: f64,
    pub trade_received: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneState {
    pub milestone: Milestone,
    pub completed_by: Option<OperatorId>,
    pub completed_in: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub period: u32,
    pub completed: Vec<CommitmentId>,
    pub defaulted: Vec<CommitmentId>,
    /// (charged operator, commitment, amount)
    pub penalties: Vec<(OperatorId, CommitmentId, f64)>,
}

/// Public record of obligations. State changes only by appending events.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ledger {
    period: u32,
    operators: BTreeMap<OperatorId, OperatorStats>,
    milestones: BTreeMap<MilestoneId, MilestoneState>,
    commitments: BTreeMap<CommitmentId, Commitment>,
    events: Vec<Event>,
}

/// Creates a ledger holding the milestones and `commitments` commitments, all
/// due at `due_period`, with owners assigned per `config.assignment`.
pub fn issue_obligations(config: &IssueConfig, operators: &[OperatorId]) -> Result<Ledger> {
    let mut ledger = Ledger::default();
    let mut seen = BTreeSet::new();
    for op in operators {
        if !seen.insert(op.as_str()) {
            return Err(TradingError::DuplicateId(op.clone()));
        }
    }
    for m in &config.milestones {
        m.validate()?;
        if let Some(op) = m.costs.keys().find(|op| !seen.contains(op.as_str())) {
            return Err(TradingError::UnknownOperator(op.clone()));
        }
    }
    let mut ids = BTreeSet::new();
    for m in &config.milestones {
        if !ids.insert(m.id.as_str()) {
            return Err(TradingError::DuplicateId(m.id.clone()));
        }
    }
    if config.enforce_milestone_surplus && config.commitments > config.milestones.len() {
        return Err(TradingError::TooManyCommitments {
            commitments: config.commitments,
            milestones: config.milestones.len(),
        });
    }
    if config.commitments > 0 && operators.is_empty() {
        return Err(TradingError::Config("commitments issued but no operators".into()));
    }

    for op in operators {
        ledger.record(Event::OperatorRegistered { operator: op.clone() });
    }
    for m in &config.milestones {
        ledger.record(Event::MilestoneIssued {
            period: 0,
            milestone: m.clone(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.commitments.to_string().len().max(3);
    for i in 0..config.commitments {
        let owner = match config.assignment {
            Assignment::RoundRobin => &operators[i % operators.len()],
            Assignment::SeededRandom => &operators[rng.random_range(0..operators.len())],
        };
        ledger.record(Event::CommitmentIssued {
            period: 0,
            commitment_id: format!("c{:0width$}", i + 1),
            owner: owner.clone(),
            due_period: config.due_period,
        });
    }
    Ok(ledger)
}

impl Ledger {
    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn operators(&self) -> impl Iterator<Item = (&OperatorId, &OperatorStats)> {
        self.operators.iter()
    }

    pub fn operator_stats(&self, operator: &str) -> Option<&OperatorStats> {
        self.operators.get(operator)
    }

    pub fn milestones(&self) -> impl Iterator<Item = &MilestoneState> {
        self.milestones.values()
    }

    pub fn milestone(&self, id: &str) -> Option<&MilestoneState> {
        self.milestones.get(id)
    }

    pub fn commitments(&self) -> impl Iterator<Item = &Commitment> {
        self.commitments.values()
    }

    pub fn commitment(&self, id: &str) -> Option<&Commitment> {
        self.commitments.get(id)
    }

    /// Open commitments owned by `operator`, ordered by (due period, id).
    pub fn open_commitments_of(&self, operator: &str) -> Vec<&Commitment> {
        let mut v: Vec<_> = self
            .commitments
            .values()
            .filter(|c| c.owner == operator && c.status.is_open())
            .collect();
        v.sort_by(|a, b| a.due_period.cmp(&b.due_period).then_with(|| a.id.cmp(&b.id)));
        v
    }

    /// Whether the anti-speculation rule bars `operator` from buying.
    pub fn is_barred(&self, operator: &str, policy: &TradePolicy) -> bool {
        match (policy.anti_speculation_window, self.operators.get(operator)) {
            (Some(w), Some(s)) => s.trades >= w.saturating_mul(s.completions + 1),
            _ => false,
        }
    }

    /// Rebuilds a ledger from its event log.
    pub fn replay(events: &[Event]) -> Result<Ledger> {
        let mut ledger = Ledger::default();
        for e in events {
            ledger.check_references(e)?;
            ledger.record(e.clone());
        }
        Ok(ledger)
    }

    fn check_references(&self, event: &Event) -> Result<()> {
        let commitment = |id: &str| {
            self.commitments
                .contains_key(id)
                .then_some(())
                .ok_or_else(|| TradingError::UnknownCommitment(id.to_string()))
        };
        let operator = |id: &str| {
            self.operators
                .contains_key(id)
                .then_some(())
                .ok_or_else(|| TradingError::UnknownOperator(id.to_string()))
        };
        match event {
            Event::OperatorRegistered { .. } | Event::MilestoneIssued { .. } | Event::PeriodSettled { .. } => Ok(()),
            Event::CommitmentIssued { owner, .. } => operator(owner),
            Event::Traded { commitment_id, to, .. } => {
                commitment(commitment_id)?;
                operator(to)
            }
            Event::Completed {
                commitment_id,
                milestone_id,
                ..
            } => {
                commitment(commitment_id)?;
                self.milestones
                    .contains_key(milestone_id)
                    .then_some(())
                    .ok_or_else(|| TradingError::UnknownMilestone(milestone_id.clone()))
            }
            Event::Defaulted { commitment_id, .. } => commitment(commitment_id),
            Event::Penalty {
                commitment_id,
                operator: op,
                ..
            } => {
                commitment(commitment_id)?;
                operator(op)
            }
        }
    }

    /// Applies an event to the state and appends it to the log.
    fn record(&mut self, event: Event) {
        match &event {
            Event::OperatorRegistered { operator } => {
                self.operators.entry(operator.clone()).or_default();
            }
            Event::MilestoneIssued { milestone, .. } => {
                self.milestones.insert(
                    milestone.id.clone(),
                    MilestoneState {
                        milestone: milestone.clone(),
                        completed_by: None,
                        completed_in: None,
                    },
                );
            }
            Event::CommitmentIssued {
                commitment_id,
                owner,
                due_period,
                ..
            } => {
                self.commitments.insert(
                    commitment_id.clone(),
                    Commitment {
                        id: commitment_id.clone(),
                        milestone_id: None,
                        due_period: *due_period,
                        owner: owner.clone(),
                        previous_owner: None,
                        status: CommitmentStatus::Open,
                    },
                );
            }
            Event::Traded {
                commitment_id,
                from,
                to,
                new_due,
                price,
                ..
            } => {
                if let Some(c) = self.commitments.get_mut(commitment_id) {
                    c.previous_owner = Some(from.clone());
                    c.owner = to.clone();
                    c.due_period = *new_due;
                    c.status = CommitmentStatus::Traded;
                }
                for (op, paid, received) in [(from, *price, 0.0), (to, 0.0, *price)] {
                    let s = self.operators.entry(op.clone()).or_default();
                    s.trades += 1;
                    s.trade_paid += paid;
                    s.trade_received += received;
                }
            }
            Event::Completed {
                period,
                commitment_id,
                milestone_id,
                operator,
                cost,
            } => {
                if let Some(c) = self.commitments.get_mut(commitment_id) {
                    c.status = CommitmentStatus::Completed;
                    c.milestone_id = Some(milestone_id.clone());
                }
                if let Some(m) = self.milestones.get_mut(milestone_id) {
                    m.completed_by = Some(operator.clone());
                    m.completed_in = Some(*period);
                }
                let s = self.operators.entry(operator.clone()).or_default();
                s.completions += 1;
                s.completion_cost += cost;
            }
            Event::Defaulted { commitment_id, owner, .. } => {
                if let Some(c) = self.commitments.get_mut(commitment_id) {
                    c.status = CommitmentStatus::Defaulted;
                }
                self.operators.entry(owner.clone()).or_default().defaults += 1;
            }
            Event::Penalty { operator, amount, .. } => {
                let s = self.operators.entry(operator.clone()).or_default();
                s.penalties += 1;
                s.penalty_total += amount;
            }
            Event::PeriodSettled { period } => {
                self.period = period + 1;
            }
        }
        self.events.push(event);
    }

    fn known_operator(&self, op: &str) -> Result<()> {
        if self.operators.contains_key(op) {
            Ok(())
        } else {
            Err(TradingError::UnknownOperator(op.to_string()))
        }
    }

    /// Transfers an open commitment from `from` to `to` with a new due period.
    ///
    /// On error the ledger is unchanged.
    pub fn trade(
        &mut self,
        commitment_id: &str,
        from: &str,
        to: &str,
        new_due: u32,
        price: f64,
        policy: &TradePolicy,
    ) -> Result<()> {
        self.known_operator(from)?;
        self.known_operator(to)?;
        let c = self
            .commitments
            .get(commitment_id)
            .ok_or_else(|| TradingError::UnknownCommitment(commitment_id.to_string()))?;
        if !c.status.is_open() {
            return Err(TradingError::ClosedCommitment(commitment_id.to_string()));
        }
        if c.owner != from {
            return Err(TradingError::NotOwner {
                operator: from.to_string(),
                commitment: commitment_id.to_string(),
            });
        }
        if from == to {
            return Err(TradingError::SelfTrade(from.to_string()));
        }
        if new_due < self.period {
            return Err(TradingError::PastDue {
                due: new_due,
                current: self.period,
            });
        }
        if !price.is_finite() {
            return Err(TradingError::Config("trade price must be finite".into()));
        }
        if self.is_barred(to, policy) {
            return Err(TradingError::BarredTrader(to.to_string()));
        }
        self.record(Event::Traded {
            period: self.period,
            commitment_id: commitment_id.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            new_due,
            price,
        });
        Ok(())
    }

    /// Operator charged when `commitment` defaults.
    pub fn penalty_target<'a>(&self, commitment: &'a Commitment, routing: PenaltyRouting) -> &'a OperatorId {
        match routing {
            PenaltyRouting::PreviousOwner => commitment.previous_owner.as_ref().unwrap_or(&commitment.owner),
            PenaltyRouting::CurrentOwner => &commitment.owner,
        }
    }

    /// Records reported completions, defaults every open commitment due this
    /// period, charges penalties and advances the period counter.
    ///
    /// Completions may be reported for commitments due later. The whole
    /// settlement is rejected, leaving the ledger unchanged, if any report is invalid.
    pub fn settle_period(
        &mut self,
        period: u32,
        completions: &[CompletionReport],
        penalty: f64,
        routing: PenaltyRouting,
    ) -> Result<SettlementReport> {
        if period != self.period {
            return Err(TradingError::PeriodMismatch {
                requested: period,
                current: self.period,
            });
        }
        if !(penalty.is_finite() && penalty >= 0.0) {
            return Err(TradingError::Config(format!("penalty {penalty} must be finite and non-negative")));
        }

        let mut planned = Vec::with_capacity(completions.len());
        let mut used_commitments = BTreeSet::new();
        let mut used_milestones = BTreeSet::new();
        for r in completions {
            let c = self
                .commitments
                .get(&r.commitment_id)
                .ok_or_else(|| TradingError::UnknownCommitment(r.commitment_id.clone()))?;
            if !c.status.is_open() || !used_commitments.insert(r.commitment_id.as_str()) {
                return Err(TradingError::ClosedCommitment(r.commitment_id.clone()));
            }
            let m = self
                .milestones
                .get(&r.milestone_id)
                .ok_or_else(|| TradingError::UnknownMilestone(r.milestone_id.clone()))?;
            if m.completed_by.is_some() || !used_milestones.insert(r.milestone_id.as_str()) {
                return Err(TradingError::MilestoneCompleted(r.milestone_id.clone()));
            }
            if let Some(bound) = &c.milestone_id {
                if bound != &r.milestone_id {
                    return Err(TradingError::WrongMilestone {
                        commitment: c.id.clone(),
                        bound: bound.clone(),
                        reported: r.milestone_id.clone(),
                    });
                }
            }
            let cost = m.milestone.cost_for(&c.owner).ok_or_else(|| TradingError::Incapable {
                operator: c.owner.clone(),
                milestone: r.milestone_id.clone(),
            })?;
            planned.push(Event::Completed {
                period,
                commitment_id: c.id.clone(),
                milestone_id: r.milestone_id.clone(),
                operator: c.owner.clone(),
                cost,
            });
        }

        let mut report = SettlementReport {
            period,
            completed: completions.iter().map(|r| r.commitment_id.clone()).collect(),
            defaulted: Vec::new(),
            penalties: Vec::new(),
        };
        for e in planned {
            self.record(e);
        }

        let due: Vec<(CommitmentId, OperatorId, OperatorId)> = self
            .commitments
            .values()
            .filter(|c| c.status.is_open() && c.due_period <= period)
            .map(|c| (c.id.clone(), c.owner.clone(), self.penalty_target(c, routing).clone()))
            .collect();
        for (id, owner, charged) in due {
            self.record(Event::Defaulted {
                period,
                commitment_id: id.clone(),
                owner,
            });
            self.record(Event::Penalty {
                period,
                commitment_id: id.clone(),
                operator: charged.clone(),
                amount: penalty,
            });
            report.defaulted.push(id.clone());
            report.penalties.push((charged, id, penalty));
        }
        self.record(Event::PeriodSettled { period });
        Ok(report)
    }
}
