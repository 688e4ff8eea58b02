//! Tradable universal service obligations.
//!
//! The regulator issues milestones (tasks, each with a per-operator cost) and
//! commitments (an operator's obligation to complete some milestone by a due
//! period). Commitments change hands by trade; a commitment is bound to a
//! milestone when its owner reports the completion. Everything that happens is
//! an [`Event`] in a public, append-only [`Ledger`].

mod ledger;
mod sim;

pub use ledger::{
    issue_obligations, Assignment, CompletionReport, IssueConfig, Ledger, MilestoneState, OperatorStats,
    PenaltyRouting, SettlementReport, TradePolicy,
};
pub use sim::{
    run_seed_sweep, run_simulation, write_summary_csv, AntiSpeculation, CompletionRecord, OperatorConfig,
    OperatorSummary, ScriptedAction, SimConfig, SimulationOutcome, Strategy,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TradingError};

pub type OperatorId = String;
pub type MilestoneId = String;
pub type CommitmentId = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub id: MilestoneId,
    #[serde(default)]
    pub task: String,
    /// Completion cost per operator; operators not listed cannot complete it.
    pub costs: BTreeMap<OperatorId, f64>,
}

impl Milestone {
    pub fn cost_for(&self, operator: &str) -> Option<f64> {
        self.costs.get(operator).copied()
    }

    pub fn validate(&self) -> Result<(), TradingError> {
        if self.costs.is_empty() {
            return Err(TradingError::Config(format!(
                "milestone `{}` has no operator able to complete it",
                self.id
            )));
        }
        if let Some((op, c)) = self.costs.iter().find(|(_, c)| !(c.is_finite() && **c >= 0.0)) {
            return Err(TradingError::Config(format!(
                "milestone `{}`: cost {c} for `{op}` must be finite and non-negative",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentStatus {
    Open,
    /// Still open; has changed hands at least once.
    Traded,
    Completed,
    Defaulted,
}

impl CommitmentStatus {
    pub fn is_open(self) -> bool {
        matches!(self, CommitmentStatus::Open | CommitmentStatus::Traded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commitment {
    pub id: CommitmentId,
    /// Set when the commitment is fulfilled.
    pub milestone_id: Option<MilestoneId>,
    pub due_period: u32,
    pub owner: OperatorId,
    /// Seller in the most recent trade.
    pub previous_owner: Option<OperatorId>,
    pub status: CommitmentStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    OperatorRegistered {
        operator: OperatorId,
    },
    MilestoneIssued {
        period: u32,
        milestone: Milestone,
    },
    CommitmentIssued {
        period: u32,
        commitment_id: CommitmentId,
        owner: OperatorId,
        due_period: u32,
    },
    /// `price` is paid by the seller to the buyer for taking on the obligation.
    Traded {
        period: u32,
        commitment_id: CommitmentId,
        from: OperatorId,
        to: OperatorId,
        new_due: u32,
        price: f64,
    },
    Completed {
        period: u32,
        commitment_id: CommitmentId,
        milestone_id: MilestoneId,
        operator: OperatorId,
        cost: f64,
    },
    Defaulted {
        period: u32,
        commitment_id: CommitmentId,
        owner: OperatorId,
    },
    Penalty {
        period: u32,
        commitment_id: CommitmentId,
        operator: OperatorId,
        amount: f64,
    },
    PeriodSettled {
        period: u32,
    },
}
