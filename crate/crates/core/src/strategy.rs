//! Agent interfaces shared by the simulator and every MCSP / MU policy.

use crate::domain::{ExecutionOutcome, Offer, PaymentGrid, RejectReason, ResponseFeedback};
use crate::error::Result;
use crate::rng::SimRng;
use crate::scenario::GroundTruthView;

/// What an MCSP sees when it builds its offers for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub t: usize,
    pub mcsp: usize,
    pub mus: usize,
    /// Type of every task instance; the index is the task id.
    pub tasks: &'a [usize],
    /// Own payment grid per type.
    pub grids: &'a [PaymentGrid],
}

impl StepContext<'_> {
    pub fn types(&self) -> usize {
        self.grids.len()
    }
}

/// One offer together with the MU's answer and, if accepted, the execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfferResult {
    pub offer: Offer,
    pub feedback: ResponseFeedback,
    pub outcome: Option<ExecutionOutcome>,
}

pub trait McspStrategy: Send {
    fn name(&self) -> &'static str;

    fn propose(&mut self, ctx: &StepContext<'_>, rng: &mut SimRng) -> Result<Vec<Offer>>;

    /// Responses to this MCSP's own offers, in offer order.
    fn feedback(&mut self, ctx: &StepContext<'_>, results: &[OfferResult]) -> Result<()>;

    /// Perception error against the true valuations, for strategies that keep perceptions.
    fn perception_error(&self, _truth: &GroundTruthView) -> Option<f64> {
        None
    }
}

/// An MU's verdict over the offers it received this step.
#[derive(Debug, Clone, PartialEq)]
pub struct MuDecision {
    pub accepted: Option<usize>,
    /// One entry per offer, in offer order.
    pub feedback: Vec<ResponseFeedback>,
}

pub trait MuPolicy: Send {
    /// `offers` all target this MU and are sorted by MCSP index.
    fn decide(&mut self, offers: &[Offer], rng: &mut SimRng) -> MuDecision;

    /// A type-`task_type` task was completed at `realized_cost`.
    fn observe(&mut self, task_type: usize, realized_cost: f64);
}

/// Feedback vector once offer `idx` has been accepted: every other offer is
/// told which contract won.
pub(crate) fn verdict_with_winner(offers: &[Offer], idx: usize, negative: impl Fn(usize) -> bool) -> MuDecision {
    let win = offers[idx];
    let feedback = (0..offers.len())
        .map(|n| {
            if n == idx {
                ResponseFeedback::Accept
            } else if negative(n) {
                ResponseFeedback::Reject(RejectReason::NegativeUtility)
            } else {
                ResponseFeedback::Reject(RejectReason::ChoseCompetitor {
                    mcsp: win.mcsp,
                    payment: win.payment,
                    task_type: win.task_type,
                })
            }
        })
        .collect();
    MuDecision {
        accepted: Some(idx),
        feedback,
    }
}

/// Greedy rule: accept the offer with the largest `payment - cost`, first on
/// ties; offers below zero are refused with a negative-utility reason.
pub fn decide_by_cost(offers: &[Offer], cost: impl Fn(&Offer) -> f64) -> MuDecision {
    let utils: Vec<f64> = offers.iter().map(|o| o.payment - cost(o)).collect();
    let mut best: Option<usize> = None;
    for (n, &u) in utils.iter().enumerate() {
        if u >= 0.0 && best.is_none_or(|b| u > utils[b]) {
            best = Some(n);
        }
    }
    match best {
        Some(idx) => verdict_with_winner(offers, idx, |n| utils[n] < 0.0),
        None => MuDecision {
            accepted: None,
            feedback: vec![ResponseFeedback::Reject(RejectReason::NegativeUtility); offers.len()],
        },
    }
}

/// Hands out task ids per type while respecting quotas.
#[derive(Debug, Clone)]
pub struct TaskPool {
    free: Vec<Vec<usize>>,
}

impl TaskPool {
    pub fn new(tasks: &[usize], types: usize) -> Self {
        let mut free = vec![Vec::new(); types];
        for (id, &z) in tasks.iter().enumerate().rev() {
            free[z].push(id);
        }
        TaskPool { free }
    }

    pub fn remaining(&self, z: usize) -> usize {
        self.free[z].len()
    }

    /// Types that still have a free instance.
    pub fn available_types(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&z| !self.free[z].is_empty()).collect()
    }

    /// Lowest free task id of type `z`.
    pub fn take(&mut self, z: usize) -> Option<usize> {
        self.free[z].pop()
    }

    pub fn is_exhausted(&self) -> bool {
        self.free.iter().all(Vec::is_empty)
    }
}
