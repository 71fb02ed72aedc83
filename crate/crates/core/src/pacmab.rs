//! Combinatorial UCB over `(k, z, p)` arms with perception-based pruning.
//! With pruning switched off the same table is the CMAB baseline.

use std::cmp::Ordering;

use crate::domain::{Offer, PaymentGrid, RejectReason, ResponseFeedback};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::strategy::{McspStrategy, OfferResult, StepContext};

/// `estimate + c * sqrt(ln t / pulls)`; unpulled arms score `+inf`.
pub fn ucb_score(estimate: f64, pulls: u64, ucb_t: f64, ucb_c: f64) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    estimate + ucb_c * (ucb_t.max(1.0).ln() / pulls as f64).sqrt()
}

/// A candidate arm with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub mu: usize,
    pub task_type: usize,
    pub level: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmTable {
    pub mus: usize,
    pub types: usize,
    pub levels: usize,
    pub rivals: usize,
    /// Mean realized utility over accepted pulls, `[k][z][p]` flattened.
    pub estimate: Vec<f64>,
    /// Accepted pulls per arm (L).
    pub accepts: Vec<u64>,
    /// Offers per arm.
    pub offers: Vec<u64>,
    /// Acceptances per `(k, z)`.
    pub win: Vec<u64>,
    /// Rejections per `(k, z)`.
    pub lost: Vec<u64>,
    /// Histogram of winning rival payments mapped onto own levels,
    /// `[k][z][level]`; the extra last bucket holds bids above the grid.
    pub rival_levels: Vec<u64>,
    pub ucb_t: u64,
    pub ucb_c: f64,
    pub win_threshold: f64,
}

impl ArmTable {
    pub fn new(mcsps: usize, mus: usize, types: usize, levels: usize, ucb_c: f64, win_threshold: f64) -> Self {
        let arms = mus * types * levels;
        ArmTable {
            mus,
            types,
            levels,
            rivals: mcsps,
            estimate: vec![0.0; arms],
            accepts: vec![0; arms],
            offers: vec![0; arms],
            win: vec![0; mus * types],
            lost: vec![0; mus * types],
            rival_levels: vec![0; mus * types * (levels + 1)],
            ucb_t: 0,
            ucb_c,
            win_threshold,
        }
    }

    pub fn arm(&self, k: usize, z: usize, p: usize) -> usize {
        (k * self.types + z) * self.levels + p
    }

    fn pair(&self, k: usize, z: usize) -> usize {
        k * self.types + z
    }

    /// Mean realized utility per offer, counting rejections as zero.
    pub fn acceptance_weighted(&self, a: usize) -> f64 {
        if self.offers[a] == 0 {
            0.0
        } else {
            self.estimate[a] * self.accepts[a] as f64 / self.offers[a] as f64
        }
    }

    /// Estimated probability that level `p` beats the best rival offer on
    /// `(k, z)`; 1 until a rival win has been observed.
    pub fn win_probability(&self, k: usize, z: usize, p: usize) -> f64 {
        let base = self.pair(k, z) * (self.levels + 1);
        let h = &self.rival_levels[base..base + self.levels + 1];
        let total: u64 = h.iter().sum();
        if total == 0 {
            return 1.0;
        }
        h[..=p].iter().sum::<u64>() as f64 / total as f64
    }

    /// Whether arm `(k, z, p)` survives pruning.
    pub fn is_feasible(&self, k: usize, z: usize, p: usize) -> bool {
        let a = self.arm(k, z, p);
        let pz = self.pair(k, z);
        let seen = self.win[pz] + self.lost[pz];
        if self.offers[a] > 0 && seen > 0 {
            let ratio = self.win[pz] as f64 / seen as f64;
            if self.estimate[a] * ratio <= 0.0 {
                return false;
            }
        }
        self.win_probability(k, z, p) >= self.win_threshold
    }

    pub fn score(&self, k: usize, z: usize, p: usize) -> f64 {
        let a = self.arm(k, z, p);
        ucb_score(self.acceptance_weighted(a), self.offers[a], self.ucb_t as f64, self.ucb_c)
    }

    /// Candidate arms over the available types, optionally pruned.
    pub fn feasible_set(&self, available: &[bool], prune: bool) -> Vec<Candidate> {
        let mut out = Vec::new();
        for k in 0..self.mus {
            for z in 0..self.types {
                if !available[z] {
                    continue;
                }
                for p in 0..self.levels {
                    if prune && !self.is_feasible(k, z, p) {
                        continue;
                    }
                    out.push(Candidate {
                        mu: k,
                        task_type: z,
                        level: p,
                        score: self.score(k, z, p),
                    });
                }
            }
        }
        out
    }

    /// Record one response. Accepted offers need the realized MCSP utility.
    pub fn update(&mut self, grid: &PaymentGrid, offer: &Offer, feedback: &ResponseFeedback, realized: Option<f64>) -> Result<()> {
        let (k, z, p) = (offer.mu, offer.task_type, offer.payment_level);
        let a = self.arm(k, z, p);
        let pz = self.pair(k, z);
        self.offers[a] += 1;
        self.ucb_t += 1;
        match feedback {
            ResponseFeedback::Accept => {
                let r = realized.ok_or_else(|| {
                    Error::ContractViolation(format!("accepted offer to MU {k} has no realized utility"))
                })?;
                self.win[pz] += 1;
                self.accepts[a] += 1;
                self.estimate[a] += (r - self.estimate[a]) / self.accepts[a] as f64;
            }
            ResponseFeedback::Reject(reason) => {
                self.lost[pz] += 1;
                if let RejectReason::ChoseCompetitor { mcsp: j, payment, .. } = reason {
                    if *j >= self.rivals {
                        return Err(Error::ContractViolation(format!("feedback names unknown rival {j}")));
                    }
                    let level = grid.level_at_least(*payment).unwrap_or(self.levels);
                    let base = pz * (self.levels + 1);
                    self.rival_levels[base + level] += 1;
                }
            }
        }
        Ok(())
    }
}

/// Highest score first, then lexicographic `(k, z, p)`.
fn by_priority(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| (a.mu, a.task_type, a.level).cmp(&(b.mu, b.task_type, b.level)))
}

/// Greedy quota-respecting pick: one arm per MU, at most `quota[z]` per type.
pub fn select(mut candidates: Vec<Candidate>, quota: &[usize], mus: usize) -> Vec<Candidate> {
    candidates.sort_by(by_priority);
    let mut left = quota.to_vec();
    let mut taken = vec![false; mus];
    let mut out = Vec::new();
    for c in candidates {
        if taken[c.mu] || left[c.task_type] == 0 {
            continue;
        }
        taken[c.mu] = true;
        left[c.task_type] -= 1;
        out.push(c);
        if left.iter().all(|&q| q == 0) {
            break;
        }
    }
    out
}

/// Bandit MCSP; `prune = false` gives CMAB.
#[derive(Debug, Clone)]
pub struct Pacmab {
    pub table: ArmTable,
    pub prune: bool,
}

impl Pacmab {
    pub fn new(table: ArmTable, prune: bool) -> Self {
        Pacmab { table, prune }
    }
}

impl McspStrategy for Pacmab {
    fn name(&self) -> &'static str {
        if self.prune {
            "pacmab"
        } else {
            "cmab"
        }
    }

    fn propose(&mut self, ctx: &StepContext<'_>, _rng: &mut SimRng) -> Result<Vec<Offer>> {
        let mut quota = vec![0usize; ctx.types()];
        for &z in ctx.tasks {
            quota[z] += 1;
        }
        let available: Vec<bool> = quota.iter().map(|&q| q > 0).collect();
        let picked = select(self.table.feasible_set(&available, self.prune), &quota, ctx.mus);

        let mut next_id: Vec<Vec<usize>> = vec![Vec::new(); ctx.types()];
        for (id, &z) in ctx.tasks.iter().enumerate().rev() {
            next_id[z].push(id);
        }
        let mut offers: Vec<Offer> = picked
            .into_iter()
            .map(|c| Offer {
                mcsp: ctx.mcsp,
                mu: c.mu,
                task_id: next_id[c.task_type].pop().expect("quota checked in select"),
                task_type: c.task_type,
                payment_level: c.level,
                payment: ctx.grids[c.task_type].value(c.level),
            })
            .collect();
        offers.sort_by_key(|o| o.mu);
        Ok(offers)
    }

    fn feedback(&mut self, ctx: &StepContext<'_>, results: &[OfferResult]) -> Result<()> {
        for r in results {
            let realized = r.outcome.map(|o| o.mcsp_utility);
            self.table
                .update(&ctx.grids[r.offer.task_type], &r.offer, &r.feedback, realized)?;
        }
        Ok(())
    }
}
