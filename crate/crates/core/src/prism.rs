//! Perception-aware matching: epsilon-greedy exploration, Hungarian
//! exploitation priced against perceived rival willingness, and
//! max-rule perception updates from rejection feedback.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::assignment::{solve_max_weight_assignment, AssignmentResult, WeightMatrix};
use crate::domain::{Offer, PaymentGrid, RejectReason, ResponseFeedback};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scenario::GroundTruthView;
use crate::strategy::{McspStrategy, OfferResult, StepContext, TaskPool};

/// MCSP `mcsp`'s knowledge: own valuations, perceived rival valuations and
/// minimum acceptable payment levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionStore {
    pub mcsp: usize,
    /// Own expected revenue indexed `[k][z]`.
    pub theta_own: Vec<Vec<f64>>,
    /// Perceived rival valuations indexed `[j][k][z]`; the own row stays zero.
    pub theta_other: Vec<Vec<Vec<f64>>>,
    /// Payment level floor indexed `[k][z]`.
    pub p_min: Vec<Vec<usize>>,
    pub epsilon: f64,
    pub epsilon_decay: f64,
}

impl PerceptionStore {
    pub fn new(mcsp: usize, mcsps: usize, theta_own: Vec<Vec<f64>>, epsilon0: f64, epsilon_decay: f64) -> Self {
        let mus = theta_own.len();
        let types = theta_own.first().map_or(0, Vec::len);
        PerceptionStore {
            mcsp,
            theta_own,
            theta_other: vec![vec![vec![0.0; types]; mus]; mcsps],
            p_min: vec![vec![0; types]; mus],
            epsilon: epsilon0,
            epsilon_decay,
        }
    }

    pub fn mus(&self) -> usize {
        self.theta_own.len()
    }

    pub fn types(&self) -> usize {
        self.theta_own.first().map_or(0, Vec::len)
    }

    /// Sum over rivals, MUs and types of |true - perceived| valuation.
    pub fn perception_error(&self, truth: &GroundTruthView) -> f64 {
        let mut total = 0.0;
        for (j, per_k) in self.theta_other.iter().enumerate() {
            if j == self.mcsp {
                continue;
            }
            for (k, per_z) in per_k.iter().enumerate() {
                for (z, &seen) in per_z.iter().enumerate() {
                    total += (truth.expected_revenue[j][k][z] - seen).abs();
                }
            }
        }
        total
    }

    /// Apply the responses to one step's offers; returns the rivals whose
    /// perception changed. Decays epsilon once.
    pub fn apply_feedback(&mut self, grids: &[PaymentGrid], results: &[OfferResult]) -> Result<Vec<usize>> {
        let mut changed = Vec::new();
        for r in results {
            let (k, z) = (r.offer.mu, r.offer.task_type);
            match r.feedback {
                ResponseFeedback::Accept => {}
                ResponseFeedback::Reject(RejectReason::NegativeUtility) => {
                    let top = grids[z].top_level();
                    self.p_min[k][z] = (self.p_min[k][z] + 1).min(top);
                }
                ResponseFeedback::Reject(RejectReason::ChoseCompetitor {
                    mcsp: j,
                    payment,
                    task_type,
                }) => {
                    if j == self.mcsp || j >= self.theta_other.len() {
                        return Err(Error::ContractViolation(format!(
                            "MCSP {}: feedback names unknown rival {j}",
                            self.mcsp
                        )));
                    }
                    let slot = &mut self.theta_other[j][k][task_type];
                    if payment > *slot {
                        *slot = payment;
                        if !changed.contains(&j) {
                            changed.push(j);
                        }
                    }
                }
            }
        }
        self.epsilon *= self.epsilon_decay;
        Ok(changed)
    }
}

/// Perceived rival matrix: rows MUs, columns the rival's task instances.
fn rival_matrix(theta: &[Vec<f64>], rival_tasks: &[usize]) -> Result<WeightMatrix> {
    let rows = theta
        .iter()
        .map(|per_z| rival_tasks.iter().map(|&z| per_z[z]).collect())
        .collect();
    Ok(WeightMatrix::from_rows(rows)?.with_idle_columns())
}

fn without_cell(m: &WeightMatrix, rival_tasks: &[usize], k: usize, z: usize) -> WeightMatrix {
    let mut out = m.clone();
    for (col, &zc) in rival_tasks.iter().enumerate() {
        if zc == z {
            out.forbid(k, col);
        }
    }
    out
}

/// Rival's perceived loss when MU `k` can no longer take a type-`z` task.
///
/// `theta` is the perceived rival valuation `[k][z]`; `rival_tasks` lists the
/// rival's task instance types.
pub fn shadow_price(theta: &[Vec<f64>], rival_tasks: &[usize], k: usize, z: usize) -> Result<f64> {
    if theta.is_empty() || rival_tasks.is_empty() {
        return Ok(0.0);
    }
    let m = rival_matrix(theta, rival_tasks)?;
    let full = solve_max_weight_assignment(&m)?.total_value;
    let reduced = solve_max_weight_assignment(&without_cell(&m, rival_tasks, k, z))?.total_value;
    Ok((full - reduced).max(0.0))
}

/// [`shadow_price`] for every `(k, z)`; only cells used by the rival's
/// optimal matching need a second solve.
pub fn shadow_prices(theta: &[Vec<f64>], rival_tasks: &[usize], types: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; types]; theta.len()];
    if theta.is_empty() || rival_tasks.is_empty() {
        return Ok(out);
    }
    let m = rival_matrix(theta, rival_tasks)?;
    let full = solve_max_weight_assignment(&m)?;
    for &(k, col) in &full.matching {
        if col >= rival_tasks.len() || m.get(k, col) <= 0.0 {
            continue;
        }
        let z = rival_tasks[col];
        let reduced = solve_max_weight_assignment(&without_cell(&m, rival_tasks, k, z))?.total_value;
        out[k][z] = (full.total_value - reduced).max(0.0);
    }
    Ok(out)
}

/// Perceived joint market: rows MUs, one column per task instance of every
/// platform in platform order. `owner[col]` is `(platform, task id, type)`
/// and `grids[col]` the payment grid that instance is paid on.
#[derive(Debug, Clone)]
pub struct Market {
    pub weights: WeightMatrix,
    pub owner: Vec<(usize, usize, usize)>,
    pub grids: Vec<PaymentGrid>,
}

impl Market {
    /// Best perceived joint matching and its value.
    pub fn solve(&self) -> Result<AssignmentResult> {
        solve_max_weight_assignment(&self.weights.with_idle_columns())
    }

    /// Least payment level per matched MU such that no other platform gains
    /// by outbidding it. Moving MU `l` into slot `c` costs the first level of
    /// `c`'s grid that leaves `l` better off than now, judged with the effort
    /// estimates `cost[l][z]`, and gives up the MU held in `c`, if any. Levels start at
    /// `floor(l, col)` and never pass the holder's own valuation.
    pub fn shadow_levels(
        &self,
        solved: &AssignmentResult,
        cost: &[Vec<f64>],
        floor: impl Fn(usize, usize) -> usize,
    ) -> Vec<Option<usize>> {
        let rows = self.weights.rows();
        let cols = self.owner.len();
        let mut col_of = vec![None; rows];
        let mut row_of = vec![None; cols];
        let mut level = vec![None; rows];
        for &(k, c) in &solved.matching {
            if c < cols {
                col_of[k] = Some(c);
                row_of[c] = Some(k);
                level[k] = Some(floor(k, c).min(self.grids[c].top_level()));
            }
        }
        let paid = |level: &[Option<usize>], k: usize| match (col_of[k], level[k]) {
            (Some(c), Some(p)) => self.grids[c].value(p),
            _ => 0.0,
        };
        loop {
            let surplus: Vec<Option<f64>> = (0..cols)
                .map(|c| row_of[c].map(|k| self.weights.get(k, c) - paid(&level, k)))
                .collect();
            let mut moved = false;
            for l in 0..rows {
                let (Some(cl), Some(p)) = (col_of[l], level[l]) else { continue };
                let holder = self.owner[cl].0;
                let now = self.grids[cl].value(p) - cost[l][self.owner[cl].2];
                let blocked = (0..cols).any(|c| {
                    let j = self.owner[c].0;
                    if j == holder || self.weights.is_forbidden(l, c) {
                        return false;
                    }
                    let keep = surplus[c].unwrap_or(0.0);
                    match self.grids[c].level_above(now + cost[l][self.owner[c].2]) {
                        Some(bid) => self.weights.get(l, c) - self.grids[c].value(bid) > keep + 1e-9,
                        None => false,
                    }
                });
                let next = p + 1;
                if blocked && next < self.grids[cl].len() && self.grids[cl].value(next) <= self.weights.get(l, cl) {
                    level[l] = Some(next);
                    moved = true;
                }
            }
            if !moved {
                return level;
            }
        }
    }
}

/// Perception-aware matching as an MCSP strategy.
#[derive(Debug, Clone)]
pub struct Prism {
    pub store: PerceptionStore,
    rival_tasks: Vec<Vec<usize>>,
    /// Payment grids `[platform][type]`; offers are public, so are grids.
    grids: Vec<Vec<PaymentGrid>>,
    /// Last exploitation plan and the inputs it was computed from.
    plan: Option<(Vec<usize>, Vec<Vec<usize>>, Vec<Offer>)>,
}

impl Prism {
    /// `rival_tasks[j]` lists MCSP `j`'s task instance types and `grids[j]`
    /// its payment grids.
    pub fn new(store: PerceptionStore, rival_tasks: Vec<Vec<usize>>, grids: Vec<Vec<PaymentGrid>>) -> Self {
        Prism {
            store,
            rival_tasks,
            grids,
            plan: None,
        }
    }

    pub fn from_truth(mcsp: usize, truth: &GroundTruthView, epsilon0: f64, epsilon_decay: f64) -> Self {
        let store = PerceptionStore::new(
            mcsp,
            truth.mcsps(),
            truth.expected_revenue[mcsp].clone(),
            epsilon0,
            epsilon_decay,
        );
        let rival_tasks = (0..truth.mcsps()).map(|j| truth.task_types_of(j)).collect();
        Prism::new(store, rival_tasks, truth.grids.clone())
    }

    /// Highest payment this platform ever offers for `(k, z)`, which is all a
    /// rival can learn about it.
    fn own_bid_cap(&self, grid: &PaymentGrid, k: usize, z: usize) -> Option<usize> {
        grid.floor_level(self.store.theta_own[k][z])
            .filter(|&cap| self.store.p_min[k][z] <= cap)
    }

    /// MU effort per `(k, z)` guessed from the reservation levels: between
    /// the last rejected and the first accepted payment.
    pub fn effort_estimates(&self) -> Vec<Vec<f64>> {
        let mine = &self.grids[self.store.mcsp];
        self.store
            .p_min
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(z, &p)| match p {
                        0 => 0.0,
                        p => 0.5 * (mine[z].value(p - 1) + mine[z].value(p)),
                    })
                    .collect()
            })
            .collect()
    }

    /// Joint market as this platform perceives it. Own cells are valued at
    /// the own bid cap, so that platforms with accurate perceptions build
    /// the same matrix.
    pub fn market(&self, ctx: &StepContext<'_>) -> Market {
        let me = self.store.mcsp;
        let mut owner = Vec::new();
        for j in 0..self.rival_tasks.len() {
            let tasks: &[usize] = if j == me { ctx.tasks } else { &self.rival_tasks[j] };
            owner.extend(tasks.iter().enumerate().map(|(n, &z)| (j, n, z)));
        }
        let grids = owner.iter().map(|&(j, _, z)| self.grids[j][z].clone()).collect();
        let mut weights = WeightMatrix::new(ctx.mus, owner.len(), 0.0);
        for k in 0..ctx.mus {
            for (col, &(j, _, z)) in owner.iter().enumerate() {
                if j != me {
                    weights.set(k, col, self.store.theta_other[j][k][z]);
                } else if let Some(cap) = self.own_bid_cap(&ctx.grids[z], k, z) {
                    weights.set(k, col, ctx.grids[z].value(cap));
                } else {
                    weights.forbid(k, col);
                }
            }
        }
        Market { weights, owner, grids }
    }

    pub fn explore(&self, ctx: &StepContext<'_>, rng: &mut SimRng) -> Vec<Offer> {
        let mut pool = TaskPool::new(ctx.tasks, ctx.types());
        let mut order: Vec<usize> = (0..ctx.mus).collect();
        order.shuffle(rng);
        let mut offers = Vec::new();
        for k in order {
            let avail = pool.available_types();
            if avail.is_empty() {
                break;
            }
            let z = avail[rng.gen_range(0..avail.len())];
            let grid = &ctx.grids[z];
            // Never bid above the own valuation.
            let own = grid.floor_level(self.store.theta_own[k][z]).unwrap_or(0);
            let level = if rng.gen::<f64>() < 0.5 {
                self.store.p_min[k][z].min(own)
            } else {
                own
            };
            let task_id = pool.take(z).expect("type listed as available");
            offers.push(Offer {
                mcsp: ctx.mcsp,
                mu: k,
                task_id,
                task_type: z,
                payment_level: level,
                payment: grid.value(level),
            });
        }
        offers.sort_by_key(|o| o.mu);
        offers
    }

    /// Offers for the own share of the perceived joint matching, each paid
    /// `max(p_min, first level above the shadow price)`. A cell whose price
    /// exceeds the own valuation is dropped.
    pub fn exploit(&mut self, ctx: &StepContext<'_>) -> Result<Vec<Offer>> {
        if let Some((tasks, p_min, offers)) = &self.plan {
            if tasks == ctx.tasks && *p_min == self.store.p_min {
                return Ok(offers.clone());
            }
        }
        let me = self.store.mcsp;
        let market = self.market(ctx);
        let solved = market.solve()?;
        // Own reservation levels stand in for the rivals' too.
        let mine = &self.grids[me];
        let cost = self.effort_estimates();
        let levels = market.shadow_levels(&solved, &cost, |k, c| {
            let (j, _, z) = market.owner[c];
            let p_min = self.store.p_min[k][z];
            if j == me {
                p_min
            } else {
                market.grids[c].level_at_least(mine[z].value(p_min)).unwrap_or(market.grids[c].top_level())
            }
        });
        let mut offers = Vec::new();
        for &(k, col) in &solved.matching {
            let Some(&(j, n, z)) = market.owner.get(col) else { continue };
            if j != me {
                continue;
            }
            let grid = &ctx.grids[z];
            let Some(p) = levels[k].filter(|&p| self.store.theta_own[k][z] - grid.value(p) >= 0.0) else {
                continue;
            };
            offers.push(Offer {
                mcsp: me,
                mu: k,
                task_id: n,
                task_type: z,
                payment_level: p,
                payment: grid.value(p),
            });
        }
        offers.sort_by_key(|o| o.mu);
        self.plan = Some((ctx.tasks.to_vec(), self.store.p_min.clone(), offers.clone()));
        Ok(offers)
    }
}

impl McspStrategy for Prism {
    fn name(&self) -> &'static str {
        "prism"
    }

    fn propose(&mut self, ctx: &StepContext<'_>, rng: &mut SimRng) -> Result<Vec<Offer>> {
        if rng.gen::<f64>() < self.store.epsilon {
            Ok(self.explore(ctx, rng))
        } else {
            self.exploit(ctx)
        }
    }

    fn feedback(&mut self, ctx: &StepContext<'_>, results: &[OfferResult]) -> Result<()> {
        if !self.store.apply_feedback(ctx.grids, results)?.is_empty() {
            self.plan = None;
        }
        Ok(())
    }

    fn perception_error(&self, truth: &GroundTruthView) -> Option<f64> {
        Some(self.store.perception_error(truth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::brute_force_assignment;
    use rand::SeedableRng;

    fn grid() -> Vec<PaymentGrid> {
        vec![PaymentGrid::linear(2.0, 21).unwrap(); 2]
    }

    fn result(offer: Offer, feedback: ResponseFeedback) -> OfferResult {
        OfferResult {
            offer,
            feedback,
            outcome: None,
        }
    }

    fn offer(k: usize, z: usize) -> Offer {
        Offer {
            mcsp: 0,
            mu: k,
            task_id: 0,
            task_type: z,
            payment_level: 0,
            payment: 0.0,
        }
    }

    fn chose(j: usize, payment: f64, z: usize) -> ResponseFeedback {
        ResponseFeedback::Reject(RejectReason::ChoseCompetitor {
            mcsp: j,
            payment,
            task_type: z,
        })
    }

    #[test]
    fn shadow_price_examples() {
        assert_eq!(shadow_price(&[vec![0.0, 0.0]], &[0, 1], 0, 0).unwrap(), 0.0);
        assert!((shadow_price(&[vec![0.8]], &[0], 0, 0).unwrap() - 0.8).abs() < 1e-12);

        // Oracle: brute force over the perceived matrix with and without the cell.
        let theta = vec![vec![0.5, 0.9], vec![0.7, 0.4]];
        let tasks = [0usize, 1];
        for k in 0..2 {
            let full = WeightMatrix::from_rows(theta.clone()).unwrap();
            let mut cut = full.clone();
            cut.forbid(k, 0);
            let expected = brute_force_assignment(&full).unwrap().total_value
                - brute_force_assignment(&cut.with_idle_columns()).unwrap().total_value;
            let got = shadow_price(&theta, &tasks, k, 0).unwrap();
            assert!((got - expected).abs() < 1e-12, "k={k}: {got} vs {expected}");
        }
        // By hand: MU 1 on type 0 is worth 1.6 - 0.9 = 0.7; MU 0 is not used on type 0.
        assert!((shadow_price(&theta, &tasks, 1, 0).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(shadow_price(&theta, &tasks, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn bulk_shadow_prices_match_pairwise_solves() {
        let mut r = SimRng::seed_from_u64(17);
        for _ in 0..20 {
            let theta: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| r.gen_range(0.0..2.0)).collect()).collect();
            let tasks = [0usize, 0, 1, 2];
            let bulk = shadow_prices(&theta, &tasks, 3).unwrap();
            for k in 0..5 {
                for z in 0..3 {
                    let one = shadow_price(&theta, &tasks, k, z).unwrap();
                    assert!((bulk[k][z] - one).abs() < 1e-9, "({k},{z}): {} vs {one}", bulk[k][z]);
                }
            }
        }
    }

    #[test]
    fn feedback_rules() {
        let g = grid();
        let mut s = PerceptionStore::new(0, 2, vec![vec![1.5, 1.5]], 1.0, 0.5);
        s.theta_other[1][0][1] = 3.0;
        s.apply_feedback(&g, &[result(offer(0, 0), chose(1, 5.0, 1))]).unwrap();
        assert_eq!(s.theta_other[1][0][1], 5.0);
        let changed = s.apply_feedback(&g, &[result(offer(0, 0), chose(1, 3.0, 1))]).unwrap();
        assert_eq!(s.theta_other[1][0][1], 5.0);
        assert!(changed.is_empty());

        s.p_min[0][1] = 4;
        s.apply_feedback(&g, &[result(offer(0, 1), ResponseFeedback::Reject(RejectReason::NegativeUtility))])
            .unwrap();
        assert_eq!(s.p_min[0][1], 5);
        assert_eq!(s.epsilon, 0.125);

        assert!(s.apply_feedback(&g, &[result(offer(0, 0), chose(7, 1.0, 0))]).is_err());
        assert!(s.apply_feedback(&g, &[result(offer(0, 0), chose(0, 1.0, 0))]).is_err());
    }

    #[test]
    fn exploitation_without_rivals_bids_floor() {
        let store = PerceptionStore::new(0, 2, vec![vec![1.5]], 0.0, 0.999);
        let mut p = Prism::new(store, vec![vec![0], vec![0]], vec![vec![PaymentGrid::linear(2.0, 21).unwrap()]; 2]);
        let grids = vec![PaymentGrid::linear(2.0, 21).unwrap()];
        let ctx = StepContext {
            t: 0,
            mcsp: 0,
            mus: 1,
            tasks: &[0],
            grids: &grids,
        };
        let offers = p.propose(&ctx, &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!(offers.len(), 1);
        assert_eq!(offers[0].payment_level, 0);
        assert_eq!(offers[0].payment, 0.0);
    }

    #[test]
    fn exploitation_outbids_perceived_rival() {
        // Two MUs, one type, two own tasks; rival perceived to value MU 1 at 1.2.
        let store = PerceptionStore::new(0, 2, vec![vec![1.8], vec![1.9]], 0.0, 0.999);
        let mut p = Prism::new(store, vec![vec![0, 0], vec![0]], vec![vec![PaymentGrid::linear(2.0, 21).unwrap()]; 2]);
        p.store.theta_other[1][1][0] = 1.2;
        let grids = vec![PaymentGrid::linear(2.0, 21).unwrap()];
        let ctx = StepContext {
            t: 0,
            mcsp: 0,
            mus: 2,
            tasks: &[0, 0],
            grids: &grids,
        };
        let offers = p.exploit(&ctx).unwrap();
        assert_eq!(offers.len(), 2);

        // Lowest grid payment at which the rival's cheapest outbid earns it nothing.
        let values = grids[0].values();
        let expected = values
            .iter()
            .copied()
            .find(|&v| match values.iter().copied().find(|&b| b > v) {
                Some(b) => 1.2 - b <= 1e-9,
                None => true,
            })
            .unwrap();
        assert!((expected - 1.1).abs() < 1e-9);
        let o1 = offers.iter().find(|o| o.mu == 1).unwrap();
        assert_eq!(o1.payment, expected);
        let o0 = offers.iter().find(|o| o.mu == 0).unwrap();
        assert_eq!(o0.payment, 0.0);
    }

    #[test]
    fn exploration_is_reproducible_and_respects_quota() {
        let store = PerceptionStore::new(0, 2, vec![vec![1.5, 1.2]; 6], 1.0, 0.999);
        let p = Prism::new(store, vec![vec![0, 1, 1], vec![0]], vec![grid(); 2]);
        let grids = grid();
        let ctx = StepContext {
            t: 0,
            mcsp: 0,
            mus: 6,
            tasks: &[0, 1, 1],
            grids: &grids,
        };
        let a = p.explore(&ctx, &mut SimRng::seed_from_u64(3));
        let b = p.explore(&ctx, &mut SimRng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a.iter().filter(|o| o.task_type == 0).count(), 1);
        for o in &a {
            assert!(o.payment <= p.store.theta_own[o.mu][o.task_type]);
        }
    }
}
