//! Comparison strategies: the centralized welfare optimum (COPT), MCSP-proposing
//! deferred acceptance with contracts (MGS) and random offers.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::assignment::{solve_max_weight_assignment, WeightMatrix};
use crate::domain::Offer;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scenario::GroundTruthView;
use crate::stability::{JointAssignment, Placement};
use crate::strategy::{McspStrategy, OfferResult, StepContext, TaskPool};

/// Expected welfare of a joint assignment: sum of revenue minus cost.
pub fn expected_welfare(y: &JointAssignment, truth: &GroundTruthView) -> f64 {
    y.iter()
        .enumerate()
        .filter_map(|(k, p)| {
            p.map(|p| truth.expected_revenue[p.mcsp][k][p.task_type] - truth.expected_cost[p.mcsp][k][p.task_type])
        })
        .sum()
}

/// Rows MUs, columns every task instance of every MCSP, weight revenue minus
/// cost; unprofitable cells are forbidden. Columns are `(mcsp, type)`.
pub fn copt_matrix(truth: &GroundTruthView) -> (WeightMatrix, Vec<(usize, usize)>) {
    let cols: Vec<(usize, usize)> = (0..truth.mcsps())
        .flat_map(|i| truth.task_types_of(i).into_iter().map(move |z| (i, z)))
        .collect();
    let mut w = WeightMatrix::new(truth.mus(), cols.len(), 0.0);
    for k in 0..truth.mus() {
        for (c, &(i, z)) in cols.iter().enumerate() {
            let v = truth.expected_revenue[i][k][z] - truth.expected_cost[i][k][z];
            if v < 0.0 {
                w.forbid(k, c);
            } else {
                w.set(k, c, v);
            }
        }
    }
    (w, cols)
}

/// Welfare-maximizing joint assignment with zero payments.
pub fn copt_assign(truth: &GroundTruthView) -> Result<JointAssignment> {
    let (w, cols) = copt_matrix(truth);
    let mut y = vec![None; truth.mus()];
    let solved = match solve_max_weight_assignment(&w.with_idle_columns()) {
        Ok(s) => s,
        Err(Error::Infeasible(_)) => return Ok(y),
        Err(e) => return Err(e),
    };
    for (k, c) in solved.matching {
        if c < cols.len() {
            let (mcsp, task_type) = cols[c];
            y[k] = Some(Placement {
                mcsp,
                task_type,
                payment_level: 0,
            });
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy)]
struct Held {
    slot: usize,
    mcsp: usize,
    utility: f64,
}

/// MU's ranking: higher utility, then lower MCSP, then lower slot.
fn mu_prefers(a: &Held, b: &Held) -> bool {
    match a.utility.partial_cmp(&b.utility).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.mcsp, a.slot) < (b.mcsp, b.slot),
    }
}

/// MCSP-proposing deferred acceptance with contracts under true preferences.
///
/// Every task instance is a slot that proposes `(k, p)` contracts in
/// decreasing order of its expected utility (strictly positive only), so a
/// rejected slot either raises its bid for the same MU by one level or moves
/// on. MUs hold the best offer by payment minus true cost.
pub fn mgs_assign(truth: &GroundTruthView) -> Result<JointAssignment> {
    let (mcsps, mus, types) = (truth.mcsps(), truth.mus(), truth.types());
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for i in 0..mcsps {
        for z in truth.task_types_of(i) {
            slots.push((i, z));
        }
    }
    let prefs: Vec<Vec<(usize, usize)>> = slots
        .iter()
        .map(|&(i, z)| {
            let grid = &truth.grids[i][z];
            let mut list: Vec<(usize, usize, f64)> = (0..mus)
                .flat_map(|k| (0..grid.len()).map(move |p| (k, p)))
                .map(|(k, p)| (k, p, truth.mcsp_value(i, k, z, p)))
                .filter(|&(_, _, u)| u > 0.0)
                .collect();
            list.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
            });
            list.into_iter().map(|(k, p, _)| (k, p)).collect()
        })
        .collect();

    let mut next = vec![0usize; slots.len()];
    let mut matched = vec![false; slots.len()];
    let mut held: Vec<Option<Held>> = vec![None; mus];
    let mut held_level = vec![0usize; mus];
    // Every round consumes at least one proposal.
    let guard = prefs.iter().map(Vec::len).sum::<usize>().max(mcsps * mus * types);
    let mut rounds = 0usize;
    loop {
        let free: Vec<usize> = (0..slots.len())
            .filter(|&s| !matched[s] && next[s] < prefs[s].len())
            .collect();
        if free.is_empty() {
            break;
        }
        rounds += 1;
        if rounds > guard {
            return Err(Error::NonTermination(guard));
        }
        for s in free {
            if matched[s] {
                continue;
            }
            let (i, z) = slots[s];
            while next[s] < prefs[s].len() {
                let (k, p) = prefs[s][next[s]];
                next[s] += 1;
                let offer = Held {
                    slot: s,
                    mcsp: i,
                    utility: truth.mu_value(i, k, z, p),
                };
                if offer.utility < 0.0 {
                    continue;
                }
                let take = held[k].is_none_or(|h| mu_prefers(&offer, &h));
                if take {
                    if let Some(old) = held[k] {
                        matched[old.slot] = false;
                    }
                    held[k] = Some(offer);
                    held_level[k] = p;
                    matched[s] = true;
                    break;
                }
            }
        }
    }

    Ok(held
        .iter()
        .enumerate()
        .map(|(k, h)| {
            h.map(|h| Placement {
                mcsp: h.mcsp,
                task_type: slots[h.slot].1,
                payment_level: held_level[k],
            })
        })
        .collect())
}

/// Replays a fixed joint assignment every step.
#[derive(Debug, Clone)]
pub struct Planned {
    name: &'static str,
    /// `(mu, type, level)` for this MCSP.
    plan: Vec<(usize, usize, usize)>,
}

impl Planned {
    pub fn new(name: &'static str, mcsp: usize, y: &JointAssignment) -> Self {
        let plan = y
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.filter(|p| p.mcsp == mcsp).map(|p| (k, p.task_type, p.payment_level)))
            .collect();
        Planned { name, plan }
    }
}

impl McspStrategy for Planned {
    fn name(&self) -> &'static str {
        self.name
    }

    fn propose(&mut self, ctx: &StepContext<'_>, _rng: &mut SimRng) -> Result<Vec<Offer>> {
        let mut pool = TaskPool::new(ctx.tasks, ctx.types());
        self.plan
            .iter()
            .map(|&(k, z, p)| {
                let task_id = pool
                    .take(z)
                    .ok_or_else(|| Error::ContractViolation(format!("plan exceeds quota of type {z}")))?;
                Ok(Offer {
                    mcsp: ctx.mcsp,
                    mu: k,
                    task_id,
                    task_type: z,
                    payment_level: p,
                    payment: ctx.grids[z].value(p),
                })
            })
            .collect()
    }

    fn feedback(&mut self, _ctx: &StepContext<'_>, _results: &[OfferResult]) -> Result<()> {
        Ok(())
    }
}

/// Random MUs, random available types, uniform payment levels.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomOffers;

pub fn random_propose(ctx: &StepContext<'_>, rng: &mut SimRng) -> Vec<Offer> {
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
        let p = rng.gen_range(0..ctx.grids[z].len());
        offers.push(Offer {
            mcsp: ctx.mcsp,
            mu: k,
            task_id: pool.take(z).expect("available"),
            task_type: z,
            payment_level: p,
            payment: ctx.grids[z].value(p),
        });
    }
    offers.sort_by_key(|o| o.mu);
    offers
}

impl McspStrategy for RandomOffers {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, ctx: &StepContext<'_>, rng: &mut SimRng) -> Result<Vec<Offer>> {
        Ok(random_propose(ctx, rng))
    }

    fn feedback(&mut self, _ctx: &StepContext<'_>, _results: &[OfferResult]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::brute_force_assignment;
    use crate::domain::PaymentGrid;
    use crate::stability::find_blocking_pairs;
    use rand::SeedableRng;

    fn view(rev: Vec<Vec<Vec<f64>>>, cost: Vec<Vec<Vec<f64>>>, quotas: Vec<Vec<usize>>) -> GroundTruthView {
        let z = quotas[0].len();
        let i = quotas.len();
        GroundTruthView {
            expected_revenue: rev,
            expected_cost: cost,
            quotas,
            grids: vec![vec![PaymentGrid::linear(2.0, 21).unwrap(); z]; i],
        }
    }

    #[test]
    fn copt_forced_optimum() {
        let t = view(
            vec![vec![vec![2.0]], vec![vec![3.0]]],
            vec![vec![vec![1.0]], vec![vec![1.0]]],
            vec![vec![1], vec![1]],
        );
        let y = copt_assign(&t).unwrap();
        assert_eq!(y[0].unwrap().mcsp, 1);
        assert_eq!(expected_welfare(&y, &t), 2.0);
    }

    #[test]
    fn copt_all_negative_is_empty() {
        let t = view(
            vec![vec![vec![0.5]; 2]; 2],
            vec![vec![vec![1.0]; 2]; 2],
            vec![vec![1], vec![1]],
        );
        let y = copt_assign(&t).unwrap();
        assert!(y.iter().all(Option::is_none));
        assert_eq!(expected_welfare(&y, &t), 0.0);
    }

    #[test]
    fn copt_matches_oracle_on_seeded_instance() {
        let mut r = SimRng::seed_from_u64(21);
        let rev: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..5).map(|_| (0..2).map(|_| r.gen_range(1.0..4.0)).collect()).collect())
            .collect();
        let cost: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..5).map(|_| (0..2).map(|_| r.gen_range(0.0..1.5)).collect()).collect())
            .collect();
        let t = view(rev, cost, vec![vec![1, 1], vec![1, 1]]);
        let y = copt_assign(&t).unwrap();
        let (w, _) = copt_matrix(&t);
        let oracle = brute_force_assignment(&w.with_idle_columns()).unwrap().total_value;
        assert!((expected_welfare(&y, &t) - oracle).abs() < 1e-9);
    }

    #[test]
    fn mgs_single_platform_matches_hungarian_when_favourites_differ() {
        // Each task's favourite MU differs, so deferred acceptance ends at the
        // Hungarian matching with each MU paid its minimal acceptable level.
        let t = view(
            vec![vec![vec![1.9, 0.5], vec![0.4, 1.8], vec![0.3, 0.2]]],
            vec![vec![vec![0.15, 0.15], vec![0.25, 0.25], vec![0.1, 0.1]]],
            vec![vec![1, 1]],
        );
        let y = mgs_assign(&t).unwrap();
        assert_eq!(y[0].map(|p| (p.task_type, p.payment_level)), Some((0, 2)));
        assert_eq!(y[1].map(|p| (p.task_type, p.payment_level)), Some((1, 3)));
        assert_eq!(y[2], None);
        let mut w = WeightMatrix::new(3, 2, 0.0);
        for k in 0..3 {
            for z in 0..2 {
                w.set(k, z, t.expected_revenue[0][k][z]);
            }
        }
        let h = solve_max_weight_assignment(&w).unwrap();
        assert_eq!(h.matching, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn mgs_contest_escalates_until_rival_drops_out() {
        // Valuations 1.0 (MCSP 0) and 2.0 (MCSP 1), zero cost, step 0.1.
        let t = view(
            vec![vec![vec![1.0]], vec![vec![2.0]]],
            vec![vec![vec![0.0]], vec![vec![0.0]]],
            vec![vec![1], vec![1]],
        );
        let y = mgs_assign(&t).unwrap();
        let p = y[0].unwrap();
        assert_eq!(p.mcsp, 1);
        // MCSP 0 can bid up to 0.9 while keeping positive utility; 1.0 is the
        // first level it cannot profitably match.
        assert_eq!(p.payment_level, 10);
        assert!(find_blocking_pairs(&y, &t).unwrap().is_empty());
    }

    #[test]
    fn random_offers_fill_quota() {
        let grids = vec![PaymentGrid::linear(2.0, 21).unwrap(); 3];
        let tasks = [0, 1, 2];
        let ctx = StepContext {
            t: 0,
            mcsp: 0,
            mus: 10,
            tasks: &tasks,
            grids: &grids,
        };
        let a = random_propose(&ctx, &mut SimRng::seed_from_u64(4));
        let b = random_propose(&ctx, &mut SimRng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let mut types: Vec<usize> = a.iter().map(|o| o.task_type).collect();
        types.sort_unstable();
        assert_eq!(types, vec![0, 1, 2]);
    }

    #[test]
    fn random_payment_levels_are_uniform() {
        // Chi-square against uniform over 21 levels; 1% critical value for 20 dof is 37.57.
        let grids = vec![PaymentGrid::linear(2.0, 21).unwrap()];
        let tasks = [0];
        let ctx = StepContext {
            t: 0,
            mcsp: 0,
            mus: 1,
            tasks: &tasks,
            grids: &grids,
        };
        let mut r = SimRng::seed_from_u64(8);
        let mut hist = [0usize; 21];
        let draws = 10_000;
        for _ in 0..draws {
            hist[random_propose(&ctx, &mut r)[0].payment_level] += 1;
        }
        let e = draws as f64 / 21.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 37.57, "chi2 = {chi2}");
    }
}
