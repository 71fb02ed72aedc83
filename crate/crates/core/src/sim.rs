//! Per-step offer / response / execution protocol, episodes and Monte Carlo runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{copt_assign, mgs_assign, Planned, RandomOffers};
use crate::domain::{sample_execution, ExecutionOutcome, Offer, PaymentGrid, RejectReason, ResponseFeedback};
use crate::error::{Error, Result};
use crate::metrics::{MetricRow, RunSeries};
use crate::mu::{ForcedMu, MuEstimator, OracleMu};
use crate::pacmab::{ArmTable, Pacmab};
use crate::prism::Prism;
use crate::rng::{self, label, SimRng};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::stability::{JointAssignment, Placement};
use crate::strategy::{McspStrategy, MuPolicy, OfferResult, StepContext};

/// Strategy pairing: the MCSP algorithm and the MU policy it runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Copt,
    Mgs,
    Prism,
    Pacmab,
    Cmab,
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Copt,
        StrategyKind::Mgs,
        StrategyKind::Prism,
        StrategyKind::Pacmab,
        StrategyKind::Cmab,
        StrategyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Copt => "copt",
            StrategyKind::Mgs => "mgs",
            StrategyKind::Prism => "prism",
            StrategyKind::Pacmab => "pacmab",
            StrategyKind::Cmab => "cmab",
            StrategyKind::Random => "random",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::config("strategies", format!("unknown strategy `{s}`")))
    }
}

/// Everything that happened in one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// All offers, grouped by MCSP in MCSP order.
    pub offers: Vec<Offer>,
    /// Response to each offer, parallel to `offers`.
    pub responses: Vec<ResponseFeedback>,
    /// Executed tasks as `(offer index, outcome)`.
    pub executions: Vec<(usize, ExecutionOutcome)>,
    pub collisions: usize,
    pub mcsp_utility: Vec<f64>,
    pub mu_utility: Vec<f64>,
    pub completed: usize,
    pub available: usize,
    pub energy: f64,
    /// Perception error per MCSP at the start of the step, when exposed.
    pub perception_error: Vec<Option<f64>>,
}

impl StepRecord {
    /// Accepted placements of this step, indexed by MU.
    pub fn assignment(&self, mus: usize) -> JointAssignment {
        let mut y = vec![None; mus];
        for &(idx, _) in &self.executions {
            let o = &self.offers[idx];
            y[o.mu] = Some(Placement {
                mcsp: o.mcsp,
                task_type: o.task_type,
                payment_level: o.payment_level,
            });
        }
        y
    }
}

/// One running market: scenario, agents and their random streams.
pub struct Simulation {
    pub scenario: Scenario,
    mcsps: Vec<Box<dyn McspStrategy>>,
    mus: Vec<Box<dyn MuPolicy>>,
    tasks: Vec<Vec<usize>>,
    grids: Vec<Vec<PaymentGrid>>,
    mcsp_rng: Vec<SimRng>,
    mu_rng: Vec<SimRng>,
    env_rng: SimRng,
    t: usize,
}

fn oracle_costs(scenario: &Scenario, k: usize) -> OracleMu {
    OracleMu {
        expected_cost: scenario.truth.expected_cost.iter().map(|per_k| per_k[k].clone()).collect(),
    }
}

/// Agents for a strategy pairing on a given scenario.
pub fn build_agents(
    kind: StrategyKind,
    scenario: &Scenario,
) -> Result<(Vec<Box<dyn McspStrategy>>, Vec<Box<dyn MuPolicy>>)> {
    let cfg = &scenario.config;
    let truth = &scenario.truth;
    let (i_n, k_n, z_n) = (cfg.mcsps, cfg.mus, cfg.task_types);
    let learners = || -> Vec<Box<dyn MuPolicy>> {
        (0..k_n)
            .map(|_| {
                Box::new(MuEstimator::new(z_n, cfg.mu_learning.epsilon0, cfg.mu_learning.epsilon_decay))
                    as Box<dyn MuPolicy>
            })
            .collect()
    };
    let oracles = || -> Vec<Box<dyn MuPolicy>> {
        (0..k_n)
            .map(|k| Box::new(oracle_costs(scenario, k)) as Box<dyn MuPolicy>)
            .collect()
    };
    let out = match kind {
        StrategyKind::Copt => {
            let y = copt_assign(truth)?;
            let m = (0..i_n)
                .map(|i| Box::new(Planned::new("copt", i, &y)) as Box<dyn McspStrategy>)
                .collect();
            let mus = (0..k_n).map(|_| Box::new(ForcedMu) as Box<dyn MuPolicy>).collect();
            (m, mus)
        }
        StrategyKind::Mgs => {
            let y = mgs_assign(truth)?;
            let m = (0..i_n)
                .map(|i| Box::new(Planned::new("mgs", i, &y)) as Box<dyn McspStrategy>)
                .collect();
            (m, oracles())
        }
        StrategyKind::Prism => {
            let m = (0..i_n)
                .map(|i| {
                    Box::new(Prism::from_truth(i, truth, cfg.prism.epsilon0, cfg.prism.epsilon_decay))
                        as Box<dyn McspStrategy>
                })
                .collect();
            (m, oracles())
        }
        StrategyKind::Pacmab | StrategyKind::Cmab => {
            let prune = kind == StrategyKind::Pacmab;
            let m = (0..i_n)
                .map(|_| {
                    let table = ArmTable::new(i_n, k_n, z_n, cfg.payment_levels, cfg.pacmab.ucb_c, cfg.pacmab.win_threshold);
                    Box::new(Pacmab::new(table, prune)) as Box<dyn McspStrategy>
                })
                .collect();
            (m, learners())
        }
        StrategyKind::Random => {
            let m = (0..i_n)
                .map(|_| Box::new(RandomOffers) as Box<dyn McspStrategy>)
                .collect();
            (m, learners())
        }
    };
    Ok(out)
}

impl Simulation {
    pub fn new(config: &ScenarioConfig, kind: StrategyKind, seed: u64) -> Result<Self> {
        let scenario = Scenario::generate(config, seed)?;
        let (mcsps, mus) = build_agents(kind, &scenario)?;
        Ok(Self::with_agents(scenario, mcsps, mus, seed))
    }

    pub fn with_agents(
        scenario: Scenario,
        mcsps: Vec<Box<dyn McspStrategy>>,
        mus: Vec<Box<dyn MuPolicy>>,
        seed: u64,
    ) -> Self {
        let tasks = (0..scenario.config.mcsps)
            .map(|i| scenario.truth.task_types_of(i))
            .collect();
        let grids = scenario.truth.grids.clone();
        let mcsp_rng = (0..mcsps.len())
            .map(|i| rng::stream(seed, &[label::MCSP, i as u64]))
            .collect();
        let mu_rng = (0..mus.len())
            .map(|k| rng::stream(seed, &[label::MU, k as u64]))
            .collect();
        Simulation {
            scenario,
            mcsps,
            mus,
            tasks,
            grids,
            mcsp_rng,
            mu_rng,
            env_rng: rng::stream(seed, &[label::ENVIRONMENT]),
            t: 0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    fn check_offers(&self, i: usize, offers: &[Offer]) -> Result<()> {
        let t = self.t;
        let mut mu_seen = vec![false; self.mus.len()];
        let mut task_seen = vec![false; self.tasks[i].len()];
        for o in offers {
            if o.mcsp != i {
                return Err(Error::protocol(t, format!("MCSP {i} emitted an offer tagged {}", o.mcsp)));
            }
            if o.mu >= mu_seen.len() || std::mem::replace(&mut mu_seen[o.mu], true) {
                return Err(Error::protocol(t, format!("MCSP {i}: duplicate or unknown MU {}", o.mu)));
            }
            if o.task_id >= task_seen.len() || std::mem::replace(&mut task_seen[o.task_id], true) {
                return Err(Error::protocol(
                    t,
                    format!("MCSP {i}: task {} reused or beyond quota", o.task_id),
                ));
            }
            if self.tasks[i][o.task_id] != o.task_type {
                return Err(Error::protocol(t, format!("MCSP {i}: task {} has the wrong type", o.task_id)));
            }
            let grid = &self.grids[i][o.task_type];
            if o.payment_level >= grid.len() || grid.value(o.payment_level) != o.payment {
                return Err(Error::protocol(t, format!("MCSP {i}: payment off the grid for MU {}", o.mu)));
            }
        }
        Ok(())
    }

    /// Run one offer / response / execution round.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.t;
        let i_n = self.mcsps.len();
        let k_n = self.mus.len();
        let truth = &self.scenario.truth;
        let perception_error: Vec<Option<f64>> = self.mcsps.iter().map(|m| m.perception_error(truth)).collect();

        let mut offers: Vec<Offer> = Vec::new();
        let mut ranges = Vec::with_capacity(i_n);
        for i in 0..i_n {
            let ctx = StepContext {
                t,
                mcsp: i,
                mus: k_n,
                tasks: &self.tasks[i],
                grids: &self.grids[i],
            };
            let mine = self.mcsps[i].propose(&ctx, &mut self.mcsp_rng[i])?;
            self.check_offers(i, &mine)?;
            let start = offers.len();
            offers.extend(mine);
            ranges.push(start..offers.len());
        }

        let mut by_mu: Vec<Vec<usize>> = vec![Vec::new(); k_n];
        for (n, o) in offers.iter().enumerate() {
            by_mu[o.mu].push(n);
        }

        let mut responses = vec![ResponseFeedback::Accept; offers.len()];
        let mut executions = Vec::new();
        let mut collisions = 0;
        let mut mcsp_utility = vec![0.0; i_n];
        let mut mu_utility = vec![0.0; k_n];
        let mut energy = 0.0;
        for k in 0..k_n {
            if by_mu[k].is_empty() {
                continue;
            }
            let mine: Vec<Offer> = by_mu[k].iter().map(|&n| offers[n]).collect();
            let decision = self.mus[k].decide(&mine, &mut self.mu_rng[k]);
            if decision.feedback.len() != mine.len() {
                return Err(Error::protocol(t, format!("MU {k} answered {} of {} offers", decision.feedback.len(), mine.len())));
            }
            let accepted = decision.accepted;
            if let Some(a) = accepted {
                if a >= mine.len() || !decision.feedback[a].is_accept() {
                    return Err(Error::protocol(t, format!("MU {k} accepted an offer it did not mark")));
                }
            }
            for (m, fb) in decision.feedback.iter().enumerate() {
                match fb {
                    ResponseFeedback::Accept if accepted != Some(m) => {
                        return Err(Error::protocol(t, format!("MU {k} accepted more than one offer")));
                    }
                    ResponseFeedback::Reject(RejectReason::ChoseCompetitor { mcsp, payment, task_type }) => {
                        let truthful = accepted.map(|a| &mine[a]).is_some_and(|w| {
                            w.mcsp == *mcsp && w.payment == *payment && w.task_type == *task_type
                        });
                        if !truthful {
                            return Err(Error::protocol(t, format!("MU {k} misreported the winning offer")));
                        }
                        collisions += 1;
                    }
                    _ => {}
                }
                responses[by_mu[k][m]] = *fb;
            }
            if let Some(a) = accepted {
                let o = mine[a];
                let task = &self.scenario.tasks[o.task_type];
                let outcome = sample_execution(
                    &self.scenario.mus[k],
                    o.mcsp,
                    task,
                    &self.scenario.config.noise,
                    &mut self.env_rng,
                )
                .settle(task.base_payment[o.mcsp], o.payment);
                self.mus[k].observe(o.task_type, outcome.effort_cost);
                mcsp_utility[o.mcsp] += outcome.mcsp_utility;
                mu_utility[k] += outcome.mu_utility;
                energy += outcome.total_energy();
                executions.push((by_mu[k][a], outcome));
            }
        }
        executions.sort_by_key(|&(n, _)| n);

        let mut outcome_of = vec![None; offers.len()];
        for &(n, o) in &executions {
            outcome_of[n] = Some(o);
        }
        for i in 0..i_n {
            let results: Vec<OfferResult> = ranges[i]
                .clone()
                .map(|n| OfferResult {
                    offer: offers[n],
                    feedback: responses[n],
                    outcome: outcome_of[n],
                })
                .collect();
            let ctx = StepContext {
                t,
                mcsp: i,
                mus: k_n,
                tasks: &self.tasks[i],
                grids: &self.grids[i],
            };
            self.mcsps[i].feedback(&ctx, &results)?;
        }

        let available = self.tasks.iter().map(Vec::len).sum();
        let completed = executions.len();
        self.t += 1;
        Ok(StepRecord {
            t,
            offers,
            responses,
            executions,
            collisions,
            mcsp_utility,
            mu_utility,
            completed,
            available,
            energy,
            perception_error,
        })
    }
}

/// Full record sequence of one run.
pub fn run_episode(config: &ScenarioConfig, kind: StrategyKind, seed: u64) -> Result<Vec<StepRecord>> {
    let mut sim = Simulation::new(config, kind, seed)?;
    (0..config.steps).map(|_| sim.step()).collect()
}

/// Run one episode keeping only per-step metric rows and the last assignment.
pub fn run_series(config: &ScenarioConfig, kind: StrategyKind, run_id: usize, seed: u64) -> Result<RunSeries> {
    let mut sim = Simulation::new(config, kind, seed)?;
    let mut rows = Vec::with_capacity(config.steps);
    let mut last = None;
    for _ in 0..config.steps {
        let rec = sim.step()?;
        rows.push(MetricRow::from_record(&rec, config.mus));
        last = Some(rec);
    }
    Ok(RunSeries {
        run_id,
        seed,
        strategy: kind,
        rows,
        final_assignment: last.map(|r| r.assignment(config.mus)),
    })
}

/// Seeds for `runs` Monte Carlo repetitions under a root seed.
pub fn run_seeds(root: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|r| rng::derive_seed(root, &[label::RUN, r])).collect()
}

/// Independent runs in parallel; results come back in seed order.
pub fn run_monte_carlo(config: &ScenarioConfig, kind: StrategyKind, seeds: &[u64]) -> Result<Vec<RunSeries>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(r, &s)| run_series(config, kind, r, s))
        .collect()
}
