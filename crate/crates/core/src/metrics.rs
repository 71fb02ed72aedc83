//! Step metrics, Monte Carlo aggregation and the convergence analyses.

use serde::{Deserialize, Serialize};

use crate::sim::{StepRecord, StrategyKind};
use crate::stability::JointAssignment;

/// Sum of MCSP and MU utility over executed tasks.
pub fn social_welfare(record: &StepRecord) -> f64 {
    record
        .executions
        .iter()
        .map(|(_, o)| o.mcsp_utility + o.mu_utility)
        .sum()
}

/// Completed over available tasks; 1 when nothing was available.
pub fn completion_ratio(completed: usize, available: usize) -> f64 {
    if available == 0 {
        1.0
    } else {
        completed as f64 / available as f64
    }
}

/// Metric values of one step of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    pub social_welfare: f64,
    pub mcsp_utility: Vec<f64>,
    pub mu_utility_mean: f64,
    pub completion_ratio: f64,
    pub collisions: usize,
    pub energy: f64,
    /// Sum over MCSPs of their perception error, when any MCSP exposes one.
    pub perception_error: Option<f64>,
}

impl MetricRow {
    pub fn from_record(rec: &StepRecord, mus: usize) -> Self {
        let pe: Vec<f64> = rec.perception_error.iter().flatten().copied().collect();
        MetricRow {
            t: rec.t,
            social_welfare: social_welfare(rec),
            mcsp_utility: rec.mcsp_utility.clone(),
            mu_utility_mean: rec.mu_utility.iter().sum::<f64>() / mus.max(1) as f64,
            completion_ratio: completion_ratio(rec.completed, rec.available),
            collisions: rec.collisions,
            energy: rec.energy,
            perception_error: if pe.is_empty() { None } else { Some(pe.iter().sum()) },
        }
    }
}

/// Metric rows of one run plus its final joint assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub run_id: usize,
    pub seed: u64,
    pub strategy: StrategyKind,
    pub rows: Vec<MetricRow>,
    pub final_assignment: Option<JointAssignment>,
}

impl RunSeries {
    pub fn cum_collisions(&self) -> Vec<usize> {
        self.rows
            .iter()
            .scan(0usize, |acc, r| {
                *acc += r.collisions;
                Some(*acc)
            })
            .collect()
    }

    pub fn series(&self, f: impl Fn(&MetricRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Mean of `f` over the last `window` steps.
    pub fn window_mean(&self, window: usize, f: impl Fn(&MetricRow) -> f64) -> f64 {
        tail_mean(&self.series(f), window)
    }

    /// Collisions summed over steps `[from, to)`.
    pub fn collisions_between(&self, from: usize, to: usize) -> usize {
        self.rows[from.min(self.rows.len())..to.min(self.rows.len())]
            .iter()
            .map(|r| r.collisions)
            .sum()
    }
}

/// Mean of the last `window` entries (all entries if shorter); 0 when empty.
pub fn tail_mean(xs: &[f64], window: usize) -> f64 {
    let n = window.min(xs.len());
    if n == 0 {
        return 0.0;
    }
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

/// Trailing rolling mean with window `w`.
pub fn rolling_mean(xs: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (t, &x) in xs.iter().enumerate() {
        acc += x;
        if t >= w {
            acc -= xs[t - w];
        }
        out.push(acc / (t + 1).min(w) as f64);
    }
    out
}

/// Per-step mean and population standard deviation across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn aggregate(series: &[Vec<f64>]) -> MeanStd {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let n = series.len().max(1) as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
        let v = series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / n;
        mean[t] = m;
        std[t] = v.sqrt();
    }
    MeanStd { mean, std }
}

/// Aggregated metric series over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub social_welfare: MeanStd,
    pub mu_utility_mean: MeanStd,
    pub completion_ratio: MeanStd,
    pub cum_collisions: MeanStd,
    pub energy: MeanStd,
    pub perception_error: Option<MeanStd>,
}

pub fn aggregate_runs(runs: &[RunSeries]) -> AggregateSeries {
    let pick = |f: &dyn Fn(&MetricRow) -> f64| -> MeanStd {
        aggregate(&runs.iter().map(|r| r.series(f)).collect::<Vec<_>>())
    };
    let has_pe = runs
        .iter()
        .all(|r| r.rows.iter().all(|row| row.perception_error.is_some()))
        && !runs.is_empty();
    AggregateSeries {
        social_welfare: pick(&|r| r.social_welfare),
        mu_utility_mean: pick(&|r| r.mu_utility_mean),
        completion_ratio: pick(&|r| r.completion_ratio),
        cum_collisions: aggregate(
            &runs
                .iter()
                .map(|r| r.cum_collisions().into_iter().map(|c| c as f64).collect())
                .collect::<Vec<_>>(),
        ),
        energy: pick(&|r| r.energy),
        perception_error: has_pe.then(|| pick(&|r| r.perception_error.unwrap_or(0.0))),
    }
}

/// Converged-window readings of one strategy, averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergedSummary {
    pub strategy: StrategyKind,
    pub runs: usize,
    pub window: usize,
    pub social_welfare: f64,
    pub social_welfare_std: f64,
    pub mcsp_utility: Vec<f64>,
    pub mu_utility_mean: f64,
    pub completion_ratio: f64,
    pub cum_collisions: f64,
    pub energy: f64,
    pub perception_error: Option<f64>,
    /// Social welfare relative to COPT, filled in when COPT ran alongside.
    pub welfare_vs_copt: Option<f64>,
}

pub fn summarize(strategy: StrategyKind, runs: &[RunSeries], window: usize) -> ConvergedSummary {
    let per_run = |f: &dyn Fn(&RunSeries) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let welfare = per_run(&|r| r.window_mean(window, |m| m.social_welfare));
    let w_mean = mean(welfare.clone());
    let w_std = (welfare.iter().map(|w| (w - w_mean).powi(2)).sum::<f64>() / welfare.len().max(1) as f64).sqrt();
    let mcsps = runs.first().and_then(|r| r.rows.first()).map_or(0, |row| row.mcsp_utility.len());
    let mcsp_utility = (0..mcsps)
        .map(|i| mean(per_run(&|r| r.window_mean(window, |m| m.mcsp_utility[i]))))
        .collect();
    let has_pe = runs.iter().all(|r| r.rows.last().is_some_and(|m| m.perception_error.is_some()));
    ConvergedSummary {
        strategy,
        runs: runs.len(),
        window,
        social_welfare: w_mean,
        social_welfare_std: w_std,
        mcsp_utility,
        mu_utility_mean: mean(per_run(&|r| r.window_mean(window, |m| m.mu_utility_mean))),
        completion_ratio: mean(per_run(&|r| r.window_mean(window, |m| m.completion_ratio))),
        cum_collisions: mean(per_run(&|r| r.cum_collisions().last().copied().unwrap_or(0) as f64)),
        energy: mean(per_run(&|r| r.window_mean(window, |m| m.energy))),
        perception_error: (has_pe && !runs.is_empty())
            .then(|| mean(per_run(&|r| r.rows.last().and_then(|m| m.perception_error).unwrap_or(0.0)))),
        welfare_vs_copt: None,
    }
}

/// Fill `welfare_vs_copt` for every summary when a COPT summary is present.
pub fn attach_copt_ratios(summaries: &mut [ConvergedSummary]) {
    let Some(copt) = summaries
        .iter()
        .find(|s| s.strategy == StrategyKind::Copt)
        .map(|s| s.social_welfare)
    else {
        return;
    };
    for s in summaries.iter_mut() {
        s.welfare_vs_copt = (copt != 0.0).then(|| s.social_welfare / copt);
    }
}

/// Result of fitting `y(t) ~ floor + A exp(-lambda t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda: f64,
    pub floor: f64,
    pub amplitude: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    /// Set for constant series, where no rate can be identified.
    pub degenerate: bool,
}

const TINY: f64 = 1e-12;

/// Least squares of `ln(y - floor)` against `t`; returns slope, intercept, R².
fn log_linear(ys: &[f64], floor: f64) -> (f64, f64, f64) {
    let n = ys.len() as f64;
    let logs: Vec<f64> = ys.iter().map(|&y| (y - floor).max(TINY).ln()).collect();
    let t_mean = (n - 1.0) / 2.0;
    let l_mean = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, &l) in logs.iter().enumerate() {
        let dt = t as f64 - t_mean;
        let dl = l - l_mean;
        sxy += dt * dl;
        sxx += dt * dt;
        syy += dl * dl;
    }
    if sxx == 0.0 {
        return (0.0, l_mean, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = l_mean - slope * t_mean;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fit an exponential decay toward an unknown floor.
///
/// The floor is searched on a grid over `[0, min(y))` and refined by golden
/// section; the floor with the best R² of the log-linear fit wins. Trailing
/// samples equal to the final value sit on the floor and are left out.
pub fn fit_exponential_decay(series: &[f64]) -> DecayFit {
    let degenerate = DecayFit {
        lambda: 0.0,
        floor: series.first().copied().unwrap_or(0.0),
        amplitude: 0.0,
        r_squared: f64::NAN,
        degenerate: true,
    };
    let mut end = series.len();
    if let Some(&last) = series.last() {
        while end > 0 && series[end - 1] == last {
            end -= 1;
        }
    }
    if end < 2 {
        return degenerate;
    }
    let series = &series[..end];
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= TINY * hi.abs().max(1.0) {
        return degenerate;
    }
    // Floors strictly below the minimum keep every log argument positive.
    let top = lo - (hi - lo) * 1e-9;
    let base = lo.min(0.0).min(top);
    let score = |f: f64| log_linear(series, f).2;
    let grid = 200;
    let mut best_f = base;
    let mut best_r = score(base);
    for g in 1..=grid {
        let f = base + (top - base) * g as f64 / grid as f64;
        let r = score(f);
        if r > best_r {
            best_r = r;
            best_f = f;
        }
    }
    let step = (top - base) / grid as f64;
    let (mut a, mut b) = ((best_f - step).max(base), (best_f + step).min(top));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if score(c) >= score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = (a + b) / 2.0;
    if score(mid) > best_r {
        best_f = mid;
    }
    let (slope, intercept, r2) = log_linear(series, best_f);
    DecayFit {
        lambda: -slope,
        floor: best_f,
        amplitude: intercept.exp(),
        r_squared: r2,
        degenerate: false,
    }
}

/// `final_mean_utility >= proxy - L * residual - slack`.
pub fn utility_gap_bound_check(final_mean_utility: f64, proxy: f64, residual_error: f64, l_bound: f64, slack: f64) -> bool {
    final_mean_utility >= proxy - l_bound * residual_error - slack
}

/// Whether `xs` never increases.
pub fn is_non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}
