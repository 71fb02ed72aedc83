//! Entities of the crowdsensing market and the per-task effort, quality and
//! utility formulas.
//!
//! Times are in seconds, energies in joules, sizes in bits and money in
//! abstract monetary units.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};

/// Ordered set of payment levels an MCSP may offer for one task type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentGrid(Vec<f64>);

impl PaymentGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProfile(format!(
                "payment grid needs at least 2 levels, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("payment grid has non-finite values".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile("payment grid must be strictly increasing".into()));
        }
        Ok(PaymentGrid(values))
    }

    /// `levels` values spaced evenly over `[0, max]`.
    pub fn linear(max: f64, levels: usize) -> Result<Self> {
        if levels < 2 || max <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "linear grid needs levels >= 2 and max > 0 (levels={levels}, max={max})"
            )));
        }
        let step = max / (levels - 1) as f64;
        Self::new((0..levels).map(|p| p as f64 * step).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, level: usize) -> f64 {
        self.0[level]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max_value(&self) -> f64 {
        *self.0.last().expect("grid is non-empty")
    }

    pub fn top_level(&self) -> usize {
        self.0.len() - 1
    }

    /// Highest level whose value does not exceed `x`; `None` when `x` is below level 0.
    pub fn floor_level(&self, x: f64) -> Option<usize> {
        let idx = self.0.partition_point(|&v| v <= x);
        idx.checked_sub(1)
    }

    /// Lowest level whose value is strictly greater than `x`.
    pub fn level_above(&self, x: f64) -> Option<usize> {
        let idx = self.0.partition_point(|&v| v <= x);
        (idx < self.0.len()).then_some(idx)
    }

    /// Lowest level whose value is at least `x`.
    pub fn level_at_least(&self, x: f64) -> Option<usize> {
        let idx = self.0.partition_point(|&v| v < x);
        (idx < self.0.len()).then_some(idx)
    }

    /// Level whose value is closest to `x` (ties go to the lower level).
    pub fn nearest_level(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_gap = f64::INFINITY;
        for (p, &v) in self.0.iter().enumerate() {
            let gap = (v - x).abs();
            if gap < best_gap {
                best = p;
                best_gap = gap;
            }
        }
        best
    }
}

/// Characteristics of one task type, plus the per-MCSP commercial terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskTypeSpec {
    pub index: usize,
    /// Raw sensing data size d_z (bits).
    pub data_bits: f64,
    /// Processing complexity c_z (CPU cycles per bit).
    pub cycles_per_bit: f64,
    /// Processed result size s_z (bits).
    pub result_bits: f64,
    /// Base payment w^i_z, one entry per MCSP.
    pub base_payment: Vec<f64>,
    /// Quota rho^i_z, one entry per MCSP.
    pub quota: Vec<usize>,
    /// Payment grid P^i_z, one entry per MCSP.
    pub payment_grid: Vec<PaymentGrid>,
}

impl TaskTypeSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.data_bits, self.cycles_per_bit, self.result_bits];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "task type {}: sizes and complexity must be positive",
                self.index
            )));
        }
        if self.result_bits >= self.data_bits {
            return Err(Error::InvalidProfile(format!(
                "task type {}: result size must be smaller than data size",
                self.index
            )));
        }
        if self.base_payment.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "task type {}: base payments must be positive",
                self.index
            )));
        }
        let n = self.base_payment.len();
        if self.quota.len() != n || self.payment_grid.len() != n {
            return Err(Error::InvalidProfile(format!(
                "task type {}: per-MCSP vectors disagree in length",
                self.index
            )));
        }
        Ok(())
    }
}

/// Capabilities and latent statistics of one mobile unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuProfile {
    pub index: usize,
    pub cpu_hz: f64,
    pub p_sense: f64,
    pub p_comp: f64,
    pub p_comm: f64,
    /// Time-cost weight (monetary per second).
    pub alpha: f64,
    /// Energy-cost weight (monetary per joule).
    pub beta: f64,
    /// Mean sensing time per task type.
    pub mean_sense_time: Vec<f64>,
    /// Mean upload time, indexed `[mcsp][type]`.
    pub mean_comm_time: Vec<Vec<f64>>,
    /// Latent mean quality, indexed `[mcsp][type]`, in `[0, 1]`.
    pub quality_mean: Vec<Vec<f64>>,
}

impl MuProfile {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.cpu_hz, self.p_sense, self.p_comp, self.p_comm, self.alpha, self.beta];
        if scalars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "MU {}: frequency, powers and cost weights must be positive",
                self.index
            )));
        }
        let times = self
            .mean_sense_time
            .iter()
            .chain(self.mean_comm_time.iter().flatten());
        if times.into_iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidProfile(format!("MU {}: negative mean time", self.index)));
        }
        if self
            .quality_mean
            .iter()
            .flatten()
            .any(|q| !(0.0..=1.0).contains(q))
        {
            return Err(Error::InvalidProfile(format!(
                "MU {}: quality means must lie in [0, 1]",
                self.index
            )));
        }
        Ok(())
    }
}

/// A task offer `<task, payment>` from one MCSP to one MU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub mcsp: usize,
    pub mu: usize,
    pub task_id: usize,
    pub task_type: usize,
    pub payment_level: usize,
    pub payment: f64,
}

/// Identity `(i, k, z, p)` of a possible agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contract {
    pub mcsp: usize,
    pub mu: usize,
    pub task_type: usize,
    pub payment_level: usize,
}

impl From<&Offer> for Contract {
    fn from(o: &Offer) -> Self {
        Contract {
            mcsp: o.mcsp,
            mu: o.mu,
            task_type: o.task_type,
            payment_level: o.payment_level,
        }
    }
}

/// Size of the contract set X.
pub fn contract_space_size(mcsps: usize, mus: usize, types: usize, levels: usize) -> usize {
    mcsps * mus * types * levels
}

/// Realized effort, quality and money for one executed task.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub t_sense: f64,
    pub t_comp: f64,
    pub t_comm: f64,
    pub e_sense: f64,
    pub e_comp: f64,
    pub e_comm: f64,
    pub effort_cost: f64,
    pub quality: f64,
    pub realized_revenue: f64,
    pub payment: f64,
    pub mcsp_utility: f64,
    pub mu_utility: f64,
}

impl ExecutionOutcome {
    pub fn total_time(&self) -> f64 {
        self.t_sense + self.t_comp + self.t_comm
    }

    pub fn total_energy(&self) -> f64 {
        self.e_sense + self.e_comp + self.e_comm
    }

    /// Fill the monetary fields once the base payment and agreed payment are known.
    pub fn settle(mut self, base_payment: f64, payment: f64) -> Self {
        self.realized_revenue = realized_revenue(base_payment, self.quality)
            .expect("sampled quality is clamped to [0, 1]");
        self.payment = payment;
        self.mcsp_utility = mcsp_offer_utility(self.realized_revenue, payment);
        self.mu_utility = mu_offer_utility(payment, self.effort_cost);
        self
    }
}

/// Why an MU rejected an offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    NegativeUtility,
    /// The MU accepted MCSP `mcsp`'s offer of type `task_type` at `payment`.
    ChoseCompetitor {
        mcsp: usize,
        payment: f64,
        task_type: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResponseFeedback {
    Accept,
    Reject(RejectReason),
}

impl ResponseFeedback {
    pub fn is_accept(&self) -> bool {
        matches!(self, ResponseFeedback::Accept)
    }
}

/// Stochastic knobs for effort times and quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Coefficient of variation of sensing and upload times.
    pub time_cv: f64,
    /// Standard deviation of per-execution quality around its latent mean.
    pub quality_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            time_cv: 0.2,
            quality_sigma: 0.1,
        }
    }
}

impl NoiseModel {
    pub fn deterministic() -> Self {
        NoiseModel {
            time_cv: 0.0,
            quality_sigma: 0.0,
        }
    }
}

/// Processing time `c_z * d_z / f_local`.
pub fn compute_computation_time(cycles_per_bit: f64, data_bits: f64, cpu_hz: f64) -> Result<f64> {
    if !(cpu_hz.is_finite() && cpu_hz > 0.0) {
        return Err(Error::InvalidProfile(format!("CPU frequency must be positive, got {cpu_hz}")));
    }
    Ok(cycles_per_bit * data_bits / cpu_hz)
}

/// `(1 + q) * w`.
pub fn realized_revenue(base_payment: f64, quality: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&quality) {
        return Err(Error::ContractViolation(format!("quality {quality} outside [0, 1]")));
    }
    Ok((1.0 + quality) * base_payment)
}

pub fn mcsp_offer_utility(revenue: f64, payment: f64) -> f64 {
    revenue - payment
}

pub fn mu_offer_utility(payment: f64, effort_cost: f64) -> f64 {
    payment - effort_cost
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, cv: f64, rng: &mut R) -> f64 {
    let sd = mean * cv;
    if !(sd > 0.0) {
        return mean.max(0.0);
    }
    let normal = Normal::new(mean, sd).expect("finite positive sd");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

/// Draw one execution of a type-`task.index` task by `mu` for MCSP `mcsp`.
///
/// The monetary fields are left at zero; call [`ExecutionOutcome::settle`].
pub fn sample_execution<R: Rng + ?Sized>(
    mu: &MuProfile,
    mcsp: usize,
    task: &TaskTypeSpec,
    noise: &NoiseModel,
    rng: &mut R,
) -> ExecutionOutcome {
    let z = task.index;
    let t_sense = truncated_normal(mu.mean_sense_time[z], noise.time_cv, rng);
    let t_comp = compute_computation_time(task.cycles_per_bit, task.data_bits, mu.cpu_hz)
        .expect("validated profile");
    let t_comm = truncated_normal(mu.mean_comm_time[mcsp][z], noise.time_cv, rng);
    let q_mean = mu.quality_mean[mcsp][z];
    let quality = if noise.quality_sigma > 0.0 {
        let n = Normal::new(q_mean, noise.quality_sigma).expect("finite sigma");
        n.sample(rng).clamp(0.0, 1.0)
    } else {
        q_mean.clamp(0.0, 1.0)
    };
    let e_sense = t_sense * mu.p_sense;
    let e_comp = t_comp * mu.p_comp;
    let e_comm = t_comm * mu.p_comm;
    let effort_cost = mu.alpha * (t_sense + t_comp + t_comm) + mu.beta * (e_sense + e_comp + e_comm);
    ExecutionOutcome {
        t_sense,
        t_comp,
        t_comm,
        e_sense,
        e_comp,
        e_comm,
        effort_cost,
        quality,
        ..Default::default()
    }
}

/// Mean of a Gaussian truncated below at zero.
pub fn expected_truncated_time(mean: f64, cv: f64) -> f64 {
    let sd = mean * cv;
    if !(sd > 0.0) {
        return mean.max(0.0);
    }
    let std = StatNormal::new(0.0, 1.0).expect("standard normal");
    let a = -mean / sd;
    mean + sd * std.pdf(a) / (1.0 - std.cdf(a))
}

/// Mean of `clamp(X, 0, 1)` for `X ~ N(mean, sigma)`.
pub fn expected_clamped_quality(mean: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return mean.clamp(0.0, 1.0);
    }
    let std = StatNormal::new(0.0, 1.0).expect("standard normal");
    let a = (0.0 - mean) / sigma;
    let b = (1.0 - mean) / sigma;
    mean * (std.cdf(b) - std.cdf(a)) + sigma * (std.pdf(a) - std.pdf(b)) + (1.0 - std.cdf(b))
}

/// Expected effort cost of `mu` on type `task.index` for MCSP `mcsp`.
pub fn expected_effort_cost(mu: &MuProfile, mcsp: usize, task: &TaskTypeSpec, noise: &NoiseModel) -> f64 {
    let z = task.index;
    let t_sense = expected_truncated_time(mu.mean_sense_time[z], noise.time_cv);
    let t_comp = compute_computation_time(task.cycles_per_bit, task.data_bits, mu.cpu_hz)
        .expect("validated profile");
    let t_comm = expected_truncated_time(mu.mean_comm_time[mcsp][z], noise.time_cv);
    let energy = t_sense * mu.p_sense + t_comp * mu.p_comp + t_comm * mu.p_comm;
    mu.alpha * (t_sense + t_comp + t_comm) + mu.beta * energy
}

/// Expected revenue `E{(1 + q) w}` of MCSP `mcsp` when `mu` performs type `task.index`.
pub fn expected_revenue(mu: &MuProfile, mcsp: usize, task: &TaskTypeSpec, noise: &NoiseModel) -> f64 {
    let q = expected_clamped_quality(mu.quality_mean[mcsp][task.index], noise.quality_sigma);
    (1.0 + q) * task.base_payment[mcsp]
}
