//! Scenario parameters, JSON ingestion with dotted-key overrides, and the
//! per-run latent draw (task types, MU profiles, base payments).

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    expected_effort_cost, expected_revenue, MuProfile, NoiseModel, PaymentGrid, TaskTypeSpec,
};
use crate::error::{Error, Result};
use crate::rng::{self, label};

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }

    fn check(&self, key: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::config(key, "range needs finite lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    pub data_mbit: Range,
    pub cycles_per_bit: Range,
    pub result_mbit: Range,
    pub base_payment: Range,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            data_mbit: Range::new(50.0, 100.0),
            cycles_per_bit: Range::new(200.0, 300.0),
            result_mbit: Range::new(10.0, 20.0),
            base_payment: Range::new(1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuParams {
    pub cpu_ghz: Range,
    pub sense_ms: Range,
    pub rate_mbps: Range,
    pub p_sense: f64,
    pub p_comp: f64,
    pub p_comm: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MuParams {
    fn default() -> Self {
        MuParams {
            cpu_ghz: Range::new(1.0, 2.0),
            sense_ms: Range::new(60.0, 180.0),
            rate_mbps: Range::new(40.0, 80.0),
            p_sense: 0.5,
            p_comp: 1.0,
            p_comm: 0.2,
            alpha: 0.01,
            beta: 0.004,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationParams {
    pub epsilon0: f64,
    pub epsilon_decay: f64,
}

impl Default for ExplorationParams {
    fn default() -> Self {
        ExplorationParams {
            epsilon0: 1.0,
            epsilon_decay: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacmabParams {
    pub ucb_c: f64,
    pub win_threshold: f64,
}

impl Default for PacmabParams {
    fn default() -> Self {
        PacmabParams {
            ucb_c: 2.0,
            win_threshold: 0.1,
        }
    }
}

/// Everything needed to generate and simulate one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mcsps: usize,
    pub mus: usize,
    pub task_types: usize,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub payment_levels: usize,
    /// Uniform quota per (MCSP, type), used unless `quotas` is set.
    pub quota: usize,
    /// Explicit quotas indexed `[mcsp][type]`.
    pub quotas: Option<Vec<Vec<usize>>>,
    pub task: TaskParams,
    pub mu: MuParams,
    pub noise: NoiseModel,
    pub prism: ExplorationParams,
    pub mu_learning: ExplorationParams,
    pub pacmab: PacmabParams,
    /// Rolling window for converged readings.
    pub window: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScenarioConfig {
    /// Desk-scale profile: I=2, K=20, 20 tasks in total, Z=5, T=5000, 20 runs.
    pub fn desk() -> Self {
        ScenarioConfig {
            mcsps: 2,
            mus: 20,
            task_types: 5,
            steps: 5000,
            runs: 20,
            seed: 1,
            payment_levels: 20,
            quota: 2,
            quotas: None,
            task: TaskParams::default(),
            mu: MuParams::default(),
            noise: NoiseModel::default(),
            prism: ExplorationParams::default(),
            mu_learning: ExplorationParams::default(),
            pacmab: PacmabParams::default(),
            window: 100,
        }
    }

    /// Full-scale profile: K=50, 25 tasks per MCSP, T=10000, 100 runs.
    pub fn paper() -> Self {
        ScenarioConfig {
            mus: 50,
            quota: 5,
            steps: 10_000,
            runs: 100,
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::config("profile", format!("unknown profile `{other}`"))),
        }
    }

    pub fn quota_of(&self, mcsp: usize, z: usize) -> usize {
        match &self.quotas {
            Some(q) => q[mcsp][z],
            None => self.quota,
        }
    }

    /// N_i, the number of tasks MCSP `mcsp` offers per step.
    pub fn tasks_of(&self, mcsp: usize) -> usize {
        (0..self.task_types).map(|z| self.quota_of(mcsp, z)).sum()
    }

    pub fn total_tasks(&self) -> usize {
        (0..self.mcsps).map(|i| self.tasks_of(i)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mcsps == 0 {
            return Err(Error::config("mcsps", "need at least one MCSP"));
        }
        if self.mus == 0 {
            return Err(Error::config("mus", "need at least one MU"));
        }
        if self.task_types == 0 {
            return Err(Error::config("task_types", "need at least one task type"));
        }
        if self.payment_levels < 2 {
            return Err(Error::config("payment_levels", "need at least 2 levels"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "need at least one run"));
        }
        if let Some(q) = &self.quotas {
            if q.len() != self.mcsps || q.iter().any(|row| row.len() != self.task_types) {
                return Err(Error::config("quotas", "shape must be [mcsps][task_types]"));
            }
        }
        self.task.data_mbit.check("task.data_mbit")?;
        self.task.cycles_per_bit.check("task.cycles_per_bit")?;
        self.task.result_mbit.check("task.result_mbit")?;
        self.task.base_payment.check("task.base_payment")?;
        self.mu.cpu_ghz.check("mu.cpu_ghz")?;
        self.mu.sense_ms.check("mu.sense_ms")?;
        self.mu.rate_mbps.check("mu.rate_mbps")?;
        if self.task.result_mbit.hi >= self.task.data_mbit.lo {
            return Err(Error::config("task.result_mbit", "result size must stay below data size"));
        }
        if self.task.base_payment.lo <= 0.0 {
            return Err(Error::config("task.base_payment", "must be positive"));
        }
        for (key, v) in [
            ("mu.p_sense", self.mu.p_sense),
            ("mu.p_comp", self.mu.p_comp),
            ("mu.p_comm", self.mu.p_comm),
            ("mu.alpha", self.mu.alpha),
            ("mu.beta", self.mu.beta),
            ("mu.cpu_ghz.lo", self.mu.cpu_ghz.lo),
            ("mu.rate_mbps.lo", self.mu.rate_mbps.lo),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        for (key, e) in [("prism", &self.prism), ("mu_learning", &self.mu_learning)] {
            if !(0.0..=1.0).contains(&e.epsilon0) {
                return Err(Error::config(format!("{key}.epsilon0"), "must lie in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&e.epsilon_decay) {
                return Err(Error::config(format!("{key}.epsilon_decay"), "must lie in [0, 1]"));
            }
        }
        if self.noise.time_cv < 0.0 || self.noise.quality_sigma < 0.0 {
            return Err(Error::config("noise", "must be non-negative"));
        }
        Ok(())
    }

    /// Parse a JSON document layered over the desk defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::desk().layered(text)
    }

    /// Parse a JSON document layered over `self`.
    pub fn layered(&self, text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, value, "")?;
        let cfg: ScenarioConfig =
            serde_json::from_value(base).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides, e.g. `mu.alpha=0.02` or `steps=100`.
    ///
    /// Values are parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "override must look like key=value"))?;
            let parsed: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_dotted(&mut value, key, parsed)?;
        }
        let cfg: ScenarioConfig =
            serde_json::from_value(value).map_err(|e| Error::config("<overrides>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match patch {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = base
                    .as_object_mut()
                    .ok_or_else(|| Error::config(&key, "not an object"))?;
                match slot.get_mut(&k) {
                    Some(existing) if existing.is_object() && v.is_object() => merge(existing, v, &key)?,
                    Some(existing) => *existing = v,
                    None => return Err(Error::config(key, "unknown key")),
                }
            }
            Ok(())
        }
        other => {
            *base = other;
            Ok(())
        }
    }
}

fn set_dotted(root: &mut Value, key: &str, v: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(key, "path goes through a non-object"))?;
        if !obj.contains_key(*part) {
            return Err(Error::config(key, "unknown key"));
        }
        if n + 1 == parts.len() {
            obj.insert((*part).to_string(), v);
            return Ok(());
        }
        cur = obj.get_mut(*part).expect("checked above");
    }
    Err(Error::config(key, "empty key"))
}

/// Ground-truth expectations of one scenario. Only baselines, oracle MUs
/// and analysis code read this.
#[derive(Debug, Clone)]
pub struct GroundTruthView {
    /// `E{(1+q) w^i_z}` indexed `[mcsp][mu][type]`.
    pub expected_revenue: Vec<Vec<Vec<f64>>>,
    /// Expected effort cost indexed `[mcsp][mu][type]` (upload time depends on the MCSP).
    pub expected_cost: Vec<Vec<Vec<f64>>>,
    /// Quotas indexed `[mcsp][type]`.
    pub quotas: Vec<Vec<usize>>,
    /// Payment grids indexed `[mcsp][type]`.
    pub grids: Vec<Vec<PaymentGrid>>,
}

impl GroundTruthView {
    pub fn mcsps(&self) -> usize {
        self.expected_revenue.len()
    }

    pub fn mus(&self) -> usize {
        self.expected_revenue.first().map_or(0, Vec::len)
    }

    pub fn types(&self) -> usize {
        self.quotas.first().map_or(0, Vec::len)
    }

    /// Expected MCSP utility of contract `(i, k, z, p)`.
    pub fn mcsp_value(&self, i: usize, k: usize, z: usize, p: usize) -> f64 {
        self.expected_revenue[i][k][z] - self.grids[i][z].value(p)
    }

    /// Expected MU utility of contract `(i, k, z, p)`.
    pub fn mu_value(&self, i: usize, k: usize, z: usize, p: usize) -> f64 {
        self.grids[i][z].value(p) - self.expected_cost[i][k][z]
    }

    /// Task instance list of MCSP `i`: entry `n` is the type of task `n`.
    pub fn task_types_of(&self, i: usize) -> Vec<usize> {
        task_instances(&self.quotas[i])
    }
}

/// Expand per-type quotas into a task-id → type list.
pub fn task_instances(quotas: &[usize]) -> Vec<usize> {
    quotas
        .iter()
        .enumerate()
        .flat_map(|(z, &q)| std::iter::repeat_n(z, q))
        .collect()
}

/// One concrete market: latents drawn for a run seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub tasks: Vec<TaskTypeSpec>,
    pub mus: Vec<MuProfile>,
    pub truth: GroundTruthView,
}

impl Scenario {
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[label::SCENARIO]);
        let i_count = config.mcsps;
        let z_count = config.task_types;

        let mut tasks = Vec::with_capacity(z_count);
        for z in 0..z_count {
            let data_bits = config.task.data_mbit.sample(&mut rng) * 1e6;
            let cycles_per_bit = config.task.cycles_per_bit.sample(&mut rng);
            let result_bits = config.task.result_mbit.sample(&mut rng) * 1e6;
            let base_payment: Vec<f64> = (0..i_count)
                .map(|_| config.task.base_payment.sample(&mut rng))
                .collect();
            let payment_grid = base_payment
                .iter()
                .map(|w| PaymentGrid::linear(2.0 * w, config.payment_levels))
                .collect::<Result<Vec<_>>>()?;
            let spec = TaskTypeSpec {
                index: z,
                data_bits,
                cycles_per_bit,
                result_bits,
                base_payment,
                quota: (0..i_count).map(|i| config.quota_of(i, z)).collect(),
                payment_grid,
            };
            spec.validate()?;
            tasks.push(spec);
        }

        let mut mus = Vec::with_capacity(config.mus);
        for k in 0..config.mus {
            let cpu_hz = config.mu.cpu_ghz.sample(&mut rng) * 1e9;
            let mean_sense_time = (0..z_count)
                .map(|_| config.mu.sense_ms.sample(&mut rng) * 1e-3)
                .collect();
            let rates: Vec<f64> = (0..i_count)
                .map(|_| config.mu.rate_mbps.sample(&mut rng) * 1e6)
                .collect();
            let mean_comm_time = rates
                .iter()
                .map(|r| tasks.iter().map(|t| t.result_bits / r).collect())
                .collect();
            let quality_mean = (0..i_count)
                .map(|_| (0..z_count).map(|_| rng.gen_range(0.0..=1.0)).collect())
                .collect();
            let profile = MuProfile {
                index: k,
                cpu_hz,
                p_sense: config.mu.p_sense,
                p_comp: config.mu.p_comp,
                p_comm: config.mu.p_comm,
                alpha: config.mu.alpha,
                beta: config.mu.beta,
                mean_sense_time,
                mean_comm_time,
                quality_mean,
            };
            profile.validate()?;
            mus.push(profile);
        }

        let truth = build_truth(&tasks, &mus, i_count, &config.noise);
        Ok(Scenario {
            config: config.clone(),
            tasks,
            mus,
            truth,
        })
    }

    pub fn from_parts(config: ScenarioConfig, tasks: Vec<TaskTypeSpec>, mus: Vec<MuProfile>) -> Result<Self> {
        for t in &tasks {
            t.validate()?;
        }
        for m in &mus {
            m.validate()?;
        }
        let truth = build_truth(&tasks, &mus, config.mcsps, &config.noise);
        Ok(Scenario {
            config,
            tasks,
            mus,
            truth,
        })
    }
}

fn build_truth(tasks: &[TaskTypeSpec], mus: &[MuProfile], mcsps: usize, noise: &NoiseModel) -> GroundTruthView {
    let expected_revenue = (0..mcsps)
        .map(|i| {
            mus.iter()
                .map(|m| tasks.iter().map(|t| expected_revenue(m, i, t, noise)).collect())
                .collect()
        })
        .collect();
    let expected_cost = (0..mcsps)
        .map(|i| {
            mus.iter()
                .map(|m| tasks.iter().map(|t| expected_effort_cost(m, i, t, noise)).collect())
                .collect()
        })
        .collect();
    let quotas = (0..mcsps)
        .map(|i| tasks.iter().map(|t| t.quota[i]).collect())
        .collect();
    let grids = (0..mcsps)
        .map(|i| tasks.iter().map(|t| t.payment_grid[i].clone()).collect())
        .collect();
    GroundTruthView {
        expected_revenue,
        expected_cost,
        quotas,
        grids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_profile_shape() {
        let c = ScenarioConfig::desk();
        assert_eq!(c.tasks_of(0), 10);
        assert_eq!(c.total_tasks(), 20);
        assert_eq!(c.total_tasks(), c.mus);
        c.validate().unwrap();
        let p = ScenarioConfig::paper();
        assert_eq!(p.total_tasks(), p.mus);
    }

    #[test]
    fn json_layering_and_unknown_keys() {
        let c = ScenarioConfig::from_json_str(r#"{"mus": 8, "mu": {"alpha": 0.02}}"#).unwrap();
        assert_eq!(c.mus, 8);
        assert_eq!(c.mu.alpha, 0.02);
        assert_eq!(c.mu.beta, 0.004);
        let err = ScenarioConfig::from_json_str(r#"{"mu": {"alpah": 0.02}}"#).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "mu.alpah"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dotted_overrides() {
        let c = ScenarioConfig::desk()
            .with_overrides(&["mu.alpha=0.05", "steps=12", "task.base_payment.hi=3"])
            .unwrap();
        assert_eq!(c.mu.alpha, 0.05);
        assert_eq!(c.steps, 12);
        assert_eq!(c.task.base_payment.hi, 3.0);
        let err = ScenarioConfig::desk().with_overrides(&["mu.gamma=1"]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "mu.gamma"));
        assert!(ScenarioConfig::desk().with_overrides(&["mcsps=0"]).is_err());
    }

    #[test]
    fn generated_scenario_respects_invariants() {
        let c = ScenarioConfig::desk();
        let s = Scenario::generate(&c, 3).unwrap();
        assert_eq!(s.tasks.len(), 5);
        assert_eq!(s.mus.len(), 20);
        for t in &s.tasks {
            assert!(t.result_bits < t.data_bits);
            for i in 0..2 {
                let g = &t.payment_grid[i];
                assert_eq!(g.len(), 20);
                assert_eq!(g.value(0), 0.0);
                assert!((g.max_value() - 2.0 * t.base_payment[i]).abs() < 1e-12);
            }
        }
        let again = Scenario::generate(&c, 3).unwrap();
        assert_eq!(again.truth.expected_revenue, s.truth.expected_revenue);
        let other = Scenario::generate(&c, 4).unwrap();
        assert_ne!(other.truth.expected_revenue, s.truth.expected_revenue);
    }

    #[test]
    fn identical_rates_make_cost_mcsp_invariant() {
        let c = ScenarioConfig::desk()
            .with_overrides(&["mu.rate_mbps.lo=60", "mu.rate_mbps.hi=60"])
            .unwrap();
        let s = Scenario::generate(&c, 11).unwrap();
        for k in 0..c.mus {
            for z in 0..c.task_types {
                assert_eq!(s.truth.expected_cost[0][k][z], s.truth.expected_cost[1][k][z]);
            }
        }
    }
}
