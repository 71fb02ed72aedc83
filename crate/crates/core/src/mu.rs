//! MU-side policies: the effort-learning bandit, the known-effort oracle and
//! the forced acceptor used by the centralized optimum.

use rand::Rng;

use crate::domain::Offer;
use crate::rng::SimRng;
use crate::strategy::{decide_by_cost, verdict_with_winner, MuDecision, MuPolicy};

/// Epsilon-greedy learner of the payment-free effort cost per task type.
#[derive(Debug, Clone, PartialEq)]
pub struct MuEstimator {
    pub cost_estimate: Vec<f64>,
    pub pulls: Vec<u64>,
    pub epsilon: f64,
    pub epsilon_decay: f64,
}

impl MuEstimator {
    pub fn new(types: usize, epsilon0: f64, epsilon_decay: f64) -> Self {
        MuEstimator {
            cost_estimate: vec![0.0; types],
            pulls: vec![0; types],
            epsilon: epsilon0,
            epsilon_decay,
        }
    }

    /// Decision with exploration already resolved.
    pub fn decide_with(&self, offers: &[Offer], explore: bool, rng: &mut SimRng) -> MuDecision {
        if offers.is_empty() {
            return MuDecision {
                accepted: None,
                feedback: Vec::new(),
            };
        }
        if explore {
            let idx = rng.gen_range(0..offers.len());
            return verdict_with_winner(offers, idx, |_| false);
        }
        decide_by_cost(offers, |o| self.cost_estimate[o.task_type])
    }

    pub fn update(&mut self, z: usize, realized_cost: f64) {
        self.pulls[z] += 1;
        self.cost_estimate[z] += (realized_cost - self.cost_estimate[z]) / self.pulls[z] as f64;
        self.epsilon *= self.epsilon_decay;
    }
}

impl MuPolicy for MuEstimator {
    fn decide(&mut self, offers: &[Offer], rng: &mut SimRng) -> MuDecision {
        if offers.is_empty() {
            return self.decide_with(offers, false, rng);
        }
        let explore = rng.gen::<f64>() < self.epsilon;
        self.decide_with(offers, explore, rng)
    }

    fn observe(&mut self, task_type: usize, realized_cost: f64) {
        self.update(task_type, realized_cost);
    }
}

/// Knows its true expected cost per (MCSP, type) and never explores.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMu {
    /// Expected cost indexed `[mcsp][type]`.
    pub expected_cost: Vec<Vec<f64>>,
}

impl MuPolicy for OracleMu {
    fn decide(&mut self, offers: &[Offer], _rng: &mut SimRng) -> MuDecision {
        decide_by_cost(offers, |o| self.expected_cost[o.mcsp][o.task_type])
    }

    fn observe(&mut self, _task_type: usize, _realized_cost: f64) {}
}

/// Accepts the first offer unconditionally.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ForcedMu;

impl MuPolicy for ForcedMu {
    fn decide(&mut self, offers: &[Offer], _rng: &mut SimRng) -> MuDecision {
        if offers.is_empty() {
            return MuDecision {
                accepted: None,
                feedback: Vec::new(),
            };
        }
        verdict_with_winner(offers, 0, |_| false)
    }

    fn observe(&mut self, _task_type: usize, _realized_cost: f64) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{RejectReason, ResponseFeedback};
    use crate::rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn offer(mcsp: usize, payment: f64, z: usize) -> Offer {
        Offer {
            mcsp,
            mu: 0,
            task_id: 0,
            task_type: z,
            payment_level: 0,
            payment,
        }
    }

    fn rng() -> SimRng {
        SimRng::seed_from_u64(5)
    }

    #[test]
    fn exploitation_examples() {
        let mut est = MuEstimator::new(2, 0.0, 0.999);
        est.cost_estimate = vec![0.2, 0.0];
        let d = est.decide(&[offer(0, 1.0, 0)], &mut rng());
        assert_eq!(d.accepted, Some(0));

        let d = est.decide(&[offer(0, 1.0, 0), offer(1, 0.9, 1)], &mut rng());
        assert_eq!(d.accepted, Some(1));

        est.cost_estimate = vec![2.0, 2.0];
        let d = est.decide(&[offer(0, 1.0, 0), offer(1, 0.9, 1)], &mut rng());
        assert_eq!(d.accepted, None);
        assert!(d
            .feedback
            .iter()
            .all(|f| *f == ResponseFeedback::Reject(RejectReason::NegativeUtility)));
    }

    #[test]
    fn exploration_reports_winner_to_everyone_else() {
        let est = MuEstimator::new(1, 1.0, 0.999);
        let offers = [offer(0, 0.1, 0), offer(1, 0.2, 0), offer(2, 0.3, 0)];
        let d = est.decide_with(&offers, true, &mut rng());
        let idx = d.accepted.unwrap();
        for (n, f) in d.feedback.iter().enumerate() {
            if n == idx {
                assert!(f.is_accept());
            } else {
                assert_eq!(
                    *f,
                    ResponseFeedback::Reject(RejectReason::ChoseCompetitor {
                        mcsp: offers[idx].mcsp,
                        payment: offers[idx].payment,
                        task_type: 0
                    })
                );
            }
        }
    }

    #[test]
    fn running_mean_and_decay() {
        let mut est = MuEstimator::new(1, 1.0, 0.5);
        est.update(0, 0.2);
        assert_eq!(est.cost_estimate[0], 0.2);
        est.update(0, 0.4);
        assert!((est.cost_estimate[0] - 0.3).abs() < 1e-15);
        assert_eq!(est.epsilon, 0.25);
    }

    #[test]
    fn law_of_large_numbers() {
        let mut est = MuEstimator::new(1, 1.0, 0.999);
        let mut r = rng::stream(9, &[1]);
        let n = Normal::new(0.3, 0.05).unwrap();
        for _ in 0..1000 {
            est.update(0, n.sample(&mut r));
        }
        assert!((est.cost_estimate[0] - 0.3).abs() < 3.0 * 0.05 / 1000f64.sqrt());
    }

    #[test]
    fn shifting_all_payments_keeps_the_choice() {
        let mut est = MuEstimator::new(3, 0.0, 1.0);
        est.cost_estimate = vec![0.1, 0.4, 0.25];
        let base = [offer(0, 0.5, 0), offer(1, 0.9, 1), offer(2, 0.7, 2)];
        let shifted: Vec<Offer> = base.iter().map(|o| offer(o.mcsp, o.payment + 3.0, o.task_type)).collect();
        assert_eq!(
            est.decide(&base, &mut rng()).accepted,
            est.decide(&shifted, &mut rng()).accepted
        );
    }

    #[test]
    fn oracle_examples() {
        let mut mu = OracleMu {
            expected_cost: vec![vec![0.3], vec![0.3]],
        };
        assert_eq!(mu.decide(&[offer(0, 0.3, 0)], &mut rng()).accepted, Some(0));
        let d = mu.decide(&[offer(0, 0.5, 0), offer(1, 0.4, 0)], &mut rng());
        assert_eq!(d.accepted, Some(0));
        assert!(matches!(
            d.feedback[1],
            ResponseFeedback::Reject(RejectReason::ChoseCompetitor { .. })
        ));
        let d = mu.decide(&[offer(1, 0.1, 0)], &mut rng());
        assert_eq!(d.feedback, vec![ResponseFeedback::Reject(RejectReason::NegativeUtility)]);
    }

    #[test]
    fn forced_accepts_first() {
        let d = ForcedMu.decide(&[offer(0, 0.0, 0)], &mut rng());
        assert_eq!(d.accepted, Some(0));
        assert_eq!(ForcedMu.decide(&[], &mut rng()).accepted, None);
    }
}
