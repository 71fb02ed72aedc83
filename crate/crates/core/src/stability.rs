//! Blocking-pair certificate for joint assignments under true expected utilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::GroundTruthView;

/// Where one MU ended up: MCSP, task type and payment level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub mcsp: usize,
    pub task_type: usize,
    pub payment_level: usize,
}

/// Joint assignment indexed by MU; `None` means the MU is idle.
pub type JointAssignment = Vec<Option<Placement>>;

/// MCSP `i` (holding MU `k`) and MU `l` (held by MCSP `j`) would both gain
/// from contract `(i, l, task_type, payment_level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPair {
    pub i: usize,
    pub k: usize,
    pub j: usize,
    pub l: usize,
    pub task_type: usize,
    pub payment_level: usize,
}

/// Utilities closer than this count as ties.
const STRICT_EPS: f64 = 1e-9;

pub fn validate_assignment(y: &JointAssignment, truth: &GroundTruthView) -> Result<()> {
    if y.len() != truth.mus() {
        return Err(Error::MalformedAssignment(format!(
            "{} entries for {} MUs",
            y.len(),
            truth.mus()
        )));
    }
    let mut used = vec![vec![0usize; truth.types()]; truth.mcsps()];
    for (k, slot) in y.iter().enumerate() {
        let Some(p) = slot else { continue };
        if p.mcsp >= truth.mcsps() || p.task_type >= truth.types() {
            return Err(Error::MalformedAssignment(format!("MU {k}: unknown MCSP or type")));
        }
        if p.payment_level >= truth.grids[p.mcsp][p.task_type].len() {
            return Err(Error::MalformedAssignment(format!("MU {k}: payment level out of range")));
        }
        used[p.mcsp][p.task_type] += 1;
    }
    for (i, row) in used.iter().enumerate() {
        for (z, &n) in row.iter().enumerate() {
            if n > truth.quotas[i][z] {
                return Err(Error::MalformedAssignment(format!(
                    "MCSP {i} type {z}: {n} tasks exceed quota {}",
                    truth.quotas[i][z]
                )));
            }
        }
    }
    Ok(())
}

/// Every blocking configuration of `y`; empty means stable.
///
/// MCSP `i` may re-use the slot it gives up (same type) or any spare slot of
/// another type. For each configuration and type the cheapest winning payment
/// level is reported.
pub fn find_blocking_pairs(y: &JointAssignment, truth: &GroundTruthView) -> Result<Vec<BlockingPair>> {
    validate_assignment(y, truth)?;
    let types = truth.types();
    let mut used = vec![vec![0usize; types]; truth.mcsps()];
    for p in y.iter().flatten() {
        used[p.mcsp][p.task_type] += 1;
    }

    let mut out = Vec::new();
    for (k, held_k) in y.iter().enumerate() {
        let Some(pk) = held_k else { continue };
        let i = pk.mcsp;
        let u_i = truth.mcsp_value(i, k, pk.task_type, pk.payment_level);
        for (l, held_l) in y.iter().enumerate() {
            let Some(pl) = held_l else { continue };
            if l == k || pl.mcsp == i {
                continue;
            }
            let u_l = truth.mu_value(pl.mcsp, l, pl.task_type, pl.payment_level);
            for z in 0..types {
                if z != pk.task_type && used[i][z] >= truth.quotas[i][z] {
                    continue;
                }
                let grid = &truth.grids[i][z];
                let Some(p) = (0..grid.len()).find(|&p| truth.mu_value(i, l, z, p) > u_l + STRICT_EPS) else {
                    continue;
                };
                if truth.mcsp_value(i, l, z, p) > u_i + STRICT_EPS {
                    out.push(BlockingPair {
                        i,
                        k,
                        j: pl.mcsp,
                        l,
                        task_type: z,
                        payment_level: p,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PaymentGrid;

    fn truth(rev: Vec<Vec<Vec<f64>>>, cost: Vec<Vec<Vec<f64>>>, quota: usize) -> GroundTruthView {
        let i = rev.len();
        let z = rev[0][0].len();
        GroundTruthView {
            expected_revenue: rev,
            expected_cost: cost,
            quotas: vec![vec![quota; z]; i],
            grids: vec![vec![PaymentGrid::linear(2.0, 21).unwrap(); z]; i],
        }
    }

    fn place(mcsp: usize, task_type: usize, payment_level: usize) -> Option<Placement> {
        Some(Placement {
            mcsp,
            task_type,
            payment_level,
        })
    }

    #[test]
    fn single_mcsp_single_mu_is_stable() {
        let t = truth(vec![vec![vec![1.5]]], vec![vec![vec![0.2]]], 1);
        for p in 0..21 {
            assert!(find_blocking_pairs(&vec![place(0, 0, p)], &t).unwrap().is_empty());
        }
        assert!(find_blocking_pairs(&vec![None], &t).unwrap().is_empty());
    }

    #[test]
    fn constructed_swap_is_reported() {
        // MCSP 0 holds MU 0 (worth 0.5 to it) at level 2 (0.2); MCSP 1 holds
        // MU 1 at level 3 (0.3). MCSP 0 values MU 1 at 1.8, MCSP 1 values
        // MU 0 at 0.4 and MU 1 at 0.4; costs are 0.1 everywhere.
        let rev = vec![vec![vec![0.5], vec![1.8]], vec![vec![0.4], vec![0.4]]];
        let cost = vec![vec![vec![0.1]; 2]; 2];
        let t = truth(rev, cost, 1);
        let y = vec![place(0, 0, 2), place(1, 0, 3)];
        let pairs = find_blocking_pairs(&y, &t).unwrap();
        // By hand: MU 1 needs P - 0.1 > 0.2, i.e. level 4 (0.4); MCSP 0 then
        // earns 1.4 > 0.3. MCSP 1 poaching MU 0 needs level 2 (0.2 - 0.1 = 0.1
        // is not > 0.1), so level 3, earning 0.1 < 0.4 - 0.3: no block.
        assert_eq!(
            pairs,
            vec![BlockingPair {
                i: 0,
                k: 0,
                j: 1,
                l: 1,
                task_type: 0,
                payment_level: 4
            }]
        );
    }

    #[test]
    fn exhaustive_agreement_on_tiny_instance() {
        // Independent check by enumerating every contract for the reported block.
        let rev = vec![
            vec![vec![1.0, 1.6], vec![1.9, 0.3]],
            vec![vec![1.2, 0.8], vec![1.1, 1.7]],
        ];
        let cost = vec![vec![vec![0.15, 0.25], vec![0.05, 0.3]]; 2];
        let t = truth(rev, cost, 1);
        let y = vec![place(0, 1, 10), place(1, 0, 1)];
        let pairs = find_blocking_pairs(&y, &t).unwrap();
        let mut expected = Vec::new();
        for (k, l) in [(0usize, 1usize), (1, 0)] {
            let pk = y[k].unwrap();
            let pl = y[l].unwrap();
            let u_i = t.mcsp_value(pk.mcsp, k, pk.task_type, pk.payment_level);
            let u_l = t.mu_value(pl.mcsp, l, pl.task_type, pl.payment_level);
            for z in 0..2 {
                let spare = z == pk.task_type
                    || !y.iter().flatten().any(|q| q.mcsp == pk.mcsp && q.task_type == z);
                if !spare {
                    continue;
                }
                let hits: Vec<usize> = (0..21)
                    .filter(|&p| {
                        t.mu_value(pk.mcsp, l, z, p) > u_l + 1e-9 && t.mcsp_value(pk.mcsp, l, z, p) > u_i + 1e-9
                    })
                    .collect();
                if let Some(&p) = hits.first() {
                    expected.push(BlockingPair {
                        i: pk.mcsp,
                        k,
                        j: pl.mcsp,
                        l,
                        task_type: z,
                        payment_level: p,
                    });
                }
            }
        }
        assert_eq!(pairs, expected);
        assert!(!pairs.is_empty());
    }

    #[test]
    fn malformed_assignments_are_rejected() {
        let t = truth(vec![vec![vec![1.0]; 2]], vec![vec![vec![0.1]; 2]], 1);
        assert!(matches!(
            find_blocking_pairs(&vec![place(0, 0, 0)], &t),
            Err(Error::MalformedAssignment(_))
        ));
        assert!(find_blocking_pairs(&vec![place(0, 0, 0), place(0, 0, 1)], &t).is_err());
        assert!(find_blocking_pairs(&vec![place(1, 0, 0), None], &t).is_err());
        assert!(find_blocking_pairs(&vec![place(0, 0, 21), None], &t).is_err());
    }
}
