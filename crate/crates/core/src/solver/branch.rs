use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::solve_validated;
use super::{
    MixedIntegerProgram, Sense, Solution, SolverError, SolverLimits, Status, VarId, TOLERANCES,
};

/// Largest binary count [`enumerate_oracle`] accepts.
pub const ORACLE_MAX_BINARIES: usize = 20;

struct Node {
    /// LP bound in maximization terms.
    bound: f64,
    depth: usize,
    seq: u64,
    fixings: Vec<(VarId, f64)>,
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: best bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn sense_sign(mip: &MixedIntegerProgram) -> f64 {
    match mip.lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    }
}

fn within_gap(bound: f64, incumbent: f64) -> bool {
    bound - incumbent <= TOLERANCES.gap * bound.abs().max(1.0)
}

/// Most fractional binary, lowest index on ties.
fn branching_candidate(mip: &MixedIntegerProgram, values: &[f64]) -> Option<VarId> {
    let mut best: Option<(VarId, f64)> = None;
    for &b in &mip.binaries {
        let v = values[b];
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac <= TOLERANCES.integrality {
            continue;
        }
        let closeness = (v - v.floor() - 0.5).abs();
        match best {
            Some((bb, c)) if closeness > c || (closeness == c && b > bb) => {}
            _ => best = Some((b, closeness)),
        }
    }
    best.map(|(b, _)| b)
}

struct Relaxation {
    outcome: Status,
    objective: f64,
    values: Vec<f64>,
}

fn relax(mip: &MixedIntegerProgram, fixings: &[(VarId, f64)]) -> Result<Relaxation, SolverError> {
    let mut lp = mip.lp.clone();
    for &(v, val) in fixings {
        lp.set_bounds(v, val, val);
    }
    let sol = solve_validated(&lp, &TOLERANCES)?;
    Ok(Relaxation {
        outcome: sol.status,
        objective: sol.objective,
        values: sol.values,
    })
}

/// Re-solves with every binary pinned to its rounded value so the returned
/// point is exactly integral.
fn polish(mip: &MixedIntegerProgram, values: &[f64]) -> Result<Option<Relaxation>, SolverError> {
    let fixings: Vec<(VarId, f64)> = mip
        .binaries
        .iter()
        .map(|&b| (b, values[b].round()))
        .collect();
    let r = relax(mip, &fixings)?;
    Ok((r.outcome == Status::Optimal).then_some(r))
}

/// Best-first branch-and-bound over the binary variables of `mip`.
pub fn solve_mip(mip: &MixedIntegerProgram, limits: &SolverLimits) -> Result<Solution, SolverError> {
    mip.validate()?;
    let started = Instant::now();
    let sign = sense_sign(mip);

    let root = relax(mip, &[])?;
    let mut nodes = 1;
    match root.outcome {
        Status::Optimal => {}
        Status::Unbounded => {
            return Ok(Solution::without_values(Status::Unbounded, sign * f64::INFINITY, nodes))
        }
        _ => return Ok(Solution::without_values(Status::Infeasible, f64::NAN, nodes)),
    }

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: sign * root.objective,
        depth: 0,
        seq,
        fixings: Vec::new(),
        values: root.values,
    });

    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if within_gap(node.bound, *inc) {
                heap.clear();
                break;
            }
        }
        let Some(var) = branching_candidate(mip, &node.values) else {
            let polished = if mip.binaries.iter().all(|&b| node.values[b].fract() == 0.0) {
                Some(Relaxation {
                    outcome: Status::Optimal,
                    objective: mip.lp.objective_value(&node.values),
                    values: node.values,
                })
            } else {
                nodes += 1;
                polish(mip, &node.values)?
            };
            if let Some(p) = polished {
                let val = sign * p.objective;
                if incumbent.as_ref().is_none_or(|(inc, _)| val > *inc) {
                    incumbent = Some((val, p.values));
                }
            }
            continue;
        };

        if nodes >= limits.node_limit
            || limits.time_limit.is_some_and(|t| started.elapsed() >= t)
        {
            heap.push(node);
            hit_limit = true;
            break;
        }

        // Down branch first so equal bounds keep a stable order.
        for target in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((var, target));
            let child = relax(mip, &fixings)?;
            nodes += 1;
            if child.outcome != Status::Optimal {
                continue;
            }
            let bound = sign * child.objective;
            if let Some((inc, _)) = &incumbent {
                if within_gap(bound, *inc) {
                    continue;
                }
            }
            seq += 1;
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                seq,
                fixings,
                values: child.values,
            });
        }
    }

    let open_bound = heap.peek().map(|n| n.bound);
    match incumbent {
        Some((val, values)) => {
            let status = if hit_limit && open_bound.is_some_and(|b| !within_gap(b, val)) {
                Status::IncumbentAtLimit
            } else {
                Status::Optimal
            };
            let bound = match status {
                Status::Optimal => val,
                _ => open_bound.unwrap_or(val).max(val),
            };
            Ok(Solution {
                status,
                objective: sign * val,
                values,
                best_bound: sign * bound,
                nodes,
            })
        }
        None if hit_limit => Ok(Solution::without_values(
            Status::LimitWithoutIncumbent,
            sign * open_bound.unwrap_or(f64::INFINITY),
            nodes,
        )),
        None => Ok(Solution::without_values(Status::Infeasible, f64::NAN, nodes)),
    }
}

/// Solves the LP for every assignment of the binaries and keeps the best.
/// Reference semantics for [`solve_mip`]; refuses more than
/// [`ORACLE_MAX_BINARIES`] binaries.
pub fn enumerate_oracle(mip: &MixedIntegerProgram) -> Result<Solution, SolverError> {
    mip.validate()?;
    let k = mip.binaries.len();
    if k > ORACLE_MAX_BINARIES {
        return Err(SolverError::TooManyBinaries(k, ORACLE_MAX_BINARIES));
    }
    let sign = sense_sign(mip);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut unbounded = false;
    let total = 1usize << k;
    for mask in 0..total {
        let mut lp = mip.lp.clone();
        let mut admissible = true;
        for (bit, &b) in mip.binaries.iter().enumerate() {
            let val = ((mask >> bit) & 1) as f64;
            let v = &lp.variables[b];
            if val < v.lower || val > v.upper {
                admissible = false;
                break;
            }
            lp.set_bounds(b, val, val);
        }
        if !admissible {
            continue;
        }
        let sol = solve_validated(&lp, &TOLERANCES)?;
        match sol.status {
            Status::Optimal => {
                let val = sign * sol.objective;
                if best.as_ref().is_none_or(|(b, _)| val > *b) {
                    best = Some((val, sol.values));
                }
            }
            Status::Unbounded => unbounded = true,
            _ => {}
        }
    }
    if unbounded {
        return Ok(Solution::without_values(Status::Unbounded, sign * f64::INFINITY, total));
    }
    Ok(match best {
        Some((val, values)) => Solution {
            status: Status::Optimal,
            objective: sign * val,
            values,
            best_bound: sign * val,
            nodes: total,
        },
        None => Solution::without_values(Status::Infeasible, f64::NAN, total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{LinearProgram, Relation};

    fn knapsack() -> MixedIntegerProgram {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_variable("a", 10.0, 0.0, 1.0);
        let b = lp.add_variable("b", 6.0, 0.0, 1.0);
        let c = lp.add_variable("c", 4.0, 0.0, 1.0);
        lp.add_constraint("w", vec![(a, 5.0), (b, 4.0), (c, 3.0)], Relation::Le, 8.0);
        MixedIntegerProgram::new(lp, vec![a, b, c])
    }

    // Brute force over the 8 assignments, independent of any LP machinery.
    fn knapsack_by_hand() -> (f64, [u8; 3]) {
        let mut best = (f64::NEG_INFINITY, [0; 3]);
        for mask in 0..8u8 {
            let s = [mask & 1, (mask >> 1) & 1, (mask >> 2) & 1];
            let w = 5 * s[0] + 4 * s[1] + 3 * s[2];
            let v = 10.0 * s[0] as f64 + 6.0 * s[1] as f64 + 4.0 * s[2] as f64;
            if w <= 8 && v > best.0 {
                best = (v, s);
            }
        }
        best
    }

    #[test]
    fn knapsack_matches_hand_enumeration() {
        let (value, pick) = knapsack_by_hand();
        assert_eq!(value, 14.0);
        assert_eq!(pick, [1, 0, 1]);
        let sol = solve_mip(&knapsack(), &SolverLimits::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 14.0).abs() < 1e-9);
        assert_eq!(sol.values, vec![1.0, 0.0, 1.0]);
        let oracle = enumerate_oracle(&knapsack()).unwrap();
        assert!((oracle.objective - 14.0).abs() < 1e-9);
        assert_eq!(oracle.nodes, 8);
    }

    #[test]
    fn integral_relaxation_takes_one_node() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_variable("a", 1.0, 0.0, 1.0);
        let x = lp.add_variable("x", 1.0, 0.0, 3.0);
        lp.add_constraint("c", vec![(a, 1.0), (x, 1.0)], Relation::Le, 10.0);
        let sol = solve_mip(&MixedIntegerProgram::new(lp, vec![a]), &SolverLimits::default())
            .unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_eq!(sol.nodes, 1);
        assert_eq!(sol.objective, 4.0);
    }

    #[test]
    fn zero_binaries_oracle_equals_lp() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_variable("x", 3.0, 0.0, f64::INFINITY);
        lp.add_constraint("c", vec![(x, 2.0)], Relation::Ge, 5.0);
        let lp_sol = crate::solver::solve_lp(&lp).unwrap();
        let or = enumerate_oracle(&MixedIntegerProgram::new(lp, vec![])).unwrap();
        assert_eq!(or.objective, lp_sol.objective);
        assert_eq!(or.values, lp_sol.values);
    }

    #[test]
    fn all_assignments_infeasible() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_variable("a", 1.0, 0.0, 1.0);
        let b = lp.add_variable("b", 1.0, 0.0, 1.0);
        lp.add_constraint("odd", vec![(a, 1.0), (b, 1.0)], Relation::Eq, 0.5);
        let mip = MixedIntegerProgram::new(lp, vec![a, b]);
        assert_eq!(enumerate_oracle(&mip).unwrap().status, Status::Infeasible);
        assert_eq!(
            solve_mip(&mip, &SolverLimits::default()).unwrap().status,
            Status::Infeasible
        );
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let bins: Vec<_> = (0..21)
            .map(|i| lp.add_variable(format!("b{i}"), 1.0, 0.0, 1.0))
            .collect();
        let err = enumerate_oracle(&MixedIntegerProgram::new(lp, bins)).unwrap_err();
        assert_eq!(err, SolverError::TooManyBinaries(21, 20));
    }

    #[test]
    fn node_budget_without_incumbent_is_not_infeasible() {
        // The relaxation is fractional at the root; a one-node budget stops
        // before any integral point is seen.
        let mip = knapsack();
        let limits = SolverLimits {
            node_limit: 1,
            time_limit: None,
        };
        let sol = solve_mip(&mip, &limits).unwrap();
        assert_eq!(sol.status, Status::LimitWithoutIncumbent);
        assert!(sol.best_bound >= 14.0);
    }
}
