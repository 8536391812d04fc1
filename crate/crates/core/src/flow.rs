//! Exact integer min-cost transportation by successive shortest paths.
//!
//! Dense bipartite instances only: every supply node connects to every
//! demand node with unbounded arc capacity. Node potentials keep reduced
//! costs nonnegative so each augmentation is one Dijkstra pass; the dense
//! O(V²) scan needs no heap and keeps every tie-break index-ordered, so
//! results are deterministic. All arithmetic is integer: i64 distances,
//! i128 objective, and an exactly computable duality gap.

const INF: i64 = i64::MAX / 4;

#[derive(Debug, PartialEq)]
pub(crate) enum FlowError {
    Unbalanced,
    Invalid(String),
}

impl std::fmt::Display for FlowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowError::Unbalanced => write!(f, "total supply does not equal total demand"),
            FlowError::Invalid(msg) => write!(f, "invalid flow problem: {msg}"),
        }
    }
}

#[derive(Debug)]
pub(crate) struct FlowSolution {
    /// Row-major flows, one row per supply node.
    pub flows: Vec<i64>,
    pub objective: i128,
    /// Optimal dual value; equals the objective at an exact optimum.
    pub dual_objective: i128,
}

/// Solve min Σ flow·cost subject to the given row and column sums.
pub(crate) fn min_cost_transport(
    supplies: &[i64],
    demands: &[i64],
    costs: &[i64],
) -> Result<FlowSolution, FlowError> {
    let n = supplies.len();
    let m = demands.len();
    if costs.len() != n * m {
        return Err(FlowError::Invalid(format!(
            "expected {n}x{m} cost entries, got {}",
            costs.len()
        )));
    }
    if supplies.iter().any(|&s| s < 0) || demands.iter().any(|&d| d < 0) {
        return Err(FlowError::Invalid("negative supply or demand".into()));
    }
    if costs.iter().any(|&c| c < 0 || c >= INF) {
        return Err(FlowError::Invalid("costs must lie in [0, i64::MAX/4)".into()));
    }
    let total_s: i128 = supplies.iter().map(|&s| s as i128).sum();
    let total_d: i128 = demands.iter().map(|&d| d as i128).sum();
    if total_s != total_d {
        return Err(FlowError::Unbalanced);
    }

    let mut flows = vec![0i64; n * m];
    let mut rem_s: Vec<i64> = supplies.to_vec();
    let mut rem_d: Vec<i64> = demands.to_vec();
    let mut pi_l = vec![0i64; n];
    let mut pi_r = vec![0i64; m];
    let mut remaining = total_s;

    let mut dist_l = vec![INF; n];
    let mut dist_r = vec![INF; m];
    let mut done_l = vec![false; n];
    let mut done_r = vec![false; m];
    // Parent of a demand node is a supply node (forward arc); parent of a
    // supply node is the demand node whose flow the path pushes back.
    let mut par_r = vec![usize::MAX; m];
    let mut par_l = vec![usize::MAX; n];

    while remaining > 0 {
        dist_l.iter_mut().for_each(|d| *d = INF);
        dist_r.iter_mut().for_each(|d| *d = INF);
        done_l.iter_mut().for_each(|d| *d = false);
        done_r.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if rem_s[i] > 0 {
                dist_l[i] = 0;
                par_l[i] = usize::MAX;
            }
        }
        let mut target = usize::MAX;
        loop {
            // Next unvisited node of minimal distance, supplies first.
            let mut best = INF;
            let mut pick_left = true;
            let mut pick = usize::MAX;
            for i in 0..n {
                if !done_l[i] && dist_l[i] < best {
                    best = dist_l[i];
                    pick = i;
                    pick_left = true;
                }
            }
            for j in 0..m {
                if !done_r[j] && dist_r[j] < best {
                    best = dist_r[j];
                    pick = j;
                    pick_left = false;
                }
            }
            if pick == usize::MAX {
                break;
            }
            if pick_left {
                let i = pick;
                done_l[i] = true;
                let row = &costs[i * m..(i + 1) * m];
                for (j, &c) in row.iter().enumerate() {
                    if done_r[j] {
                        continue;
                    }
                    let nd = dist_l[i] + c + pi_l[i] - pi_r[j];
                    if nd < dist_r[j] {
                        dist_r[j] = nd;
                        par_r[j] = i;
                    }
                }
            } else {
                let j = pick;
                done_r[j] = true;
                if rem_d[j] > 0 {
                    target = j;
                    break;
                }
                for i in 0..n {
                    if done_l[i] || flows[i * m + j] == 0 {
                        continue;
                    }
                    let nd = dist_r[j] - costs[i * m + j] - pi_l[i] + pi_r[j];
                    if nd < dist_l[i] {
                        dist_l[i] = nd;
                        par_l[i] = j;
                    }
                }
            }
        }
        if target == usize::MAX {
            return Err(FlowError::Invalid(
                "no augmenting path despite remaining demand".into(),
            ));
        }
        let d_target = dist_r[target];
        for i in 0..n {
            pi_l[i] += dist_l[i].min(d_target);
        }
        for j in 0..m {
            pi_r[j] += dist_r[j].min(d_target);
        }

        // Walk the path back to its source, collecting the bottleneck.
        let mut theta = rem_d[target];
        let mut j = target;
        let source = loop {
            let i = par_r[j];
            if par_l[i] == usize::MAX {
                theta = theta.min(rem_s[i]);
                break i;
            }
            let back = par_l[i];
            theta = theta.min(flows[i * m + back]);
            j = back;
        };
        debug_assert!(theta > 0);
        let mut j = target;
        loop {
            let i = par_r[j];
            flows[i * m + j] += theta;
            if par_l[i] == usize::MAX {
                break;
            }
            let back = par_l[i];
            flows[i * m + back] -= theta;
            j = back;
        }
        rem_s[source] -= theta;
        rem_d[target] -= theta;
        remaining -= theta as i128;
    }

    let mut objective: i128 = 0;
    for i in 0..n {
        for j in 0..m {
            objective += flows[i * m + j] as i128 * costs[i * m + j] as i128;
        }
    }
    // Dual feasibility u_i + v_j ≤ c_ij with u = −pi_l, v = pi_r.
    let mut dual: i128 = 0;
    for (j, &d) in demands.iter().enumerate() {
        dual += d as i128 * pi_r[j] as i128;
    }
    for (i, &s) in supplies.iter().enumerate() {
        dual -= s as i128 * pi_l[i] as i128;
    }
    Ok(FlowSolution {
        flows,
        objective,
        dual_objective: dual,
    })
}
