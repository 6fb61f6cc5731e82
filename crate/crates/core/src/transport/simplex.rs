//! Exact transportation simplex on a dense `m × n` cost matrix.
//!
//! The basis is a spanning tree of the bipartite row/column graph with
//! `m + n − 1` cells. Pricing uses the MODI potentials `u_i + v_j = c_ij` on
//! basic cells; entering cells are chosen by Dantzig's rule over blocks of
//! rows, switching to Bland's rule (lowest index enters, lowest index leaves
//! among ties) after a run of degenerate pivots so the method cannot cycle.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct TransportSolution {
    /// Basic cells `(row, col, flow)`; degenerate cells carry zero flow.
    pub basis: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub cost: f64,
    pub pivots: usize,
}

impl TransportSolution {
    pub fn flows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.basis.iter().copied().filter(|c| c.2 > 0.0)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Flows on a spanning tree (or forest) from supplies and demands, by
/// peeling leaves. Returns `None` if some flow is negative beyond `tol`.
pub(crate) fn tree_flows(
    m: usize,
    n: usize,
    cells: &[(usize, usize)],
    supply: &[f64],
    demand: &[f64],
    tol: f64,
) -> Option<Vec<f64>> {
    let nodes = m + n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (k, &(i, j)) in cells.iter().enumerate() {
        adj[i].push(k);
        adj[m + j].push(k);
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut rem: Vec<f64> = supply.iter().chain(demand.iter()).copied().collect();
    let mut used = vec![false; cells.len()];
    let mut flows = vec![0.0; cells.len()];
    let mut queue: VecDeque<usize> = (0..nodes).filter(|&x| degree[x] == 1).collect();
    while let Some(x) = queue.pop_front() {
        if degree[x] != 1 {
            continue;
        }
        let Some(&k) = adj[x].iter().find(|&&k| !used[k]) else { continue };
        used[k] = true;
        let (i, j) = cells[k];
        let other = if x < m { m + j } else { i };
        let f = rem[x];
        flows[k] = f;
        rem[x] = 0.0;
        rem[other] -= f;
        degree[x] -= 1;
        degree[other] -= 1;
        if degree[other] == 1 {
            queue.push_back(other);
        }
    }
    if flows.iter().any(|&f| f < -tol) {
        return None;
    }
    Some(flows.into_iter().map(|f| f.max(0.0)).collect())
}

struct Tree {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
    // filled by `potentials`
    parent_slot: Vec<usize>,
    depth: Vec<usize>,
}

impl Tree {
    fn other(&self, slot: usize, node: usize) -> usize {
        let (i, j) = self.cells[slot];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    fn potentials(&mut self, cost: &Array2<f64>, u: &mut [f64], v: &mut [f64]) {
        let nodes = self.m + self.n;
        self.parent_slot.iter_mut().for_each(|p| *p = usize::MAX);
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        self.depth[0] = 0;
        while let Some(x) = stack.pop() {
            for idx in 0..self.adj[x].len() {
                let slot = self.adj[x][idx];
                let y = self.other(slot, x);
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                let (i, j) = self.cells[slot];
                if y >= self.m {
                    v[j] = cost[[i, j]] - u[i];
                } else {
                    u[i] = cost[[i, j]] - v[j];
                }
                self.parent_slot[y] = slot;
                self.depth[y] = self.depth[x] + 1;
                stack.push(y);
            }
        }
    }

    /// Basis slots on the tree path from column node of `j` to row `i`,
    /// starting next to the column.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut a = self.m + j;
        let mut b = i;
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                let s = self.parent_slot[a];
                from_a.push(s);
                a = self.other(s, a);
            } else {
                let s = self.parent_slot[b];
                from_b.push(s);
                b = self.other(s, b);
            }
        }
        from_b.reverse();
        from_a.extend(from_b);
        from_a
    }
}

/// Solves `min Σ c_ij x_ij` subject to row sums `supply`, column sums
/// `demand`, `x ≥ 0`. Supplies and demands must be positive with equal
/// totals (up to rounding).
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &Array2<f64>) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::param("empty marginal"));
    }
    if cost.dim() != (m, n) {
        return Err(Error::param("cost matrix shape does not match marginals"));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    let scale = total_s.max(total_d);
    if (total_s - total_d).abs() > 1e-9 * scale.max(1.0) {
        return Err(Error::MassMismatch(total_s, total_d));
    }
    // move the rounding gap onto the largest demand so the totals agree
    let mut demand = demand.to_vec();
    let jmax = (0..n).max_by(|&a, &b| demand[a].total_cmp(&demand[b])).unwrap();
    demand[jmax] += total_s - total_d;

    let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let tol_rc = 1e-12 * max_cost;
    let tol_flow = 1e-12 * scale;

    // least-cost initial allocation, completed to a spanning tree
    let mut order: Vec<usize> = (0..m * n).collect();
    order.sort_by(|&a, &b| cost[[a / n, a % n]].total_cmp(&cost[[b / n, b % n]]).then(a.cmp(&b)));
    let mut ra = supply.to_vec();
    let mut rb = demand.clone();
    let mut uf = UnionFind::new(m + n);
    let mut cells = Vec::with_capacity(m + n - 1);
    for &k in &order {
        let (i, j) = (k / n, k % n);
        if ra[i] > 0.0 && rb[j] > 0.0 && uf.union(i, m + j) {
            if ra[i] <= rb[j] {
                rb[j] -= ra[i];
                ra[i] = 0.0;
            } else {
                ra[i] -= rb[j];
                rb[j] = 0.0;
            }
            cells.push((i, j));
        }
    }
    if cells.len() < m + n - 1 {
        for &k in &order {
            let (i, j) = (k / n, k % n);
            if uf.union(i, m + j) {
                cells.push((i, j));
                if cells.len() == m + n - 1 {
                    break;
                }
            }
        }
    }
    let flow = tree_flows(m, n, &cells, supply, &demand, 1e-9 * scale)
        .ok_or_else(|| Error::param("initial basis is infeasible"))?;

    let mut tree = Tree {
        m,
        n,
        adj: {
            let mut adj = vec![Vec::new(); m + n];
            for (s, &(i, j)) in cells.iter().enumerate() {
                adj[i].push(s);
                adj[m + j].push(s);
            }
            adj
        },
        cells,
        flow,
        parent_slot: vec![usize::MAX; m + n],
        depth: vec![0; m + n],
    };
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];

    let block = (4096usize).max(n);
    let mut cursor = 0usize;
    let mut degenerate_run = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 10 * m * n + 10_000;

    loop {
        tree.potentials(cost, &mut u, &mut v);
        let bland = degenerate_run > m + n;
        let entering = if bland {
            let mut found = None;
            'scan: for i in 0..m {
                for j in 0..n {
                    if cost[[i, j]] - u[i] - v[j] < -tol_rc {
                        found = Some((i, j));
                        break 'scan;
                    }
                }
            }
            found
        } else {
            let mut best = None;
            let mut best_rc = -tol_rc;
            let mut scanned = 0usize;
            for step in 0..m {
                let i = (cursor + step) % m;
                for j in 0..n {
                    let rc = cost[[i, j]] - u[i] - v[j];
                    if rc < best_rc {
                        best_rc = rc;
                        best = Some((i, j));
                    }
                }
                scanned += n;
                if scanned >= block && best.is_some() {
                    cursor = (i + 1) % m;
                    break;
                }
            }
            best
        };
        let Some((ei, ej)) = entering else { break };

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::BudgetExceeded(format!("transportation simplex exceeded {max_pivots} pivots")));
        }

        let path = tree.path(ei, ej);
        // slots at even positions lose flow, odd positions gain
        let mut leave_pos = 0usize;
        let mut theta = f64::INFINITY;
        for (p, &slot) in path.iter().enumerate().step_by(2) {
            let f = tree.flow[slot];
            let better = f < theta
                || (f == theta && {
                    let (a, b) = tree.cells[slot];
                    let (c, d) = tree.cells[path[leave_pos]];
                    a * n + b < c * n + d
                });
            if better {
                theta = f;
                leave_pos = p;
            }
        }
        if theta <= tol_flow {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for (p, &slot) in path.iter().enumerate() {
            if p % 2 == 0 {
                tree.flow[slot] = (tree.flow[slot] - theta).max(0.0);
            } else {
                tree.flow[slot] += theta;
            }
        }
        let leave = path[leave_pos];
        let (li, lj) = tree.cells[leave];
        tree.adj[li].retain(|&s| s != leave);
        tree.adj[m + lj].retain(|&s| s != leave);
        tree.cells[leave] = (ei, ej);
        tree.flow[leave] = theta;
        tree.adj[ei].push(leave);
        tree.adj[m + ej].push(leave);
    }

    // clean flows from the final basis
    let flows = tree_flows(m, n, &tree.cells, supply, &demand, 1e-9 * scale)
        .ok_or_else(|| Error::param("final basis is infeasible"))?;
    let basis: Vec<(usize, usize, f64)> =
        tree.cells.iter().zip(&flows).map(|(&(i, j), &f)| (i, j, f)).collect();
    let total: f64 = basis.iter().map(|&(i, j, f)| f * cost[[i, j]]).sum();
    Ok(TransportSolution { basis, u, v, cost: total, pivots })
}

/// All distinct vertices of the optimal face, found as spanning trees inside
/// the zero-reduced-cost cells of `solution`. Fails when more than `budget`
/// search nodes would be visited.
pub(crate) fn optimal_vertices(
    supply: &[f64],
    demand: &[f64],
    cost: &Array2<f64>,
    solution: &TransportSolution,
    budget: usize,
) -> Result<Vec<Vec<(usize, usize, f64)>>> {
    let (m, n) = (supply.len(), demand.len());
    let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let tol = 1e-9 * max_cost.max(1e-300);
    let zero: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| (cost[[i, j]] - solution.u[i] - solution.v[j]).abs() <= tol)
        .collect();
    let scale: f64 = supply.iter().sum();
    let mut demand = demand.to_vec();
    let gap = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    let jmax = (0..n).max_by(|&a, &b| demand[a].total_cmp(&demand[b])).unwrap();
    demand[jmax] += gap;

    let mut found: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    let mut keys: Vec<Vec<(usize, usize, i64)>> = Vec::new();
    let mut visited = 0usize;
    let mut chosen: Vec<(usize, usize)> = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn rec(
        k: usize,
        zero: &[(usize, usize)],
        m: usize,
        n: usize,
        chosen: &mut Vec<(usize, usize)>,
        visited: &mut usize,
        budget: usize,
        supply: &[f64],
        demand: &[f64],
        scale: f64,
        found: &mut Vec<Vec<(usize, usize, f64)>>,
        keys: &mut Vec<Vec<(usize, usize, i64)>>,
    ) -> Result<()> {
        *visited += 1;
        if *visited > budget {
            return Err(Error::BudgetExceeded(format!("optimal-face enumeration exceeded {budget} nodes")));
        }
        if chosen.len() == m + n - 1 {
            if let Some(flows) = tree_flows(m, n, chosen, supply, demand, 1e-9 * scale) {
                let mut v: Vec<(usize, usize, f64)> = chosen
                    .iter()
                    .zip(&flows)
                    .filter(|(_, &f)| f > 1e-12 * scale)
                    .map(|(&(i, j), &f)| (i, j, f))
                    .collect();
                v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
                let key: Vec<(usize, usize, i64)> =
                    v.iter().map(|&(i, j, f)| (i, j, (f / scale * 1e9).round() as i64)).collect();
                if !keys.contains(&key) {
                    keys.push(key);
                    found.push(v);
                }
            }
            return Ok(());
        }
        if k == zero.len() || zero.len() - k < m + n - 1 - chosen.len() {
            return Ok(());
        }
        // include zero[k] if it keeps the chosen set acyclic
        let mut uf = UnionFind::new(m + n);
        for &(i, j) in chosen.iter() {
            uf.union(i, m + j);
        }
        let (i, j) = zero[k];
        if uf.find(i) != uf.find(m + j) {
            chosen.push((i, j));
            rec(k + 1, zero, m, n, chosen, visited, budget, supply, demand, scale, found, keys)?;
            chosen.pop();
        }
        rec(k + 1, zero, m, n, chosen, visited, budget, supply, demand, scale, found, keys)
    }

    rec(0, &zero, m, n, &mut chosen, &mut visited, budget, supply, &demand, scale, &mut found, &mut keys)?;
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_plan_on_equal_marginals() {
        let c = array![[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]];
        let a = [0.2, 0.5, 0.3];
        let sol = solve(&a, &a, &c).unwrap();
        assert!(sol.cost.abs() < 1e-15);
        for (i, j, f) in sol.flows() {
            assert_eq!(i, j);
            assert!((f - a[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn classic_instance() {
        // textbook transportation problem with optimum 743
        let c = array![[19.0, 30.0, 50.0, 10.0], [70.0, 30.0, 40.0, 60.0], [40.0, 8.0, 70.0, 20.0]];
        let s = [7.0, 9.0, 18.0];
        let d = [5.0, 8.0, 7.0, 14.0];
        let sol = solve(&s, &d, &c).unwrap();
        assert!((sol.cost - 743.0).abs() < 1e-9);
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let c = array![[0.0]];
        assert!(matches!(solve(&[1.0], &[0.5], &c), Err(Error::MassMismatch(..))));
    }

    #[test]
    fn degenerate_ties_enumerate_both_vertices() {
        // two sources, two sinks, all costs equal: both matchings are optimal
        let c = array![[1.0, 1.0], [1.0, 1.0]];
        let a = [0.5, 0.5];
        let sol = solve(&a, &a, &c).unwrap();
        let verts = optimal_vertices(&a, &a, &c, &sol, 10_000).unwrap();
        assert!(verts.len() >= 2);
    }
}
