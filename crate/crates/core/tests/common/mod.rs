//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod sigma_oracle {
    use astro_float::{BigFloat, Consts, Radix, RoundingMode};

    const P: usize = 320;
    const RM: RoundingMode = RoundingMode::ToEven;

    pub struct Oracle {
        cc: Consts,
    }

    impl Oracle {
        pub fn new() -> Self {
            Self { cc: Consts::new().expect("constants cache") }
        }

        fn big(x: f64) -> BigFloat {
            BigFloat::from_f64(x, P)
        }

        /// `None` for `+∞`.
        pub fn sigma(&mut self, k: f64, n: f64, t: f64, theta: f64) -> Option<BigFloat> {
            let (bk, bn, bt, bth) = (Self::big(k), Self::big(n), Self::big(t), Self::big(theta));
            let kt2 = bk.mul(&bth, P, RM).mul(&bth, P, RM);
            let pi = self.cc.pi(P, RM);
            let npi2 = bn.mul(&pi, P, RM).mul(&pi, P, RM);
            if kt2.cmp(&npi2).is_some_and(|c| c >= 0) {
                return Some(BigFloat::from_f64(f64::INFINITY, P)).filter(|_| false);
            }
            if k == 0.0 || theta == 0.0 {
                return Some(bt);
            }
            let ratio = bk.abs().div(&bn, P, RM).sqrt(P, RM);
            let x = ratio.mul(&bth, P, RM);
            let tx = bt.mul(&x, P, RM);
            let (num, den) = if k > 0.0 {
                (tx.sin(P, RM, &mut self.cc), x.sin(P, RM, &mut self.cc))
            } else {
                (tx.sinh(P, RM, &mut self.cc), x.sinh(P, RM, &mut self.cc))
            };
            Some(num.div(&den, P, RM))
        }

        /// `|value − exact|` as an `f64` (rounded upwards in magnitude is not
        /// needed at the 1e-12 scale).
        pub fn abs_error(&mut self, value: f64, exact: &BigFloat) -> f64 {
            let d = Self::big(value).sub(exact, P, RM).abs();
            let s = d.format(Radix::Dec, RM, &mut self.cc).expect("format");
            parse_decimal(&s)
        }
    }

    fn parse_decimal(s: &str) -> f64 {
        let s = s.replace(".e", ".0e");
        s.parse::<f64>().unwrap_or_else(|_| panic!("cannot parse `{s}`"))
    }
}

/// Transportation LPs by enumerating every spanning-tree basis.
pub mod lp_oracle {
    /// Flows of the basis `cells` (a spanning tree of the bipartite graph),
    /// or `None` if the cells contain a cycle.
    fn tree_flows(m: usize, n: usize, cells: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
        let mut parent: Vec<usize> = (0..m + n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(i, j) in cells {
            let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
            if a == b {
                return None;
            }
            parent[a] = b;
        }
        let mut rest: Vec<f64> = supply.iter().chain(demand).copied().collect();
        let mut degree = vec![0usize; m + n];
        for &(i, j) in cells {
            degree[i] += 1;
            degree[m + j] += 1;
        }
        let mut flow = vec![f64::NAN; cells.len()];
        let mut done = vec![false; cells.len()];
        for _ in 0..cells.len() {
            let (e, leaf) = (0..cells.len())
                .filter(|&e| !done[e])
                .find_map(|e| {
                    let (i, j) = cells[e];
                    if degree[i] == 1 {
                        Some((e, i))
                    } else if degree[m + j] == 1 {
                        Some((e, m + j))
                    } else {
                        None
                    }
                })?;
            let (i, j) = cells[e];
            let other = if leaf == i { m + j } else { i };
            flow[e] = rest[leaf];
            rest[other] -= rest[leaf];
            rest[leaf] = 0.0;
            degree[i] -= 1;
            degree[m + j] -= 1;
            done[e] = true;
        }
        Some(flow)
    }

    /// `min Σ c_ij x_ij` over couplings of `supply` and `demand` (equal totals).
    pub fn brute_force(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
        let (m, n) = (supply.len(), demand.len());
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let k = m + n - 1;
        let scale = supply.iter().sum::<f64>().max(1.0);
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let basis: Vec<(usize, usize)> = idx.iter().map(|&c| cells[c]).collect();
            if let Some(f) = tree_flows(m, n, &basis, supply, demand) {
                if f.iter().all(|&x| x >= -1e-12 * scale) {
                    let c: f64 = basis.iter().zip(&f).map(|(&(i, j), &x)| x * cost[i][j]).sum();
                    best = best.min(c);
                }
            }
            // next k-combination of cells
            let mut p = k;
            loop {
                if p == 0 {
                    return best;
                }
                p -= 1;
                if idx[p] < cells.len() - (k - p) {
                    break;
                }
                if p == 0 {
                    return best;
                }
            }
            idx[p] += 1;
            for q in p + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }

    /// Quadratic cost of the quantile coupling of two measures on the line.
    pub fn quantile_cost(x: &[f64], mu0: &[f64], mu1: &[f64]) -> f64 {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let s0: Vec<usize> = order.iter().copied().filter(|&i| mu0[i] > 0.0).collect();
        let s1: Vec<usize> = order.iter().copied().filter(|&i| mu1[i] > 0.0).collect();
        let (mut a, mut b) = (0, 0);
        let (mut r0, mut r1) = (mu0[s0[0]], mu1[s1[0]]);
        let mut cost = 0.0;
        while a < s0.len() && b < s1.len() {
            let m = r0.min(r1);
            cost += m * (x[s0[a]] - x[s1[b]]).powi(2);
            r0 -= m;
            r1 -= m;
            if r0 <= 1e-15 {
                a += 1;
                if a < s0.len() {
                    r0 = mu0[s0[a]];
                }
            }
            if r1 <= 1e-15 {
                b += 1;
                if b < s1.len() {
                    r1 = mu1[s1[b]];
                }
            }
        }
        cost
    }
}

/// Normalizing constants of Lebesgue measure: `c_n` with
/// `c_n ∫_{B_1} (1 − |x|) dx = 1`, by composite Simpson on the radial integral.
pub mod quadrature {
    pub fn c_n(n: usize) -> f64 {
        let area = match n {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            3 => 4.0 * std::f64::consts::PI,
            _ => panic!("dimension {n} not tabulated"),
        };
        let k = 2000;
        let h = 1.0 / k as f64;
        let f = |r: f64| (1.0 - r) * r.powi(n as i32 - 1);
        let mut s = f(0.0) + f(1.0);
        for i in 1..k {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        1.0 / (area * s * h / 3.0)
    }
}

/// The distance surrogate by enumerating every covering relation.
pub mod pmgh_oracle {
    use super::lp_oracle::brute_force;

    pub struct Small {
        pub d: Vec<Vec<f64>>,
        pub w: Vec<f64>,
        pub base: usize,
    }

    fn ball(s: &Small, r: f64) -> Vec<usize> {
        (0..s.w.len()).filter(|&i| s.d[s.base][i] < r * (1.0 - 1e-9)).collect()
    }

    /// `(dis + gap)` for one relation between the balls `ia`, `ib`.
    fn score(a: &Small, b: &Small, ia: &[usize], ib: &[usize], rel: &[(usize, usize)]) -> f64 {
        let mut dis = 0.0f64;
        for &(x, y) in rel {
            for &(xp, yp) in rel {
                dis = dis.max((a.d[x][xp] - b.d[y][yp]).abs());
            }
        }
        let dis = dis / 2.0;
        let (na, nb) = (ia.len(), ib.len());
        let mut cost = vec![vec![0.0; nb + 1]; na + 1];
        for p in 0..=na {
            for q in 0..=nb {
                cost[p][q] = match (p == na, q == nb) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 0.5,
                    _ => {
                        let glue = rel
                            .iter()
                            .map(|&(xp, yp)| dis + a.d[ia[p]][xp] + b.d[yp][ib[q]])
                            .fold(f64::INFINITY, f64::min);
                        glue.min(1.0)
                    }
                };
            }
        }
        let ma: f64 = ia.iter().map(|&i| a.w[i]).sum();
        let mb: f64 = ib.iter().map(|&i| b.w[i]).sum();
        let mut supply: Vec<f64> = ia.iter().map(|&i| a.w[i]).collect();
        supply.push(mb);
        let mut demand: Vec<f64> = ib.iter().map(|&i| b.w[i]).collect();
        demand.push(ma);
        dis + brute_force(&supply, &demand, &cost) + 0.5 * (ma - mb).abs()
    }

    /// `min(1, inf over relations)` at radius `r`.
    pub fn term(a: &Small, b: &Small, r: f64) -> f64 {
        let (ia, ib) = (ball(a, r), ball(b, r));
        let cells: Vec<(usize, usize)> = ia.iter().flat_map(|&x| ib.iter().map(move |&y| (x, y))).collect();
        let mut best = f64::INFINITY;
        for mask in 0u64..(1 << cells.len()) {
            let rel: Vec<(usize, usize)> = (0..cells.len()).filter(|k| mask >> k & 1 == 1).map(|k| cells[k]).collect();
            if !rel.contains(&(a.base, b.base))
                || !ia.iter().all(|x| rel.iter().any(|p| p.0 == *x))
                || !ib.iter().all(|y| rel.iter().any(|p| p.1 == *y))
            {
                continue;
            }
            best = best.min(score(a, b, &ia, &ib, &rel));
        }
        best.min(1.0)
    }

    pub fn surrogate(a: &Small, b: &Small, radii: &[f64]) -> f64 {
        radii.iter().enumerate().map(|(k, &r)| 0.5f64.powi(k as i32 + 1) * term(a, b, r)).sum()
    }
}
