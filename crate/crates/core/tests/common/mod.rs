//! Reference implementations written directly against raw arrays, sharing no
//! numerical code with the library.

#![allow(dead_code)]

use lapi_core::Mdp;

/// `P[s][a][s']`, `r[s][a]`, discount.
#[derive(Clone, Debug)]
pub struct RawMdp {
    pub p: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl RawMdp {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        RawMdp {
            p: (0..ns)
                .map(|s| (0..na).map(|a| mdp.transition_row(s, a).to_vec()).collect())
                .collect(),
            r: (0..ns)
                .map(|s| (0..na).map(|a| mdp.reward(s, a)).collect())
                .collect(),
            alpha: mdp.discount(),
        }
    }

    pub fn ns(&self) -> usize {
        self.r.len()
    }

    pub fn na(&self) -> usize {
        self.r[0].len()
    }

    pub fn q(&self, s: usize, a: usize, j: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (sp, p) in self.p[s][a].iter().enumerate() {
            acc += p * j[sp];
        }
        self.r[s][a] + self.alpha * acc
    }

    pub fn bellman(&self, j: &[f64]) -> Vec<f64> {
        (0..self.ns())
            .map(|s| {
                (0..self.na())
                    .map(|a| self.q(s, a, j))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    pub fn apply_policy(&self, mu: &[usize], j: &[f64]) -> Vec<f64> {
        (0..self.ns()).map(|s| self.q(s, mu[s], j)).collect()
    }

    /// Lowest index among maximizers.
    pub fn greedy(&self, j: &[f64]) -> Vec<usize> {
        (0..self.ns())
            .map(|s| {
                let mut best = 0;
                let mut best_q = self.q(s, 0, j);
                for a in 1..self.na() {
                    let q = self.q(s, a, j);
                    if q > best_q {
                        best = a;
                        best_q = q;
                    }
                }
                best
            })
            .collect()
    }

    /// Solves `(I - alpha P_mu) J = r_mu` by Gaussian elimination with partial pivoting.
    pub fn evaluate(&self, mu: &[usize]) -> Vec<f64> {
        let n = self.ns();
        let mut a = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            for sp in 0..n {
                a[s][sp] = -self.alpha * self.p[s][mu[s]][sp];
            }
            a[s][s] += 1.0;
            a[s][n] = self.r[s][mu[s]];
        }
        solve_augmented(a)
    }

    /// `J* = max_mu J^mu` by enumerating every deterministic policy.
    pub fn brute_force_optimal(&self) -> Vec<f64> {
        let (ns, na) = (self.ns(), self.na());
        let mut mu = vec![0usize; ns];
        let mut best = vec![f64::NEG_INFINITY; ns];
        loop {
            let j = self.evaluate(&mu);
            for s in 0..ns {
                best[s] = best[s].max(j[s]);
            }
            let mut i = 0;
            loop {
                if i == ns {
                    return best;
                }
                mu[i] += 1;
                if mu[i] < na {
                    break;
                }
                mu[i] = 0;
                i += 1;
            }
        }
    }
}

pub fn solve_augmented(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..=n {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = a[row][n];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Tabular modified policy iteration with lookahead:
/// `mu_{k+1} = greedy(T^{H-1} J_k)`, `J_{k+1} = T_{mu_{k+1}}^m T^{H-1} J_k`.
/// Returns `(J_k, mu_k)` for `k = 1..=iters`.
pub fn lookahead_mpi(
    mdp: &RawMdp,
    j0: &[f64],
    h: usize,
    m: usize,
    iters: usize,
) -> Vec<(Vec<f64>, Vec<usize>)> {
    let mut j = j0.to_vec();
    let mut out = Vec::new();
    for _ in 0..iters {
        let mut base = j.clone();
        for _ in 0..h - 1 {
            base = mdp.bellman(&base);
        }
        let mu = mdp.greedy(&base);
        let mut next = base;
        for _ in 0..m {
            next = mdp.apply_policy(&mu, &next);
        }
        j = next;
        out.push((j.clone(), mu));
    }
    out
}

/// Least-squares weights `argmin ||Phi_D theta - y_D||_2` via modified Gram-Schmidt QR.
pub fn qr_least_squares(phi_rows: &[Vec<f64>], indices: &[usize], y: &[f64]) -> Vec<f64> {
    let d = phi_rows[0].len();
    let n = indices.len();
    let mut q: Vec<Vec<f64>> = (0..d)
        .map(|c| indices.iter().map(|&i| phi_rows[i][c]).collect())
        .collect();
    let mut r = vec![vec![0.0; d]; d];
    for c in 0..d {
        for prev in 0..c {
            let dot: f64 = (0..n).map(|i| q[prev][i] * q[c][i]).sum();
            r[prev][c] = dot;
            for i in 0..n {
                q[c][i] -= dot * q[prev][i];
            }
        }
        let norm = (0..n).map(|i| q[c][i] * q[c][i]).sum::<f64>().sqrt();
        r[c][c] = norm;
        for i in 0..n {
            q[c][i] /= norm;
        }
    }
    let qty: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|i| q[c][i] * y[indices[i]]).sum())
        .collect();
    let mut theta = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = qty[row];
        for c in row + 1..d {
            acc -= r[row][c] * theta[c];
        }
        theta[row] = acc / r[row][row];
    }
    theta
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
