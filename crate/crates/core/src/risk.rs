//! Scenario-based risk measures: standard deviation, VaR, AVaR and Foster-Hart riskiness.
//!
//! All measures take equiprobable outcome samples in return units and report
//! risk in loss units (a positive number is a loss).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N x n` matrix of joint scenarios, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMatrix {
    values: Vec<f64>,
    n_scenarios: usize,
    /// Column labels.
    pub asset_ids: Vec<String>,
    /// Seed of the generator that produced the rows, when known.
    pub seed: Option<u64>,
}

impl ScenarioMatrix {
    pub fn new(values: Vec<f64>, n_scenarios: usize, asset_ids: Vec<String>, seed: Option<u64>) -> Result<Self> {
        let n = asset_ids.len();
        if values.len() != n_scenarios * n {
            return Err(Error::Dimension { expected: n_scenarios * n, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("scenario entries must be finite".into()));
        }
        Ok(Self { values, n_scenarios, asset_ids, seed })
    }

    /// Builds a matrix from scenario rows.
    pub fn from_rows(rows: &[Vec<f64>], asset_ids: Vec<String>) -> Result<Self> {
        let n = asset_ids.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: r.len() });
        }
        Self::new(rows.concat(), rows.len(), asset_ids, None)
    }

    /// Rejects matrices with fewer than `floor` scenarios.
    pub fn check_floor(&self, floor: usize) -> Result<()> {
        if self.n_scenarios < floor {
            return Err(Error::InsufficientData { needed: floor, got: self.n_scenarios });
        }
        Ok(())
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.n_assets();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_scenarios).map(|k| self.values[k * self.n_assets() + j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n_assets();
        let mut m = vec![0.0; n];
        for row in self.values.chunks_exact(n) {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n_scenarios as f64);
        m
    }

    /// Sample covariance (`n - 1` denominator).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.n_assets();
        let m = self.column_means();
        let mut c = vec![vec![0.0; n]; n];
        for row in self.values.chunks_exact(n) {
            for i in 0..n {
                let di = row[i] - m[i];
                for j in 0..=i {
                    c[i][j] += di * (row[j] - m[j]);
                }
            }
        }
        let denom = (self.n_scenarios as f64 - 1.0).max(1.0);
        for i in 0..n {
            for j in 0..=i {
                c[i][j] /= denom;
                c[j][i] = c[i][j];
            }
        }
        c
    }
}

/// Row-wise inner products `s w`.
pub fn portfolio_outcomes(s: &ScenarioMatrix, w: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; s.n_scenarios()];
    portfolio_outcomes_into(s, w, &mut out)?;
    Ok(out)
}

/// As [`portfolio_outcomes`], writing into a caller-owned buffer of length `N`.
pub fn portfolio_outcomes_into(s: &ScenarioMatrix, w: &[f64], out: &mut [f64]) -> Result<()> {
    let n = s.n_assets();
    if w.len() != n {
        return Err(Error::Dimension { expected: n, got: w.len() });
    }
    if out.len() != s.n_scenarios() {
        return Err(Error::Dimension { expected: s.n_scenarios(), got: out.len() });
    }
    for (o, row) in out.iter_mut().zip(s.values.chunks_exact(n)) {
        *o = row.iter().zip(w).map(|(a, b)| a * b).sum();
    }
    Ok(())
}

/// Sample standard deviation with the `N - 1` denominator.
pub fn sd(outcomes: &[f64]) -> Result<f64> {
    let n = outcomes.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let m = outcomes.iter().sum::<f64>() / n as f64;
    let ss: f64 = outcomes.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Number of outcomes in the `epsilon` tail, `ceil(N epsilon)`.
pub fn tail_count(n: usize, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("tail probability must lie in (0, 1), got {epsilon}")));
    }
    let ne = n as f64 * epsilon;
    if ne < 1.0 - 1e-12 {
        return Err(Error::InsufficientTail(ne));
    }
    // guard against representation noise such as 10^6 * 0.01 = 10000.000000000002
    Ok(((ne * (1.0 - 1e-12)).ceil() as usize).clamp(1, n))
}

/// `(VaR, AVaR)` from one partial selection of the sample.
pub fn var_avar(outcomes: &[f64], epsilon: f64) -> Result<(f64, f64)> {
    let mut buf = outcomes.to_vec();
    var_avar_in_place(&mut buf, epsilon)
}

/// As [`var_avar`], reordering `buf` instead of copying it.
pub fn var_avar_in_place(buf: &mut [f64], epsilon: f64) -> Result<(f64, f64)> {
    let k = tail_count(buf.len(), epsilon)?;
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kth = *kth;
    // the k smallest outcomes now occupy buf[..k]; centring on the k-th keeps mean <= kth exactly
    let excess: f64 = buf[..k].iter().map(|x| x - kth).sum();
    let tail_mean = kth + excess / k as f64;
    Ok((-kth, -tail_mean))
}

/// `-q_eps`, the negated lower order statistic at index `ceil(N eps)`.
pub fn var(outcomes: &[f64], epsilon: f64) -> Result<f64> {
    var_avar(outcomes, epsilon).map(|v| v.0)
}

/// Negated mean of the `ceil(N eps)` worst outcomes.
pub fn avar(outcomes: &[f64], epsilon: f64) -> Result<f64> {
    var_avar(outcomes, epsilon).map(|v| v.1)
}

/// Checks `mean > 0` and `min < 0`; returns the maximal loss `L = -min`.
pub fn gamble_max_loss(g: &[f64]) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::NotAGamble("empty sample".into()));
    }
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::NotAGamble(format!("expected value {mean} is not positive")));
    }
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min < 0.0) {
        return Err(Error::NotAGamble("no outcome is a loss".into()));
    }
    Ok(-min)
}

/// `mean ln(1 + g_i / R)`.
pub fn foster_hart_objective(g: &[f64], r: f64) -> f64 {
    g.iter().map(|x| (x / r).ln_1p()).sum::<f64>() / g.len() as f64
}

/// Foster-Hart riskiness: the root `R > L` of `mean ln(1 + g_i / R) = 0`.
pub fn foster_hart(g: &[f64], tol: f64) -> Result<f64> {
    foster_hart_hinted(g, tol, None)
}

/// Number of power sums kept by [`FhPass`].
const FH_TAYLOR_TERMS: usize = 10;

/// One pass over the outcomes at `x = 1 / R`: `phi(x) = mean ln(1 + g_i x)`,
/// the power sums `s_k = mean q_i^k` of `q_i = g_i / (1 + g_i x)` and `max |q_i|`.
///
/// Since `ln(1 + g (x + h)) = ln(1 + g x) + ln(1 + q h)`, the pass determines
/// `phi(x + h) = phi(x) + sum_k (-1)^(k+1) s_k h^k / k` for `|h| max|q| < 1`,
/// and truncating after [`FH_TAYLOR_TERMS`] terms leaves a remainder of at most
/// `r^(K+1) / ((K+1)(1-r))` with `r = |h| max|q|`.
struct FhPass {
    phi: f64,
    s: [f64; FH_TAYLOR_TERMS],
    q_max: f64,
}

impl FhPass {
    fn new(g: &[f64], x: f64) -> Self {
        let mut phi = 0.0;
        let mut s = [0.0; FH_TAYLOR_TERMS];
        let mut q_max = 0.0f64;
        for chunk in g.chunks(LOG_BLOCK) {
            let mut prod = 1.0;
            for gi in chunk {
                let t = 1.0 + gi * x;
                let q = gi / t;
                prod *= t;
                q_max = q_max.max(q.abs());
                let mut p = q;
                for sk in s.iter_mut() {
                    *sk += p;
                    p *= q;
                }
            }
            phi += block_ln(chunk, x, prod);
        }
        let n = g.len() as f64;
        Self { phi: phi / n, s: s.map(|v| v / n), q_max }
    }

    /// Truncated series and its derivative at offset `h`.
    fn series(&self, h: f64) -> (f64, f64) {
        let (mut v, mut d, mut p) = (self.phi, 0.0, 1.0);
        for (k, sk) in self.s.iter().enumerate() {
            // p = (-h)^k
            d += sk * p;
            v -= sk * p * -h / (k + 1) as f64;
            p *= -h;
        }
        (v, d)
    }

    /// Root offset of the truncated series by Newton's method, and whether the
    /// truncation bound certifies `x + h` as the root to relative accuracy `tol`.
    fn local_root(&self, x: f64, tol: f64) -> Option<(f64, bool)> {
        if !(self.s[0] < 0.0) {
            return None;
        }
        let mut h = -self.phi / self.s[0];
        for _ in 0..50 {
            let r = self.q_max * h.abs();
            if !(r < 0.5) {
                return None;
            }
            let (v, d) = self.series(h);
            if !(d < 0.0) {
                return None;
            }
            let step = v / d;
            h -= step;
            if step.abs() <= 1e-3 * tol * (x + h).abs() {
                let r = self.q_max * h.abs();
                let k = FH_TAYLOR_TERMS as i32 + 1;
                let remainder = r.powi(k) / (k as f64 * (1.0 - r));
                let (_, d) = self.series(h);
                return Some((h, r < 0.5 && remainder <= 0.1 * tol * (x + h) * d.abs()));
            }
        }
        None
    }
}

/// Outcomes per block whose factors `1 + g_i x` are multiplied before one logarithm.
const LOG_BLOCK: usize = 16;

/// `sum ln(1 + g_i x)` over a block given the product of its factors, falling
/// back to one logarithm per factor when the product left the normal range.
fn block_ln(chunk: &[f64], x: f64, prod: f64) -> f64 {
    if prod.is_normal() {
        prod.ln()
    } else {
        chunk.iter().map(|gi| (gi * x).ln_1p()).sum()
    }
}

/// `mean ln(1 + g_i x)`.
fn mean_log_growth(g: &[f64], x: f64) -> f64 {
    let total: f64 = g
        .chunks(LOG_BLOCK)
        .map(|c| block_ln(c, x, c.iter().map(|gi| 1.0 + gi * x).product()))
        .sum();
    total / g.len() as f64
}

/// As [`foster_hart`] with an optional starting guess for the root.
///
/// The root is searched in `x = 1 / R`, where `phi(x) = mean ln(1 + g_i x)` is
/// concave with `phi(0) = 0`, `phi'(0) = mean > 0` and `phi -> -inf` as
/// `x -> 1 / L`, so `phi > 0` left of the root and `phi < 0` right of it.
/// The bracket starts as `(0, 1 / (L (1 + 1e-9)))` (equivalently, `R` between
/// the maximal loss and infinity). Each pass over the outcomes yields the
/// local power series of `phi`; when its root is certified by the truncation
/// bound it is returned, otherwise it becomes the next iterate. Iterates that
/// leave the bracket are replaced by Halley steps or bisection. Without a hint
/// the first iterate is the root of the quadratic expansion, `2 mean / E[g^2]`,
/// which also replaces hints larger than about `1e6 L`. A hint at or below the
/// maximal loss tests the bracket end first, which settles gambles whose root
/// is the bracket end itself in a single pass.
pub fn foster_hart_hinted(g: &[f64], tol: f64, hint: Option<f64>) -> Result<f64> {
    let loss = gamble_max_loss(g)?;
    let n = g.len() as f64;
    let x_cap = 1.0 / (loss * (1.0 + 1e-9));
    let mut cap_checked = false;
    let mut x_hi = x_cap;
    let mut x_lo = 0.0;
    let guess = match hint.map(|h| 1.0 / h) {
        Some(x) if x > 1e-6 * x_cap && x.is_finite() => x,
        _ => {
            let m1 = g.iter().sum::<f64>() / n;
            let m2 = g.iter().map(|v| v * v).sum::<f64>() / n;
            2.0 * m1 / m2
        }
    };
    let mut x = guess;
    if !(guess > 0.0 && guess < x_cap) {
        cap_checked = true;
        if mean_log_growth(g, x_cap) >= 0.0 {
            return Ok(1.0 / x_cap);
        }
        x = if guess >= x_cap { x_cap * (1.0 - 1e-3) } else { 0.5 * x_cap };
    }
    for _ in 0..300 {
        let pass = FhPass::new(g, x);
        let (f, d, d2) = (pass.phi, pass.s[0], -pass.s[1]);
        if f == 0.0 {
            return Ok(1.0 / x);
        }
        if f > 0.0 {
            x_lo = x;
        } else {
            x_hi = x;
        }
        let local = pass.local_root(x, tol);
        if let Some((h, true)) = local {
            return Ok(1.0 / (x + h));
        }
        if (f / d).abs() <= tol * x {
            return Ok(1.0 / (x - f / d));
        }
        let mut next = match local {
            Some((h, _)) => x + h,
            None => x - 2.0 * f * d / (2.0 * d * d - f * d2),
        };
        if !(next > x_lo && next < x_hi) {
            if !cap_checked && x_hi == x_cap && next >= x_hi {
                // the root may sit at the cap itself
                cap_checked = true;
                if mean_log_growth(g, x_cap) >= 0.0 {
                    return Ok(1.0 / x_cap);
                }
            }
            next = 0.5 * (x_lo + x_hi);
        }
        if (next - x).abs() <= tol * next || (x_hi - x_lo) <= tol * x_lo {
            return Ok(1.0 / next);
        }
        x = next;
    }
    Ok(2.0 / (x_lo + x_hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quartile_examples() {
        let g = [-3.0, -1.0, 1.0, 3.0];
        assert_eq!(var(&g, 0.25).unwrap(), 3.0);
        assert_eq!(avar(&g, 0.25).unwrap(), 3.0);
        assert_eq!(avar(&g, 0.5).unwrap(), 2.0);
        assert_eq!(var(&g, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn gains_give_negative_var() {
        let g: Vec<f64> = (1..=200).map(|k| k as f64).collect();
        assert!(var(&g, 0.01).unwrap() < 0.0);
    }

    #[test]
    fn tail_too_small() {
        assert!(matches!(var(&[1.0; 50], 0.01), Err(Error::InsufficientTail(_))));
    }

    #[test]
    fn sd_examples() {
        assert_eq!(sd(&[2.0; 5]).unwrap(), 0.0);
        assert!((sd(&[-1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(sd(&[1.0]).is_err());
    }

    #[test]
    fn outcomes_examples() {
        let s = ScenarioMatrix::from_rows(&[vec![1.0, 3.0], vec![-2.0, 4.0], vec![0.5, 0.5]], vec!["a".into(), "b".into()])
            .unwrap();
        assert_eq!(portfolio_outcomes(&s, &[1.0, 0.0]).unwrap(), s.column(0));
        assert_eq!(portfolio_outcomes(&s, &[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(portfolio_outcomes(&s, &[0.5, 0.5]).unwrap(), vec![2.0, 1.0, 0.5]);
        assert!(portfolio_outcomes(&s, &[1.0]).is_err());
    }

    #[test]
    fn fh_pass_series_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g: Vec<f64> = (0..500).map(|_| rng.random_range(-0.05..0.08)).collect();
        let x = 5.0;
        let pass = FhPass::new(&g, x);
        for h in [-0.2, -0.01, 0.0, 0.03, 0.3] {
            let direct = foster_hart_objective(&g, 1.0 / (x + h));
            let (series, _) = pass.series(h);
            assert!((series - direct).abs() < 1e-13, "h = {h}: {series} vs {direct}");
        }
    }

    #[test]
    fn foster_hart_matches_plain_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..50 {
            let n = rng.random_range(2..3000);
            let drift = rng.random_range(0.001..0.5);
            let g: Vec<f64> = (0..n).map(|_| drift + rng.random_range(-1.0..1.0)).collect();
            let Ok(l) = gamble_max_loss(&g) else { continue };
            // bisection on R: the objective is negative below the root and positive above it
            let (mut lo, mut hi) = (l * (1.0 + 1e-9), l);
            while foster_hart_objective(&g, hi) <= 0.0 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if foster_hart_objective(&g, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let r = foster_hart(&g, 1e-10).unwrap();
            assert!((r - hi).abs() <= 1e-9 * hi, "case {case}: {r} vs {hi}");
        }
    }

    #[test]
    fn foster_hart_two_point() {
        let r = foster_hart(&[120.0, -100.0], 1e-12).unwrap();
        assert!((r - 600.0).abs() < 1e-6 * 600.0, "{r}");
        let r = foster_hart(&[1.2, -1.0], 1e-12).unwrap();
        assert!((r - 6.0).abs() < 1e-9);
    }

    #[test]
    fn foster_hart_rejects_non_gambles() {
        assert!(matches!(foster_hart(&[1.0, 2.0], 1e-10), Err(Error::NotAGamble(_))));
        assert!(matches!(foster_hart(&[1.0, -2.0], 1e-10), Err(Error::NotAGamble(_))));
    }

    #[test]
    fn foster_hart_hint_does_not_change_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..5000).map(|_| 0.05 + rng.random::<f64>() - 0.5).collect();
        let a = foster_hart(&g, 1e-12).unwrap();
        for h in [a * 0.5, a, a * 3.0, 1e-30, 1e30] {
            let b = foster_hart_hinted(&g, 1e-12, Some(h)).unwrap();
            assert!((a - b).abs() < 1e-9 * a, "hint {h}: {a} vs {b}");
        }
    }
}
