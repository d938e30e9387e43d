//! The exchange's value function.
//!
//! After substituting the optimal incentives, the exchange HJB reduces to a
//! system of ODEs indexed by the inventory vector:
//!
//! ∂_t v = −v·C^S(q) + v·C·Σ_j (v(q) / Σ_{i∈𝒢} v(q ⊖_i φ(j)))^p,  v(T, ·) = −1,
//!
//! with p = kϖ/(ση). Values reach magnitudes like e^{−800}, so the solver
//! integrates w = log(−v) instead, for which the system reads
//!
//! ∂_t w = −C^S(q) + C·Σ_j exp(p·(w(q) − log Σ_{i∈𝒢} e^{w(q ⊖_i φ(j))})),  w(T, ·) = 0,
//!
//! and is integrated backward in time with classical RK4. The same machinery
//! solves the first-best system with a different potential, rate and exponent.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{incentive_log_argument, Side, ValidatedParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HjbError {
    #[error("integration produced a non-finite value near t = {t} after {retries} step halvings")]
    StepRejected { t: f64, retries: usize },
    #[error("state space has {states} states, limit is {limit}; lower q_bar or enable symmetry reduction")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("symmetry reduction requires equal risk aversions")]
    SymmetryRequiresEqualGamma,
    #[error("time step must be positive and at most T, got {0}")]
    InvalidStep(f64),
}

/// Risk-sharing weights μ and normalisation κ of the optimal price loadings
/// z^{S,i}(q) = −Σ_j μ_{i,j} γ_j q^j.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSharingMatrix {
    pub mu: Vec<Vec<f64>>,
    pub kappa: f64,
}

fn product_except(gamma: &[f64], skip: &[usize]) -> f64 {
    gamma
        .iter()
        .enumerate()
        .filter(|(k, _)| !skip.contains(k))
        .map(|(_, g)| g)
        .product()
}

pub fn risk_sharing(vp: &ValidatedParams) -> RiskSharingMatrix {
    let g = &vp.gamma;
    let n = g.len();
    let eta = vp.eta;
    let kappa_inv =
        product_except(g, &[]) + eta * (0..n).map(|j| product_except(g, &[j])).sum::<f64>();
    let kappa = 1.0 / kappa_inv;
    let mu = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        let others: f64 = (0..n)
                            .filter(|&k| k != i)
                            .map(|k| product_except(g, &[i, k]))
                            .sum();
                        kappa * (product_except(g, &[i]) + eta * others)
                    } else {
                        -eta * kappa * product_except(g, &[i, j])
                    }
                })
                .collect()
        })
        .collect();
    RiskSharingMatrix { mu, kappa }
}

impl RiskSharingMatrix {
    /// z^{S}(q) = −μ·diag(γ)·q.
    pub fn z_s(&self, gamma: &[f64], q: &[i64]) -> Vec<f64> {
        self.mu
            .iter()
            .map(|row| {
                -row.iter()
                    .zip(gamma)
                    .zip(q)
                    .map(|((m, g), &qj)| m * g * qj as f64)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// The constants of the substituted ODE system.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbConstants {
    /// Jump-term rate C.
    pub c: f64,
    /// Exponent p = kϖ/(ση) of the value ratio.
    pub exponent: f64,
    pub risk: RiskSharingMatrix,
    eta: f64,
    sigma: f64,
    gamma: Vec<f64>,
}

pub fn constants(vp: &ValidatedParams) -> HjbConstants {
    let kv = vp.k_varpi();
    let (s, e) = (vp.sigma, vp.eta);
    let sum: f64 = vp.gamma.iter().map(|g| 1.0 / (kv + s * g)).sum();
    let card = vp.best.len() as f64;
    let premia: f64 = vp.gamma.iter().map(|g| (s * g / kv).ln_1p() / g).sum();
    let expo = vp.c * (1.0 - vp.varpi) - (vp.varpi / e) * (incentive_log_argument(vp) * card).ln()
        + vp.varpi * premia;
    let c = vp.a * (-vp.k_over_sigma * expo).exp() * (s * e / (kv + s * e)) * (1.0 + e * s * sum);
    HjbConstants {
        c,
        exponent: kv / (s * e),
        risk: risk_sharing(vp),
        eta: e,
        sigma: s,
        gamma: vp.gamma.clone(),
    }
}

impl HjbConstants {
    /// C^S(q): the exchange's certainty-equivalent cost of the price risk
    /// carried by agents and exchange under optimal risk sharing.
    pub fn c_s(&self, q: &[i64]) -> f64 {
        let z = self.risk.z_s(&self.gamma, q);
        let s2 = self.sigma * self.sigma;
        let agents: f64 = self
            .gamma
            .iter()
            .zip(q)
            .zip(&z)
            .map(|((g, &qi), zi)| (qi as f64 + zi).powi(2) * g)
            .sum();
        let total: f64 = z.iter().sum();
        self.eta / 2.0 * s2 * agents + self.eta * self.eta * s2 / 2.0 * total * total
    }
}

/// Enumeration of the inventory grid, either the full tensor product
/// {−q̄..q̄}^N or, for exchangeable agents, the sorted multisets.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub n: usize,
    pub q_bar: i64,
    pub symmetric: bool,
    len: usize,
    binom: Vec<Vec<u64>>,
}

fn binomial_table(max: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; max + 1]; max + 1];
    for a in 0..=max {
        t[a][0] = 1;
        for b in 1..=a {
            t[a][b] = t[a - 1][b - 1].saturating_add(t[a - 1][b]);
        }
    }
    t
}

impl StateSpace {
    pub fn new(n: usize, q_bar: i64, symmetric: bool) -> Self {
        let m = (2 * q_bar + 1) as usize;
        let binom = binomial_table(m + n);
        let len = if symmetric {
            binom[m + n - 1][n] as usize
        } else {
            m.checked_pow(n as u32).unwrap_or(usize::MAX)
        };
        StateSpace {
            n,
            q_bar,
            symmetric,
            len,
            binom,
        }
    }

    /// Number of states that a layout would have, without building it.
    pub fn count(n: usize, q_bar: i64, symmetric: bool) -> usize {
        StateSpace::new(n, q_bar, symmetric).len
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn m(&self) -> i64 {
        2 * self.q_bar + 1
    }

    /// Index of inventory vector `q`, or `None` outside the grid.
    pub fn index_of(&self, q: &[i64]) -> Option<usize> {
        if q.len() != self.n || q.iter().any(|x| x.abs() > self.q_bar) {
            return None;
        }
        if self.symmetric {
            let mut sorted = q.to_vec();
            sorted.sort_unstable();
            let rank = sorted
                .iter()
                .enumerate()
                .map(|(i, &x)| self.binom[(x + self.q_bar) as usize + i][i + 1])
                .sum::<u64>();
            Some(rank as usize)
        } else {
            let m = self.m();
            Some(q.iter().rev().fold(0i64, |acc, &x| acc * m + (x + self.q_bar)) as usize)
        }
    }

    /// All states in index order.
    pub fn states(&self) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::new(); self.len];
        if self.symmetric {
            let mut cur = vec![-self.q_bar; self.n];
            loop {
                let idx = self.index_of(&cur).expect("generated state is on the grid");
                out[idx] = cur.clone();
                // Next nondecreasing tuple in lexicographic order.
                let Some(pos) = (0..self.n).rev().find(|&p| cur[p] < self.q_bar) else {
                    break;
                };
                let v = cur[pos] + 1;
                for x in cur.iter_mut().skip(pos) {
                    *x = v;
                }
            }
        } else {
            let m = self.m() as usize;
            for (idx, slot) in out.iter_mut().enumerate() {
                let mut rest = idx;
                *slot = (0..self.n)
                    .map(|_| {
                        let d = (rest % m) as i64 - self.q_bar;
                        rest /= m;
                        d
                    })
                    .collect();
            }
        }
        out
    }
}

/// Neighbour structure of the ODE: for each state and side, the distinct
/// states q ⊖_i φ(j) reachable by members of 𝒢 with their multiplicity.
#[derive(Debug, Clone)]
struct Neighbours {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl Neighbours {
    fn build(space: &StateSpace, states: &[Vec<i64>], best: &[usize], vp: &ValidatedParams) -> Self {
        let mut offsets = Vec::with_capacity(2 * states.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        let agents: Vec<usize> = if space.symmetric {
            (0..space.n).collect()
        } else {
            best.to_vec()
        };
        for q in states {
            for side in Side::BOTH {
                let mut local: Vec<(u32, f64)> = Vec::new();
                for &i in &agents {
                    if !vp.can_trade(q[i], side) {
                        continue;
                    }
                    let mut nq = q.clone();
                    nq[i] -= side.phi();
                    let idx = space.index_of(&nq).expect("neighbour stays on the grid") as u32;
                    match local.iter_mut().find(|(j, _)| *j == idx) {
                        Some(e) => e.1 += 1.0,
                        None => local.push((idx, 1.0)),
                    }
                }
                entries.extend(local);
                offsets.push(entries.len());
            }
        }
        Neighbours { offsets, entries }
    }

    fn of(&self, state: usize, side: usize) -> &[(u32, f64)] {
        let k = 2 * state + side;
        &self.entries[self.offsets[k]..self.offsets[k + 1]]
    }
}

/// Generator data of a log-transformed system ∂_τ w = a(q) − b·Σ_j exp(p·(w − LSE)).
#[derive(Debug, Clone)]
pub struct Generator {
    pub potential: Vec<f64>,
    pub rate: f64,
    pub exponent: f64,
}

/// Controls for [`solve_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub dt: f64,
    /// `None` reduces by symmetry when N ≥ 3 and all γ are equal.
    pub reduce_symmetry: Option<bool>,
    /// Store every k-th step; `None` picks the smallest k that fits `max_stored_values`.
    pub store_every: Option<usize>,
    pub max_states: usize,
    pub max_stored_values: usize,
    pub max_retries: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dt: 0.1,
            reduce_symmetry: None,
            store_every: None,
            max_states: 2_000_000,
            max_stored_values: 40_000_000,
            max_retries: 4,
        }
    }
}

impl SolveOptions {
    pub fn with_dt(dt: f64) -> Self {
        SolveOptions {
            dt,
            ..Default::default()
        }
    }
}

/// Solved value function, stored as w = log(−v) on a time grid × state grid.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub space: StateSpace,
    /// Increasing time knots in [0, T].
    pub times: Vec<f64>,
    /// Integration step actually used (after any halving).
    pub dt: f64,
    /// Agents whose neighbours enter the ratio sums.
    pub best: Vec<usize>,
    logv: Vec<f64>,
}

/// Position in time used for repeated lookups at the same t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWeight {
    k: usize,
    w: f64,
}

impl ValueFunction {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// w = log(−v) at time knot `k` for every state.
    pub fn snapshot(&self, k: usize) -> &[f64] {
        let s = self.space.len();
        &self.logv[k * s..(k + 1) * s]
    }

    pub fn time_weight(&self, t: f64) -> TimeWeight {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return TimeWeight { k: 0, w: 0.0 };
        }
        if t >= self.times[last] {
            return TimeWeight { k: last, w: 0.0 };
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        TimeWeight { k, w }
    }

    /// log(−v) at a time position and state index, linear in t between knots.
    pub fn logv_at(&self, tw: TimeWeight, state: usize) -> f64 {
        let s = self.space.len();
        let lo = self.logv[tw.k * s + state];
        if tw.w == 0.0 {
            lo
        } else {
            lo + tw.w * (self.logv[(tw.k + 1) * s + state] - lo)
        }
    }

    pub fn index_of(&self, q: &[i64]) -> Option<usize> {
        self.space.index_of(q)
    }

    /// log(−v(t, q)).
    pub fn log_neg_v(&self, t: f64, q: &[i64]) -> Option<f64> {
        let s = self.index_of(q)?;
        Some(self.logv_at(self.time_weight(t), s))
    }

    /// v(t, q); underflows to −0 when log(−v) < −745.
    pub fn v(&self, t: f64, q: &[i64]) -> Option<f64> {
        self.log_neg_v(t, q).map(|w| -w.exp())
    }

    /// log Σ_{i∈𝒢, unblocked} (−v(t, q ⊖_i φ(j))), or `None` if every member of 𝒢 is blocked.
    pub fn neighbour_lse(
        &self,
        tw: TimeWeight,
        q: &[i64],
        side: Side,
        vp: &ValidatedParams,
    ) -> Option<f64> {
        // Streaming log-sum-exp: running max m and Σ e^{w − m}.
        let (mut m, mut acc) = (f64::NEG_INFINITY, 0.0);
        let mut nq = q.to_vec();
        for &i in &self.best {
            if !vp.can_trade(q[i], side) {
                continue;
            }
            nq[i] -= side.phi();
            let w = self.logv_at(tw, self.index_of(&nq)?);
            nq[i] = q[i];
            if w > m {
                acc = acc * (m - w).exp() + 1.0;
                m = w;
            } else {
                acc += (w - m).exp();
            }
        }
        (acc > 0.0).then(|| m + acc.ln())
    }

    /// Per-state CSV rows (t, q, v, log(−v)) at every `stride`-th stored time.
    pub fn rows(&self, stride: usize) -> Vec<(f64, Vec<i64>, f64, f64)> {
        let states = self.space.states();
        let mut out = Vec::new();
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
            let snap = self.snapshot(k);
            for (q, &w) in states.iter().zip(snap) {
                out.push((self.times[k], q.clone(), -w.exp(), w));
            }
        }
        out
    }
}

/// Builds the state space and the second-best generator, then integrates.
pub fn solve_backward(vp: &ValidatedParams, opts: &SolveOptions) -> Result<ValueFunction, HjbError> {
    let k = constants(vp);
    solve_system(vp, opts, |q| k.c_s(q), k.c, k.exponent)
}

/// Integrates ∂_t v = −v·a(q) + v·b·Σ_j (v / Σ_{i∈𝒢} v(q ⊖_i φ(j)))^p backward from v(T) = −1.
pub fn solve_system(
    vp: &ValidatedParams,
    opts: &SolveOptions,
    potential: impl Fn(&[i64]) -> f64,
    rate: f64,
    exponent: f64,
) -> Result<ValueFunction, HjbError> {
    if !(opts.dt > 0.0 && opts.dt <= vp.horizon) {
        return Err(HjbError::InvalidStep(opts.dt));
    }
    let n = vp.n();
    let symmetric = opts.reduce_symmetry.unwrap_or(n >= 3 && vp.equal_gamma());
    if symmetric && !vp.equal_gamma() {
        return Err(HjbError::SymmetryRequiresEqualGamma);
    }
    let count = StateSpace::count(n, vp.q_bar, symmetric);
    if count > opts.max_states {
        return Err(HjbError::StateSpaceTooLarge {
            states: count,
            limit: opts.max_states,
        });
    }
    let space = StateSpace::new(n, vp.q_bar, symmetric);
    let states = space.states();
    let nb = Neighbours::build(&space, &states, &vp.best, vp);
    let gen = Generator {
        potential: states.iter().map(|q| potential(q)).collect(),
        rate,
        exponent,
    };

    let mut dt = opts.dt;
    for retry in 0..=opts.max_retries {
        match integrate(vp.horizon, dt, &gen, &nb, opts, space.len()) {
            Ok((times, logv)) => {
                return Ok(ValueFunction {
                    space,
                    times,
                    dt: vp.horizon / (vp.horizon / dt).round(),
                    best: vp.best.clone(),
                    logv,
                })
            }
            Err(t) if retry < opts.max_retries => {
                log::warn!("non-finite value near t = {t}; halving dt to {}", dt / 2.0);
                dt /= 2.0;
            }
            Err(t) => {
                return Err(HjbError::StepRejected {
                    t,
                    retries: opts.max_retries,
                })
            }
        }
    }
    unreachable!("retry loop always returns")
}

fn rhs(w: &[f64], gen: &Generator, nb: &Neighbours, out: &mut [f64]) {
    let body = |(s, o): (usize, &mut f64)| {
        let mut jump = 0.0;
        for side in 0..2 {
            let list = nb.of(s, side);
            if list.is_empty() {
                continue;
            }
            let lse = if list.len() == 1 {
                w[list[0].0 as usize] + list[0].1.ln()
            } else {
                let m = list
                    .iter()
                    .map(|&(j, _)| w[j as usize])
                    .fold(f64::NEG_INFINITY, f64::max);
                m + list
                    .iter()
                    .map(|&(j, mult)| mult * (w[j as usize] - m).exp())
                    .sum::<f64>()
                    .ln()
            };
            jump += (gen.exponent * (w[s] - lse)).exp();
        }
        *o = gen.potential[s] - gen.rate * jump;
    };
    if out.len() >= 4096 {
        out.par_iter_mut().enumerate().for_each(body);
    } else {
        out.iter_mut().enumerate().for_each(body);
    }
}

/// Classical RK4 in τ = T − t. Returns increasing times and the stored
/// snapshots, or the time at which a non-finite value appeared.
fn integrate(
    horizon: f64,
    dt_req: f64,
    gen: &Generator,
    nb: &Neighbours,
    opts: &SolveOptions,
    len: usize,
) -> Result<(Vec<f64>, Vec<f64>), f64> {
    let steps = (horizon / dt_req).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let stride = opts.store_every.unwrap_or_else(|| {
        let max_snaps = (opts.max_stored_values / len.max(1)).max(2);
        steps.div_ceil(max_snaps - 1).max(1)
    });
    let mut w = vec![0.0; len];
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    let mut snaps: Vec<f64> = w.clone();
    let mut taus = vec![0.0];
    for step in 1..=steps {
        rhs(&w, gen, nb, &mut k1);
        axpy(&w, 0.5 * dt, &k1, &mut tmp);
        rhs(&tmp, gen, nb, &mut k2);
        axpy(&w, 0.5 * dt, &k2, &mut tmp);
        rhs(&tmp, gen, nb, &mut k3);
        axpy(&w, dt, &k3, &mut tmp);
        rhs(&tmp, gen, nb, &mut k4);
        for s in 0..len {
            w[s] += dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
        }
        let tau = step as f64 * dt;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(horizon - tau);
        }
        if step % stride == 0 || step == steps {
            snaps.extend_from_slice(&w);
            taus.push(if step == steps { horizon } else { tau });
        }
    }
    // Reverse to increasing calendar time.
    let k = taus.len();
    let mut logv = Vec::with_capacity(snaps.len());
    for j in (0..k).rev() {
        logv.extend_from_slice(&snaps[j * len..(j + 1) * len]);
    }
    let times = taus.iter().rev().map(|tau| horizon - tau).collect();
    Ok((times, logv))
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

/// Crude Grönwall bound: v ≥ −exp(T·(max C^S + 2C·N^p)) on the grid.
pub fn gronwall_floor(vp: &ValidatedParams, max_c_s: f64) -> f64 {
    let k = constants(vp);
    let n = vp.n() as f64;
    vp.horizon * (max_c_s + 2.0 * k.c * n.powf(k.exponent))
}
