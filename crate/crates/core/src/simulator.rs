//! Monte Carlo of the market under the optimal contract and equilibrium quotes.
//!
//! Quotes depend on (t, q) only, so they are recomputed at every price-grid
//! knot and after every market order and held constant in between. On each
//! such segment the two sides are independent exponential clocks with the
//! exact current rates; the efficient price receives an exact Gaussian
//! increment over the segment, so stochastic integrals against S of
//! piecewise-constant integrands are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::incentives::{Equilibrium, IncentiveError, IncentiveField};
use crate::model::Side;
use crate::nash::order_gain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulated inventory {0:?} left the solved grid")]
    ValueFunctionCoverageGap(Vec<i64>),
    #[error("{0}")]
    Incentive(#[from] IncentiveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Price grid resolution in seconds; quotes are refreshed at each knot.
    pub dt_price: f64,
    /// Keep a per-knot time series in the returned path.
    pub record_timeseries: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_price: 0.1,
            record_timeseries: false,
        }
    }
}

/// One market order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub side: Side,
    /// Agent whose inventory moved.
    pub executing: usize,
    /// Agents at the best quote, all credited the spread.
    pub best_quoters: Vec<usize>,
    pub best_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub s: f64,
    pub q: Vec<i64>,
    pub best_ask: f64,
    pub best_bid: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub xi: Vec<f64>,
}

/// Per-path summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub seed: u64,
    /// Time-averaged best ask / bid spread over the time the side was open.
    pub avg_best_ask: f64,
    pub avg_best_bid: f64,
    pub total_flow: f64,
    pub per_agent_flow: Vec<f64>,
    /// c·(N^a + N^b) − Σ ξ^i.
    pub exchange_pnl: f64,
    /// −exp(−η·exchange_pnl); underflows to −0 for large PnL.
    pub exchange_utility: f64,
    /// ξ^i + PL^i.
    pub agent_wealth: Vec<f64>,
    pub agent_utilities: Vec<f64>,
    /// Mean of c + best spread over executed orders (NaN without orders).
    pub trading_cost: f64,
    /// N^j_T − ∫λ^j dt for (ask, bid).
    pub martingale: [f64; 2],
    pub clamp_events: usize,
}

/// A full simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub seed: u64,
    /// (t, S_t) at the price-grid knots, starting at t = 0.
    pub price: Vec<(f64, f64)>,
    pub events: Vec<Event>,
    pub final_q: Vec<i64>,
    /// Spread income Σ (δ 1{best} + ω_ℓ δ 1{cell ℓ, not best}) dN^j per agent.
    pub pl_spread: Vec<f64>,
    /// ∫ Q^i dS per agent.
    pub pl_inventory: Vec<f64>,
    pub xi: Vec<f64>,
    pub exchange_cash: f64,
    pub n_orders: [u64; 2],
    pub compensator: [f64; 2],
    pub timeseries: Vec<TimeSeriesRow>,
    pub stats: PathStats,
}

struct Quoting {
    eq: Equilibrium,
    drift: Vec<f64>,
}

fn quoting(field: &IncentiveField, t: f64, q: &[i64]) -> Result<Quoting, SimError> {
    let eq = field.equilibrium(t, q).map_err(|e| match e {
        IncentiveError::OffGrid(q) => SimError::ValueFunctionCoverageGap(q),
        other => SimError::Incentive(other),
    })?;
    let drift = (0..q.len()).map(|i| field.contract_drift(i, &eq, q)).collect();
    Ok(Quoting { eq, drift })
}

pub fn simulate_path(field: &IncentiveField, seed: u64, cfg: &SimConfig) -> Result<SimPath, SimError> {
    let vp = field.vp;
    let n = vp.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots = (vp.horizon / cfg.dt_price).round().max(1.0) as usize;
    let dtp = vp.horizon / knots as f64;

    let mut t = 0.0;
    let mut s = vp.s0;
    let mut q = vec![0i64; n];
    let mut xi = field.y0_hat.clone();
    let mut pl_spread = vec![0.0; n];
    let mut pl_inventory = vec![0.0; n];
    let mut n_orders = [0u64; 2];
    let mut per_agent_flow = vec![0.0; n];
    let mut compensator = [0.0; 2];
    let mut spread_time = [0.0; 2];
    let mut open_time = [0.0; 2];
    let mut cost_sum = 0.0;
    let mut clamp_events = 0;
    let mut events = Vec::new();
    let mut price = vec![(0.0, s)];
    let mut timeseries = Vec::new();

    let mut cur = quoting(field, 0.0, &q)?;
    clamp_events += cur.eq.delta.clamp_events;
    let record = |t: f64, s: f64, q: &[i64], cur: &Quoting, n_orders: [u64; 2], xi: &[f64]| TimeSeriesRow {
        t,
        s,
        q: q.to_vec(),
        best_ask: cur.eq.side(Side::Ask).best,
        best_bid: cur.eq.side(Side::Bid).best,
        n_a: n_orders[0],
        n_b: n_orders[1],
        xi: xi.to_vec(),
    };
    if cfg.record_timeseries {
        timeseries.push(record(t, s, &q, &cur, n_orders, &xi));
    }

    for k in 0..knots {
        let t_end = if k + 1 == knots { vp.horizon } else { (k + 1) as f64 * dtp };
        if k > 0 {
            cur = quoting(field, t, &q)?;
            clamp_events += cur.eq.delta.clamp_events;
        }
        loop {
            let rates = [cur.eq.rate(Side::Ask), cur.eq.rate(Side::Bid)];
            let total = rates[0] + rates[1];
            let wait = if total > 0.0 {
                rng.sample::<f64, _>(Exp1) / total
            } else {
                f64::INFINITY
            };
            let fires = t + wait < t_end;
            let h = if fires { wait } else { t_end - t };

            let ds = vp.sigma * h.sqrt() * rng.sample::<f64, _>(StandardNormal);
            for i in 0..n {
                xi[i] += cur.eq.z.z_s[i] * ds + cur.drift[i] * h;
                pl_inventory[i] += q[i] as f64 * ds;
            }
            s += ds;
            for side in Side::BOTH {
                let j = side.index();
                compensator[j] += rates[j] * h;
                if !cur.eq.blocked[j] {
                    spread_time[j] += cur.eq.sides[j].best * h;
                    open_time[j] += h;
                }
            }
            t += h;
            if !fires {
                break;
            }

            let side = if rng.random::<f64>() * total < rates[0] {
                Side::Ask
            } else {
                Side::Bid
            };
            let si = cur.eq.side(side);
            let mut pick = rng.random::<f64>() * si.total;
            let mut executing = n;
            for (m, &r) in si.per_agent.iter().enumerate() {
                if r > 0.0 {
                    executing = m;
                    if pick < r {
                        break;
                    }
                    pick -= r;
                }
            }
            debug_assert!(executing < n, "an event fired on a side with no eligible agent");
            let x = cur.eq.delta.side(side);
            let z = cur.eq.z.z(side);
            for m in 0..n {
                xi[m] += z;
                pl_spread[m] += order_gain(m, &x, si, z, vp) - z;
            }
            n_orders[side.index()] += 1;
            per_agent_flow[executing] += 1.0;
            cost_sum += vp.c + si.best;
            events.push(Event {
                t,
                side,
                executing,
                best_quoters: (0..n).filter(|&m| si.at_best[m]).collect(),
                best_spread: si.best,
            });
            q[executing] -= side.phi();
            if q[executing].abs() > vp.q_bar {
                return Err(SimError::ValueFunctionCoverageGap(q));
            }
            cur = quoting(field, t, &q)?;
            clamp_events += cur.eq.delta.clamp_events;
        }
        price.push((t, s));
        if cfg.record_timeseries {
            timeseries.push(record(t, s, &q, &cur, n_orders, &xi));
        }
    }

    let exchange_cash = vp.c * (n_orders[0] + n_orders[1]) as f64;
    let exchange_pnl = exchange_cash - xi.iter().sum::<f64>();
    let agent_wealth: Vec<f64> = (0..n).map(|i| xi[i] + pl_spread[i] + pl_inventory[i]).collect();
    let total_flow = (n_orders[0] + n_orders[1]) as f64;
    let stats = PathStats {
        seed,
        avg_best_ask: spread_time[0] / open_time[0],
        avg_best_bid: spread_time[1] / open_time[1],
        total_flow,
        per_agent_flow,
        exchange_pnl,
        exchange_utility: -(-vp.eta * exchange_pnl).exp(),
        agent_utilities: agent_wealth
            .iter()
            .zip(&vp.gamma)
            .map(|(x, g)| -(-g * x).exp())
            .collect(),
        agent_wealth,
        trading_cost: if total_flow > 0.0 { cost_sum / total_flow } else { f64::NAN },
        martingale: [
            n_orders[0] as f64 - compensator[0],
            n_orders[1] as f64 - compensator[1],
        ],
        clamp_events,
    };
    Ok(SimPath {
        seed,
        price,
        events,
        final_q: q,
        pl_spread,
        pl_inventory,
        xi,
        exchange_cash,
        n_orders,
        compensator,
        timeseries,
        stats,
    })
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

impl MeanSe {
    /// Mean and standard error of the finite entries of `x`.
    pub fn of(x: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = x.into_iter().filter(|a| a.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = pairwise_sum(&v) / n as f64;
        let se = if n > 1 {
            let dev: Vec<f64> = v.iter().map(|a| (a - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        MeanSe { mean, se, n }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }

    /// Whether the k-SE intervals of `self` and `other` are disjoint.
    pub fn separated_from(&self, other: &MeanSe, k: f64) -> bool {
        (self.mean - other.mean).abs() > k * (self.se + other.se)
    }
}

/// Aggregates over a batch of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n_paths: usize,
    pub seed0: u64,
    pub avg_best_ask: MeanSe,
    pub avg_best_bid: MeanSe,
    pub total_spread: MeanSe,
    pub total_flow: MeanSe,
    pub trading_cost: MeanSe,
    pub exchange_pnl: MeanSe,
    pub martingale_ask: MeanSe,
    pub martingale_bid: MeanSe,
    pub per_agent_flow: Vec<MeanSe>,
    pub agent_wealth: Vec<MeanSe>,
    pub clamp_events: usize,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub paths: Vec<PathStats>,
    pub summary: BatchSummary,
}

impl Batch {
    /// Mean/SE of exp(−η(PnL − reference)), the exchange utility divided by
    /// −exp(−η·reference). Matches 1 when the reference is the exchange's
    /// certainty equivalent.
    pub fn normalized_exchange_utility(&self, eta: f64, reference: f64) -> MeanSe {
        MeanSe::of(self.paths.iter().map(|p| (-eta * (p.exchange_pnl - reference)).exp()))
    }

    /// Mean/SE of exp(−γ_i(X^i − ŷ0^i)): agent i's utility divided by R_i.
    pub fn normalized_agent_utility(&self, i: usize, gamma: f64, y0: f64) -> MeanSe {
        MeanSe::of(self.paths.iter().map(|p| (-gamma * (p.agent_wealth[i] - y0)).exp()))
    }
}

pub fn summarize(paths: &[PathStats], seed0: u64) -> BatchSummary {
    let col = |f: &dyn Fn(&PathStats) -> f64| MeanSe::of(paths.iter().map(f));
    let n = paths.first().map_or(0, |p| p.per_agent_flow.len());
    BatchSummary {
        n_paths: paths.len(),
        seed0,
        avg_best_ask: col(&|p| p.avg_best_ask),
        avg_best_bid: col(&|p| p.avg_best_bid),
        total_spread: col(&|p| p.avg_best_ask + p.avg_best_bid),
        total_flow: col(&|p| p.total_flow),
        trading_cost: col(&|p| p.trading_cost),
        exchange_pnl: col(&|p| p.exchange_pnl),
        martingale_ask: col(&|p| p.martingale[0]),
        martingale_bid: col(&|p| p.martingale[1]),
        per_agent_flow: (0..n).map(|i| col(&|p| p.per_agent_flow[i])).collect(),
        agent_wealth: (0..n).map(|i| col(&|p| p.agent_wealth[i])).collect(),
        clamp_events: paths.iter().map(|p| p.clamp_events).sum(),
    }
}

/// Simulates paths with seeds seed0, seed0+1, … in parallel.
pub fn run_batch(
    field: &IncentiveField,
    n_paths: usize,
    seed0: u64,
    cfg: &SimConfig,
) -> Result<Batch, SimError> {
    let cfg = SimConfig {
        record_timeseries: false,
        ..cfg.clone()
    };
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(field, seed0 + i, &cfg).map(|p| p.stats))
        .collect::<Result<Vec<_>, _>>()?;
    if paths.iter().any(|p| p.clamp_events > 0) {
        log::warn!("equilibrium spreads clamped at ±delta_inf; increase delta_inf");
    }
    let summary = summarize(&paths, seed0);
    Ok(Batch { paths, summary })
}
