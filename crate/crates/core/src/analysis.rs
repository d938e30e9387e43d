//! Parameter sweeps and the large-market approximation 𝒮(N) of the exchange's
//! gain from N market makers.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::hjb::{solve_backward, SolveOptions};
use crate::incentives::{reservation_from_no_contract, reservation_utilities, IncentiveField};
use crate::model::{incentive_log_argument, validate, ModelParams, Side, ValidatedParams};
use crate::nash::risk_premium;
use crate::simulator::{run_batch, BatchSummary, SimConfig};

/// 𝒮(N) = 𝒲_N(Z*) − 2λ_N·B_N for an equal-γ template (γ = template.gamma[0]),
/// using the template's ϖ and c. `n` may be any positive real.
pub fn s_of_n(template: &ModelParams, n: f64) -> f64 {
    let (a, k, s, c, eta) = (template.a, template.k, template.sigma, template.c, template.eta);
    let g = template.gamma[0];
    let vp = template.varpi;
    let kv = k * vp;
    let premium = (s * g / kv).ln_1p();
    let b = (kv / (kv + s * eta) * n * (1.0 + n * eta * s / (kv + s * g))).ln() / eta;
    let lambda = a * (-(k / s) * (c * (1.0 - vp) - vp * (-(n / g) * premium + b))).exp();
    let w = 2.0 * a * s / (kv + s * g)
        * n
        * (-(k / s) * (c + vp * n / g * premium)).exp()
        * ((kv / s * (c + b)).exp() - kv / (s * eta));
    w - 2.0 * lambda * b
}

/// (N, 𝒮(N)) for each N in `ns`.
pub fn s_of_n_table(template: &ModelParams, ns: &[f64]) -> Vec<(f64, f64)> {
    ns.iter().map(|&n| (n, s_of_n(template, n))).collect()
}

/// Integer N in 1..=max_n maximising 𝒮.
pub fn argmax_s_of_n(template: &ModelParams, max_n: usize) -> usize {
    (1..=max_n)
        .max_by(|&x, &y| s_of_n(template, x as f64).total_cmp(&s_of_n(template, y as f64)))
        .unwrap_or(1)
}

/// (1/η)·log(B'·Card 𝒢), the state-independent part of the incentive level.
pub fn z_star_constant(vp: &ValidatedParams) -> f64 {
    (incentive_log_argument(vp) * vp.best.len() as f64).ln() / vp.eta
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Number of identical agents; ϖ and c as in the template.
    N,
    /// Template pool plus one agent with the given γ.
    GammaNewAgent,
    /// Number of identical agents with ϖ = 1/N.
    VarpiRule,
    /// Number of identical agents with ϖ = 1/N and c = (1/N)(σ/k − Tick/2).
    CRule,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "n" => Ok(SweepAxis::N),
            "gamma-new-agent" | "gamma" => Ok(SweepAxis::GammaNewAgent),
            "varpi-rule" | "varpi" => Ok(SweepAxis::VarpiRule),
            "c-rule" | "c" => Ok(SweepAxis::CRule),
            other => Err(format!(
                "unknown axis {other:?}; expected n, gamma-new-agent, varpi-rule or c-rule"
            )),
        }
    }
}

/// How each sweep point sets reservation utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReservationRule {
    /// R_i from the value of quoting without a contract at that point.
    NoContract,
    /// R_i copied from the template (first entry broadcast when N changes).
    Template,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub solve: SolveOptions,
    pub sim: SimConfig,
    pub paths: usize,
    pub seed: u64,
    pub reservation: ReservationRule,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            solve: SolveOptions::default(),
            sim: SimConfig::default(),
            paths: 1000,
            seed: 42,
            reservation: ReservationRule::NoContract,
        }
    }
}

/// One sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    /// Hash of the resolved parameters.
    pub key: String,
    pub n_agents: usize,
    pub varpi: f64,
    pub c: f64,
    pub dt: f64,
    pub q_bar: i64,
    pub symmetric: bool,
    pub runtime_s: f64,
    /// Equilibrium best ask + best bid at t = 0, q = 0.
    pub spread_t0: f64,
    pub s_of_n: f64,
    pub summary: Option<BatchSummary>,
    pub error: Option<String>,
}

/// Parameters of one sweep point.
pub fn point_params(
    template: &ModelParams,
    axis: SweepAxis,
    value: f64,
    reservation: ReservationRule,
) -> Result<ValidatedParams, String> {
    let mut p = template.clone();
    let resize = |p: &mut ModelParams, n: usize| {
        p.n_agents = n;
        p.gamma = vec![template.gamma[0]; n];
        p.r = vec![template.r[0]; n];
        p.q_bar = None;
        p.h = None;
    };
    let as_count = |v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(format!("axis value {v} is not a positive integer"))
        }
    };
    match axis {
        SweepAxis::N => resize(&mut p, as_count(value)?),
        SweepAxis::VarpiRule | SweepAxis::CRule => {
            let n = as_count(value)?;
            resize(&mut p, n);
            p.varpi = 1.0 / n as f64;
            if axis == SweepAxis::CRule {
                p.c = (p.sigma / p.k - p.tick / 2.0) / n as f64;
            }
        }
        SweepAxis::GammaNewAgent => {
            p.n_agents += 1;
            p.gamma.push(value);
            p.r.push(template.r[0]);
            p.q_bar = None;
            p.h = None;
        }
    }
    let vp = validate(&p).map_err(|e| e.to_string())?;
    match reservation {
        ReservationRule::Template => Ok(vp),
        ReservationRule::NoContract => {
            let y0 = reservation_from_no_contract(&vp).map_err(|e| e.to_string())?;
            let r = reservation_utilities(&vp.gamma, &y0);
            vp.modified(|p| p.r = r).map_err(|e| e.to_string())
        }
    }
}

fn params_key(p: &ModelParams) -> String {
    let mut h = DefaultHasher::new();
    serde_json::to_string(p).unwrap_or_default().hash(&mut h);
    format!("{:016x}", h.finish())
}

fn run_point(template: &ModelParams, axis: SweepAxis, value: f64, opts: &SweepOptions) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        axis,
        value,
        key: String::new(),
        n_agents: 0,
        varpi: f64::NAN,
        c: f64::NAN,
        dt: opts.solve.dt,
        q_bar: 0,
        symmetric: false,
        runtime_s: 0.0,
        spread_t0: f64::NAN,
        s_of_n: f64::NAN,
        summary: None,
        error: None,
    };
    let result = (|| -> Result<(), String> {
        let vp = point_params(template, axis, value, opts.reservation)?;
        row.key = params_key(vp.params());
        row.n_agents = vp.n();
        row.varpi = vp.varpi;
        row.c = vp.c;
        row.q_bar = vp.q_bar;
        if vp.equal_gamma() {
            row.s_of_n = s_of_n(vp.params(), vp.n() as f64);
        }
        let value_fn = solve_backward(&vp, &opts.solve).map_err(|e| e.to_string())?;
        row.dt = value_fn.dt;
        row.symmetric = value_fn.space.symmetric;
        let field = IncentiveField::new(&vp, &value_fn);
        let eq = field
            .equilibrium(0.0, &vec![0; vp.n()])
            .map_err(|e| e.to_string())?;
        row.spread_t0 = eq.side(Side::Ask).best + eq.side(Side::Bid).best;
        let batch = run_batch(&field, opts.paths, opts.seed, &opts.sim).map_err(|e| e.to_string())?;
        row.summary = Some(batch.summary);
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("sweep point {axis:?}={value} failed: {e}");
        row.error = Some(e);
    }
    row.runtime_s = start.elapsed().as_secs_f64();
    row
}

/// Solves and simulates each point. Failures are recorded in the row's
/// `error` field and the remaining points still run.
pub fn sweep(template: &ModelParams, axis: SweepAxis, values: &[f64], opts: &SweepOptions) -> Vec<SweepRow> {
    values
        .par_iter()
        .map(|&v| run_point(template, axis, v, opts))
        .collect()
}

/// Best-spread offset (1/γ)·log(1 + σγ/(kϖ)) of each agent; the equilibrium
/// best spread at zero incentive is the maximum over the pool.
pub fn spread_offsets(vp: &ValidatedParams) -> Vec<f64> {
    vp.gamma.iter().map(|&g| risk_premium(g, vp)).collect()
}
