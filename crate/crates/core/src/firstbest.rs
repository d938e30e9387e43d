//! First-best benchmark: the exchange dictates spreads and bears the pooled
//! risk with aggregate risk aversion Γ̃ = η/(1 + ηΓ), Γ = Σ 1/γ_i.
//!
//! Its reduced problem is the ODE system
//! ∂_t v + v((σ²/2)Γ̃²‖q‖² − C̃·Σ_j (v / Σ_{i∈𝒢} v(q ⊖_i φ(j)))^{kϖ/(σΓ̃)}) = 0, v(T) = −1,
//! solved with the same integrator as the second-best system.

use crate::hjb::{constants, solve_system, HjbError, SolveOptions, ValueFunction};
use crate::incentives::IncentiveError;
use crate::model::{Side, ValidatedParams};
use crate::nash::{place_quotes, InventoryBand, SpreadMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstBestParams {
    pub gamma_tilde: f64,
    pub c_fb: f64,
    /// Exponent kϖ/(σΓ̃) of the value ratio.
    pub exponent: f64,
}

pub fn first_best_params(vp: &ValidatedParams) -> FirstBestParams {
    let gt = vp.eta / (1.0 + vp.eta * vp.gamma_inv_sum);
    let kv = vp.k_varpi();
    let x = gt * vp.sigma / kv;
    let exponent = kv / (vp.sigma * gt);
    FirstBestParams {
        gamma_tilde: gt,
        c_fb: vp.a * (-exponent * x.ln_1p()).exp() * gt * vp.sigma / (kv + gt * vp.sigma),
        exponent,
    }
}

/// (σ²/2)·Γ̃²·‖q‖², the first-best inventory penalty.
pub fn first_best_potential(vp: &ValidatedParams, fb: &FirstBestParams, q: &[i64]) -> f64 {
    let norm2: f64 = q.iter().map(|&x| (x * x) as f64).sum();
    0.5 * vp.sigma * vp.sigma * fb.gamma_tilde * fb.gamma_tilde * norm2
}

pub fn solve_first_best(vp: &ValidatedParams, opts: &SolveOptions) -> Result<ValueFunction, HjbError> {
    let fb = first_best_params(vp);
    solve_system(vp, opts, |q| first_best_potential(vp, &fb, q), fb.c_fb, fb.exponent)
}

/// First-best quotes: per side the target
/// 𝒫^j = (1/Γ̃)(log(1 + Γ̃σ/(kϖ)) + log(Σ_{i∈𝒢} v(q ⊖_i φ(j)) / v(q))),
/// placed with the same cell rule as the second-best quotes.
pub fn first_best_spreads(
    t: f64,
    q: &[i64],
    value_fb: &ValueFunction,
    vp: &ValidatedParams,
) -> Result<SpreadMatrix, IncentiveError> {
    let fb = first_best_params(vp);
    let tw = value_fb.time_weight(t);
    let here = value_fb
        .index_of(q)
        .ok_or_else(|| IncentiveError::OffGrid(q.to_vec()))?;
    let w = value_fb.logv_at(tw, here);
    let n = vp.n();
    let mut delta = vec![[0.0; 2]; n];
    let mut clamp_events = 0;
    let mut quotes = vec![0.0; n];
    for side in Side::BOTH {
        let lse = value_fb
            .neighbour_lse(tw, q, side, vp)
            .ok_or_else(|| IncentiveError::SideBlocked {
                side,
                q: q.to_vec(),
            })?;
        let target = ((fb.gamma_tilde * vp.sigma / vp.k_varpi()).ln_1p() + lse - w) / fb.gamma_tilde;
        clamp_events += place_quotes(&vec![target; n], side, q, vp, InventoryBand::SideSpecific, &mut quotes);
        for i in 0..n {
            delta[i][side.index()] = quotes[i];
        }
    }
    Ok(SpreadMatrix {
        delta,
        clamp_events,
    })
}

/// First-best versus second-best comparison on a common grid.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub c_sb: f64,
    pub c_fb: f64,
    pub gamma_tilde: f64,
    /// v_SB(0, 0) and v_FB(0, 0) in log(−v) form.
    pub log_neg_v_sb0: f64,
    pub log_neg_v_fb0: f64,
    /// (q, C^S(q), (σ²/2)Γ̃²‖q‖²) on every state.
    pub potentials: Vec<(Vec<i64>, f64, f64)>,
    pub second_best: ValueFunction,
    pub first_best: ValueFunction,
}

impl Comparison {
    /// |C − C̃^FB| / C̃^FB.
    pub fn constant_gap(&self) -> f64 {
        (self.c_sb - self.c_fb).abs() / self.c_fb
    }

    /// v_FB(0,0) − v_SB(0,0), computed without underflow.
    pub fn value_gap_at_origin(&self) -> f64 {
        self.log_neg_v_sb0.exp() - self.log_neg_v_fb0.exp()
    }

    /// True when the two value functions differ somewhere at t = 0.
    pub fn differs(&self) -> bool {
        let a = self.second_best.snapshot(0);
        let b = self.first_best.snapshot(0);
        a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9)
    }

    /// Rows (t, q, v_SB, v_FB) at every `stride`-th stored time.
    pub fn rows(&self, stride: usize) -> Vec<(f64, Vec<i64>, f64, f64)> {
        let sb = self.second_best.rows(stride);
        let fb = self.first_best.rows(stride);
        sb.into_iter()
            .zip(fb)
            .map(|((t, q, v_sb, _), (_, _, v_fb, _))| (t, q, v_sb, v_fb))
            .collect()
    }
}

pub fn compare_first_second_best(vp: &ValidatedParams, opts: &SolveOptions) -> Result<Comparison, HjbError> {
    let k = constants(vp);
    let fb = first_best_params(vp);
    let second_best = crate::hjb::solve_backward(vp, opts)?;
    let first_best = solve_first_best(vp, opts)?;
    let origin = vec![0; vp.n()];
    let states = second_best.space.states();
    let potentials = states
        .iter()
        .map(|q| (q.clone(), k.c_s(q), first_best_potential(vp, &fb, q)))
        .collect();
    Ok(Comparison {
        c_sb: k.c,
        c_fb: fb.c_fb,
        gamma_tilde: fb.gamma_tilde,
        log_neg_v_sb0: second_best.log_neg_v(0.0, &origin).expect("origin on grid"),
        log_neg_v_fb0: first_best.log_neg_v(0.0, &origin).expect("origin on grid"),
        potentials,
        second_best,
        first_best,
    })
}
