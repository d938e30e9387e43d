//! Market-order arrival intensities λ^{i,j}(x, q) and their aggregate λ^j.
//!
//! The aggregate intensity on a side is A·exp(−(k/σ)(c + ϖ·Σ best spreads +
//! Σ H_ℓ·non-best spreads in cell ℓ)). It is split evenly among the agents at
//! the best quote who are allowed to trade on that side.

use crate::model::{Side, ValidatedParams};

/// Tolerance (in ticks) for "x^m equals the minimum" comparisons.
pub const TIE_EPS: f64 = 1e-9;

/// Index ℓ ≥ 1 of the covering cell ((ℓ−1)·Tick, min(ℓ·Tick, δ∞)] that
/// contains `spread`, or `None` outside (0, δ∞].
pub fn cell_of(spread: f64, vp: &ValidatedParams) -> Option<usize> {
    if spread.is_nan() || spread <= 0.0 || spread > vp.delta_inf {
        return None;
    }
    let ell = ((spread / vp.tick).ceil() as usize).max(1);
    (ell <= vp.cells).then_some(ell)
}

/// Intensities on one side of the book for a given quote vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SideIntensity {
    /// λ^j, the aggregate rate.
    pub total: f64,
    /// λ^{i,j} per agent.
    pub per_agent: Vec<f64>,
    /// Best (smallest) quote.
    pub best: f64,
    /// Whether each agent quotes the best spread (within [`TIE_EPS`]).
    pub at_best: Vec<bool>,
}

fn exponent_rate(x: &[f64], best: f64, vp: &ValidatedParams) -> f64 {
    let mut terms: Vec<f64> = x
        .iter()
        .filter_map(|&xm| {
            if xm - best <= TIE_EPS {
                Some(vp.varpi * xm)
            } else {
                cell_of(xm, vp).map(|ell| vp.h[ell - 1] * xm)
            }
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let weighted: f64 = terms.iter().sum();
    vp.a * (-vp.k_over_sigma * (vp.c + weighted)).exp()
}

pub fn side_intensity(x: &[f64], side: Side, q: &[i64], vp: &ValidatedParams) -> SideIntensity {
    let best = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let at_best: Vec<bool> = x.iter().map(|&xm| xm - best <= TIE_EPS).collect();
    let eligible = |m: usize| at_best[m] && vp.can_trade(q[m], side);
    let count = (0..x.len()).filter(|&m| eligible(m)).count();
    if count == 0 {
        return SideIntensity {
            total: 0.0,
            per_agent: vec![0.0; x.len()],
            best,
            at_best,
        };
    }
    let rate = exponent_rate(x, best, vp);
    let share = rate / count as f64;
    let per_agent = (0..x.len())
        .map(|m| if eligible(m) { share } else { 0.0 })
        .collect();
    SideIntensity {
        total: rate,
        per_agent,
        best,
        at_best,
    }
}

/// λ^{i,j}(x, q) for agent `i` on `side`.
pub fn lambda_ij(i: usize, x: &[f64], side: Side, q: &[i64], vp: &ValidatedParams) -> f64 {
    side_intensity(x, side, q, vp).per_agent[i]
}

/// λ^j(x, q) = Σ_i λ^{i,j}(x, q).
pub fn lambda_aggregate(x: &[f64], side: Side, q: &[i64], vp: &ValidatedParams) -> f64 {
    side_intensity(x, side, q, vp).total
}

/// Uniform upper bound on any intensity over the admissible spread box.
pub fn intensity_bound(vp: &ValidatedParams) -> f64 {
    let h_sum: f64 = vp.h.iter().sum();
    vp.a * (-vp.k_over_sigma * vp.c).exp()
        * (vp.k_over_sigma * (vp.varpi + h_sum).abs() * vp.n() as f64 * vp.delta_inf).exp()
}
