//! Agent Hamiltonians, the closed-form equilibrium quotes Δ(z, q) and a
//! brute-force grid search used to test them.
//!
//! A market maker's instantaneous utility rate on side j is
//! γ_i⁻¹(1 − exp(−γ_i·gain))·λ^j, where the gain per aggregate market order is
//! the incentive z^j plus the quoted spread if the agent is at the best quote,
//! or ω_ℓ times the spread if it is not at the best quote but inside cell ℓ.

use thiserror::Error;

use crate::intensity::{cell_of, side_intensity, SideIntensity};
use crate::model::{Side, ValidatedParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NashError {
    #[error("k*varpi must be positive, got {0}")]
    NonPositiveKVarpi(f64),
    #[error("no equilibrium on the {side:?} grid (step {step})")]
    NoEquilibriumOnGrid { side: Side, step: f64 },
    #[error("grid search supports at most 3 agents and 5e6 profiles per side")]
    SearchTooLarge,
}

/// Incentive loadings (z^a, z^b, z^{S,1..N}) shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveSlice {
    pub z_a: f64,
    pub z_b: f64,
    pub z_s: Vec<f64>,
}

impl IncentiveSlice {
    pub fn new(z_a: f64, z_b: f64, n: usize) -> Self {
        IncentiveSlice {
            z_a,
            z_b,
            z_s: vec![0.0; n],
        }
    }

    pub fn z(&self, side: Side) -> f64 {
        match side {
            Side::Ask => self.z_a,
            Side::Bid => self.z_b,
        }
    }
}

/// Quote matrix δ^{i,j}; `delta[i][side.index()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadMatrix {
    pub delta: Vec<[f64; 2]>,
    /// Number of entries that hit ±δ∞ when the matrix was built.
    pub clamp_events: usize,
}

impl SpreadMatrix {
    pub fn from_sides(ask: &[f64], bid: &[f64]) -> Self {
        SpreadMatrix {
            delta: ask.iter().zip(bid).map(|(&a, &b)| [a, b]).collect(),
            clamp_events: 0,
        }
    }

    pub fn get(&self, i: usize, side: Side) -> f64 {
        self.delta[i][side.index()]
    }

    pub fn side(&self, side: Side) -> Vec<f64> {
        self.delta.iter().map(|d| d[side.index()]).collect()
    }
}

/// Which inventories admit the best-response branch of Δ on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InventoryBand {
    /// q^i > −φ(j)·q̄, the same condition as in the intensity indicator.
    #[default]
    SideSpecific,
    /// −q̄ < q^i < q̄ on both sides.
    TwoSided,
}

impl InventoryBand {
    fn admits(self, q_i: i64, side: Side, vp: &ValidatedParams) -> bool {
        match self {
            InventoryBand::SideSpecific => vp.can_trade(q_i, side),
            InventoryBand::TwoSided => q_i.abs() < vp.q_bar,
        }
    }
}

/// (1/γ)·log(1 + σγ/(kϖ)): the spread plus incentive an isolated best quoter targets.
pub fn risk_premium(gamma: f64, vp: &ValidatedParams) -> f64 {
    (vp.sigma * gamma / vp.k_varpi()).ln_1p() / gamma
}

/// Γ^{i,j}(z) = −z^j + (1/γ_i)·log(1 + σγ_i/(kϖ)).
pub fn gamma_offset(i: usize, z_side: f64, vp: &ValidatedParams) -> Result<f64, NashError> {
    let kv = vp.k_varpi();
    if kv.is_nan() || kv <= 0.0 {
        return Err(NashError::NonPositiveKVarpi(kv));
    }
    Ok(-z_side + risk_premium(vp.gamma[i], vp))
}

/// Places per-agent target spreads on one side: agents in 𝒢 allowed by the band
/// quote their target, the others quote target/ω_ℓ when that lands in cell ℓ
/// (first matching ℓ), and 0 otherwise. Returns the number of clamps at ±δ∞.
pub(crate) fn place_quotes(
    targets: &[f64],
    side: Side,
    q: &[i64],
    vp: &ValidatedParams,
    band: InventoryBand,
    out: &mut [f64],
) -> usize {
    let mut clamps = 0;
    let lim = vp.delta_inf;
    for (i, &target) in targets.iter().enumerate() {
        let admitted = band.admits(q[i], side, vp);
        out[i] = if vp.is_best(i) && admitted {
            if target.abs() > lim {
                clamps += 1;
            }
            target.clamp(-lim, lim)
        } else if admitted && target > 0.0 {
            (1..=vp.cells)
                .map(|ell| (ell, target / vp.omega[ell - 1]))
                .find(|&(ell, s)| cell_of(s, vp) == Some(ell))
                .map_or(0.0, |(_, s)| s)
        } else {
            0.0
        };
    }
    clamps
}

/// Closed-form equilibrium quotes Δ(z, q) with the side-specific inventory band.
pub fn fixed_point_delta(
    z: &IncentiveSlice,
    q: &[i64],
    vp: &ValidatedParams,
) -> Result<SpreadMatrix, NashError> {
    fixed_point_delta_with(z, q, vp, InventoryBand::SideSpecific)
}

pub fn fixed_point_delta_with(
    z: &IncentiveSlice,
    q: &[i64],
    vp: &ValidatedParams,
    band: InventoryBand,
) -> Result<SpreadMatrix, NashError> {
    let n = vp.n();
    let mut delta = vec![[0.0; 2]; n];
    let mut clamp_events = 0;
    let mut targets = vec![0.0; n];
    let mut quotes = vec![0.0; n];
    for side in Side::BOTH {
        for (i, t) in targets.iter_mut().enumerate() {
            *t = gamma_offset(i, z.z(side), vp)?;
        }
        clamp_events += place_quotes(&targets, side, q, vp, band, &mut quotes);
        for i in 0..n {
            delta[i][side.index()] = quotes[i];
        }
    }
    Ok(SpreadMatrix {
        delta,
        clamp_events,
    })
}

/// Gain per aggregate market order for agent `i` given the side's intensities.
pub fn order_gain(i: usize, x: &[f64], si: &SideIntensity, z_side: f64, vp: &ValidatedParams) -> f64 {
    let d = x[i];
    let quote_gain = if si.at_best[i] {
        d
    } else {
        cell_of(d, vp).map_or(0.0, |ell| vp.omega[ell - 1] * d)
    };
    z_side + quote_gain
}

/// Agent `i`'s utility rate from one side of the book.
pub fn side_utility(
    i: usize,
    x: &[f64],
    side: Side,
    z_side: f64,
    q: &[i64],
    vp: &ValidatedParams,
) -> f64 {
    let si = side_intensity(x, side, q, vp);
    if si.total == 0.0 {
        return 0.0;
    }
    let g = vp.gamma[i];
    -(-g * order_gain(i, x, &si, z_side, vp)).exp_m1() / g * si.total
}

/// h^i(δ, z, q): agent `i`'s Hamiltonian at the full quote profile `spreads`.
pub fn hamiltonian_i(
    i: usize,
    spreads: &SpreadMatrix,
    z: &IncentiveSlice,
    q: &[i64],
    vp: &ValidatedParams,
) -> f64 {
    Side::BOTH
        .iter()
        .map(|&side| side_utility(i, &spreads.side(side), side, z.z(side), q, vp))
        .sum()
}

/// Value of h^i at the equilibrium: σ/(kϖ + σγ_i)·Σ_j λ^j(Δ, q).
pub fn equilibrium_hamiltonian(i: usize, spreads: &SpreadMatrix, q: &[i64], vp: &ValidatedParams) -> f64 {
    let total: f64 = Side::BOTH
        .iter()
        .map(|&side| side_intensity(&spreads.side(side), side, q, vp).total)
        .sum();
    vp.sigma / (vp.k_varpi() + vp.sigma * vp.gamma[i]) * total
}

/// Uniform spread grid lo, lo+step, …, ≤ hi for the brute-force search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SpreadGrid {
    pub fn points(&self) -> Vec<f64> {
        let m = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=m).map(|j| self.lo + j as f64 * self.step).collect()
    }
}

/// Outcome of [`nash_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCertificate {
    /// Grid equilibrium closest (max-norm) to the closed-form Δ, per side.
    pub profile: SpreadMatrix,
    /// Closed-form quotes the search was compared against.
    pub delta: SpreadMatrix,
    /// Largest improvement of h^i any agent obtains by a grid deviation from Δ.
    pub max_gain_at_delta: f64,
    /// max_{i,j} |profile − Δ|.
    pub distance: f64,
    /// Number of grid equilibria found on (ask, bid).
    pub equilibria: [usize; 2],
}

/// Largest unilateral improvement of h^i available on the grid from `profile`.
pub fn deviation_gain(
    profile: &SpreadMatrix,
    z: &IncentiveSlice,
    q: &[i64],
    vp: &ValidatedParams,
    grid: &SpreadGrid,
) -> f64 {
    let pts = grid.points();
    let mut worst = f64::NEG_INFINITY;
    for side in Side::BOTH {
        let base = profile.side(side);
        for i in 0..vp.n() {
            let here = side_utility(i, &base, side, z.z(side), q, vp);
            let mut x = base.clone();
            for &p in &pts {
                x[i] = p;
                worst = worst.max(side_utility(i, &x, side, z.z(side), q, vp) - here);
            }
        }
    }
    worst
}

/// Exhaustive search for pure Nash equilibria of the per-side quoting game on
/// a spread grid. Sides decouple because q is frozen, so each side is searched
/// separately. A profile is an equilibrium when no agent gains more than `tol`
/// by a unilateral grid deviation.
pub fn nash_oracle(
    z: &IncentiveSlice,
    q: &[i64],
    vp: &ValidatedParams,
    grid: &SpreadGrid,
    tol: f64,
) -> Result<OracleCertificate, NashError> {
    let n = vp.n();
    let pts = grid.points();
    let m = pts.len();
    let profiles = m.checked_pow(n as u32).unwrap_or(usize::MAX);
    if n > 3 || profiles > 5_000_000 {
        return Err(NashError::SearchTooLarge);
    }
    let delta = fixed_point_delta(z, q, vp)?;
    let mut chosen = vec![[0.0; 2]; n];
    let mut equilibria = [0usize; 2];
    let mut distance: f64 = 0.0;
    for side in Side::BOTH {
        let zs = z.z(side);
        let digits = |mut p: usize| {
            let mut idx = vec![0usize; n];
            for d in idx.iter_mut() {
                *d = p % m;
                p /= m;
            }
            idx
        };
        let mut util = vec![0.0; profiles * n];
        for p in 0..profiles {
            let x: Vec<f64> = digits(p).iter().map(|&j| pts[j]).collect();
            let si = side_intensity(&x, side, q, vp);
            for i in 0..n {
                util[p * n + i] = if si.total == 0.0 {
                    0.0
                } else {
                    let g = vp.gamma[i];
                    -(-g * order_gain(i, &x, &si, zs, vp)).exp_m1() / g * si.total
                };
            }
        }
        // best[i][p with own digit zeroed] = max over own digit.
        let stride = |i: usize| m.pow(i as u32);
        let mut best_reply = vec![f64::NEG_INFINITY; profiles * n];
        for p in 0..profiles {
            for i in 0..n {
                let own = (p / stride(i)) % m;
                let key = p - own * stride(i);
                let slot = &mut best_reply[key * n + i];
                *slot = slot.max(util[p * n + i]);
            }
        }
        let target = delta.side(side);
        let mut best_dist = f64::INFINITY;
        let mut best_profile = None;
        for p in 0..profiles {
            let is_eq = (0..n).all(|i| {
                let own = (p / stride(i)) % m;
                let key = p - own * stride(i);
                util[p * n + i] >= best_reply[key * n + i] - tol
            });
            if is_eq {
                equilibria[side.index()] += 1;
                let idx = digits(p);
                let d = (0..n)
                    .map(|i| (pts[idx[i]] - target[i]).abs())
                    .fold(0.0, f64::max);
                if d < best_dist {
                    best_dist = d;
                    best_profile = Some(idx);
                }
            }
        }
        let idx = best_profile.ok_or(NashError::NoEquilibriumOnGrid {
            side,
            step: grid.step,
        })?;
        for i in 0..n {
            chosen[i][side.index()] = pts[idx[i]];
        }
        distance = distance.max(best_dist);
    }
    let max_gain_at_delta = deviation_gain(&delta, z, q, vp, grid);
    Ok(OracleCertificate {
        profile: SpreadMatrix {
            delta: chosen,
            clamp_events: 0,
        },
        delta,
        max_gain_at_delta,
        distance,
        equilibria,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelParams};

    #[test]
    fn zero_volatility_offset_is_minus_z() {
        let mut p = ModelParams::baseline();
        p.sigma = 1e-300;
        let vp = validate(&p).unwrap();
        assert!((gamma_offset(0, 0.25, &vp).unwrap() + 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_positive_k_varpi_is_an_error() {
        let mut p = ModelParams::baseline();
        p.varpi = 0.0;
        p.h = Some(vec![0.0]);
        let vp = validate(&p).unwrap();
        assert!(matches!(
            gamma_offset(0, 0.0, &vp),
            Err(NashError::NonPositiveKVarpi(_))
        ));
    }

    #[test]
    fn tied_agents_share_best_branch() {
        let vp = validate(&ModelParams::baseline_n(2)).unwrap();
        let d = fixed_point_delta(&IncentiveSlice::new(0.3, 0.3, 2), &[0, 0], &vp).unwrap();
        assert_eq!(d.get(0, Side::Ask), d.get(1, Side::Ask));
        assert_eq!(d.get(0, Side::Bid), d.get(1, Side::Bid));
    }

    #[test]
    fn blocked_utilities_vanish() {
        let vp = validate(&ModelParams::baseline()).unwrap();
        let z = IncentiveSlice::new(0.0, 0.0, 1);
        let s = SpreadMatrix::from_sides(&[1.0], &[1.0]);
        let blocked_ask = side_utility(0, &s.side(Side::Ask), Side::Ask, 0.0, &[-50], &vp);
        assert_eq!(blocked_ask, 0.0);
        assert!(hamiltonian_i(0, &s, &z, &[-50], &vp) > 0.0);
    }

    #[test]
    fn saturation_limit() {
        let vp = validate(&ModelParams::baseline()).unwrap();
        let z = IncentiveSlice::new(1e4, 1e4, 1);
        let s = SpreadMatrix::from_sides(&[1.0], &[1.0]);
        let lam: f64 = Side::BOTH
            .iter()
            .map(|&sd| side_intensity(&s.side(sd), sd, &[0], &vp).total)
            .sum();
        let h = hamiltonian_i(0, &s, &z, &[0], &vp);
        assert!((h - lam / 0.01).abs() < 1e-9 * h);
    }
}
