//! Optimal incentives z*(t, q), the contract accumulator ξ*, reservation
//! transfers, the best-quote switching rule and taker-cost calibration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hjb::{constants, HjbConstants, TimeWeight, ValueFunction};
use crate::intensity::{cell_of, side_intensity, SideIntensity, TIE_EPS};
use crate::model::{incentive_log_argument, Side, ValidatedParams};
use crate::nash::{fixed_point_delta, gamma_offset, risk_premium, side_utility, IncentiveSlice, SpreadMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncentiveError {
    #[error("every most-risk-averse agent is at the inventory bound on the {side:?} side at q = {q:?}")]
    SideBlocked { side: Side, q: Vec<i64> },
    #[error("inventory {0:?} is outside the solved grid")]
    OffGrid(Vec<i64>),
    #[error("no-contract approximation out of range: w = {0}")]
    ApproximationOutOfRange(f64),
    #[error("{0}")]
    Nash(#[from] crate::nash::NashError),
}

/// ŷ0^i = −(1/γ_i)·log(−R_i), the certainty equivalent of R_i.
pub fn y0_hat(vp: &ValidatedParams) -> Vec<f64> {
    vp.gamma.iter().zip(&vp.r).map(|(g, r)| -(-r).ln() / g).collect()
}

/// R_i = −exp(−γ_i ŷ0^i), inverse of [`y0_hat`].
pub fn reservation_utilities(gamma: &[f64], y0: &[f64]) -> Vec<f64> {
    gamma.iter().zip(y0).map(|(g, y)| -(-g * y).exp()).collect()
}

/// Reservation transfers from the value of quoting without a contract,
/// ŷ0 = (kϖ/σ)·log(1 + 2Ĉ_N T) with
/// Ĉ_N = 2σ/(kϖ+σγ)·A·exp(−(k/σ)(c + (ϖN/γ)·log(1+σγ/(kϖ)))),
/// evaluated with each agent's own γ.
pub fn reservation_from_no_contract(vp: &ValidatedParams) -> Result<Vec<f64>, IncentiveError> {
    let kv = vp.k_varpi();
    let n = vp.n() as f64;
    vp.gamma
        .iter()
        .map(|&g| {
            let c_hat = 2.0 * vp.sigma / (kv + vp.sigma * g)
                * vp.a
                * (-vp.k_over_sigma * (vp.c + vp.varpi * n * risk_premium(g, vp))).exp();
            let w = 1.0 + 2.0 * c_hat * vp.horizon;
            if w.is_nan() || w <= 0.0 || !w.is_finite() {
                return Err(IncentiveError::ApproximationOutOfRange(w));
            }
            Ok(kv / vp.sigma * w.ln())
        })
        .collect()
}

/// Quotes, intensities and incentives at one (t, q).
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub z: IncentiveSlice,
    /// Sides on which every member of 𝒢 is blocked; their flow is zero.
    pub blocked: [bool; 2],
    pub delta: SpreadMatrix,
    pub sides: [SideIntensity; 2],
}

impl Equilibrium {
    pub fn side(&self, side: Side) -> &SideIntensity {
        &self.sides[side.index()]
    }

    /// Aggregate rate on a side (zero if blocked).
    pub fn rate(&self, side: Side) -> f64 {
        self.sides[side.index()].total
    }
}

/// Read-only view of a solved value function that evaluates the optimal
/// contract's loadings.
#[derive(Debug, Clone)]
pub struct IncentiveField<'a> {
    pub vp: &'a ValidatedParams,
    pub value: &'a ValueFunction,
    pub consts: HjbConstants,
    pub y0_hat: Vec<f64>,
    /// c + (1/η)·log(B'·Card 𝒢), the incentive level at a neutral ratio.
    level: f64,
}

impl<'a> IncentiveField<'a> {
    pub fn new(vp: &'a ValidatedParams, value: &'a ValueFunction) -> Self {
        let level = vp.c + (incentive_log_argument(vp) * vp.best.len() as f64).ln() / vp.eta;
        IncentiveField {
            vp,
            value,
            consts: constants(vp),
            y0_hat: y0_hat(vp),
            level,
        }
    }

    /// log(v(t,q) / Σ_{i∈𝒢} v(t, q ⊖_i φ(j))).
    fn log_ratio(&self, side: Side, tw: TimeWeight, q: &[i64]) -> Result<f64, IncentiveError> {
        let here = self
            .value
            .index_of(q)
            .ok_or_else(|| IncentiveError::OffGrid(q.to_vec()))?;
        let lse = self
            .value
            .neighbour_lse(tw, q, side, self.vp)
            .ok_or_else(|| IncentiveError::SideBlocked {
                side,
                q: q.to_vec(),
            })?;
        Ok(self.value.logv_at(tw, here) - lse)
    }

    pub fn z_star_at(&self, side: Side, tw: TimeWeight, q: &[i64]) -> Result<f64, IncentiveError> {
        let r = self.log_ratio(side, tw, q)?;
        Ok((self.level + r / self.vp.eta) / self.vp.n() as f64)
    }

    /// z*,j(t, q) = (1/N)(c + (1/η)log(v/Σ_{𝒢} v(q⊖_iφ(j))) + (1/η)log(B'·Card 𝒢)).
    pub fn z_star(&self, side: Side, t: f64, q: &[i64]) -> Result<f64, IncentiveError> {
        self.z_star_at(side, self.value.time_weight(t), q)
    }

    pub fn z_s(&self, q: &[i64]) -> Vec<f64> {
        self.consts.risk.z_s(&self.vp.gamma, q)
    }

    /// Incentives, quotes and intensities at (t, q). Blocked sides carry z = 0
    /// and zero intensity.
    pub fn equilibrium(&self, t: f64, q: &[i64]) -> Result<Equilibrium, IncentiveError> {
        let tw = self.value.time_weight(t);
        let mut blocked = [false; 2];
        let mut zs = [0.0; 2];
        for side in Side::BOTH {
            match self.z_star_at(side, tw, q) {
                Ok(z) => zs[side.index()] = z,
                Err(IncentiveError::SideBlocked { .. }) => blocked[side.index()] = true,
                Err(e) => return Err(e),
            }
        }
        let z = IncentiveSlice {
            z_a: zs[0],
            z_b: zs[1],
            z_s: self.z_s(q),
        };
        let delta = fixed_point_delta(&z, q, self.vp)?;
        let sides = Side::BOTH.map(|side| {
            let mut si = side_intensity(&delta.side(side), side, q, self.vp);
            if blocked[side.index()] {
                si.total = 0.0;
                si.per_agent.iter_mut().for_each(|x| *x = 0.0);
            }
            si
        });
        Ok(Equilibrium {
            z,
            blocked,
            delta,
            sides,
        })
    }

    /// H^i at the equilibrium, by direct evaluation of the agent Hamiltonian.
    pub fn hamiltonian(&self, i: usize, eq: &Equilibrium, q: &[i64]) -> f64 {
        Side::BOTH
            .iter()
            .filter(|s| !eq.blocked[s.index()])
            .map(|&side| side_utility(i, &eq.delta.side(side), side, eq.z.z(side), q, self.vp))
            .sum()
    }

    /// Drift rate (γ_iσ²/2)(z^{S,i} + q^i)² − H^i of agent i's contract.
    pub fn contract_drift(&self, i: usize, eq: &Equilibrium, q: &[i64]) -> f64 {
        let g = self.vp.gamma[i];
        let x = eq.z.z_s[i] + q[i] as f64;
        0.5 * g * self.vp.sigma * self.vp.sigma * x * x - self.hamiltonian(i, eq, q)
    }
}

/// z*,j(t, q) on a solved value function.
pub fn z_star(
    side: Side,
    t: f64,
    q: &[i64],
    value: &ValueFunction,
    vp: &ValidatedParams,
) -> Result<f64, IncentiveError> {
    IncentiveField::new(vp, value).z_star(side, t, q)
}

/// dξ^i = Z^a dN^a + Z^b dN^b + Z^{S,i} dS + ((γ_iσ²/2)(Z^{S,i}+Q^i)² − H^i) dt,
/// with all loadings evaluated at the pre-event inventory `q_pre`.
#[allow(clippy::too_many_arguments)]
pub fn contract_increment(
    i: usize,
    dt: f64,
    dn_a: f64,
    dn_b: f64,
    ds: f64,
    t: f64,
    q_pre: &[i64],
    field: &IncentiveField,
) -> Result<f64, IncentiveError> {
    let eq = field.equilibrium(t, q_pre)?;
    Ok(eq.z.z_a * dn_a + eq.z.z_b * dn_b + eq.z.z_s[i] * ds + field.contract_drift(i, &eq, q_pre) * dt)
}

/// Threshold on the log u-ratio ρ = log(u(q)/u(q ⊖_i φ(j))) above which agent
/// `i` ∈ 𝒢 keeps the best quote against agent `m` ∉ 𝒢 quoting in cell `cell`.
/// Here u = (−v)^{−kϖ/(ση)}.
pub fn switching_threshold(i: usize, m: usize, cell: usize, vp: &ValidatedParams) -> f64 {
    let w = vp.omega[cell - 1];
    let level = vp.c + (incentive_log_argument(vp) * vp.best.len() as f64).ln() / vp.eta;
    let a_i = risk_premium(vp.gamma[i], vp);
    let a_m = risk_premium(vp.gamma[m], vp);
    vp.k_varpi() / vp.sigma * (level - vp.n() as f64 * (a_m - w * a_i) / (1.0 - w))
}

/// Whether agent `i` holds the best quote on `side` at (t, q).
///
/// For an unblocked member of 𝒢 facing a competitor that quotes inside a
/// covering cell, the comparison is made on the u-ratio; other pairs compare
/// quotes directly.
pub fn switching_predicate(
    i: usize,
    side: Side,
    t: f64,
    q: &[i64],
    field: &IncentiveField,
) -> Result<bool, IncentiveError> {
    let vp = field.vp;
    let eq = field.equilibrium(t, q)?;
    if eq.blocked[side.index()] {
        return Ok(false);
    }
    let x = eq.delta.side(side);
    let direct = |m: usize| x[i] <= x[m] + TIE_EPS;
    if !(vp.is_best(i) && vp.can_trade(q[i], side)) {
        return Ok((0..vp.n()).all(direct));
    }
    let tw = field.value.time_weight(t);
    let rho = -field.consts.exponent * field.log_ratio(side, tw, q)?;
    for m in (0..vp.n()).filter(|&m| m != i) {
        let in_cell = !vp.is_best(m) && vp.can_trade(q[m], side);
        let keeps = match (in_cell, cell_of(x[m], vp)) {
            (true, Some(ell)) => rho >= switching_threshold(i, m, ell, vp) - 1e-12,
            _ => direct(m),
        };
        if !keeps {
            return Ok(false);
        }
    }
    Ok(true)
}

/// How the taker cost is calibrated.
#[derive(Debug, Clone, Copy)]
pub enum TakerCostMode<'f, 'a> {
    /// Best ask and best bid held by the most risk-averse agent, u-ratio ≈ 1.
    Static,
    /// Static rule with σγ/(kϖ) and ση/(kϖ) small.
    SmallRatio,
    /// State-dependent rule using the current u-ratio.
    Dynamic {
        t: f64,
        q: &'f [i64],
        field: &'f IncentiveField<'a>,
    },
}

/// Name used in the `calibrate-fee` output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TakerCostKind {
    Static,
    SmallRatio,
    Dynamic,
}

/// Taker cost c putting the average best spread near one tick.
pub fn taker_cost_rule(vp: &ValidatedParams, mode: TakerCostMode) -> Result<f64, IncentiveError> {
    let n = vp.n() as f64;
    let kv = vp.k_varpi();
    let log_b = incentive_log_argument(vp).ln();
    match mode {
        TakerCostMode::SmallRatio => Ok((vp.sigma / kv - vp.tick / 2.0) / n),
        TakerCostMode::Static => Ok(static_rule(vp, log_b, vp.best[0])),
        TakerCostMode::Dynamic { t, q, field } => {
            let eq = field.equilibrium(t, q)?;
            let holder = |side: Side| {
                let x = eq.delta.side(side);
                let best = x.iter().cloned().fold(f64::INFINITY, f64::min);
                (0..vp.n())
                    .find(|&m| x[m] - best <= TIE_EPS && vp.can_trade(q[m], side))
                    .ok_or_else(|| IncentiveError::SideBlocked { side, q: q.to_vec() })
            };
            let (i, j) = (holder(Side::Ask)?, holder(Side::Bid)?);
            let value = field.value;
            let tw = value.time_weight(t);
            let at = |qq: &[i64]| {
                value
                    .index_of(qq)
                    .map(|s| value.logv_at(tw, s))
                    .ok_or_else(|| IncentiveError::OffGrid(qq.to_vec()))
            };
            let mut down = q.to_vec();
            down[i] -= 1;
            let mut up = q.to_vec();
            up[j] += 1;
            // log(u²/(u(q⊖_i1)u(q⊕_j1))) with log u = −p·log(−v).
            let log_u_ratio = -field.consts.exponent * (2.0 * at(q)? - at(&down)? - at(&up)?);
            Ok(static_rule(vp, log_b + log_u_ratio, i))
        }
    }
}

fn static_rule(vp: &ValidatedParams, log_term: f64, i: usize) -> f64 {
    let n = vp.n() as f64;
    let g = vp.gamma[i];
    -vp.tick / (2.0 * n) - log_term / (vp.eta * n) + (vp.sigma * g / vp.k_varpi()).ln_1p() / (g * n)
}

/// Equilibrium best spread −z + (1/γ_max)·log(1 + σγ_max/(kϖ)) for a given incentive.
pub fn best_spread_for(z: f64, vp: &ValidatedParams) -> f64 {
    gamma_offset(vp.best[0], z, vp).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelParams};

    #[test]
    fn y0_hat_inverts_reservation() {
        let vp = validate(&ModelParams::baseline_n(2)).unwrap();
        let r = reservation_utilities(&vp.gamma, &[3.0, 4.0]);
        let vp = vp.modified(|p| p.r = r).unwrap();
        let y = y0_hat(&vp);
        assert!((y[0] - 3.0).abs() < 1e-12 && (y[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_gives_zero_transfer() {
        let mut p = ModelParams::baseline();
        p.horizon = 1e-300;
        let vp = validate(&p).unwrap();
        assert!(reservation_from_no_contract(&vp).unwrap()[0].abs() < 1e-250);
    }

    #[test]
    fn higher_gamma_lowers_no_contract_transfer() {
        let vp = validate(&ModelParams::baseline()).unwrap();
        let doubled = vp.modified(|p| p.gamma = vec![0.02]).unwrap();
        let a = reservation_from_no_contract(&vp).unwrap()[0];
        let b = reservation_from_no_contract(&doubled).unwrap()[0];
        assert!(b < a);
    }
}
