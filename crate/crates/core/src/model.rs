//! Market, covering and preference parameters, their validation, and the
//! a-priori bound on admissible spreads.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side of the book a market order hits. `phi` is +1 on the ask and −1 on the bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Ask, Side::Bid];

    pub fn phi(self) -> i64 {
        match self {
            Side::Ask => 1,
            Side::Bid => -1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Ask => 0,
            Side::Bid => 1,
        }
    }
}

/// Raw parameter set, mirrored one-to-one by the JSON config file.
///
/// Units: prices and spreads in ticks, time in seconds. Optional fields are
/// resolved by [`validate`]: `q_bar` defaults by agent count, `K` to the number
/// of tick-wide cells needed to cover `[0, delta_inf]`, `omega` to 0.5 in every
/// cell and `H` to `varpi * omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n_agents: usize,
    #[serde(rename = "A")]
    pub a: f64,
    pub k: f64,
    pub sigma: f64,
    pub c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub tick: f64,
    pub varpi: f64,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default = "default_omega")]
    pub omega: Vec<f64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_bar: Option<i64>,
    pub delta_inf: f64,
    pub eta: f64,
    pub gamma: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "S0", default)]
    pub s0: f64,
}

fn one() -> f64 {
    1.0
}

fn default_omega() -> Vec<f64> {
    vec![0.5]
}

/// Inventory cap used when the config leaves `q_bar` unset.
pub fn default_q_bar(n_agents: usize) -> i64 {
    match n_agents {
        1 => 50,
        2 => 25,
        _ => 10,
    }
}

impl ModelParams {
    /// Single market maker baseline:
    /// A = 1.5, k = 0.3, σ = 0.3, c = 0.5, T = 600, q̄ = 50, γ = 0.01, η = 1, ϖ = 1.
    pub fn baseline() -> Self {
        Self::baseline_n(1)
    }

    /// Baseline market with `n` identical market makers (γ = 0.01 each) and
    /// ϖ = 1/N, the weighting used for the multi-agent experiments.
    pub fn baseline_n(n: usize) -> Self {
        ModelParams {
            n_agents: n,
            a: 1.5,
            k: 0.3,
            sigma: 0.3,
            c: 0.5,
            horizon: 600.0,
            tick: 1.0,
            varpi: 1.0 / n as f64,
            cells: None,
            omega: default_omega(),
            h: None,
            q_bar: None,
            delta_inf: 50.0,
            eta: 1.0,
            gamma: vec![0.01; n],
            r: vec![-1.0; n],
            s0: 100.0,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ParamError> {
        serde_json::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: String, value: f64 },
    #[error("parameter {name} must be non-negative, got {value}")]
    NegativeParameter { name: String, value: f64 },
    #[error("gamma vector is empty")]
    EmptyGammaVector,
    #[error("reservation utility R[{index}] must be negative, got {value}")]
    ReservationNotNegative { index: usize, value: f64 },
    #[error("covering misconfigured: {0}")]
    CoveringMisconfigured(String),
    #[error("{name} has length {got}, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("cannot read config: {0}")]
    Parse(String),
}

/// Parameters that passed [`validate`], with optional fields resolved and the
/// derived quantities k/σ, Γ = Σ 1/γ_i and the set 𝒢 of most risk-averse agents.
///
/// Dereferences to the resolved [`ModelParams`]; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParams {
    params: ModelParams,
    pub q_bar: i64,
    pub cells: usize,
    pub omega: Vec<f64>,
    pub h: Vec<f64>,
    pub k_over_sigma: f64,
    pub gamma_inv_sum: f64,
    pub gamma_max: f64,
    /// Indices of the agents with maximal γ, in increasing order.
    pub best: Vec<usize>,
}

impl Deref for ValidatedParams {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.params
    }
}

impl ValidatedParams {
    /// The resolved parameter set; feeding it back to [`validate`] is the identity.
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n_agents
    }

    /// k·ϖ, the slope that recurs in every closed form.
    pub fn k_varpi(&self) -> f64 {
        self.params.k * self.params.varpi
    }

    pub fn is_best(&self, i: usize) -> bool {
        self.best.binary_search(&i).is_ok()
    }

    pub fn equal_gamma(&self) -> bool {
        self.best.len() == self.n()
    }

    /// Inventory condition q^i > −φ(j) q̄ under which agent i can trade on `side`.
    pub fn can_trade(&self, q_i: i64, side: Side) -> bool {
        match side {
            Side::Ask => q_i > -self.q_bar,
            Side::Bid => q_i < self.q_bar,
        }
    }

    /// Returns a copy with some raw fields changed and re-validated.
    pub fn modified(&self, f: impl FnOnce(&mut ModelParams)) -> Result<Self, ParamError> {
        let mut p = self.params.clone();
        f(&mut p);
        validate(&p)
    }
}

fn positive(name: &str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::NonPositiveParameter {
            name: name.to_string(),
            value,
        })
    }
}

pub fn validate(params: &ModelParams) -> Result<ValidatedParams, ParamError> {
    let n = params.n_agents;
    if n == 0 {
        return Err(ParamError::NonPositiveParameter {
            name: "n_agents".into(),
            value: 0.0,
        });
    }
    if !(params.a >= 0.0 && params.a.is_finite()) {
        return Err(ParamError::NegativeParameter {
            name: "A".to_string(),
            value: params.a,
        });
    }
    positive("k", params.k)?;
    positive("sigma", params.sigma)?;
    positive("T", params.horizon)?;
    positive("tick", params.tick)?;
    positive("eta", params.eta)?;
    positive("delta_inf", params.delta_inf)?;
    for (name, v) in [("c", params.c), ("varpi", params.varpi), ("S0", params.s0)] {
        if !v.is_finite() {
            return Err(ParamError::NonPositiveParameter {
                name: name.into(),
                value: v,
            });
        }
    }
    if params.gamma.is_empty() {
        return Err(ParamError::EmptyGammaVector);
    }
    for (i, &g) in params.gamma.iter().enumerate() {
        positive(&format!("gamma[{i}]"), g)?;
    }
    if params.gamma.len() != n {
        return Err(ParamError::LengthMismatch {
            name: "gamma",
            got: params.gamma.len(),
            expected: n,
        });
    }
    for (index, &value) in params.r.iter().enumerate() {
        if !(value < 0.0 && value.is_finite()) {
            return Err(ParamError::ReservationNotNegative { index, value });
        }
    }
    if params.r.len() != n {
        return Err(ParamError::LengthMismatch {
            name: "R",
            got: params.r.len(),
            expected: n,
        });
    }
    let q_bar = params.q_bar.unwrap_or_else(|| default_q_bar(n));
    if q_bar < 1 {
        return Err(ParamError::NonPositiveParameter {
            name: "q_bar".into(),
            value: q_bar as f64,
        });
    }

    let needed = (params.delta_inf / params.tick).ceil() as usize;
    let cells = params.cells.unwrap_or(needed);
    if cells == 0 || (cells as f64) * params.tick < params.delta_inf {
        return Err(ParamError::CoveringMisconfigured(format!(
            "K = {cells} cells of width {} do not cover [0, {}]",
            params.tick, params.delta_inf
        )));
    }
    let omega = broadcast("omega", &params.omega, cells)?;
    if omega.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
        return Err(ParamError::CoveringMisconfigured(
            "omega weights must lie in (0, 1)".into(),
        ));
    }
    if omega.windows(2).any(|w| w[1] > w[0]) {
        return Err(ParamError::CoveringMisconfigured(
            "omega must be non-increasing in the cell index".into(),
        ));
    }
    let h = match &params.h {
        Some(h) => broadcast("H", h, cells)?,
        None => omega.iter().map(|w| params.varpi * w).collect(),
    };
    if h.iter().any(|x| !x.is_finite()) || h.windows(2).any(|w| w[1] > w[0]) {
        return Err(ParamError::CoveringMisconfigured(
            "H must be finite and non-increasing in the cell index".into(),
        ));
    }

    let gamma_max = params.gamma.iter().cloned().fold(f64::MIN, f64::max);
    let best = (0..n).filter(|&i| params.gamma[i] == gamma_max).collect();
    let resolved = ModelParams {
        cells: Some(cells),
        omega: omega.clone(),
        h: Some(h.clone()),
        q_bar: Some(q_bar),
        ..params.clone()
    };
    Ok(ValidatedParams {
        k_over_sigma: params.k / params.sigma,
        gamma_inv_sum: params.gamma.iter().map(|g| 1.0 / g).sum(),
        gamma_max,
        best,
        q_bar,
        cells,
        omega,
        h,
        params: resolved,
    })
}

fn broadcast(name: &'static str, v: &[f64], cells: usize) -> Result<Vec<f64>, ParamError> {
    match v.len() {
        1 => Ok(vec![v[0]; cells]),
        len if len == cells => Ok(v.to_vec()),
        got => Err(ParamError::LengthMismatch {
            name,
            got,
            expected: cells,
        }),
    }
}

/// B'(ϖ) = (kϖ/(kϖ+ση))·(1 + ησ Σ_i 1/(kϖ+σγ_i)), the argument of the
/// logarithm shared by the incentive level, the constant C and the fee rules.
pub fn incentive_log_argument(vp: &ValidatedParams) -> f64 {
    let kv = vp.k_varpi();
    let (s, e) = (vp.sigma, vp.eta);
    let sum: f64 = vp.gamma.iter().map(|g| 1.0 / (kv + s * g)).sum();
    kv / (kv + s * e) * (1.0 + e * s * sum)
}

/// Lower bound for δ∞ guaranteeing that the exchange Hamiltonian attains its
/// maximum inside the admissible spread box, given an a-priori bound on the
/// value-function ratio |v / Σ v_i|.
pub fn delta_inf_bound(vp: &ValidatedParams, v_ratio_bound: f64) -> f64 {
    let n = vp.n() as f64;
    let kv = vp.k_varpi();
    let c_inf = n * vp.c.abs()
        + vp
            .gamma
            .iter()
            .map(|g| (1.0 / vp.eta + 1.0 / g) * (vp.sigma * g / kv).ln_1p())
            .sum::<f64>()
        - (n / vp.eta) * incentive_log_argument(vp).ln();
    c_inf + (n / vp.eta) * v_ratio_bound.ln().abs()
}

/// [`delta_inf_bound`] with the heuristic ratio bound N.
pub fn default_delta_inf_bound(vp: &ValidatedParams) -> f64 {
    delta_inf_bound(vp, vp.n() as f64)
}

/// Inventory vector of the N agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InventoryState {
    pub q: Vec<i64>,
}

impl InventoryState {
    pub fn zero(n: usize) -> Self {
        InventoryState { q: vec![0; n] }
    }

    pub fn within(&self, q_bar: i64) -> bool {
        self.q.iter().all(|x| x.abs() <= q_bar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_accepted() {
        let vp = validate(&ModelParams::baseline()).unwrap();
        assert_eq!(vp.q_bar, 50);
        assert_eq!(vp.cells, 50);
        assert_eq!(vp.best, vec![0]);
        assert!((vp.gamma_inv_sum - 100.0).abs() < 1e-12);
    }

    #[test]
    fn negative_gamma_rejected() {
        let mut p = ModelParams::baseline_n(2);
        p.gamma = vec![0.01, -0.01];
        assert!(matches!(
            validate(&p),
            Err(ParamError::NonPositiveParameter { .. })
        ));
    }

    #[test]
    fn zero_reservation_rejected() {
        let mut p = ModelParams::baseline();
        p.r = vec![0.0];
        assert_eq!(
            validate(&p),
            Err(ParamError::ReservationNotNegative {
                index: 0,
                value: 0.0
            })
        );
    }

    #[test]
    fn empty_gamma_rejected() {
        let mut p = ModelParams::baseline();
        p.gamma.clear();
        assert_eq!(validate(&p), Err(ParamError::EmptyGammaVector));
    }

    #[test]
    fn short_covering_rejected() {
        let mut p = ModelParams::baseline();
        p.cells = Some(1);
        assert!(matches!(
            validate(&p),
            Err(ParamError::CoveringMisconfigured(_))
        ));
    }

    #[test]
    fn unknown_config_key_rejected() {
        let text = r#"{"n_agents":1,"A":1.5,"k":0.3,"sigma":0.3,"c":0.5,"T":600,"varpi":1,
            "delta_inf":50,"eta":1,"gamma":[0.01],"R":[-1],"bogus":3}"#;
        assert!(ModelParams::from_json_str(text).is_err());
    }

    #[test]
    fn ratio_bound_of_one_drops_log_term() {
        let vp = validate(&ModelParams::baseline()).unwrap();
        let base = delta_inf_bound(&vp, 1.0);
        assert!((delta_inf_bound(&vp, std::f64::consts::E) - base - 1.0).abs() < 1e-12);
    }
}
