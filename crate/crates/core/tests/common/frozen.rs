//! Values computed by `oracle/derive_values.py` at 50 significant digits.
#![allow(clippy::excessive_precision)]

pub const C_INF_BASELINE: f64 = 1.5099462055121054;
pub const DELTA_INF_BOUND_N2_RATIO2: f64 = 5.3963950394694958;
pub const LAMBDA_N1_X0: f64 = 0.90979598956895014;
pub const GAMMA_OFFSET_Z0: f64 = 0.99503308531680828;
pub const GAMMA_OFFSET_Z05: f64 = 0.49503308531680828;
pub const BIG_C_BASELINE: f64 = 0.54908964890606609;
pub const BIG_C_N2_EQUAL: f64 = 0.95833840327309343;
pub const C_S_N1_Q10: f64 = 0.044554455445544554;
pub const Z_S_N1_Q10: f64 = -0.09900990099009901;
pub const KAPPA_N2_EQUAL: f64 = 49.751243781094527;
pub const Z_S1_N2_Q10_0: f64 = -5.0248756218905473;
pub const Z_S2_N2_Q10_0: f64 = 4.9751243781094527;
pub const C_S_N2_Q10_0: f64 = 0.022388059701492537;
pub const C_S_N3_MIXED: f64 = 0.0046153846153846154;
pub const Z_STAR_N1_TERMINAL: f64 = 0.49503721065787099;
pub const TAKER_STATIC_BASELINE: f64 = 0.49999587465893729;
pub const C_HAT_BASELINE: f64 = 0.66606292727862831;
pub const Y0_NO_CONTRACT_BASELINE: f64 = 6.6849560592969296;
pub const GAMMA_TILDE_BASELINE: f64 = 0.009900990099009901;
pub const C_FB_BASELINE: f64 = 0.0054366639760449223;
pub const FB_SPREAD_TERMINAL: f64 = 0.99508194074417465;
pub const S_OF_N_BASELINE: [f64; 10] = [
    0.4321299390419789,
    0.59293966378068447,
    0.79766596306684667,
    0.79162012658075542,
    0.63160562468918906,
    0.43573614146647119,
    0.27169437457973218,
    0.15736935742471524,
    0.086195414906931691,
    0.045190900515864057,
];
