#![allow(dead_code)]

pub mod frozen;

use maketake::model::{validate, ModelParams, ValidatedParams};

pub fn baseline() -> ValidatedParams {
    validate(&ModelParams::baseline()).unwrap()
}

pub fn baseline_n(n: usize) -> ValidatedParams {
    validate(&ModelParams::baseline_n(n)).unwrap()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

#[track_caller]
pub fn assert_rel(got: f64, want: f64, tol: f64) {
    assert!(
        rel_err(got, want) <= tol,
        "got {got:e}, want {want:e}, relative error {:e} > {tol:e}",
        rel_err(got, want)
    );
}

/// Independent solution of the single-agent system when kϖ/(ση) = 1.
///
/// With u = 1/(−v) the system becomes linear,
/// du/dτ = M·u with M = −diag(C^S) + C·(shift up + shift down), u(τ=0) = 1.
/// M + sI is entrywise nonnegative for s = max C^S, so e^{Mτ} = e^{−sτ}·e^{(M+sI)τ}
/// is evaluated by a Taylor series on a short step followed by repeated
/// squaring, all with nonnegative terms and a separately tracked log scale.
/// Returns log(−v(T−τ, q)) for q = −q̄..q̄.
pub fn linear_oracle_n1(vp: &ValidatedParams, tau: f64) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let k = maketake::hjb::constants(vp);
    assert!((k.exponent - 1.0).abs() < 1e-15, "oracle needs a unit exponent");
    let qb = vp.q_bar;
    let m = (2 * qb + 1) as usize;
    let s = (-qb..=qb).map(|q| k.c_s(&[q])).fold(0.0, f64::max);
    let mut b = DMatrix::<f64>::zeros(m, m);
    for (row, q) in (-qb..=qb).enumerate() {
        b[(row, row)] = s - k.c_s(&[q]);
        if row > 0 {
            b[(row, row - 1)] = k.c;
        }
        if row + 1 < m {
            b[(row, row + 1)] = k.c;
        }
    }
    let squarings = 16;
    let h = tau / f64::from(1u32 << squarings);
    let step = &b * h;
    let mut e = DMatrix::<f64>::identity(m, m);
    let mut term = DMatrix::<f64>::identity(m, m);
    for j in 1..40 {
        term = &term * &step / j as f64;
        e += &term;
    }
    let mut log_scale = 0.0;
    for _ in 0..squarings {
        e = &e * &e;
        log_scale *= 2.0;
        let top = e.max();
        e /= top;
        log_scale += top.ln();
    }
    let u = &e * DVector::from_element(m, 1.0);
    u.iter().map(|x| -(log_scale + x.ln() - s * tau)).collect()
}
