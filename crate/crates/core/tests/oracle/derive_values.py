"""High-precision scalar oracle for the frozen constants in tests/common/frozen.rs.

Evaluates the closed forms with mpmath at 50 digits, independently of the
Rust implementation. Run with `python3 derive_values.py` and paste the output
into tests/common/frozen.rs when a formula changes.
"""
from mpmath import mp, mpf, log, exp, matrix, lu_solve

mp.dps = 50

A, k, sigma, c, T, tick = mpf("1.5"), mpf("0.3"), mpf("0.3"), mpf("0.5"), mpf(600), mpf(1)
eta = mpf(1)


def common(gammas, varpi):
    kv = k * varpi
    L = 1 + eta * sigma * sum(1 / (kv + sigma * g) for g in gammas)
    bprime = kv / (kv + sigma * eta) * L
    return kv, L, bprime


def c_inf(gammas, varpi, cost, ratio):
    n = len(gammas)
    kv, L, bprime = common(gammas, varpi)
    base = n * abs(cost) + sum((1 / eta + 1 / g) * log(1 + sigma * g / kv) for g in gammas)
    base -= (n / eta) * log(bprime)
    return base + (n / eta) * abs(log(ratio))


def big_c(gammas, varpi, cost):
    kv, L, bprime = common(gammas, varpi)
    gmax = max(gammas)
    card = sum(1 for g in gammas if g == gmax)
    expo = cost * (1 - varpi) - (varpi / eta) * log(bprime * card)
    expo += varpi * sum(log(1 + sigma * g / kv) / g for g in gammas)
    return A * exp(-(k / sigma) * expo) * (sigma * eta / (kv + sigma * eta)) * L


def risk_sharing_zs(gammas, q):
    """Solve gamma_i (z_i + q_i) + eta * sum z = 0 directly."""
    n = len(gammas)
    m = matrix(n, n)
    rhs = matrix(n, 1)
    for i in range(n):
        for j in range(n):
            m[i, j] = eta + (gammas[i] if i == j else 0)
        rhs[i] = -gammas[i] * q[i]
    return [lu_solve(m, rhs)[i] for i in range(n)]


def c_s(gammas, q):
    z = risk_sharing_zs(gammas, q)
    s = sum(eta / 2 * sigma**2 * g * (qi + zi) ** 2 for g, qi, zi in zip(gammas, q, z))
    return s + eta**2 * sigma**2 / 2 * sum(z) ** 2


def s_of_n(n, gamma, varpi, cost):
    kv = k * varpi
    a = log(1 + sigma * gamma / kv)
    b = log(kv / (kv + sigma * eta) * n * (1 + n * eta * sigma / (kv + sigma * gamma))) / eta
    lam = A * exp(-(k / sigma) * (cost * (1 - varpi) - varpi * (-(n / gamma) * a + b)))
    w = 2 * A * sigma / (kv + sigma * gamma) * n * exp(-(k / sigma) * (cost + varpi * n / gamma * a))
    w *= exp(kv / sigma * (cost + b)) - kv / (sigma * eta)
    return w - 2 * lam * b


def show(name, value):
    print(f"pub const {name}: f64 = {mp.nstr(value, 17)};")


g = mpf("0.01")
show("C_INF_BASELINE", c_inf([g], 1, c, 1))
show("DELTA_INF_BOUND_N2_RATIO2", c_inf([g, g], mpf("0.5"), c, 2))
show("LAMBDA_N1_X0", A * exp(-(k / sigma) * c))
show("GAMMA_OFFSET_Z0", log(1 + sigma * g / k) / g)
show("GAMMA_OFFSET_Z05", -mpf("0.5") + log(1 + sigma * g / k) / g)
show("BIG_C_BASELINE", big_c([g], 1, c))
show("BIG_C_N2_EQUAL", big_c([g, g], mpf("0.5"), c))
show("C_S_N1_Q10", c_s([g], [10]))
zs2 = risk_sharing_zs([g, g], [10, 0])
show("Z_S_N1_Q10", risk_sharing_zs([g], [10])[0])
show("KAPPA_N2_EQUAL", 1 / (g * g + eta * (g + g)))
show("Z_S1_N2_Q10_0", zs2[0])
show("Z_S2_N2_Q10_0", zs2[1])
show("C_S_N2_Q10_0", c_s([g, g], [10, 0]))
show("C_S_N3_MIXED", c_s([g, mpf("0.02"), mpf("0.005")], [3, -2, 5]))
kv, L, bprime = common([g], 1)
show("Z_STAR_N1_TERMINAL", c + log(bprime) / eta)
show("TAKER_STATIC_BASELINE", -tick / 2 - log(bprime) / eta + log(1 + sigma * g / kv) / g)
chat = 2 * (sigma / (kv + sigma * g)) * A * exp(-(k / sigma) * (c + (1 / g) * log(1 + sigma * g / kv)))
show("C_HAT_BASELINE", chat)
show("Y0_NO_CONTRACT_BASELINE", kv / sigma * log(1 + 2 * chat * T))
gt = eta / (1 + eta / g)
p_fb = kv / (sigma * gt)
show("GAMMA_TILDE_BASELINE", gt)
show("C_FB_BASELINE", A * exp(-p_fb * log(1 + gt * sigma / kv)) * gt * sigma / (kv + gt * sigma))
show("FB_SPREAD_TERMINAL", log(1 + gt * sigma / kv) / gt)
print("pub const S_OF_N_BASELINE: [f64; 10] = [")
for n in range(1, 11):
    print(f"    {mp.nstr(s_of_n(n, g, 1, c), 17)},")
print("];")
