"""Independent high-precision evaluations used to freeze expected values in the unit tests.

Run: python3 tests/oracles/scalar_oracles.py
"""
from mpmath import mp, mpf, tanh, cosh, sqrt, pi, matrix

mp.dps = 40

C_M, PHI = mpf(20), mpf("0.04")
V1, V2, V3, V4 = mpf("-1.2"), mpf(18), mpf(2), mpf(30)
E_L, E_CA, E_K = mpf(-60), mpf(120), mpf(-84)
G_L, G_CA, G_K = mpf(2), mpf("4.4"), mpf(8)
E_E, E_I = mpf(0), mpf(-80)


def m_inf(v):
    return (1 + tanh((v - V1) / V2)) / 2


def n_inf(v):
    return (1 + tanh((v - V3) / V4)) / 2


def tau_n(v):
    return 1 / cosh((v - V3) / (2 * V4))


def step2(v, n, i_app, ts):
    dv = G_L * (v - E_L) + G_CA * m_inf(v) * (v - E_CA) + G_K * n * (v - E_K) - i_app
    return v - ts / C_M * dv, n + ts * PHI * (n_inf(v) - n) / tau_n(v)


def step4(v, n, ge, gi, i_app, ts, tau_e, ge0, tau_i, gi0):
    dv = (G_L * (v - E_L) + G_CA * m_inf(v) * (v - E_CA) + G_K * n * (v - E_K) - i_app
          + ge * (v - E_E) + gi * (v - E_I))
    return (v - ts / C_M * dv,
            n + ts * PHI * (n_inf(v) - n) / tau_n(v),
            ge - ts / tau_e * (ge - ge0),
            gi - ts / tau_i * (gi - gi0))


print("m_inf(16.8)            =", mp.nstr(m_inf(mpf("16.8")), 17))
print("n_inf(32)              =", mp.nstr(n_inf(mpf(32)), 17))
print("tau_n(V3 + 2 V4)       =", mp.nstr(tau_n(V3 + 2 * V4), 17))

v, n = step2(mpf("-60.855"), mpf("0.0149"), mpf(110), mpf("0.25"))
print("step2 rest, I=110      =", mp.nstr(v, 17), mp.nstr(n, 17))

scale = mpf("0.01")
r = step4(mpf(-40), mpf("0.2"), mpf("12.1") * scale * 2, mpf("57.3") * scale / 2, mpf(110), mpf("0.25"),
          mpf("2.73"), mpf("12.1") * scale, mpf("10.49"), mpf("57.3") * scale)
print("step4 (-40,.2,2g_e0,g_i0/2) =", [mp.nstr(x, 17) for x in r])

ts = mpf("0.25")
sv2 = (ts / C_M) ** 2 * (mpf("1.1") ** 2 + (mpf(-20) - E_L) ** 2 * mpf("0.02") ** 2)
print("sigma_v^2 (v=-20)      =", mp.nstr(sv2, 17))
print("OU diffusion E         =", mp.nstr(2 * (12 * scale) ** 2 * ts / mpf("2.73"), 17))
print("OU diffusion I         =", mp.nstr(2 * (mpf("26.4") * scale) ** 2 * ts / mpf("10.49"), 17))

# Optimal proposal with Sigma_x = I, sigma_y^2 = 1, f = 0, y = 2, h = e1.
sx = matrix([[1, 0], [0, 1]])
info = sx ** -1 + matrix([[1, 0], [0, 0]])
sp = info ** -1
mu = sp * (sx ** -1 * matrix([0, 0]) + matrix([2, 0]))
print("proposal mean          =", mu.T, " cov diag =", sp[0, 0], sp[1, 1])
print("N(0; 0, 2)             =", mp.nstr(1 / sqrt(4 * pi), 17))
print("RAM scalar S'          =", mp.nstr(sqrt(1 + (1 - mpf("0.234"))), 17))

# PCRB single step: J0 = I, F = I, Sigma_x = I, sigma_y^2 = 1.
J0 = matrix([[1, 0], [0, 1]])
F = matrix([[1, 0], [0, 1]])
Q = sx ** -1
D11 = F.T * Q * F
D12 = -F.T * Q
D22 = Q + matrix([[1, 0], [0, 0]])
J1 = D22 - D12.T * (J0 + D11) ** -1 * D12
print("PCRB J1                =", J1)
