"""Pure-Python unit-speed spiral flow; reference for the compiled kernel.

State is (s, t) with t a continuous lift.  The field integrated in arc
length is V = u / N with u = P dF, P = g^{-1} and N = sqrt(dF . u), the
g-unit gradient.  Rodas4 needs its Jacobian

    DV = Du / N - u (x) DN / N^2,
    Du[:, k] = (d_k P) dF + P H[:, k],      d_k P = -P (d_k g) P,
    DN_k = (2 H[:, k] . u + dF . d_k P . dF) / (2 N).

Metric kinds
    0  diag(c1 exp(k1 s), c2 exp(k2 s)), params [c1, k1, c2, k2]
    1  L^T L + mu I with L entries amp * sum_k w cos(k t + psi + nu sin(om s + chi)),
       params [amp, mu, M, then 4 x M x (w, psi, nu, om, chi)]
"""
import math

import numpy as np

STATUS_DONE = 0        # reached s >= -s_stop
STATUS_ARCLEN = 1      # arc length budget used
STATUS_STEPS = 2       # step budget used
STATUS_STATIONARY = 3  # |dF| vanished
STATUS_UNDERFLOW = 4   # step size underflow

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
GL_X = [float(v) for v in _GL_X]
GL_W = [float(v) for v in _GL_W]

G_ = 0.25
A21 = 1.544
A31, A32 = 0.9466785280815826, 0.2557011698983284
A41, A42, A43 = 3.314825187068521, 2.896124015972201, 0.9986419139977817
A51, A52, A53, A54 = 1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950
C21 = -5.6688
C31, C32 = -2.430093356833875, -0.2063599157091915
C41, C42, C43 = -0.1073529058151375, -9.594562251023355, -20.47028614809616
C51, C52, C53, C54 = 7.496443313967647, -10.24680431464352, -33.99990352819905, 11.70890893206160
C61, C62, C63, C64, C65 = (8.083246795921522, -7.981132988064893, -31.52159432874371,
                           16.31930543123136, -6.058818238834054)


def _psi_int(x, sharp):
    acc = 0.0
    for xi, wi in zip(GL_X, GL_W):
        u = 0.5 * x * (1.0 + xi)
        if 0.0 < u < 1.0:
            acc += wi * math.exp(-sharp / (u * (1.0 - u)))
    return 0.5 * x * acc


def _eta3(s, delta, sharp, znorm):
    x = 2.0 * (s + delta) / delta
    if x <= 0.0:
        return 0.0, 0.0, 0.0
    if x >= 1.0:
        return 1.0, 0.0, 0.0
    if x <= 0.5:
        e0 = _psi_int(x, sharp) / znorm
    else:
        e0 = 1.0 - _psi_int(1.0 - x, sharp) / znorm
    q = x * (1.0 - x)
    ps = math.exp(-sharp / q)
    e1 = (2.0 / delta) * ps / znorm
    e2 = (2.0 / delta) ** 2 * ps * sharp * (1.0 - 2.0 * x) / (q * q) / znorm
    return e0, e1, e2


def bump_norm(sharp):
    return 2.0 * _psi_int(0.5, sharp)


def potential(s, t, delta, c, sharp, znorm, want_hess=True):
    """F, (F_s, F_t), (F_ss, F_st, F_tt) at one point."""
    if s >= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    e0, e1, e2 = _eta3(s, delta, sharp, znorm)
    if e0 == 0.0 and e1 == 0.0:
        return s, 1.0, 0.0, 0.0, 0.0, 0.0
    if s > -1.0 / 745.0:
        g = gs = gt = gss = gst = gtt = 0.0
    else:
        inv = 1.0 / s
        E = math.exp(inv)
        ph = inv + t
        sn = math.sin(ph)
        cs = math.cos(ph)
        q = sn + cs - c
        g = E * (sn - c)
        gs = -E * inv * inv * q
        gt = E * cs
        gss = E * inv ** 4 * ((1.0 + 2.0 * s) * q + cs - sn)
        gst = E * inv * inv * (sn - cs)
        gtt = -E * sn
    F = (1.0 - e0) * s + e0 * g
    fs = (1.0 - e0) + e1 * (g - s) + e0 * gs
    ft = e0 * gt
    fss = e2 * (g - s) + 2.0 * e1 * (gs - 1.0) + e0 * gss
    fst = e1 * gt + e0 * gst
    ftt = e0 * gtt
    return F, fs, ft, fss, fst, ftt


def metric(kind, mp, s, t):
    """(g00, g01, g11) and their s- and t-derivatives."""
    if kind == 0:
        c1, k1, c2, k2 = mp[0], mp[1], mp[2], mp[3]
        a = c1 * math.exp(k1 * s)
        b = c2 * math.exp(k2 * s)
        return (a, 0.0, b), (k1 * a, 0.0, k2 * b), (0.0, 0.0, 0.0)
    amp, mu, M = mp[0], mp[1], int(mp[2])
    L = [0.0, 0.0, 0.0, 0.0]
    Ls = [0.0, 0.0, 0.0, 0.0]
    Lt = [0.0, 0.0, 0.0, 0.0]
    idx = 3
    for e in range(4):
        v = vs = vt = 0.0
        for k in range(M):
            w, psi, nu, om, chi = mp[idx], mp[idx + 1], mp[idx + 2], mp[idx + 3], mp[idx + 4]
            idx += 5
            inner = om * s + chi
            arg = k * t + psi + nu * math.sin(inner)
            sa = math.sin(arg)
            v += w * math.cos(arg)
            vs -= w * sa * nu * om * math.cos(inner)
            vt -= w * sa * k
        L[e] = amp * v
        Ls[e] = amp * vs
        Lt[e] = amp * vt
    # L = [[L0, L1], [L2, L3]], g = L^T L + mu I
    def gram(A, B):
        return (A[0] * B[0] + A[2] * B[2], A[0] * B[1] + A[2] * B[3], A[1] * B[1] + A[3] * B[3])

    g = gram(L, L)
    g = (g[0] + mu, g[1], g[2] + mu)
    a1 = gram(Ls, L)
    a2 = gram(Lt, L)
    # d(L^T L) = dL^T L + L^T dL; off-diagonal needs both orders
    gs = (2.0 * a1[0], Ls[0] * L[1] + Ls[2] * L[3] + L[0] * Ls[1] + L[2] * Ls[3], 2.0 * a1[2])
    gt = (2.0 * a2[0], Lt[0] * L[1] + Lt[2] * L[3] + L[0] * Lt[1] + L[2] * Lt[3], 2.0 * a2[2])
    return g, gs, gt


def _inv2(g):
    det = g[0] * g[2] - g[1] * g[1]
    return (g[2] / det, -g[1] / det, g[0] / det)


def _dinv(P, dg):
    # -P dg P for symmetric 2x2 stored as (00, 01, 11)
    p00, p01, p11 = P
    d00, d01, d11 = dg
    m00 = p00 * d00 + p01 * d01
    m01 = p00 * d01 + p01 * d11
    m10 = p01 * d00 + p11 * d01
    m11 = p01 * d01 + p11 * d11
    return (-(m00 * p00 + m01 * p01), -(m00 * p01 + m01 * p11), -(m10 * p01 + m11 * p11))


def field(kind, mp, delta, c, sharp, znorm, s, t, direction=1.0, want_jac=True):
    """Unit-speed field (v0, v1), Jacobian (j00, j01, j10, j11) and N."""
    F, fs, ft, fss, fst, ftt = potential(s, t, delta, c, sharp, znorm)
    g, gs, gt = metric(kind, mp, s, t)
    P = _inv2(g)
    u0 = P[0] * fs + P[1] * ft
    u1 = P[1] * fs + P[2] * ft
    N2 = fs * u0 + ft * u1
    if not N2 > 0.0:
        return None
    N = math.sqrt(N2)
    v0 = direction * u0 / N
    v1 = direction * u1 / N
    if not want_jac:
        return v0, v1, None, N
    Ps = _dinv(P, gs)
    Pt = _dinv(P, gt)
    jac = [0.0, 0.0, 0.0, 0.0]
    for k, (Pk, h0, h1) in enumerate(((Ps, fss, fst), (Pt, fst, ftt))):
        du0 = Pk[0] * fs + Pk[1] * ft + P[0] * h0 + P[1] * h1
        du1 = Pk[1] * fs + Pk[2] * ft + P[1] * h0 + P[2] * h1
        quad = fs * (Pk[0] * fs + Pk[1] * ft) + ft * (Pk[1] * fs + Pk[2] * ft)
        dN = (2.0 * (h0 * u0 + h1 * u1) + quad) / (2.0 * N)
        jac[k] = direction * (du0 / N - u0 * dN / N2)
        jac[2 + k] = direction * (du1 / N - u1 * dN / N2)
    return v0, v1, jac, N


def unit_speed_flow(kind, mp, delta, c, sharp, s0, t0, s_stop, rtol, atol,
                    max_arclen, max_steps, direction=1.0, h0=1e-3):
    """Integrate the unit-speed flow; returns (sigma, s, t, F, status, nrej)."""
    mp = [float(v) for v in mp]
    znorm = bump_norm(sharp)
    s, t = float(s0), float(t0)
    out = field(kind, mp, delta, c, sharp, znorm, s, t, direction)
    Fv = potential(s, t, delta, c, sharp, znorm)[0]
    sig_l, s_l, t_l, F_l = [0.0], [s], [t], [Fv]
    if out is None:
        return (np.array(sig_l), np.array(s_l), np.array(t_l), np.array(F_l), STATUS_STATIONARY, 0)
    f0, f1, jac, _ = out
    sigma = 0.0
    h = h0
    err_prev = 1.0
    nrej = 0
    steps = 0
    status = STATUS_STEPS
    while steps < max_steps:
        if s >= -s_stop:
            status = STATUS_DONE
            break
        if sigma >= max_arclen:
            status = STATUS_ARCLEN
            break
        if sigma + h > max_arclen:
            h = max_arclen - sigma
        if h < 1e-14:
            status = STATUS_UNDERFLOW
            break
        # W = I/(h g) - J; solve by Cramer's rule
        d = 1.0 / (h * G_)
        w00, w01, w10, w11 = d - jac[0], -jac[1], -jac[2], d - jac[3]
        det = w00 * w11 - w01 * w10
        ok = det != 0.0
        ks0 = [0.0] * 6
        ks1 = [0.0] * 6

        def solve(r0, r1):
            return (w11 * r0 - w01 * r1) / det, (-w10 * r0 + w00 * r1) / det

        if ok:
            ks0[0], ks1[0] = solve(f0, f1)
            rows = (
                ((A21,), (C21,)),
                ((A31, A32), (C31, C32)),
                ((A41, A42, A43), (C41, C42, C43)),
                ((A51, A52, A53, A54), (C51, C52, C53, C54)),
                ((A51, A52, A53, A54, 1.0), (C61, C62, C63, C64, C65)),
            )
            for i, (arow, crow) in enumerate(rows, start=1):
                ys = s + sum(a * ks0[j] for j, a in enumerate(arow))
                yt = t + sum(a * ks1[j] for j, a in enumerate(arow))
                fv = field(kind, mp, delta, c, sharp, znorm, ys, yt, direction, False)
                if fv is None:
                    ok = False
                    break
                r0 = fv[0] + sum(cc / h * ks0[j] for j, cc in enumerate(crow))
                r1 = fv[1] + sum(cc / h * ks1[j] for j, cc in enumerate(crow))
                ks0[i], ks1[i] = solve(r0, r1)
        if ok:
            sn = s + A51 * ks0[0] + A52 * ks0[1] + A53 * ks0[2] + A54 * ks0[3] + ks0[4] + ks0[5]
            tn = t + A51 * ks1[0] + A52 * ks1[1] + A53 * ks1[2] + A54 * ks1[3] + ks1[4] + ks1[5]
            sc0 = atol + rtol * max(abs(s), abs(sn))
            sc1 = atol + rtol * max(abs(t), abs(tn))
            en = math.sqrt(0.5 * ((ks0[5] / sc0) ** 2 + (ks1[5] / sc1) ** 2))
            ok = en == en
        if not ok:
            h *= 0.25
            nrej += 1
            continue
        if en <= 1.0:
            nxt = field(kind, mp, delta, c, sharp, znorm, sn, tn, direction)
            if nxt is None:
                h *= 0.25
                nrej += 1
                continue
            fac = 0.9 * max(en, 1e-10) ** (-0.7 / 4.0) * err_prev ** (0.4 / 4.0)
            fac = min(6.0, max(0.2, fac))
            err_prev = max(en, 1e-4)
            sigma += h
            s, t = sn, tn
            f0, f1, jac, _ = nxt
            sig_l.append(sigma)
            s_l.append(s)
            t_l.append(t)
            F_l.append(potential(s, t, delta, c, sharp, znorm)[0])
            steps += 1
            h *= fac
        else:
            nrej += 1
            h *= max(0.2, 0.9 * en ** (-0.25))
    return (np.array(sig_l), np.array(s_l), np.array(t_l), np.array(F_l), status, nrej)


def field_batch(kind, mp, delta, c, sharp, s, t, direction=1.0):
    """Vector field and Jacobian at arrays of points (testing helper)."""
    mp = [float(v) for v in mp]
    znorm = bump_norm(sharp)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    V = np.full((s.size, 2), np.nan)
    J = np.full((s.size, 4), np.nan)
    for i in range(s.size):
        r = field(kind, mp, delta, c, sharp, znorm, s[i], t[i], direction)
        if r is not None:
            V[i] = r[0], r[1]
            J[i] = r[2]
    return V, J
