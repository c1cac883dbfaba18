# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled unit-speed spiral flow.  Same algorithm as _spiral_kernel_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sin, cos, sqrt, fabs, pow

cnp.import_array()

DEF NGL = 48

cdef double GLX[NGL]
cdef double GLW[NGL]
_x, _w = np.polynomial.legendre.leggauss(NGL)
for _i in range(NGL):
    GLX[_i] = _x[_i]
    GLW[_i] = _w[_i]

cdef double GAM = 0.25
cdef double A21 = 1.544
cdef double A31 = 0.9466785280815826, A32 = 0.2557011698983284
cdef double A41 = 3.314825187068521, A42 = 2.896124015972201, A43 = 0.9986419139977817
cdef double A51 = 1.221224509226641, A52 = 6.019134481288629, A53 = 12.53708332932087
cdef double A54 = -0.6878860361058950
cdef double C21 = -5.6688
cdef double C31 = -2.430093356833875, C32 = -0.2063599157091915
cdef double C41 = -0.1073529058151375, C42 = -9.594562251023355, C43 = -20.47028614809616
cdef double C51 = 7.496443313967647, C52 = -10.24680431464352, C53 = -33.99990352819905
cdef double C54 = 11.70890893206160
cdef double C61 = 8.083246795921522, C62 = -7.981132988064893, C63 = -31.52159432874371
cdef double C64 = 16.31930543123136, C65 = -6.058818238834054


cdef struct Ctx:
    int kind
    double *mp
    int nmp
    double delta
    double c
    double sharp
    double znorm
    double direction


cdef double psi_int(double x, double sharp) noexcept nogil:
    cdef double acc = 0.0, u
    cdef int i
    for i in range(NGL):
        u = 0.5 * x * (1.0 + GLX[i])
        if u > 0.0 and u < 1.0:
            acc += GLW[i] * exp(-sharp / (u * (1.0 - u)))
    return 0.5 * x * acc


def bump_norm(double sharp):
    return 2.0 * psi_int(0.5, sharp)


cdef void eta3(double s, double delta, double sharp, double znorm,
               double *e0, double *e1, double *e2) noexcept nogil:
    cdef double x = 2.0 * (s + delta) / delta, q, ps
    if x <= 0.0:
        e0[0] = 0.0; e1[0] = 0.0; e2[0] = 0.0
        return
    if x >= 1.0:
        e0[0] = 1.0; e1[0] = 0.0; e2[0] = 0.0
        return
    if x <= 0.5:
        e0[0] = psi_int(x, sharp) / znorm
    else:
        e0[0] = 1.0 - psi_int(1.0 - x, sharp) / znorm
    q = x * (1.0 - x)
    ps = exp(-sharp / q)
    e1[0] = (2.0 / delta) * ps / znorm
    e2[0] = (2.0 / delta) * (2.0 / delta) * ps * sharp * (1.0 - 2.0 * x) / (q * q) / znorm


cdef void potential(Ctx *cx, double s, double t, double *out) noexcept nogil:
    # out = F, Fs, Ft, Fss, Fst, Ftt
    cdef double e0, e1, e2, g, gs, gt, gss, gst, gtt, inv, E, ph, sn, cs, q
    cdef int i
    if s >= 0.0:
        for i in range(6):
            out[i] = 0.0
        return
    eta3(s, cx.delta, cx.sharp, cx.znorm, &e0, &e1, &e2)
    if e0 == 0.0 and e1 == 0.0:
        out[0] = s; out[1] = 1.0
        for i in range(2, 6):
            out[i] = 0.0
        return
    if s > -1.0 / 745.0:
        g = 0.0; gs = 0.0; gt = 0.0; gss = 0.0; gst = 0.0; gtt = 0.0
    else:
        inv = 1.0 / s
        E = exp(inv)
        ph = inv + t
        sn = sin(ph)
        cs = cos(ph)
        q = sn + cs - cx.c
        g = E * (sn - cx.c)
        gs = -E * inv * inv * q
        gt = E * cs
        gss = E * inv * inv * inv * inv * ((1.0 + 2.0 * s) * q + cs - sn)
        gst = E * inv * inv * (sn - cs)
        gtt = -E * sn
    out[0] = (1.0 - e0) * s + e0 * g
    out[1] = (1.0 - e0) + e1 * (g - s) + e0 * gs
    out[2] = e0 * gt
    out[3] = e2 * (g - s) + 2.0 * e1 * (gs - 1.0) + e0 * gss
    out[4] = e1 * gt + e0 * gst
    out[5] = e0 * gtt


cdef void metric(Ctx *cx, double s, double t, double *g, double *gs, double *gt) noexcept nogil:
    cdef double a, b, amp, mu, v, vs, vt, w, psi, nu, om, chi, inner, arg, sa
    cdef double L[4]
    cdef double Ls[4]
    cdef double Lt[4]
    cdef int M, e, k, idx
    cdef double *mp = cx.mp
    if cx.kind == 0:
        a = mp[0] * exp(mp[1] * s)
        b = mp[2] * exp(mp[3] * s)
        g[0] = a; g[1] = 0.0; g[2] = b
        gs[0] = mp[1] * a; gs[1] = 0.0; gs[2] = mp[3] * b
        gt[0] = 0.0; gt[1] = 0.0; gt[2] = 0.0
        return
    amp = mp[0]
    mu = mp[1]
    M = <int>mp[2]
    idx = 3
    for e in range(4):
        v = 0.0; vs = 0.0; vt = 0.0
        for k in range(M):
            w = mp[idx]; psi = mp[idx + 1]; nu = mp[idx + 2]; om = mp[idx + 3]; chi = mp[idx + 4]
            idx += 5
            inner = om * s + chi
            arg = k * t + psi + nu * sin(inner)
            sa = sin(arg)
            v += w * cos(arg)
            vs -= w * sa * nu * om * cos(inner)
            vt -= w * sa * k
        L[e] = amp * v
        Ls[e] = amp * vs
        Lt[e] = amp * vt
    g[0] = L[0] * L[0] + L[2] * L[2] + mu
    g[1] = L[0] * L[1] + L[2] * L[3]
    g[2] = L[1] * L[1] + L[3] * L[3] + mu
    gs[0] = 2.0 * (Ls[0] * L[0] + Ls[2] * L[2])
    gs[1] = Ls[0] * L[1] + Ls[2] * L[3] + L[0] * Ls[1] + L[2] * Ls[3]
    gs[2] = 2.0 * (Ls[1] * L[1] + Ls[3] * L[3])
    gt[0] = 2.0 * (Lt[0] * L[0] + Lt[2] * L[2])
    gt[1] = Lt[0] * L[1] + Lt[2] * L[3] + L[0] * Lt[1] + L[2] * Lt[3]
    gt[2] = 2.0 * (Lt[1] * L[1] + Lt[3] * L[3])


cdef inline void dinv(double *P, double *dg, double *out) noexcept nogil:
    cdef double m00 = P[0] * dg[0] + P[1] * dg[1]
    cdef double m01 = P[0] * dg[1] + P[1] * dg[2]
    cdef double m10 = P[1] * dg[0] + P[2] * dg[1]
    cdef double m11 = P[1] * dg[1] + P[2] * dg[2]
    out[0] = -(m00 * P[0] + m01 * P[1])
    out[1] = -(m00 * P[1] + m01 * P[2])
    out[2] = -(m10 * P[1] + m11 * P[2])


cdef int field(Ctx *cx, double s, double t, double *v, double *jac, bint want_jac) noexcept nogil:
    """Returns 0 on success, 1 where |dF| vanishes."""
    cdef double pot[6]
    cdef double g[3]
    cdef double gs[3]
    cdef double gt[3]
    cdef double P[3]
    cdef double Pk[3]
    cdef double det, fs, ft, u0, u1, N2, N, h0, h1, du0, du1, quad, dN, d
    cdef int k
    potential(cx, s, t, pot)
    metric(cx, s, t, g, gs, gt)
    det = g[0] * g[2] - g[1] * g[1]
    P[0] = g[2] / det; P[1] = -g[1] / det; P[2] = g[0] / det
    fs = pot[1]; ft = pot[2]
    u0 = P[0] * fs + P[1] * ft
    u1 = P[1] * fs + P[2] * ft
    N2 = fs * u0 + ft * u1
    if not N2 > 0.0:
        return 1
    N = sqrt(N2)
    d = cx.direction
    v[0] = d * u0 / N
    v[1] = d * u1 / N
    if not want_jac:
        return 0
    for k in range(2):
        if k == 0:
            dinv(P, gs, Pk); h0 = pot[3]; h1 = pot[4]
        else:
            dinv(P, gt, Pk); h0 = pot[4]; h1 = pot[5]
        du0 = Pk[0] * fs + Pk[1] * ft + P[0] * h0 + P[1] * h1
        du1 = Pk[1] * fs + Pk[2] * ft + P[1] * h0 + P[2] * h1
        quad = fs * (Pk[0] * fs + Pk[1] * ft) + ft * (Pk[1] * fs + Pk[2] * ft)
        dN = (2.0 * (h0 * u0 + h1 * u1) + quad) / (2.0 * N)
        jac[k] = d * (du0 / N - u0 * dN / N2)
        jac[2 + k] = d * (du1 / N - u1 * dN / N2)
    return 0


def unit_speed_flow(int kind, mp, double delta, double c, double sharp, double s0, double t0,
                    double s_stop, double rtol, double atol, double max_arclen, long max_steps,
                    double direction=1.0, double h0=1e-3):
    """Integrate the unit-speed flow; returns (sigma, s, t, F, status, nrej)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mpa = np.ascontiguousarray(mp, dtype=np.float64)
    cdef Ctx cx
    cx.kind = kind
    cx.mp = <double *> mpa.data
    cx.nmp = mpa.shape[0]
    cx.delta = delta
    cx.c = c
    cx.sharp = sharp
    cx.znorm = 2.0 * psi_int(0.5, sharp)
    cx.direction = direction

    cdef double s = s0, t = t0, sigma = 0.0, h = h0, err_prev = 1.0
    cdef double f[2]
    cdef double jac[4]
    cdef double fv[2]
    cdef double jn[4]
    cdef double pot[6]
    cdef double k0[6]
    cdef double k1[6]
    cdef double dd, w00, w01, w10, w11, det, ys, yt, r0, r1, sn, tn, sc0, sc1, en, fac
    cdef long steps = 0, nrej = 0, cap = 1024, n = 1
    cdef int status = 2, i, bad

    cdef cnp.ndarray[cnp.float64_t, ndim=2] rec = np.empty((cap, 4))
    potential(&cx, s, t, pot)
    rec[0, 0] = 0.0; rec[0, 1] = s; rec[0, 2] = t; rec[0, 3] = pot[0]
    if field(&cx, s, t, f, jac, True):
        return rec[:1, 0].copy(), rec[:1, 1].copy(), rec[:1, 2].copy(), rec[:1, 3].copy(), 3, 0

    while steps < max_steps:
        if s >= -s_stop:
            status = 0
            break
        if sigma >= max_arclen:
            status = 1
            break
        if sigma + h > max_arclen:
            h = max_arclen - sigma
        if h < 1e-14:
            status = 4
            break
        dd = 1.0 / (h * GAM)
        w00 = dd - jac[0]; w01 = -jac[1]; w10 = -jac[2]; w11 = dd - jac[3]
        det = w00 * w11 - w01 * w10
        bad = det == 0.0
        if not bad:
            k0[0] = (w11 * f[0] - w01 * f[1]) / det
            k1[0] = (-w10 * f[0] + w00 * f[1]) / det
            for i in range(1, 6):
                if i == 1:
                    ys = s + A21 * k0[0]
                    yt = t + A21 * k1[0]
                elif i == 2:
                    ys = s + A31 * k0[0] + A32 * k0[1]
                    yt = t + A31 * k1[0] + A32 * k1[1]
                elif i == 3:
                    ys = s + A41 * k0[0] + A42 * k0[1] + A43 * k0[2]
                    yt = t + A41 * k1[0] + A42 * k1[1] + A43 * k1[2]
                elif i == 4:
                    ys = s + A51 * k0[0] + A52 * k0[1] + A53 * k0[2] + A54 * k0[3]
                    yt = t + A51 * k1[0] + A52 * k1[1] + A53 * k1[2] + A54 * k1[3]
                else:
                    ys = s + A51 * k0[0] + A52 * k0[1] + A53 * k0[2] + A54 * k0[3] + k0[4]
                    yt = t + A51 * k1[0] + A52 * k1[1] + A53 * k1[2] + A54 * k1[3] + k1[4]
                if field(&cx, ys, yt, fv, jn, False):
                    bad = 1
                    break
                if i == 1:
                    r0 = fv[0] + C21 / h * k0[0]
                    r1 = fv[1] + C21 / h * k1[0]
                elif i == 2:
                    r0 = fv[0] + (C31 * k0[0] + C32 * k0[1]) / h
                    r1 = fv[1] + (C31 * k1[0] + C32 * k1[1]) / h
                elif i == 3:
                    r0 = fv[0] + (C41 * k0[0] + C42 * k0[1] + C43 * k0[2]) / h
                    r1 = fv[1] + (C41 * k1[0] + C42 * k1[1] + C43 * k1[2]) / h
                elif i == 4:
                    r0 = fv[0] + (C51 * k0[0] + C52 * k0[1] + C53 * k0[2] + C54 * k0[3]) / h
                    r1 = fv[1] + (C51 * k1[0] + C52 * k1[1] + C53 * k1[2] + C54 * k1[3]) / h
                else:
                    r0 = fv[0] + (C61 * k0[0] + C62 * k0[1] + C63 * k0[2] + C64 * k0[3] + C65 * k0[4]) / h
                    r1 = fv[1] + (C61 * k1[0] + C62 * k1[1] + C63 * k1[2] + C64 * k1[3] + C65 * k1[4]) / h
                k0[i] = (w11 * r0 - w01 * r1) / det
                k1[i] = (-w10 * r0 + w00 * r1) / det
        if not bad:
            sn = s + A51 * k0[0] + A52 * k0[1] + A53 * k0[2] + A54 * k0[3] + k0[4] + k0[5]
            tn = t + A51 * k1[0] + A52 * k1[1] + A53 * k1[2] + A54 * k1[3] + k1[4] + k1[5]
            sc0 = atol + rtol * max(fabs(s), fabs(sn))
            sc1 = atol + rtol * max(fabs(t), fabs(tn))
            en = sqrt(0.5 * ((k0[5] / sc0) ** 2 + (k1[5] / sc1) ** 2))
            bad = en != en
        if bad:
            h *= 0.25
            nrej += 1
            continue
        if en <= 1.0:
            if field(&cx, sn, tn, fv, jn, True):
                h *= 0.25
                nrej += 1
                continue
            fac = 0.9 * pow(max(en, 1e-10), -0.7 / 4.0) * pow(err_prev, 0.4 / 4.0)
            fac = min(6.0, max(0.2, fac))
            err_prev = max(en, 1e-4)
            sigma += h
            s = sn
            t = tn
            f[0] = fv[0]; f[1] = fv[1]
            for i in range(4):
                jac[i] = jn[i]
            if n == cap:
                cap *= 2
                rec = np.resize(rec, (cap, 4))
            potential(&cx, s, t, pot)
            rec[n, 0] = sigma; rec[n, 1] = s; rec[n, 2] = t; rec[n, 3] = pot[0]
            n += 1
            steps += 1
            h *= fac
        else:
            nrej += 1
            h *= max(0.2, 0.9 * pow(en, -0.25))
    return (rec[:n, 0].copy(), rec[:n, 1].copy(), rec[:n, 2].copy(), rec[:n, 3].copy(),
            status, nrej)


def field_batch(int kind, mp, double delta, double c, double sharp, s, t, double direction=1.0):
    """Vector field and Jacobian at arrays of points (testing helper)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mpa = np.ascontiguousarray(mp, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.atleast_1d(np.asarray(s, dtype=np.float64)).copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ta = np.atleast_1d(np.asarray(t, dtype=np.float64)).copy()
    cdef Ctx cx
    cx.kind = kind
    cx.mp = <double *> mpa.data
    cx.nmp = mpa.shape[0]
    cx.delta = delta
    cx.c = c
    cx.sharp = sharp
    cx.znorm = 2.0 * psi_int(0.5, sharp)
    cx.direction = direction
    cdef Py_ssize_t i, m = sa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V = np.full((m, 2), np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] J = np.full((m, 4), np.nan)
    cdef double v[2]
    cdef double jac[4]
    for i in range(m):
        if field(&cx, sa[i], ta[i], v, jac, True) == 0:
            V[i, 0] = v[0]; V[i, 1] = v[1]
            J[i, 0] = jac[0]; J[i, 1] = jac[1]; J[i, 2] = jac[2]; J[i, 3] = jac[3]
    return V, J
