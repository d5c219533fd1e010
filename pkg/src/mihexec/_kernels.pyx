# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels.

Mirrors mihexec._pykernels operation for operation; see that module for the
semantics.  Floating-point expression order is kept identical (and the
extension is built with -ffp-contract=off) so both backends produce
bit-identical results from the same PCG64 stream.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport ceil, exp, expm1, isfinite, log1p, pow

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _zeta(double y, double thr) nogil:
    if y < thr and y > -thr:
        return 1.0 + y * (-1.0 / 2.0 + y * (1.0 / 6.0 + y * (-1.0 / 24.0 + y * (1.0 / 120.0 + y * (-1.0 / 720.0 + y * (1.0 / 5040.0))))))
    return -expm1(-y) / y


cdef inline double _omega(double y, double thr) nogil:
    if y < thr and y > -thr:
        return 1.0 / 2.0 + y * (-1.0 / 6.0 + y * (1.0 / 24.0 + y * (-1.0 / 120.0 + y * (1.0 / 720.0 + y * (-1.0 / 5040.0 + y * (1.0 / 40320.0))))))
    return (expm1(-y) + y) / (y * y)


cdef inline double _eval_power_sum(const double[::1] coefs, const double[::1] pows, double y) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(coefs.shape[0]):
        acc += coefs[i] * pow(y, pows[i])
    return acc


def simulate_events(
    double beta,
    double kappa_infty,
    double k0p,
    double k0m,
    double T,
    int mark_kind,
    double m1,
    emp_vols,
    emp_cumw,
    s_coefs,
    s_pows,
    c_coefs,
    c_pows,
    generator,
    long max_events=10_000_000,
):
    cdef bitgen_t *rng
    capsule = generator.bit_generator.capsule
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef const double[::1] vols_v = np.ascontiguousarray(emp_vols, dtype=np.float64)
    cdef const double[::1] cumw_v = np.ascontiguousarray(emp_cumw, dtype=np.float64)
    cdef const double[::1] sc = np.ascontiguousarray(s_coefs, dtype=np.float64)
    cdef const double[::1] sp = np.ascontiguousarray(s_pows, dtype=np.float64)
    cdef const double[::1] cc = np.ascontiguousarray(c_coefs, dtype=np.float64)
    cdef const double[::1] cp = np.ascontiguousarray(c_pows, dtype=np.float64)

    cdef Py_ssize_t cap = 1024
    cdef cnp.ndarray taus = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray sides = np.empty(cap, dtype=np.int32)
    cdef cnp.ndarray volumes = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray dis = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray dibars = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray kps = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray kms = np.empty(cap, dtype=np.float64)

    cdef double[::1] taus_v = taus
    cdef int[::1] sides_v = sides
    cdef double[::1] volumes_v = volumes
    cdef double[::1] dis_v = dis
    cdef double[::1] dibars_v = dibars
    cdef double[::1] kps_v = kps
    cdef double[::1] kms_v = kms

    cdef Py_ssize_t n = 0
    cdef double kp = k0p
    cdef double km = k0m
    cdef double t = 0.0
    cdef double mp, mm, envelope, u1, w, decay, u2, total, u3, u4, v, y, fs, fc
    cdef int side
    cdef Py_ssize_t j, last

    while True:
        mp = kp if kp > kappa_infty else kappa_infty
        mm = km if km > kappa_infty else kappa_infty
        envelope = mp + mm
        if envelope <= 0.0:
            break
        u1 = rng.next_double(rng.state)
        w = (-log1p(-u1)) / envelope
        t = t + w
        if t > T:
            break
        decay = exp(-beta * w)
        kp = kappa_infty + (kp - kappa_infty) * decay
        km = kappa_infty + (km - kappa_infty) * decay
        u2 = rng.next_double(rng.state)
        total = kp + km
        if u2 * envelope <= total:
            u3 = rng.next_double(rng.state)
            side = 1 if u3 * total <= kp else -1
            if mark_kind == 0:
                v = m1
            elif mark_kind == 1:
                v = -m1 * log1p(-rng.next_double(rng.state))
            else:
                u4 = rng.next_double(rng.state)
                j = 0
                last = cumw_v.shape[0] - 1
                while j < last and u4 >= cumw_v[j]:
                    j += 1
                v = vols_v[j]
            y = v / m1 if m1 > 0.0 else 0.0
            fs = _eval_power_sum(sc, sp, y)
            fc = _eval_power_sum(cc, cp, y)
            if side > 0:
                kp += fs
                km += fc
            else:
                kp += fc
                km += fs
            if not (isfinite(kp) and isfinite(km)):
                raise FloatingPointError("simulate_events: non-finite intensity")
            if n >= cap:
                cap *= 2
                taus = np.resize(taus, cap); taus_v = taus
                sides = np.resize(sides, cap); sides_v = sides
                volumes = np.resize(volumes, cap); volumes_v = volumes
                dis = np.resize(dis, cap); dis_v = dis
                dibars = np.resize(dibars, cap); dibars_v = dibars
                kps = np.resize(kps, cap); kps_v = kps
                kms = np.resize(kms, cap); kms_v = kms
            taus_v[n] = t
            sides_v[n] = side
            volumes_v[n] = v
            dis_v[n] = side * (fs - fc)
            dibars_v[n] = fs + fc
            kps_v[n] = kp
            kms_v[n] = km
            n += 1
            if n >= max_events:
                raise RuntimeError(f"simulate_events: exceeded max_events={max_events}")
    return (
        taus[:n].copy(),
        sides[:n].copy(),
        volumes[:n].copy(),
        dis[:n].copy(),
        dibars[:n].copy(),
        kps[:n].copy(),
        kms[:n].copy(),
    )


cdef inline double _K_of_u(double u, double rho, double nu, double m1, double eta, double thr) nogil:
    cdef double z = _zeta(eta * u, thr)
    cdef double w = _omega(eta * u, thr)
    return (m1 / (2.0 * rho)) * (2.0 + rho * u * (1.0 + z + nu * rho * u * w))


cdef inline double _phi_eta_of_u(double u, double rho, double nu, double beta, double eta, double thr) nogil:
    cdef double z = _zeta(eta * u, thr)
    cdef double w = _omega(eta * u, thr)
    cdef double bracket = 2.0 + rho * u * (1.0 + z + nu * rho * u * w)
    return (1.0 + exp(-eta * u) + nu * rho * u * z + (beta / rho) * bracket) / (2.0 * (2.0 + rho * u))


cdef double[5] _GL5_X = [-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664]
cdef double[5] _GL5_W = [0.23692688505618908, 0.47862867049936647, 0.5688888888888889, 0.47862867049936647, 0.23692688505618908]


cdef double _phi_decay_integral(double u0, double h, double rho, double nu, double beta, double eta, double thr) nogil:
    cdef double scale = rho
    cdef double ae = eta if eta >= 0.0 else -eta
    if beta > scale:
        scale = beta
    if ae > scale:
        scale = ae
    cdef long panels = <long> ceil(h * scale / 2.0)
    if panels < 1:
        panels = 1
    cdef double width = h / panels
    cdef double total = 0.0
    cdef double lo, mid, half, acc, s
    cdef Py_ssize_t k, m
    for k in range(panels):
        lo = k * width
        mid = lo + 0.5 * width
        half = 0.5 * width
        acc = 0.0
        for m in range(5):
            s = mid + half * _GL5_X[m]
            acc += _GL5_W[m] * _phi_eta_of_u(u0 - s, rho, nu, beta, eta, thr) * exp(-beta * s)
        total += half * acc
    return total


def feedback_schedule(
    bp_times,
    bp_event_idx,
    ev_dn,
    ev_di,
    double T,
    double x0,
    double W0,
    double delta0,
    double rho,
    double nu,
    double eps,
    double beta,
    double m1,
    double eta,
    double thr,
):
    cdef const double[::1] bp = np.ascontiguousarray(bp_times, dtype=np.float64)
    cdef const long[::1] evi = np.ascontiguousarray(bp_event_idx, dtype=np.int64)
    cdef const double[::1] dn = np.ascontiguousarray(ev_dn, dtype=np.float64)
    cdef const double[::1] di = np.ascontiguousarray(ev_di, dtype=np.float64)

    cdef Py_ssize_t nb = bp.shape[0]
    cdef double one = 1.0 - eps
    cdef double X = x0
    cdef double W = W0
    cdef double d = delta0

    cdef double KT = _K_of_u(T, rho, nu, m1, eta, thr)
    cdef double b0 = -(one * X + (1.0 + rho * T) * W - KT * d) / (one * (2.0 + rho * T))
    X += b0
    W += one * b0

    cdef cnp.ndarray rates = np.empty(nb - 1, dtype=np.float64)
    cdef cnp.ndarray Xs = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray Ws = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray ds = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray blk_t = np.empty(max(nb, 1), dtype=np.float64)
    cdef cnp.ndarray blk_x = np.empty(max(nb, 1), dtype=np.float64)
    cdef double[::1] rates_v = rates
    cdef double[::1] Xs_v = Xs
    cdef double[::1] Ws_v = Ws
    cdef double[::1] ds_v = ds
    cdef double[::1] blk_t_v = blk_t
    cdef double[::1] blk_x_v = blk_x

    Xs_v[0] = X
    Ws_v[0] = W
    ds_v[0] = d

    cdef Py_ssize_t i, nblk = 0
    cdef long j
    cdef double terminal = -X
    cdef double s1, h, u0, u1, ehr, ehb, wr, d1, Ku, J, W1, X1, RW, dX, r, b, br, block_amount
    for i in range(1, nb):
        s1 = bp[i]
        h = s1 - bp[i - 1]
        u0 = T - bp[i - 1]
        u1 = T - s1
        ehr = exp(-rho * h)
        ehb = exp(-beta * h)
        wr = _omega(rho * h, thr)
        d1 = d * ehb
        Ku = _K_of_u(u1, rho, nu, m1, eta, thr)
        J = _phi_decay_integral(u0, h, rho, nu, beta, eta, thr)
        W1 = W - m1 * d * J
        X1 = (Ku * d1 - (1.0 + rho * u1) * W1) / one
        RW = (W1 - W * ehr) / one
        dX = X1 - X
        r = (dX - RW) / (rho * h * h * wr)
        b = dX - r * h
        rates_v[i - 1] = r
        X = X1
        W = W1
        d = d1
        block_amount = b
        j = evi[i]
        if j >= 0:
            W += (1.0 - nu) * dn[j]
            d += di[j]
            if s1 < T:
                br = -(one * X + (1.0 + rho * u1) * W - Ku * d) / (one * (2.0 + rho * u1))
                X += br
                W += one * br
                block_amount += br
        if s1 < T:
            blk_t_v[nblk] = s1
            blk_x_v[nblk] = block_amount
            nblk += 1
        else:
            terminal = block_amount - X
        Xs_v[i] = X
        Ws_v[i] = W
        ds_v[i] = d

    return (
        b0,
        blk_t[:nblk].copy(),
        blk_x[:nblk].copy(),
        rates,
        terminal,
        Xs,
        Ws,
        ds,
    )


def replay_schedule(
    ev_tau,
    ev_dn,
    double T,
    double S0,
    double D0,
    double X0,
    double q,
    double rho,
    double nu,
    double eps,
    double initial_block,
    blk_tau,
    blk_dx,
    rate_edges,
    rate_vals,
    double terminal_block,
    double thr,
    bint want_trace,
):
    cdef const double[::1] etau = np.ascontiguousarray(ev_tau, dtype=np.float64)
    cdef const double[::1] edn = np.ascontiguousarray(ev_dn, dtype=np.float64)
    cdef const double[::1] btau = np.ascontiguousarray(blk_tau, dtype=np.float64)
    cdef const double[::1] bdx = np.ascontiguousarray(blk_dx, dtype=np.float64)
    cdef const double[::1] redges = np.ascontiguousarray(rate_edges, dtype=np.float64)
    cdef const double[::1] rvals = np.ascontiguousarray(rate_vals, dtype=np.float64)

    cdef double S = S0
    cdef double D = D0
    cdef double X = X0
    cdef double cost = 0.0

    tr_t = [] if want_trace else None
    tr_kind = [] if want_trace else None
    tr_dn = [] if want_trace else None
    tr_dx = [] if want_trace else None
    tr_S = [] if want_trace else None
    tr_D = [] if want_trace else None
    tr_P = [] if want_trace else None
    tr_X = [] if want_trace else None
    tr_inc = [] if want_trace else None

    cdef Py_ssize_t ne = etau.shape[0]
    cdef Py_ssize_t nblk = btau.shape[0]
    cdef Py_ssize_t nseg = rvals.shape[0]
    cdef Py_ssize_t ie = 0
    cdef Py_ssize_t ib = 0
    cdef Py_ssize_t seg = 0
    cdef double t = 0.0
    cdef double nxt, h, r, zr, wr, inc, P, dx, dnv

    # initial block at t = 0
    P = S + D
    inc = P * initial_block + initial_block * initial_block / (2.0 * q)
    cost += inc
    S += eps * initial_block / q
    D += (1.0 - eps) * initial_block / q
    X += initial_block
    if want_trace:
        tr_t.append(0.0); tr_kind.append(1); tr_dn.append(0.0); tr_dx.append(initial_block)
        tr_S.append(S); tr_D.append(D); tr_P.append(S + D); tr_X.append(X); tr_inc.append(inc)

    while True:
        nxt = T
        if ie < ne and etau[ie] < nxt:
            nxt = etau[ie]
        if ib < nblk and btau[ib] < nxt:
            nxt = btau[ib]
        if nseg > 0 and seg + 1 <= nseg and redges[seg + 1] < nxt:
            nxt = redges[seg + 1]
        h = nxt - t
        if h > 0.0:
            r = rvals[seg] if nseg > 0 else 0.0
            zr = _zeta(rho * h, thr)
            wr = _omega(rho * h, thr)
            inc = r * (S * h + eps * r * h * h / (2.0 * q) + D * h * zr + (1.0 - eps) * (r / q) * h * h * wr)
            D = D * exp(-rho * h) + (1.0 - eps) * r * h * zr / q
            S = S + eps * r * h / q
            X = X + r * h
            cost += inc
            if want_trace:
                tr_t.append(nxt); tr_kind.append(2); tr_dn.append(0.0); tr_dx.append(r * h)
                tr_S.append(S); tr_D.append(D); tr_P.append(S + D); tr_X.append(X); tr_inc.append(inc)
        t = nxt
        while ie < ne and etau[ie] == t:
            dnv = edn[ie]
            S += nu * dnv / q
            D += (1.0 - nu) * dnv / q
            if want_trace:
                tr_t.append(t); tr_kind.append(0); tr_dn.append(dnv); tr_dx.append(0.0)
                tr_S.append(S); tr_D.append(D); tr_P.append(S + D); tr_X.append(X); tr_inc.append(0.0)
            ie += 1
        while ib < nblk and btau[ib] == t:
            dx = bdx[ib]
            P = S + D
            inc = P * dx + dx * dx / (2.0 * q)
            cost += inc
            S += eps * dx / q
            D += (1.0 - eps) * dx / q
            X += dx
            if want_trace:
                tr_t.append(t); tr_kind.append(1); tr_dn.append(0.0); tr_dx.append(dx)
                tr_S.append(S); tr_D.append(D); tr_P.append(S + D); tr_X.append(X); tr_inc.append(inc)
            ib += 1
        while nseg > 0 and seg < nseg - 1 and redges[seg + 1] <= t:
            seg += 1
        if t >= T:
            break

    P = S + D
    inc = P * terminal_block + terminal_block * terminal_block / (2.0 * q)
    cost += inc
    S += eps * terminal_block / q
    D += (1.0 - eps) * terminal_block / q
    X += terminal_block
    if want_trace:
        tr_t.append(T); tr_kind.append(3); tr_dn.append(0.0); tr_dx.append(terminal_block)
        tr_S.append(S); tr_D.append(D); tr_P.append(S + D); tr_X.append(X); tr_inc.append(inc)

    trace = None
    if want_trace:
        trace = (
            np.asarray(tr_t),
            np.asarray(tr_kind, dtype=np.int32),
            np.asarray(tr_dn),
            np.asarray(tr_dx),
            np.asarray(tr_S),
            np.asarray(tr_D),
            np.asarray(tr_P),
            np.asarray(tr_X),
            np.asarray(tr_inc),
        )
    return cost, S, D, X, trace
