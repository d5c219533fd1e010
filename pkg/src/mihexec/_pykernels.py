"""Pure-Python reference kernels (import-time fallback backend).

The compiled module ``mihexec._kernels`` mirrors these three entry points
operation for operation.  Keep every floating-point expression in the same
order in both backends: the parity tests compare results bitwise, and the
simulation consumes the PCG64 stream through ``Generator.random()`` scalar
calls so the two backends see identical uniforms.
"""

from __future__ import annotations

import math

import numpy as np

from .special import omega_scalar, zeta_scalar

BACKEND_NAME = "python"


def _eval_power_sum(coefs, pows, y: float) -> float:
    acc = 0.0
    for i in range(len(coefs)):
        acc += coefs[i] * (y ** pows[i])
    return acc


def simulate_events(
    beta: float,
    kappa_infty: float,
    k0p: float,
    k0m: float,
    T: float,
    mark_kind: int,
    m1: float,
    emp_vols,
    emp_cumw,
    s_coefs,
    s_pows,
    c_coefs,
    c_pows,
    generator,
    max_events: int = 10_000_000,
):
    """Exact thinning of the two-sided marked flow on (0, T].

    Between candidates each intensity decays exponentially toward the
    baseline, so max(kappa, baseline) per side is a valid envelope.  The
    envelope is refreshed after every candidate, accepted or not.
    Returns (tau, side, volume, delta_I, delta_Ibar, kp_after, km_after).
    """
    rnd = generator.random
    # plain-float term lists keep ** on the libm pow path, matching the
    # compiled kernel bit for bit
    emp_vols = [float(v) for v in emp_vols]
    emp_cumw = [float(w) for w in emp_cumw]
    s_coefs = [float(c) for c in s_coefs]
    s_pows = [float(p) for p in s_pows]
    c_coefs = [float(c) for c in c_coefs]
    c_pows = [float(p) for p in c_pows]
    taus: list[float] = []
    sides: list[int] = []
    vols: list[float] = []
    dis: list[float] = []
    dibars: list[float] = []
    kps: list[float] = []
    kms: list[float] = []

    kp = k0p
    km = k0m
    t = 0.0
    while True:
        mp = kp if kp > kappa_infty else kappa_infty
        mm = km if km > kappa_infty else kappa_infty
        envelope = mp + mm
        if envelope <= 0.0:
            break
        u1 = rnd()
        w = (-math.log1p(-u1)) / envelope
        t = t + w
        if t > T:
            break
        decay = math.exp(-beta * w)
        kp = kappa_infty + (kp - kappa_infty) * decay
        km = kappa_infty + (km - kappa_infty) * decay
        u2 = rnd()
        total = kp + km
        if u2 * envelope <= total:
            u3 = rnd()
            side = 1 if u3 * total <= kp else -1
            if mark_kind == 0:
                v = m1
            elif mark_kind == 1:
                v = -m1 * math.log1p(-rnd())
            else:
                u4 = rnd()
                j = 0
                last = len(emp_cumw) - 1
                while j < last and u4 >= emp_cumw[j]:
                    j += 1
                v = emp_vols[j]
            y = v / m1 if m1 > 0.0 else 0.0
            fs = _eval_power_sum(s_coefs, s_pows, y)
            fc = _eval_power_sum(c_coefs, c_pows, y)
            if side > 0:
                kp += fs
                km += fc
            else:
                kp += fc
                km += fs
            if not (math.isfinite(kp) and math.isfinite(km)):
                raise FloatingPointError("simulate_events: non-finite intensity")
            taus.append(t)
            sides.append(side)
            vols.append(v)
            dis.append(side * (fs - fc))
            dibars.append(fs + fc)
            kps.append(kp)
            kms.append(km)
            if len(taus) >= max_events:
                raise RuntimeError(f"simulate_events: exceeded max_events={max_events}")
    return (
        np.asarray(taus, dtype=np.float64),
        np.asarray(sides, dtype=np.int32),
        np.asarray(vols, dtype=np.float64),
        np.asarray(dis, dtype=np.float64),
        np.asarray(dibars, dtype=np.float64),
        np.asarray(kps, dtype=np.float64),
        np.asarray(kms, dtype=np.float64),
    )


def _K_of_u(u: float, rho: float, nu: float, m1: float, eta: float, thr: float) -> float:
    z = zeta_scalar(eta * u, thr)
    w = omega_scalar(eta * u, thr)
    return (m1 / (2.0 * rho)) * (2.0 + rho * u * (1.0 + z + nu * rho * u * w))


def _phi_eta_of_u(u: float, rho: float, nu: float, beta: float, eta: float, thr: float) -> float:
    z = zeta_scalar(eta * u, thr)
    w = omega_scalar(eta * u, thr)
    bracket = 2.0 + rho * u * (1.0 + z + nu * rho * u * w)
    return (1.0 + math.exp(-eta * u) + nu * rho * u * z + (beta / rho) * bracket) / (2.0 * (2.0 + rho * u))


# 5-node Gauss-Legendre rule on [-1, 1]
_GL5_X = (-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664)
_GL5_W = (0.23692688505618908, 0.47862867049936647, 0.5688888888888889, 0.47862867049936647, 0.23692688505618908)


def _phi_decay_integral(
    u0: float, h: float, rho: float, nu: float, beta: float, eta: float, thr: float
) -> float:
    """int_0^h phi_eta(u0 - s as time-to-go) * exp(-beta s) ds by panelled GL5."""
    scale = rho
    if beta > scale:
        scale = beta
    ae = eta if eta >= 0.0 else -eta
    if ae > scale:
        scale = ae
    panels = int(math.ceil(h * scale / 2.0))
    if panels < 1:
        panels = 1
    width = h / panels
    total = 0.0
    for k in range(panels):
        lo = k * width
        mid = lo + 0.5 * width
        half = 0.5 * width
        acc = 0.0
        for node, weight in zip(_GL5_X, _GL5_W):
            s = mid + half * node
            acc += weight * _phi_eta_of_u(u0 - s, rho, nu, beta, eta, thr) * math.exp(-beta * s)
        total += half * acc
    return total


def feedback_schedule(
    bp_times,
    bp_event_idx,
    ev_dn,
    ev_di,
    T: float,
    x0: float,
    W0: float,
    delta0: float,
    rho: float,
    nu: float,
    eps: float,
    beta: float,
    m1: float,
    eta: float,
    thr: float,
):
    """Build the affine-identity-enforcing schedule along one event path.

    Works in W = q*D units so the depth never enters.  bp_times must be
    strictly increasing with bp_times[0] == 0 and bp_times[-1] == T;
    bp_event_idx[i] is the event index landing at bp_times[i], or -1.

    Per segment the deviation advances by its exact flow
    dW = -m1 * phi_eta * delta dt (quadrature of the local integral) and the
    position lands back on the identity
    (1-eps)X + (1+rho u)W - K(u) delta = 0; a constant rate plus a small
    landing block reproduce that endpoint exactly.  At events the implicit
    block re-establishes the identity after the jump; the landing block of
    the final segment merges into the terminal block (same-instant blocks
    cost the same merged or split on a linear book).
    Returns (initial_block, blk_tau, blk_dx, rates, terminal_block,
    Xs, Ws, deltas) with per-breakpoint post-operation samples.
    """
    nb = len(bp_times)
    one = 1.0 - eps
    X = x0
    W = W0
    d = delta0

    KT = _K_of_u(T, rho, nu, m1, eta, thr)
    b0 = -(one * X + (1.0 + rho * T) * W - KT * d) / (one * (2.0 + rho * T))
    X += b0
    W += one * b0

    rates = np.empty(nb - 1, dtype=np.float64)
    Xs = np.empty(nb, dtype=np.float64)
    Ws = np.empty(nb, dtype=np.float64)
    ds = np.empty(nb, dtype=np.float64)
    Xs[0] = X
    Ws[0] = W
    ds[0] = d
    blk_t: list[float] = []
    blk_dx: list[float] = []
    terminal = -X

    for i in range(1, nb):
        s1 = bp_times[i]
        h = s1 - bp_times[i - 1]
        u0 = T - bp_times[i - 1]
        u1 = T - s1
        ehr = math.exp(-rho * h)
        ehb = math.exp(-beta * h)
        wr = omega_scalar(rho * h, thr)
        d1 = d * ehb
        Ku = _K_of_u(u1, rho, nu, m1, eta, thr)
        J = _phi_decay_integral(u0, h, rho, nu, beta, eta, thr)
        W1 = W - m1 * d * J
        X1 = (Ku * d1 - (1.0 + rho * u1) * W1) / one
        RW = (W1 - W * ehr) / one
        dX = X1 - X
        r = (dX - RW) / (rho * h * h * wr)
        b = dX - r * h
        rates[i - 1] = r
        X = X1
        W = W1
        d = d1
        block_amount = b
        j = bp_event_idx[i]
        if j >= 0:
            W += (1.0 - nu) * ev_dn[j]
            d += ev_di[j]
            if s1 < T:
                br = -(one * X + (1.0 + rho * u1) * W - Ku * d) / (one * (2.0 + rho * u1))
                X += br
                W += one * br
                block_amount += br
        if s1 < T:
            blk_t.append(s1)
            blk_dx.append(block_amount)
        else:
            terminal = block_amount - X
        Xs[i] = X
        Ws[i] = W
        ds[i] = d

    return (
        b0,
        np.asarray(blk_t, dtype=np.float64),
        np.asarray(blk_dx, dtype=np.float64),
        rates,
        terminal,
        Xs,
        Ws,
        ds,
    )


def replay_schedule(
    ev_tau,
    ev_dn,
    T: float,
    S0: float,
    D0: float,
    X0: float,
    q: float,
    rho: float,
    nu: float,
    eps: float,
    initial_block: float,
    blk_tau,
    blk_dx,
    rate_edges,
    rate_vals,
    terminal_block: float,
    thr: float,
    want_trace: bool,
):
    """Replay market orders against a trade schedule and accumulate cost.

    Order contract at a shared timestamp: market order first, strategy block
    second.  Decay updates are exact exponentials; constant-rate steps accrue
    the exact integral of P against the continuous trading.
    Returns (cost, S, D, X, trace) with trace None or arrays
    (t, kind, dN, dX, S, D, P, X, cost_inc) and kind in
    {0: market, 1: block, 2: rate, 3: terminal}.
    """
    S = S0
    D = D0
    X = X0
    cost = 0.0

    tr_t: list[float] = []
    tr_kind: list[int] = []
    tr_dn: list[float] = []
    tr_dx: list[float] = []
    tr_S: list[float] = []
    tr_D: list[float] = []
    tr_P: list[float] = []
    tr_X: list[float] = []
    tr_inc: list[float] = []

    def emit(t, kind, dn, dx, inc):
        tr_t.append(t)
        tr_kind.append(kind)
        tr_dn.append(dn)
        tr_dx.append(dx)
        tr_S.append(S)
        tr_D.append(D)
        tr_P.append(S + D)
        tr_X.append(X)
        tr_inc.append(inc)

    def do_block(t, dx, kind):
        nonlocal S, D, X, cost
        P = S + D
        inc = P * dx + dx * dx / (2.0 * q)
        cost += inc
        S += eps * dx / q
        D += (1.0 - eps) * dx / q
        X += dx
        if want_trace:
            emit(t, kind, 0.0, dx, inc)

    do_block(0.0, initial_block, 1)

    ne = len(ev_tau)
    nblk = len(blk_tau)
    nseg = len(rate_vals)
    ie = 0
    ib = 0
    seg = 0
    t = 0.0
    while True:
        nxt = T
        if ie < ne and ev_tau[ie] < nxt:
            nxt = ev_tau[ie]
        if ib < nblk and blk_tau[ib] < nxt:
            nxt = blk_tau[ib]
        if nseg > 0 and seg + 1 <= nseg and rate_edges[seg + 1] < nxt:
            nxt = rate_edges[seg + 1]
        h = nxt - t
        if h > 0.0:
            r = rate_vals[seg] if nseg > 0 else 0.0
            zr = zeta_scalar(rho * h, thr)
            wr = omega_scalar(rho * h, thr)
            inc = r * (S * h + eps * r * h * h / (2.0 * q) + D * h * zr + (1.0 - eps) * (r / q) * h * h * wr)
            D = D * math.exp(-rho * h) + (1.0 - eps) * r * h * zr / q
            S = S + eps * r * h / q
            X = X + r * h
            cost += inc
            if want_trace:
                emit(nxt, 2, 0.0, r * h, inc)
        t = nxt
        while ie < ne and ev_tau[ie] == t:
            dn = ev_dn[ie]
            S += nu * dn / q
            D += (1.0 - nu) * dn / q
            if want_trace:
                emit(t, 0, dn, 0.0, 0.0)
            ie += 1
        while ib < nblk and blk_tau[ib] == t:
            do_block(t, blk_dx[ib], 1)
            ib += 1
        while nseg > 0 and seg < nseg - 1 and rate_edges[seg + 1] <= t:
            seg += 1
        if t >= T:
            break

    do_block(T, terminal_block, 3)

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
