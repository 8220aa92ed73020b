"""Numba-compiled inner loops for PLRNN stepping and BPTT.

Everything here works on plain float64 arrays; the dataclass wrappers live in
:mod:`dsrtopo.model` and :mod:`dsrtopo.training`. Loops are written out
explicitly so the accumulation order is fixed, which keeps runs bit-reproducible.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def plrnn_orbit(a, wm, h, z1, n_steps, guard):
    """Free-run the masked PLRNN for ``n_steps`` steps from ``z1``.

    Returns ``(latents, n_valid)`` where ``latents[t]`` is the state after
    step ``t+1`` and ``n_valid <= n_steps`` is the number of rows produced
    before a state went non-finite or exceeded ``guard`` in magnitude.
    """
    m = a.shape[0]
    out = np.empty((n_steps, m))
    z = z1.copy()
    phi = np.empty(m)
    zn = np.empty(m)
    for t in range(n_steps):
        mu = 0.0
        for i in range(m):
            mu += z[i]
        mu /= m
        for i in range(m):
            c = z[i] - mu
            phi[i] = c if c > 0.0 else 0.0
        ok = True
        for i in range(m):
            acc = a[i] * z[i] + h[i]
            for j in range(m):
                acc += wm[i, j] * phi[j]
            zn[i] = acc
            if not np.isfinite(acc) or abs(acc) > guard:
                ok = False
        if not ok:
            return out, t
        for i in range(m):
            z[i] = zn[i]
            out[t, i] = zn[i]
    return out, n_steps


@njit(cache=True)
def plrnn_step_n_batch(a, wm, h, z0, n_steps):
    """Advance a batch of states ``z0`` (S, M) by ``n_steps`` PLRNN steps."""
    s_n, m = z0.shape
    z = z0.copy()
    phi = np.empty(m)
    zn = np.empty(m)
    for _ in range(n_steps):
        for s in range(s_n):
            mu = 0.0
            for i in range(m):
                mu += z[s, i]
            mu /= m
            for i in range(m):
                c = z[s, i] - mu
                phi[i] = c if c > 0.0 else 0.0
            for i in range(m):
                acc = a[i] * z[s, i] + h[i]
                for j in range(m):
                    acc += wm[i, j] * phi[j]
                zn[i] = acc
            for i in range(m):
                z[s, i] = zn[i]
    return z


@njit(cache=True)
def stf_forward_batch(a, wm, h, x, tau):
    """Teacher-forced forward pass over a batch of observation sequences.

    ``x`` has shape (S, T, N). State index t corresponds to time t+1; index 0
    is the forced initial state (observed components from ``x[:, 0]``, hidden
    components zero). Forcing re-applies at state indices t with t % tau == 0,
    after the prediction for that index has been recorded.

    Returns ``(states, phis, preds)`` with shapes (T, S, M), (T-1, S, M) and
    (T-1, S, N). ``states`` holds the propagated (post-forcing) states,
    ``preds`` the pre-forcing observed components for t = 1..T-1.
    """
    s_n, t_n, n = x.shape
    m = a.shape[0]
    states = np.zeros((t_n, s_n, m))
    phis = np.zeros((t_n - 1, s_n, m))
    preds = np.empty((t_n - 1, s_n, n))
    for s in range(s_n):
        for k in range(n):
            states[0, s, k] = x[s, 0, k]
    for t in range(1, t_n):
        for s in range(s_n):
            mu = 0.0
            for i in range(m):
                mu += states[t - 1, s, i]
            mu /= m
            for i in range(m):
                c = states[t - 1, s, i] - mu
                phis[t - 1, s, i] = c if c > 0.0 else 0.0
            for i in range(m):
                acc = a[i] * states[t - 1, s, i] + h[i]
                for j in range(m):
                    acc += wm[i, j] * phis[t - 1, s, j]
                states[t, s, i] = acc
            for k in range(n):
                preds[t - 1, s, k] = states[t, s, k]
        if t % tau == 0:
            for s in range(s_n):
                for k in range(n):
                    states[t, s, k] = x[s, t, k]
    return states, phis, preds


@njit(cache=True)
def bptt_backward_batch(a, wm, states, phis, preds, x, tau):
    """Exact reverse-mode gradients of the STF/MSE loss.

    Gradients are with respect to ``a`` (diagonal), the effective (masked)
    weight matrix, and ``h``. Teacher-forced observed components are treated
    as constants, so no gradient flows across a forcing replacement. The ReLU
    subgradient at exactly zero is zero (phi > 0 test).
    """
    s_n, t_n, n = x.shape
    m = a.shape[0]
    da = np.zeros(m)
    dwm = np.zeros((m, m))
    dh = np.zeros(m)
    gs = np.zeros((s_n, m))
    gz = np.empty((s_n, m))
    gc = np.empty(m)
    coef = 2.0 / (s_n * (t_n - 1))
    for t in range(t_n - 1, 0, -1):
        forced = t % tau == 0
        for s in range(s_n):
            for i in range(m):
                if i < n:
                    g = coef * (preds[t - 1, s, i] - x[s, t, i])
                    if not forced:
                        g += gs[s, i]
                    gz[s, i] = g
                else:
                    gz[s, i] = gs[s, i]
        for s in range(s_n):
            for i in range(m):
                g = gz[s, i]
                dh[i] += g
                da[i] += g * states[t - 1, s, i]
                for j in range(m):
                    dwm[i, j] += g * phis[t - 1, s, j]
        for s in range(s_n):
            mu = 0.0
            for j in range(m):
                acc = 0.0
                for i in range(m):
                    acc += gz[s, i] * wm[i, j]
                if phis[t - 1, s, j] > 0.0:
                    gc[j] = acc
                else:
                    gc[j] = 0.0
                mu += gc[j]
            mu /= m
            for i in range(m):
                gs[s, i] = a[i] * gz[s, i] + gc[i] - mu
    return da, dwm, dh
