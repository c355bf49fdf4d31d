"""Compiled inner loops for coordinate-descent solvers.

All kernels are single-threaded and visit coordinates in a fixed order, so
results are bit-reproducible regardless of how callers schedule them.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _kkt_gram(beta, grad, lam, exclude):
    worst = 0.0
    for j in range(beta.size):
        if j == exclude:
            continue
        if beta[j] != 0.0:
            s = 1.0 if beta[j] > 0 else -1.0
            v = abs(grad[j] - lam * s)
        else:
            v = abs(grad[j]) - lam
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _newton_polish(G, c, lam, beta, exclude, tol):
    # Solve the optimality system on the current support with its signs; accept
    # only if signs agree and the off-support conditions hold.
    p = beta.size
    nact = 0
    for j in range(p):
        if beta[j] != 0.0:
            nact += 1
    if nact == 0:
        return False
    act = np.empty(nact, dtype=np.int64)
    k = 0
    for j in range(p):
        if beta[j] != 0.0:
            act[k] = j
            k += 1
    Gaa = np.empty((nact, nact))
    rhs = np.empty(nact)
    for a in range(nact):
        ja = act[a]
        s = 1.0 if beta[ja] > 0 else -1.0
        rhs[a] = c[ja] - lam * s
        for b in range(nact):
            Gaa[a, b] = G[ja, act[b]]
    try:
        sol = np.linalg.solve(Gaa, rhs)
    except Exception:
        return False
    for a in range(nact):
        if not np.isfinite(sol[a]) or sol[a] * beta[act[a]] <= 0.0:
            return False
    cand = np.zeros(p)
    for a in range(nact):
        cand[act[a]] = sol[a]
    grad = c - G @ cand
    if _kkt_gram(cand, grad, lam, exclude) > tol:
        return False
    for j in range(p):
        beta[j] = cand[j]
    return True


@njit(cache=True)
def lasso_gram_cd(G, c, lam, beta, tol, max_iter, exclude, objective_trace):
    """Minimise 0.5 b'Gb - c'b + lam*|b|_1 in place on ``beta``.

    ``exclude`` pins one coordinate at zero (-1 for none). When
    ``objective_trace`` has positive length, the objective after each sweep
    is written into it and the support-Newton shortcut is disabled so every
    sweep is a pure coordinate pass. Returns (sweeps, kkt_violation).
    """
    p = beta.size
    grad = c - G @ beta
    kkt = _kkt_gram(beta, grad, lam, exclude)
    if kkt <= tol:
        return 0, kkt
    tracing = objective_trace.size > 0
    it = 0
    stable = 0
    wait = 2
    while it < max_iter:
        it += 1
        support_changed = False
        for j in range(p):
            if j == exclude:
                continue
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            new = _soft(grad[j] + gjj * old, lam) / gjj
            if new != old:
                if (new == 0.0) != (old == 0.0) or new * old < 0.0:
                    support_changed = True
                d = new - old
                for k in range(p):
                    grad[k] -= d * G[k, j]
                beta[j] = new
        if tracing and it <= objective_trace.size:
            obj = 0.0
            for j in range(p):
                obj += -0.5 * beta[j] * (c[j] + grad[j]) + lam * abs(beta[j])
            objective_trace[it - 1] = obj
        kkt = _kkt_gram(beta, grad, lam, exclude)
        if kkt <= tol:
            break
        stable = 0 if support_changed else stable + 1
        if not tracing and stable >= wait:
            if _newton_polish(G, c, lam, beta, exclude, tol):
                grad = c - G @ beta
                kkt = _kkt_gram(beta, grad, lam, exclude)
                break
            wait *= 2
            stable = 0
    return it, kkt


@njit(cache=True)
def lasso_gram_path(G, c, lambdas, tol, max_iter, exclude):
    """Warm-started path over a descending grid. Returns (coefs, sweeps, kkt)."""
    p = c.size
    L = lambdas.size
    coefs = np.zeros((L, p))
    sweeps = np.zeros(L, dtype=np.int64)
    kkts = np.zeros(L)
    beta = np.zeros(p)
    empty = np.zeros(0)
    for i in range(L):
        it, kkt = lasso_gram_cd(G, c, lambdas[i], beta, tol, max_iter, exclude, empty)
        coefs[i] = beta
        sweeps[i] = it
        kkts[i] = kkt
    return coefs, sweeps, kkts


@njit(cache=True)
def _group_kkt(X, r, beta, starts, sizes, lam, weights, n):
    worst = 0.0
    for g in range(starts.size):
        s = starts[g]
        d = sizes[g]
        nb = 0.0
        for k in range(d):
            nb += beta[s + k] ** 2
        nb = np.sqrt(nb)
        v = 0.0
        if nb > 0.0:
            for k in range(d):
                gk = X[:, s + k] @ r / n
                v += (gk - lam * weights[g] * beta[s + k] / nb) ** 2
            v = np.sqrt(v)
        else:
            for k in range(d):
                gk = X[:, s + k] @ r / n
                v += gk * gk
            v = np.sqrt(v) - lam * weights[g]
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def group_lasso_bcd(X, y, starts, sizes, lipschitz, lam, weights, beta, tol, max_iter):
    """Block coordinate proximal-gradient for
    (1/2n)|y - X b|^2 + lam * sum_g weights[g] |b_g|_2, in place on ``beta``.

    Each block step is the exact block minimiser when X_g'X_g/n = L_g I.
    Returns (sweeps, kkt_violation).
    """
    n = X.shape[0]
    r = y - X @ beta
    it = 0
    kkt = _group_kkt(X, r, beta, starts, sizes, lam, weights, n)
    if kkt <= tol:
        return 0, kkt
    while it < max_iter:
        it += 1
        maxchange = 0.0
        for g in range(starts.size):
            s = starts[g]
            d = sizes[g]
            Lg = lipschitz[g]
            if Lg <= 0.0:
                continue
            u = np.empty(d)
            nu = 0.0
            for k in range(d):
                u[k] = beta[s + k] + (X[:, s + k] @ r) / (n * Lg)
                nu += u[k] * u[k]
            nu = np.sqrt(nu)
            if nu > 0.0:
                shrink = 1.0 - lam * weights[g] / (Lg * nu)
            else:
                shrink = 0.0
            if shrink < 0.0:
                shrink = 0.0
            for k in range(d):
                new = shrink * u[k]
                dlt = new - beta[s + k]
                if dlt != 0.0:
                    r -= dlt * X[:, s + k]
                    beta[s + k] = new
                    if abs(dlt) * np.sqrt(Lg) > maxchange:
                        maxchange = abs(dlt) * np.sqrt(Lg)
        if maxchange < 10.0 * tol:
            kkt = _group_kkt(X, r, beta, starts, sizes, lam, weights, n)
            if kkt <= tol:
                break
    else:
        kkt = _group_kkt(X, r, beta, starts, sizes, lam, weights, n)
    return it, kkt


@njit(cache=True)
def group_lasso_path(X, y, starts, sizes, lipschitz, lambdas, weights, tol, max_iter, df_stop):
    """Warm-started group path. When ``df_stop > 0`` the path halts after the
    first fit with at least ``df_stop`` nonzero coefficients; later rows are NaN.
    Returns (coefs, sweeps, kkt, last index fitted).
    """
    P = X.shape[1]
    L = lambdas.size
    coefs = np.full((L, P), np.nan)
    sweeps = np.zeros(L, dtype=np.int64)
    kkts = np.full(L, np.nan)
    beta = np.zeros(P)
    last = -1
    for i in range(L):
        it, kkt = group_lasso_bcd(X, y, starts, sizes, lipschitz, lambdas[i], weights, beta, tol, max_iter)
        coefs[i] = beta
        sweeps[i] = it
        kkts[i] = kkt
        last = i
        if df_stop > 0:
            nz = 0
            for k in range(P):
                if beta[k] != 0.0:
                    nz += 1
            if nz >= df_stop:
                break
    return coefs, sweeps, kkts, last


@njit(cache=True)
def lasso_cv_path(Gt, ct, Gv, cv, yyv, lambdas, tol, max_iter, exclude, patience):
    """Fold-parallel CV path in Gram form.

    ``Gt[f], ct[f]`` are training statistics and ``Gv[f], cv[f], yyv[f]`` the
    held-out ones for fold f. Held-out MSE is filled in grid order; once the
    fold-mean error has stayed above its running minimum for ``patience``
    consecutive grid points the remaining entries are left at +inf.
    Returns (errors L x F, last evaluated index).
    """
    F = Gt.shape[0]
    p = ct.shape[1]
    L = lambdas.size
    errs = np.full((L, F), np.inf)
    betas = np.zeros((F, p))
    empty = np.zeros(0)
    best = np.inf
    since = 0
    last = -1
    for i in range(L):
        total = 0.0
        for f in range(F):
            b = betas[f]
            lasso_gram_cd(Gt[f], ct[f], lambdas[i], b, tol, max_iter, exclude, empty)
            e = yyv[f] - 2.0 * (b @ cv[f]) + b @ (Gv[f] @ b)
            errs[i, f] = e
            total += e
        last = i
        mean = total / F
        if mean < best:
            best = mean
            since = 0
        else:
            since += 1
            if patience > 0 and since >= patience:
                break
    return errs, last
