"""Independent reference implementations used as test oracles.

These deliberately avoid the package's internal code paths: the LQR solver
below is a plain textbook recursion, and the nonsmooth reference solver is a
dynamic-target subgradient method.  Slow and simple on purpose.
"""

import numpy as np


def finite_lqr(a, b, q_mats, r_mats, x0):
    """Classic finite-horizon time-varying LQR for a single linear mode.

    q_mats holds Q(0)..Q(N) (last entry terminal), r_mats holds R(0)..R(N-1).
    Returns (cost, states, inputs).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    horizon = len(r_mats)
    n = a.shape[0]
    p = np.array(q_mats[horizon], dtype=float)
    gains = [None] * horizon
    for k in range(horizon - 1, -1, -1):
        gains[k] = np.linalg.solve(r_mats[k] + b.T @ p @ b, b.T @ p @ a)
        acl = a - b @ gains[k]
        p = q_mats[k] + gains[k].T @ r_mats[k] @ gains[k] + acl.T @ p @ acl
        p = 0.5 * (p + p.T)
    states = np.zeros((horizon + 1, n))
    inputs = np.zeros((horizon, b.shape[1]))
    states[0] = x0
    cost = 0.0
    for k in range(horizon):
        inputs[k] = -gains[k] @ states[k]
        cost += states[k] @ q_mats[k] @ states[k] + inputs[k] @ r_mats[k] @ inputs[k]
        states[k + 1] = a @ states[k] + b @ inputs[k]
    cost += states[horizon] @ q_mats[horizon] @ states[horizon]
    return 0.5 * cost, states, inputs


def nonsmooth_objective(h, c, groups, z):
    val = 0.5 * z @ h @ z + c @ z
    for e_mat, e_off, tau in groups:
        val += tau * np.linalg.norm(e_mat @ z + e_off)
    return float(val)


def subgradient_reference(h, c, groups, max_iters=300000):
    """Polyak-target subgradient descent on the quadratic-plus-norms objective.

    Steps aim at a moving target f_best - delta whose gap delta cools
    geometrically from the objective scale down past the accuracy goal, so
    early iterations take large steps and late ones settle.  Slow but
    reliable on small instances, which is all an oracle needs.
    Returns (best objective, best point).
    """
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    z = np.zeros(d)
    if groups:
        e_stack = np.concatenate([np.atleast_2d(g[0]) for g in groups])
        e_off = np.concatenate([np.atleast_1d(g[1]) for g in groups])
        taus = np.asarray([g[2] for g in groups], dtype=float)
        sizes = np.asarray([np.atleast_2d(g[0]).shape[0] for g in groups])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    else:
        e_stack = np.zeros((0, d))
        e_off = np.zeros(0)
        taus = np.zeros(0)
        sizes = np.zeros(0, dtype=int)
        starts = np.zeros(0, dtype=int)

    def f_and_g(z):
        hz = h @ z
        val = 0.5 * float(z @ hz) + float(c @ z)
        grad = hz + c
        if taus.size:
            r = e_stack @ z + e_off
            norms = np.sqrt(np.add.reduceat(r * r, starts))
            val += float(taus @ norms)
            coef = np.where(norms > 1e-300, taus / np.maximum(norms, 1e-300), 0.0)
            grad = grad + e_stack.T @ (r * np.repeat(coef, sizes))
        return val, grad

    f_best, _ = f_and_g(z)
    z_best = z.copy()
    scale = 1.0 + abs(f_best)
    delta = 0.5 * scale
    delta_min = 1e-11 * scale
    cooling = (delta_min / delta) ** (1.0 / max_iters)
    f = f_best
    for _ in range(max_iters):
        _, g = f_and_g(z)
        gnorm2 = float(g @ g)
        if gnorm2 < 1e-300:
            break
        step = (f - (f_best - delta)) / gnorm2
        z = z - step * g
        f, _ = f_and_g(z)
        if f < f_best:
            f_best = f
            z_best = z.copy()
        delta *= cooling
    return f_best, z_best


def subgradient_certificate(problem, z, active_cutoff=1e-4):
    """Explicit first-order optimality residual at z for a GroupLassoQP.

    Groups with a clearly nonzero affine value contribute their exact
    gradient; for the rest a subgradient inside the dual ball is chosen by
    projected gradient descent to shrink the assembled residual.  Moving a
    group into the ball search only enlarges the feasible subgradient set,
    so a generous cutoff is safe.  Returns the residual norm (small at a
    true optimum).
    """
    z = np.asarray(z, dtype=float)
    base = problem.h @ z + problem.c
    free = []
    for g in problem.groups:
        r = g.mat @ z + g.off
        nr = np.linalg.norm(r)
        if nr > active_cutoff * (1.0 + np.linalg.norm(z)):
            base = base + g.weight * (g.mat.T @ r) / nr
        else:
            free.append((g, g.mat @ z + g.off))
    if not free:
        return float(np.linalg.norm(base))
    # warm start at the exact-gradient direction of each near-zero group
    s = []
    for g, r in free:
        nr = np.linalg.norm(r)
        s.append(g.weight * r / nr if nr > 1e-300 else np.zeros(g.mat.shape[0]))
    lip = sum(np.linalg.norm(g.mat, 2) ** 2 for g, _ in free)
    step = 1.0 / max(lip, 1e-12)
    for _ in range(2000):
        resid = base + sum(g.mat.T @ s_g for (g, _), s_g in zip(free, s))
        for idx, (g, _) in enumerate(free):
            cand = s[idx] - step * (g.mat @ resid)
            norm = np.linalg.norm(cand)
            if norm > g.weight:
                cand = cand * (g.weight / norm)
            s[idx] = cand
    resid = base + sum(g.mat.T @ s_g for (g, _), s_g in zip(free, s))
    return float(np.linalg.norm(resid))


def mode_gap_blocks(a_stack, b_stack, states, inputs):
    """Gap of every mode's one-step prediction along a trajectory."""
    q = a_stack.shape[0]
    horizon = inputs.shape[0]
    blocks = np.empty((horizon, q, a_stack.shape[1]))
    for i in range(q):
        blocks[:, i, :] = states[1:] - states[:-1] @ a_stack[i].T - inputs @ b_stack[i].T
    return blocks
