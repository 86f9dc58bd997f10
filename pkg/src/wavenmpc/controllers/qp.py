"""Dense convex QP solver (dual active set, Goldfarb-Idnani).

Solves ``min 0.5 x'Hx + g'x`` subject to ``C x >= d`` and ``lb <= x <= ub``
for positive definite H. The dual method starts from the unconstrained
minimiser and adds the most violated constraint at a time, so no feasible
starting point is needed; box rows are handled as unit-normal constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class QPInfeasibleError(ValueError):
    pass


class QPIterationLimitError(RuntimeError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    mult_general: np.ndarray   # for C x >= d
    mult_lower: np.ndarray     # for x >= lb
    mult_upper: np.ndarray     # for x <= ub
    iterations: int
    objective: float


def solve_qp(H, g, C=None, d=None, lb=None, ub=None, tol: float = 1e-11,
             max_iter: Optional[int] = None) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    rows = []
    rhs = []
    kinds = []  # (kind, index)
    n_general = 0
    if C is not None and len(C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        d = np.asarray(d, dtype=float)
        n_general = C.shape[0]
        for i in range(C.shape[0]):
            rows.append(C[i])
            rhs.append(d[i])
            kinds.append(("g", i))
    eye = np.eye(n)
    if lb is not None:
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        for j in np.flatnonzero(np.isfinite(lb)):
            rows.append(eye[j])
            rhs.append(lb[j])
            kinds.append(("l", j))
    if ub is not None:
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        for j in np.flatnonzero(np.isfinite(ub)):
            rows.append(-eye[j])
            rhs.append(-ub[j])
            kinds.append(("u", j))
    N_all = np.array(rows).reshape(-1, n)
    d_all = np.array(rhs, dtype=float)
    m = len(d_all)

    cf = cho_factor(H)
    Hinv = cho_solve(cf, eye)
    x = -cho_solve(cf, g)
    active: list[int] = []
    lam = np.zeros(m)
    scale = np.maximum(1.0, np.abs(d_all))
    iters = 0
    max_iter = max_iter or 10 * (m + n) + 50

    while True:
        if m == 0:
            break
        s = N_all @ x - d_all
        s_scaled = s / scale
        if active:
            s_scaled[active] = np.inf
        p = int(np.argmin(s_scaled))
        if s_scaled[p] >= -tol:
            break
        n_p = N_all[p]
        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise QPIterationLimitError("QP iteration limit reached")
            Hn = Hinv @ n_p
            if active:
                Na = N_all[active].T
                W = Hinv @ Na
                S = Na.T @ W
                r = np.linalg.solve(S, Na.T @ Hn)
                z = Hn - W @ r
            else:
                r = np.zeros(0)
                z = Hn
            t1, j_drop = np.inf, -1
            for idx, rj in enumerate(r):
                if rj > 1e-12:
                    ratio = lam[active[idx]] / rj
                    if ratio < t1:
                        t1, j_drop = ratio, idx
            zn = float(z @ n_p)
            s_p = float(n_p @ x - d_all[p])
            t2 = -s_p / zn if zn > 1e-14 * max(1.0, float(n_p @ Hn)) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasibleError("QP constraints are inconsistent")
            if np.isfinite(t2):
                x = x + t * z
                if not np.all(np.isfinite(x)):
                    raise QPInfeasibleError("QP step is not finite (degenerate active set)")
            for idx, a in enumerate(active):
                lam[a] -= t * r[idx]
            lam_p += t
            if t2 <= t1:
                lam[p] = lam_p
                active.append(p)
                break
            lam[active[j_drop]] = 0.0
            del active[j_drop]

    mult_g = np.zeros(n_general)
    mult_l = np.zeros(n)
    mult_u = np.zeros(n)
    for a in active:
        kind, i = kinds[a]
        if kind == "g":
            mult_g[i] = lam[a]
        elif kind == "l":
            mult_l[i] = lam[a]
        else:
            mult_u[i] = lam[a]
    obj = float(0.5 * x @ H @ x + g @ x)
    return QPResult(x, mult_g, mult_l, mult_u, iters, obj)
