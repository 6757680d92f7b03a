"""Dense strictly convex QP solver, dual active-set method.

    min 1/2 x'Hx + f'x   s.t.   A x <= b

Starts from the unconstrained minimiser (always dual feasible), then pulls
in the most violated constraint one at a time, taking the exact dual step
that either activates it or drops a blocking constraint from the working
set.  Each intermediate iterate is the optimum of a relaxed problem, so no
phase-1 is needed and infeasibility is detected as dual unboundedness.

The Cholesky factor of H is computed once; the working-set geometry lives
in a QR factorisation of L^-1 N that is updated one column at a time
(scipy.linalg.qr_insert / qr_delete), never refactorised.  All ties are
broken by lowest constraint index, so the solve path is deterministic.

On exit with status "optimal" the iterate satisfies the KKT conditions
    H x* + f + A_act' lam = 0,   lam >= 0,   A x* <= b,
with the active set and multipliers reported in matching order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr, qr_delete, qr_insert, solve_triangular

__all__ = ["QpSolution", "solve_qp"]


@dataclass
class QpSolution:
    x_star: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "iteration-limit"
    iterations: int
    active_set: tuple = ()
    multipliers: np.ndarray | None = None


def _objective(H, f, x):
    return float(0.5 * x @ H @ x + f @ x)


def solve_qp(H, f, A=None, b=None, max_iter: int | None = None) -> QpSolution:
    """Solve the inequality-constrained QP; H must be positive definite."""
    H = np.atleast_2d(np.asarray(H, float))
    f = np.asarray(f, float).ravel()
    d = f.size
    if H.shape != (d, d):
        raise ValueError("H and f dimensions disagree")
    c, low = cho_factor(H, lower=True)
    L = np.tril(c)
    x = cho_solve((c, low), -f)

    if A is None or np.size(A) == 0:
        return QpSolution(x, _objective(H, f, x), "optimal", 0)
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float).ravel()
    m = A.shape[0]
    if A.shape[1] != d or b.size != m:
        raise ValueError("constraint dimensions disagree")
    if max_iter is None:
        max_iter = 50 * (d + m)

    # internal >= form: n_j' x >= beta_j with n_j = -a_j, beta_j = -b_j
    tol_feas = 1e-10 * (1.0 + np.max(np.abs(b)))

    active: list[int] = []
    lam = np.zeros(0)
    Q = np.eye(d)
    R = np.zeros((d, 0))
    iters = 0

    def insert_col(u):
        nonlocal Q, R
        if R.shape[1] == 0:
            Q, R = qr(u.reshape(-1, 1), mode="full")
        else:
            Q, R = qr_insert(Q, R, u, R.shape[1], which="col")

    def delete_col(k):
        nonlocal Q, R
        if R.shape[1] == 1:
            Q, R = np.eye(d), np.zeros((d, 0))
        else:
            Q, R = qr_delete(Q, R, k, which="col")

    while True:
        viol = A @ x - b
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= tol_feas:
            lam_full = lam.copy()
            return QpSolution(
                x, _objective(H, f, x), "optimal", iters,
                tuple(active), lam_full,
            )

        n_p = -A[p]
        g = solve_triangular(L, n_p, lower=True)
        lam_p = 0.0

        while True:
            iters += 1
            if iters > max_iter:
                return QpSolution(x, _objective(H, f, x), "iteration-limit",
                                  iters, tuple(active), lam.copy())
            q = len(active)
            if q:
                w1 = Q[:, :q].T @ g
                r = solve_triangular(R[:q, :], w1, lower=False)
                z = solve_triangular(L, Q[:, q:] @ (Q[:, q:].T @ g),
                                     lower=True, trans="T")
            else:
                r = np.zeros(0)
                z = solve_triangular(L, g, lower=True, trans="T")

            # n_p'z = ||Q2'g||^2 exactly, so ||g||^2 is its natural scale
            denom = float(n_p @ z)
            s_p = float(n_p @ x + b[p])  # n_p'x - beta_p, negative while violated
            has_step = denom > 1e-13 * max(float(g @ g), 1e-300)

            # dual blocking length
            t1, k_block = np.inf, -1
            if q:
                pos = r > 1e-13
                if np.any(pos):
                    ratios = np.where(pos, lam / np.where(pos, r, 1.0), np.inf)
                    k_block = int(np.argmin(ratios))
                    t1 = float(ratios[k_block])

            if not has_step and not np.isfinite(t1):
                # cannot restore feasibility of p: dual is unbounded
                return QpSolution(x, _objective(H, f, x), "infeasible",
                                  iters, tuple(active), lam.copy())
            t2 = (-s_p / denom) if has_step else np.inf
            t = min(t1, t2)

            if has_step:
                x = x + t * z
            if q:
                lam = lam - t * r
            lam_p += t

            if t2 <= t1:
                # full step: p joins the working set
                active.append(p)
                lam = np.append(lam, lam_p)
                insert_col(g)
                break
            # partial step: the blocking constraint leaves, try again
            active.pop(k_block)
            lam = np.delete(lam, k_block)
            delete_col(k_block)
