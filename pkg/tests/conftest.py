import itertools

import numpy as np


def brute_force_qp(H, f, A, b):
    """Reference QP optimum by enumerating every candidate active set.

    Returns (x, objective) or None when no subset yields a feasible KKT
    point (infeasible problem).  Exponential, for small oracle use only.
    """
    d = len(f)
    m = A.shape[0]
    best = None
    for k in range(0, min(m, d) + 1):
        for idx in itertools.combinations(range(m), k):
            Aa = A[list(idx)]
            KKT = np.block([[H, Aa.T], [Aa, np.zeros((k, k))]])
            rhs = np.concatenate([-f, b[list(idx)]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:d], sol[d:]
            if np.any(lam < -1e-9):
                continue
            if np.any(A @ x - b > 1e-8):
                continue
            obj = 0.5 * x @ H @ x + f @ x
            if best is None or obj < best[1] - 1e-12:
                best = (x, obj)
    return best
