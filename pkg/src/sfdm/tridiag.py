"""Tridiagonal solvers for the implicit Fokker-Planck steps.

Single systems go through LAPACK (``scipy.linalg.solve_banded``). Batches of
equally sized systems, as produced by a dimension-wise split step in 2D, use
a vectorized Thomas algorithm whose elimination factors are computed once and
reused for every right-hand side.
"""

import numpy as np
from scipy.linalg import solve_banded

from .errors import LinearSolveFailure


def solve(lower, diag, upper, rhs):
    """Solve one tridiagonal system.

    ``lower`` and ``upper`` have length ``n - 1``; ``lower[i]`` multiplies
    ``x[i]`` in row ``i + 1`` and ``upper[i]`` multiplies ``x[i + 1]`` in row ``i``.
    """
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    x = solve_banded((1, 1), ab, rhs, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("tridiagonal solve produced non-finite values")
    return x


class BatchedThomas:
    """Pre-factored Thomas algorithm for a batch of tridiagonal systems.

    Coefficient arrays have shape ``(batch, n)`` for the diagonal and
    ``(batch, n - 1)`` for the off-diagonals. No pivoting is done, which is
    safe for the diagonally dominant M-matrices of implicit drift-diffusion
    steps.
    """

    def __init__(self, lower, diag, upper):
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        diag = np.atleast_2d(np.asarray(diag, dtype=float))
        upper = np.atleast_2d(np.asarray(upper, dtype=float))
        n = diag.shape[-1]
        self.n = n
        self.lower = lower
        cp = np.empty_like(upper)
        inv = np.empty_like(diag)
        inv[:, 0] = 1.0 / diag[:, 0]
        for i in range(n - 1):
            cp[:, i] = upper[:, i] * inv[:, i]
            inv[:, i + 1] = 1.0 / (diag[:, i + 1] - lower[:, i] * cp[:, i])
        self.cp = cp
        self.inv = inv

    def solve(self, rhs):
        """Solve for a right-hand side of shape ``(batch, n)``."""
        d = np.array(rhs, dtype=float, copy=True)
        n = self.n
        d[:, 0] *= self.inv[:, 0]
        for i in range(1, n):
            d[:, i] = (d[:, i] - self.lower[:, i - 1] * d[:, i - 1]) * self.inv[:, i]
        for i in range(n - 2, -1, -1):
            d[:, i] -= self.cp[:, i] * d[:, i + 1]
        if not np.all(np.isfinite(d)):
            raise LinearSolveFailure("batched tridiagonal solve produced non-finite values")
        return d
