"""
Mean-square state transition matrices and Kronecker helpers.

For the system x_{k+1} = A_k x_k + C_k x_k w_k, the stacked matrices
phi_{l,k} and psi_{l,k} of shape (2^{l-k} n, n) satisfy

    E |x_l|^2 = E |phi_{l,k} x_k|^2 = E |psi_{l,k} x_k|^2.

phi is built forwards (new factors act on the left of every block),
psi backwards (new factors act on the right). Both grow exponentially
and exist here for verification and small horizons; the production
analysis uses the n x n recursions in :mod:`ftstab.gramian`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SizeCapError
from .model import FtsSpec, StochasticSystem, ensure_valid
from .sdp import inv_sqrt_spd, sqrt_spd

__all__ = [
    "DEFAULT_ROW_CAP",
    "Kind",
    "TransitionMatrix",
    "ScaledSystem",
    "kronecker",
    "phi",
    "psi",
    "transition",
    "scaled",
    "block_quadratic",
    "weighted_gram_explicit",
]

DEFAULT_ROW_CAP = 2**20


class Kind(str, Enum):
    PHI = "phi"
    PSI = "psi"
    PHI_BAR = "phi-bar"
    PSI_BAR = "psi-bar"


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    l: int
    k: int
    kind: Kind
    data: np.ndarray

    @property
    def blocks(self):
        """View as ``(2^{l-k}, n, n)`` stacked blocks."""
        n = self.data.shape[1]
        return self.data.reshape(-1, n, n)


@dataclass(frozen=True, eq=False)
class ScaledSystem:
    """Coefficients of the system in the variable R_k^{1/2} x_k."""

    Abar: tuple
    Cbar: tuple
    sqrtR: tuple
    invSqrtR: tuple

    def as_system(self):
        return StochasticSystem(self.Abar, self.Cbar)


def kronecker(A, B):
    """Kronecker product; block ``(i, j)`` equals ``A[i, j] * B``."""
    return np.kron(np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_2d(np.asarray(B, dtype=float)))


def _check_size(sys, l, k, row_cap):
    if not 0 <= k <= l <= sys.T:
        raise ValueError(f"need 0 <= k <= l <= T={sys.T}, got l={l}, k={k}")
    rows = 2 ** (l - k) * sys.n
    if rows > row_cap:
        max_span = max(int(np.floor(np.log2(row_cap / sys.n))), 0)
        raise SizeCapError(
            f"phi/psi_{{{l},{k}}} needs {rows} rows, above the cap of {row_cap}; "
            f"reduce l-k from {l - k} to at most {max_span}"
        )


def phi(sys: StochasticSystem, l, k, row_cap=DEFAULT_ROW_CAP) -> TransitionMatrix:
    """Forward transition matrix: ``phi_{j+1,k} = [(I (x) A_j) phi_{j,k}; (I (x) C_j) phi_{j,k}]``."""
    _check_size(sys, l, k, row_cap)
    n = sys.n
    blocks = np.eye(n)[None]
    for j in range(k, l):
        blocks = np.concatenate([sys.A[j] @ blocks, sys.C[j] @ blocks])
    return TransitionMatrix(l, k, Kind.PHI, blocks.reshape(-1, n))


def psi(sys: StochasticSystem, l, k, row_cap=DEFAULT_ROW_CAP) -> TransitionMatrix:
    """Backward transition matrix: ``psi_{l,j} = [psi_{l,j+1} A_j; psi_{l,j+1} C_j]``."""
    _check_size(sys, l, k, row_cap)
    n = sys.n
    M = np.eye(n)
    for j in range(l - 1, k - 1, -1):
        M = np.concatenate([M @ sys.A[j], M @ sys.C[j]])
    return TransitionMatrix(l, k, Kind.PSI, M)


def scaled(sys: StochasticSystem, spec: FtsSpec) -> ScaledSystem:
    """Change of variable ``xbar_k = R_k^{1/2} x_k``.

    Raises :class:`~ftstab.errors.ConditioningError` when some R_k has
    ``lambda_min <= 1e-12 lambda_max``.
    """
    ensure_valid(sys, spec)
    roots = [sqrt_spd(R, f"R_{k}") for k, R in enumerate(spec.R)]
    inv_roots = [inv_sqrt_spd(R, f"R_{k}") for k, R in enumerate(spec.R)]
    Abar = [roots[j + 1] @ sys.A[j] @ inv_roots[j] for j in range(sys.T)]
    Cbar = [roots[j + 1] @ sys.C[j] @ inv_roots[j] for j in range(sys.T)]
    return ScaledSystem(tuple(Abar), tuple(Cbar), tuple(roots), tuple(inv_roots))


def transition(sys, l, k, kind=Kind.PHI, spec=None, row_cap=DEFAULT_ROW_CAP) -> TransitionMatrix:
    """Dispatch on ``kind``; the barred kinds need ``spec`` for the weights."""
    kind = Kind(kind)
    if kind in (Kind.PHI_BAR, Kind.PSI_BAR):
        if spec is None:
            raise ValueError(f"{kind.value} needs the weight sequence R")
        sys = scaled(sys, spec).as_system()
    build = phi if kind in (Kind.PHI, Kind.PHI_BAR) else psi
    out = build(sys, l, k, row_cap)
    return TransitionMatrix(out.l, out.k, kind, out.data)


def block_quadratic(M, W):
    """``M' (I (x) W) M`` for a stacked matrix M of n x n blocks, without forming I (x) W."""
    n = W.shape[0]
    blocks = np.asarray(M).reshape(-1, n, M.shape[1])
    return np.einsum("bij,ik,bkl->jl", blocks, W, blocks)


def weighted_gram_explicit(sys: StochasticSystem, spec: FtsSpec, k, row_cap=DEFAULT_ROW_CAP):
    """``phi_{k,0}' (I_{2^k} (x) R_k) phi_{k,0}`` from the explicit transition matrix."""
    ensure_valid(sys, spec)
    G = block_quadratic(phi(sys, k, 0, row_cap).data, spec.R[k])
    return 0.5 * (G + G.T)
