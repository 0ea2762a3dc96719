"""
Domain types for linear discrete time-varying stochastic systems

    x_{k+1} = A_k x_k + C_k x_k w_k                      (open loop)
    x_{k+1} = A_k x_k + B_k u_k + (C_k x_k + D_k u_k) w_k (controlled)

with scalar noise, E w_k = 0, E w_k w_j = delta_kj, together with the
finite-time stability requirement (c1, c2, T, {R_k}) and the JSON file
format used by the command-line tool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError

__all__ = [
    "StochasticSystem",
    "ControlledSystem",
    "FtsSpec",
    "FeedbackLaw",
    "NoiseModel",
    "Problem",
    "validate",
    "ensure_valid",
    "closed_loop",
    "load_problem",
    "parse_problem",
    "load_gains",
    "gains_to_dict",
    "matrix_to_json",
]

SYMMETRY_RTOL = 1e-12


def _frozen(seq, ndim=2, name="matrix"):
    out = []
    for M in seq:
        a = np.array(M, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != ndim:
            raise ValidationError([f"{name}: expected {ndim}-D entries, got shape {a.shape}"])
        a.setflags(write=False)
        out.append(a)
    return tuple(out)


def _finite(mats):
    return all(np.all(np.isfinite(M)) for M in mats)


@dataclass(frozen=True, eq=False)
class StochasticSystem:
    """Open-loop coefficient sequences ``A[k], C[k]`` for k = 0..T-1."""

    A: tuple
    C: tuple

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, name="A"))
        object.__setattr__(self, "C", _frozen(self.C, name="C"))

    @property
    def n(self):
        return self.A[0].shape[0] if self.A else 0

    @property
    def T(self):
        return len(self.A)

    def problems(self):
        out = []
        if self.T == 0:
            return ["horizon T must be positive"]
        n = self.n
        if len(self.C) != self.T:
            out.append(f"C has {len(self.C)} matrices, expected T={self.T}")
        for name, seq in (("A", self.A), ("C", self.C)):
            for k, M in enumerate(seq):
                if M.shape != (n, n):
                    out.append(f"{name}_{k} has shape {M.shape}, expected {(n, n)}")
        if not _finite(self.A + self.C):
            out.append("non-finite coefficient entries")
        return out

    def perturbed(self, eps):
        """The system with ``A_k + eps I`` and ``C_k + eps I``."""
        I = np.eye(self.n)
        return StochasticSystem([a + eps * I for a in self.A], [c + eps * I for c in self.C])


@dataclass(frozen=True, eq=False)
class ControlledSystem:
    """Coefficient sequences of the controlled system, k = 0..T-1."""

    A: tuple
    B: tuple
    C: tuple
    D: tuple

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _frozen(getattr(self, name), name=name))

    @property
    def n(self):
        return self.A[0].shape[0] if self.A else 0

    @property
    def m(self):
        return self.B[0].shape[1] if self.B else 0

    @property
    def T(self):
        return len(self.A)

    def problems(self):
        if self.T == 0:
            return ["horizon T must be positive"]
        out = []
        n, m, T = self.n, self.m, self.T
        for name, shape in (("A", (n, n)), ("B", (n, m)), ("C", (n, n)), ("D", (n, m))):
            seq = getattr(self, name)
            if len(seq) != T:
                out.append(f"{name} has {len(seq)} matrices, expected T={T}")
            for k, M in enumerate(seq):
                if M.shape != shape:
                    out.append(f"{name}_{k} has shape {M.shape}, expected {shape}")
        if not _finite(self.A + self.B + self.C + self.D):
            out.append("non-finite coefficient entries")
        return out

    def open_loop(self):
        return StochasticSystem(self.A, self.C)


@dataclass(frozen=True, eq=False)
class FtsSpec:
    """Finite-time stability requirement ``(c1, c2, T, {R_k})``.

    ``R`` has T+1 entries, k = 0..T. Weights whose asymmetry is below
    1e-12 (relative) are symmetrized on construction; larger asymmetry is
    kept and reported by :func:`validate`.
    """

    c1: float
    c2: float
    R: tuple

    def __post_init__(self):
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "c2", float(self.c2))
        mats = []
        for M in _frozen(self.R, name="R"):
            if M.shape[0] == M.shape[1] and np.all(np.isfinite(M)):
                asym = np.abs(M - M.T).max(initial=0.0)
                if 0 < asym <= SYMMETRY_RTOL * max(np.abs(M).max(), 1e-300):
                    M = 0.5 * (M + M.T)
                    M.setflags(write=False)
            mats.append(M)
        object.__setattr__(self, "R", tuple(mats))

    @property
    def T(self):
        return len(self.R) - 1

    @property
    def ratio(self):
        return self.c2 / self.c1

    def problems(self):
        out = []
        if not (self.c1 > 0):
            out.append("c1 must be positive")
        if not (self.c2 > 0):
            out.append("c2 must be positive")
        if self.c1 > 0 and self.c2 > 0 and not self.c1 <= self.c2:
            out.append("c1 <= c2 fails")
        if len(self.R) < 2:
            out.append("R must hold T+1 >= 2 matrices")
        for k, M in enumerate(self.R):
            if M.shape[0] != M.shape[1]:
                out.append(f"R_{k} is not square")
                continue
            if not np.all(np.isfinite(M)):
                out.append(f"R_{k} has non-finite entries")
                continue
            if np.abs(M - M.T).max(initial=0.0) > SYMMETRY_RTOL * max(np.abs(M).max(), 1e-300):
                out.append(f"R_{k} not symmetric")
                continue
            if np.linalg.eigvalsh(M)[0] <= 0:
                out.append(f"R_{k} not positive definite")
        return out

    def with_identity_weights(self):
        n = self.R[0].shape[0]
        return FtsSpec(self.c1, self.c2, [np.eye(n)] * len(self.R))


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """State-feedback gains ``u_k = K[k] x_k`` for k = 0..T-1."""

    K: tuple

    def __post_init__(self):
        object.__setattr__(self, "K", _frozen(self.K, name="K"))

    @property
    def T(self):
        return len(self.K)

    @classmethod
    def zero(cls, csys: ControlledSystem):
        return cls([np.zeros((csys.m, csys.n))] * csys.T)


class NoiseModel(str, Enum):
    """Distribution of the scalar noise; both have mean 0, variance 1."""

    STANDARD_NORMAL = "standard-normal"
    RADEMACHER = "rademacher"


AnySystem = Union[StochasticSystem, ControlledSystem]


def validate(system: AnySystem, spec: FtsSpec):
    """List every violated invariant of ``system`` and ``spec``.

    An empty list means the pair is usable. Nothing is raised and nothing
    is modified.
    """
    out = list(system.problems()) + spec.problems()
    if system.T and len(spec.R) != system.T + 1:
        out.append(f"R has {len(spec.R)} matrices, expected T+1={system.T + 1}")
    n = system.n
    for k, M in enumerate(spec.R):
        if M.shape != (n, n):
            out.append(f"R_{k} has shape {M.shape}, expected {(n, n)}")
            break
    return out


def ensure_valid(system: AnySystem, spec: FtsSpec):
    problems = validate(system, spec)
    if problems:
        raise ValidationError(problems)


def closed_loop(csys: ControlledSystem, law: FeedbackLaw) -> StochasticSystem:
    """Apply ``u_k = K_k x_k``: returns ``(A_k + B_k K_k, C_k + D_k K_k)``."""
    if law.T != csys.T:
        raise ValidationError([f"feedback law has {law.T} gains, system horizon is {csys.T}"])
    A, C = [], []
    for k, K in enumerate(law.K):
        if K.shape != (csys.m, csys.n):
            raise ValidationError([f"K_{k} has shape {K.shape}, expected {(csys.m, csys.n)}"])
        if np.any(K):
            A.append(csys.A[k] + csys.B[k] @ K)
            C.append(csys.C[k] + csys.D[k] @ K)
        else:
            A.append(csys.A[k])
            C.append(csys.C[k])
    return StochasticSystem(A, C)


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a system-definition file describes."""

    system: AnySystem
    spec: FtsSpec
    x0: Optional[np.ndarray] = None
    source: Optional[str] = None

    @property
    def open_loop(self) -> StochasticSystem:
        s = self.system
        return s.open_loop() if isinstance(s, ControlledSystem) else s

    @property
    def controlled(self):
        return isinstance(self.system, ControlledSystem)


def _matrix_seq(doc, key, length, period, required=True):
    if key not in doc:
        if required:
            raise ValidationError([f"field '{key}': missing"])
        return None
    raw = doc[key]
    if not isinstance(raw, list) or not raw:
        raise ValidationError([f"field '{key}': expected a non-empty array of matrices"])
    try:
        mats = [np.array(M, dtype=float) for M in raw]
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"field '{key}': {exc}"]) from None
    mats = [M.reshape(1, 1) if M.ndim == 0 else M for M in mats]
    for i, M in enumerate(mats):
        if M.ndim != 2:
            raise ValidationError([f"field '{key}[{i}]': expected array of rows, got {M.ndim}-D"])
    if period is not None:
        if len(mats) != period:
            raise ValidationError([f"field '{key}': {len(mats)} matrices, expected period={period}"])
        mats = [mats[k % period] for k in range(length)]
    elif len(mats) != length:
        raise ValidationError([f"field '{key}': {len(mats)} matrices, expected {length}"])
    return mats


def _positive_int(doc, key):
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
        raise ValidationError([f"field '{key}': expected a positive integer, got {v!r}"])
    return v


def parse_problem(doc, source=None) -> Problem:
    """Build a :class:`Problem` from an already-decoded JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError(["top level: expected a JSON object"])
    n = _positive_int(doc, "n")
    T = _positive_int(doc, "T")
    period = _positive_int(doc, "period") if "period" in doc else None
    A = _matrix_seq(doc, "A", T, period)
    C = _matrix_seq(doc, "C", T, period)
    B = _matrix_seq(doc, "B", T, period, required=False)
    D = _matrix_seq(doc, "D", T, period, required=False)
    R = _matrix_seq(doc, "R", T + 1, period)
    for key in ("c1", "c2"):
        if not isinstance(doc.get(key), (int, float)) or isinstance(doc.get(key), bool):
            raise ValidationError([f"field '{key}': expected a number"])
    if (B is None) != (D is None):
        raise ValidationError(["fields 'B' and 'D' must be given together"])
    if B is not None:
        system = ControlledSystem(A, B, C, D)
        if "m" in doc and _positive_int(doc, "m") != system.m:
            raise ValidationError([f"field 'm': {doc['m']} disagrees with B columns {system.m}"])
    else:
        system = StochasticSystem(A, C)
    spec = FtsSpec(doc["c1"], doc["c2"], R)
    problems = validate(system, spec)
    if system.n != n:
        problems.insert(0, f"field 'n': {n} disagrees with A_0 shape {system.A[0].shape}")
    if problems:
        raise ValidationError(problems)
    x0 = None
    if doc.get("x0") is not None:
        x0 = np.array(doc["x0"], dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ValidationError([f"field 'x0': length {x0.size}, expected {n}"])
        x0.setflags(write=False)
    return Problem(system, spec, x0, source)


def load_problem(path) -> Problem:
    """Read and validate a system-definition JSON file.

    Raises
    ------
    OSError
        The file cannot be read.
    json.JSONDecodeError
        Malformed JSON (carries line and column).
    ValidationError
        The document is well-formed but violates the schema or invariants.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_problem(doc, source=str(path))


def matrix_to_json(M):
    return np.asarray(M, dtype=float).tolist()


def gains_to_dict(law: FeedbackLaw):
    return {"K": [matrix_to_json(K) for K in law.K]}


def load_gains(path) -> FeedbackLaw:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "K" not in doc:
        raise ValidationError(["gains file: missing field 'K'"])
    try:
        return FeedbackLaw([np.array(K, dtype=float) for K in doc["K"]])
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"gains file: field 'K': {exc}"]) from None
