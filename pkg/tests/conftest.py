"""Shared fixtures: deterministic random systems and the acceptance summary hook."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from ftstab.model import ControlledSystem, FtsSpec, StochasticSystem

DATA = Path(__file__).resolve().parents[1] / "data"

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def random_spd(rng, n, spread=1.0):
    G = rng.uniform(-1, 1, (n, n))
    return G.T @ G * spread + 0.5 * np.eye(n)


def random_system(rng, n, T, scale=1.0):
    A = [scale * rng.uniform(-1, 1, (n, n)) for _ in range(T)]
    C = [scale * rng.uniform(-1, 1, (n, n)) for _ in range(T)]
    return StochasticSystem(A, C)


def random_weights(rng, n, T):
    return [random_spd(rng, n) for _ in range(T + 1)]


def random_corpus(count=200, seed=20240601, max_n=3, max_T=6):
    """``count`` (system, spec) pairs with entries U[-1, 1] and random SPD weights."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        T = int(rng.integers(1, max_T + 1))
        sys = random_system(rng, n, T)
        c1 = float(rng.uniform(0.5, 2.0))
        spec = FtsSpec(c1, c1 * float(rng.uniform(1.0, 50.0)), random_weights(rng, n, T))
        out.append((sys, spec))
    return out


def scalar_system(a_seq, c_seq):
    return StochasticSystem([[[a]] for a in a_seq], [[[c]] for c in c_seq])


def scalar_controlled(a, b, c, d, T):
    return ControlledSystem([[[a]]] * T, [[[b]]] * T, [[[c]]] * T, [[[d]]] * T)


def rel_err(X, Y):
    X, Y = np.asarray(X), np.asarray(Y)
    return float(np.linalg.norm(X - Y) / max(np.linalg.norm(Y), np.finfo(float).tiny))


@pytest.fixture(scope="session")
def corpus():
    return random_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda c: (int(c[0]), c)):
        ok, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}")
