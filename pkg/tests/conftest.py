"""Shared test fixtures: random hosts and independent dense oracles.

Every expected value in the suite comes either from a hand computation, a
published constant, or one of the brute-force oracles below; none of the
oracles share code paths with the library machinery they check.
"""

from __future__ import annotations

import numpy as np
import pytest

from truncbound import user_model
from truncbound.lyapunov import DriftCertificate, verify_certificate


def random_stochastic(rng: np.random.Generator, n: int, *, zeros: float = 0.4) -> np.ndarray:
    """Irreducible row-stochastic matrix with a controllable zero pattern."""
    P = rng.random((n, n)) ** 2
    mask = rng.random((n, n)) < zeros
    P[mask] = 0.0
    # a directed cycle keeps the chain irreducible whatever got zeroed
    for i in range(n):
        P[i, (i + 1) % n] += 0.05 + rng.random() * 0.1
    P /= P.sum(axis=1)[:, None]
    return P


def random_rate_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Irreducible conservative rate matrix with positive exit rates."""
    Q = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
    for i in range(n):
        Q[i, (i + 1) % n] += 0.2 + rng.random()
        Q[i, i] = 0.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def stationary_power(P: np.ndarray, squarings: int = 64) -> np.ndarray:
    """Stationary law by repeated squaring of the transition matrix."""
    M = P.copy()
    for _ in range(squarings):
        M = M @ M
        M /= M.sum(axis=1)[:, None]
    pi = M[0] / M[0].sum()
    return pi


def censored_matrix_oracle(P: np.ndarray, k: int) -> np.ndarray:
    """Exact return matrix on the leading k states, by dense Schur complement."""
    n = P.shape[0]
    P11 = P[:k, :k]
    P12 = P[:k, k:]
    P21 = P[k:, :k]
    P22 = P[k:, k:]
    return P11 + P12 @ np.linalg.solve(np.eye(n - k) - P22, P21)


def kappa_oracle(P: np.ndarray, k: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expected reward per return cycle, by the dense absorbing-chain solve.

    Returns the cycle rewards over the leading-k return set and the
    continuation values over its complement.
    """
    n = P.shape[0]
    B = P[k:, k:]
    eta = np.linalg.solve(np.eye(n - k) - B, w[k:])
    return w[:k] + P[:k, k:] @ eta, eta


def host_model(P: np.ndarray, name: str = "host"):
    n = P.shape[0]
    return user_model(
        lambda x: [(j, float(P[x, j])) for j in range(n) if P[x, j] != 0.0],
        seed=0,
        name=name,
        norm=lambda s: float(s),
        states_within=lambda rad: range(min(n, int(rad) + 1)),
        rewards={"r": lambda s: float(s), "e": lambda s: 1.0},
    )


def exact_certificate(P: np.ndarray, k: int, r: np.ndarray, model) -> "DriftCertificate":
    """Certificate whose functions solve the cycle-reward equations exactly.

    With these, the drift inequalities hold with equality on the complement
    of the return set and the upper cycle bounds coincide with the truth.
    """
    n = P.shape[0]
    _, eta_r = kappa_oracle(P, k, r)
    _, eta_e = kappa_oracle(P, k, np.ones(n))
    g1 = lambda x: 0.0 if x < k else float(eta_r[x - k])
    g2 = lambda x: 0.0 if x < k else float(eta_e[x - k])
    cert = DriftCertificate.pair(tuple(range(k)), lambda x: float(r[x]), g1, g2, n, n)
    return verify_certificate(model, cert, check_region=range(n), tolerance=1e-9)


def measured_weighted_tv(p: np.ndarray, q: np.ndarray, envelope: np.ndarray) -> float:
    return float(np.abs(p - q) @ envelope)


def partition_from_matrix(P_A: np.ndarray, k: int):
    """Hand-built partition over states 0..n-1 (K = first k) whose rows may be
    substochastic; the missing mass becomes a single exterior boundary entry.

    Lets tests build censored-matrix structures (e.g. genuinely reducible
    ones) that single-seed enumeration cannot reach.
    """
    import scipy.sparse as sp

    from truncbound.statespace import Partition, StateSpace

    n = P_A.shape[0]
    space = StateSpace(states=tuple(range(n)), k_size=k)
    boundary = []
    for i in range(n):
        missing = 1.0 - float(P_A[i].sum())
        boundary.append((("ext", missing),) if missing > 1e-15 else ())
    P = sp.csr_matrix(P_A)
    return Partition(
        space=space,
        P11=P[:k, :k].tocsr(),
        P12=P[:k, k:].tocsr(),
        P21=P[k:, :k].tocsr(),
        P22=P[k:, k:].tocsr(),
        boundary=tuple(boundary),
        unit=np.ones(n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
