"""Censored-chain approximation pipeline.

Everything here is built from the within-A blocks only.  The computable
census of return behaviour is the substochastic matrix

    G = P11 + P12 (I - P22)^{-1} P21,

whose (x, y) entry is the probability that the chain started at x in K
re-enters K at y without leaving A.  G underestimates the true return
matrix of the watched-on-K chain; all approximations and bounds flow from
it and from inexpensive solves against the same (I - P22) factorization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import IrreducibilityError, ModelError, NumericalError
from .linalg import (
    SubstochasticSolver,
    fundamental_matrix,
    is_irreducible,
    perron_eigenpair,
    stationary_small,
    strongly_connected_components,
)
from .statespace import Partition

ROW_SUM_SLACK = 1e-12
RHS_CHUNK = 256


class TauFamily:
    """Normalized rows of ``(I - G)^{-1}``: the extreme points of the set of
    stationary vectors compatible with the minorization ``G <= P_K``.

    Built through the deleted-state reformulation: one state ``z`` (the row
    of largest mass) is removed, systems are solved against the well
    conditioned ``(I - G_hat)``, and the removed row/column is recombined.
    The common scale factor ``1/D`` cancels in every normalized quantity, so
    rows stay accurate even when ``I - G`` is nearly singular.  ``D`` is the
    leak-before-return probability at ``z``; it is clamped to zero when it
    falls below the cancellation noise floor (the leak is then unresolvable
    in double precision and all rows coincide).
    """

    def __init__(self, rows: np.ndarray, z_index: int, denominator: float,
                 clamped: bool):
        self.rows = rows
        self.z_index = z_index
        self.denominator = denominator
        self.clamped = clamped

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    def dot(self, v: np.ndarray) -> np.ndarray:
        """Vector of mixture expectations ``tau_x . v`` over x in K."""
        return self.rows @ v

    def l1_diameter(self) -> float:
        """``max_{x,y} sum_z |tau_x(z) - tau_y(z)|`` (exhaustive pairwise)."""
        k = self.size
        if k == 1:
            return 0.0
        d = 0.0
        for i in range(k):
            d = max(d, float(np.abs(self.rows - self.rows[i]).sum(axis=1).max()))
        return d


def _tau_stable(G: np.ndarray, z: int) -> TauFamily:
    k = G.shape[0]
    if k == 1:
        return TauFamily(np.ones((1, 1)), 0, float(1.0 - G[0, 0]), False)
    keep = np.array([i for i in range(k) if i != z])
    Ghat = G[np.ix_(keep, keep)]
    try:
        W = np.linalg.inv(np.eye(k - 1) - Ghat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"(I - G_hat) inversion failed: {exc}") from exc
    chi = G[keep, z]
    u = W @ chi                       # P_x(reach z before leaking), x != z
    gz = G[z, keep]
    ret = float(G[z, z] + gz @ u)     # P_z(return to z before leaking)
    D = 1.0 - ret
    noise = 64.0 * np.finfo(float).eps * (1.0 + abs(G[z, z]) + float(np.abs(gz) @ np.abs(u)))
    if D < -noise:
        raise NumericalError(
            f"deleted-state denominator {D:.3e} is negative beyond the noise "
            f"floor {noise:.3e}; the censored matrix is super-stochastic"
        )
    # a denominator inside the cancellation band is numerically zero: keeping
    # it would inject noise-level spread into the rows, so collapse to the
    # leak-free limit instead (all rows equal)
    clamped = D < noise
    Dc = 0.0 if clamped else D
    # scaled inverse rows: D * (I - G)^{-1}; the scale cancels on normalization
    N = np.zeros(k)
    N[z] = 1.0
    N[keep] = gz @ W
    S = np.zeros((k, k))
    S[np.ix_(keep, keep)] = Dc * W
    S[keep, :] += np.outer(u, N)
    S[z, :] = N
    sums = S.sum(axis=1)
    if np.any(sums <= 0.0):
        raise NumericalError("nonpositive row sum in mixture-family assembly")
    rows = S / sums[:, None]
    np.clip(rows, 0.0, None, out=rows)
    rows /= rows.sum(axis=1)[:, None]
    return TauFamily(rows, z, D, clamped)


def tau_family_direct(G: np.ndarray) -> np.ndarray:
    """Reference path: normalized rows of a dense ``(I - G)^{-1}``.

    Only trustworthy when ``I - G`` is well conditioned; used for
    cross-validation of the deleted-state path.
    """
    k = G.shape[0]
    M = np.linalg.inv(np.eye(k) - G)
    sums = M.sum(axis=1)
    if np.any(sums <= 0.0):
        raise NumericalError("direct (I - G)^{-1} has a nonpositive row sum")
    return M / sums[:, None]


@dataclass
class CensoredApprox:
    """The censored matrix with its stochasticizations and mixture family."""

    G: np.ndarray
    row_mass: np.ndarray            # n(x) = sum_y G(x, y)

    @property
    def min_return_mass(self) -> float:
        return float(self.row_mass.min())

    @cached_property
    def row_normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-normalized stochasticization ``P2 = G / n`` with its stationary vector."""
        if np.any(self.row_mass <= 0.0):
            bad = int(np.argmin(self.row_mass))
            raise ModelError(
                f"K state at index {bad} cannot reach K again inside A "
                "(zero censored row sum); enlarge A or shrink K"
            )
        P2 = self.G / self.row_mass[:, None]
        pi2 = stationary_small(P2)
        return P2, pi2

    @cached_property
    def perron_normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalue-twisted stochasticization ``P1(x,y) = G(x,y) h(y) / (lam h(x))``."""
        pe = perron_eigenpair(self.G)
        lam, nu, h = pe.value, pe.left, pe.right
        P1 = self.G * h[None, :] / (lam * h[:, None])
        pi1 = nu * h
        pi1 = pi1 / pi1.sum()
        resid = np.max(np.abs(pi1 @ P1 - pi1))
        if resid > 1e-10:
            raise NumericalError(f"Perron stationary residual {resid:.3e}")
        return P1, pi1

    @cached_property
    def tau(self) -> TauFamily:
        z = int(np.argmax(self.row_mass))  # ties break to the lowest index
        return _tau_stable(self.G, z)


@dataclass
class ConditionedChain:
    """Dynamics conditioned on returning to K before exiting A."""

    u: np.ndarray                    # P_x(return to K before exit), x in A
    s_prime: np.ndarray              # A-indices with u > 0
    s_closed: np.ndarray             # A-indices of the closed class containing K
    R: sp.csr_matrix                 # transition matrix over s_prime
    pi3: np.ndarray                  # stationary of R on the closed class, over all of A


class TruncationWorkspace:
    """Shared factorizations and caches for one (K, A) partition."""

    def __init__(self, partition: Partition, *, require_irreducible: bool = True):
        self.partition = partition
        self.solver = SubstochasticSolver(partition.P22)
        self.require_irreducible = require_irreducible
        self._kappa_cache: dict = {}
        self._censored: CensoredApprox | None = None

    @property
    def k_size(self) -> int:
        return self.partition.k_size

    @property
    def unit_vec(self) -> np.ndarray:
        return self.partition.unit

    def _split(self, w_A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.k_size
        return w_A[:k], w_A[k:]

    def kappa_lower(self, w_A: np.ndarray, key: str | None = None) -> np.ndarray:
        """Within-A part of the expected reward per K-cycle:
        ``w1 + P12 (I - P22)^{-1} w2`` over K.  Cheap lower bound for the
        full cycle reward; exact when A covers the whole space."""
        if key is not None and key in self._kappa_cache:
            return self._kappa_cache[key]
        w1, w2 = self._split(np.asarray(w_A, dtype=float))
        out = w1 + self.partition.P12 @ self.solver.solve(w2)
        if key is not None:
            self._kappa_cache[key] = out
        return out

    def excursion_overflow(self, h_A: np.ndarray) -> np.ndarray:
        """Per-state bound on the reward mass the truncation cannot see:
        ``h1 + P12 (I - P22)^{-1} h2`` over K, from a boundary-overflow h."""
        return self.kappa_lower(h_A)

    def censored_matrix(self) -> np.ndarray:
        return self.censored().G

    def censored(self) -> CensoredApprox:
        if self._censored is not None:
            return self._censored
        part = self.partition
        k = self.k_size
        P21 = part.P21.toarray()
        X = np.empty_like(P21)
        for lo in range(0, k, RHS_CHUNK):
            hi = min(lo + RHS_CHUNK, k)
            X[:, lo:hi] = self.solver.solve(P21[:, lo:hi]) if P21.size else P21[:, lo:hi]
        G = part.P11.toarray() + (part.P12 @ X if X.size else 0.0)
        np.clip(G, 0.0, None, out=G)  # solver noise only; true entries are nonnegative
        mass = G.sum(axis=1)
        if np.any(mass > 1.0 + ROW_SUM_SLACK):
            raise NumericalError(
                f"censored row mass {mass.max()!r} exceeds 1 beyond tolerance"
            )
        if self.require_irreducible and not is_irreducible(G):
            raise IrreducibilityError(
                "censored matrix is reducible: some K states cannot reach each "
                "other through paths inside A; the bound construction requires "
                "an irreducible censored matrix (choose K and A accordingly)"
            )
        self._censored = CensoredApprox(G=G, row_mass=mass)
        return self._censored

    # -- approximations ----------------------------------------------------

    def approx_expectation(self, pi_K: np.ndarray, w_A: np.ndarray) -> float:
        """Ratio approximation of the equilibrium expectation of ``w``."""
        u = self.unit_vec
        num = float(pi_K @ self.kappa_lower(w_A * u))
        den = float(pi_K @ self.kappa_lower(u, key="__unit__"))
        return num / den

    def approx_distribution(self, pi_K: np.ndarray) -> np.ndarray:
        """Induced equilibrium approximation over A (zero off A by construction)."""
        part = self.partition
        k = self.k_size
        rhs = np.asarray(pi_K @ part.P12.toarray()) if part.P12.shape[1] else np.zeros(0)
        v = self.solver.solve(rhs, transpose=True) if rhs.size else rhs
        eta = np.concatenate([pi_K, v]) * self.unit_vec
        total = eta.sum()
        if total <= 0.0:
            raise NumericalError("degenerate occupation mass in approx_distribution")
        return eta / total

    def exit_approximation(self, z_state) -> np.ndarray:
        """Occupation-before-exit approximation seeded at ``z``.

        Solves ``nu (I - H) = delta_z`` with H the whole within-A block and
        normalizes.  With a singleton return set K = {z} this coincides with
        ``approx_distribution`` exactly.
        """
        part = self.partition
        z = part.space.index_of(z_state)
        H = part.full_matrix()
        solver = SubstochasticSolver(H)
        delta = np.zeros(part.a_size)
        delta[z] = 1.0
        nu = solver.solve(delta, transpose=True)
        nu = nu * self.unit_vec
        total = nu.sum()
        if total <= 0.0:
            raise NumericalError("exit approximation has nonpositive total mass")
        return nu / total

    def return_probability(self) -> np.ndarray:
        """``u(x) = P_x(return to K before exiting A)`` over all of A."""
        part = self.partition
        ones_k = np.ones(self.k_size)
        u2 = self.solver.solve(np.asarray(part.P21 @ ones_k)) if part.a_prime_size else np.zeros(0)
        u1 = np.asarray(part.P11 @ ones_k) + (np.asarray(part.P12 @ u2) if u2.size else 0.0)
        return np.concatenate([u1, u2])

    def conditioned_chain(self) -> ConditionedChain:
        """Chain conditioned on K-return before exit, with its stationary law."""
        part = self.partition
        u = self.return_probability()
        sel = np.flatnonzero(u > 0.0)
        pos = {int(i): j for j, i in enumerate(sel)}
        k = self.k_size
        P = part.full_matrix()[sel, :].tocoo()
        data, ri, ci = [], [], []
        for i, j, p in zip(P.row, P.col, P.data):
            gi = int(sel[i])
            jj = int(j)
            if jj < k:
                # K states sit at the front of A and have u > 0 whenever the
                # censored matrix is irreducible, so pos[jj] exists
                ri.append(int(i))
                ci.append(pos[jj])
                data.append(p / u[gi])
            elif jj in pos:
                ri.append(int(i))
                ci.append(pos[jj])
                data.append(p * u[jj] / u[gi])
        R = sp.csr_matrix((data, (ri, ci)), shape=(len(sel), len(sel)))
        n_comp, labels = strongly_connected_components(R)
        closed = _closed_components(R, n_comp, labels)
        k_labels = {int(labels[pos[i]]) for i in range(k)}
        closed_with_k = [c for c in closed if c in k_labels]
        if len(closed_with_k) != 1 or k_labels - set(closed_with_k):
            raise IrreducibilityError(
                "conditioned chain does not have a single closed class containing K"
            )
        cls = closed_with_k[0]
        members = np.flatnonzero(labels == cls)
        Rc = R[np.ix_(members, members)].tocsr()
        pi = stationary_small(Rc)
        pi3 = np.zeros(part.a_size)
        pi3[sel[members]] = pi
        return ConditionedChain(
            u=u,
            s_prime=sel,
            s_closed=sel[members],
            R=R,
            pi3=pi3,
        )

    def communicating_classes(self) -> dict:
        """Diagnostic decomposition of the censored matrix into communicating
        classes with closed/transient labels; warns when more than one closed
        class is present (the underlying chain is then likely reducible)."""
        if self._censored is not None:
            G = self._censored.G
        else:
            # run without the irreducibility gate: this op is the diagnostic;
            # a reducible result must not be cached for the certified paths
            saved = self.require_irreducible
            self.require_irreducible = False
            try:
                G = self.censored().G
            finally:
                self.require_irreducible = saved
                if saved and not is_irreducible(G):
                    self._censored = None
        n_comp, labels = strongly_connected_components(G)
        closed = _closed_components(sp.csr_matrix(G), n_comp, labels)
        if len(closed) > 1:
            warnings.warn(
                f"censored matrix has {len(closed)} closed communicating classes; "
                "the underlying chain appears reducible",
                stacklevel=2,
            )
        return {
            "n_components": n_comp,
            "labels": labels,
            "closed": sorted(closed),
            "transient": sorted(set(range(n_comp)) - set(closed)),
        }

    def fundamental(self) -> np.ndarray:
        P1, pi1 = self.censored().perron_normalized
        return fundamental_matrix(P1, pi1)


def _closed_components(M: sp.csr_matrix, n_comp: int, labels: np.ndarray) -> list[int]:
    closed = []
    coo = M.tocoo()
    outflow = set()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        if v != 0.0 and labels[i] != labels[j]:
            outflow.add(int(labels[i]))
    for c in range(n_comp):
        if c not in outflow:
            closed.append(c)
    return closed


def compute_G(partition: Partition) -> np.ndarray:
    """One-shot censored matrix for a partition (workspace-free convenience)."""
    return TruncationWorkspace(partition).censored_matrix()


def stochasticize_row(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a substochastic censored matrix; returns (P2, pi2)."""
    ca = CensoredApprox(G=np.asarray(G, dtype=float), row_mass=np.asarray(G).sum(axis=1))
    return ca.row_normalized


def stochasticize_pf(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue-twist a substochastic censored matrix; returns (P1, pi1)."""
    ca = CensoredApprox(G=np.asarray(G, dtype=float), row_mass=np.asarray(G).sum(axis=1))
    return ca.perron_normalized


def tau_family(G: np.ndarray, z_star: int | None = None) -> TauFamily:
    """Mixture family of a raw censored matrix via the deleted-state path.

    ``z_star`` defaults to the row of largest mass (ties to the lowest index).
    """
    G = np.asarray(G, dtype=float)
    mass = G.sum(axis=1)
    z = int(np.argmax(mass)) if z_star is None else int(z_star)
    return _tau_stable(G, z)
