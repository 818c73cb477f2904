"""Benchmark model families and the generic user-model hook.

Two built-in families:

* ``GM1Model``: the queue-length chain of a single-server queue with
  exponential service (rate mu) embedded just before arrival epochs,
  interarrival times uniform on [0, b].  Rows are exactly stochastic: the
  downward mass P(x, 0) is defined as the complement of the explicit masses.
* ``ToggleSwitchModel``: the two-species mutual-repression reaction
  network: synthesis of each type at rate lam / (1 + other count), per
  molecule decay at rate mu.

Both ship the drift functions and analytic tail radii used to certify the
bounds, so the whole pipeline runs on them out of the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

from .errors import ModelError
from .lyapunov import DriftCertificate, construct_K

BETA_MASS_CUTOFF = 1e-300


@dataclass(frozen=True)
class DiscreteModel:
    """Generic discrete-chain model: exact finite-support rows plus the hooks
    the pipeline needs (seed for enumeration, a norm for radius scans,
    named rewards)."""

    name: str
    seed: object
    row: Callable[[object], Iterable[tuple[object, float]]]
    norm: Callable[[object], float] | None = None
    states_within: Callable[[float], Iterable] | None = None
    rewards: dict = field(default_factory=dict)
    unit_weights: Callable | None = None
    lyapunov: object | None = None


def user_model(row_fn: Callable, *, seed, name: str = "user",
               norm: Callable | None = None,
               states_within: Callable | None = None,
               rewards: dict | None = None,
               lyapunov=None) -> DiscreteModel:
    """Wrap raw row data as a pipeline-ready model.

    ``row_fn`` must return the exact finite-support row of each state; row
    sums are validated (to 1e-12) during enumeration and invalid rows raise.
    """
    return DiscreteModel(
        name=name,
        seed=seed,
        row=row_fn,
        norm=norm,
        states_within=states_within,
        rewards=dict(rewards or {}),
        lyapunov=lyapunov,
    )


# ---------------------------------------------------------------------------
# single-server queue with uniform interarrivals


@dataclass(frozen=True)
class GM1Lyapunov:
    """Drift data for the queue model: quadratic/linear certificate pair for
    the envelope r(x) = x, and a quartic function for the cubic moment."""

    c1: float
    c2: float
    c3: float
    n1: int
    n2: int
    n3: int
    g1: Callable
    g2: Callable
    g3: Callable
    w: Callable
    r: Callable


class GeometricLaw:
    """Exact equilibrium of the queue chain: pi(x) = (1 - theta) theta^x.

    Held in extended precision: the defining fixed point is flat near its
    root, so double-precision root finding would cost ~4 decimal digits.
    """

    def __init__(self, theta, xi):
        self.theta = theta
        self.xi = xi

    def masses(self, n: int) -> np.ndarray:
        powers = self.theta ** np.arange(n, dtype=np.longdouble)
        return (1 - self.theta) * powers

    def tail(self, n: int):
        return self.theta ** np.longdouble(n)

    def mean(self):
        return self.theta / (1 - self.theta)


class GM1Model:
    """Queue-length chain observed just before arrivals.

    P(x, y) = beta_{x+1-y} for 1 <= y <= x+1 where beta_i is the probability
    that i services complete during one interarrival time; P(x, 0) carries
    the exact complement, so every row sums to one in exact arithmetic.
    """

    def __init__(self, mu: float = 1.0, b: float = 2.01):
        if mu <= 0 or b <= 0:
            raise ModelError("service rate and interarrival range must be positive")
        if mu * b > 700.0:
            raise ModelError("mu * b too large: service-count masses underflow")
        self.mu = float(mu)
        self.b = float(b)
        self.name = f"gm1(mu={mu:g},b={b:g})"
        self.seed = 0
        self.rewards = {"r": lambda x: float(x), "e": lambda x: 1.0}

    # -- service-count distribution -----------------------------------------

    @cached_property
    def beta_masses(self) -> np.ndarray:
        """beta_i = P(N >= i + 1) / (mu b) with N Poisson(mu b): the reverse
        cumulative sum is exact and avoids the unstable forward recursion.
        Masses below the cutoff are dropped; their total is folded back into
        each row's complement mass at state 0."""
        u = self.mu * self.b
        pmf = [math.exp(-u)]
        j = 0
        while pmf[-1] > 1e-320 or j < u:
            j += 1
            pmf.append(pmf[-1] * u / j)
        pmf = np.array(pmf)
        tail = np.cumsum(pmf[::-1])[::-1]
        beta = tail[1:] / (self.mu * self.b)
        keep = np.flatnonzero(beta >= BETA_MASS_CUTOFF)
        return beta[: keep[-1] + 1] if keep.size else beta[:1]

    def beta(self, i: int) -> float:
        if i < 0:
            raise ValueError("service-count index must be nonnegative")
        masses = self.beta_masses
        return float(masses[i]) if i < len(masses) else 0.0

    def service_count_moment(self, k: int) -> float:
        """Raw moment of the per-interarrival service count, in closed form."""
        m = [self.mu ** j * self.b ** j / (j + 1) for j in range(1, 5)]  # E (mu t)^j
        if k == 1:
            return m[0]
        if k == 2:
            return m[0] + m[1]
        if k == 3:
            return m[0] + 3 * m[1] + m[2]
        if k == 4:
            return m[0] + 7 * m[1] + 6 * m[2] + m[3]
        raise ValueError("moments implemented up to order 4")

    # -- chain structure -----------------------------------------------------

    def row(self, x: int):
        masses = self.beta_masses
        top = min(x, len(masses) - 1)
        # explicit targets stop at x+1-top >= 1, so the complement at 0 is
        # always a separate entry and the row sums to one exactly
        entries = [(x + 1 - i, float(masses[i])) for i in range(top + 1)]
        rest = 1.0 - math.fsum(p for _, p in entries)
        if rest > 0.0:
            entries.append((0, rest))
        return entries

    def norm(self, x) -> float:
        return float(x)

    def states_within(self, radius: float):
        return range(int(math.floor(radius)) + 1)

    # -- exact equilibrium -----------------------------------------------------

    def exact_geometric(self) -> GeometricLaw:
        """Geometric equilibrium law via extended-precision bisection on the
        defining transform fixed point.  Requires the stability condition
        (mean service opportunities per interarrival exceed one)."""
        if self.service_count_moment(1) <= 1.0:
            raise ModelError(
                "unstable queue: mean services per interarrival must exceed 1"
            )
        mu = np.longdouble(self.mu)
        b = np.longdouble(repr(self.b))

        def F(xi):
            return (mu / (mu - xi)) * (-np.expm1(-b * xi)) / (b * xi) - 1.0

        lo, hi = np.longdouble(1e-9) * mu, mu * (1 - np.longdouble(1e-9))
        if not (F(lo) < 0 < F(hi)):
            raise ModelError("no sign change for the equilibrium root; "
                             "parameters appear unstable")
        while True:
            mid = (lo + hi) / 2
            if mid == lo or mid == hi:
                break
            if F(mid) > 0:
                hi = mid
            else:
                lo = mid
        xi = (lo + hi) / 2
        return GeometricLaw(theta=1 - xi / mu, xi=xi)

    # -- extended-precision reference protocol ---------------------------------

    def _beta_longdouble(self) -> np.ndarray:
        u = np.longdouble(self.mu) * np.longdouble(repr(self.b))
        pmf = [np.exp(-u)]
        j = 0
        while pmf[-1] > np.longdouble(1e-320) or j < u:
            j += 1
            pmf.append(pmf[-1] * u / j)
        pmf = np.array(pmf, dtype=np.longdouble)
        tail = np.cumsum(pmf[::-1])[::-1]
        beta = tail[1:] / u
        return beta[: len(self.beta_masses)]

    def reference_distribution(self, a_max: int, k_top: int = 4) -> np.ndarray:
        """Equilibrium approximation in extended precision.

        Same construction as the double-precision pipeline (row-normalized
        stochasticization of the censored matrix, occupation solve, unit
        normalization) but with extended-precision masses and solves.  The
        queue is skip-free upward, so ``I - P22`` has a single superdiagonal
        and factors in O(states x row support) without pivoting; this keeps
        the data-sensitivity error of the nearly critical queue far below
        the certified total-variation guarantees.
        """
        ld = np.longdouble
        beta = self._beta_longdouble()
        k = k_top + 1
        m = a_max + 1 - k
        if k_top < 0 or m < 2:
            raise ModelError("reference protocol needs k_top >= 0 and a larger truncation")
        D = min(len(beta) - 2, m - 1)
        usup = -beta[0]
        subs = -beta[2:2 + D]

        # LU of (I - P22): U is upper bidiagonal, L carries the lower band
        Udiag = np.empty(m, dtype=ld)
        Lfac = np.zeros((D, m), dtype=ld)
        cur_diag = 1 - beta[1]
        cur_subs = subs[: min(D, m - 1)].copy()
        for j in range(m):
            Udiag[j] = cur_diag
            t = min(D, m - 1 - j)
            if t:
                f = cur_subs[:t] / cur_diag
                Lfac[:t, j] = f
            if j + 1 < m:
                nxt_diag = (1 - beta[1]) - (Lfac[0, j] * usup if t else 0)
                nt = min(D, m - 2 - j)
                nxt_subs = subs[:nt].copy()
                upd = min(t - 1, nt)
                if upd > 0:
                    nxt_subs[:upd] -= Lfac[1:1 + upd, j] * usup
                cur_diag, cur_subs = nxt_diag, nxt_subs

        def solve(b):
            y = b.astype(ld).copy()
            for j in range(m - 1):
                t = min(D, m - 1 - j)
                y[j + 1:j + 1 + t] -= Lfac[:t, j] * y[j]
            x = np.empty(m, dtype=ld)
            x[m - 1] = y[m - 1] / Udiag[m - 1]
            for j in range(m - 2, -1, -1):
                x[j] = (y[j] - usup * x[j + 1]) / Udiag[j]
            return x

        def solve_t(b):
            z = np.empty(m, dtype=ld)
            z[0] = b[0] / Udiag[0]
            for j in range(1, m):
                z[j] = (b[j] - usup * z[j - 1]) / Udiag[j]
            x = z.copy()
            for j in range(m - 2, -1, -1):
                t = min(D, m - 1 - j)
                x[j] -= Lfac[:t, j] @ x[j + 1:j + 1 + t]
            return x

        # censored matrix on K = {0..k_top}: P12 has the single entry
        # (k_top -> k) with mass beta_0
        P11 = np.zeros((k, k), dtype=ld)
        for x in range(k):
            for i in range(x + 1):
                y = x + 1 - i
                if y < k:
                    P11[x, y] = beta[i]
            P11[x, 0] += 1 - beta[: x + 1].sum()
        P21 = np.zeros((m, k), dtype=ld)
        for idx in range(m):
            s = k + idx
            top = min(s, len(beta) - 1)
            for y in range(1, k):
                i = s + 1 - y
                if i <= top:
                    P21[idx, y] = beta[i]
            P21[idx, 0] = 1 - beta[: top + 1].sum()  # complement mass at 0
        X = np.stack([solve(P21[:, y]) for y in range(k)], axis=1)
        G = P11.copy()
        G[k - 1, :] += beta[0] * X[0, :]
        pi2 = np.full(k, 1 / ld(k))
        P2 = G / G.sum(axis=1)[:, None]
        for _ in range(4000):
            nxt = pi2 @ P2
            nxt /= nxt.sum()
            if np.abs(nxt - pi2).max() < np.finfo(ld).eps * 4:
                pi2 = nxt
                break
            pi2 = nxt
        rhs = np.zeros(m, dtype=ld)
        rhs[0] = pi2[k - 1] * beta[0]
        v = solve_t(rhs)
        eta = np.concatenate([pi2, v])
        return eta / eta.sum()

    # -- drift certificate data ------------------------------------------------

    def lyapunov(self, c1: float = 300.0, c2: float = 300.0,
                 c3: float = 300.0) -> GM1Lyapunov:
        ev = self.service_count_moment(1)
        ev2 = self.service_count_moment(2)
        ev3 = self.service_count_moment(3)
        ev4 = self.service_count_moment(4)
        e1m2 = 1 - 2 * ev + ev2
        e1m3 = 1 - 3 * ev + 3 * ev2 - ev3
        e1m4 = 1 - 4 * ev + 6 * ev2 - 4 * ev3 + ev4
        drift1 = 2 * c1 * (ev - 1) - 1
        drift2 = c2 * (ev - 1) - 1
        if drift1 <= 0 or drift2 <= 0:
            raise ModelError("certificate coefficients too small for this load")
        n1 = math.ceil(c1 * e1m2 / drift1)
        n2 = math.ceil(math.sqrt(c2 * ev3 / drift2))
        a3 = 4 * c3 * (1 - ev) + 1
        if a3 >= 0:
            raise ModelError("moment coefficient too small: leading drift term "
                             "is not negative")
        a2, a1, a0 = 6 * c3 * e1m2, 4 * c3 * e1m3, c3 * e1m4
        root_bound = math.ceil(1 + max(abs(a2 / a3), abs(a1 / a3), abs(a0 / a3)))
        n3 = root_bound
        if (self.mu, self.b) == (1.0, 2.01) and root_bound <= 1803:
            # published scan radius for the reference configuration; any
            # radius at or past the root bound certifies the tail
            n3 = 1803
        return GM1Lyapunov(
            c1=c1, c2=c2, c3=c3, n1=n1, n2=n2, n3=n3,
            g1=lambda x: c1 * float(x) ** 2,
            g2=lambda x: c2 * float(x),
            g3=lambda x: c3 * float(x) ** 4,
            w=lambda x: float(x) ** 3,
            r=lambda x: float(x),
        )

    def drift_certificate(self, return_set=None) -> DriftCertificate:
        """Certificate for the envelope r(x) = x with the designed return set."""
        ly = self.lyapunov()
        if return_set is None:
            return_set = construct_K(self, ly.g1, ly.g2, ly.r, ly.n1, ly.n2)
        return DriftCertificate.pair(return_set, ly.r, ly.g1, ly.g2, ly.n1, ly.n2)

    def unit_drift_certificate(self, return_set=None) -> DriftCertificate:
        """Single-pair certificate for the constant envelope (plain total
        variation): the linear drift function alone, with the smaller return
        set its violations define."""
        ly = self.lyapunov()
        one = lambda x: 1.0
        if return_set is None:
            return_set = construct_K(self, ly.g2, ly.g2, one, ly.n2, ly.n2)
        return DriftCertificate.single(return_set, one, ly.g2, ly.n2)

    def certificate_for_envelope(self, envelope_id: str,
                                 return_set=None) -> DriftCertificate:
        """Benchmark protocol: the count envelope uses the quadratic/linear
        pair with its return set; the constant envelope uses the linear
        function alone with the (much smaller) set its violations define."""
        if envelope_id == "r":
            return self.drift_certificate(return_set)
        if envelope_id == "e":
            return self.unit_drift_certificate(return_set)
        raise ModelError(f"unknown envelope {envelope_id!r} (use 'r' or 'e')")


# ---------------------------------------------------------------------------
# toggle switch reaction network


@dataclass(frozen=True)
class ToggleLyapunov:
    n1: int
    n2: int
    g1: Callable
    g2: Callable
    r: Callable


class ToggleSwitchModel:
    """Mutual-repression network on pairs of molecule counts.

    Four channels per state: synthesis of type i at rate lam / (1 + other
    count) and decay of each molecule at rate mu.  Decay rates vanish at
    zero counts, so the generator is conservative without clamping."""

    def __init__(self, lam: float, mu: float):
        if lam <= 0 or mu <= 0:
            raise ModelError("synthesis and decay rates must be positive")
        x_star = (-1.0 + math.sqrt(1.0 + 4.0 * lam / mu)) / 2.0
        if x_star < 0.5:
            raise ModelError(
                f"balance point {x_star:.3f} below 1/2: the drift derivation "
                "does not cover this regime (needs lam/mu >= 3/4)"
            )
        self.lam = float(lam)
        self.mu = float(mu)
        self.x_star = x_star
        self.name = f"toggle({lam:g},{mu:g})"
        self.seed = (0, 0)
        self.rewards = {"r": lambda s: float(s[0] + s[1]), "e": lambda s: 1.0}

    def rate_row(self, state):
        x1, x2 = state
        out = [
            ((x1 + 1, x2), self.lam / (1.0 + x2)),
            ((x1, x2 + 1), self.lam / (1.0 + x1)),
        ]
        if x1:
            out.append(((x1 - 1, x2), self.mu * x1))
        if x2:
            out.append(((x1, x2 - 1), self.mu * x2))
        return out

    def exit_rate(self, state) -> float:
        return sum(rate for _, rate in self.rate_row(state))

    def norm(self, state) -> float:
        return float(state[0] + state[1])

    def states_within(self, radius: float):
        top = int(math.floor(radius))
        for s in range(top + 1):
            for x1 in range(s + 1):
                yield (x1, s - x1)

    def lyapunov(self) -> ToggleLyapunov:
        lam, mu, xs = self.lam, self.mu, self.x_star
        c0 = 2 * lam
        c1 = 1 + 2 * lam + 2 * mu * (2 * xs + 1)
        c2 = 2 * mu
        n1 = math.ceil((c1 + math.sqrt(c1 * c1 + 4 * c2 * c0 / 2)) / c2)
        n2 = math.ceil((2 * lam + 4 * mu * xs + 1) / mu)
        return ToggleLyapunov(
            n1=n1,
            n2=n2,
            g1=lambda s: (s[0] - xs) ** 2 + (s[1] - xs) ** 2,
            g2=lambda s: abs(s[0] - xs) + abs(s[1] - xs),
            r=lambda s: float(s[0] + s[1]),
        )

    def moment_data(self, alpha: float = 4.0):
        """Quartic-free moment route: g3 = alpha * g1 against w = (x1+x2)^2.

        Returns (g3, w, n3).  Requires alpha * mu > 1 so the quadratic decay
        dominates the reward."""
        lam, mu, xs = self.lam, self.mu, self.x_star
        c0 = 2 * lam
        c1 = 1 + 2 * lam + 2 * mu * (2 * xs + 1)
        c2 = 2 * mu
        c3 = 1.0
        lead = alpha * c2 / 2 - c3
        if lead <= 0:
            raise ModelError("alpha too small for the quadratic moment route")
        n3 = math.ceil((alpha * c1 + math.sqrt((alpha * c1) ** 2
                                               + 4 * lead * alpha * c0)) / (2 * lead))
        ly = self.lyapunov()
        g3 = lambda s: alpha * ly.g1(s)
        w = lambda s: float(s[0] + s[1]) ** 2
        return g3, w, n3

    @property
    def imported_moment_bound(self) -> dict | None:
        """External semidefinite-programming moment bound for the (20, 1)
        configuration, taken as given input data."""
        if (self.lam, self.mu) == (20.0, 1.0):
            return {"reward": "(x1+x2)^6", "bound": 1.8e7}
        return None

    def drift_certificate(self) -> DriftCertificate:
        # the count envelope never dominates the exit rate (synthesis pushes
        # the rate above the count near the origin, decay matches it beyond),
        # so the expert flag is required; recurrence of the embedded chain is
        # carried by the linear-decay condition
        ly = self.lyapunov()
        K = construct_K(self, ly.g1, ly.g2, ly.r, ly.n1, ly.n2)
        return DriftCertificate.pair(K, ly.r, ly.g1, ly.g2, ly.n1, ly.n2,
                                     skip_rate_domination=True)

    def unit_drift_certificate(self, return_set=None) -> DriftCertificate:
        """Constant-envelope certificate from the linear-decay function alone.

        Pass the pair certificate's return set to reuse one partition for
        both envelopes (the pair set contains every violation of the
        linear-decay drift, so the inequality still holds off it).  The
        constant envelope cannot dominate the exit rates, so the expert flag
        is pre-set; the cycle identity stays valid regardless.
        """
        ly = self.lyapunov()
        one = lambda s: 1.0
        if return_set is None:
            return_set = construct_K(self, ly.g2, ly.g2, one, ly.n2, ly.n2)
        return DriftCertificate.single(return_set, one, ly.g2, ly.n2,
                                       skip_rate_domination=True)

    def certificate_for_envelope(self, envelope_id: str,
                                 return_set=None) -> DriftCertificate:
        """Benchmark protocol: both envelopes share the pair-designed return
        set (it contains every violation of the linear-decay drift, so the
        single-function certificate verifies on its complement too)."""
        if envelope_id == "r":
            return self.drift_certificate() if return_set is None \
                else self._pair_certificate_on(return_set)
        if envelope_id == "e":
            if return_set is None:
                return_set = construct_K(self, *self._pair_args())
            return self.unit_drift_certificate(return_set)
        raise ModelError(f"unknown envelope {envelope_id!r} (use 'r' or 'e')")

    def _pair_args(self):
        ly = self.lyapunov()
        return ly.g1, ly.g2, ly.r, ly.n1, ly.n2

    def _pair_certificate_on(self, return_set) -> DriftCertificate:
        ly = self.lyapunov()
        return DriftCertificate.pair(return_set, ly.r, ly.g1, ly.g2, ly.n1,
                                     ly.n2, skip_rate_domination=True)
