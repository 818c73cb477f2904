"""Certified two-sided bounds on equilibrium expectations and weighted
total-variation error, assembled from the censored approximation and a
verified drift certificate.

Bound shapes (all per return-cycle):

* singleton return set:  kl(r)/ku(e) <= pi r <= ku(r)/kl(e);
* general return set: the same ratios extremized over the mixture family of
  normalized ``(I - G)^{-1}`` rows, which contains every stationary vector
  compatible with the minorization G <= true return matrix;
* weighted total variation: twice the ratio-perturbation estimate built from
  the overflow weights, plus a stationary-gap term for non-singleton K.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from .censor import TauFamily, TruncationWorkspace
from .errors import CertificateError, NumericalError
from .lyapunov import BoundInputs


def kappa_upper(ws: TruncationWorkspace, inputs: BoundInputs, which: str) -> np.ndarray:
    """Upper bound on the full cycle reward over K.

    ``which`` selects the envelope reward ("r") or the unit reward ("e").
    Refuses unverified certificates: the overflow vectors are only valid
    once the drift inequalities have been checked.
    """
    if not inputs.verified:
        raise CertificateError("kappa_upper needs a verified certificate")
    if which == "r":
        return ws.kappa_lower(inputs.r_A * ws.unit_vec, key=f"env:{inputs.sha256}") \
            + ws.excursion_overflow(inputs.h1_A)
    if which == "e":
        return ws.kappa_lower(ws.unit_vec, key="__unit__") \
            + ws.excursion_overflow(inputs.h2_A)
    raise ValueError("which must be 'r' or 'e'")


def singleton_bounds(kl_r: np.ndarray, ku_r: np.ndarray,
                     kl_e: np.ndarray, ku_e: np.ndarray) -> tuple[float, float]:
    """Two-sided bounds on the equilibrium expectation for K = {z}."""
    if len(kl_r) != 1:
        raise ValueError("singleton bounds require a one-state return set")
    lower = float(kl_r[0] / ku_e[0])
    upper = float(ku_r[0] / kl_e[0])
    return lower, upper


def minorization_bounds(tau: TauFamily, kl_r: np.ndarray, ku_r: np.ndarray,
                        kl_e: np.ndarray, ku_e: np.ndarray) -> tuple[float, float]:
    """Bounds that extremize the cycle ratios over the mixture family."""
    den_hi = tau.dot(ku_e)
    den_lo = tau.dot(kl_e)
    if np.any(den_hi <= 0.0) or np.any(den_lo <= 0.0):
        raise NumericalError("nonpositive cycle-length denominator in mixture bounds")
    lower = float(tau.dot(kl_r).min() / den_hi.max())
    upper = float(tau.dot(ku_r).max() / den_lo.min())
    return lower, upper


def approx_error_bound(lower: float, upper: float, *, stochasticization: str) -> float:
    """Certified bound on |approximation - truth| for the row-normalized
    approximation: the width of the minorization interval, which brackets
    both quantities.  Invalid for the eigenvalue-twisted stochasticization,
    whose stationary vector may fall outside the mixture family."""
    if stochasticization != "row":
        raise CertificateError(
            "approximation-error bound is only certified for the row-normalized "
            "stochasticization"
        )
    return max(0.0, float(upper - lower))


def tv_bound_singleton(beta1_z: float, beta2_z: float, kl_e_z: float,
                       approx_r: float) -> float:
    """Weighted total-variation bound for K = {z}."""
    return 2.0 * max(beta1_z / kl_e_z, approx_r * beta2_z / kl_e_z)


def delta2_bound(tau: TauFamily) -> float:
    """L1 diameter of the mixture family: bounds the gap between the
    row-normalized stationary vector and the true censored stationary vector.

    When the family was assembled with a clamped denominator the rows carry
    an unresolvable spread below the rounding noise of their normalization,
    so the reported diameter is floored at a few ulps rather than claiming
    an accuracy the arithmetic cannot certify.
    """
    d = tau.l1_diameter()
    if tau.clamped:
        d = max(d, 8.0 * np.finfo(float).eps)
    return float(min(d, 2.0))


def delta1_bound(P1: np.ndarray, G: np.ndarray, F1: np.ndarray) -> float:
    """Perturbation bound on the stationary gap of the eigenvalue-twisted
    stochasticization, via the fundamental matrix."""
    if G.shape[0] == 1:
        return 0.0  # both laws are the same point mass
    delta = float(G.sum(axis=1).min())
    term1 = float(np.max(np.abs((P1 - G) @ F1).sum(axis=1)))
    term2 = max(0.0, 1.0 - delta) * float(np.max(np.abs(F1).sum(axis=1)))
    return term1 + term2


def ell_lower_bound(tau: TauFamily, kl_e: np.ndarray) -> float:
    """Computable lower bound on the true mean cycle length seen from the
    censored stationary vector.

    The censored stationary vector is a mixture of the tau rows and the full
    cycle length dominates its within-A part, so
    ``min_x tau_x . kl(e)`` under-estimates it.  This is the denominator of
    the general total-variation bound; it is isolated here because the
    choice is the one discretionary step of that bound.
    """
    val = float(tau.dot(kl_e).min())
    if val <= 0.0:
        raise NumericalError("cycle-length lower bound is nonpositive")
    return val


def tv_bound_general(pi_i: np.ndarray, beta1: np.ndarray, beta2: np.ndarray,
                     approx_r: float, delta_i: float,
                     ku_r: np.ndarray, ku_e: np.ndarray, ell: float) -> float:
    """Weighted total-variation bound for a general return set:
    ``2 * [pi_i.beta1 + approx * pi_i.beta2
           + delta_i (approx ||ku_e||_inf + ||ku_r||_inf)] / ell``."""
    if ell <= 0.0:
        raise NumericalError("nonpositive denominator in total-variation bound")
    eps = (float(pi_i @ beta1) + approx_r * float(pi_i @ beta2)) / ell \
        + delta_i * (approx_r * float(ku_e.max()) + float(ku_r.max())) / ell
    return 2.0 * eps


def weighted_tv(p: np.ndarray, q: np.ndarray, envelope: np.ndarray) -> float:
    """Exact weighted total-variation distance on a common finite support:
    the supremum over |f| <= envelope of the expectation gap."""
    return float(np.abs(p - q) @ envelope)


def combine_signed(pos: tuple[float, float], neg: tuple[float, float]) -> tuple[float, float]:
    """Interval for E[f+ - f-] from intervals for the two parts."""
    return pos[0] - neg[1], pos[1] - neg[0]


@dataclass
class BoundReport:
    """Everything one bound run certifies, with provenance."""

    reward_id: str
    method: str                  # "singleton" | "minorization"
    stochasticization: str       # "row" | "perron"
    lower: float
    upper: float
    approx: float
    tv_bound: float
    delta: float
    beta1: np.ndarray
    beta2: np.ndarray
    certified: bool              # interval certified (row-normalized route)
    envelope_id: str
    timings: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "reward": self.reward_id,
            "method": self.method,
            "stochasticization": self.stochasticization,
            "lower": self.lower,
            "upper": self.upper,
            "approx": self.approx,
            "tv_bound": self.tv_bound,
            "delta": self.delta,
            "beta1": np.asarray(self.beta1).tolist(),
            "beta2": np.asarray(self.beta2).tolist(),
            "certified": self.certified,
            "envelope": self.envelope_id,
            "timings": self.timings,
            "provenance": self.provenance,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def compute_bounds(ws: TruncationWorkspace, inputs: BoundInputs, *,
                   stochasticization: str = "row",
                   reward_id: str = "r") -> BoundReport:
    """Full bound assembly for the certificate's envelope reward.

    Produces the approximation, the two-sided expectation bounds (singleton
    route when K is a singleton, mixture route otherwise), the matching
    stationary-gap estimate, and the weighted total-variation guarantee.
    """
    if stochasticization not in ("row", "perron"):
        raise ValueError("stochasticization must be 'row' or 'perron'")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    unit = ws.unit_vec
    kl_r = ws.kappa_lower(inputs.r_A * unit, key=f"env:{inputs.sha256}")
    kl_e = ws.kappa_lower(unit, key="__unit__")
    beta1 = ws.excursion_overflow(inputs.h1_A)
    beta2 = ws.excursion_overflow(inputs.h2_A)
    if not inputs.verified:
        raise CertificateError("bounds require a verified certificate")
    ku_r = kl_r + beta1
    ku_e = kl_e + beta2
    timings["cycle_rewards"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ca = ws.censored()
    timings["censored_matrix"] = time.perf_counter() - t0

    if stochasticization == "row":
        _, pi_i = ca.row_normalized
    else:
        _, pi_i = ca.perron_normalized
    approx = float(pi_i @ kl_r) / float(pi_i @ kl_e)

    k = ws.k_size
    t0 = time.perf_counter()
    tau = ca.tau
    timings["mixture_family"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if k == 1:
        lower, upper = singleton_bounds(kl_r, ku_r, kl_e, ku_e)
        delta_i = 0.0
        tv = tv_bound_singleton(float(beta1[0]), float(beta2[0]), float(kl_e[0]), approx)
        method = "singleton"
        certified = True
    else:
        lower, upper = minorization_bounds(tau, kl_r, ku_r, kl_e, ku_e)
        if stochasticization == "row":
            delta_i = delta2_bound(tau)
        else:
            P1, _ = ca.perron_normalized
            delta_i = delta1_bound(P1, ca.G, ws.fundamental())
        ell = ell_lower_bound(tau, kl_e)
        tv = tv_bound_general(pi_i, beta1, beta2, approx, delta_i, ku_r, ku_e, ell)
        method = "minorization"
        # the mixture interval is certified only when the stochasticized
        # stationary vector provably lies in the mixture family (row route)
        certified = stochasticization == "row"
    timings["bounds"] = time.perf_counter() - t0

    scalars = (lower, upper, approx, tv, delta_i)
    if not all(np.isfinite(s) for s in scalars):
        raise NumericalError(f"non-finite bound report entries: {scalars}")

    return BoundReport(
        reward_id=reward_id,
        method=method,
        stochasticization=stochasticization,
        lower=lower,
        upper=upper,
        approx=approx,
        tv_bound=tv,
        delta=delta_i,
        beta1=beta1,
        beta2=beta2,
        certified=certified,
        envelope_id=inputs.envelope_id,
        timings=timings,
        provenance={
            "certificate_sha256": inputs.sha256,
            "k_size": ws.k_size,
            "a_size": ws.partition.a_size,
            "library_version": _pkg_version,
        },
    )


def reward_interval(ws: TruncationWorkspace, inputs: BoundInputs,
                    f_A: np.ndarray) -> tuple[float, float]:
    """Certified interval for the equilibrium expectation of a reward with
    |f| dominated by the certificate envelope; mixed signs are split into
    positive and negative parts and the part intervals combined."""
    if not inputs.verified:
        raise CertificateError("reward intervals require a verified certificate")
    if np.any(np.abs(f_A) > inputs.r_A * (1 + 1e-12) + 1e-15):
        raise CertificateError("reward is not dominated by the certificate envelope")
    unit = ws.unit_vec
    kl_e = ws.kappa_lower(unit, key="__unit__")
    ku_e = kl_e + ws.excursion_overflow(inputs.h2_A)
    beta1 = ws.excursion_overflow(inputs.h1_A)
    tau = ws.censored().tau

    def part_bounds(w_A: np.ndarray) -> tuple[float, float]:
        kl_w = ws.kappa_lower(w_A * unit)
        ku_w = kl_w + beta1
        if ws.k_size == 1:
            return singleton_bounds(kl_w, ku_w, kl_e, ku_e)
        return minorization_bounds(tau, kl_w, ku_w, kl_e, ku_e)

    pos = np.clip(f_A, 0.0, None)
    neg = np.clip(-f_A, 0.0, None)
    if not neg.any():
        return part_bounds(pos)
    if not pos.any():
        lo, hi = part_bounds(neg)
        return -hi, -lo
    return combine_signed(part_bounds(pos), part_bounds(neg))
