"""Drift certificates: verification, return-set construction, overflow vectors.

A certificate consists of two nonnegative functions (one paired with the
envelope reward, one with the constant reward), the finite return set K on
which their one-step drift inequalities are allowed to fail, and per-model
analytic radii beyond which the inequalities are certified by hand.  The
library re-verifies the finite region numerically; the tail is model data.

Exterior overflow vectors h are computed with equality from the finite row
support (they are the only place the complement of A ever enters).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import CertificateError, ModelError, NumericalError
from .statespace import Partition


def _is_jump(model) -> bool:
    return hasattr(model, "rate_row")


def drift_excess(model, g: Callable, slack: Callable, x, exclude=frozenset()) -> float:
    """One-step drift surplus at ``x``; nonpositive means the inequality holds.

    Discrete chains:  sum_{y not in K} P(x,y) g(y) - g(x) + slack(x).
    Jump processes:   sum_{y not in K} Q(x,y) g(y) + slack(x), diagonal included.
    """
    if _is_jump(model):
        acc = 0.0
        lam = 0.0
        for y, rate in model.rate_row(x):
            lam += rate
            if y not in exclude:
                acc += rate * float(g(y))
        if x not in exclude:
            acc -= lam * float(g(x))
        return acc + float(slack(x))
    acc = 0.0
    for y, p in model.row(x):
        if y not in exclude:
            acc += p * float(g(y))
    gx = float(g(x))
    if not np.isfinite(gx) or not np.isfinite(acc):
        raise NumericalError(f"certificate function not finite at state {x!r}")
    return acc - gx + float(slack(x))


@dataclass(frozen=True)
class DriftReport:
    checked: int
    violations: tuple
    worst_margin: float   # max drift surplus over non-violating states (<= 0 when verified)

    @property
    def verified(self) -> bool:
        return not self.violations


def verify_drift(model, g: Callable, slack: Callable, K: Sequence,
                 check_region, *, tolerance: float = 0.0) -> DriftReport:
    """Numerically check the drift inequality on ``check_region`` minus K.

    Returns the sorted list of violating states; an empty list means the
    inequality holds everywhere it was checked.  The analytic tail (outside
    the model's certified radius) is the model's responsibility.

    ``tolerance`` is a relative slack for the equality case: certificate
    functions that solve the cycle-reward equation exactly sit on the drift
    boundary, where roundoff makes the surplus sign arbitrary.
    """
    k_set = frozenset(K)
    violations = []
    worst = -np.inf
    checked = 0
    for x in check_region:
        if x in k_set:
            continue
        checked += 1
        surplus = drift_excess(model, g, slack, x, exclude=k_set)
        allow = tolerance * (1.0 + abs(float(g(x))) + abs(float(slack(x))))
        if surplus > allow:
            violations.append(x)
        else:
            worst = max(worst, surplus)
    return DriftReport(checked=checked, violations=tuple(sorted(violations)),
                       worst_margin=float(worst))


def construct_K(model, g1: Callable, g2: Callable, r: Callable,
                n1: int, n2: int) -> tuple:
    """Return set: every state inside the certified ball where either drift
    inequality fails with an empty exclusion set.

    Outside radius ``max(n1, n2)`` the model certifies both inequalities
    analytically, so the resulting K satisfies the drift assumption on its
    complement by construction.
    """
    radius = max(n1, n2)
    ball = list(model.states_within(radius))
    if not ball:
        raise ModelError("empty candidate ball for return-set construction")
    K = [
        x for x in ball
        if drift_excess(model, g1, r, x) > 0.0
        or drift_excess(model, g2, lambda _: 1.0, x) > 0.0
    ]
    if len(K) == len(ball):
        raise CertificateError(
            "drift inequalities fail on the whole candidate ball; the supplied "
            "certificate functions cannot produce a finite return set"
        )
    if not K:
        warnings.warn("no drift violations found; return set is empty", stacklevel=2)
    return tuple(sorted(K))


@dataclass(frozen=True)
class DriftCertificate:
    """Certificate data for one envelope reward.

    ``g_r`` drifts against the envelope, ``g_e`` against the constant reward.
    ``single_pair`` marks the shortcut g_r = g_e verified against
    ``max(r, 1)``.  ``skip_rate_domination`` is the expert escape hatch for
    jump processes whose envelope does not dominate the exit rates (the
    ratio identity still holds; positive recurrence of the embedded chain is
    then uncertified).

    ``h_r`` / ``h_e`` optionally supply analytic upper bounds on the exterior
    overflow for models whose rows cannot be summed exactly; by default the
    overflow is computed with equality from the boundary rows.
    """

    return_set: tuple
    envelope: Callable
    g_r: Callable
    g_e: Callable
    radius_r: int
    radius_e: int
    single_pair: bool = False
    skip_rate_domination: bool = False
    h_r: Callable | None = None
    h_e: Callable | None = None
    verified: bool = False
    reports: tuple = ()

    @classmethod
    def pair(cls, return_set, envelope, g_r, g_e, radius_r, radius_e, **kw):
        return cls(tuple(return_set), envelope, g_r, g_e, int(radius_r),
                   int(radius_e), **kw)

    @classmethod
    def single(cls, return_set, envelope, g, radius, **kw):
        return cls(tuple(return_set), envelope, g, g, int(radius), int(radius),
                   single_pair=True, **kw)


def verify_certificate(model, cert: DriftCertificate, *, check_region=None,
                       tolerance: float = 0.0) -> DriftCertificate:
    """Re-verify the finite region of a certificate; returns a verified copy.

    Raises :class:`CertificateError` listing violations when the check fails.
    For jump models with a non-dominating envelope (r < exit rate somewhere)
    an error is raised unless the expert flag is set on the certificate.
    """
    if cert.single_pair:
        slack_r = lambda x: max(float(cert.envelope(x)), 1.0)
        pairs = [(cert.g_r, slack_r, max(cert.radius_r, cert.radius_e))]
    else:
        pairs = [
            (cert.g_r, cert.envelope, cert.radius_r),
            (cert.g_e, lambda _: 1.0, cert.radius_e),
        ]
    reports = []
    for g, slack, radius in pairs:
        region = check_region if check_region is not None else model.states_within(radius)
        rep = verify_drift(model, g, slack, cert.return_set, region, tolerance=tolerance)
        reports.append(rep)
        if rep.violations:
            sample = list(rep.violations[:8])
            raise CertificateError(
                f"drift inequality fails outside the return set at {len(rep.violations)} "
                f"states, e.g. {sample}"
            )
    if cert.single_pair:
        reports = reports * 2
    if _is_jump(model):
        bad = _rate_domination_violations(model, cert)
        if bad and not cert.skip_rate_domination:
            raise CertificateError(
                f"envelope does not dominate the exit rate at {len(bad)} states, "
                f"e.g. {bad[:5]}; positive recurrence of the embedded chain is "
                "uncertified (set skip_rate_domination=True to proceed anyway)"
            )
        if bad:
            warnings.warn(
                "envelope does not dominate the exit rate on "
                f"{len(bad)} states; proceeding on the expert flag: the cycle "
                "identity stays valid, embedded-chain positive recurrence is "
                "certified only through the unit-drift condition",
                stacklevel=2,
            )
    return replace(cert, verified=True, reports=tuple(reports))


def _rate_domination_violations(model, cert: DriftCertificate, margin: int = 0) -> list:
    radius = max(cert.radius_r, cert.radius_e) + margin
    bad = []
    for x in model.states_within(radius):
        lam = sum(rate for _, rate in model.rate_row(x))
        if float(cert.envelope(x)) < lam * (1.0 - 1e-12):
            bad.append(x)
    return bad


@dataclass(frozen=True)
class BoundInputs:
    """Certificate evaluated over a concrete partition: the vectors the bound
    assembly consumes.  ``r_A`` is the raw envelope; ``h1_A``/``h2_A`` are the
    exact exterior overflows of the two certificate functions."""

    envelope_id: str
    r_A: np.ndarray
    h1_A: np.ndarray
    h2_A: np.ndarray
    verified: bool
    sha256: str = ""
    skip_rate_domination: bool = False


def evaluate_certificate(cert: DriftCertificate, partition: Partition,
                         *, envelope_id: str = "r") -> BoundInputs:
    """Evaluate a verified certificate over a partition (exact h from the
    boundary rows) and fingerprint it for provenance."""
    if not cert.verified:
        raise CertificateError("certificate must be verified before evaluation")
    for x in cert.return_set:
        if not partition.space.in_k(x):
            raise CertificateError(
                f"certificate return set does not match the partition (state {x!r})"
            )
    if len(cert.return_set) != partition.k_size:
        raise CertificateError("certificate return set does not match the partition")
    r_A = partition.evaluate(cert.envelope)
    h1 = _overflow(partition, cert.g_r, cert.h_r)
    if cert.single_pair and cert.h_e is cert.h_r:
        h2 = h1
    else:
        h2 = _overflow(partition, cert.g_r if cert.single_pair else cert.g_e, cert.h_e)
    payload = certificate_payload(cert, partition, r_A, h1, h2)
    sha = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return BoundInputs(
        envelope_id=envelope_id,
        r_A=r_A,
        h1_A=h1,
        h2_A=h2,
        verified=True,
        sha256=sha,
        skip_rate_domination=cert.skip_rate_domination,
    )


def _overflow(partition: Partition, g: Callable, bound_fn: Callable | None) -> np.ndarray:
    """Exterior overflow vector: exact from the boundary rows, or the
    model-supplied upper bound (checked against the exact value where the
    row support allows)."""
    exact = partition.boundary_overflow(g)
    if bound_fn is None:
        return exact
    h = partition.evaluate(bound_fn)
    slack = 1e-12 * (1.0 + np.abs(exact))
    if np.any(h < exact - slack):
        raise CertificateError("supplied overflow bound falls below the exact overflow")
    return h


def certificate_payload(cert: DriftCertificate, partition: Partition,
                        r_A: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> dict:
    """JSON-compatible record of the certificate over A, for replayable runs."""
    space = partition.space
    g1_A = partition.evaluate(cert.g_r)
    g2_A = g1_A if cert.single_pair else partition.evaluate(cert.g_e)
    return {
        "kind": "drift-certificate",
        "radii": {"envelope": cert.radius_r, "unit": cert.radius_e},
        "single_pair": cert.single_pair,
        "return_set": [_state_key(s) for s in cert.return_set],
        "states": [_state_key(s) for s in space.states],
        "envelope": r_A.tolist(),
        "g_envelope": g1_A.tolist(),
        "g_unit": g2_A.tolist(),
        "h_envelope": h1.tolist(),
        "h_unit": h2.tolist(),
    }


def _state_key(s):
    if isinstance(s, tuple):
        return list(s)
    return s


def moment_bound(model, g3: Callable, w: Callable, core_radius: int) -> float:
    """Equilibrium moment bound: with the drift of ``g3`` against ``w``
    certified outside the core, the stationary expectation of ``w`` is at
    most the largest drift surplus inside it."""
    best = 0.0
    for x in model.states_within(core_radius):
        surplus = drift_excess(model, g3, w, x)
        if not np.isfinite(surplus):
            raise NumericalError(f"moment drift surplus not finite at {x!r}")
        best = max(best, surplus)
    return float(best)


@dataclass(frozen=True)
class MomentCertificate:
    """A certified stationary moment: E w <= bound, with the core radius the
    numerical scan covered (drift holds analytically beyond it)."""

    bound: float
    core_radius: int

    def tail_bound(self, level: float) -> float:
        """Guaranteed stationary mass of ``{w < level}``."""
        return tail_mass_bound(self.bound, level)


def moment_certificate(model, g3: Callable, w: Callable,
                       core_radius: int) -> MomentCertificate:
    return MomentCertificate(bound=moment_bound(model, g3, w, core_radius),
                             core_radius=int(core_radius))


def tail_mass_bound(moment_c: float, level: float) -> float:
    """Lower bound on the stationary mass of ``{w < level}`` implied by a
    moment bound ``E w <= c`` (Markov inequality)."""
    if level <= 0:
        raise ValueError("level must be positive")
    return max(0.0, 1.0 - moment_c / level)
