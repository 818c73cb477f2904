"""State enumeration and the block partition over (K, A', exterior boundary).

States are hashable, orderable model objects (ints, tuples of ints).  The
dense indexing puts the return set K in a contiguous leading block followed
by A' = A - K, each sorted lexicographically for reproducibility.  Exterior
mass is kept as per-state boundary rows: only the finitely many states
reachable in one step outside A are ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EnumerationLimitError, ModelError

State = Hashable

DEFAULT_ENUMERATION_CAP = 50_000_000
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """Bijection between structured states and dense indices, K first."""

    states: tuple
    k_size: int

    @property
    def a_size(self) -> int:
        return len(self.states)

    @property
    def a_prime_size(self) -> int:
        return len(self.states) - self.k_size

    def index_of(self, state: State) -> int:
        return self._index[state]

    def state_of(self, index: int) -> State:
        return self.states[index]

    def in_k(self, state: State) -> bool:
        idx = self._index.get(state)
        return idx is not None and idx < self.k_size

    def in_a(self, state: State) -> bool:
        return state in self._index

    @property
    def _index(self) -> dict:
        d = self.__dict__.get("_index_cache")
        if d is None:
            d = {s: i for i, s in enumerate(self.states)}
            object.__setattr__(self, "_index_cache", d)
        return d

    def k_states(self) -> tuple:
        return self.states[: self.k_size]


@dataclass
class Partition:
    """Block partition of the transition matrix over (K, A', boundary).

    ``P11, P12, P21, P22`` are the within-A blocks in CSR form; ``boundary``
    maps each A-index to its list of ``(exterior_state, probability)``
    transitions.  Exterior blocks over A^c are never formed.
    """

    space: StateSpace
    P11: sp.csr_matrix
    P12: sp.csr_matrix
    P21: sp.csr_matrix
    P22: sp.csr_matrix
    boundary: tuple
    unit: np.ndarray = field(default=None)  # per-state "time" weight; ones for DTMC rows

    @property
    def k_size(self) -> int:
        return self.space.k_size

    @property
    def a_size(self) -> int:
        return self.space.a_size

    @property
    def a_prime_size(self) -> int:
        return self.space.a_prime_size

    def evaluate(self, fn: Callable[[State], float]) -> np.ndarray:
        """Evaluate a state function on all of A in dense-index order."""
        return np.array([float(fn(s)) for s in self.space.states])

    def boundary_overflow(self, fn: Callable[[State], float]) -> np.ndarray:
        """Exact exterior overflow ``h(x) = sum_{y not in A} P(x, y) fn(y)``."""
        h = np.zeros(self.a_size)
        for i, entries in enumerate(self.boundary):
            if entries:
                h[i] = sum(p * float(fn(y)) for y, p in entries)
        return h

    def full_matrix(self) -> sp.csr_matrix:
        """The within-A matrix with K-first ordering (blocks reassembled)."""
        top = sp.hstack([self.P11, self.P12], format="csr")
        bot = sp.hstack([self.P21, self.P22], format="csr")
        return sp.vstack([top, bot], format="csr")


def enumerate_space(
    model,
    a_predicate: Callable[[State], bool],
    k_predicate: Callable[[State], bool],
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    k_sort_key: Callable[[State], object] | None = None,
) -> tuple[StateSpace, Partition]:
    """Breadth-first enumeration of A from the model seed, with block partition.

    ``k_predicate`` must imply ``a_predicate``; the set satisfying
    ``a_predicate`` must be finite and reachable from ``model.seed``.
    Raises :class:`EnumerationLimitError` when the cap is exceeded and
    :class:`ModelError` for invalid rows or an empty K.
    """
    seed = model.seed
    if not a_predicate(seed):
        raise ModelError("seed state does not satisfy the truncation predicate")
    seen = {seed}
    queue = [seed]
    rows: dict = {}
    pos = 0
    while pos < len(queue):
        x = queue[pos]
        pos += 1
        row = list(model.row(x))
        total = 0.0
        for y, p in row:
            if not np.isfinite(p) or p < -ROW_SUM_TOL:
                raise ModelError(f"invalid transition probability {p!r} from state {x!r}")
            total += p
            if a_predicate(y) and y not in seen:
                seen.add(y)
                if len(seen) > cap:
                    raise EnumerationLimitError(
                        f"enumeration cap of {cap} states exceeded; "
                        "check the truncation predicate"
                    )
                queue.append(y)
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ModelError(
                f"row of state {x!r} sums to {total!r}, not 1 within {ROW_SUM_TOL}"
            )
        rows[x] = row

    k_states = sorted((s for s in seen if k_predicate(s)), key=k_sort_key)
    if not k_states:
        raise ModelError("return set K is empty on the enumerated truncation set")
    for s in k_states:
        if not a_predicate(s):
            raise ModelError(f"K state {s!r} lies outside the truncation set")
    k_set = set(k_states)
    a_prime = sorted(s for s in seen if s not in k_set)
    states = tuple(k_states) + tuple(a_prime)
    space = StateSpace(states=states, k_size=len(k_states))

    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    data, ri, ci = [], [], []
    boundary: list[tuple] = [()] * n
    for x, row in rows.items():
        i = index[x]
        ext = []
        for y, p in row:
            if p == 0.0:
                continue
            j = index.get(y)
            if j is None:
                ext.append((y, p))
            else:
                ri.append(i)
                ci.append(j)
                data.append(p)
        if ext:
            boundary[i] = tuple(ext)
    P = sp.csr_matrix((data, (ri, ci)), shape=(n, n))
    k = len(k_states)
    weigher = getattr(model, "unit_weights", None)
    unit = np.ones(n) if weigher is None else np.asarray(weigher(states), dtype=float)
    if unit.shape != (n,) or np.any(unit <= 0) or not np.all(np.isfinite(unit)):
        raise ModelError("unit weights must be positive and finite over A")
    part = Partition(
        space=space,
        P11=P[:k, :k].tocsr(),
        P12=P[:k, k:].tocsr(),
        P21=P[k:, :k].tocsr(),
        P22=P[k:, k:].tocsr(),
        boundary=tuple(boundary),
        unit=unit,
    )
    return space, part


def explicit_k_predicate(k_states: Sequence[State]) -> Callable[[State], bool]:
    ks = set(k_states)
    return lambda s: s in ks
