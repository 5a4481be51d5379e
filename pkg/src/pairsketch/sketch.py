"""Pair-sampling sketches: destructive randomized summaries of a member set.

A sketch summarizes a subset T of a finite universe. Permutation updates
relabel T deterministically. Queries are destructive and randomized:

* ``query_one(x)`` with x in T fires ``In`` with probability 1/|T| and
  destroys the sketch; otherwise it reports ``Bot`` and deletes x from T.
  With x outside T it reports ``Bot`` and changes nothing.
* ``query_pair(x, y)`` with both endpoints in T fires ``Plus`` with
  probability 2/|T|; on a miss both endpoints are deleted. With exactly one
  endpoint in T it fires ``Plus`` or ``Minus`` with probability 1/(2|T|)
  each; on a miss the present endpoint is deleted. With neither endpoint in
  T it reports ``Bot`` and changes nothing.

|T| above always means the size at the moment of the query. Once a query
fires, the handle is destroyed and every further operation raises
``SketchDestroyedError``. A sketch whose member set has been whittled down to
nothing keeps answering ``Bot``.

The useful consequence of these laws is reorderability: misses delete
deterministically, so the member set conditioned on "no fire yet" is exactly
the set a noiseless replay produces, and the unconditional probability that a
given query fires depends only on the initial size. ``replay_noiseless``
exposes that deterministic trajectory.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    InvalidInitError,
    InvalidQueryError,
    ScriptError,
    SketchDestroyedError,
)
from .permutation import PermutationSpec, _CompiledShift
from .universe import UniverseSpec


class QueryOutcome(enum.Enum):
    BOT = "Bot"
    IN = "In"
    PLUS = "Plus"
    MINUS = "Minus"

    def fires(self) -> bool:
        return self is not QueryOutcome.BOT


class _MemberStore:
    """Member ids grouped into buckets by block and leading coordinates.

    Semantically a plain set of ids; the grouping lets a cyclic shift rewrite
    one bucket instead of scanning every member.
    """

    __slots__ = ("_layouts", "buckets", "count")

    def __init__(self, universe: UniverseSpec) -> None:
        self._layouts = universe.layout()
        self.buckets: dict[tuple, set[int]] = {}
        self.count = 0

    def _key(self, eid: int) -> tuple:
        for bi, lay in enumerate(self._layouts):
            if eid < lay.end:
                return lay.bucket_key(bi, eid)
        raise ValueError(f"id {eid} out of range")

    def __contains__(self, eid: int) -> bool:
        bucket = self.buckets.get(self._key(eid))
        return bucket is not None and eid in bucket

    def add(self, eid: int) -> None:
        self.buckets.setdefault(self._key(eid), set()).add(eid)
        self.count += 1

    def remove(self, eid: int) -> None:
        self.buckets[self._key(eid)].remove(eid)
        self.count -= 1

    def snapshot(self) -> set[int]:
        out: set[int] = set()
        for bucket in self.buckets.values():
            out |= bucket
        return out

    def apply_swap(self, mapping: dict[int, int], pairs) -> None:
        for a, b in pairs:
            in_a = a in self
            in_b = b in self
            if in_a and not in_b:
                self.remove(a)
                self.add(b)
            elif in_b and not in_a:
                self.remove(b)
                self.add(a)

    def apply_shift(self, comp: _CompiledShift) -> None:
        depth = self._layouts[comp.block_index].depth
        prefix_sel = comp.select[:depth]
        rest_sel = comp.select[depth:]
        rest_strides = comp.strides[depth:-1]
        rest_sizes = comp.sizes[depth:-1]
        for key, bucket in list(self.buckets.items()):
            if key[0] != comp.block_index:
                continue
            if any(
                sel is not None and key[1 + j] not in sel
                for j, sel in enumerate(prefix_sel)
            ):
                continue
            if all(sel is None for sel in rest_sel):
                self.buckets[key] = {comp.shift_id(e) for e in bucket}
                continue
            moved = set()
            kept = set()
            for eid in bucket:
                local = eid - comp.offset
                hit = all(
                    sel is None or local // st % sz in sel
                    for sel, st, sz in zip(rest_sel, rest_strides, rest_sizes)
                )
                (moved if hit else kept).add(comp.shift_id(eid) if hit else eid)
            self.buckets[key] = moved | kept


class SketchHandle:
    """Live sketch state. Create via :func:`create`."""

    __slots__ = ("universe", "handle_id", "_store", "_rng", "_outcome")

    def __init__(
        self,
        universe: UniverseSpec,
        members: Iterable[int],
        rng: np.random.Generator,
        handle_id: int,
    ) -> None:
        self.universe = universe
        self.handle_id = handle_id
        self._rng = rng
        self._outcome: QueryOutcome | None = None
        store = _MemberStore(universe)
        seen = set()
        for eid in members:
            if not universe.contains_id(eid):
                raise InvalidInitError(f"member id {eid!r} outside universe")
            if eid in seen:
                raise InvalidInitError(f"member id {eid} repeated")
            seen.add(eid)
            store.add(eid)
        if store.count == 0:
            raise InvalidInitError("initial member set is empty")
        self._store = store

    # -- bookkeeping ------------------------------------------------------

    @property
    def destroyed(self) -> bool:
        return self._outcome is not None

    @property
    def final_outcome(self) -> QueryOutcome | None:
        """Outcome that destroyed the handle, if any."""
        return self._outcome

    def _require_alive(self) -> None:
        if self._outcome is not None:
            raise SketchDestroyedError(
                f"handle {self.handle_id} was destroyed by {self._outcome.value}"
            )

    @property
    def size(self) -> int:
        self._require_alive()
        return self._store.count

    def debug_members(self) -> set[int]:
        """Current member ids. Diagnostic only; no production code path reads it."""
        self._require_alive()
        return self._store.snapshot()

    # -- operations -------------------------------------------------------

    def update(self, perm: PermutationSpec) -> None:
        self._require_alive()
        if perm.universe != self.universe:
            raise ScriptError("permutation universe does not match handle universe")
        before = self._store.count
        for stage, comp in zip(perm.stages, perm._compiled):  # type: ignore[attr-defined]
            if isinstance(comp, dict):
                self._store.apply_swap(comp, stage.pairs)
            else:
                self._store.apply_shift(comp)
        assert self._store.count == before, "update changed the member count"

    def _destroy(self, outcome: QueryOutcome) -> QueryOutcome:
        self._outcome = outcome
        self._store = None  # type: ignore[assignment]
        return outcome

    def query_one(self, x: int) -> QueryOutcome:
        self._require_alive()
        if not self.universe.contains_id(x):
            raise InvalidQueryError(f"query endpoint {x!r} outside universe")
        store = self._store
        if store.count == 0 or x not in store:
            return QueryOutcome.BOT
        if self._rng.random() * store.count < 1.0:
            return self._destroy(QueryOutcome.IN)
        store.remove(x)
        return QueryOutcome.BOT

    def query_pair(self, x: int, y: int) -> QueryOutcome:
        self._require_alive()
        if not self.universe.contains_id(x) or not self.universe.contains_id(y):
            raise InvalidQueryError(f"query endpoint outside universe: ({x!r}, {y!r})")
        if x == y:
            raise InvalidQueryError(f"pair query endpoints must differ, got {x} twice")
        store = self._store
        n = store.count
        in_x = x in store
        in_y = y in store
        if n == 0 or (not in_x and not in_y):
            return QueryOutcome.BOT
        if in_x and in_y:
            if self._rng.random() * n < 2.0:
                return self._destroy(QueryOutcome.PLUS)
            store.remove(x)
            store.remove(y)
            return QueryOutcome.BOT
        u = self._rng.random() * 2 * n
        if u < 1.0:
            return self._destroy(QueryOutcome.PLUS)
        if u < 2.0:
            return self._destroy(QueryOutcome.MINUS)
        store.remove(x if in_x else y)
        return QueryOutcome.BOT

    def add_via_dummy(self, dummy: int, target: int) -> None:
        """Swap a scratch member into a new identity (the only way to 'insert')."""
        self._require_alive()
        from .permutation import swap_perm

        self.update(swap_perm(self.universe, (dummy, target)))


def create(
    universe: UniverseSpec,
    members: Iterable[int],
    *,
    master_seed: int = 0,
    handle_id: int = 0,
) -> SketchHandle:
    """Build a sketch of ``members``; randomness is keyed by (seed, handle id)."""
    if master_seed < 0 or handle_id < 0:
        raise InvalidInitError("master_seed and handle_id must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, handle_id]))
    return SketchHandle(universe, members, rng, handle_id)


# -- scripts ---------------------------------------------------------------


@dataclass(frozen=True)
class Update:
    perm: PermutationSpec


@dataclass(frozen=True)
class QueryOne:
    x: int


@dataclass(frozen=True)
class QueryPair:
    x: int
    y: int


ScriptOp = Union[Update, QueryOne, QueryPair]


def run_script(handle: SketchHandle, script: Sequence[ScriptOp]) -> tuple[QueryOutcome, ...]:
    """Execute ops in order; stop after a query fires. Returns query outcomes."""
    outcomes: list[QueryOutcome] = []
    for op in script:
        if isinstance(op, Update):
            handle.update(op.perm)
            continue
        if isinstance(op, QueryOne):
            outcomes.append(handle.query_one(op.x))
        elif isinstance(op, QueryPair):
            outcomes.append(handle.query_pair(op.x, op.y))
        else:
            raise ScriptError(f"unknown script op {op!r}")
        if outcomes[-1].fires():
            break
    return tuple(outcomes)


@dataclass(frozen=True)
class ReplayStep:
    """Presence facts at one query of a noiseless replay."""

    op_index: int
    kind: str  # "one" | "pair"
    x: int
    y: int | None
    present_x: bool
    present_y: bool
    size_before: int

    @property
    def present_count(self) -> int:
        return int(self.present_x) + int(self.present_y)


@dataclass(frozen=True)
class ReplayTrace:
    survivors: frozenset[int]
    survival: Fraction
    steps: tuple[ReplayStep, ...]


def replay_noiseless(
    universe: UniverseSpec,
    members: Iterable[int],
    script: Sequence[ScriptOp],
) -> ReplayTrace:
    """Deterministic trajectory where every query misses.

    Returns the surviving member set, the probability that a real run reaches
    the end without a query firing, and per-query presence facts. Conditioned
    on no fire, a real handle holds exactly ``survivors`` afterwards.
    """
    current = set(members)
    if not current:
        raise InvalidInitError("initial member set is empty")
    initial_size = len(current)
    survival = Fraction(1)
    steps: list[ReplayStep] = []
    for i, op in enumerate(script):
        if isinstance(op, Update):
            current = op.perm.permute_set(current)
            continue
        n = len(current)
        if isinstance(op, QueryOne):
            present = op.x in current
            steps.append(ReplayStep(i, "one", op.x, None, present, False, n))
            if present:
                survival *= Fraction(n - 1, n)
                current.discard(op.x)
        elif isinstance(op, QueryPair):
            if op.x == op.y:
                raise InvalidQueryError("pair query endpoints must differ")
            px = op.x in current
            py = op.y in current
            steps.append(ReplayStep(i, "pair", op.x, op.y, px, py, n))
            if px and py:
                survival *= Fraction(n - 2, n)
                current.discard(op.x)
                current.discard(op.y)
            elif px or py:
                survival *= Fraction(n - 1, n)
                current.discard(op.x if px else op.y)
        else:
            raise ScriptError(f"unknown script op {op!r}")
    assert survival == Fraction(len(current), initial_size)
    return ReplayTrace(frozenset(current), survival, tuple(steps))
