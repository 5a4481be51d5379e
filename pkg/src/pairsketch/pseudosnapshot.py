"""Degree-class-pair snapshot estimation over directed edge streams.

The estimator bins each edge by a noisy, subsampled "pseudobias" of its
endpoints and counts edges per bin pair, using the pair-sampling sketch to
detect when both endpoints sit in the target degree classes. Everything
randomized is hash-derived (hash seed) or sketch-derived (run seed), so all
expectations here are conditional on the hash draw and exactly computable.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from hashlib import blake2b
from typing import Callable

import numpy as np

from .errors import CapacityError, InvalidParamsError, InvalidQueryError
from .heavy_edges import DirectedEdgeStream
from .permutation import CyclicShift, PermutationSpec, SwapStage
from .sketch import (
    QueryOne,
    QueryOutcome,
    QueryPair,
    SketchHandle,
    Update,
    create,
    replay_noiseless,
)
from .universe import Block, IntRange, Labels, UniverseSpec

FAMILIES = ("A", "B", "C", "D")


def _to_fraction(x) -> Fraction:
    """Exact rational from user input; floats go through their decimal repr."""
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


# ---------------------------------------------------------------------------
# degree grid and hash oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegreeGrid:
    """Geometric degree grid, deduplicated, ending exactly at n."""

    eps: Fraction
    levels: tuple[int, ...]

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise InvalidParamsError("eps must be in (0, 1]")
        if not self.levels or self.levels[0] != 1:
            raise InvalidParamsError("grid must start at 1")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InvalidParamsError("grid levels must be strictly increasing")

    @classmethod
    def from_eps(cls, n: int, eps) -> "DegreeGrid":
        e = _to_fraction(eps)
        if n < 1:
            raise InvalidParamsError("n must be positive")
        step = 1 + e**3
        levels = []
        power = Fraction(1)
        while power < n:
            levels.append(int(power.numerator // power.denominator))
            power *= step
        levels.append(n)
        out = []
        for d in levels:
            if not out or d > out[-1]:
                out.append(d)
        return cls(eps=e, levels=tuple(out))

    def index_for_degree(self, d: int) -> int:
        """Largest grid index whose value does not exceed d."""
        if d < 1:
            raise InvalidParamsError("degree must be at least 1")
        return bisect_right(self.levels, d) - 1


@dataclass(frozen=True)
class HashOracles:
    """Pure keyed hash functions: per-level edge subsamplers and vertex noise.

    f(d, edge_index) fires with probability kappa/(2d) (up to one part in
    2^64); g(vertex) is uniform on [-eps, eps] with 32 fractional bits. Both
    are deterministic in (seed, arguments), so re-evaluation is free.
    """

    seed: int
    kappa: int
    eps: Fraction

    def __post_init__(self):
        if self.kappa < 1:
            raise InvalidParamsError("kappa must be at least 1")
        object.__setattr__(self, "eps", _to_fraction(self.eps))

    def f(self, d: int, edge_index: int) -> bool:
        data = f"f:{self.seed}:{d}:{edge_index}".encode()
        h = int.from_bytes(blake2b(data, digest_size=8).digest(), "big")
        return h * 2 * d < self.kappa * 2**64

    def g(self, vertex: int) -> Fraction:
        data = f"g:{self.seed}:{vertex}".encode()
        u = int.from_bytes(blake2b(data, digest_size=4).digest(), "big")
        return self.eps * Fraction(u - 2**31, 2**31)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SnapshotParams:
    kappa: int
    eps: Fraction
    thresholds: tuple[Fraction, ...]
    class_pair: tuple[int, int]
    capacity_c: int = 32
    copies: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "eps", _to_fraction(self.eps))
        object.__setattr__(
            self, "thresholds", tuple(_to_fraction(t) for t in self.thresholds)
        )
        if self.kappa < 1:
            raise InvalidParamsError("kappa must be at least 1")
        if not self.thresholds:
            raise InvalidParamsError("need at least one threshold")
        ts = self.thresholds
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidParamsError("thresholds must be strictly increasing")
        if ts[0] < -1 or ts[-1] > 1:
            raise InvalidParamsError("thresholds must lie in [-1, 1]")
        if self.capacity_c < 1 or self.copies < 1:
            raise InvalidParamsError("capacity_c and copies must be positive")

    @property
    def ell(self) -> int:
        return len(self.thresholds)

    def bin_of(self, value: Fraction) -> int | None:
        """0-based class of a pseudobias; None when it falls below them all.

        Classes are half-open except the last, which is closed at 1. The
        cap in the pseudobias keeps values <= 1, so bisect suffices.
        """
        if value < self.thresholds[0]:
            return None
        return bisect_right(self.thresholds, value) - 1

    def validate_with(self, grid: DegreeGrid, hashes: HashOracles) -> None:
        a, b = self.class_pair
        top = len(grid.levels) - 1
        if not (0 <= a < top and 0 <= b < top):
            raise InvalidParamsError(
                f"class indices must be in [0, {top - 1}], got {self.class_pair}"
            )
        if self.eps != grid.eps or self.eps != hashes.eps:
            raise InvalidParamsError("eps disagrees between params, grid, hashes")
        if self.kappa != hashes.kappa:
            raise InvalidParamsError("kappa disagrees between params and hashes")


# ---------------------------------------------------------------------------
# exact pseudobias and snapshot oracles (full-stream scans, no sketch)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeLocalStats:
    edge_index: int
    vertex: int
    d_before: int
    dout_before: int
    d_after: int
    dout_after: int
    i_tilde: int
    d_rounded: int
    dout_sampled: Fraction
    pseudobias: Fraction
    bias: Fraction

    def __post_init__(self):
        assert self.pseudobias <= 1
        assert self.d_before >= 1


def pseudobias_exact(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    edge_index: int,
    vertex: int,
) -> EdgeLocalStats:
    """All local degree statistics of one endpoint of one edge.

    Counts on the "before" side include the edge itself, matching what the
    streaming estimator can reconstruct from its hit coordinates.
    """
    if not (1 <= edge_index <= stream.m):
        raise InvalidQueryError(f"edge index {edge_index} out of range")
    u, v = stream.edges[edge_index - 1]
    if vertex not in (u, v):
        raise InvalidQueryError(f"vertex {vertex} is not an endpoint of edge {edge_index}")
    d_before = dout_before = d_after = dout_after = 0
    sampled = 0
    d_total = dout_total = 0
    for k, (x, y) in enumerate(stream.edges, start=1):
        if vertex not in (x, y):
            continue
        d_total += 1
        dout_total += x == vertex
        if k <= edge_index:
            d_before += 1
            dout_before += x == vertex
        else:
            d_after += 1
            dout_after += x == vertex
    i_tilde = grid.index_for_degree(d_before)
    d_rounded = grid.levels[i_tilde]
    for k, (x, y) in enumerate(stream.edges, start=1):
        if k <= edge_index and x == vertex and hashes.f(d_rounded, k):
            sampled += 1
    dout_sampled = Fraction(2 * d_rounded * sampled, hashes.kappa)
    raw = (
        2 * (dout_sampled + dout_after) / (d_rounded + d_after)
        - 1
        + hashes.g(vertex)
    )
    return EdgeLocalStats(
        edge_index=edge_index,
        vertex=vertex,
        d_before=d_before,
        dout_before=dout_before,
        d_after=d_after,
        dout_after=dout_after,
        i_tilde=i_tilde,
        d_rounded=d_rounded,
        dout_sampled=dout_sampled,
        pseudobias=min(raw, Fraction(1)),
        bias=Fraction(2 * dout_total - d_total, d_total),
    )


def pseudosnapshot_exact(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
    *,
    restricted: bool = False,
) -> list[list[int]]:
    """Edge counts binned by endpoint pseudobias classes.

    With restricted=True only edges whose endpoint degrees (through the edge)
    fall in the target classes are counted. Edges whose pseudobias lands
    below every threshold belong to no class and count nowhere.
    """
    params.validate_with(grid, hashes)
    ell = params.ell
    out = [[0] * ell for _ in range(ell)]
    a_idx, b_idx = params.class_pair
    d_a, d_a1 = grid.levels[a_idx], grid.levels[a_idx + 1]
    d_b, d_b1 = grid.levels[b_idx], grid.levels[b_idx + 1]
    for k, (u, v) in enumerate(stream.edges, start=1):
        su = pseudobias_exact(stream, hashes, grid, k, u)
        sv = pseudobias_exact(stream, hashes, grid, k, v)
        if restricted:
            if not (d_a <= su.d_before < d_a1 and d_b <= sv.d_before < d_b1):
                continue
        iu = params.bin_of(su.pseudobias)
        iv = params.bin_of(sv.pseudobias)
        if iu is None or iv is None:
            continue
        out[iu][iv] += 1
    return out


# ---------------------------------------------------------------------------
# the sketch-side plan: universe, increments, queries, cleanup
# ---------------------------------------------------------------------------


def snapshot_universe(n: int, m: int, params: SnapshotParams) -> UniverseSpec:
    big_m = params.capacity_c * params.kappa**3 * m
    copies = 2 * params.kappa**2
    return UniverseSpec(
        blocks=(
            Block("scratch", (IntRange(1, big_m),)),
            Block(
                "stack",
                (
                    IntRange(1, n),
                    Labels(FAMILIES),
                    IntRange(1, copies),
                    IntRange(0, big_m * n - 1),
                ),
                bucket_depth=3,
            ),
        )
    )


@dataclass(frozen=True)
class EdgePlan:
    edge_index: int
    updates: tuple[Update, ...]
    queries: tuple[tuple[QueryPair, tuple[int, int, int]], ...]
    cleanups: tuple[QueryOne, ...]


@dataclass(frozen=True)
class ScriptPlan:
    universe: UniverseSpec
    edge_plans: tuple[EdgePlan, ...]
    big_m: int
    hash_budget_ok: bool
    capacity_edge: int | None
    f_alpha: tuple[bool, ...]
    f_beta: tuple[bool, ...]

    def initial_members(self) -> range:
        return range(self.big_m)

    def script(self) -> tuple:
        ops = []
        for plan in self.edge_plans:
            ops.extend(plan.updates)
            ops.extend(q for q, _ in plan.queries)
            ops.extend(plan.cleanups)
        return tuple(ops)


class _Plan:
    """Single source of the sketch operations: positions, copies, scratch.

    Both the live runner and the noiseless-replay law construct their
    operations here, so they cannot drift apart.
    """

    def __init__(self, stream, hashes, grid, params):
        params.validate_with(grid, hashes)
        if grid.levels[-1] != stream.n:
            raise InvalidParamsError("grid was built for a different n")
        self.kappa = params.kappa
        self.copies = 2 * params.kappa**2
        a_idx, b_idx = params.class_pair
        self.d_a, self.d_a1 = grid.levels[a_idx], grid.levels[a_idx + 1]
        self.d_b, self.d_b1 = grid.levels[b_idx], grid.levels[b_idx + 1]
        self.n, self.m = stream.n, stream.m
        self.big_m = params.capacity_c * params.kappa**3 * stream.m
        self.positions = self.big_m * self.n
        self.universe = snapshot_universe(stream.n, stream.m, params)
        self._stack_off = self.universe.block_offset("stack")
        # scratch ids are 0..M-1; the cursor doubles as the next scratch id
        assert self.universe.block_offset("scratch") == 0
        self._s_copy = self.positions
        self._s_fam = self.copies * self.positions
        self._s_vert = len(FAMILIES) * self._s_fam
        self.cursor = 0
        self.tops = {(w, fam): 0 for w in range(1, stream.n + 1) for fam in FAMILIES}

    def slot(self, w: int, fam: str, copy: int, pos: int) -> int:
        return (
            self._stack_off
            + (w - 1) * self._s_vert
            + FAMILIES.index(fam) * self._s_fam
            + (copy - 1) * self._s_copy
            + pos
        )

    def inc_update(self, fam: str, w: int, r: int) -> Update:
        """One update: shift the whole (w, fam) stack up by r, then swap the
        next 2k^2*r scratch elements into the vacated bottom positions."""
        need = self.copies * r
        if self.cursor + need > self.big_m:
            raise CapacityError(
                f"scratch exhausted: need {need}, have {self.big_m - self.cursor}"
            )
        shift = CyclicShift(
            "stack", r, select=(frozenset({w}), frozenset({fam}), None)
        )
        pairs = []
        k = self.cursor
        for copy in range(1, self.copies + 1):
            for pos in range(1, r + 1):
                pairs.append((k, self.slot(w, fam, copy, pos)))
                k += 1
        self.cursor += need
        self.tops[(w, fam)] += r
        assert self.tops[(w, fam)] < self.positions
        return Update(PermutationSpec(self.universe, (shift, SwapStage(tuple(pairs)))))

    def edge_updates(self, u: int, v: int, fa: bool, fb: bool) -> list[Update]:
        ups = []
        for w in (u, v):
            for fam in FAMILIES:
                ups.append(self.inc_update(fam, w, 1))
        if fa:
            ups.append(self.inc_update("A", u, self.d_a1))
            ups.append(self.inc_update("B", u, self.d_a1))
        if fb:
            ups.append(self.inc_update("C", u, self.d_b1))
            ups.append(self.inc_update("D", u, self.d_b1))
        return ups

    def edge_queries(self, u: int, v: int) -> list[tuple[QueryPair, tuple[int, int, int]]]:
        """The 4k^2 pair queries, lexicographic in (i, j, x).

        Copy indices t and s pair the i-indexed and j-indexed halves
        injectively so every queried element is distinct.
        """
        k = self.kappa
        out = []
        seen: set[int] = set()
        for i in range(1, k + 1):
            for j in range(1, k + 1):
                t = (i - 1) * k + j
                s = k * k + (j - 1) * k + i
                pa = self.d_a + (i - 1) * self.d_a1
                pb = i * self.d_a1
                pc = self.d_b + (j - 1) * self.d_b1
                pd = j * self.d_b1
                quads = (
                    (1, self.slot(u, "A", t, pa), self.slot(v, "C", t, pc)),
                    (2, self.slot(u, "B", t, pb), self.slot(v, "C", s, pc)),
                    (3, self.slot(u, "A", s, pa), self.slot(v, "D", t, pd)),
                    (4, self.slot(u, "B", s, pb), self.slot(v, "D", s, pd)),
                )
                for x, ex, ey in quads:
                    seen.update((ex, ey))
                    out.append((QueryPair(ex, ey), (x, i, j)))
        assert len(seen) == 8 * k * k, "query_edge pairs must be disjoint"
        return out

    def edge_cleanups(self, u: int, v: int) -> list[QueryOne]:
        """Single queries wiping every threshold-aligned index, base included,
        from all copies of both endpoints' stacks, bounded by stack extents."""
        out = []
        for w in (u, v):
            for fam, base, step in (
                ("A", self.d_a, self.d_a1),
                ("B", self.d_a1, self.d_a1),
                ("C", self.d_b, self.d_b1),
                ("D", self.d_b1, self.d_b1),
            ):
                top = self.tops[(w, fam)]
                pos = base
                while pos <= top:
                    for copy in range(1, self.copies + 1):
                        out.append(QueryOne(self.slot(w, fam, copy, pos)))
                    pos += step
        return out


def build_plan(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
) -> ScriptPlan:
    plan = _Plan(stream, hashes, grid, params)
    fa = tuple(hashes.f(plan.d_a, k) for k in range(1, stream.m + 1))
    fb = tuple(hashes.f(plan.d_b, k) for k in range(1, stream.m + 1))
    budget_ok = sum(fa) + sum(fb) <= 2 * params.kappa * stream.m
    edge_plans = []
    capacity_edge = None
    if budget_ok:
        for k, (u, v) in enumerate(stream.edges, start=1):
            try:
                updates = plan.edge_updates(u, v, fa[k - 1], fb[k - 1])
            except CapacityError:
                capacity_edge = k
                break
            edge_plans.append(
                EdgePlan(
                    edge_index=k,
                    updates=tuple(updates),
                    queries=tuple(plan.edge_queries(u, v)),
                    cleanups=tuple(plan.edge_cleanups(u, v)),
                )
            )
    return ScriptPlan(
        universe=plan.universe,
        edge_plans=tuple(edge_plans),
        big_m=plan.big_m,
        hash_budget_ok=budget_ok,
        capacity_edge=capacity_edge,
        f_alpha=fa,
        f_beta=fb,
    )


# ---------------------------------------------------------------------------
# the classical stage
# ---------------------------------------------------------------------------


class _ClassicalStage:
    """Maps a query hit (edge, i, j) to the estimate entry it selects.

    After a hit the estimator watches the rest of the stream, so the
    after-the-edge degree counts are exact; the before counts are read off
    the hit coordinates.
    """

    def __init__(self, stream, hashes, grid, params):
        a_idx, b_idx = params.class_pair
        self.d_a, self.d_b = grid.levels[a_idx], grid.levels[b_idx]
        self.kappa = params.kappa
        self.params = params
        self.hashes = hashes
        self.stream = stream

    def after_counts(self, edge_index: int, vertex: int) -> tuple[int, int]:
        d_after = dout_after = 0
        for k in range(edge_index + 1, self.stream.m + 1):
            x, y = self.stream.edges[k - 1]
            if vertex in (x, y):
                d_after += 1
                dout_after += x == vertex
        return d_after, dout_after

    def entry(self, edge_index: int, i: int, j: int) -> tuple[int, int] | None:
        u, v = self.stream.edges[edge_index - 1]
        da_u, douta_u = self.after_counts(edge_index, u)
        da_v, douta_v = self.after_counts(edge_index, v)
        bu = min(
            2
            * (Fraction(2 * self.d_a * (i - 1), self.kappa) + douta_u)
            / (self.d_a + da_u)
            - 1
            + self.hashes.g(u),
            Fraction(1),
        )
        bv = min(
            2
            * (Fraction(2 * self.d_b * (j - 1), self.kappa) + douta_v)
            / (self.d_b + da_v)
            - 1
            + self.hashes.g(v),
            Fraction(1),
        )
        iu = self.params.bin_of(bu)
        iv = self.params.bin_of(bv)
        if iu is None or iv is None:
            return None
        return (iu, iv)


# ---------------------------------------------------------------------------
# estimate container and the runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PseudosnapshotEstimate:
    entries: tuple[tuple[int, ...], ...]
    terminated_by: str
    flags: tuple[str, ...] = ()
    fired: tuple[int, int, int, int, int] | None = None  # edge, x, i, j, sign

    def __post_init__(self):
        nonzero = sum(1 for row in self.entries for val in row if val)
        assert nonzero <= 1

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)


def _zero_estimate(ell: int, reason: str, flags: tuple[str, ...] = ()):
    zeros = tuple(tuple(0 for _ in range(ell)) for _ in range(ell))
    return PseudosnapshotEstimate(entries=zeros, terminated_by=reason, flags=flags)


def run_single(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
    seed: int,
    *,
    handle_id: int = 0,
    observer: Callable[[int, set[int]], None] | None = None,
    plan: ScriptPlan | None = None,
) -> PseudosnapshotEstimate:
    """One full pass: quantum stage over the stream, classical stage on a hit.

    The handle's randomness comes from (seed, handle_id); the hash draw is
    fixed by `hashes`. An exhausted scratch pool or a blown hash budget
    flags the run and zeroes the estimate, as does a cleanup hit.
    """
    ell = params.ell
    if stream.m == 0:
        return _zero_estimate(ell, "StreamEnd")
    if plan is None:
        plan = build_plan(stream, hashes, grid, params)
    if not plan.hash_budget_ok:
        return _zero_estimate(ell, "HashBudget", ("hash_budget_exceeded",))
    handle = create(
        plan.universe,
        plan.initial_members(),
        master_seed=seed,
        handle_id=handle_id,
    )
    half = plan.big_m // 2
    for eplan in plan.edge_plans:
        for up in eplan.updates:
            handle.update(up.perm)
        hit = None
        for op, (x, i, j) in eplan.queries:
            outcome = handle.query_pair(op.x, op.y)
            if outcome is not QueryOutcome.BOT:
                sign = 1 if outcome is QueryOutcome.PLUS else -1
                hit = (eplan.edge_index, x, i, j, sign)
                break
        if hit is not None:
            stage = _ClassicalStage(stream, hashes, grid, params)
            edge_index, x, i, j, sign = hit
            entry = stage.entry(edge_index, i, j)
            value = sign * half if x in (1, 4) else -sign * half
            rows = [[0] * ell for _ in range(ell)]
            if entry is not None:
                rows[entry[0]][entry[1]] = value
            return PseudosnapshotEstimate(
                entries=tuple(tuple(row) for row in rows),
                terminated_by="Plus" if sign > 0 else "Minus",
                fired=hit,
            )
        for op in eplan.cleanups:
            outcome = handle.query_one(op.x)
            if outcome is not QueryOutcome.BOT:
                return _zero_estimate(ell, "Cleanup")
        if observer is not None:
            observer(eplan.edge_index, handle.debug_members())
    if plan.capacity_edge is not None:
        return _zero_estimate(ell, "Capacity", ("capacity_exceeded",))
    return _zero_estimate(ell, "StreamEnd")


class SnapshotRun:
    """Live handle plus plan state, exposing the three primitive moves.

    Mainly for poking at the primitives directly; `run_single` drives the
    same operations through a prebuilt plan.
    """

    def __init__(self, stream, hashes, grid, params, seed, *, handle_id=0):
        self.plan = _Plan(stream, hashes, grid, params)
        self.params = params
        self.handle = create(
            self.plan.universe,
            range(self.plan.big_m),
            master_seed=seed,
            handle_id=handle_id,
        )

    def inc(self, family: str, vertex: int, r: int) -> None:
        self.handle.update(self.plan.inc_update(family, vertex, r).perm)

    def query_edge(self, u: int, v: int):
        """First non-Bot among the 4k^2 pair queries, as (x, i, j, sign)."""
        for op, (x, i, j) in self.plan.edge_queries(u, v):
            outcome = self.handle.query_pair(op.x, op.y)
            if outcome is not QueryOutcome.BOT:
                return (x, i, j, 1 if outcome is QueryOutcome.PLUS else -1)
        return None

    def cleanup(self, u: int, v: int) -> bool:
        """True when a cleanup query fires, which ends the whole run."""
        for op in self.plan.edge_cleanups(u, v):
            if self.handle.query_one(op.x) is not QueryOutcome.BOT:
                return True
        return False


# ---------------------------------------------------------------------------
# exact terminal law via noiseless replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SnapshotLaw:
    """Exact distribution of run_single outputs for one hash draw.

    Atoms are keyed by (terminated_by, entry, value); probabilities are
    Fractions summing to one. Built from the deterministic all-miss replay,
    where each query's unconditional fire probability depends only on the
    initial size and its presence pattern.
    """

    ell: int
    big_m: int
    atoms: dict[tuple[str, tuple[int, int] | None, int], Fraction]

    def expectation(self) -> list[list[Fraction]]:
        out = [[Fraction(0)] * self.ell for _ in range(self.ell)]
        for (_, entry, value), p in self.atoms.items():
            if entry is not None and value:
                out[entry[0]][entry[1]] += p * value
        return out

    def sample(self, master_seed: int, trials: int):
        """Vectorized draws: arrays (row, col, value), row/col -1 for none."""
        keys = sorted(self.atoms, key=repr)
        probs = np.array([float(self.atoms[k]) for k in keys])
        rows = np.array([k[1][0] if k[1] else -1 for k in keys], dtype=np.int64)
        cols = np.array([k[1][1] if k[1] else -1 for k in keys], dtype=np.int64)
        vals = np.array([k[2] for k in keys], dtype=np.int64)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, 6]))
        idx = np.searchsorted(cum, rng.random(trials), side="right")
        return rows[idx], cols[idx], vals[idx]


def terminal_law(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
    *,
    plan: ScriptPlan | None = None,
) -> SnapshotLaw:
    params.validate_with(grid, hashes)
    ell = params.ell
    if stream.m == 0:
        return SnapshotLaw(ell, 0, {("StreamEnd", None, 0): Fraction(1)})
    if plan is None:
        plan = build_plan(stream, hashes, grid, params)
    if not plan.hash_budget_ok:
        return SnapshotLaw(ell, plan.big_m, {("HashBudget", None, 0): Fraction(1)})
    tags = {}
    ops = []
    pos = 0
    for eplan in plan.edge_plans:
        ops.extend(eplan.updates)
        pos += len(eplan.updates)
        for op, (x, i, j) in eplan.queries:
            tags[pos] = ("qe", eplan.edge_index, x, i, j)
            ops.append(op)
            pos += 1
        for op in eplan.cleanups:
            tags[pos] = ("cl", eplan.edge_index)
            ops.append(op)
            pos += 1
    trace = replay_noiseless(plan.universe, plan.initial_members(), tuple(ops))
    big_m = plan.big_m
    half = big_m // 2
    stage = _ClassicalStage(stream, hashes, grid, params)
    entry_cache: dict[tuple[int, int, int], tuple[int, int] | None] = {}
    atoms: dict[tuple[str, tuple[int, int] | None, int], Fraction] = {}

    def add(key, p):
        atoms[key] = atoms.get(key, Fraction(0)) + p

    for step in trace.steps:
        tag = tags.get(step.op_index)
        if tag is None:
            continue
        if tag[0] == "cl":
            if step.present_x:
                add(("Cleanup", None, 0), Fraction(1, big_m))
            continue
        _, edge_index, x, i, j = tag
        present = step.present_x + step.present_y
        if present == 0:
            continue
        key = (edge_index, i, j)
        if key not in entry_cache:
            entry_cache[key] = stage.entry(edge_index, i, j)
        entry = entry_cache[key]
        sgn_x = 1 if x in (1, 4) else -1
        # an out-of-class hit still terminates, but its output is the zero
        # matrix, so the law keys it by what a run can actually show
        plus_val = sgn_x * half if entry is not None else 0
        if present == 2:
            add(("Plus", entry, plus_val), Fraction(2, big_m))
        else:
            add(("Plus", entry, plus_val), Fraction(1, 2 * big_m))
            add(("Minus", entry, -plus_val), Fraction(1, 2 * big_m))
    reason = "Capacity" if plan.capacity_edge is not None else "StreamEnd"
    add((reason, None, 0), trace.survival)
    assert sum(atoms.values()) == 1
    return SnapshotLaw(ell, big_m, atoms)


# ---------------------------------------------------------------------------
# the lemma-side expectation oracle (independent of the sketch machinery)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SnapshotOracle:
    """Per-entry expected estimator output, by direct edge counting.

    An edge contributes exactly one to the entry of its endpoint biases when
    its endpoint degrees lie in the target classes and both hit coordinates
    fit inside the kappa x kappa query window; everything else cancels.
    """

    expectation: tuple[tuple[int, ...], ...]
    in_class: int
    qualifying: int

    @property
    def nonqualifying(self) -> int:
        return self.in_class - self.qualifying


def lemma_expectation(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
) -> SnapshotOracle:
    params.validate_with(grid, hashes)
    ell = params.ell
    a_idx, b_idx = params.class_pair
    d_a, d_a1 = grid.levels[a_idx], grid.levels[a_idx + 1]
    d_b, d_b1 = grid.levels[b_idx], grid.levels[b_idx + 1]
    out = [[0] * ell for _ in range(ell)]
    deg = [0] * (stream.n + 1)
    fired_a = [0] * (stream.n + 1)
    fired_b = [0] * (stream.n + 1)
    in_class = qualifying = 0
    for k, (u, v) in enumerate(stream.edges, start=1):
        deg[u] += 1
        deg[v] += 1
        fired_a[u] += hashes.f(d_a, k)
        fired_b[u] += hashes.f(d_b, k)
        if not (d_a <= deg[u] < d_a1 and d_b <= deg[v] < d_b1):
            continue
        in_class += 1
        if fired_a[u] + 1 > params.kappa or fired_b[v] + 1 > params.kappa:
            continue
        qualifying += 1
        su = pseudobias_exact(stream, hashes, grid, k, u)
        sv = pseudobias_exact(stream, hashes, grid, k, v)
        assert su.d_rounded == d_a and sv.d_rounded == d_b
        iu = params.bin_of(su.pseudobias)
        iv = params.bin_of(sv.pseudobias)
        if iu is None or iv is None:
            continue
        out[iu][iv] += 1
    return SnapshotOracle(
        expectation=tuple(tuple(row) for row in out),
        in_class=in_class,
        qualifying=qualifying,
    )


# ---------------------------------------------------------------------------
# averaging wrappers
# ---------------------------------------------------------------------------


def estimate(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
    *,
    master_seed: int = 0,
    copies: int | None = None,
) -> np.ndarray:
    """Entrywise mean of independent single runs."""
    ell = params.ell
    if stream.m == 0:
        return np.zeros((ell, ell))
    if copies is None:
        copies = params.copies
    plan = build_plan(stream, hashes, grid, params)
    total = np.zeros((ell, ell))
    for c in range(copies):
        est = run_single(
            stream, hashes, grid, params, master_seed, handle_id=c, plan=plan
        )
        total += est.as_array()
    return total / copies


def estimate_sampled(
    stream: DirectedEdgeStream,
    hashes: HashOracles,
    grid: DegreeGrid,
    params: SnapshotParams,
    *,
    master_seed: int = 0,
    copies: int | None = None,
) -> np.ndarray:
    """Same distribution as `estimate`, drawn from the exact terminal law."""
    ell = params.ell
    if stream.m == 0:
        return np.zeros((ell, ell))
    if copies is None:
        copies = params.copies
    law = terminal_law(stream, hashes, grid, params)
    rows, cols, vals = law.sample(master_seed, copies)
    total = np.zeros((ell, ell))
    np.add.at(total, (rows[rows >= 0], cols[rows >= 0]), vals[rows >= 0])
    return total / copies


# ---------------------------------------------------------------------------
# the stack mirror (independent bookkeeping of the member set)
# ---------------------------------------------------------------------------


class StackMirror:
    """Predicts the member set after each edge without touching a sketch.

    Keeps one alive-position set per (vertex, family); increments shift and
    bottom-fill it, the edge's queries then wipe every threshold-aligned
    position of both endpoints. Also checks the closed-form interval shape:
    with no subsample fires the stack is a bottom segment, otherwise a full
    bottom plus one suffix slab per fire with shared offsets.
    """

    def __init__(self, stream, hashes, grid, params):
        params.validate_with(grid, hashes)
        self.stream = stream
        self.params = params
        self.kappa = params.kappa
        self.copies = 2 * params.kappa**2
        a_idx, b_idx = params.class_pair
        self.d_a, self.d_a1 = grid.levels[a_idx], grid.levels[a_idx + 1]
        self.d_b, self.d_b1 = grid.levels[b_idx], grid.levels[b_idx + 1]
        self.big_m = params.capacity_c * params.kappa**3 * stream.m
        self.universe = snapshot_universe(stream.n, stream.m, params)
        self._plan_for_ids = _Plan(stream, hashes, grid, params)
        self.sets = {
            (w, fam): set() for w in range(1, stream.n + 1) for fam in FAMILIES
        }
        self.cursor = 0
        self.r = [0] * (stream.n + 1)
        self.big_r_ab = [0] * (stream.n + 1)
        self.big_r_cd = [0] * (stream.n + 1)
        self.fa = tuple(hashes.f(self.d_a, k) for k in range(1, stream.m + 1))
        self.fb = tuple(hashes.f(self.d_b, k) for k in range(1, stream.m + 1))
        self.edge_ptr = 0
        self.capacity_hit = False

    def _inc(self, w, fam, r):
        need = self.copies * r
        if self.cursor + need > self.big_m:
            self.capacity_hit = True
            return False
        s = self.sets[(w, fam)]
        self.sets[(w, fam)] = {p + r for p in s} | set(range(1, r + 1))
        self.cursor += need
        return True

    def step(self) -> int:
        """Process the next edge; returns its 1-based index."""
        if self.capacity_hit or self.edge_ptr >= self.stream.m:
            raise CapacityError("no more edges to mirror")
        k = self.edge_ptr + 1
        u, v = self.stream.edges[self.edge_ptr]
        for w in (u, v):
            for fam in FAMILIES:
                if not self._inc(w, fam, 1):
                    return k
        if self.fa[k - 1]:
            for fam in ("A", "B"):
                if not self._inc(u, fam, self.d_a1):
                    return k
        if self.fb[k - 1]:
            for fam in ("C", "D"):
                if not self._inc(u, fam, self.d_b1):
                    return k
        for w in (u, v):
            for fam, base, step_ in (
                ("A", self.d_a, self.d_a1),
                ("B", self.d_a1, self.d_a1),
                ("C", self.d_b, self.d_b1),
                ("D", self.d_b1, self.d_b1),
            ):
                s = self.sets[(w, fam)]
                if s:
                    top = max(s)
                    wipe = set(range(base, top + 1, step_))
                    s.difference_update(wipe)
        for w in (u, v):
            self.r[w] += 1
        self.big_r_ab[u] += self.fa[k - 1]
        self.big_r_cd[u] += self.fb[k - 1]
        self.edge_ptr = k
        return k

    def expected_members(self) -> set[int]:
        members = set(range(self.cursor, self.big_m))
        for (w, fam), positions in self.sets.items():
            for copy in range(1, self.copies + 1):
                for p in positions:
                    members.add(self._plan_for_ids.slot(w, fam, copy, p))
        return members

    def check_stack_form(self, w: int) -> None:
        """Asserts the interval-union shape for both stack pairs of w."""
        self._check_pair(
            self.sets[(w, "A")], self.sets[(w, "B")],
            self.d_a, self.d_a1, self.r[w], self.big_r_ab[w],
        )
        self._check_pair(
            self.sets[(w, "C")], self.sets[(w, "D")],
            self.d_b, self.d_b1, self.r[w], self.big_r_cd[w],
        )

    def _check_pair(self, s_e, s_f, d_lo, d_hi, r, big_r):
        if big_r == 0:
            assert s_e == set(range(1, min(r, d_lo - 1) + 1)), (s_e, r, d_lo)
            assert s_f == set(range(1, min(r, d_hi - 1) + 1)), (s_f, r, d_hi)
            return
        assert s_e >= set(range(1, d_lo)), "bottom of the low stack must be full"
        assert s_f >= set(range(1, d_hi)), "bottom of the high stack must be full"

        def slab_constraints(s, bases_ends):
            """Per slab, the set of admissible offsets rho in [1, r]."""
            allowed = []
            covered = set(range(1, bases_ends[0][0] + 1)) - {bases_ends[0][0]}
            for base, end in bases_ends:
                slab = {p for p in s if base <= p < end}
                expect_all = set(range(base + 1, end))
                if slab:
                    start = min(slab)
                    if slab != set(range(start, end)):
                        raise AssertionError(f"slab {slab} is not a suffix of [{base}, {end})")
                    rho = start - base
                    allowed.append({rho} if 1 <= rho <= r else set())
                else:
                    allowed.append(set(range(end - base, r + 1)))
                covered |= expect_all | {base}
            stray = {p for p in s if p >= bases_ends[0][0]} - covered
            if stray:
                raise AssertionError(f"positions {stray} outside every slab")
            return allowed

        e_slabs = [
            (d_lo + (i - 1) * d_hi, d_lo + i * d_hi) for i in range(1, big_r)
        ] + [(d_lo + (big_r - 1) * d_hi, big_r * d_hi + min(r + 1, d_lo))]
        f_slabs = [
            (i * d_hi, (i + 1) * d_hi) for i in range(1, big_r)
        ] + [(big_r * d_hi, big_r * d_hi + min(r + 1, d_hi))]
        allowed_e = slab_constraints(s_e, e_slabs)
        allowed_f = slab_constraints(s_f, f_slabs)
        for i, (ae, af) in enumerate(zip(allowed_e, allowed_f), start=1):
            if not (ae & af):
                raise AssertionError(
                    f"no shared offset for slab {i}: {ae} vs {af}"
                )
