"""Estimator for edges whose endpoints are both locally heavy on arrival.

An edge u -> v of a directed stream is (d_H, d_T)-heavy when, counting the
edge itself, the head u has accumulated at least d_H incident edges and the
tail v at least d_T. ``oracle_heavy_count`` counts such edges exactly.

``run_single`` estimates the count with a single destructive sketch over
per-vertex position stacks plus scratch: each arriving edge swaps four fresh
scratch elements into position 0 of the H and T stacks of its endpoints,
shifts both endpoints' stacks up by one, and then probes
((u, d_H, H), (v, d_T, T)) with one pair query. An element inserted by a
vertex's a-th incident edge sits at position d exactly when the vertex's
running degree reaches a + d - 1, so the probed position is occupied exactly
when the oracle's degree condition holds. A Plus hit reports +2m, Minus
-2m, no hit 0; one-present hits carry both signs with equal probability and
cancel in expectation, leaving E[output] equal to the oracle count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import InvalidParamsError, ParseError, ValidationError
from .permutation import CyclicShift, PermutationSpec, SwapStage
from .sketch import (
    QueryOutcome,
    QueryPair,
    ScriptOp,
    Update,
    create,
    replay_noiseless,
)
from .universe import Block, IntRange, Labels, UniverseSpec


@dataclass(frozen=True)
class DirectedEdgeStream:
    """Directed edges (head, tail) in arrival order; one stack slot per degree.

    Self-loops and repeated directed pairs are rejected: the position factor
    of the stack universe has 2n values, which accommodates running degrees
    only up to 2(n - 1), the maximum of a simple directed stream.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError(f"vertex count {self.n} must be positive")
        object.__setattr__(
            self, "edges", tuple((int(u), int(v)) for u, v in self.edges)
        )
        seen: set[tuple[int, int]] = set()
        for i, (u, v) in enumerate(self.edges):
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise ValidationError(f"edge {i + 1} ({u}, {v}) leaves [1, {self.n}]")
            if u == v:
                raise ValidationError(f"edge {i + 1} is a self-loop at {u}")
            if (u, v) in seen:
                raise ValidationError(f"edge {i + 1} ({u} -> {v}) repeats")
            seen.add((u, v))

    @property
    def m(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class HeavyParams:
    d_H: int
    d_T: int
    eps: float

    def __post_init__(self) -> None:
        if self.d_H < 1 or self.d_T < 1:
            raise InvalidParamsError("degree thresholds must be >= 1")
        if not 0 < self.eps <= 1:
            raise InvalidParamsError("eps must lie in (0, 1]")


def oracle_heavy_count(stream: DirectedEdgeStream, d_H: int, d_T: int) -> int:
    """Exact heavy-edge count by maintaining running incident degrees."""
    if d_H < 1 or d_T < 1:
        raise InvalidParamsError("degree thresholds must be >= 1")
    deg = [0] * (stream.n + 1)
    count = 0
    for u, v in stream.edges:
        deg[u] += 1
        deg[v] += 1
        if deg[u] >= d_H and deg[v] >= d_T:
            count += 1
    return count


# -- sketch run -----------------------------------------------------------------


def heavy_universe(stream: DirectedEdgeStream) -> UniverseSpec:
    return UniverseSpec(
        (
            Block(
                "stack",
                (IntRange(1, stream.n), Labels(("H", "T")), IntRange(0, 2 * stream.n - 1)),
                bucket_depth=2,
            ),
            Block("scratch", (IntRange(1, 4 * stream.m),)),
        )
    )


def _check_thresholds(stream: DirectedEdgeStream, d_H: int, d_T: int) -> None:
    top = 2 * stream.n - 1
    if not (1 <= d_H <= top and 1 <= d_T <= top):
        raise InvalidParamsError(
            f"thresholds must lie in [1, {top}] (stack positions); running degrees "
            f"of a simple directed stream never exceed {2 * (stream.n - 1)} anyway"
        )


def build_script(
    stream: DirectedEdgeStream, d_H: int, d_T: int
) -> tuple[UniverseSpec, list[ScriptOp]]:
    """The exact op sequence run_single performs (one update + query per edge)."""
    universe = heavy_universe(stream)
    stack_off = universe.block_offset("stack")
    scratch_off = universe.block_offset("scratch")
    width = 4 * stream.n  # ids per vertex in the stack block

    def slot(w: int, label: int, pos: int) -> int:
        return stack_off + (w - 1) * width + label * 2 * stream.n + pos

    script: list[ScriptOp] = []
    for ell, (u, v) in enumerate(stream.edges, start=1):
        fresh = scratch_off + 4 * (ell - 1)
        script.append(
            Update(
                PermutationSpec(
                    universe,
                    (
                        SwapStage(
                            (
                                (fresh + 0, slot(u, 0, 0)),
                                (fresh + 1, slot(u, 1, 0)),
                                (fresh + 2, slot(v, 0, 0)),
                                (fresh + 3, slot(v, 1, 0)),
                            )
                        ),
                        CyclicShift("stack", 1, (frozenset({u, v}), None)),
                    ),
                )
            )
        )
        script.append(QueryPair(slot(u, 0, d_H), slot(v, 1, d_T)))
    return universe, script


def run_single(
    stream: DirectedEdgeStream,
    d_H: int,
    d_T: int,
    seed: int,
    *,
    handle_id: int = 0,
    observer: Callable[[int, set[int]], None] | None = None,
) -> int:
    """One estimator pass; returns +-2m on a hit, else 0.

    ``observer`` (test hook) receives (edge index, member ids) after each
    edge's update and query while the sketch is alive.
    """
    _check_thresholds(stream, d_H, d_T)
    m = stream.m
    if m == 0:
        return 0
    universe, script = build_script(stream, d_H, d_T)
    scratch_off = universe.block_offset("scratch")
    handle = create(
        universe,
        range(scratch_off, scratch_off + 4 * m),
        master_seed=seed,
        handle_id=handle_id,
    )
    ell = 0
    for op in script:
        if isinstance(op, Update):
            handle.update(op.perm)
            continue
        ell += 1
        out = handle.query_pair(op.x, op.y)
        if out is not QueryOutcome.BOT:
            return (1 if out is QueryOutcome.PLUS else -1) * 2 * m
        if observer is not None:
            observer(ell, handle.debug_members())
    return 0


def estimate(
    stream: DirectedEdgeStream,
    params: HeavyParams,
    seed: int,
    *,
    copies: int | None = None,
) -> float:
    """Mean of independent run_single copies; default count is ceil(12/eps^2)."""
    if stream.m == 0:
        return 0.0
    _check_thresholds(stream, params.d_H, params.d_T)
    if copies is None:
        copies = math.ceil(12 / params.eps**2)
    vals = np.array(
        [
            run_single(stream, params.d_H, params.d_T, seed, handle_id=i)
            for i in range(copies)
        ],
        dtype=np.float64,
    )
    return float(np.mean(vals))


# -- exact terminal law ------------------------------------------------------------


@dataclass(frozen=True)
class HeavyLaw:
    """Exact three-atom output law of run_single."""

    m: int
    p_plus: Fraction
    p_minus: Fraction

    @property
    def mean(self) -> Fraction:
        return 2 * self.m * (self.p_plus - self.p_minus)

    def atoms(self) -> dict[int, Fraction]:
        out = {
            2 * self.m: self.p_plus,
            -2 * self.m: self.p_minus,
            0: 1 - self.p_plus - self.p_minus,
        }
        return {x: p for x, p in out.items() if p}


def terminal_law(stream: DirectedEdgeStream, d_H: int, d_T: int) -> HeavyLaw:
    """Exact output law, derived by replaying the real op sequence noiselessly.

    The trajectory is fully deterministic, so each query's unconditional fire
    probability depends only on the initial size 4m and its presence pattern:
    1/(2m) for both present, 1/(8m) per sign for one present.
    """
    _check_thresholds(stream, d_H, d_T)
    m = stream.m
    if m == 0:
        return HeavyLaw(0, Fraction(0), Fraction(0))
    universe, script = build_script(stream, d_H, d_T)
    scratch_off = universe.block_offset("scratch")
    trace = replay_noiseless(universe, range(scratch_off, scratch_off + 4 * m), script)
    p_plus = Fraction(0)
    p_minus = Fraction(0)
    for step in trace.steps:
        if step.present_count == 2:
            p_plus += Fraction(2, 4 * m)
        elif step.present_count == 1:
            p_plus += Fraction(1, 8 * m)
            p_minus += Fraction(1, 8 * m)
    return HeavyLaw(m, p_plus, p_minus)


def sample_outputs(
    stream: DirectedEdgeStream, d_H: int, d_T: int, master_seed: int, trials: int
) -> np.ndarray:
    """Vectorized draws from the exact run_single output law."""
    law = terminal_law(stream, d_H, d_T)
    out = np.zeros(trials, dtype=np.int32)
    if law.m == 0 or trials == 0:
        return out
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, 4]))
    draw = rng.random(trials)
    pp = float(law.p_plus)
    pm = float(law.p_minus)
    out[draw < pp] = 2 * law.m
    out[(draw >= pp) & (draw < pp + pm)] = -2 * law.m
    return out


def estimate_sampled(
    stream: DirectedEdgeStream,
    params: HeavyParams,
    seed: int,
    *,
    copies: int | None = None,
) -> float:
    """Same aggregation as ``estimate``, drawing runs from their exact law."""
    if stream.m == 0:
        return 0.0
    if copies is None:
        copies = math.ceil(12 / params.eps**2)
    return float(np.mean(sample_outputs(stream, params.d_H, params.d_T, seed, copies)))


# -- file format --------------------------------------------------------------------


def write_stream(stream: DirectedEdgeStream, path) -> None:
    """Text form: header "n m", then one "u v" line (directed u -> v) per edge."""
    lines = [f"{stream.n} {stream.m}"]
    lines += [f"{u} {v}" for u, v in stream.edges]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_stream(path) -> DirectedEdgeStream:
    with open(path, encoding="ascii") as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty stream file")
    lno, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise ParseError(f"{path}:{lno}: header must be 'n m'")
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"{path}:{lno}: non-integer header field") from None
    edges = []
    for lno, ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lno}: expected 'u v'")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"{path}:{lno}: non-integer field in {ln!r}") from None
    if len(edges) != m:
        raise ParseError(f"{path}: header promises {m} edges, found {len(edges)}")
    return DirectedEdgeStream(n, tuple(edges))
