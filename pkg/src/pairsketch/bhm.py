"""One-way protocol for the Boolean hidden matching problem on a pair sketch.

An instance hides a bit b. A stream interleaves vertex bits x_v with the
edges of a partial matching, each labeled z_e = x_u XOR x_v XOR b. The
protocol keeps a sketch over (vertex, bit, tag) cells, starting from both
tag copies of (v, 0) for every vertex. When a vertex bit 1 arrives, its two
cells swap to side 1. Each edge is probed with four pair queries, one per
(a, b) bit pattern; a Plus hit at pattern (a, b) yields the candidate output
a XOR b XOR z_e, patched by XORing in any endpoint bits that arrive after
the hit. A hit on a both-present query always reproduces b; the two
one-present queries can fire spuriously and always produce 1 XOR b (Plus)
or an abort (Minus).

The per-run law is exact: with |T0| = 2n, each edge contributes a correct
output with probability 1/n, a wrong output with 1/(2n), and an abort with
1/(2n), independent of everything else. Majority voting over enough copies
then recovers b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import InvalidParamsError, ParseError, ValidationError
from .permutation import PermutationSpec, SwapStage
from .sketch import (
    QueryOutcome,
    QueryPair,
    ReplayTrace,
    ScriptOp,
    Update,
    create,
    replay_noiseless,
)
from .universe import Block, IntRange, UniverseSpec

#: Pair-query bit patterns, probed in this order for every edge.
QUERY_ORDER = ((0, 0), (1, 1), (0, 1), (1, 0))

INTERLEAVINGS = ("shuffle", "edges-first", "bits-first")


@dataclass(frozen=True)
class VertexBit:
    v: int
    bit: int


@dataclass(frozen=True)
class EdgeLabel:
    u: int
    v: int
    z: int


StreamItem = Union[VertexBit, EdgeLabel]


@dataclass(frozen=True)
class BhmInstance:
    n: int
    alpha: Fraction
    matching: tuple[tuple[int, int], ...]
    z: tuple[int, ...]
    x: tuple[int, ...]
    b: int
    stream: tuple[StreamItem, ...]

    def __post_init__(self) -> None:
        n, alpha = self.n, Fraction(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        m = alpha * n
        if n < 1 or m.denominator != 1 or not 1 <= m <= Fraction(n, 2):
            raise InvalidParamsError(
                f"need alpha*n a positive integer and 2*alpha*n <= n; "
                f"got n={n}, alpha={alpha}"
            )
        m = int(m)
        if len(self.matching) != m or len(self.z) != m:
            raise ValidationError(f"expected {m} matching edges with labels")
        if len(self.x) != n or any(bit not in (0, 1) for bit in self.x):
            raise ValidationError("x must list one bit per vertex")
        if self.b not in (0, 1):
            raise ValidationError("b must be a bit")
        used: set[int] = set()
        for (u, v), z in zip(self.matching, self.z):
            if not (1 <= u <= n and 1 <= v <= n) or u == v:
                raise ValidationError(f"edge ({u}, {v}) is not a valid vertex pair")
            if u in used or v in used:
                raise ValidationError(f"edge ({u}, {v}) reuses a matched vertex")
            used |= {u, v}
            if z != self.x[u - 1] ^ self.x[v - 1] ^ self.b:
                raise ValidationError(
                    f"edge ({u}, {v}) has label {z}, inconsistent with its endpoints"
                )
        want: list[StreamItem] = [VertexBit(v, self.x[v - 1]) for v in range(1, n + 1)]
        want += [EdgeLabel(u, v, z) for (u, v), z in zip(self.matching, self.z)]
        if sorted(map(repr, self.stream)) != sorted(map(repr, want)):
            raise ValidationError("stream is not a permutation of the instance items")

    @property
    def m(self) -> int:
        return len(self.matching)


def generate_instance(
    n: int,
    alpha: Fraction | float | str,
    b: int,
    seed: int,
    interleaving: str = "shuffle",
) -> BhmInstance:
    """Random instance with matching size alpha*n and consistent edge labels."""
    alpha = Fraction(alpha)
    if interleaving not in INTERLEAVINGS:
        raise InvalidParamsError(f"interleaving must be one of {INTERLEAVINGS}")
    m = alpha * n
    if n < 1 or m.denominator != 1 or not 1 <= m <= Fraction(n, 2):
        raise InvalidParamsError(
            f"need alpha*n a positive integer and 2*alpha*n <= n; got n={n}, alpha={alpha}"
        )
    m = int(m)
    rng = np.random.default_rng(seed)
    verts = rng.permutation(n)[: 2 * m] + 1
    matching = tuple(
        (int(min(verts[2 * i], verts[2 * i + 1])), int(max(verts[2 * i], verts[2 * i + 1])))
        for i in range(m)
    )
    x = tuple(int(t) for t in rng.integers(0, 2, size=n))
    z = tuple(x[u - 1] ^ x[v - 1] ^ b for u, v in matching)
    bits: list[StreamItem] = [VertexBit(v, x[v - 1]) for v in range(1, n + 1)]
    edges: list[StreamItem] = [EdgeLabel(u, v, zz) for (u, v), zz in zip(matching, z)]
    if interleaving == "edges-first":
        stream = edges + bits
    elif interleaving == "bits-first":
        stream = bits + edges
    else:
        stream = bits + edges
        order = rng.permutation(len(stream))
        stream = [stream[i] for i in order]
    return BhmInstance(n, alpha, matching, z, x, b, tuple(stream))


def bhm_universe(n: int) -> UniverseSpec:
    return UniverseSpec((Block("cell", (IntRange(1, n), IntRange(0, 1), IntRange(0, 1))),))


def initial_members(universe: UniverseSpec, n: int) -> list[int]:
    return [universe.encode("cell", (v, 0, t)) for v in range(1, n + 1) for t in (0, 1)]


def _flip_perm(universe: UniverseSpec, v: int) -> PermutationSpec:
    pairs = tuple(
        (universe.encode("cell", (v, 0, t)), universe.encode("cell", (v, 1, t)))
        for t in (0, 1)
    )
    return PermutationSpec(universe, (SwapStage(pairs),))


def build_script(inst: BhmInstance) -> tuple[list[ScriptOp], list[tuple[int, int, int]]]:
    """Script realizing a run, plus (edge index, a, b) metadata per pair query."""
    universe = bhm_universe(inst.n)
    script: list[ScriptOp] = []
    meta: list[tuple[int, int, int]] = []
    edge_index = {e: i for i, e in enumerate(inst.matching)}
    for item in inst.stream:
        if isinstance(item, VertexBit):
            if item.bit == 1:
                script.append(Update(_flip_perm(universe, item.v)))
        else:
            ei = edge_index[(item.u, item.v)]
            for a, b in QUERY_ORDER:
                t = a ^ b
                script.append(
                    QueryPair(
                        universe.encode("cell", (item.u, a, t)),
                        universe.encode("cell", (item.v, b, t)),
                    )
                )
                meta.append((ei, a, b))
    return script, meta


def run_single(inst: BhmInstance, *, master_seed: int = 0, handle_id: int = 0) -> int | None:
    """One protocol run on a live sketch. Returns the output bit, or None."""
    universe = bhm_universe(inst.n)
    handle = create(
        universe, initial_members(universe, inst.n), master_seed=master_seed, handle_id=handle_id
    )
    candidate: int | None = None
    pending: set[int] = set()
    for item in inst.stream:
        if isinstance(item, VertexBit):
            if candidate is not None:
                if item.v in pending:
                    candidate ^= item.bit
            elif item.bit == 1:
                handle.update(_flip_perm(universe, item.v))
            continue
        if candidate is not None:
            continue
        for a, b in QUERY_ORDER:
            t = a ^ b
            out = handle.query_pair(
                universe.encode("cell", (item.u, a, t)),
                universe.encode("cell", (item.v, b, t)),
            )
            if out is QueryOutcome.PLUS:
                candidate = a ^ b ^ item.z
                pending = {item.u, item.v}
                break
            if out is QueryOutcome.MINUS:
                return None
    return candidate


def _majority_vote(outputs: Sequence[int | None]) -> int:
    ones = sum(1 for o in outputs if o == 1)
    zeros = sum(1 for o in outputs if o == 0)
    return 1 if ones > zeros else 0


def default_copies(alpha: Fraction) -> int:
    return math.ceil(Fraction(48) / Fraction(alpha))


def run_majority(
    inst: BhmInstance, *, master_seed: int = 0, copies: int | None = None
) -> int:
    """Majority vote over independent runs; ties and empty votes resolve to 0."""
    if copies is None:
        copies = default_copies(inst.alpha)
    outs = [run_single(inst, master_seed=master_seed, handle_id=i) for i in range(copies)]
    return _majority_vote(outs)


# -- exact terminal distribution ---------------------------------------------


@dataclass(frozen=True)
class TerminalSlab:
    """One atom of the exact output distribution of run_single."""

    prob: Fraction
    output: int | None  # bit, or None for abort / no hit


def _later_corrections(inst: BhmInstance) -> list[int]:
    """Per edge: XOR of endpoint bits that arrive after the edge in the stream."""
    out = []
    for i, e in enumerate(inst.matching):
        pos = next(
            j
            for j, item in enumerate(inst.stream)
            if isinstance(item, EdgeLabel) and (item.u, item.v) == e
        )
        later = 0
        for item in inst.stream[pos + 1 :]:
            if isinstance(item, VertexBit) and item.v in e:
                later ^= item.bit
        out.append(later)
    return out


def terminal_slabs(inst: BhmInstance) -> list[TerminalSlab]:
    """Exact run_single output distribution, from the noiseless replay.

    Misses delete deterministically, so the probability that the k-th query
    fires is a function of the initial size and that query's presence pattern
    alone; everything else telescopes away.
    """
    universe = bhm_universe(inst.n)
    script, meta = build_script(inst)
    trace: ReplayTrace = replay_noiseless(universe, initial_members(universe, inst.n), script)
    later = _later_corrections(inst)
    n0 = 2 * inst.n
    slabs: list[TerminalSlab] = []
    for step, (ei, a, b) in zip(trace.steps, meta):
        z = inst.z[ei]
        candidate = a ^ b ^ z ^ later[ei]
        if step.present_count == 2:
            slabs.append(TerminalSlab(Fraction(2, n0), candidate))
        elif step.present_count == 1:
            slabs.append(TerminalSlab(Fraction(1, 2 * n0), candidate))
            slabs.append(TerminalSlab(Fraction(1, 2 * n0), None))  # Minus aborts
    slabs.append(TerminalSlab(trace.survival, None))
    assert sum(s.prob for s in slabs) == 1
    return slabs


def sample_outputs(inst: BhmInstance, master_seed: int, trials: int) -> np.ndarray:
    """Vectorized draws from the exact run_single distribution (-1 codes None)."""
    slabs = terminal_slabs(inst)
    outs = np.array([-1 if s.output is None else s.output for s in slabs], dtype=np.int8)
    cum = np.cumsum([float(s.prob) for s in slabs])
    cum[-1] = 1.0
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, 1]))
    idx = np.searchsorted(cum, rng.random(trials), side="right")
    return outs[idx]


def sample_majority(
    inst: BhmInstance, master_seed: int, meta_trials: int, copies: int | None = None
) -> np.ndarray:
    """Majority outputs of meta_trials independent vote committees."""
    if copies is None:
        copies = default_copies(inst.alpha)
    draws = sample_outputs(inst, master_seed, meta_trials * copies).reshape(
        meta_trials, copies
    )
    ones = (draws == 1).sum(axis=1)
    zeros = (draws == 0).sum(axis=1)
    return (ones > zeros).astype(np.int8)


# -- file format ---------------------------------------------------------------


def write_instance(inst: BhmInstance, path) -> None:
    """Text form: header "n alpha b", then stream lines "V v bit" / "E u v z"."""
    lines = [f"{inst.n} {inst.alpha} {inst.b}"]
    for item in inst.stream:
        if isinstance(item, VertexBit):
            lines.append(f"V {item.v} {item.bit}")
        else:
            lines.append(f"E {item.u} {item.v} {item.z}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path) -> BhmInstance:
    with open(path, encoding="ascii") as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty stream file")
    lno, header = lines[0]
    parts = header.split()
    if len(parts) != 3:
        raise ParseError(f"{path}:{lno}: header must be 'n alpha b'")
    try:
        n = int(parts[0])
        alpha = Fraction(parts[1])
        b = int(parts[2])
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"{path}:{lno}: bad header: {exc}") from None
    stream: list[StreamItem] = []
    x: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    zs: list[int] = []
    for lno, ln in lines[1:]:
        parts = ln.split()
        try:
            if parts[0] == "V" and len(parts) == 3:
                v, bit = int(parts[1]), int(parts[2])
                stream.append(VertexBit(v, bit))
                x[v] = bit
            elif parts[0] == "E" and len(parts) == 4:
                u, v, z = int(parts[1]), int(parts[2]), int(parts[3])
                stream.append(EdgeLabel(u, v, z))
                edges.append((u, v))
                zs.append(z)
            else:
                raise ParseError(f"{path}:{lno}: expected 'V v bit' or 'E u v z'")
        except ValueError:
            raise ParseError(f"{path}:{lno}: non-integer field in {ln!r}") from None
    missing = [v for v in range(1, n + 1) if v not in x]
    if missing:
        raise ValidationError(f"{path}: no vertex-bit line for vertex {missing[0]}")
    xs = tuple(x[v] for v in range(1, n + 1))
    return BhmInstance(n, alpha, tuple(edges), tuple(zs), xs, b, tuple(stream))
