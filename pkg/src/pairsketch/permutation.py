"""Declarative permutations over a universe.

A permutation is an ordered list of stages applied left to right. Two stage
kinds cover everything the streaming algorithms need:

* ``SwapStage``: disjoint transpositions, given by element ids.
* ``CyclicShift``: adds a constant to the last coordinate of one block,
  modulo that factor's size, for every element whose leading coordinates
  match a selection (``None`` entries match everything).

Both kinds are bijections by construction. A ``CyclicShift`` only constrains
coordinates it does not move, so the matched set is closed under the shift.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import PermutationError
from .universe import UniverseSpec


@dataclass(frozen=True)
class SwapStage:
    """Disjoint transpositions of element ids."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pairs", tuple((int(a), int(b)) for a, b in self.pairs)
        )


@dataclass(frozen=True)
class CyclicShift:
    """Shift the last coordinate of ``block`` by ``amount`` (mod factor size).

    ``select`` has one entry per non-final factor of the block: a set of
    factor values, or ``None`` to match every value of that factor.
    """

    block: str
    amount: int
    select: tuple[frozenset | None, ...] = ()

    def __post_init__(self) -> None:
        norm = tuple(None if s is None else frozenset(s) for s in self.select)
        object.__setattr__(self, "select", norm)


Stage = Union[SwapStage, CyclicShift]


@dataclass(frozen=True)
class _CompiledShift:
    block_index: int
    offset: int
    end: int
    strides: tuple[int, ...]
    sizes: tuple[int, ...]
    select: tuple[frozenset[int] | None, ...]  # index space, one per leading axis
    mod: int
    amount: int

    def matches(self, local: int) -> bool:
        for j, sel in enumerate(self.select):
            if sel is not None and local // self.strides[j] % self.sizes[j] not in sel:
                return False
        return True

    def shift_id(self, eid: int) -> int:
        local = eid - self.offset
        last = local % self.mod
        return eid - last + (last + self.amount) % self.mod


@dataclass(frozen=True)
class PermutationSpec:
    """A validated permutation of ``universe``, as an ordered stage list."""

    universe: UniverseSpec
    stages: tuple[Stage, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        compiled = []
        for stage in self.stages:
            if isinstance(stage, SwapStage):
                compiled.append(self._compile_swap(stage))
            elif isinstance(stage, CyclicShift):
                compiled.append(self._compile_shift(stage))
            else:
                raise PermutationError(f"unknown stage type {type(stage).__name__}")
        object.__setattr__(self, "_compiled", tuple(compiled))

    def _compile_swap(self, stage: SwapStage) -> dict[int, int]:
        mapping: dict[int, int] = {}
        for a, b in stage.pairs:
            self.universe.check_id(a)
            self.universe.check_id(b)
            if a == b:
                raise PermutationError(f"swap pair ({a}, {b}) is degenerate")
            if a in mapping or b in mapping:
                raise PermutationError(f"swap pairs overlap at ({a}, {b})")
            mapping[a] = b
            mapping[b] = a
        return mapping

    def _compile_shift(self, stage: CyclicShift) -> _CompiledShift:
        try:
            block = self.universe.block(stage.block)
            offset = self.universe.block_offset(stage.block)
        except KeyError as exc:
            raise PermutationError(str(exc)) from None
        if len(stage.select) != len(block.factors) - 1:
            raise PermutationError(
                f"block {stage.block!r} needs {len(block.factors) - 1} selection "
                f"entries, got {len(stage.select)}"
            )
        select = []
        for factor, sel in zip(block.factors, stage.select):
            if sel is None:
                select.append(None)
            else:
                try:
                    select.append(frozenset(factor.index(v) for v in sel))
                except ValueError as exc:
                    raise PermutationError(str(exc)) from None
        block_index = [b.name for b in self.universe.blocks].index(stage.block)
        mod = block.factors[-1].size
        return _CompiledShift(
            block_index=block_index,
            offset=offset,
            end=offset + block.size,
            strides=block.strides(),
            sizes=tuple(f.size for f in block.factors),
            select=tuple(select),
            mod=mod,
            amount=stage.amount % mod,
        )

    def apply(self, eid: int) -> int:
        """Image of a single element id under the full permutation."""
        self.universe.check_id(eid)
        for comp in self._compiled:  # type: ignore[attr-defined]
            if isinstance(comp, dict):
                eid = comp.get(eid, eid)
            else:
                if comp.offset <= eid < comp.end and comp.matches(eid - comp.offset):
                    eid = comp.shift_id(eid)
        return eid

    def permute_set(self, ids: set[int]) -> set[int]:
        """Image of a member set; reference implementation for the handle fast path."""
        out = {self.apply(e) for e in ids}
        if len(out) != len(ids):
            raise PermutationError("permutation collapsed distinct ids")
        return out

    def as_mapping_array(self) -> np.ndarray:
        """Dense id -> image array (for the state-vector backend)."""
        n = self.universe.size
        mapping = np.fromiter((self.apply(e) for e in range(n)), dtype=np.int64, count=n)
        if len(np.unique(mapping)) != n:
            raise PermutationError("stage list does not describe a bijection")
        return mapping


def swap_perm(universe: UniverseSpec, *pairs: tuple[int, int]) -> PermutationSpec:
    """Convenience builder for a single-stage swap permutation."""
    return PermutationSpec(universe, (SwapStage(tuple(pairs)),))
