"""Formal contexts, derivation operators and Close-by-One concept enumeration.

Objects are documents and attributes are terms. Rows and columns of the
incidence are stored as Python ``int`` bitsets: bit ``j`` of ``rows[i]`` is set
when object ``i`` has attribute ``j``, bit ``i`` of ``cols[j]`` likewise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ResourceLimitError, UnknownReferenceError

DEFAULT_CONCEPT_CEILING = 1_000_000


def _bits(indices: Iterable[int]) -> int:
    out = 0
    for i in indices:
        out |= 1 << int(i)
    return out


def _members(bits: int) -> list[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


class FormalContext:
    def __init__(self, objects: Sequence[str], attributes: Sequence[str], incidence):
        self.objects = tuple(objects)
        self.attributes = tuple(attributes)
        if len(set(self.objects)) != len(self.objects):
            raise DomainError("duplicate object ids")
        if len(set(self.attributes)) != len(self.attributes):
            raise DomainError("duplicate attribute ids")
        inc = np.asarray(incidence, dtype=bool)
        if inc.size == 0:
            inc = inc.reshape(len(self.objects), len(self.attributes))
        if inc.shape != (len(self.objects), len(self.attributes)):
            raise DomainError(
                f"incidence shape {inc.shape} != ({len(self.objects)}, {len(self.attributes)})"
            )
        inc = inc.copy()
        inc.setflags(write=False)
        self.incidence = inc
        self._obj_index = {o: i for i, o in enumerate(self.objects)}
        self._attr_index = {a: j for j, a in enumerate(self.attributes)}
        self.rows = tuple(_bits(np.flatnonzero(r)) for r in inc)
        self.cols = tuple(_bits(np.flatnonzero(c)) for c in inc.T)
        self.all_objects = (1 << len(self.objects)) - 1
        self.all_attributes = (1 << len(self.attributes)) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.incidence.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FormalContext)
            and self.objects == other.objects
            and self.attributes == other.attributes
            and np.array_equal(self.incidence, other.incidence)
        )

    def __repr__(self) -> str:
        n, m = self.shape
        return f"<FormalContext {n} objects x {m} attributes, {int(self.incidence.sum())} crosses>"

    # bitset-level derivations

    def intent_bits(self, extent: int) -> int:
        out = self.all_attributes
        for i in _members(extent):
            out &= self.rows[i]
            if not out:
                break
        return out

    def extent_bits(self, intent: int) -> int:
        out = self.all_objects
        for j in _members(intent):
            out &= self.cols[j]
            if not out:
                break
        return out

    # id-level conversions

    def object_bits(self, objects: Iterable[str]) -> int:
        try:
            return _bits(self._obj_index[o] for o in objects)
        except KeyError as exc:
            raise UnknownReferenceError(f"unknown object {exc.args[0]!r}") from None

    def attribute_bits(self, attributes: Iterable[str]) -> int:
        try:
            return _bits(self._attr_index[a] for a in attributes)
        except KeyError as exc:
            raise UnknownReferenceError(f"unknown attribute {exc.args[0]!r}") from None

    def object_set(self, bits: int) -> frozenset[str]:
        return frozenset(self.objects[i] for i in _members(bits))

    def attribute_set(self, bits: int) -> frozenset[str]:
        return frozenset(self.attributes[j] for j in _members(bits))

    # exports

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["doc_id", *self.attributes])
            for obj, row in zip(self.objects, self.incidence):
                w.writerow([obj, *(int(v) for v in row)])

    def to_cxt(self) -> str:
        """Burmeister ``.cxt`` text (the format read by ConExp and the ``concepts`` library)."""
        lines = ["B", "", str(len(self.objects)), str(len(self.attributes)), ""]
        lines += list(self.objects)
        lines += list(self.attributes)
        lines += ["".join("X" if v else "." for v in row) for row in self.incidence]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_cxt(cls, text: str) -> "FormalContext":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "B":
            raise DomainError("not a Burmeister context (missing 'B' header)")
        pos = 1
        if lines[pos].strip() == "":
            pos += 1
        else:
            pos += 1  # context name line
            if lines[pos].strip() == "":
                pos += 1
        n, m = int(lines[pos]), int(lines[pos + 1])
        pos += 2
        while pos < len(lines) and lines[pos].strip() == "":
            pos += 1
        objects = lines[pos : pos + n]
        attributes = lines[pos + n : pos + n + m]
        grid = lines[pos + n + m : pos + n + m + n]
        inc = [[c in "Xx" for c in row[:m]] for row in grid]
        return cls(objects, attributes, np.array(inc, dtype=bool).reshape(n, m))


@dataclass(frozen=True)
class FormalConcept:
    extent: frozenset[str]
    intent: frozenset[str]

    def to_json(self, context: FormalContext | None = None) -> str:
        if context is not None:
            ext = [o for o in context.objects if o in self.extent]
            itt = [a for a in context.attributes if a in self.intent]
        else:
            ext, itt = sorted(self.extent), sorted(self.intent)
        return json.dumps({"extent": ext, "intent": itt}, ensure_ascii=False)


def derive_intent(context: FormalContext, objects: Iterable[str]) -> frozenset[str]:
    """Attributes shared by every given object (all attributes for the empty set)."""
    return context.attribute_set(context.intent_bits(context.object_bits(objects)))


def derive_extent(context: FormalContext, attributes: Iterable[str]) -> frozenset[str]:
    """Objects having every given attribute (all objects for the empty set)."""
    return context.object_set(context.extent_bits(context.attribute_bits(attributes)))


def closure(context: FormalContext, attributes: Iterable[str]) -> frozenset[str]:
    bits = context.attribute_bits(attributes)
    return context.attribute_set(context.intent_bits(context.extent_bits(bits)))


def _lectic_key(intent: int, m: int) -> int:
    # Attribute 0 is the most significant position of the lectic order.
    key = 0
    for j in _members(intent):
        key |= 1 << (m - 1 - j)
    return key


def enumerate_concept_bits(
    context: FormalContext, ceiling: int = DEFAULT_CONCEPT_CEILING
) -> list[tuple[int, int]]:
    """All (extent, intent) bitset pairs, in lectic order of the intents.

    Close-by-One: depth-first over attributes with the canonicity test
    ``new_intent`` and ``intent`` agree on every attribute below ``j``.
    """
    n, m = context.shape
    cols = context.cols
    top_extent = context.all_objects
    top_intent = context.intent_bits(top_extent)
    found = [(top_extent, top_intent)]
    stack = [(top_extent, top_intent, 0)]
    while stack:
        extent, intent, start = stack.pop()
        # push in reverse so that lower attributes are explored first
        children = []
        for j in range(start, m):
            bit = 1 << j
            if intent & bit:
                continue
            new_extent = extent & cols[j]
            new_intent = context.intent_bits(new_extent)
            below = bit - 1
            if (new_intent & below) != (intent & below):
                continue
            found.append((new_extent, new_intent))
            if len(found) > ceiling:
                raise ResourceLimitError(
                    f"concept count exceeds the ceiling of {ceiling}; "
                    "use a stricter binarization or raise the ceiling"
                )
            children.append((new_extent, new_intent, j + 1))
        stack.extend(reversed(children))
    found.sort(key=lambda c: _lectic_key(c[1], m))
    return found


def enumerate_concepts(
    context: FormalContext, ceiling: int = DEFAULT_CONCEPT_CEILING
) -> list[FormalConcept]:
    if len(context.objects) == 0 and len(context.attributes) == 0:
        raise DomainError("cannot enumerate concepts of an empty context")
    return [
        FormalConcept(context.object_set(e), context.attribute_set(i))
        for e, i in enumerate_concept_bits(context, ceiling)
    ]


def covering_relation(concepts: Sequence[FormalConcept]) -> set[tuple[int, int]]:
    """Hasse diagram edges ``(lower, upper)`` as indices into ``concepts``.

    ``lower`` has the strictly smaller extent. Edges are the transitive
    reduction of extent inclusion.
    """
    exts = [c.extent for c in concepts]
    k = len(exts)
    above = [0] * k
    for a in range(k):
        ea = exts[a]
        for b in range(k):
            if a != b and ea < exts[b]:
                above[a] |= 1 << b
    edges = set()
    for a in range(k):
        reachable_in_two = 0
        for b in _members(above[a]):
            reachable_in_two |= above[b]
        for b in _members(above[a] & ~reachable_in_two):
            edges.add((a, b))
    return edges


def write_concepts_jsonl(
    concepts: Iterable[FormalConcept], path: str | Path, context: FormalContext | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in concepts:
            fh.write(c.to_json(context) + "\n")
