"""Partitions, Wick pairings and Kronecker-delta contraction.

Conventions used throughout the package:

* A partition is a weakly decreasing tuple of positive ints; ``()`` is the
  empty partition and indexes the constant term of a weight function.
* The canonical partition order is ascending weight, then lexicographically
  descending parts: ``(), (1), (2), (1,1), (3), (2,1), (1,1,1), ...``.
  Gram rows, weight tables and JSON files all use this order.
* A pairing of 2m slots is a perfect matching, yielded as m sorted index
  pairs.  Pairings are generated lazily; at degree 16-18 there are millions
  to tens of millions of them and they must never be materialized.
* A delta pattern is a multiset of unordered label pairs.  Labels are either
  symbolic (strings) or concrete matrix indices (ints).  Contracting the
  summed labels turns each closed all-summed component into one factor N and
  leaves a residual equality structure on the remaining labels.
"""

from __future__ import annotations

from typing import Hashable, Iterable, Iterator, Sequence

Partition = tuple[int, ...]

Label = Hashable  # str for symbolic indices, int for concrete ones


def check_partition(parts: Sequence[int]) -> Partition:
    """Validate weak decrease and positivity; returns the tuple form."""
    p = tuple(int(x) for x in parts)
    if any(x < 1 for x in p):
        raise ValueError(f"partition parts must be >= 1: {p}")
    if any(p[i] < p[i + 1] for i in range(len(p) - 1)):
        raise ValueError(f"partition parts must be weakly decreasing: {p}")
    return p


def partitions_of(k: int) -> Iterator[Partition]:
    """All partitions of k in lexicographically descending order."""

    def rec(rest: int, maxpart: int, prefix: tuple[int, ...]) -> Iterator[Partition]:
        if rest == 0:
            yield prefix
            return
        for first in range(min(rest, maxpart), 0, -1):
            yield from rec(rest - first, first, prefix + (first,))

    yield from rec(k, k, ())


def enumerate_partitions(max_k: int) -> list[Partition]:
    """The empty partition plus all partitions of 1..max_k, canonical order."""
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    out: list[Partition] = [()]
    for k in range(1, max_k + 1):
        out.extend(partitions_of(k))
    return out


def set_partitions(items: Sequence) -> Iterator[list[tuple]]:
    """All set partitions of the given items, as lists of blocks (tuples)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in set_partitions(rest):
        for i in range(len(sub)):
            yield sub[:i] + [(first,) + sub[i]] + sub[i + 1 :]
        yield [(first,)] + sub


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def perfect_matchings(n: int) -> Iterator[tuple[tuple[int, int], ...]]:
    """All perfect matchings of {0..n-1}; empty for odd n.

    The lowest unmatched index is always paired next, so the stream is in a
    fixed deterministic order and has (n-1)!! elements.
    """
    if n % 2:
        return
    idx = list(range(n))

    def rec(avail: list[int]) -> Iterator[tuple[tuple[int, int], ...]]:
        if not avail:
            yield ()
            return
        first = avail[0]
        for j in range(1, len(avail)):
            partner = avail[j]
            rest = avail[1:j] + avail[j + 1 :]
            for tail in rec(rest):
                yield ((first, partner),) + tail

    yield from rec(idx)


def bipartite_matchings(left: Sequence[int], right: Sequence[int]) -> Iterator[tuple[tuple[int, int], ...]]:
    """All bijections pairing each left slot with a distinct right slot."""
    if len(left) != len(right):
        return

    def rec(i: int, avail: list[int]) -> Iterator[tuple[tuple[int, int], ...]]:
        if i == len(left):
            yield ()
            return
        for j in range(len(avail)):
            partner = avail[j]
            rest = avail[:j] + avail[j + 1 :]
            for tail in rec(i + 1, rest):
                yield ((left[i], partner),) + tail

    yield from rec(0, list(right))


def enumerate_pairings(conjugated: Sequence[bool], complex_entries: bool) -> Iterator[tuple[tuple[int, int], ...]]:
    """Stream the Wick pairings of slots described by their conjugation flags.

    Real entries (complex_entries=False) pair freely: (2m-1)!! matchings.
    Complex entries pair an unconjugated slot with a conjugated one: m!
    matchings, or an empty stream when the counts differ (the holomorphic
    moment vanishes).
    """
    n = len(conjugated)
    if n % 2:
        return
    if not complex_entries:
        if any(conjugated):
            raise ValueError("conjugation flags are not allowed for real entries")
        yield from perfect_matchings(n)
        return
    left = [i for i in range(n) if not conjugated[i]]
    right = [i for i in range(n) if conjugated[i]]
    yield from bipartite_matchings(left, right)


# -- delta contraction ---------------------------------------------------------------

Block = tuple[tuple[Label, ...], int | None]  # (sorted symbolic labels, concrete anchor)
DeltaStructure = tuple[Block, ...]


def _label_sort_key(label: Label):
    return (0, label) if isinstance(label, str) else (1, str(label))


def contract_deltas(
    edges: Iterable[tuple[Label, Label]],
    summed: Iterable[Label],
) -> tuple[DeltaStructure, int] | None:
    """Contract summed labels out of a delta pattern.

    Every connected component of the pattern forces all its labels equal.
    Summing a component that contains only summed labels gives one free
    choice of index, hence a factor N; components touching a free or
    concrete label are pinned.  Returns the residual structure on the
    non-summed labels together with the power of N, or None when two
    distinct concrete indices collide (the pattern is identically zero).

    The residual structure is a sorted tuple of blocks; each block is the
    sorted tuple of symbolic free labels forced equal, plus the concrete
    index they are pinned to (or None).  Blocks that constrain nothing (a
    single free label with no anchor) are dropped.
    """
    summed = set(summed)
    parent: dict[Label, Label] = {}

    def find(x: Label) -> Label:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        for v in (a, b):
            if v not in parent:
                parent[v] = v
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    for v in summed:
        if v not in parent:
            parent[v] = v

    comps: dict[Label, list[Label]] = {}
    for v in parent:
        comps.setdefault(find(v), []).append(v)

    power = 0
    blocks: list[Block] = []
    for members in comps.values():
        frees = sorted((v for v in members if v not in summed and isinstance(v, str)), key=_label_sort_key)
        concretes = {v for v in members if v not in summed and not isinstance(v, str)}
        if len(concretes) > 1:
            return None
        anchor = next(iter(concretes)) if concretes else None
        if not frees and anchor is None:
            power += 1
        elif len(frees) + (anchor is not None) >= 2:
            blocks.append((tuple(frees), anchor))
    blocks.sort(key=lambda b: tuple(_label_sort_key(x) for x in b[0]) + ((),))
    return tuple(blocks), power


def structure_to_delta_pairs(structure: DeltaStructure) -> list[tuple[str, str]]:
    """Flatten an equality structure into a chain of two-index deltas."""
    pairs: list[tuple[str, str]] = []
    for labels, anchor in structure:
        base = str(anchor) if anchor is not None else labels[0]
        rest = labels if anchor is not None else labels[1:]
        for lab in rest:
            pairs.append((base, lab))
    return pairs
