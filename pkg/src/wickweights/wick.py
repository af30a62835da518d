"""Gaussian Wick-contraction engine for matrix-entry and trace moments.

Ensembles
---------
orthogonal  real Gaussian entries,            <M_ij M_kl>   = d_ik d_jl / N
unitary     complex Gaussian entries,         <M_ij ~M_kl>  = d_ik d_jl / N
coe         complex symmetric Gaussian,       <~S_ij S_kl>  = (d_ik d_jl + d_il d_jk) / (N+1)

(~X is the complex conjugate; d is the Kronecker delta.)  Each second
moment is normalized so that <(M M+)_ij> = d_ij, which makes the unit
weight already reproduce the degree-2 target integrals.  For the symmetric
ensemble the exchange term contributes an extra unit under the internal
index sum, so its normalizing denominator is N+1 rather than N; the
published COE coefficient tables require exactly this convention.
Holomorphic pairs vanish for the complex ensembles, so their pairings are
bijections between conjugated and unconjugated slots; real slots pair
freely.

A moment is a sum over pairings of products of the elementary contractions
above, followed by contraction of all internal (summed) indices: every
closed all-summed index loop yields one factor N.  The engine walks the
pairing tree depth-first, carrying a union-find over index labels that it
rolls back on backtracking, so the per-pairing cost is a handful of array
operations.  At total degree 16-18 there are 15!! to 17!! pairings; they
are streamed, never materialized, and the walk can be split over worker
processes at the first branching level.

Labels in a monomial are symbolic (str, a free index), concrete (int, a
fixed matrix index) or internal summed tokens generated by the trace and
(M M+)-block wirings.
"""

from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

from . import cache
from .algebra import Poly, RatFunc
from .combinatorics import (
    DeltaStructure,
    Partition,
    _label_sort_key,
    check_partition,
    contract_deltas,
    double_factorial,
    set_partitions,
)

#: Cap on worker processes; None means os.cpu_count().  The CLI --threads
#: flag overrides this.
DEFAULT_WORKERS: int | None = None

_PARALLEL_MIN_LEAVES = 500_000


class Ensemble(str, enum.Enum):
    """Target matrix space, which fixes the elementary contraction rule."""

    ORTHOGONAL = "orthogonal"
    UNITARY = "unitary"
    COE = "coe"

    @property
    def complex_entries(self) -> bool:
        return self is not Ensemble.ORTHOGONAL

    @property
    def two_term(self) -> bool:
        return self is Ensemble.COE

    @property
    def pair_denominator(self) -> Poly:
        """Normalizer of one elementary contraction: N, or N+1 for the COE."""
        return Poly((1, 1)) if self is Ensemble.COE else Poly((0, 1))


class Slot(NamedTuple):
    """One matrix-entry factor M_(row,col), optionally conjugated."""

    row: object
    col: object
    conj: bool = False


_SLOT_RE = re.compile(r"(Mc?)\[\s*([A-Za-z_]\w*|\d+)\s*,\s*([A-Za-z_]\w*|\d+)\s*\]\Z")


def _parse_index(tok: str):
    return int(tok) if tok.isdigit() else tok


@dataclass(frozen=True)
class MonomialSpec:
    """An ordered product of matrix-entry factors."""

    slots: tuple[Slot, ...]

    def __post_init__(self):
        if not self.slots:
            raise ValueError("monomial must have at least one factor")

    @staticmethod
    def parse(text: str) -> "MonomialSpec":
        """Parse 'M[i,j] Mc[1,2] ...'; Mc is the conjugated entry."""
        slots = []
        for tok in text.split():
            m = _SLOT_RE.match(tok)
            if not m:
                raise ValueError(f"bad monomial factor {tok!r}; expected M[i,j] or Mc[i,j]")
            slots.append(Slot(_parse_index(m.group(2)), _parse_index(m.group(3)), m.group(1) == "Mc"))
        if not slots:
            raise ValueError("empty monomial")
        return MonomialSpec(tuple(slots))

    def validate(self, ensemble: Ensemble) -> None:
        if not ensemble.complex_entries and any(s.conj for s in self.slots):
            raise ValueError("conjugated entries are not defined for the orthogonal ensemble")

    @property
    def degree(self) -> int:
        return len(self.slots)

    def is_concrete(self) -> bool:
        return all(isinstance(s.row, int) and isinstance(s.col, int) for s in self.slots)


# -- delta expansions -----------------------------------------------------------------


class DeltaExpansion:
    """Linear combination of delta structures with RatFunc coefficients.

    The canonical form of any entry-monomial integral: keys are the residual
    equality structures on the free labels (see combinatorics.contract_deltas),
    values are exact rational functions of N.  Zero coefficients are dropped,
    so equality of expansions is dict equality.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict[DeltaStructure, RatFunc] | None = None):
        self.terms = {k: v for k, v in (terms or {}).items() if v}

    @staticmethod
    def zero() -> "DeltaExpansion":
        return DeltaExpansion()

    @staticmethod
    def unit(coeff: RatFunc | int = 1) -> "DeltaExpansion":
        return DeltaExpansion({(): RatFunc(coeff) if not isinstance(coeff, RatFunc) else coeff})

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: kv[0])

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, DeltaExpansion) and self.terms == other.terms

    def __add__(self, other: "DeltaExpansion") -> "DeltaExpansion":
        out = dict(self.terms)
        for k, v in other.terms.items():
            s = out.get(k)
            out[k] = v if s is None else s + v
        return DeltaExpansion(out)

    def __sub__(self, other: "DeltaExpansion") -> "DeltaExpansion":
        return self + other.scale(RatFunc(-1))

    def scale(self, c: RatFunc) -> "DeltaExpansion":
        if not c:
            return DeltaExpansion()
        return DeltaExpansion({k: v * c for k, v in self.terms.items()})

    def __mul__(self, other: "DeltaExpansion") -> "DeltaExpansion":
        """Product of expansions over disjoint free-label sets."""
        out: dict[DeltaStructure, RatFunc] = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                k = tuple(sorted(ka + kb, key=lambda b: tuple(_label_sort_key(x) for x in b[0])))
                v = va * vb
                s = out.get(k)
                out[k] = v if s is None else s + v
        return DeltaExpansion(out)

    def rename(self, mapping: dict[str, str]) -> "DeltaExpansion":
        out: dict[DeltaStructure, RatFunc] = {}
        for k, v in self.terms.items():
            blocks = []
            for labels, anchor in k:
                blocks.append((tuple(sorted((mapping.get(x, x) for x in labels), key=_label_sort_key)), anchor))
            blocks.sort(key=lambda b: tuple(_label_sort_key(x) for x in b[0]))
            out[tuple(blocks)] = v
        return DeltaExpansion(out)

    def as_ratfunc(self) -> RatFunc:
        """Collapse an expansion with no residual deltas to its scalar."""
        if not self.terms:
            return RatFunc(0)
        if set(self.terms) == {()}:
            return self.terms[()]
        raise ValueError("expansion still carries free-index deltas")

    def min_order(self) -> int | None:
        """Smallest decay exponent among the coefficients; None if empty."""
        orders = [v.order() for v in self.terms.values()]
        return min(orders) if orders else None

    def to_json(self) -> list:
        out = []
        for k, v in self.items():
            deltas = []
            for labels, anchor in k:
                base = str(anchor) if anchor is not None else labels[0]
                rest = labels if anchor is not None else labels[1:]
                deltas.extend([base, lab] for lab in rest)
            out.append({"deltas": deltas, "coeff": v.to_json()})
        return out

    @staticmethod
    def from_json(obj: list) -> "DeltaExpansion":
        """Inverse of to_json.  Numeric strings in the delta pairs are the
        concrete anchors (symbolic labels are identifiers, never digits)."""
        terms: dict[DeltaStructure, RatFunc] = {}
        for entry in obj:
            edges = []
            for a, b in entry["deltas"]:
                edges.append((int(a) if a.isdigit() else a, int(b) if b.isdigit() else b))
            res = contract_deltas(edges, ())
            if res is None:
                raise ValueError("inconsistent delta pattern in serialized expansion")
            structure, _ = res
            terms[structure] = RatFunc.from_json(entry["coeff"])
        return DeltaExpansion(terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "DeltaExpansion(0)"
        bits = []
        for k, v in self.items():
            pat = "".join(
                "d(" + ",".join(str(x) for x in labels) + ("," + str(a) if a is not None else "") + ")"
                for labels, a in k
            )
            bits.append(f"[{v}]{pat or '1'}")
        return "DeltaExpansion(" + " + ".join(bits) + ")"


# -- wiring helpers --------------------------------------------------------------------


class _FreshSummed:
    """Generates unique internal summed-index tokens.

    Tokens from different generators collide, so a generator joining new
    wiring onto existing slots must start past their tokens (see
    offset_past).
    """

    def __init__(self, start: int = 0):
        self._i = start

    def __call__(self) -> tuple:
        self._i += 1
        return ("~", self._i)

    @staticmethod
    def offset_past(slots: Sequence[Slot]) -> "_FreshSummed":
        top = 0
        for s in slots:
            for lab in (s.row, s.col):
                if isinstance(lab, tuple):
                    top = max(top, lab[1])
        return _FreshSummed(top)


def invariant_slots(ensemble: Ensemble, partition: Partition, fresh: _FreshSummed) -> list[Slot]:
    """Slots of prod_i tr((M M+)^{k_i}) with fresh summed indices.

    One factor (M M+)_{a,a'} contributes M_(a,b) times the adjoint entry:
    M_(a',b) for real entries, ~M_(a',b) for the unitary case, and ~S_(b,a')
    for the symmetric COE matrices (whose adjoint is the entrywise
    conjugate).
    """
    slots: list[Slot] = []
    for part in partition:
        a = [fresh() for _ in range(part)]
        b = [fresh() for _ in range(part)]
        for v in range(part):
            an = a[(v + 1) % part]
            slots.append(Slot(a[v], b[v], False))
            if ensemble is Ensemble.ORTHOGONAL:
                slots.append(Slot(an, b[v], False))
            elif ensemble is Ensemble.UNITARY:
                slots.append(Slot(an, b[v], True))
            else:
                slots.append(Slot(b[v], an, True))
    return slots


def gram_block_slots(ensemble: Ensemble, row, col, fresh: _FreshSummed) -> list[Slot]:
    """Slots of a single entrywise block (M M+)_(row,col)."""
    b = fresh()
    if ensemble is Ensemble.ORTHOGONAL:
        return [Slot(row, b, False), Slot(col, b, False)]
    if ensemble is Ensemble.UNITARY:
        return [Slot(row, b, False), Slot(col, b, True)]
    return [Slot(row, b, False), Slot(b, col, True)]


# -- compilation ------------------------------------------------------------------------


class _Comp(NamedTuple):
    mode: int  # 0 = real (free pairing), 1 = bipartite, 2 = bipartite two-term
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    nv: int
    a_list: tuple[int, ...]
    b_list: tuple[int, ...]
    anch: tuple[bool, ...]
    vals: tuple[tuple[int, int], ...]
    free_ids: tuple[int, ...]
    m: int


def _compile(ensemble: Ensemble, slots: Sequence[Slot]):
    """Map labels to dense vertex ids; returns (_Comp, id->label) or None.

    None means the moment vanishes structurally (odd degree, or unbalanced
    conjugation for complex entries).
    """
    n = len(slots)
    if n % 2:
        return None
    if ensemble.complex_entries:
        a_list = tuple(i for i, s in enumerate(slots) if not s.conj)
        b_list = tuple(i for i, s in enumerate(slots) if s.conj)
        if len(a_list) != len(b_list):
            return None
        mode = 2 if ensemble.two_term else 1
    else:
        if any(s.conj for s in slots):
            raise ValueError("conjugated entries are not defined for the orthogonal ensemble")
        a_list = tuple(range(n))
        b_list = ()
        mode = 0
    ids: dict = {}
    rows, cols = [], []
    for s in slots:
        for lab, acc in ((s.row, rows), (s.col, cols)):
            v = ids.get(lab)
            if v is None:
                v = ids[lab] = len(ids)
            acc.append(v)
    anch = [False] * len(ids)
    vals = []
    free_ids = []
    for lab, v in ids.items():
        if isinstance(lab, str):
            anch[v] = True
            free_ids.append(v)
        elif isinstance(lab, int):
            anch[v] = True
            vals.append((v, lab))
    comp = _Comp(
        mode, tuple(rows), tuple(cols), len(ids), a_list, b_list,
        tuple(anch), tuple(vals), tuple(free_ids), n // 2,
    )
    labels = {v: lab for lab, v in ids.items()}
    return comp, labels


def _leaf_estimate(comp: _Comp) -> int:
    if comp.mode == 0:
        return double_factorial(2 * comp.m - 1)
    est = 1
    for i in range(1, comp.m + 1):
        est *= i
    if comp.mode == 2:
        est <<= comp.m
    return est


# -- closed kernel: every label is summed ------------------------------------------------
#
# State: parent/size union-find without path compression (compression would
# break rollback), a merge counter, and a trail of (child, parent) roots.
# At a leaf the number of index loops is nv - merges, so the histogram is
# indexed by the merge count.  The linked list nxt[] holds the unmatched
# slots; the lowest one is always matched next, which makes the walk
# deterministic and the tree minimal.


def _closed_real(comp: _Comp, rest: list[int], parent: list[int], size: list[int],
                 merges0: int, hist: list[int]) -> None:
    rows, cols = comp.rows, comp.cols
    n = len(comp.rows)
    SEN = n
    nxt = [0] * (n + 1)
    for i in range(len(rest) - 1):
        nxt[rest[i]] = rest[i + 1]
    if rest:
        nxt[rest[-1]] = SEN
    tb = [0] * (comp.nv + 1)
    ta = [0] * (comp.nv + 1)

    # default-arg binding keeps the hot names in fast locals
    def rec(h, remaining, mg, tp, rows=rows, cols=cols, parent=parent, size=size,
            nxt=nxt, hist=hist, tb=tb, ta=ta, SEN=SEN):
        h2 = nxt[h]
        rh = rows[h]
        ch = cols[h]
        if remaining == 2:
            p = h2
            t0 = tp
            a = rh
            while parent[a] != a:
                a = parent[a]
            b = rows[p]
            while parent[b] != b:
                b = parent[b]
            if a != b:
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                tb[tp] = b
                ta[tp] = a
                tp += 1
                mg += 1
            a = ch
            while parent[a] != a:
                a = parent[a]
            b = cols[p]
            while parent[b] != b:
                b = parent[b]
            if a != b:
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                tb[tp] = b
                ta[tp] = a
                tp += 1
                mg += 1
            hist[mg] += 1
            while tp > t0:
                tp -= 1
                b = tb[tp]
                parent[b] = b
                size[ta[tp]] -= size[b]
            return
        q = -1
        p = h2
        while p != SEN:
            np_ = nxt[p]
            if q < 0:
                newhead = np_
            else:
                nxt[q] = np_
                newhead = h2
            mg2 = mg
            tp2 = tp
            a = rh
            while parent[a] != a:
                a = parent[a]
            b = rows[p]
            while parent[b] != b:
                b = parent[b]
            if a != b:
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                tb[tp2] = b
                ta[tp2] = a
                tp2 += 1
                mg2 += 1
            a = ch
            while parent[a] != a:
                a = parent[a]
            b = cols[p]
            while parent[b] != b:
                b = parent[b]
            if a != b:
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                tb[tp2] = b
                ta[tp2] = a
                tp2 += 1
                mg2 += 1
            rec(newhead, remaining - 2, mg2, tp2)
            while tp2 > tp:
                tp2 -= 1
                b = tb[tp2]
                parent[b] = b
                size[ta[tp2]] -= size[b]
            if q >= 0:
                nxt[q] = p
            q = p
            p = np_

    if not rest:
        hist[merges0] += 1
        return
    rec(rest[0], len(rest), merges0, 0)


def _closed_bip(comp: _Comp, ai0: int, b_rest: list[int], parent: list[int], size: list[int],
                merges0: int, hist: list[int]) -> None:
    rows, cols = comp.rows, comp.cols
    a_list = comp.a_list
    two = comp.mode == 2
    n = len(comp.rows)
    SEN = n
    nxt = [0] * (n + 1)
    for i in range(len(b_rest) - 1):
        nxt[b_rest[i]] = b_rest[i + 1]
    if b_rest:
        nxt[b_rest[-1]] = SEN
    tb = [0] * (comp.nv + 1)
    ta = [0] * (comp.nv + 1)
    m = comp.m

    def rec(i, h, mg, tp, rows=rows, cols=cols, parent=parent, size=size,
            nxt=nxt, hist=hist, tb=tb, ta=ta, SEN=SEN, a_list=a_list, m=m, two=two):
        s = a_list[i]
        rh = rows[s]
        ch = cols[s]
        last = i + 1 == m
        q = -1
        p = h
        while p != SEN:
            np_ = nxt[p]
            if q < 0:
                newhead = np_
            else:
                nxt[q] = np_
                newhead = h
            for variant in (0, 1) if two else (0,):
                if variant == 0:
                    x1, x2 = rows[p], cols[p]
                else:
                    x1, x2 = cols[p], rows[p]
                mg2 = mg
                tp2 = tp
                a = rh
                while parent[a] != a:
                    a = parent[a]
                b = x1
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if size[a] < size[b]:
                        a, b = b, a
                    parent[b] = a
                    size[a] += size[b]
                    tb[tp2] = b
                    ta[tp2] = a
                    tp2 += 1
                    mg2 += 1
                a = ch
                while parent[a] != a:
                    a = parent[a]
                b = x2
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if size[a] < size[b]:
                        a, b = b, a
                    parent[b] = a
                    size[a] += size[b]
                    tb[tp2] = b
                    ta[tp2] = a
                    tp2 += 1
                    mg2 += 1
                if last:
                    hist[mg2] += 1
                else:
                    rec(i + 1, newhead, mg2, tp2)
                while tp2 > tp:
                    tp2 -= 1
                    b = tb[tp2]
                    parent[b] = b
                    size[ta[tp2]] -= size[b]
            if q >= 0:
                nxt[q] = p
            q = p
            p = np_

    if not b_rest:
        hist[merges0] += 1
        return
    rec(ai0, b_rest[0], merges0, 0)


# -- open kernel: free or concrete labels present ----------------------------------------
#
# Adds per-root bookkeeping: anch marks components containing a free or
# concrete label, val carries the concrete index a component is pinned to.
# n_pure counts unanchored components (each worth a factor N at the leaf).
# A merge of two distinct concrete values kills the whole subtree.


class _OpenState:
    __slots__ = ("parent", "size", "anch", "val", "n_pure", "trail")

    def __init__(self, comp: _Comp):
        self.parent = list(range(comp.nv))
        self.size = [1] * comp.nv
        self.anch = list(comp.anch)
        self.val: list = [None] * comp.nv
        for v, x in comp.vals:
            self.val[v] = x
        self.n_pure = comp.nv - sum(comp.anch)
        self.trail: list = []

    def link(self, x: int, y: int) -> bool:
        parent = self.parent
        a = x
        while parent[a] != a:
            a = parent[a]
        b = y
        while parent[b] != b:
            b = parent[b]
        if a == b:
            return True
        val = self.val
        va, vb = val[a], val[b]
        if va is not None and vb is not None and va != vb:
            return False
        size = self.size
        if size[a] < size[b]:
            a, b = b, a
            va, vb = vb, va
        anch = self.anch
        self.trail.append((b, a, anch[a], val[a]))
        parent[b] = a
        size[a] += size[b]
        if not (anch[a] and anch[b]):
            self.n_pure -= 1
            if anch[b]:
                anch[a] = True
        if va is None and vb is not None:
            val[a] = vb
        return True

    def undo_to(self, t: int) -> None:
        trail = self.trail
        parent, size, anch, val = self.parent, self.size, self.anch, self.val
        while len(trail) > t:
            b, a, pa, pv = trail.pop()
            parent[b] = b
            size[a] -= size[b]
            if not (pa and anch[b]):
                self.n_pure += 1
            anch[a] = pa
            val[a] = pv

    def leaf_key(self, free_ids: tuple[int, ...]):
        parent, val = self.parent, self.val
        groups: dict[int, list[int]] = {}
        for f in free_ids:
            a = f
            while parent[a] != a:
                a = parent[a]
            g = groups.get(a)
            if g is None:
                groups[a] = [f]
            else:
                g.append(f)
        blocks = []
        for r, mem in groups.items():
            v = val[r]
            if v is None and len(mem) == 1:
                continue
            blocks.append((tuple(mem), v))
        blocks.sort(key=lambda blk: blk[0])
        return tuple(blocks)

    def leaf_roots(self, free_ids: tuple[int, ...]) -> tuple[int, ...]:
        """Cheap leaf signature when no concrete values are in play: the
        root of each free vertex.  Grouping by signature is finer than
        grouping by pattern, so keys are canonicalized after the walk."""
        parent = self.parent
        out = []
        for f in free_ids:
            while parent[f] != f:
                f = parent[f]
            out.append(f)
        return tuple(out)


def _open_real(comp: _Comp, rest: list[int], st: _OpenState, counts: dict) -> None:
    rows, cols, free_ids = comp.rows, comp.cols, comp.free_ids
    n = len(rows)
    SEN = n
    nxt = [0] * (n + 1)
    for i in range(len(rest) - 1):
        nxt[rest[i]] = rest[i + 1]
    if rest:
        nxt[rest[-1]] = SEN
    fast = not comp.vals

    # same union-find-with-trail idea as the closed kernel, plus anchor and
    # concrete-value bookkeeping; n_pure rides along as a recursion argument
    # so rollback never has to restore it
    def rec(h, remaining, npure, rows=rows, cols=cols, parent=st.parent, size=st.size,
            anch=st.anch, val=st.val, trail=st.trail, nxt=nxt, SEN=SEN,
            counts=counts, free_ids=free_ids, fast=fast, st=st):
        h2 = nxt[h]
        rh = rows[h]
        ch = cols[h]
        q = -1
        p = h2
        while p != SEN:
            pn = nxt[p]
            if q < 0:
                newhead = pn
            else:
                nxt[q] = pn
                newhead = h2
            t0 = len(trail)
            np2 = npure
            ok = True
            for x, y in ((rh, rows[p]), (ch, cols[p])):
                a = x
                while parent[a] != a:
                    a = parent[a]
                b = y
                while parent[b] != b:
                    b = parent[b]
                if a == b:
                    continue
                va = val[a]
                vb = val[b]
                if va is not None and vb is not None and va != vb:
                    ok = False
                    break
                if size[a] < size[b]:
                    a, b = b, a
                    va, vb = vb, va
                trail.append((b, a, anch[a], val[a]))
                parent[b] = a
                size[a] += size[b]
                if anch[a]:
                    if not anch[b]:
                        np2 -= 1
                else:
                    np2 -= 1
                    if anch[b]:
                        anch[a] = True
                if va is None and vb is not None:
                    val[a] = vb
            if ok:
                if remaining == 2:
                    if fast:
                        out = []
                        for f in free_ids:
                            while parent[f] != f:
                                f = parent[f]
                            out.append(f)
                        key = (tuple(out), np2)
                    else:
                        st.n_pure = np2
                        key = (st.leaf_key(free_ids), np2)
                    counts[key] = counts.get(key, 0) + 1
                else:
                    rec(newhead, remaining - 2, np2)
            while len(trail) > t0:
                b, a, pa, pv = trail.pop()
                parent[b] = b
                size[a] -= size[b]
                anch[a] = pa
                val[a] = pv
            if q >= 0:
                nxt[q] = p
            q = p
            p = pn

    if not rest:
        leaf = st.leaf_roots if fast else st.leaf_key
        key = (leaf(free_ids), st.n_pure)
        counts[key] = counts.get(key, 0) + 1
        return
    rec(rest[0], len(rest), st.n_pure)


def _open_bip(comp: _Comp, ai0: int, b_rest: list[int], st: _OpenState, counts: dict) -> None:
    rows, cols, free_ids = comp.rows, comp.cols, comp.free_ids
    a_list = comp.a_list
    two = comp.mode == 2
    n = len(rows)
    SEN = n
    nxt = [0] * (n + 1)
    for i in range(len(b_rest) - 1):
        nxt[b_rest[i]] = b_rest[i + 1]
    if b_rest:
        nxt[b_rest[-1]] = SEN
    fast = not comp.vals
    m = comp.m

    def rec(i, h, npure, rows=rows, cols=cols, parent=st.parent, size=st.size,
            anch=st.anch, val=st.val, trail=st.trail, nxt=nxt, SEN=SEN,
            counts=counts, free_ids=free_ids, fast=fast, st=st, a_list=a_list,
            m=m, two=two):
        s = a_list[i]
        rh = rows[s]
        ch = cols[s]
        last = i + 1 == m
        q = -1
        p = h
        while p != SEN:
            pn = nxt[p]
            if q < 0:
                newhead = pn
            else:
                nxt[q] = pn
                newhead = h
            for variant in (0, 1) if two else (0,):
                if variant == 0:
                    wires = ((rh, rows[p]), (ch, cols[p]))
                else:
                    wires = ((rh, cols[p]), (ch, rows[p]))
                t0 = len(trail)
                np2 = npure
                ok = True
                for x, y in wires:
                    a = x
                    while parent[a] != a:
                        a = parent[a]
                    b = y
                    while parent[b] != b:
                        b = parent[b]
                    if a == b:
                        continue
                    va = val[a]
                    vb = val[b]
                    if va is not None and vb is not None and va != vb:
                        ok = False
                        break
                    if size[a] < size[b]:
                        a, b = b, a
                        va, vb = vb, va
                    trail.append((b, a, anch[a], val[a]))
                    parent[b] = a
                    size[a] += size[b]
                    if anch[a]:
                        if not anch[b]:
                            np2 -= 1
                    else:
                        np2 -= 1
                        if anch[b]:
                            anch[a] = True
                    if va is None and vb is not None:
                        val[a] = vb
                if ok:
                    if last:
                        if fast:
                            out = []
                            for f in free_ids:
                                while parent[f] != f:
                                    f = parent[f]
                                out.append(f)
                            key = (tuple(out), np2)
                        else:
                            st.n_pure = np2
                            key = (st.leaf_key(free_ids), np2)
                        counts[key] = counts.get(key, 0) + 1
                    else:
                        rec(i + 1, newhead, np2)
                while len(trail) > t0:
                    b, a, pa, pv = trail.pop()
                    parent[b] = b
                    size[a] -= size[b]
                    anch[a] = pa
                    val[a] = pv
            if q >= 0:
                nxt[q] = p
            q = p
            p = pn

    if not b_rest:
        leaf = st.leaf_roots if fast else st.leaf_key
        key = (leaf(free_ids), st.n_pure)
        counts[key] = counts.get(key, 0) + 1
        return
    rec(ai0, b_rest[0], st.n_pure)


# -- dispatch and parallel splitting ------------------------------------------------------


def _apply_prefix_closed(comp: _Comp, prefix, parent: list[int], size: list[int]) -> int:
    merges = 0
    rows, cols = comp.rows, comp.cols
    for sa, sb, variant in prefix:
        if variant == 0:
            pairs = ((rows[sa], rows[sb]), (cols[sa], cols[sb]))
        else:
            pairs = ((rows[sa], cols[sb]), (cols[sa], rows[sb]))
        for x, y in pairs:
            a = x
            while parent[a] != a:
                a = parent[a]
            b = y
            while parent[b] != b:
                b = parent[b]
            if a != b:
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]
                merges += 1
    return merges


def _closed_task(args):
    comp, prefix = args
    comp = _Comp(*comp)
    parent = list(range(comp.nv))
    size = [1] * comp.nv
    merges = _apply_prefix_closed(comp, prefix, parent, size)
    hist = [0] * (comp.nv + 1)
    used = {s for sa_sb_v in prefix for s in sa_sb_v[:2]}
    if comp.mode == 0:
        rest = [s for s in comp.a_list if s not in used]
        _closed_real(comp, rest, parent, size, merges, hist)
    else:
        b_rest = [s for s in comp.b_list if s not in used]
        _closed_bip(comp, len(prefix), b_rest, parent, size, merges, hist)
    return hist


def _canonical_root_counts(counts: dict, free_ids: tuple[int, ...]) -> dict:
    """Regroup raw leaf-root signatures into canonical block patterns."""
    out: dict = {}
    conv: dict = {}
    for (roots, n_pure), c in counts.items():
        blocks = conv.get(roots)
        if blocks is None:
            groups: dict[int, list[int]] = {}
            for f, r in zip(free_ids, roots):
                groups.setdefault(r, []).append(f)
            blocks = tuple(sorted((tuple(mem), None) for mem in groups.values() if len(mem) > 1))
            conv[roots] = blocks
        key = (blocks, n_pure)
        out[key] = out.get(key, 0) + c
    return out


def _open_task(args):
    comp, prefix = args
    comp = _Comp(*comp)
    st = _OpenState(comp)
    rows, cols = comp.rows, comp.cols
    counts: dict = {}
    for sa, sb, variant in prefix:
        if variant == 0:
            ok = st.link(rows[sa], rows[sb]) and st.link(cols[sa], cols[sb])
        else:
            ok = st.link(rows[sa], cols[sb]) and st.link(cols[sa], rows[sb])
        if not ok:
            return counts
    used = {s for sa_sb_v in prefix for s in sa_sb_v[:2]}
    if comp.mode == 0:
        rest = [s for s in comp.a_list if s not in used]
        _open_real(comp, rest, st, counts)
    else:
        b_rest = [s for s in comp.b_list if s not in used]
        _open_bip(comp, len(prefix), b_rest, st, counts)
    if not comp.vals:
        counts = _canonical_root_counts(counts, comp.free_ids)
    return counts


def _prefixes(comp: _Comp) -> list[list[tuple[int, int, int]]]:
    """First-level branch prefixes; subtrees are equal-sized, so splitting
    at depth one is enough to balance a handful of workers."""
    variants = (0, 1) if comp.mode == 2 else (0,)
    out = []
    if comp.mode == 0:
        first = comp.a_list[0]
        for p in comp.a_list[1:]:
            out.append([(first, p, 0)])
    else:
        first = comp.a_list[0]
        for p in comp.b_list:
            for v in variants:
                out.append([(first, p, v)])
    return out


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = DEFAULT_WORKERS
    if workers is None:
        workers = os.cpu_count() or 1
    return max(1, int(workers))


def _run_parallel(comp: _Comp, task, merge, init, workers: int):
    import multiprocessing as mp

    prefixes = _prefixes(comp)
    args = [(tuple(comp), p) for p in prefixes]
    try:
        ctx = mp.get_context("fork")
        with ctx.Pool(workers) as pool:
            acc = init
            for part in pool.imap_unordered(task, args):
                acc = merge(acc, part)
            return acc
    except (OSError, ValueError):
        acc = init
        for a in args:
            acc = merge(acc, task(a))
        return acc


def _merge_hist(a: list[int], b: list[int]) -> list[int]:
    return [x + y for x, y in zip(a, b)]


def _merge_counts(a: dict, b: dict) -> dict:
    for k, v in b.items():
        a[k] = a.get(k, 0) + v
    return a


def _sum_closed(comp: _Comp, workers: int) -> list[int]:
    if workers > 1 and _leaf_estimate(comp) >= _PARALLEL_MIN_LEAVES:
        return _run_parallel(comp, _closed_task, _merge_hist, [0] * (comp.nv + 1), workers)
    return _closed_task((tuple(comp), []))


def _sum_open(comp: _Comp, workers: int) -> dict:
    if workers > 1 and _leaf_estimate(comp) >= _PARALLEL_MIN_LEAVES:
        return _run_parallel(comp, _open_task, _merge_counts, {}, workers)
    return _open_task((tuple(comp), []))


def _ratfunc_from_powers(powers: dict[int, int]) -> RatFunc:
    """Sum of count * N^power over entries, as one canonical rational function."""
    powers = {p: c for p, c in powers.items() if c}
    if not powers:
        return RatFunc(0)
    shift = min(0, min(powers))
    coeffs = [0] * (max(powers) - shift + 1)
    for p, c in powers.items():
        coeffs[p - shift] = c
    return RatFunc(Poly(coeffs), Poly.n_power(-shift))


# -- public moments -----------------------------------------------------------------------


def elementary_contraction(ensemble: Ensemble, slot_a: Slot, slot_b: Slot) -> DeltaExpansion:
    """Second moment of a pair of entries under the ensemble's rule."""
    for s in (slot_a, slot_b):
        if not ensemble.complex_entries and s.conj:
            raise ValueError("conjugated entries are not defined for the orthogonal ensemble")
    if ensemble.complex_entries and slot_a.conj == slot_b.conj:
        return DeltaExpansion.zero()
    wirings = [((slot_a.row, slot_b.row), (slot_a.col, slot_b.col))]
    if ensemble.two_term:
        wirings.append(((slot_a.row, slot_b.col), (slot_a.col, slot_b.row)))
    inv = RatFunc(1, ensemble.pair_denominator)
    out = DeltaExpansion.zero()
    for edges in wirings:
        res = contract_deltas(edges, ())
        if res is None:
            continue
        structure, power = res
        out = out + DeltaExpansion({structure: inv * RatFunc.n_power(power)})
    return out


def _slots_expansion(ensemble: Ensemble, slots: Sequence[Slot], workers: int | None = None) -> DeltaExpansion:
    """<product of slots>_g as a delta expansion over the free labels."""
    if not slots:
        return DeltaExpansion.unit()
    compiled = _compile(ensemble, slots)
    if compiled is None:
        return DeltaExpansion.zero()
    comp, labels = compiled
    counts = _sum_open(comp, resolve_workers(workers))
    scale = RatFunc(1, ensemble.pair_denominator ** comp.m)
    by_pattern: dict[tuple, dict[int, int]] = {}
    for (key, n_pure), c in counts.items():
        d = by_pattern.setdefault(key, {})
        d[n_pure] = d.get(n_pure, 0) + c
    out: dict[DeltaStructure, RatFunc] = {}
    for key, powers in by_pattern.items():
        blocks = []
        for mem, anchor in key:
            blocks.append((tuple(sorted((labels[v] for v in mem), key=_label_sort_key)), anchor))
        blocks.sort(key=lambda blk: tuple(_label_sort_key(x) for x in blk[0]))
        coeff = _ratfunc_from_powers(powers) * scale
        k = tuple(blocks)
        prev = out.get(k)
        out[k] = coeff if prev is None else prev + coeff
    return DeltaExpansion(out)


def gaussian_entry_moment(ensemble: Ensemble, monomial: MonomialSpec, workers: int | None = None) -> DeltaExpansion:
    """Gaussian average of an entry monomial, summed over all Wick pairings."""
    monomial.validate(ensemble)
    return _slots_expansion(ensemble, monomial.slots, workers)


_trace_memo: dict[tuple, RatFunc] = {}


def trace_multiset_key(invariants: Iterable[Partition]) -> tuple[Partition, ...]:
    return tuple(sorted((check_partition(p) for p in invariants), reverse=True))


def gaussian_trace_moment(
    ensemble: Ensemble,
    invariants: Iterable[Partition],
    workers: int | None = None,
    use_disk: bool = True,
) -> RatFunc:
    """Exact <prod_i tr((M M+)^{k_i})>_g as a rational function of N.

    Memoized in memory and, for the expensive high-degree entries, on disk
    (same cache directory as the weight tables).
    """
    multiset = trace_multiset_key(invariants)
    key = (ensemble.value, multiset)
    hit = _trace_memo.get(key)
    if hit is not None:
        return hit
    slug = "_".join(".".join(str(x) for x in p) for p in multiset) or "empty"
    fname = f"trace_{ensemble.value}_{slug}.json"
    if use_disk:
        obj = cache.load_json(fname)
        if obj is not None:
            val = RatFunc.from_json(obj["value"])
            _trace_memo[key] = val
            return val
    flat: Partition = tuple(sorted((x for p in multiset for x in p), reverse=True))
    if not flat:
        val = RatFunc(1)
    else:
        slots = invariant_slots(ensemble, flat, _FreshSummed())
        # all labels summed: use the closed kernel
        compiled = _compile(ensemble, slots)
        if compiled is None:
            val = RatFunc(0)
        else:
            comp, _ = compiled
            hist = _sum_closed(comp, resolve_workers(workers))
            powers: dict[int, int] = {}
            for merges, c in enumerate(hist):
                if c:
                    p = comp.nv - merges
                    powers[p] = powers.get(p, 0) + c
            val = _ratfunc_from_powers(powers) / RatFunc(ensemble.pair_denominator ** comp.m)
    _trace_memo[key] = val
    if use_disk:
        cache.store_json(fname, {"ensemble": ensemble.value, "invariants": [list(p) for p in multiset], "value": val.to_json()})
    return val


def moment_with_invariants(
    ensemble: Ensemble,
    slots: Sequence[Slot],
    invariants: Iterable[Partition],
    workers: int | None = None,
) -> DeltaExpansion:
    """<prod_i tr((M M+)^{k_i}) * prod slots>_g with fresh internal indices."""
    fresh = _FreshSummed.offset_past(slots)
    flat: Partition = tuple(sorted((x for p in invariants for x in p), reverse=True))
    full = invariant_slots(ensemble, flat, fresh) + list(slots)
    return _slots_expansion(ensemble, full, workers)


def gram_product_slots(ensemble: Ensemble, k: int) -> tuple[list[Slot], list[tuple[str, str]]]:
    """Slots of (M M+)_(i1,l1) ... (M M+)_(ik,lk) plus the label pairs."""
    fresh = _FreshSummed()
    slots: list[Slot] = []
    labels = []
    for v in range(1, k + 1):
        slots.extend(gram_block_slots(ensemble, f"i{v}", f"l{v}", fresh))
        labels.append((f"i{v}", f"l{v}"))
    return slots, labels


# -- connected (completely correlated) parts ----------------------------------------------


def cumulants_from_moments(items: Sequence, moment_fn: Callable[[tuple], DeltaExpansion]) -> DeltaExpansion:
    """Connected part of the full item list under block factorization.

    moment_fn maps a tuple of items to the full Gaussian moment of their
    combined product.  The connected part subtracts, recursively, every
    splitting into two or more complete contractions.
    """
    memo: dict[frozenset, DeltaExpansion] = {}

    def cumulant(sub: tuple) -> DeltaExpansion:
        key = frozenset(sub)
        hit = memo.get(key)
        if hit is not None:
            return hit
        total = moment_fn(sub)
        for blocks in set_partitions(sub):
            if len(blocks) < 2:
                continue
            prod = DeltaExpansion.unit()
            for b in blocks:
                prod = prod * cumulant(tuple(b))
            total = total - prod
        memo[key] = total
        return total

    return cumulant(tuple(items))


def connected_entry_moment(ensemble: Ensemble, k: int, workers: int | None = None) -> DeltaExpansion:
    """Connected part of <(M M+)_(i1,l1) ... (M M+)_(ik,lk)>_g."""
    if k < 1:
        raise ValueError("need at least one factor")
    memo_by_size: dict[int, DeltaExpansion] = {}

    def block_labels(v: int) -> tuple[str, str]:
        return (f"i{v}", f"l{v}")

    def moment_fn(sub: tuple) -> DeltaExpansion:
        s = len(sub)
        base = memo_by_size.get(s)
        if base is None:
            fresh = _FreshSummed()
            slots: list[Slot] = []
            for v in range(1, s + 1):
                slots.extend(gram_block_slots(ensemble, f"i{v}", f"l{v}", fresh))
            base = _slots_expansion(ensemble, slots, workers)
            memo_by_size[s] = base
        mapping = {}
        for t, v in enumerate(sorted(sub), start=1):
            mapping[f"i{t}"] = f"i{v}"
            mapping[f"l{t}"] = f"l{v}"
        return base.rename(mapping)

    return cumulants_from_moments(tuple(range(1, k + 1)), moment_fn)


def connected_trace_moment(ensemble: Ensemble, invariants: Sequence[Partition], workers: int | None = None) -> RatFunc:
    """Connected part of a product of trace invariants (scalar case)."""
    items = tuple(range(len(invariants)))
    parts = [check_partition(p) for p in invariants]

    def moment_fn(sub: tuple) -> DeltaExpansion:
        val = gaussian_trace_moment(ensemble, [parts[i] for i in sub], workers=workers)
        return DeltaExpansion.unit(val)

    return cumulants_from_moments(items, moment_fn).as_ratfunc()
