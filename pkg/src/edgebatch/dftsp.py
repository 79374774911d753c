"""Depth-first tree search with online pruning over per-class batch counts.

The candidate pool is split into classes by output length.  Because every
constraint except the uplink sum depends only on how many requests come
from each class, and the uplink sum is minimized by taking each class's
cheapest members, a batch can be represented by a count vector: one count
per class, recovered as the prefix of the class sorted by uplink demand.

The search walks count vectors depth-first, largest count first, so the
first leaf reached is the greedy low-output-length assignment.  A node is
a solution candidate when its counts sum to the target size; it is dead
when the deepest class is reached short of the target.  Pruning cuts any
node (and its cheaper siblings) whose remaining deeper capacity cannot
reach the target.  The tree is never materialized; an explicit cursor
stack replaces per-node visited marks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

from .feasibility import (EdgeContext, KnapsackCoefficients, Request,
                          check_direct, check_knapsack, derive_coefficients, leq)
from .radio import RadioConfig, min_uplink_fraction


@dataclass(frozen=True)
class ClassPartition:
    """Candidate pool split by output length, each class cheapest-uplink first."""

    lengths: tuple[int, ...]                    # ascending output lengths
    classes: tuple[tuple[Request, ...], ...]    # per class, ascending uplink fraction
    keys: tuple[tuple[float, ...], ...]         # matching uplink-fraction sort keys

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.classes)


@dataclass
class SearchOutcome:
    """Result of one search: the batch found (if any) plus instrumentation."""

    solution: list[Request] | None = None
    counts: tuple[int, ...] = ()
    z_found: int = 0
    nodes_visited: int = 0
    nodes_pruned: int = 0
    trajectory: list[tuple[int, int, int, int]] | None = None  # (z, d, visited, pruned)


def partition(pool, radio: RadioConfig, ladder=None) -> ClassPartition:
    """Group a candidate pool by output length.

    Classes are ordered by ascending output length and, within a class, by
    ascending minimum uplink fraction with request id as the tie-break.
    When ``ladder`` is given, any request whose output length is not on it
    is rejected; classes without members are omitted.
    """
    pool = list(pool)
    if ladder is not None:
        allowed = set(ladder)
        for r in pool:
            if r.output_tokens not in allowed:
                raise ValueError(
                    f"request {r.id} output length {r.output_tokens} is not on "
                    f"the class ladder {sorted(allowed)}"
                )
    by_len: dict[int, list[tuple[float, int, Request]]] = {}
    for r in pool:
        key = min_uplink_fraction(r.prompt_tokens, r.link, radio)
        by_len.setdefault(r.output_tokens, []).append((key, r.id, r))
    lengths = sorted(by_len)
    classes = []
    keys = []
    for n in lengths:
        members = sorted(by_len[n], key=lambda item: (item[0], item[1]))
        classes.append(tuple(r for _, _, r in members))
        keys.append(tuple(k for k, _, _ in members))
    return ClassPartition(tuple(lengths), tuple(classes), tuple(keys))


def recover_subset(part: ClassPartition, counts) -> list[Request]:
    """Materialize the batch a count vector denotes (per-class cheapest prefix)."""
    counts = list(counts) + [0] * (len(part.classes) - len(counts))
    subset: list[Request] = []
    for k, v in enumerate(counts):
        if not 0 <= v <= len(part.classes[k]):
            raise ValueError(f"count {v} out of range for class {part.lengths[k]}")
        subset.extend(part.classes[k][:v])
    return subset


class SearchTables:
    """Per-partition prefix tables so a leaf check costs O(classes)."""

    __slots__ = ("sizes", "tail", "lengths", "weights", "up", "dn", "tau_min_prefix")

    def __init__(self, sizes, tail, lengths, weights, up, dn, tau_min_prefix):
        self.sizes = sizes
        self.tail = tail
        self.lengths = lengths
        self.weights = weights
        self.up = up
        self.dn = dn
        self.tau_min_prefix = tau_min_prefix

    @classmethod
    def build(cls, part: ClassPartition, coeff: KnapsackCoefficients) -> "SearchTables":
        sizes = [len(c) for c in part.classes]
        ncls = len(sizes)
        tail = [0] * (ncls + 1)
        for k in range(ncls - 1, -1, -1):
            tail[k] = tail[k + 1] + sizes[k]
        lengths = list(part.lengths)
        weights = [coeff.latency_weight(n) for n in lengths]
        up, dn, taus = [], [], []
        for k, members in enumerate(part.classes):
            cu = [0.0]
            cd = [0.0]
            tm = [math.inf]
            n = lengths[k]
            for r in members:
                cu.append(cu[-1] + coeff.k_up[r.id] * r.prompt_tokens)
                cd.append(cd[-1] + coeff.k_down[r.id] * n)
                tm.append(min(tm[-1], coeff.tau_base(r)))
            up.append(cu)
            dn.append(cd)
            taus.append(tm)
        return cls(sizes, tail, lengths, weights, up, dn, taus)


def dfs(z: int, part: ClassPartition, coeff: KnapsackCoefficients,
        tau_min: float | None = None, *, pruning: bool = True,
        inclusive_bound: bool = False, exact_tau: bool = False,
        tables: SearchTables | None = None) -> SearchOutcome:
    """Search for a feasible batch of exactly ``z`` requests.

    Children are explored largest count first, starting from
    ``min(remaining, class size)``; a count-sum hit of ``z`` is checked via
    the reduced form and returned on success.  A dead end at the deepest
    class marks its cheaper siblings visited one by one (they are just as
    dead), which is counted as visiting work.  With ``pruning`` on, a node
    with too little deeper capacity is skipped together with its cheaper
    siblings in one step and tallied under ``nodes_pruned`` instead.

    ``tau_min`` is the conservative normalized deadline budget; with
    ``exact_tau`` the check instead uses the chosen batch's own worst
    member, which never finds less than the conservative check.
    """
    if z < 1:
        raise ValueError("z must be >= 1")
    if tau_min is None and not exact_tau:
        raise ValueError("tau_min is required unless exact_tau is set")
    t = tables if tables is not None else SearchTables.build(part, coeff)
    sizes = t.sizes
    ncls = len(sizes)
    tail = t.tail
    k3z = coeff.k3 * z
    slot_cap = coeff.slot_budget(z)
    lat_cap = slot_cap if exact_tau else min(tau_min, slot_cap)
    mem_cap = coeff.mem_budget(z)
    # Root node: with pruning, an unreachable target cuts the whole tree.
    if pruning and tail[0] < z:
        return SearchOutcome(nodes_visited=0, nodes_pruned=1)
    visited = 1
    pruned = 0
    if ncls == 0:
        return SearchOutcome(nodes_visited=visited)
    up, dn = t.up, t.dn
    lengths, weights, taus = t.lengths, t.weights, t.tau_min_prefix
    val = [0] * ncls
    sel = [0] * (ncls + 1)
    up_acc = [0.0] * (ncls + 1)
    dn_acc = [0.0] * (ncls + 1)
    mem_acc = [0] * (ncls + 1)
    lat_acc = [0.0] * (ncls + 1)
    tau_acc = [math.inf] * (ncls + 1)
    k = 0
    x = z if z < sizes[0] else sizes[0]
    while True:
        skip = False
        if pruning:
            cap_below = tail[k + 1] + (sizes[k] if inclusive_bound else 0)
            if sel[k] + x + cap_below < z:
                pruned += x + 1  # this node plus its cheaper siblings
                skip = True
        if not skip:
            visited += 1
            total = sel[k] + x
            if total == z:
                u = up_acc[k] + up[k][x]
                dl = dn_acc[k] + dn[k][x]
                mem = mem_acc[k] + x * lengths[k]
                lat = lat_acc[k] + x * weights[k]
                if exact_tau:
                    tau = tau_acc[k] if x == 0 else min(tau_acc[k], taus[k][x])
                    cap = min(tau - k3z, slot_cap)
                else:
                    cap = lat_cap
                if leq(u, 1.0) and leq(dl, 1.0) and leq(mem, mem_cap) and leq(lat, cap):
                    counts = tuple(val[:k]) + (x,) + (0,) * (ncls - k - 1)
                    return SearchOutcome(
                        solution=recover_subset(part, counts), counts=counts,
                        z_found=z, nodes_visited=visited, nodes_pruned=pruned)
                if x > 0:
                    x -= 1
                    continue
            elif k == ncls - 1:
                # Dead end at maximum depth: cheaper siblings are marked
                # visited one by one before backtracking.
                visited += x
            else:
                val[k] = x
                sel[k + 1] = total
                up_acc[k + 1] = up_acc[k] + up[k][x]
                dn_acc[k + 1] = dn_acc[k] + dn[k][x]
                mem_acc[k + 1] = mem_acc[k] + x * lengths[k]
                lat_acc[k + 1] = lat_acc[k] + x * weights[k]
                tau_acc[k + 1] = tau_acc[k] if x == 0 else min(tau_acc[k], taus[k][x])
                k += 1
                rem = z - total
                x = rem if rem < sizes[k] else sizes[k]
                continue
        # Backtrack to the next unexplored sibling up the path.
        while True:
            if k == 0:
                return SearchOutcome(nodes_visited=visited, nodes_pruned=pruned)
            k -= 1
            x = val[k] - 1
            if x >= 0:
                break


def dftsp(candidates, ctx: EdgeContext, *, ladder=None, pruning: bool = True,
          inclusive_bound: bool = False, exact_tau: bool = False,
          collect_trajectory: bool = False) -> SearchOutcome:
    """Find a maximum-cardinality feasible batch from a candidate pool.

    Candidates must already have passed accuracy admission.  The target
    size ``z`` runs from the pool size down; for each ``z`` the pool is
    ranked by normalized deadline (an ordering independent of ``z``) and
    progressively widened pools of the ``d`` best candidates are searched,
    holding each to the d-th candidate's deadline budget.  The first batch
    found is returned with instrumentation totals across all searches; any
    solution is re-verified against the original constraints before being
    returned.
    """
    agg = SearchOutcome(trajectory=[] if collect_trajectory else None)
    pool = list(candidates)
    if not pool:
        return agg
    padded = max(r.prompt_tokens for r in pool)
    coeff = derive_coefficients(ctx, padded, pool)
    order = sorted(pool, key=lambda r: (-coeff.tau_base(r), r.id))
    bases = [coeff.tau_base(r) for r in order]
    size = len(order)
    cache: dict[int, tuple[ClassPartition, SearchTables]] = {}
    for z in range(size, 0, -1):
        for d in range(z, size + 1):
            if d not in cache:
                part = partition(order[:d], ctx.radio, ladder)
                cache[d] = (part, SearchTables.build(part, coeff))
            part, tables = cache[d]
            tau_min = bases[d - 1] - coeff.k3 * z
            res = dfs(z, part, coeff, tau_min, pruning=pruning,
                      inclusive_bound=inclusive_bound, exact_tau=exact_tau,
                      tables=tables)
            agg.nodes_visited += res.nodes_visited
            agg.nodes_pruned += res.nodes_pruned
            if agg.trajectory is not None:
                agg.trajectory.append((z, d, res.nodes_visited, res.nodes_pruned))
            if res.solution is not None:
                if not check_direct(res.solution, ctx, padded):
                    raise RuntimeError(
                        "reduced-form solution failed direct re-verification; "
                        "coefficient derivation is inconsistent"
                    )
                agg.solution = sorted(res.solution, key=lambda r: r.id)
                agg.counts = res.counts
                agg.z_found = z
                return agg
    return agg


def exhaustive_optimal(candidates, ctx: EdgeContext, *, cap: int = 20,
                       mode: str = "subsets", ladder=None) -> SearchOutcome:
    """Independent brute-force reference for the batch scheduler.

    ``subsets`` mode enumerates every subset by descending size against the
    direct constraint check, with no reliance on class structure or prefix
    recovery.  ``counts`` mode enumerates count vectors with prefix
    recovery through the same pool-widening loop the tree search uses,
    exercising the reduced form.  Pools larger than ``cap`` are refused.
    """
    pool = list(candidates)
    agg = SearchOutcome()
    if not pool:
        return agg
    if len(pool) > cap:
        raise ValueError(f"pool size {len(pool)} exceeds the exhaustive cap {cap}")
    padded = max(r.prompt_tokens for r in pool)
    if mode == "subsets":
        for z in range(len(pool), 0, -1):
            for combo in combinations(pool, z):
                agg.nodes_visited += 1
                if check_direct(combo, ctx, padded):
                    agg.solution = sorted(combo, key=lambda r: r.id)
                    agg.z_found = z
                    return agg
        return agg
    if mode != "counts":
        raise ValueError(f"unknown exhaustive mode {mode!r}")
    coeff = derive_coefficients(ctx, padded, pool)
    order = sorted(pool, key=lambda r: (-coeff.tau_base(r), r.id))
    bases = [coeff.tau_base(r) for r in order]
    for z in range(len(pool), 0, -1):
        for d in range(z, len(pool) + 1):
            part = partition(order[:d], ctx.radio, ladder)
            tau_min = bases[d - 1] - coeff.k3 * z
            for counts in _count_vectors(part.sizes, z):
                agg.nodes_visited += 1
                subset = recover_subset(part, counts)
                if check_knapsack(subset, coeff, z, tau_min):
                    if not check_direct(subset, ctx, padded):
                        raise RuntimeError("count-vector solution failed re-verification")
                    agg.solution = sorted(subset, key=lambda r: r.id)
                    agg.z_found = z
                    return agg
    return agg


def _count_vectors(sizes, target):
    """All per-class count vectors with the given total, largest-first order."""
    ncls = len(sizes)

    def rec(k, remaining):
        if k == ncls - 1:
            if remaining <= sizes[k]:
                yield (remaining,)
            return
        for v in range(min(remaining, sizes[k]), -1, -1):
            for rest in rec(k + 1, remaining - v):
                yield (v,) + rest

    if ncls == 0:
        return
    yield from rec(0, target)
