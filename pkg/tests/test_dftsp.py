"""Tree search: partitioning, recovery, walk order, pruning, optimality."""

import numpy as np
import pytest
from conftest import random_instance

from edgebatch import (EdgeContext, NodeCompute, Request, UserLink, check_direct,
                       derive_coefficients, dfs, dftsp, exhaustive_optimal,
                       get_model, get_profile, min_uplink_fraction, partition,
                       recover_subset)
from test_radio import default_radio

B3 = get_model("bloom-3b")
FP16 = get_profile("fp16")


def make_pool(class_sizes, ladder=(128, 256, 512), gains=None):
    """Pool with the given per-class sizes; uplink cost rises with id."""
    reqs = []
    i = 0
    for k, size in enumerate(class_sizes):
        for _ in range(size):
            gain = gains[i] if gains else 1e-3 / (1.0 + 0.1 * i)
            reqs.append(Request(id=i, prompt_tokens=64 + i, output_tokens=ladder[k],
                                deadline_s=1.5, tolerance=1.0,
                                link=UserLink(gain, 0.1), waiting_s=0.0))
            i += 1
    return reqs


def big_ctx(**kw):
    base = dict(llm=B3, quant=FP16, radio=default_radio(),
                node=NodeCompute(2.66e13, 640e9, 20))
    base.update(kw)
    return EdgeContext(**base)


def test_partition_shapes_and_order():
    pool = make_pool((4, 4, 2))
    part = partition(pool, default_radio())
    assert part.lengths == (128, 256, 512)
    assert part.sizes == (4, 4, 2)
    radio = default_radio()
    for members, keys in zip(part.classes, part.keys):
        fracs = [min_uplink_fraction(r.prompt_tokens, r.link, radio) for r in members]
        assert list(keys) == fracs == sorted(fracs)


def test_partition_single_class_and_ties():
    pool = [Request(id=i, prompt_tokens=100, output_tokens=128, deadline_s=1.0,
                    tolerance=1.0, link=UserLink(1e-3, 0.1)) for i in (4, 1, 3)]
    part = partition(pool, default_radio())
    assert part.sizes == (3,)
    # Equal uplink fractions: stable order by request id.
    assert [r.id for r in part.classes[0]] == [1, 3, 4]


def test_partition_rejects_off_ladder():
    pool = make_pool((1,), ladder=(100,))
    with pytest.raises(ValueError, match="ladder"):
        partition(pool, default_radio(), ladder=(128, 256))


def test_recover_subset_prefixes():
    pool = make_pool((4, 4, 2))
    part = partition(pool, default_radio())
    assert recover_subset(part, (0, 0, 0)) == []
    assert sorted(r.id for r in recover_subset(part, (4, 4, 2))) == list(range(10))
    got = recover_subset(part, (4, 2))
    assert len(got) == 6
    # The two class-2 members taken are the two cheapest by uplink.
    keys = part.keys[1]
    chosen = [r for r in got if r.output_tokens == 256]
    assert [min_uplink_fraction(r.prompt_tokens, r.link, default_radio())
            for r in chosen] == sorted(keys)[:2]
    with pytest.raises(ValueError):
        recover_subset(part, (5, 0, 0))


def test_recover_prefix_minimizes_uplink_cost():
    """Among same-count subsets, the prefix has the least total uplink demand."""
    from itertools import combinations
    rng = np.random.default_rng(8)
    pool = make_pool((5, 4), ladder=(64, 128),
                     gains=[float(rng.exponential(1e-3)) for _ in range(9)])
    radio = default_radio()
    part = partition(pool, radio)
    for counts in ((2, 1), (3, 2), (1, 4)):
        chosen = recover_subset(part, counts)
        cost = sum(min_uplink_fraction(r.prompt_tokens, r.link, radio) for r in chosen)
        for alt0 in combinations(part.classes[0], counts[0]):
            for alt1 in combinations(part.classes[1], counts[1]):
                alt_cost = sum(min_uplink_fraction(r.prompt_tokens, r.link, radio)
                               for r in alt0 + alt1)
                assert cost <= alt_cost + 1e-18


def test_dfs_first_leaf_is_greedy_lowest_classes():
    # Class sizes (4, 4, 2), target 6: the first leaf explored is (4, 2, 0).
    pool = make_pool((4, 4, 2))
    ctx = big_ctx()
    co = derive_coefficients(ctx, 512, pool)
    part = partition(pool, ctx.radio)
    res = dfs(6, part, co, tau_min=1e30)
    assert res.solution is not None
    assert res.counts == (4, 2, 0)
    # Root, the count-4 node, and the count-2 leaf: three visits.
    assert res.nodes_visited == 3
    assert res.nodes_pruned == 0


def test_dfs_prune_cuts_capacity_short_branches():
    # Target 7 on sizes (4, 4, 2): any branch leaving less deeper capacity
    # than the residual is skipped with its cheaper siblings.
    pool = make_pool((4, 4, 2))
    ctx = big_ctx()
    co = derive_coefficients(ctx, 512, pool)
    part = partition(pool, ctx.radio)
    on = dfs(7, part, co, tau_min=1e30, pruning=True)
    off = dfs(7, part, co, tau_min=1e30, pruning=False)
    assert on.solution is not None and off.solution is not None
    assert on.counts == off.counts == (4, 3, 0)
    assert on.nodes_visited <= off.nodes_visited
    # The node taking 0 from class one has deeper capacity 4+2 < 7: pruned
    # alone (it has no cheaper siblings).
    infeasible = dfs(7, partition(make_pool((0, 4, 2)), ctx.radio), co,
                     tau_min=1e30, pruning=True)
    assert infeasible.solution is None
    assert infeasible.nodes_pruned >= 1


def test_dfs_target_exceeding_pool():
    pool = make_pool((2, 2))
    ctx = big_ctx()
    co = derive_coefficients(ctx, 512, pool)
    part = partition(pool, ctx.radio)
    on = dfs(5, part, co, tau_min=1e30, pruning=True)
    assert on.solution is None
    assert on.nodes_visited == 0 and on.nodes_pruned == 1  # root cut at once
    off = dfs(5, part, co, tau_min=1e30, pruning=False)
    assert off.solution is None
    assert off.nodes_visited > 0


def test_dfs_deterministic_walk():
    pool = make_pool((3, 3, 3))
    ctx = big_ctx(node=NodeCompute(2.6e12, 640e9, 20))  # tight latency
    co = derive_coefficients(ctx, 512, pool)
    part = partition(pool, ctx.radio)
    tau = min(co.tau_budget(r, 4) for r in pool)
    a = dfs(4, part, co, tau)
    b = dfs(4, part, co, tau)
    assert (a.counts, a.nodes_visited, a.nodes_pruned) == \
        (b.counts, b.nodes_visited, b.nodes_pruned)


def test_dfs_requires_target():
    pool = make_pool((2,))
    ctx = big_ctx()
    co = derive_coefficients(ctx, 512, pool)
    part = partition(pool, ctx.radio)
    with pytest.raises(ValueError):
        dfs(0, part, co, tau_min=1.0)
    with pytest.raises(ValueError):
        dfs(1, part, co)  # no tau_min and not exact mode


def test_dftsp_empty_and_singleton():
    ctx = big_ctx()
    assert dftsp([], ctx).solution is None
    lone = make_pool((1,))
    got = dftsp(lone, ctx)
    assert got.z_found == 1
    assert [r.id for r in got.solution] == [0]


def test_dftsp_matches_exhaustive_on_random_instances():
    rng = np.random.default_rng(2024)
    solved = 0
    for _ in range(200):
        ladder, ctx, reqs = random_instance(rng)
        got = dftsp(reqs, ctx, ladder=ladder)
        ref = exhaustive_optimal(reqs, ctx)
        assert got.z_found == ref.z_found
        if got.solution is not None:
            pad = max(r.prompt_tokens for r in reqs)
            assert check_direct(got.solution, ctx, pad)
            assert len(got.solution) == got.z_found
            solved += 1
    assert solved > 60


def test_exhaustive_modes_agree():
    rng = np.random.default_rng(77)
    for _ in range(60):
        ladder, ctx, reqs = random_instance(rng, max_requests=9)
        a = exhaustive_optimal(reqs, ctx, mode="subsets")
        b = exhaustive_optimal(reqs, ctx, mode="counts", ladder=ladder)
        assert a.z_found == b.z_found


def test_exhaustive_cap_refusal():
    rng = np.random.default_rng(1)
    _, ctx, reqs = random_instance(rng, max_requests=8, min_requests=8)
    with pytest.raises(ValueError, match="cap"):
        exhaustive_optimal(reqs, ctx, cap=4)
    with pytest.raises(ValueError, match="mode"):
        exhaustive_optimal(reqs, ctx, mode="bogus")


def test_pruning_neutrality_and_node_inequality():
    rng = np.random.default_rng(31)
    for _ in range(120):
        ladder, ctx, reqs = random_instance(rng)
        on = dftsp(reqs, ctx, ladder=ladder, pruning=True)
        off = dftsp(reqs, ctx, ladder=ladder, pruning=False)
        assert on.z_found == off.z_found
        assert on.nodes_visited <= off.nodes_visited
        if on.solution is None:
            assert off.solution is None
        else:
            assert [r.id for r in on.solution] == [r.id for r in off.solution]


def test_inclusive_bound_is_looser_but_sound():
    rng = np.random.default_rng(32)
    for _ in range(80):
        ladder, ctx, reqs = random_instance(rng, max_requests=12)
        tight = dftsp(reqs, ctx, ladder=ladder, pruning=True)
        loose = dftsp(reqs, ctx, ladder=ladder, pruning=True, inclusive_bound=True)
        assert tight.z_found == loose.z_found
        assert tight.nodes_visited <= loose.nodes_visited


def test_exact_tau_mode_matches_conservative_cardinality():
    rng = np.random.default_rng(33)
    for _ in range(80):
        ladder, ctx, reqs = random_instance(rng, max_requests=12)
        cons = dftsp(reqs, ctx, ladder=ladder)
        exact = dftsp(reqs, ctx, ladder=ladder, exact_tau=True)
        assert cons.z_found == exact.z_found
        if exact.solution is not None:
            pad = max(r.prompt_tokens for r in reqs)
            assert check_direct(exact.solution, ctx, pad)


def test_dftsp_trajectory_is_deterministic():
    rng = np.random.default_rng(34)
    _, ctx, reqs = random_instance(rng, max_requests=12, min_requests=6)
    a = dftsp(reqs, ctx, collect_trajectory=True)
    b = dftsp(reqs, ctx, collect_trajectory=True)
    assert a.trajectory == b.trajectory
    assert a.trajectory  # nonempty
