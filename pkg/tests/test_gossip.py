import random

import numpy as np
import pytest

from healsim.gossip import Descriptor, GossipConfig, PeerSampling, freshest_seen


def make_network(n=30, seed=1, **overrides):
    config = GossipConfig(**{"view_capacity": 10, "swap_s": 4, **overrides})
    ps = PeerSampling(n, config, random.Random(seed))
    ps.bootstrap()
    return ps


def check_invariants(ps):
    for node, view in enumerate(ps.views):
        assert len(view) <= ps.config.view_capacity
        assert node not in view


def test_config_validation():
    with pytest.raises(ValueError):
        GossipConfig(view_capacity=0)
    with pytest.raises(ValueError):
        GossipConfig(view_capacity=10, healer_h=5, swap_s=6)
    with pytest.raises(ValueError):
        GossipConfig(peer_selection="square")


def test_bootstrap_fills_views_without_self():
    ps = make_network(n=30)
    for node, view in enumerate(ps.views):
        assert len(view) == 10
        assert node not in view
        assert all(ts == 0 for ts in view.values())


def test_exchange_leaves_fresh_peer_descriptor():
    ps = make_network(n=30, seed=3)
    alive = np.ones(30, dtype=bool)
    for now in range(1, 15):
        for node in range(30):
            peer = ps.gossip_round(node, now, alive)
            if peer is not None:
                assert ps.views[node][peer] == now
                assert ps.views[peer][node] == now
        check_invariants(ps)


def test_merge_keeps_freshest_duplicate():
    ps = make_network(n=30)
    ps.views[0] = {5: 3}
    ps.merge(0, [Descriptor(5, 7), Descriptor(5, 2)], [], counterpart=9, now=8)
    assert ps.views[0][5] == 7


def test_merge_drops_own_descriptor():
    ps = make_network(n=30)
    ps.views[0] = {4: 1}
    ps.merge(0, [Descriptor(0, 9)], [], counterpart=4, now=9)
    assert 0 not in ps.views[0]


def test_merge_healer_drops_oldest():
    ps = make_network(n=30)
    ps.views[0] = {1: 5, 2: 1, 3: 9}
    ps.merge(0, [], [], counterpart=3, now=9)
    assert 2 not in ps.views[0]  # the single oldest entry is healed away


def test_merge_respects_capacity():
    ps = make_network(n=30)
    ps.views[0] = {i: i for i in range(1, 11)}
    incoming = [Descriptor(i, 20) for i in range(11, 25)]
    ps.merge(0, incoming, [], counterpart=11, now=20)
    assert len(ps.views[0]) == 10


def test_round_with_faulty_peer_is_noop():
    ps = make_network(n=4, view_capacity=3, healer_h=1, swap_s=1)
    ps.views[0] = {1: 0}
    before = dict(ps.views[0])
    alive = np.array([True, False, True, True])
    assert ps.gossip_round(0, 5, alive) is None
    assert ps.views[0] == before


def test_oldest_peer_selection():
    ps = make_network(n=30, peer_selection="oldest")
    ps.views[0] = {7: 4, 3: 1, 9: 1}
    assert ps.select_peer(0) == 3  # oldest timestamp, smallest id breaks the tie


def test_freshest_seen():
    history = [
        (10, {2: 8}),
        (25, {2: 24}),
    ]
    assert freshest_seen(history, 2, since=0) == 25
    assert freshest_seen([(10, {2: 0})], 2, since=0) is None
    assert freshest_seen([], 2, since=0) is None
    # entries no fresher than the baseline never count
    assert freshest_seen([(30, {2: 5})], 2, since=5) is None


def test_identical_seeds_give_identical_view_histories():
    def history(seed):
        ps = make_network(n=25, seed=seed)
        alive = np.ones(25, dtype=bool)
        snapshots = []
        for now in range(1, 30):
            for node in range(25):
                ps.gossip_round(node, now, alive)
            snapshots.append([sorted(v.items()) for v in ps.views])
        return snapshots

    assert history(42) == history(42)
    assert history(42) != history(43)


def test_views_stay_full_in_a_healthy_network():
    ps = make_network(n=60, seed=9)
    alive = np.ones(60, dtype=bool)
    for now in range(1, 60):
        for node in range(60):
            ps.gossip_round(node, now, alive)
        check_invariants(ps)
    sizes = [len(v) for v in ps.views]
    assert min(sizes) >= ps.config.view_capacity - 1
