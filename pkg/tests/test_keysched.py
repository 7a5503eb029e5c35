"""Dealer and schedule oracles; tree roots are rebuilt independently."""

from __future__ import annotations

import random

import pytest
from scipy import stats

from dcstream import merkle
from dcstream.groups import TOY_SPEC, STANDARD_SPEC, commit, encode_element, make_params
from dcstream.keysched import (
    GroupTooSmall,
    SecretPair,
    dealer_setup,
    dealer_setup_stream,
    dealer_setup_zero_sum,
    derive_pair,
    derive_scalar,
    leaf_bytes,
    load_bundle,
    save_bundle,
)

TOY = make_params(TOY_SPEC, alpha=3)


class ZeroRng(random.Random):
    """Degenerate rng: every draw is zero."""

    def randrange(self, *args, **kwargs):
        return 0


def test_derive_scalar_deterministic_and_in_range():
    seed = b"\x42" * 32
    q = STANDARD_SPEC.q
    first = derive_scalar(seed, 3, 17, b"k", q)
    assert first == derive_scalar(seed, 3, 17, b"k", q)
    assert 0 <= first < q


def test_derive_scalar_separates_players_rounds_lanes():
    seed = b"\x01" * 32
    q = STANDARD_SPEC.q
    base = derive_scalar(seed, 1, 1, b"k", q)
    assert base != derive_scalar(seed, 2, 1, b"k", q)
    assert base != derive_scalar(seed, 1, 2, b"k", q)
    assert base != derive_scalar(seed, 1, 1, b"r", q)
    assert base != derive_scalar(b"\x02" * 32, 1, 1, b"k", q)


def test_derive_pair_matches_lanes():
    seed = b"\x07" * 32
    pair = derive_pair(seed, 5, 9, TOY.q)
    assert pair == SecretPair(
        k=derive_scalar(seed, 5, 9, b"k", TOY.q),
        r=derive_scalar(seed, 5, 9, b"r", TOY.q),
    )


def test_derive_scalar_uniform_over_toy_order():
    # Rejection sampling must not skew the distribution; chi-square over
    # all 11 residues at 5000 draws.
    seed = b"\x33" * 32
    counts = [0] * TOY.q
    for j in range(1, 5001):
        counts[derive_scalar(seed, 1, j, b"k", TOY.q)] += 1
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.01


def test_zero_sum_keys_sum_to_zero():
    rng = random.Random(5)
    for n in (3, 7, 11):
        keys = dealer_setup_zero_sum(TOY, n, rng)
        assert len(keys) == n
        assert sum(keys) % TOY.q == 0
        assert all(0 <= k < TOY.q for k in keys)


def test_zero_sum_degenerate_rng_gives_all_zero():
    assert dealer_setup_zero_sum(TOY, 3, ZeroRng()) == [0, 0, 0]


def test_zero_sum_rejects_bad_sizes():
    with pytest.raises(ValueError):
        dealer_setup_zero_sum(TOY, 2, random.Random(0))
    with pytest.raises(GroupTooSmall):
        dealer_setup_zero_sum(TOY, 12, random.Random(0))


def test_dealer_setup_validates_arguments():
    with pytest.raises(ValueError):
        dealer_setup(TOY_SPEC, n=2, rounds=4, protocol=2)
    with pytest.raises(ValueError):
        dealer_setup(TOY_SPEC, n=3, rounds=0, protocol=2)
    with pytest.raises(ValueError):
        dealer_setup(TOY_SPEC, n=3, rounds=4, protocol=5)
    with pytest.raises(ValueError):
        dealer_setup(TOY_SPEC, n=3, rounds=4, protocol=2, correspondent_a=1, correspondent_b=1)
    with pytest.raises(ValueError):
        dealer_setup(TOY_SPEC, n=3, rounds=4, protocol=2, correspondent_b=4)
    with pytest.raises(ValueError):
        dealer_setup(TOY.public(), n=3, rounds=4, protocol=2)


def test_protocol1_tables_are_consistent_and_zero_sum():
    bundle = dealer_setup(TOY_SPEC, n=4, rounds=6, protocol=1, rng_seed=9)
    corr = bundle.correspondents[0]
    for j in range(1, 7):
        row = corr.round_keys(j)
        assert sum(row) % TOY.q == 0
        for view in bundle.players:
            assert view.key(j) == row[view.index - 1]


def test_protocol2_schedules_agree_between_roles():
    bundle = dealer_setup(TOY_SPEC, n=5, rounds=8, protocol=2, rng_seed=1)
    corr = bundle.correspondents[1]
    for view in bundle.players:
        for j in (1, 4, 8):
            assert view.key(j) == corr.key(view.index, j)
            assert view.pair(j) == corr.pair(view.index, j)
    assert len(set(v.seed for v in bundle.players)) == 5


def test_endpoints_share_one_round_cache():
    bundle = dealer_setup(TOY_SPEC, n=4, rounds=4, protocol=2, rng_seed=2)
    a, b = bundle.correspondents
    assert a._round_cache is b._round_cache
    assert a.round_keys(3) is b.round_keys(3)


def test_sum_keys_matches_manual_sum():
    bundle = dealer_setup(TOY_SPEC, n=5, rounds=3, protocol=2, rng_seed=4)
    corr = bundle.correspondents[0]
    keys = corr.round_keys(2)
    included = [1, 3, 5]
    assert corr.sum_keys(2, included) == sum(keys[i - 1] for i in included) % TOY.q


def test_protocol3_commitment_table_matches_schedules():
    bundle = dealer_setup(TOY_SPEC, n=3, rounds=5, protocol=3, rng_seed=3)
    agg = bundle.aggregator
    for view in bundle.players:
        for j in range(1, 6):
            pair = view.pair(j)
            assert agg.commitment(view.index, j) == commit(bundle.group, pair.k, pair.r)


def test_protocol4_roots_match_independent_rebuild():
    bundle = dealer_setup_stream(TOY_SPEC, n=3, rounds=5, rng_seed=8)
    assert bundle.padded_rounds == 8
    dummy = commit(bundle.group, 0, 0)
    for view in bundle.players:
        leaves = []
        for j in range(1, 9):
            c = (
                commit(bundle.group, view.pair(j).k, view.pair(j).r)
                if j <= 5
                else dummy
            )
            leaves.append(encode_element(c, bundle.group.p))
        assert merkle.build_tree(leaves).root == bundle.aggregator.roots[view.index - 1]


def test_leaf_bytes_is_element_encoding():
    assert leaf_bytes(TOY, 7) == encode_element(7, TOY.p)


def test_aggregator_view_carries_no_secrets():
    for protocol in (1, 2, 3, 4):
        bundle = dealer_setup(TOY_SPEC, n=3, rounds=4, protocol=protocol, rng_seed=6)
        agg = bundle.aggregator
        assert agg.group.alpha is None
        assert not hasattr(agg, "seed")
        assert not hasattr(agg, "seeds")
        assert not hasattr(agg, "key_table")
        assert not hasattr(agg, "round_keys")


def test_player_view_holds_only_own_schedule():
    bundle = dealer_setup(TOY_SPEC, n=4, rounds=4, protocol=2, rng_seed=7)
    view = bundle.players[2]
    assert view.group.alpha is None
    assert not hasattr(view, "seeds")
    with pytest.raises(ValueError):
        view.key(5)


def test_dealer_setup_is_deterministic():
    one = dealer_setup(TOY_SPEC, n=4, rounds=4, protocol=4, rng_seed=42)
    two = dealer_setup(TOY_SPEC, n=4, rounds=4, protocol=4, rng_seed=42)
    other = dealer_setup(TOY_SPEC, n=4, rounds=4, protocol=4, rng_seed=43)
    assert one.group == two.group
    assert one.players == two.players
    assert one.aggregator.roots == two.aggregator.roots
    assert one.aggregator.roots != other.aggregator.roots


def test_explicit_params_reuse_trapdoor():
    bundle = dealer_setup(TOY, n=3, rounds=2, protocol=2, rng_seed=0)
    assert bundle.group.alpha == 3
    assert bundle.group.h == 8


@pytest.mark.parametrize("protocol", [1, 2, 3, 4])
def test_bundle_save_load_round_trip(tmp_path, protocol):
    bundle = dealer_setup(
        TOY_SPEC, n=4, rounds=5, protocol=protocol, rng_seed=13,
        correspondent_a=2, correspondent_b=4,
    )
    save_bundle(bundle, tmp_path / "setup")
    loaded = load_bundle(tmp_path / "setup")
    assert loaded.protocol == protocol
    assert loaded.n == 4 and loaded.rounds == 5 and loaded.padded_rounds == 8
    assert loaded.correspondent_a == 2 and loaded.correspondent_b == 4
    assert loaded.group == bundle.group
    assert loaded.players == bundle.players
    assert loaded.aggregator == bundle.aggregator
    for old, new in zip(bundle.correspondents, loaded.correspondents):
        assert (new.index, new.peer) == (old.index, old.peer)
        assert new.seeds == old.seeds
        assert new.key_table == old.key_table
        assert new.group == old.group


def test_bundle_files_keep_secrets_in_their_lane(tmp_path):
    bundle = dealer_setup(TOY_SPEC, n=3, rounds=2, protocol=4, rng_seed=1)
    save_bundle(bundle, tmp_path)
    agg_text = (tmp_path / "aggregator.json").read_text()
    assert "seed" not in agg_text and "alpha" not in agg_text
    group_text = (tmp_path / "group.params").read_text()
    assert "alpha" not in group_text
    player_text = (tmp_path / "player_001.json").read_text()
    assert "alpha" not in player_text
    # Other players' seeds never appear in a player file.
    assert bundle.players[1].seed.hex() not in player_text


def test_correspondent_for_lookup():
    bundle = dealer_setup(TOY_SPEC, n=4, rounds=2, protocol=2, rng_seed=0,
                          correspondent_a=1, correspondent_b=3)
    assert bundle.correspondent_for(1).peer == 3
    assert bundle.correspondent_for(3).peer == 1
    with pytest.raises(ValueError):
        bundle.correspondent_for(2)
