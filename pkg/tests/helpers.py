"""Shared builders: a full engine (players + relay) from one dealer run."""

from __future__ import annotations

from dcstream.groups import TOY_SPEC
from dcstream.keysched import dealer_setup
from dcstream.protocol import AggregatorState, PlayerState


def build_engine(protocol, n=4, rounds=3, group=None, seed=0, a=1, b=2):
    """Dealer setup plus ready-to-run states for every role."""
    bundle = dealer_setup(
        group if group is not None else TOY_SPEC,
        n,
        rounds,
        protocol,
        rng_seed=seed,
        correspondent_a=a,
        correspondent_b=b,
    )
    players = {}
    for view in bundle.players:
        corr = None
        if view.index in (bundle.correspondent_a, bundle.correspondent_b):
            corr = bundle.correspondent_for(view.index)
        players[view.index] = PlayerState(view, corr)
    return bundle, players, AggregatorState(bundle.aggregator)


def run_round(players, agg, messages=None, lost=()):
    """One synchronous round: queue, emit, drop the lost, finalize.

    Returns ({index: packet}, broadcast).  Every player advances a
    round, whether or not its packet survived.
    """
    for index, m in (messages or {}).items():
        players[index].queue_message(m)
    packets = {}
    for index in sorted(players):
        state = players[index]
        packet = state.emit(state.round_no)
        packets[index] = packet
        if index not in lost:
            agg.ingest(packet)
    broadcast = agg.finalize()
    for state in players.values():
        state.finish_round()
    return packets, broadcast
