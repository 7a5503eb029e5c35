"""Anonymity experiment: transcripts reveal nothing, keys reveal all."""

from __future__ import annotations

import random
from collections import Counter

import pytest
from scipy import stats

from dcstream.groups import TOY_SPEC, equivocate, make_params, verify_opening
from dcstream.privacy import (
    PrivacyReport,
    chance_accuracy,
    key_informed_adversary,
    run_privacy_experiment,
    run_privacy_trial,
    transcript_adversary,
)


class TestChance:
    def test_unordered_pair_counts(self):
        assert chance_accuracy(3) == pytest.approx(1 / 3)
        assert chance_accuracy(5) == pytest.approx(1 / 10)
        assert chance_accuracy(10) == pytest.approx(1 / 45)

    def test_rejects_degenerate_groups(self):
        with pytest.raises(ValueError):
            chance_accuracy(1)


class TestTrial:
    def test_transcript_is_complete_and_public_only(self):
        transcript, pair, keys = run_privacy_trial(6, random.Random(4))
        assert transcript.n == 6
        assert transcript.group.alpha is None  # trapdoor never leaves the dealer
        assert [p.sender for p in transcript.packets] == list(range(1, 7))
        assert sorted(transcript.broadcast.received) == list(range(1, 7))
        assert len(transcript.commitments) == 6
        assert len(pair) == 2
        assert set(keys) == set(range(1, 7))

    def test_every_packet_opens_its_commitment(self):
        # correspondents equivocate, so their shifted openings must still
        # verify against the published table
        transcript, pair, _ = run_privacy_trial(5, random.Random(12))
        for packet in transcript.packets:
            assert verify_opening(
                transcript.group,
                transcript.commitments[packet.sender - 1],
                packet.opened,
                packet.randomness,
            )

    def test_root_committed_schedule_also_supported(self):
        transcript, pair, _ = run_privacy_trial(4, random.Random(2), protocol=4)
        for packet in transcript.packets:
            assert packet.proof is not None
        assert len(pair) == 2

    def test_unverified_levels_rejected(self):
        with pytest.raises(ValueError):
            run_privacy_trial(4, random.Random(2), protocol=2)

    def test_correspondents_actually_shift_their_openings(self):
        transcript, pair, keys = run_privacy_trial(5, random.Random(12))
        q = transcript.group.q
        shifted = {
            p.sender
            for p in transcript.packets
            if (p.opened - keys[p.sender]) % q != 0
        }
        assert shifted == set(pair)


class TestAdversaries:
    def test_transcript_adversary_guesses_a_valid_pair(self):
        transcript, _, _ = run_privacy_trial(7, random.Random(3))
        guess = transcript_adversary(transcript)
        assert len(guess) == 2
        assert guess <= set(range(1, 8))

    def test_key_informed_adversary_is_exact_on_one_trial(self):
        transcript, pair, keys = run_privacy_trial(6, random.Random(8))
        assert key_informed_adversary(transcript, keys, transcript.group.q) == pair

    @pytest.mark.parametrize("n", [3, 5])
    def test_transcript_accuracy_is_chance(self, n):
        report = run_privacy_experiment(n, trials=2000, seed=5)
        assert report.chance == pytest.approx(chance_accuracy(n))
        assert report.within_3_sigma, (
            f"accuracy {report.accuracy} vs chance {report.chance}, z={report.z}"
        )

    def test_fixed_guess_is_also_chance(self):
        # the transcript is independent of the pair, so even the constant
        # rule "accuse players 1 and 2" scores 2/(n(n-1))
        def first_two(transcript):
            return frozenset((1, 2))

        report = run_privacy_experiment(5, trials=2000, seed=6, adversary=first_two)
        assert report.adversary == "first_two"
        assert report.within_3_sigma

    def test_key_informed_accuracy_is_one(self):
        report = run_privacy_experiment(5, trials=300, seed=7, with_keys=True)
        assert report.accuracy == 1.0
        assert report.hits == 300
        assert report.adversary == "key_informed"

    def test_experiment_is_deterministic(self):
        a = run_privacy_experiment(5, trials=500, seed=9)
        b = run_privacy_experiment(5, trials=500, seed=9)
        assert a == b

    def test_trials_must_be_positive(self):
        with pytest.raises(ValueError):
            run_privacy_experiment(5, trials=0)

    def test_report_arithmetic(self):
        report = PrivacyReport(
            n=5, trials=100, hits=10, accuracy=0.1, chance=0.1,
            sigma=0.03, z=0.0, adversary="x",
        )
        assert report.within_3_sigma
        far = PrivacyReport(
            n=5, trials=100, hits=40, accuracy=0.4, chance=0.1,
            sigma=0.03, z=10.0, adversary="x",
        )
        assert not far.within_3_sigma


class TestIndistinguishability:
    def test_equivocated_openings_match_honest_distribution(self):
        # joint (opened, randomness) law over the small group: an honest
        # bystander reveals (k, r); a correspondent carrying a fixed
        # nonzero message reveals the equivocated pair.  Fresh trapdoor
        # and secrets each trial; the two samples must be statistically
        # inseparable.
        rng = random.Random(31337)
        q = TOY_SPEC.q
        message = 7
        honest: Counter = Counter()
        shifted: Counter = Counter()
        trials = 100_000
        for _ in range(trials):
            alpha = rng.randrange(1, q)
            params = make_params(TOY_SPEC, alpha)
            k = rng.randrange(q)
            r = rng.randrange(q)
            honest[(k, r)] += 1
            shifted[equivocate(params, k, r, message)] += 1
        cells = [(a, b) for a in range(q) for b in range(q)]
        table = [
            [honest[cell] for cell in cells],
            [shifted[cell] for cell in cells],
        ]
        _, p_value, _, _ = stats.chi2_contingency(table)
        assert p_value > 0.01
