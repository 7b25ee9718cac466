"""Decision policies: stopping rules, schedules, agreement, monotonicity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simulst import (
    AlignAttPolicy,
    EDAttPolicy,
    LocalAgreementPolicy,
    StepContext,
    StopReason,
    Vocabulary,
    WaitKPolicy,
    alignatt_decide,
    edatt_decide,
    local_agreement_prefix,
    longest_common_prefix,
    waitk_allowed,
)

from conftest import alignatt_bruteforce, random_attention


class TestAlignAttDecide:
    def test_stops_at_first_inaccessible_frame(self):
        decision = alignatt_decide([0, 3, 5, 8], n_frames=10, f=2, num_candidates=4)
        assert decision.commit_count == 3
        assert decision.stopped_by is StopReason.INACCESSIBLE_FRAME

    def test_empty_candidates(self):
        decision = alignatt_decide([], n_frames=10, f=2, num_candidates=0)
        assert decision.commit_count == 0

    def test_commits_all_when_band_avoided(self):
        decision = alignatt_decide([0, 1, 2, 3], n_frames=10, f=2, num_candidates=4)
        assert decision.commit_count == 4
        assert decision.stopped_by is StopReason.EXHAUSTED

    def test_band_covering_all_frames_commits_nothing(self):
        decision = alignatt_decide([0, 1], n_frames=4, f=4, num_candidates=2)
        assert decision.commit_count == 0
        decision = alignatt_decide([0], n_frames=4, f=9, num_candidates=1)
        assert decision.commit_count == 0

    def test_rejects_f_below_one(self):
        with pytest.raises(ValueError, match="f must be"):
            alignatt_decide([0], n_frames=4, f=0, num_candidates=1)

    def test_rejects_alignment_outside_range(self):
        with pytest.raises(ValueError, match="lie in"):
            alignatt_decide([5], n_frames=4, f=1, num_candidates=1)
        with pytest.raises(ValueError, match="lie in"):
            alignatt_decide([-1], n_frames=4, f=1, num_candidates=1)

    def test_rejects_short_alignment(self):
        with pytest.raises(ValueError, match="cover"):
            alignatt_decide([0, 1], n_frames=4, f=1, num_candidates=3)

    def test_worked_sentence_scenario(self, sentence_vocab):
        # candidates "Ich werde heu te darüber"; the last word's piece aligns
        # inside the last-2-frame band, so exactly "Ich werde heute" commits
        candidates = [sentence_vocab.piece_id(p) for p in ("▁Ich", "▁werde", "▁heu", "te", "▁darüber")]
        alignment = [0, 1, 2, 3, 8]  # n=9, band {7, 8}
        decision = alignatt_decide(alignment, n_frames=9, f=2, num_candidates=len(candidates))
        assert decision.commit_count == 4
        assert sentence_vocab.detokenize(candidates[: decision.commit_count]) == "Ich werde heute"

    @settings(max_examples=300, deadline=None)
    @given(
        n=st.integers(1, 40),
        f=st.integers(1, 45),
        num=st.integers(0, 12),
        seed=st.integers(0, 10_000),
    )
    def test_matches_bruteforce_loop(self, n, f, num, seed):
        rng = np.random.default_rng(seed)
        alignment = rng.integers(0, n, size=num)
        decision = alignatt_decide(alignment, n, f, num)
        assert decision.commit_count == alignatt_bruteforce(alignment, n, f, num)

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(1, 30), num=st.integers(0, 10), seed=st.integers(0, 10_000))
    def test_commit_count_non_increasing_in_f(self, n, num, seed):
        rng = np.random.default_rng(seed)
        alignment = rng.integers(0, n, size=num)
        counts = [alignatt_decide(alignment, n, f, num).commit_count for f in range(1, n + 2)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_committed_prefix_avoids_band_entirely(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(2, 30))
            f = int(rng.integers(1, n + 3))
            num = int(rng.integers(0, 10))
            alignment = rng.integers(0, n, size=num)
            commit = alignatt_decide(alignment, n, f, num).commit_count
            band = set(range(max(0, n - f), n))
            assert all(alignment[i] not in band for i in range(commit))
            if commit < num:
                assert alignment[commit] in band


class TestEDAttDecide:
    def test_stops_when_recent_mass_reaches_threshold(self):
        attn = np.array(
            [
                [0.5, 0.45, 0.03, 0.02],  # last-2 sum 0.05
                [0.4, 0.30, 0.10, 0.20],  # last-2 sum 0.30
            ]
        )
        decision = edatt_decide(attn, alpha=0.1, lam=2, num_candidates=2)
        assert decision.commit_count == 1
        assert decision.stopped_by is StopReason.THRESHOLD

    def test_alpha_one_commits_everything_below_it(self):
        rng = np.random.default_rng(12)
        attn = random_attention(rng, 4, 10)
        decision = edatt_decide(attn, alpha=1.0, lam=2, num_candidates=4)
        assert decision.commit_count == 4
        assert decision.stopped_by is StopReason.EXHAUSTED

    def test_seeded_matrix_matches_row_sum_oracle(self):
        rng = np.random.default_rng(13)
        attn = random_attention(rng, 4, 10)
        expected = 0
        for i in range(4):
            if attn[i, -2:].sum() >= 0.2:
                break
            expected += 1
        assert edatt_decide(attn, alpha=0.2, lam=2, num_candidates=4).commit_count == expected

    def test_lambda_covering_row_uses_total_mass(self):
        attn = np.array([[0.6, 0.4]])
        # lam > n: the sum is the whole row = 1.0 >= alpha
        decision = edatt_decide(attn, alpha=0.9, lam=5, num_candidates=1)
        assert decision.commit_count == 0

    def test_rejects_bad_hyperparameters(self):
        attn = np.array([[1.0]])
        with pytest.raises(ValueError, match="lam"):
            edatt_decide(attn, alpha=0.5, lam=0, num_candidates=1)
        with pytest.raises(ValueError, match="alpha"):
            edatt_decide(attn, alpha=0.0, lam=1, num_candidates=1)

    def test_rejects_missing_rows(self):
        with pytest.raises(ValueError, match="row per candidate"):
            edatt_decide(np.ones((1, 3)) / 3, alpha=0.5, lam=1, num_candidates=2)

    def test_empty_candidates(self):
        assert edatt_decide(np.zeros((0, 4)), alpha=0.5, lam=1, num_candidates=0).commit_count == 0

    @settings(max_examples=200, deadline=None)
    @given(
        m=st.integers(1, 8),
        n=st.integers(1, 12),
        lam=st.integers(1, 14),
        seed=st.integers(0, 10_000),
    )
    def test_commit_count_non_decreasing_in_alpha(self, m, n, lam, seed):
        attn = random_attention(np.random.default_rng(seed), m, n)
        alphas = [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0]
        counts = [edatt_decide(attn, a, lam, m).commit_count for a in alphas]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestPolicyClasses:
    def test_alignatt_policy_delegates_to_rule(self, default_vocab):
        policy = AlignAttPolicy(f=2)
        m, n = 3, 8
        attn = np.zeros((m, n))
        attn[0, 0] = attn[1, 2] = attn[2, 7] = 1.0
        ctx = StepContext(
            candidates=(5, 6, 7),
            attention=attn,
            alignment=np.array([0, 2, 7]),
            n_frames=n,
            source_words=0,
            committed=(),
            hypothesis=(5, 6, 7),
            eos_reached=False,
            vocab=default_vocab,
        )
        decision = policy.decide(ctx)
        assert decision.commit_count == 2
        assert decision.stopped_by is StopReason.INACCESSIBLE_FRAME

    def test_edatt_policy_delegates_to_rule(self, default_vocab):
        policy = EDAttPolicy(alpha=0.1, lam=2)
        attn = np.array([[0.5, 0.45, 0.03, 0.02], [0.4, 0.3, 0.1, 0.2]])
        ctx = StepContext(
            candidates=(5, 6),
            attention=attn,
            alignment=np.array([0, 0]),
            n_frames=4,
            source_words=0,
            committed=(),
            hypothesis=(5, 6),
            eos_reached=False,
            vocab=default_vocab,
        )
        assert policy.decide(ctx).commit_count == 1

    def test_constructor_validation(self):
        with pytest.raises(ValueError, match="f must be"):
            AlignAttPolicy(f=0)
        with pytest.raises(ValueError, match="alpha"):
            EDAttPolicy(alpha=1.5)
        with pytest.raises(ValueError, match="lam"):
            EDAttPolicy(alpha=0.5, lam=0)
        with pytest.raises(ValueError, match="k must be"):
            WaitKPolicy(k=0)

    def test_policy_names(self):
        assert AlignAttPolicy(f=2).name == "alignatt"
        assert EDAttPolicy(alpha=0.5).name == "edatt"
        assert WaitKPolicy(k=3).name == "waitk"
        assert LocalAgreementPolicy().name == "local_agreement"


class TestWaitK:
    @pytest.mark.parametrize(
        "k,detected,emitted,expected",
        [(3, 2, 0, 0), (3, 3, 0, 1), (3, 7, 2, 3), (1, 1, 0, 1), (2, 10, 9, 0)],
    )
    def test_allowed_examples(self, k, detected, emitted, expected):
        assert waitk_allowed(k, detected, emitted) == expected

    def test_rejects_k_below_one(self):
        with pytest.raises(ValueError, match="k must be"):
            waitk_allowed(0, 3, 0)

    @settings(max_examples=200, deadline=None)
    @given(k=st.integers(1, 9), detected=st.integers(0, 30), emitted=st.integers(0, 30))
    def test_allowed_plus_emitted_respects_budget(self, k, detected, emitted):
        allowed = waitk_allowed(k, detected, emitted)
        assert allowed >= 0
        assert emitted + allowed <= max(emitted, max(0, detected - k + 1))


def _waitk_context(vocab: Vocabulary, committed, candidates, source_words, eos=False):
    n = 20
    m = len(candidates)
    return StepContext(
        candidates=tuple(candidates),
        attention=np.full((m, n), 1.0 / n),
        alignment=np.zeros(m, dtype=int),
        n_frames=n,
        source_words=source_words,
        committed=tuple(committed),
        hypothesis=tuple(committed) + tuple(candidates),
        eos_reached=eos,
        vocab=vocab,
    )


class TestWaitKPolicy:
    @pytest.fixture()
    def vocab(self):
        return Vocabulary(["▁an", "▁be", "▁ce", "de", "fe"])

    def test_withholds_incomplete_tail_word(self, vocab):
        policy = WaitKPolicy(k=1)
        ids = [vocab.piece_id(p) for p in ("▁an", "▁be", "de")]
        ctx = _waitk_context(vocab, [], ids, source_words=9)
        decision = policy.decide(ctx)
        # "▁be de" may still grow: only "▁an" is a complete word
        assert decision.commit_count == 1
        assert decision.stopped_by is StopReason.SCHEDULE

    def test_eos_completes_tail_word(self, vocab):
        policy = WaitKPolicy(k=1)
        ids = [vocab.piece_id(p) for p in ("▁an", "▁be", "de")]
        ctx = _waitk_context(vocab, [], ids, source_words=9, eos=True)
        assert policy.decide(ctx).commit_count == 3

    def test_budget_limits_committed_words(self, vocab):
        policy = WaitKPolicy(k=3)
        ids = [vocab.piece_id(p) for p in ("▁an", "▁be", "▁ce", "de")]
        ctx = _waitk_context(vocab, [], ids, source_words=4, eos=True)
        # detected=4, k=3 -> budget 2 words
        decision = policy.decide(ctx)
        assert decision.commit_count == 2
        assert decision.stopped_by is StopReason.SCHEDULE

    def test_leading_continuation_is_free(self, vocab):
        policy = WaitKPolicy(k=2)
        committed = [vocab.piece_id("▁be")]
        candidates = [vocab.piece_id("de"), vocab.piece_id("▁an")]
        # emitted=1 word; detected=2 -> budget max(0, 2-2+1-1)=0, yet the
        # continuation "de" belongs to the committed word and may flow
        ctx = _waitk_context(vocab, committed, candidates, source_words=2, eos=True)
        decision = policy.decide(ctx)
        assert decision.commit_count == 1

    def test_no_candidates(self, vocab):
        policy = WaitKPolicy(k=2)
        ctx = _waitk_context(vocab, [], [], source_words=5)
        assert policy.decide(ctx).commit_count == 0

    def test_uses_word_counts_flag(self):
        assert WaitKPolicy(k=2).uses_word_counts
        assert not AlignAttPolicy(f=2).uses_word_counts


class TestLocalAgreement:
    def test_prefix_examples(self):
        d = local_agreement_prefix([10, 11, 12], [10, 11, 13], committed=1)
        assert d.commit_count == 1 and d.stopped_by is StopReason.DISAGREEMENT
        assert local_agreement_prefix(None, [10, 11], committed=0).commit_count == 0
        d = local_agreement_prefix([10, 11, 12], [10, 11, 12, 14], committed=0)
        assert d.commit_count == 3

    def test_longest_common_prefix(self):
        assert longest_common_prefix([1, 2, 3], [1, 2, 4]) == 2
        assert longest_common_prefix([], [1]) == 0
        assert longest_common_prefix([1], [1]) == 1

    @settings(max_examples=300, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        len_a=st.integers(0, 10),
        len_b=st.integers(0, 10),
        committed=st.integers(0, 5),
    )
    def test_committed_tokens_agree_in_both_hypotheses(self, seed, len_a, len_b, committed):
        rng = np.random.default_rng(seed)
        previous = rng.integers(0, 4, size=len_a).tolist()
        current = rng.integers(0, 4, size=len_b).tolist()
        committed = min(committed, longest_common_prefix(previous, current))
        decision = local_agreement_prefix(previous, current, committed)
        for i in range(committed, committed + decision.commit_count):
            assert previous[i] == current[i]

    def test_policy_first_chunk_commits_nothing(self, default_vocab):
        policy = LocalAgreementPolicy()
        ctx = _waitk_context(default_vocab, [], [5, 6, 7], source_words=0)
        assert policy.decide(ctx).commit_count == 0

    def test_policy_commits_agreed_prefix_on_second_chunk(self, default_vocab):
        policy = LocalAgreementPolicy()
        policy.decide(_waitk_context(default_vocab, [], [5, 6, 7], source_words=0))
        decision = policy.decide(_waitk_context(default_vocab, [], [5, 6, 9, 9], source_words=0))
        assert decision.commit_count == 2
        assert decision.stopped_by is StopReason.DISAGREEMENT

    def test_policy_discounts_already_committed(self, default_vocab):
        policy = LocalAgreementPolicy()
        policy.decide(_waitk_context(default_vocab, [], [5, 6, 7], source_words=0))
        policy.decide(_waitk_context(default_vocab, [], [5, 6, 9], source_words=0))  # commits 2
        decision = policy.decide(_waitk_context(default_vocab, [5, 6], [9, 8], source_words=0))
        # hypothesis [5,6,9,8] vs previous [5,6,9]: lcp 3, minus 2 committed
        assert decision.commit_count == 1

    def test_window_three_needs_two_previous(self, default_vocab):
        policy = LocalAgreementPolicy(window=3)
        assert policy.decide(_waitk_context(default_vocab, [], [5, 6], source_words=0)).commit_count == 0
        assert policy.decide(_waitk_context(default_vocab, [], [5, 6], source_words=0)).commit_count == 0
        decision = policy.decide(_waitk_context(default_vocab, [], [5, 7], source_words=0))
        # lcp across both stored hypotheses [5,6],[5,6] with current [5,7] is 1
        assert decision.commit_count == 1

    def test_reset_clears_history(self, default_vocab):
        policy = LocalAgreementPolicy()
        policy.decide(_waitk_context(default_vocab, [], [5, 6], source_words=0))
        policy.reset()
        assert policy.decide(_waitk_context(default_vocab, [], [5, 6], source_words=0)).commit_count == 0

    def test_rejects_window_below_two(self):
        with pytest.raises(ValueError, match="window"):
            LocalAgreementPolicy(window=1)
