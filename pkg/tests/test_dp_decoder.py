"""Cost tables, forward DP, path reconstruction, and block formats."""

import json
import math
import random

import numpy as np
import pytest

from _support import build_automaton, random_instance, replay_combined
from dingo.baselines_oracle import unconstrained_decode
from dingo.dp_decoder import (
    NEG_INF,
    NoValidPrefix,
    Optimal,
    ProbabilityBlock,
    build_cost_tables,
    decode_block,
    dp_forward,
    reconstruct_path,
)
from dingo.errors import DimensionMismatchError, FormatError, VersionMismatchError


class TestProbabilityBlock:
    def test_validation(self):
        with pytest.raises(DimensionMismatchError):
            ProbabilityBlock.from_rows(np.zeros(3))
        with pytest.raises(ValueError):
            ProbabilityBlock.from_rows([[0.5, float("nan")]])
        with pytest.raises(ValueError):
            ProbabilityBlock.from_rows([[-0.1, 1.1]])
        blk = ProbabilityBlock.from_rows([[0.5, 0.501]])
        with pytest.raises(ValueError):
            blk.validate_distributions()
        ProbabilityBlock.from_rows([[0.5, 0.49995]]).validate_distributions()

    def test_masked_detection(self):
        blk = ProbabilityBlock.from_rows([[0.0, 1.0], [1.0, 0.0]])
        assert blk.is_masked(0, 1) and not blk.is_masked(1, 1)

    def test_json_roundtrip(self):
        blk = ProbabilityBlock.from_rows([[0.25, 0.75], [1.0, 0.0]])
        blk2 = ProbabilityBlock.from_json_dict(json.loads(json.dumps(blk.to_json_dict())))
        assert np.array_equal(blk.rows, blk2.rows)

    def test_binary_roundtrip_and_errors(self):
        blk = ProbabilityBlock.from_rows([[0.25, 0.75], [0.5, 0.5]])
        data = blk.to_bytes()
        blk2 = ProbabilityBlock.from_bytes(data)
        assert np.allclose(blk.rows, blk2.rows)
        with pytest.raises(FormatError):
            ProbabilityBlock.from_bytes(data[:-2])
        with pytest.raises(FormatError):
            ProbabilityBlock.from_bytes(b"NOPE" + data[4:])
        bad_version = bytearray(data)
        bad_version[4] = 9
        with pytest.raises(VersionMismatchError):
            ProbabilityBlock.from_bytes(bytes(bad_version))


class TestCostTables:
    def test_single_token_edges(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.6, 0.4, 0.0]])
        ct = build_cost_tables(ta, blk)
        assert ct.cost_of(0, 0, 0) == 0.6 and ct.tran(0, 0, 0) == 0
        assert ct.cost_of(0, 0, 1) == 0.4 and ct.tran(0, 0, 1) == 1
        assert ct.cost_of(0, 1, 0) == 0.0 and ct.tran(0, 1, 0) is None

    def test_masked_row_gives_unit_cost_everywhere(self):
        ta, vocab = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.0, 0.0, 1.0]])
        ct = build_cost_tables(ta, blk)
        assert ct.cost_of(0, 0, 0) == 1.0 and ct.cost_of(0, 0, 1) == 1.0
        assert ct.tran(0, 0, 0) == vocab.mask_id

    def test_parallel_edges_take_argmax_token(self):
        ta, _ = build_automaton("a*b", ["a", "b", "ab"])
        ct = build_cost_tables(ta, ProbabilityBlock.from_rows([[0.2, 0.1, 0.5, 0.0]]))
        assert ct.cost_of(0, 0, 1) == 0.5 and ct.tran(0, 0, 1) == 2

    def test_argmax_tie_prefers_smaller_token_id(self):
        ta, _ = build_automaton("a*b", ["a", "b", "ab"])
        ct = build_cost_tables(ta, ProbabilityBlock.from_rows([[0.2, 0.5, 0.5, 0.0]]))
        assert ct.tran(0, 0, 1) == 1

    def test_dimension_mismatch(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        with pytest.raises(DimensionMismatchError):
            build_cost_tables(ta, ProbabilityBlock.from_rows([[0.5, 0.5]]))


class TestDpForward:
    def test_two_step_values(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.6, 0.4, 0.0], [0.7, 0.3, 0.0]])
        table = dp_forward(build_cost_tables(ta, blk), ta.start)
        assert table.a[0].tolist() == [0.0, NEG_INF, NEG_INF]
        assert math.isclose(table.a[2][0], math.log(0.42))
        assert math.isclose(table.a[2][1], math.log(0.18))

    def test_masked_first_position(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.0, 0.0, 1.0], [0.7, 0.3, 0.0]])
        table = dp_forward(build_cost_tables(ta, blk), ta.start)
        assert math.isclose(table.a[2][0], math.log(0.7))
        assert math.isclose(table.a[2][1], math.log(0.3))

    def test_start_without_edges_unreachable_everywhere(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])
        table = dp_forward(build_cost_tables(ta, blk), 1)  # q1 has no edges
        assert (table.a[1:] == NEG_INF).all()

    def test_parent_edges_recompute_to_table_value(self):
        rng = random.Random(21)
        nprng = np.random.default_rng(22)
        for _ in range(30):
            ta, vocab, blk = random_instance(rng, nprng)
            tables = build_cost_tables(ta, blk)
            table = dp_forward(tables, ta.start)
            for i in range(1, blk.d + 1):
                for q in range(ta.n_states):
                    if table.a[i][q] == NEG_INF:
                        continue
                    parent = table.parent(i, q)
                    assert parent is not None
                    src, tok = parent
                    want = table.a[i - 1][src] + math.log(tables.cost_of(i - 1, src, q))
                    assert abs(want - table.a[i][q]) < 1e-12
                    assert q in ta.combined_transition(src, tok)


class TestReconstruct:
    def test_optimum_and_end_state(self):
        ta, _ = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.6, 0.4, 0.0], [0.7, 0.3, 0.0]])
        out = reconstruct_path(dp_forward(build_cost_tables(ta, blk), ta.start), ta.live, 2)
        assert isinstance(out, Optimal)
        assert out.tokens == (0, 0) and out.end_state == 0
        assert math.isclose(out.log_prob, math.log(0.42))

    def test_masked_path_records_realizer(self):
        ta, vocab = build_automaton("a*b", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.0, 0.0, 1.0], [0.7, 0.3, 0.0]])
        out = decode_block(ta, blk)
        assert out.tokens == (vocab.mask_id, 0)
        assert math.isclose(out.log_prob, math.log(0.7))
        assert out.realizers[0] == 0 and out.realizers[1] is None
        assert out.substituted_tokens() == (0, 0)

    def test_empty_live_set(self):
        ta, _ = build_automaton("[^\\x00-\\U0010FFFF]", ["a"])  # empty language
        blk = ProbabilityBlock.from_rows([[1.0, 0.0]])
        out = decode_block(ta, blk)
        assert isinstance(out, NoValidPrefix) and out.witness_state is None

    def test_unreachable_final_returns_witness(self):
        ta, _ = build_automaton("a", ["a", "b"])
        out = decode_block(ta, ProbabilityBlock.from_rows([[0.0, 1.0, 0.0]]))
        assert isinstance(out, NoValidPrefix) and out.witness_state is not None


class TestDecodeBlock:
    def test_spec_adversarial_pair(self):
        ta, _ = build_automaton("(aa)|(bc)", ["a", "b", "c"])
        blk = ProbabilityBlock.from_rows([[0.6, 0.4, 0.0, 0.0], [0.1, 0.0, 0.9, 0.0]])
        out = decode_block(ta, blk)
        assert out.tokens == (1, 2)
        assert math.isclose(math.exp(out.log_prob), 0.36)

    def test_dot_star_equals_unconstrained(self):
        ta, vocab = build_automaton(".*", ["a", "b", "c"])
        rng = np.random.default_rng(5)
        rows = rng.dirichlet(np.ones(vocab.size), size=6)
        rows[:, vocab.mask_id] = 0.0
        rows /= rows.sum(axis=1, keepdims=True)
        blk = ProbabilityBlock.from_rows(rows)
        out = decode_block(ta, blk)
        assert out.tokens == unconstrained_decode(blk)

    def test_contradictory_commitments_yield_no_valid_prefix(self):
        ta, _ = build_automaton("ab", ["a", "b"])
        blk = ProbabilityBlock.from_rows([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        assert isinstance(decode_block(ta, blk), NoValidPrefix)

    def test_zero_length_block(self):
        ta, _ = build_automaton("a*", ["a"])
        out = decode_block(ta, ProbabilityBlock.from_rows(np.zeros((0, 2))))
        assert isinstance(out, Optimal) and out.tokens == () and out.log_prob == 0.0

    def test_mask_monotonicity(self):
        rng = random.Random(31)
        nprng = np.random.default_rng(32)
        checked = 0
        while checked < 25:
            ta, vocab, blk = random_instance(rng, nprng, max_d=4)
            out = decode_block(ta, blk)
            if not isinstance(out, Optimal):
                continue
            checked += 1
            for i in range(blk.d):
                rows = blk.rows.copy()
                rows[i] = 0.0
                rows[i, vocab.mask_id] = 1.0
                out2 = decode_block(ta, ProbabilityBlock.from_rows(rows))
                assert isinstance(out2, Optimal), (i, out, out2)

    def test_scale_invariance_of_argmax(self):
        rng = random.Random(41)
        nprng = np.random.default_rng(42)
        for _ in range(25):
            ta, vocab, blk = random_instance(rng, nprng)
            out = decode_block(ta, blk)
            for c in (2.0, 0.5, 3.7):
                scaled = decode_block(ta, ProbabilityBlock.from_rows(blk.rows * c))
                if isinstance(out, NoValidPrefix):
                    assert isinstance(scaled, NoValidPrefix)
                else:
                    assert scaled.tokens == out.tokens

    def test_determinism_across_runs(self):
        rng = random.Random(51)
        nprng = np.random.default_rng(52)
        ta, vocab, blk = random_instance(rng, nprng, max_d=6)
        outs = {decode_block(ta, blk) for _ in range(5)}
        assert len(outs) == 1

    def test_determinism_under_concurrency(self):
        from concurrent.futures import ThreadPoolExecutor

        rng = random.Random(53)
        nprng = np.random.default_rng(54)
        # fresh automata so the lazy decode-plan build races too
        instances = [random_instance(rng, nprng, max_d=5) for _ in range(6)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            futures = [
                pool.submit(decode_block, ta, blk)
                for _ in range(4)
                for (ta, _v, blk) in instances
            ]
            results = [f.result() for f in futures]
        serial = [decode_block(ta, blk) for (ta, _v, blk) in instances] * 4
        assert sorted(map(repr, results)) == sorted(map(repr, serial))

    def test_prefix_validity_replay(self):
        rng = random.Random(61)
        nprng = np.random.default_rng(62)
        seen_optimal = 0
        for _ in range(60):
            ta, vocab, blk = random_instance(rng, nprng)
            out = decode_block(ta, blk)
            if isinstance(out, NoValidPrefix):
                continue
            seen_optimal += 1
            states = replay_combined(ta, out.tokens)
            assert any(ta.live[q] for q in states)
            q = ta.start
            for t in out.substituted_tokens():
                q = ta.delta_t(q, t)
                assert q is not None
            assert q == out.end_state and ta.live[q]
        assert seen_optimal >= 10
