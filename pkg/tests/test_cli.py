"""CLI behavior: exit codes, JSON-only stdout, file round trips."""

import json

import numpy as np
import pytest

from dingo.cli import main
from dingo.dp_decoder import ProbabilityBlock
from dingo.token_automaton import TokenVocabulary


@pytest.fixture()
def workspace(tmp_path):
    vocab = TokenVocabulary.build(["a", "b"], "<m>")
    vocab.save(tmp_path / "vocab.json")
    rich = TokenVocabulary.build(["a", "b", "c", "ab", "bc"], "<m>")
    rich.save(tmp_path / "rich.json")
    blk = ProbabilityBlock.from_rows([[0.6, 0.4, 0.0], [0.7, 0.3, 0.0]])
    (tmp_path / "probs.json").write_text(json.dumps(blk.to_json_dict()))
    (tmp_path / "probs.dgpb").write_bytes(blk.to_bytes())
    unsat = ProbabilityBlock.from_rows([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    (tmp_path / "unsat.json").write_text(json.dumps(unsat.to_json_dict()))
    return tmp_path


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr().out
    payload = json.loads(out) if out.strip() else None
    return code, payload


class TestCompile:
    def test_stats_and_artifact(self, workspace, capsys):
        code, stats = run_cli(
            ["compile", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--out", workspace / "ab.dgta"],
            capsys,
        )
        assert code == 0
        assert stats["states"] == 3
        assert stats["live_states"] == 2
        assert (workspace / "ab.dgta").exists()

    def test_malformed_regex_exit_2(self, workspace, capsys):
        code, _ = run_cli(
            ["compile", "--regex", "a(", "--vocab", workspace / "vocab.json"], capsys
        )
        assert code == 2

    def test_compiled_artifact_loads_for_decode(self, workspace, capsys):
        run_cli(
            ["compile", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--out", workspace / "ab.dgta"],
            capsys,
        )
        code, res = run_cli(
            ["decode", "--automaton", workspace / "ab.dgta",
             "--vocab", workspace / "vocab.json", "--probs", workspace / "probs.json"],
            capsys,
        )
        assert code == 0 and res["text"] == "aa"


class TestDecode:
    def test_json_and_binary_agree(self, workspace, capsys):
        base = ["decode", "--regex", "a*b", "--vocab", workspace / "vocab.json", "--probs"]
        code1, r1 = run_cli(base + [workspace / "probs.json"], capsys)
        code2, r2 = run_cli(base + [workspace / "probs.dgpb"], capsys)
        assert code1 == code2 == 0
        assert r1["tokens"] == r2["tokens"] == [0, 0]
        assert abs(r1["log_prob"] - np.log(0.42)) < 1e-9

    def test_no_valid_prefix_exit_3(self, workspace, capsys):
        code, res = run_cli(
            ["decode", "--regex", "a", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "unsat.json"],
            capsys,
        )
        assert code == 3 and res["error"] == "no_valid_prefix"

    def test_requires_exactly_one_source(self, workspace, capsys):
        code, _ = run_cli(
            ["decode", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "probs.json"],
            capsys,
        )
        assert code == 2

    def test_multi_block_split(self, workspace, capsys):
        code, res = run_cli(
            ["decode", "--regex", "a*b*", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "probs.json", "--blocks", 2],
            capsys,
        )
        assert code == 0
        assert len(res["block_log_probs"]) == 2

    def test_indivisible_block_split_exit_2(self, workspace, capsys):
        code, _ = run_cli(
            ["decode", "--regex", "a*", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "probs.json", "--blocks", 3],
            capsys,
        )
        assert code == 2

    def test_mask_placeholder_rendering(self, workspace, capsys):
        blk = ProbabilityBlock.from_rows([[0.0, 0.0, 1.0], [0.7, 0.3, 0.0]])
        (workspace / "masked.json").write_text(json.dumps(blk.to_json_dict()))
        code, res = run_cli(
            ["decode", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "masked.json"],
            capsys,
        )
        assert code == 0
        assert res["text"] == "␠Ma"
        code, res = run_cli(
            ["decode", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "masked.json", "--mask-placeholder", "_"],
            capsys,
        )
        assert res["text"] == "_a"


class TestOracleAndBaseline:
    def test_oracle_matches_decode(self, workspace, capsys):
        _, oracle = run_cli(
            ["oracle", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "probs.json"],
            capsys,
        )
        _, decode = run_cli(
            ["decode", "--regex", "a*b", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "probs.json"],
            capsys,
        )
        assert oracle["best_tokens"] == decode["tokens"]
        assert abs(oracle["best_prob"] - np.exp(decode["log_prob"])) < 1e-12

    def test_oracle_reports_none(self, workspace, capsys):
        code, res = run_cli(
            ["oracle", "--regex", "a", "--vocab", workspace / "vocab.json",
             "--probs", workspace / "unsat.json"],
            capsys,
        )
        assert code == 0 and res["best_tokens"] is None

    def test_baseline_modes(self, workspace, capsys):
        code, g = run_cli(
            ["baseline", "--mode", "greedy", "--regex", "a*b",
             "--vocab", workspace / "vocab.json", "--probs", workspace / "probs.json"],
            capsys,
        )
        assert code == 0 and g["mode"] == "greedy" and g["valid_prefix"]
        code, u = run_cli(
            ["baseline", "--mode", "unconstrained", "--regex", "a*b",
             "--vocab", workspace / "vocab.json", "--probs", workspace / "probs.json"],
            capsys,
        )
        assert code == 0 and u["mode"] == "unconstrained"

    def test_greedy_order_flag(self, workspace, capsys):
        code, res = run_cli(
            ["baseline", "--mode", "greedy", "--regex", "a*b*",
             "--vocab", workspace / "vocab.json", "--probs", workspace / "probs.json",
             "--order", "1,0"],
            capsys,
        )
        assert code == 0 and len(res["tokens"]) == 2


class TestSimulateAndBench:
    def test_simulate_writes_deterministic_transcript(self, workspace, capsys):
        args = ["simulate", "--regex", "(ab)+c", "--vocab", workspace / "rich.json",
                "--block-length", 3, "--steps", 3, "--seed", 5, "--mode", "dingo",
                "--out", workspace / "t1.jsonl"]
        code, res = run_cli(args, capsys)
        assert code == 0 and res["valid_prefix"]
        args[-1] = workspace / "t2.jsonl"
        run_cli(args, capsys)
        assert (workspace / "t1.jsonl").read_text() == (workspace / "t2.jsonl").read_text()

    def test_simulate_unsatisfiable_exit_3(self, workspace, capsys):
        code, res = run_cli(
            ["simulate", "--regex", "zz", "--vocab", workspace / "rich.json",
             "--block-length", 2, "--steps", 2, "--mode", "dingo"],
            capsys,
        )
        assert code == 3 and res["outcome"] == "no_valid_prefix"

    def test_bench_emits_csv_and_figure(self, workspace, capsys):
        code, res = run_cli(
            ["bench", "--regex", "[abc]*", "--vocab", workspace / "rich.json",
             "--d-values", "2,4", "--repeats", 1, "--out", workspace / "bench"],
            capsys,
        )
        assert code == 0
        assert (workspace / "bench" / "bench_times.csv").exists()
        assert (workspace / "bench" / "bench_times.png").exists()
        assert [r["d"] for r in res["rows"]] == [2, 4]
