"""Command-line interface.

Subcommands: compile, decode, oracle, baseline, simulate, bench.  All
machine-readable output is single-object JSON on stdout; diagnostics go to
stderr.  Exit codes: 0 success, 2 input error, 3 no valid prefix.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .baselines_oracle import (
    brute_force_oracle,
    greedy_constrained_decode,
    unconstrained_decode,
)
from .diffusion_sim import RemaskStrategy, simulate_generation
from .dp_decoder import NoValidPrefix, ProbabilityBlock, decode_block
from .errors import DingoError
from .regex_automaton import compile_regex, compute_live_states
from .semi_autoregressive import GenerationConfig, run_blocks
from .token_automaton import TokenAutomaton, TokenVocabulary, build_token_dfa

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_VALID_PREFIX = 3

DEFAULT_MASK_PLACEHOLDER = "␠M"

log = logging.getLogger("dingo")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("DINGO_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def render_text(tokens, vocab: TokenVocabulary, placeholder: str = DEFAULT_MASK_PLACEHOLDER) -> str:
    return "".join(
        placeholder if t == vocab.mask_id else vocab.tokens[t] for t in tokens
    )


def _read_pattern(args) -> str:
    if args.regex_file:
        return Path(args.regex_file).read_text(encoding="utf-8").strip("\n")
    return args.regex


def _load_automaton(args, vocab: TokenVocabulary) -> TokenAutomaton:
    has_regex = bool(args.regex or args.regex_file)
    if has_regex == bool(args.automaton):
        raise DingoError("exactly one of --regex/--regex-file or --automaton is required")
    if args.automaton:
        return TokenAutomaton.load(args.automaton, vocab)
    pattern = _read_pattern(args)
    dfa = compile_regex(pattern)
    return build_token_dfa(dfa, compute_live_states(dfa), vocab)


def _load_blocks(paths: list[str], blocks: int | None) -> list[ProbabilityBlock]:
    loaded = [ProbabilityBlock.load(p) for p in paths]
    for i, blk in enumerate(loaded):
        blk.validate_distributions()
        log.info("probs[%d]: d=%d |V|=%d", i, blk.d, blk.vocab_size)
    if blocks is None or blocks == len(loaded):
        return loaded
    if len(loaded) != 1:
        raise DingoError(f"--blocks {blocks} does not match {len(loaded)} probability files")
    single = loaded[0]
    if single.d % blocks:
        raise DingoError(f"cannot split d={single.d} rows into {blocks} equal blocks")
    step = single.d // blocks
    return [
        ProbabilityBlock.from_rows(single.rows[i * step : (i + 1) * step])
        for i in range(blocks)
    ]


def _add_source_args(p: argparse.ArgumentParser, with_probs: bool = True) -> None:
    p.add_argument("--regex", help="constraint pattern (compiled on the fly)")
    p.add_argument("--regex-file", help="file containing the constraint pattern")
    p.add_argument("--automaton", help="serialized token automaton path")
    p.add_argument("--vocab", required=True, help="vocabulary JSON path")
    if with_probs:
        p.add_argument(
            "--probs", nargs="+", required=True, help="probability block path(s) (JSON or binary)"
        )
        p.add_argument("--start-state", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dingo",
        description="Regex-constrained maximum-probability decoding for token blocks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a pattern against a vocabulary")
    p.add_argument("--regex")
    p.add_argument("--regex-file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", help="write the compiled artifact here")
    p.add_argument(
        "--format",
        choices=["binary", "json"],
        default="binary",
        help="binary: token automaton; json: character-DFA debug export",
    )
    p.add_argument("--workers", type=int, default=0)

    p = sub.add_parser("decode", help="maximum-probability constrained decode")
    _add_source_args(p)
    p.add_argument("--blocks", type=int, default=None, help="split rows into k blocks")
    p.add_argument("--mask-placeholder", default=DEFAULT_MASK_PLACEHOLDER)

    p = sub.add_parser("oracle", help="exhaustive-enumeration reference decode")
    _add_source_args(p)

    p = sub.add_parser("baseline", help="greedy or unconstrained reference decode")
    _add_source_args(p)
    p.add_argument("--mode", choices=["greedy", "unconstrained"], default="greedy")
    p.add_argument("--order", help="comma-separated commit order for greedy")
    p.add_argument("--mask-placeholder", default=DEFAULT_MASK_PLACEHOLDER)

    p = sub.add_parser("simulate", help="model-free diffusion simulation")
    p.add_argument("--regex")
    p.add_argument("--regex-file")
    p.add_argument("--automaton")
    p.add_argument("--vocab", required=True)
    p.add_argument("--block-length", type=int, default=16)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--strategy", choices=["random", "topprob", "entropy"], default="topprob")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["dingo", "greedy", "unconstrained"], default="dingo")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--out", help="transcript JSONL path")

    p = sub.add_parser("bench", help="decode-time scaling sweep with CSV + figure")
    p.add_argument("--regex")
    p.add_argument("--regex-file")
    p.add_argument("--automaton")
    p.add_argument("--vocab", required=True)
    p.add_argument("--d-values", default="16,32,64,128")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")

    return parser


def cmd_compile(args) -> int:
    vocab = TokenVocabulary.load(args.vocab)
    if not (args.regex or args.regex_file):
        raise DingoError("--regex or --regex-file is required")
    pattern = _read_pattern(args)
    t0 = time.perf_counter()
    dfa = compile_regex(pattern)
    live = compute_live_states(dfa)
    t_dfa = time.perf_counter() - t0
    t0 = time.perf_counter()
    ta = build_token_dfa(dfa, live, vocab, workers=args.workers)
    t_lift = time.perf_counter() - t0
    if args.out:
        if args.format == "json":
            Path(args.out).write_text(json.dumps(dfa.to_json_dict()), encoding="utf-8")
        else:
            ta.save(args.out)
    reachable = _token_reachable(ta)
    _emit(
        {
            "states": ta.n_states,
            "classes": dfa.n_classes,
            "token_edges": ta.n_edges,
            "mask_edges": int(ta.mask_dsts.shape[0]),
            "live_states": int(ta.live.sum()),
            "token_reachable_states": reachable,
            "vocab_size": vocab.size,
            "build_seconds": {"char_dfa": t_dfa, "token_lift": t_lift},
            "out": args.out,
        }
    )
    return EXIT_OK


def _token_reachable(ta: TokenAutomaton) -> int:
    seen = {ta.start}
    stack = [ta.start]
    while stack:
        q = stack.pop()
        for v in ta.mask_dsts[ta.mask_offsets[q] : ta.mask_offsets[q + 1]].tolist():
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen)


def cmd_decode(args) -> int:
    vocab = TokenVocabulary.load(args.vocab)
    ta = _load_automaton(args, vocab)
    blocks = _load_blocks(args.probs, args.blocks)
    start = ta.start if args.start_state is None else args.start_state

    if len(blocks) == 1:
        outcome = decode_block(ta, blocks[0], start)
        if isinstance(outcome, NoValidPrefix):
            _emit({"error": "no_valid_prefix", "witness_state": outcome.witness_state})
            return EXIT_NO_VALID_PREFIX
        _emit(
            {
                "tokens": list(outcome.tokens),
                "text": render_text(outcome.tokens, vocab, args.mask_placeholder),
                "end_state": outcome.end_state,
                "log_prob": outcome.log_prob,
            }
        )
        return EXIT_OK

    result = run_blocks(
        lambda i, _committed: blocks[i],
        ta,
        GenerationConfig(block_length=blocks[0].d, steps=1, blocks=len(blocks)),
        start_state=start,
    )
    if not result.ok:
        _emit(
            {
                "error": "no_valid_prefix",
                "failed_block": result.failed_block,
                "partial_tokens": list(result.partial),
                "partial_text": render_text(result.partial, vocab, args.mask_placeholder),
            }
        )
        return EXIT_NO_VALID_PREFIX
    _emit(
        {
            "tokens": list(result.tokens),
            "text": render_text(result.tokens, vocab, args.mask_placeholder),
            "end_state": result.end_state,
            "log_prob": float(sum(result.block_log_probs)),
            "block_log_probs": list(result.block_log_probs),
        }
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    vocab = TokenVocabulary.load(args.vocab)
    ta = _load_automaton(args, vocab)
    (block,) = _load_blocks(args.probs, None)
    start = ta.start if args.start_state is None else args.start_state
    res = brute_force_oracle(ta, block, start)
    if res.best is None:
        _emit({"best_tokens": None, "best_prob": None, "enumerated": res.enumerated})
    else:
        _emit(
            {
                "best_tokens": list(res.best[0]),
                "best_prob": res.best[1],
                "enumerated": res.enumerated,
            }
        )
    return EXIT_OK


def cmd_baseline(args) -> int:
    vocab = TokenVocabulary.load(args.vocab)
    ta = _load_automaton(args, vocab)
    (block,) = _load_blocks(args.probs, None)
    start = ta.start if args.start_state is None else args.start_state
    if args.mode == "unconstrained":
        tokens = unconstrained_decode(block, exclude=vocab.special_ids)
        with np.errstate(divide="ignore"):
            log_prob = float(np.sum(np.log(block.rows[np.arange(block.d), list(tokens)])))
        end = _replay_real(ta, start, tokens)
        _emit(
            {
                "mode": "unconstrained",
                "tokens": list(tokens),
                "text": render_text(tokens, vocab, args.mask_placeholder),
                "log_prob": log_prob,
                "end_state": end,
                "valid_prefix": end is not None and bool(ta.live[end]),
            }
        )
        return EXIT_OK
    order = [int(x) for x in args.order.split(",")] if args.order else None
    res = greedy_constrained_decode(ta, block, start, order)
    if not res.ok:
        _emit({"error": "no_valid_prefix", "mode": "greedy", "failed_at": res.failed_at})
        return EXIT_NO_VALID_PREFIX
    _emit(
        {
            "mode": "greedy",
            "tokens": list(res.tokens),
            "text": render_text(res.tokens, vocab, args.mask_placeholder),
            "log_prob": res.log_prob,
            "end_state": res.end_state,
            "zero_probability_positions": list(res.zero_prob_positions),
            "valid_prefix": True,
        }
    )
    return EXIT_OK


def _replay_real(ta: TokenAutomaton, q: int, tokens) -> int | None:
    for t in tokens:
        if t == ta.mask_id:
            return None
        dst = ta.delta_t(q, int(t))
        if dst is None:
            return None
        q = dst
    return q


def cmd_simulate(args) -> int:
    vocab = TokenVocabulary.load(args.vocab)
    ta = None
    pattern = None
    if bool(args.regex or args.regex_file) == bool(args.automaton):
        raise DingoError("exactly one of --regex/--regex-file or --automaton is required")
    if args.automaton:
        ta = TokenAutomaton.load(args.automaton, vocab)
    else:
        pattern = _read_pattern(args)
    cfg = GenerationConfig(
        block_length=args.block_length, steps=args.steps, blocks=args.blocks
    )
    strategy = RemaskStrategy(kind=args.strategy, seed=args.seed)
    transcript = simulate_generation(
        pattern, vocab, cfg, strategy, args.seed, args.mode,
        temperature=args.temperature, ta=ta,
    )
    if args.out:
        Path(args.out).write_text(transcript.to_jsonl(), encoding="utf-8")
    _emit(
        {
            "outcome": transcript.outcome,
            "text": transcript.final_text,
            "tokens": list(transcript.final_tokens) if transcript.final_tokens else None,
            "valid_prefix": transcript.valid_prefix,
            "records": len(transcript.records),
            "out": args.out,
        }
    )
    if args.mode == "dingo" and transcript.outcome == "no_valid_prefix":
        return EXIT_NO_VALID_PREFIX
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench as bench_mod  # defers the matplotlib import

    vocab = TokenVocabulary.load(args.vocab)
    ta = _load_automaton(args, vocab)
    d_values = [int(x) for x in args.d_values.split(",")]
    rows = bench_mod.run_sweep(ta, vocab, d_values, repeats=args.repeats, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "bench_times.csv"
    fig_path = out_dir / "bench_times.png"
    bench_mod.write_csv(rows, csv_path)
    bench_mod.render_figure(rows, fig_path)
    _emit({"csv": str(csv_path), "figure": str(fig_path), "rows": rows})
    return EXIT_OK


_COMMANDS = {
    "compile": cmd_compile,
    "decode": cmd_decode,
    "oracle": cmd_oracle,
    "baseline": cmd_baseline,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DingoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
