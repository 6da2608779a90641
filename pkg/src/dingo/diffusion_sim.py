"""Model-free diffusion-process simulator.

Drives the constrained decoder end-to-end without a neural network: a seeded
generator stands in for the transformer step, a remasking strategy picks
which positions stay masked, and the schedule shrinks the masked count
linearly to zero.  One simulation step = predict distributions at open
positions, force the remasked rows one-hot on the mask token, then decode
the whole block in the selected mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .baselines_oracle import greedy_constrained_decode, unconstrained_decode
from .dp_decoder import NoValidPrefix, ProbabilityBlock, decode_block
from .regex_automaton import compile_regex, compute_live_states
from .token_automaton import TokenAutomaton, TokenVocabulary, build_token_dfa

STRATEGY_KINDS = ("random", "topprob", "entropy")
MODES = ("dingo", "greedy", "unconstrained")


@dataclass(frozen=True)
class RemaskStrategy:
    """Which positions return to the mask token each step.

    random: uniform choice (seeded); topprob: smallest per-row maximum
    (least confident); entropy: largest row entropy.  Ties break toward the
    smaller position index.
    """

    kind: str = "topprob"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown remask strategy {self.kind!r}")


@dataclass(frozen=True)
class Schedule:
    """Linear mask-count schedule: step i of T keeps floor(d*(T-i)/T) masked."""

    steps: int
    block_length: int

    def masked_count(self, step: int) -> int:
        if not 0 <= step <= self.steps:
            raise ValueError(f"step {step} outside 0..{self.steps}")
        return (self.block_length * (self.steps - step)) // self.steps


def synthetic_distribution(
    seed: int,
    step: int,
    committed_rows: np.ndarray,
    mask_id: int,
    temperature: float = 1.0,
    special_ids: frozenset[int] = frozenset(),
    stream: int = 0,
) -> ProbabilityBlock:
    """Deterministic stand-in for a model's per-position distributions.

    Rows that are one-hot on a real token are passed through unchanged;
    every other position gets a seeded softmax over the real tokens (mask
    and special ids receive zero mass).  `stream` namespaces independent
    generation streams (e.g. block index) under one seed.
    """
    rows = np.asarray(committed_rows, dtype=np.float64).copy()
    d, vsize = rows.shape
    blocked = sorted({mask_id, *special_ids})
    for i in range(d):
        argmax = int(np.argmax(rows[i]))
        if rows[i, argmax] == 1.0 and argmax != mask_id:
            continue  # committed
        rng = np.random.default_rng(np.random.SeedSequence((seed, stream, step, i)))
        logits = rng.standard_normal(vsize) / max(temperature, 1e-9)
        logits[blocked] = -np.inf
        logits -= logits[np.isfinite(logits)].max()
        probs = np.exp(logits)
        rows[i] = probs / probs.sum()
    return ProbabilityBlock.from_rows(rows)


def remask_positions(
    block: ProbabilityBlock,
    step: int,
    steps: int,
    strategy: RemaskStrategy,
    mask_id: int,
) -> list[int]:
    """Positions that stay masked at `step`, exactly the scheduled count.

    Committed positions (one-hot on a real token) are only re-masked when
    the schedule demands more positions than are open; then the least
    confident committed rows fill the quota.
    """
    d = block.d
    count = Schedule(steps=steps, block_length=d).masked_count(step)
    rows = block.rows
    row_max = rows.max(axis=1)
    committed = (row_max == 1.0) & (np.argmax(rows, axis=1) != mask_id)
    candidates = np.flatnonzero(~committed)
    if count <= 0:
        return []

    def ranked(idx: np.ndarray) -> np.ndarray:
        if strategy.kind == "topprob":
            return idx[np.lexsort((idx, row_max[idx]))]
        if strategy.kind == "entropy":
            p = rows[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
            return idx[np.lexsort((idx, -h))]
        rng = np.random.default_rng(np.random.SeedSequence((strategy.seed, step)))
        return idx[rng.permutation(idx.shape[0])]

    take = min(count, candidates.shape[0])
    chosen = ranked(candidates)[:take].tolist()
    if take < count:
        spill = np.flatnonzero(committed)
        spill = spill[np.lexsort((spill, row_max[spill]))]
        chosen.extend(spill[: count - take].tolist())
    return sorted(chosen)


@dataclass(frozen=True)
class StepRecord:
    block: int
    step: int
    masked: tuple[int, ...]
    decoded: tuple[int, ...]
    log_prob: float


@dataclass(frozen=True)
class Transcript:
    """Every intermediate decode of a simulated generation."""

    mode: str
    seed: int
    records: tuple[StepRecord, ...]
    final_tokens: tuple[int, ...] | None
    final_text: str
    valid_prefix: bool
    outcome: str  # "ok" | "no_valid_prefix" | "decoder_stuck"

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                json.dumps(
                    {
                        "block": r.block,
                        "step": r.step,
                        "masked": list(r.masked),
                        "decoded": list(r.decoded),
                        "log_prob": r.log_prob,
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "final": True,
                    "mode": self.mode,
                    "seed": self.seed,
                    "tokens": list(self.final_tokens) if self.final_tokens is not None else None,
                    "text": self.final_text,
                    "valid_prefix": self.valid_prefix,
                    "outcome": self.outcome,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _greedy_order(
    committed: list[int | None],
    rows: np.ndarray,
    remasked: list[int],
    strategy: RemaskStrategy,
) -> list[int]:
    """Commit order for the greedy mode: already-committed positions first,
    then open positions most-confident-first, remasked ones last."""
    d = len(committed)
    remasked_set = set(remasked)
    fixed = [i for i in range(d) if committed[i] is not None]
    open_kept = [i for i in range(d) if committed[i] is None and i not in remasked_set]
    if strategy.kind == "entropy":
        p = rows
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
        open_kept.sort(key=lambda i: (h[i], i))
    else:
        row_max = rows.max(axis=1)
        open_kept.sort(key=lambda i: (-row_max[i], i))
    tail = sorted(remasked_set - set(fixed))
    return fixed + open_kept + tail


def simulate_generation(
    regex: str | None,
    vocab: TokenVocabulary,
    config,
    strategy: RemaskStrategy,
    seed: int,
    mode: str = "dingo",
    temperature: float = 1.0,
    ta: TokenAutomaton | None = None,
) -> Transcript:
    """Run T diffusion steps per block for k blocks in the given mode.

    In dingo mode the block decode is the constrained dynamic program, so
    every intermediate string (and the final one) replays to a live state.
    greedy and unconstrained modes are free to wander; their final validity
    is recorded in the transcript rather than enforced.
    """
    from .semi_autoregressive import GenerationConfig  # cycle-free import

    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if ta is None:
        if regex is None:
            raise ValueError("either a regex or a prebuilt automaton is required")
        dfa = compile_regex(regex)
        ta = build_token_dfa(dfa, compute_live_states(dfa), vocab)
    cfg: GenerationConfig = config
    d, T, k = cfg.block_length, cfg.steps, cfg.blocks

    records: list[StepRecord] = []
    all_tokens: list[int] = []
    q_curr = ta.start
    outcome = "ok"

    for b in range(k):
        committed: list[int | None] = [None] * d
        stuck = False
        for step in range(1, T + 1):
            base = np.zeros((d, vocab.size), dtype=np.float64)
            for i in range(d):
                base[i, committed[i] if committed[i] is not None else vocab.mask_id] = 1.0
            block = synthetic_distribution(
                seed, step, base, vocab.mask_id,
                temperature=temperature,
                special_ids=vocab.special_ids,
                stream=b,
            )
            remasked = remask_positions(block, step, T, strategy, vocab.mask_id)
            rows = block.rows.copy()
            for i in remasked:
                rows[i] = 0.0
                rows[i, vocab.mask_id] = 1.0
            block = ProbabilityBlock.from_rows(rows)

            if mode == "dingo":
                dec = decode_block(ta, block, q_curr)
                if isinstance(dec, NoValidPrefix):
                    outcome = "no_valid_prefix"
                    stuck = True
                    break
                tokens = dec.tokens
                log_prob = dec.log_prob
            elif mode == "greedy":
                order = _greedy_order(committed, block.rows, remasked, strategy)
                g = greedy_constrained_decode(ta, block, q_curr, order)
                if not g.ok:
                    outcome = "decoder_stuck"
                    stuck = True
                    break
                tokens = g.tokens
                log_prob = g.log_prob
            else:
                tokens = unconstrained_decode(block, exclude=vocab.special_ids)
                with np.errstate(divide="ignore"):
                    log_prob = float(
                        np.sum(np.log(block.rows[np.arange(d), list(tokens)]))
                    )

            for i, t in enumerate(tokens):
                committed[i] = None if t == vocab.mask_id else int(t)
            records.append(
                StepRecord(
                    block=b,
                    step=step,
                    masked=tuple(remasked),
                    decoded=tuple(int(t) for t in tokens),
                    log_prob=float(log_prob),
                )
            )
        if stuck:
            break
        block_tokens = [int(t) for t in committed]  # schedule ends fully unmasked
        all_tokens.extend(block_tokens)
        if mode != "unconstrained":
            q_next = _replay(ta, q_curr, block_tokens)
            if q_next is None or not ta.live[q_next]:
                # Constrained modes keep every block completable; a dead
                # carry state means the decode itself reported failure above
                # or the instance is unsatisfiable going forward.
                outcome = "no_valid_prefix" if mode == "dingo" else "decoder_stuck"
                break
            q_curr = q_next

    completed = outcome == "ok" and len(all_tokens) == d * k
    final = tuple(all_tokens) if all_tokens else None
    end = _replay(ta, ta.start, list(final)) if completed and final else None
    valid = end is not None and bool(ta.live[end])
    text = "".join(vocab.tokens[t] for t in final) if final else ""
    return Transcript(
        mode=mode,
        seed=seed,
        records=tuple(records),
        final_tokens=final,
        final_text=text,
        valid_prefix=valid,
        outcome=outcome,
    )


def _replay(ta: TokenAutomaton, q: int, tokens: list[int]) -> int | None:
    for t in tokens:
        if t == ta.mask_id:
            return None
        dst = ta.delta_t(q, t)
        if dst is None:
            return None
        q = dst
    return q
