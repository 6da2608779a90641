"""Multi-block generation with automaton-state carry-over.

Each block is decoded independently but starts its dynamic program at the
state reached by the previously committed blocks, so the concatenated output
stays a completable prefix.  Per-block optimality does not compose into
global optimality across blocks; nothing here claims otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .dp_decoder import NoValidPrefix, Optimal, ProbabilityBlock, decode_block
from .errors import BlockSourceError, DeadPrefixError
from .token_automaton import TokenAutomaton

BlockSource = Callable[[int, tuple[int, ...]], ProbabilityBlock]


@dataclass(frozen=True)
class GenerationConfig:
    """Block length, diffusion steps per block, and block count."""

    block_length: int
    steps: int
    blocks: int

    def __post_init__(self) -> None:
        if self.block_length < 0 or self.blocks < 1 or self.steps < 1:
            raise ValueError(f"bad generation config {self}")


@dataclass
class GenerationState:
    """Committed output so far and the automaton state it replays to."""

    config: GenerationConfig
    current_state: int
    committed: list[int] = field(default_factory=list)
    realizers: list[int | None] = field(default_factory=list)
    block_index: int = 0


@dataclass(frozen=True)
class RunResult:
    """Outcome of a multi-block run.

    On failure `tokens` is None, `failed_block` names the block whose decode
    found no valid prefix, and `partial` keeps everything committed before it.
    """

    tokens: tuple[int, ...] | None
    partial: tuple[int, ...]
    realizers: tuple[int | None, ...]
    end_state: int | None
    failed_block: int | None
    block_log_probs: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return self.tokens is not None


def run_blocks(
    block_source: BlockSource,
    ta: TokenAutomaton,
    config: GenerationConfig,
    start_state: int | None = None,
) -> RunResult:
    """Decode `config.blocks` blocks left to right, carrying the end state.

    `block_source(i, committed)` must return the probability block for block
    i given everything committed so far.  The first failing block aborts the
    run and is reported together with the partial output.
    """
    state = GenerationState(
        config=config,
        current_state=ta.start if start_state is None else start_state,
    )
    log_probs: list[float] = []
    for b in range(config.blocks):
        try:
            block = block_source(b, tuple(state.committed))
        except Exception as exc:  # noqa: BLE001 - surfaced as a typed error
            raise BlockSourceError(f"block source failed at block {b}: {exc}") from exc
        if block.d != config.block_length:
            raise BlockSourceError(
                f"block {b} has d={block.d}, expected {config.block_length}"
            )
        outcome = decode_block(ta, block, state.current_state)
        if isinstance(outcome, NoValidPrefix) or not ta.live[outcome.end_state]:
            return RunResult(
                tokens=None,
                partial=tuple(state.committed),
                realizers=tuple(state.realizers),
                end_state=None,
                failed_block=b,
                block_log_probs=tuple(log_probs),
            )
        assert isinstance(outcome, Optimal)
        state.committed.extend(outcome.tokens)
        state.realizers.extend(outcome.realizers)
        state.current_state = outcome.end_state
        state.block_index = b + 1
        log_probs.append(outcome.log_prob)
    return RunResult(
        tokens=tuple(state.committed),
        partial=tuple(state.committed),
        realizers=tuple(state.realizers),
        end_state=state.current_state,
        failed_block=None,
        block_log_probs=tuple(log_probs),
    )


def resume_state(committed: list[int] | tuple[int, ...], ta: TokenAutomaton) -> int:
    """Replay a fully unmasked committed sequence; error if it dies.

    Sequences containing the mask token must be resolved (e.g. with the
    recorded realizers) before resuming: the carried state is a single state,
    not a set.
    """
    q = ta.start
    for pos, t in enumerate(committed):
        if t == ta.mask_id:
            raise ValueError(
                f"committed sequence has an unresolved mask token at position {pos}"
            )
        dst = ta.delta_t(q, int(t))
        if dst is None:
            raise DeadPrefixError(
                f"token {t} at position {pos} drives state {q} into the dead sink"
            )
        q = dst
    return q
