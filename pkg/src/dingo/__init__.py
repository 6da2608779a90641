"""Regex-constrained maximum-probability decoding for block token generation.

Core pipeline: compile a regular expression to a minimized character-level
DFA, lift it to the tokenizer vocabulary, then decode probability blocks with
a max-product dynamic program that keeps every emitted prefix completable.
"""

from .baselines_oracle import (
    GreedyResult,
    OracleResult,
    brute_force_oracle,
    greedy_constrained_decode,
    unconstrained_decode,
)
from .diffusion_sim import (
    RemaskStrategy,
    Schedule,
    Transcript,
    remask_positions,
    simulate_generation,
    synthetic_distribution,
)
from .dp_decoder import (
    CostTables,
    DpTable,
    NoValidPrefix,
    Optimal,
    ProbabilityBlock,
    build_cost_tables,
    decode_block,
    dp_forward,
    reconstruct_path,
)
from .errors import (
    BlockSourceError,
    DeadPrefixError,
    DimensionMismatchError,
    DingoError,
    FormatError,
    InvalidOrderError,
    InvalidTokenError,
    RegexSyntaxError,
    TooLargeError,
    UnsupportedFeatureError,
    VersionMismatchError,
    VocabularyMismatchError,
)
from .regex_automaton import (
    CharDfa,
    LiveSet,
    compile_regex,
    compute_live_states,
    extended_transition,
)
from .semi_autoregressive import (
    GenerationConfig,
    GenerationState,
    RunResult,
    resume_state,
    run_blocks,
)
from .token_automaton import (
    TokenAutomaton,
    TokenVocabulary,
    build_token_dfa,
    combined_transition,
    deserialize,
    mask_closure,
    serialize,
)

__all__ = [
    "BlockSourceError",
    "CharDfa",
    "CostTables",
    "DeadPrefixError",
    "DimensionMismatchError",
    "DingoError",
    "DpTable",
    "FormatError",
    "GenerationConfig",
    "GenerationState",
    "GreedyResult",
    "InvalidOrderError",
    "InvalidTokenError",
    "LiveSet",
    "NoValidPrefix",
    "Optimal",
    "OracleResult",
    "ProbabilityBlock",
    "RegexSyntaxError",
    "RemaskStrategy",
    "RunResult",
    "Schedule",
    "TokenAutomaton",
    "TokenVocabulary",
    "TooLargeError",
    "Transcript",
    "UnsupportedFeatureError",
    "VersionMismatchError",
    "VocabularyMismatchError",
    "brute_force_oracle",
    "build_cost_tables",
    "build_token_dfa",
    "combined_transition",
    "compile_regex",
    "compute_live_states",
    "decode_block",
    "deserialize",
    "dp_forward",
    "extended_transition",
    "greedy_constrained_decode",
    "mask_closure",
    "reconstruct_path",
    "remask_positions",
    "resume_state",
    "run_blocks",
    "serialize",
    "simulate_generation",
    "synthetic_distribution",
    "unconstrained_decode",
]

__version__ = "0.1.0"
