"""Decode-time benchmarking with CSV and figure reports.

Sweeps block length at a fixed automaton and vocabulary, timing repeated
decodes of seeded random blocks.  The report is a CSV of raw measurements
plus a log-log scaling figure rendered next to it; per-decode time should
track the d * |Q| * (|Q| + |V|) work bound, i.e. roughly double per doubling
of the block length.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .dp_decoder import ProbabilityBlock, decode_block
from .token_automaton import TokenAutomaton, TokenVocabulary


def random_block(
    vocab: TokenVocabulary, d: int, seed: int, sharpness: float = 1.0
) -> ProbabilityBlock:
    """Seeded softmax rows over the real tokens."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, d)))
    logits = rng.standard_normal((d, vocab.size)) * sharpness
    logits[:, vocab.mask_id] = -np.inf
    for s in vocab.special_ids:
        logits[:, s] = -np.inf
    rows = np.exp(logits - logits[np.isfinite(logits)].max())
    rows /= rows.sum(axis=1, keepdims=True)
    return ProbabilityBlock.from_rows(rows)


def run_sweep(
    ta: TokenAutomaton,
    vocab: TokenVocabulary,
    d_values: list[int],
    repeats: int = 3,
    seed: int = 0,
) -> list[dict]:
    """Decode wall time per block length; one row per d.

    Repeats are interleaved round-robin across the block lengths so that
    background load hits every d roughly equally and the between-d ratios
    stay meaningful even on a busy machine.
    """
    # Warm the decode plan and allocator high-water mark so the sweep
    # measures decoding, not setup.
    decode_block(ta, random_block(vocab, max(d_values), seed))
    blocks = {d: random_block(vocab, d, seed) for d in d_values}
    times: dict[int, list[float]] = {d: [] for d in d_values}
    for _ in range(repeats):
        for d in d_values:
            t0 = time.perf_counter()
            decode_block(ta, blocks[d])
            times[d].append(time.perf_counter() - t0)
    return [
        {
            "d": d,
            "n_states": ta.n_states,
            "vocab_size": vocab.size,
            "seconds": float(np.median(times[d])),
            "seconds_min": float(min(times[d])),
            "seconds_max": float(max(times[d])),
            "repeats": repeats,
        }
        for d in d_values
    ]


def write_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def render_figure(rows: list[dict], path: str | Path) -> None:
    """Log-log decode time vs block length with a linear-growth guide."""
    d = np.array([r["d"] for r in rows], dtype=float)
    secs = np.array([r["seconds"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(d, secs, "o-", label="measured")
    ax.loglog(d, secs[0] * d / d[0], "--", color="gray", label="linear in d")
    ax.set_xlabel("block length d")
    ax.set_ylabel("decode wall time [s]")
    ax.set_title(
        f"per-decode time, |Q|={rows[0]['n_states']}, |V|={rows[0]['vocab_size']}"
    )
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
