"""Reference decoders: unconstrained argmax, greedy per-position masking,
and an exhaustive-enumeration oracle.

The oracle realizes the decoding objective directly: enumerate every token
sequence, keep the ones whose mask substitutions can reach a live state, and
take the probability argmax.  It shares the automaton with the dynamic
program but none of its search machinery, so agreement between the two is a
meaningful check rather than a tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dp_decoder import ProbabilityBlock
from .errors import InvalidOrderError, TooLargeError
from .token_automaton import TokenAutomaton

_ORACLE_GUARD = 10**7
_FAST_TABLE_WORK = 5 * 10**7  # vsize * n * 2^n element updates


@dataclass(frozen=True)
class OracleResult:
    """Best valid sequence found by exhaustive enumeration.

    `best` is None iff no enumerated sequence has positive probability and a
    valid-prefix substitution.
    """

    best: tuple[tuple[int, ...], float] | None
    enumerated: int


def unconstrained_decode(
    block: ProbabilityBlock, exclude: frozenset[int] = frozenset()
) -> tuple[int, ...]:
    """Position-wise argmax of each row; ties go to the smaller token id."""
    rows = block.rows
    if exclude:
        rows = rows.copy()
        rows[:, sorted(exclude)] = -1.0
    return tuple(int(t) for t in np.argmax(rows, axis=1))


@dataclass(frozen=True)
class GreedyResult:
    """Outcome of the greedy per-position baseline.

    `tokens` is None when some position had no valid token at all.  Tokens
    committed at probability zero are listed in `zero_prob_positions`: the
    baseline is forced to distort the distribution there, which is exactly
    the behavior the dynamic program avoids.
    """

    tokens: tuple[int, ...] | None
    end_state: int | None
    log_prob: float
    zero_prob_positions: tuple[int, ...]
    failed_at: int | None

    @property
    def ok(self) -> bool:
        return self.tokens is not None


def greedy_constrained_decode(
    ta: TokenAutomaton,
    block: ProbabilityBlock,
    start_state: int | None = None,
    order: list[int] | tuple[int, ...] | None = None,
) -> GreedyResult:
    """Commit positions one at a time, each to its best currently-valid token.

    A token is valid at a position iff, treating every uncommitted position
    as the mask closure, some path through the automaton consistent with all
    commitments ends in a live state after the block; this is computed from
    forward reachable sets and backward co-reachable sets over the combined
    transition.  It is the strongest sound position-local mask: every prefix
    stays completable, but each position is optimized in isolation.

    Tie-breaking: higher probability, then real tokens over the mask token,
    then the smaller token id.
    """
    d = block.d
    start = ta.start if start_state is None else start_state
    if order is None:
        order = list(range(d))
    if sorted(order) != list(range(d)):
        raise InvalidOrderError(f"order must be a permutation of 0..{d - 1}")

    n = ta.n_states
    closure = [
        ta.mask_dsts[ta.mask_offsets[q] : ta.mask_offsets[q + 1]] for q in range(n)
    ]
    committed: list[int | None] = [None] * d

    def apply_states(states: np.ndarray, pos: int) -> np.ndarray:
        """Image of a state set under position pos's committed relation."""
        out = np.zeros(n, dtype=bool)
        t = committed[pos]
        for q in np.flatnonzero(states).tolist():
            if t is None or t == ta.mask_id:
                out[closure[q]] = True
            else:
                dst = ta.delta_t(q, t)
                if dst is not None:
                    out[dst] = True
        return out

    def boundaries() -> tuple[list[np.ndarray], list[np.ndarray]]:
        fwd = [np.zeros(n, dtype=bool) for _ in range(d + 1)]
        fwd[0][start] = True
        for j in range(d):
            fwd[j + 1] = apply_states(fwd[j], j)
        bwd = [np.zeros(n, dtype=bool) for _ in range(d + 1)]
        bwd[d] = ta.live.copy()
        one = np.zeros(n, dtype=bool)
        for j in range(d - 1, -1, -1):
            for q in range(n):
                one[:] = False
                one[q] = True
                if (apply_states(one, j) & bwd[j + 1]).any():
                    bwd[j][q] = True
        return fwd, bwd

    zero_positions: list[int] = []
    for p in order:
        fwd, bwd = boundaries()
        target_ok = bwd[p + 1]
        best_real: int | None = None
        best_real_v = -1.0
        mask_valid = False
        for q in np.flatnonzero(fwd[p]).tolist():
            toks = ta.row_tokens(q)
            if toks.size:
                dsts = ta.row_dsts(q)
                for t in toks[target_ok[dsts]].tolist():
                    v = float(block.rows[p, t])
                    if v > best_real_v or (v == best_real_v and (best_real is None or t < best_real)):
                        best_real = int(t)
                        best_real_v = v
            if target_ok[closure[q]].any():
                mask_valid = True
        mask_v = float(block.rows[p, ta.mask_id]) if mask_valid else -1.0
        if best_real is None and not mask_valid:
            return GreedyResult(
                tokens=None,
                end_state=None,
                log_prob=float("-inf"),
                zero_prob_positions=tuple(zero_positions),
                failed_at=p,
            )
        if mask_valid and (best_real is None or mask_v > best_real_v):
            choice, v = ta.mask_id, mask_v
        else:
            choice, v = best_real, best_real_v  # type: ignore[assignment]
        committed[p] = choice
        if v <= 0.0:
            zero_positions.append(p)

    tokens = tuple(int(t) for t in committed)  # type: ignore[arg-type]
    # Mask commits keep a set of possible end states; report the smallest
    # live one for determinism.
    fwd, _ = boundaries()
    final_live = np.flatnonzero(fwd[d] & ta.live)
    end_state = int(final_live[0]) if final_live.size else None
    with np.errstate(divide="ignore"):
        log_prob = float(np.sum(np.log(block.rows[np.arange(d), list(tokens)]))) if d else 0.0
    return GreedyResult(
        tokens=tokens,
        end_state=end_state,
        log_prob=log_prob,
        zero_prob_positions=tuple(zero_positions),
        failed_at=None,
    )


def brute_force_oracle(
    ta: TokenAutomaton,
    block: ProbabilityBlock,
    start_state: int | None = None,
) -> OracleResult:
    """Enumerate V^d sequences; keep valid-prefix ones; return the argmax.

    Validity of a sequence is checked by replaying its combined transitions
    (mask fans out to the closure) and intersecting the final state set with
    the live set.  Guarded to |V|^d <= 10^7.
    """
    d = block.d
    vsize = block.vocab_size
    total = vsize**d
    if total > _ORACLE_GUARD:
        raise TooLargeError(f"|V|^d = {total} exceeds the enumeration guard {_ORACLE_GUARD}")
    start = ta.start if start_state is None else start_state
    n = ta.n_states

    if d == 0:
        best = ((), 1.0) if ta.live[start] else None
        return OracleResult(best=best, enumerated=1)

    if n <= 50 and (1 << n) * vsize * n <= _FAST_TABLE_WORK:
        return _oracle_bitmask(ta, block, start, total)
    return _oracle_dfs(ta, block, start, total)


def _oracle_bitmask(
    ta: TokenAutomaton, block: ProbabilityBlock, start: int, total: int
) -> OracleResult:
    """Vectorized enumeration with state sets packed into integer bitmasks."""
    d = block.d
    vsize = block.vocab_size
    n = ta.n_states

    # single[t, q]: bitmask of states reachable from q on token t.
    single = np.zeros((vsize, n), dtype=np.int64)
    for q in range(n):
        toks = ta.row_tokens(q)
        dsts = ta.row_dsts(q).astype(np.int64)
        single[toks, q] = np.int64(1) << dsts
        cmask = np.int64(0)
        for dst in np.unique(dsts).tolist():
            cmask |= np.int64(1) << np.int64(dst)
        single[ta.mask_id, q] = cmask

    # set_table[t, m]: image bitmask of state-set m under token t, built by
    # OR-ing each member bit's image across all masks containing that bit.
    space = 1 << n
    m_all = np.arange(space, dtype=np.int64)
    set_table = np.zeros((vsize, space), dtype=np.int64)
    for q in range(n):
        has_q = (m_all >> q) & 1 == 1
        set_table[:, has_q] |= single[:, q][:, None]

    live_mask = np.int64(0)
    for q in np.flatnonzero(ta.live).tolist():
        live_mask |= np.int64(1) << np.int64(q)
    rows = block.rows

    # Sequences enumerate with position 0 as the most significant axis, so
    # np.argmax's first-hit rule returns the lexicographically smallest tie.
    probs = np.array([1.0])
    masks = np.array([np.int64(1) << np.int64(start)], dtype=np.int64)
    for i in range(d):
        probs = np.multiply.outer(probs, rows[i]).reshape(-1)
        masks = set_table[
            np.tile(np.arange(vsize), masks.shape[0]), np.repeat(masks, vsize)
        ]
    valid = ((masks & live_mask) != 0) & (probs > 0.0)
    if not valid.any():
        return OracleResult(best=None, enumerated=total)
    flat = int(np.argmax(np.where(valid, probs, -1.0)))
    seq = tuple(int(x) for x in np.unravel_index(flat, (vsize,) * d))
    return OracleResult(best=(seq, float(probs[flat])), enumerated=total)


def _oracle_dfs(
    ta: TokenAutomaton, block: ProbabilityBlock, start: int, total: int
) -> OracleResult:
    """Fallback enumeration for state counts too large for bitmask tables."""
    d = block.d
    vsize = block.vocab_size
    rows = block.rows
    live_ids = set(np.flatnonzero(ta.live).tolist())
    best: tuple[tuple[int, ...], float] | None = None

    def rec(pos: int, states: frozenset[int], prob: float, prefix: tuple[int, ...]) -> None:
        nonlocal best
        if pos == d:
            if states & live_ids and prob > 0.0:
                if best is None or prob > best[1]:
                    best = (prefix, prob)
            return
        for t in range(vsize):
            p = prob * float(rows[pos, t])
            if p <= 0.0:
                continue
            nxt: set[int] = set()
            for q in states:
                nxt |= ta.combined_transition(q, t)
            if not nxt:
                continue
            rec(pos + 1, frozenset(nxt), p, prefix + (t,))

    rec(0, frozenset([start]), 1.0, ())
    return OracleResult(best=best, enumerated=total)
