"""Maximum-probability constrained decoding of a probability block.

Given per-position token distributions v_1..v_d and a token automaton, the
decoder finds the length-d token sequence (mask token allowed) of maximum
product probability whose mask substitutions can still complete to a string
in the constraint language, i.e. whose replay ends in a live state.

The search runs as a Viterbi-style dynamic program over automaton states:
per position, the best single-token cost of every realized state edge is
computed first (max over parallel token edges, mask included), then the
forward recursion composes them in log domain.  Probability-zero paths are
log(-inf) and therefore never selected, which is what makes committed
(one-hot) positions binding.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DimensionMismatchError, FormatError, VersionMismatchError
from .token_automaton import TokenAutomaton

_PB_MAGIC = b"DGPB"
_PB_VERSION = 1

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# Probability blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbabilityBlock:
    """d probability rows over the vocabulary, one per block position.

    A masked position is a one-hot row on the mask token; a committed
    position is a one-hot row on its token.  Rows are validated as
    finite and non-negative on construction; `validate_distributions`
    additionally enforces the sum-to-one contract for file inputs.
    """

    rows: np.ndarray  # float64 [d, vocab_size]

    @property
    def d(self) -> int:
        return int(self.rows.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.rows.shape[1])

    @classmethod
    def from_rows(cls, rows: np.ndarray | list) -> "ProbabilityBlock":
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"rows must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("probability rows must be finite")
        if (arr < 0).any():
            raise ValueError("probability rows must be non-negative")
        return cls(rows=arr)

    def validate_distributions(self, tol: float = 1e-4) -> None:
        if (self.rows > 1 + tol).any():
            raise ValueError("probability entries must lie in [0, 1]")
        sums = self.rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            raise ValueError(
                f"row {int(bad[0])} sums to {sums[bad[0]]:.6f}, outside 1 +/- {tol}"
            )

    def is_masked(self, i: int, mask_id: int) -> bool:
        return bool(self.rows[i, mask_id] == 1.0)

    def to_json_dict(self) -> dict:
        return {"d": self.d, "vocab_size": self.vocab_size, "rows": self.rows.tolist()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "ProbabilityBlock":
        block = cls.from_rows(np.asarray(data["rows"], dtype=np.float64))
        if block.d != int(data["d"]) or block.vocab_size != int(data["vocab_size"]):
            raise DimensionMismatchError("rows do not match declared d / vocab_size")
        return block

    def to_bytes(self) -> bytes:
        head = struct.pack("<4sIII", _PB_MAGIC, _PB_VERSION, self.d, self.vocab_size)
        return head + self.rows.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProbabilityBlock":
        head_size = struct.calcsize("<4sIII")
        if len(data) < head_size:
            raise FormatError("probability block truncated before header end")
        magic, version, d, vocab_size = struct.unpack_from("<4sIII", data, 0)
        if magic != _PB_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != _PB_VERSION:
            raise VersionMismatchError(f"format version {version}, expected {_PB_VERSION}")
        expect = head_size + 4 * d * vocab_size
        if len(data) != expect:
            raise FormatError("probability block has wrong length")
        rows = np.frombuffer(data[head_size:], dtype="<f4").reshape(d, vocab_size)
        return cls.from_rows(rows.astype(np.float64))

    @classmethod
    def load(cls, path: str | Path) -> "ProbabilityBlock":
        p = Path(path)
        raw = p.read_bytes()
        if raw[:4] == _PB_MAGIC:
            return cls.from_bytes(raw)
        return cls.from_json_dict(json.loads(raw.decode("utf-8")))


# ---------------------------------------------------------------------------
# Decode plan: grouped edges shared by every decode over one automaton
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _DecodePlan:
    """Edge/group indexing that turns per-position cost tables into a few
    vectorized gathers.

    Real tokens with identical transition signatures (same target from every
    source state) are grouped; a position's best token per state edge is then
    the max over that edge's candidate groups of the group's best token
    probability, with the mask token competing on every realized edge.
    """

    n_states: int
    # realized state edges, sorted by (dst, src)
    edge_src: np.ndarray  # int32 [E]
    edge_dst: np.ndarray  # int32 [E]
    # contiguous runs of equal dst within the edge arrays
    seg_starts: np.ndarray  # int64 [S]
    seg_dst: np.ndarray  # int32 [S]
    # token ids sorted by (group, token id)
    group_token_ids: np.ndarray  # int32 [n_real]
    group_offsets: np.ndarray  # int64 [G + 1]
    # candidate groups per edge
    cand_group: np.ndarray  # int32 [C]
    cand_offsets: np.ndarray  # int64 [E + 1]
    edge_min_real_token: np.ndarray  # int32 [E]
    edge_index: dict  # (src, dst) -> edge position

    @property
    def n_edges(self) -> int:
        return int(self.edge_src.shape[0])


_plan_lock = threading.Lock()


def _decode_plan(ta: TokenAutomaton) -> _DecodePlan:
    plan = ta._plan_cache.get("plan")
    if plan is not None:
        return plan
    with _plan_lock:
        plan = ta._plan_cache.get("plan")
        if plan is None:
            plan = _build_plan(ta)
            ta._plan_cache["plan"] = plan
    return plan


def _build_plan(ta: TokenAutomaton) -> _DecodePlan:
    n = ta.n_states
    src_per_edge = np.repeat(np.arange(n, dtype=np.int32), np.diff(ta.src_offsets))
    toks = ta.edge_tokens
    dsts = ta.edge_dsts

    # Group real tokens by full transition signature.  Tokens absent from
    # every row form one implicit "no edges" group that contributes nothing.
    order = np.lexsort((src_per_edge, toks))
    t_sorted = toks[order]
    s_sorted = src_per_edge[order]
    d_sorted = dsts[order]
    if t_sorted.size:
        tok_starts = np.flatnonzero(np.concatenate([[True], t_sorted[1:] != t_sorted[:-1]]))
    else:
        tok_starts = np.empty(0, dtype=np.int64)
    tok_bounds = np.concatenate([tok_starts, [t_sorted.shape[0]]])

    sig_index: dict[bytes, int] = {}
    group_members: list[list[int]] = []
    group_sig_slices: list[tuple[int, int]] = []
    for j in range(tok_starts.shape[0]):
        lo, hi = int(tok_bounds[j]), int(tok_bounds[j + 1])
        key = s_sorted[lo:hi].tobytes() + d_sorted[lo:hi].tobytes()
        gid = sig_index.get(key)
        if gid is None:
            gid = len(group_members)
            sig_index[key] = gid
            group_members.append([])
            group_sig_slices.append((lo, hi))
        group_members[gid].append(int(t_sorted[lo]))

    group_token_ids_list: list[int] = []
    group_offsets = np.zeros(len(group_members) + 1, dtype=np.int64)
    for g, members in enumerate(group_members):
        group_token_ids_list.extend(members)  # already ascending per group
        group_offsets[g + 1] = group_offsets[g] + len(members)
    group_token_ids = np.array(group_token_ids_list, dtype=np.int32)

    # Realized edges and per-edge candidate groups, from group signatures.
    tri_src: list[np.ndarray] = []
    tri_dst: list[np.ndarray] = []
    tri_gid: list[np.ndarray] = []
    for g, (lo, hi) in enumerate(group_sig_slices):
        tri_src.append(s_sorted[lo:hi])
        tri_dst.append(d_sorted[lo:hi])
        tri_gid.append(np.full(hi - lo, g, dtype=np.int32))
    if tri_src:
        all_src = np.concatenate(tri_src)
        all_dst = np.concatenate(tri_dst)
        all_gid = np.concatenate(tri_gid)
    else:
        all_src = np.empty(0, np.int32)
        all_dst = np.empty(0, np.int32)
        all_gid = np.empty(0, np.int32)

    tri_order = np.lexsort((all_gid, all_src, all_dst))
    all_src = all_src[tri_order]
    all_dst = all_dst[tri_order]
    all_gid = all_gid[tri_order]

    if all_src.size:
        new_edge = np.concatenate(
            [[True], (all_dst[1:] != all_dst[:-1]) | (all_src[1:] != all_src[:-1])]
        )
    else:
        new_edge = np.empty(0, bool)
    edge_first = np.flatnonzero(new_edge)
    edge_src = all_src[edge_first]
    edge_dst = all_dst[edge_first]
    cand_offsets = np.concatenate([edge_first, [all_src.shape[0]]]).astype(np.int64)
    cand_group = all_gid

    # Smallest real token realizing each edge (used as the recorded mask
    # substitution): minimum over candidate groups of the group's first token.
    group_min_token = (
        group_token_ids[group_offsets[:-1]] if len(group_members) else np.empty(0, np.int32)
    )
    edge_min_real_token = np.empty(edge_src.shape[0], dtype=np.int32)
    for e in range(edge_src.shape[0]):
        gids = cand_group[cand_offsets[e] : cand_offsets[e + 1]]
        edge_min_real_token[e] = group_min_token[gids].min()

    if edge_dst.size:
        seg_starts = np.flatnonzero(
            np.concatenate([[True], edge_dst[1:] != edge_dst[:-1]])
        ).astype(np.int64)
        seg_dst = edge_dst[seg_starts]
    else:
        seg_starts = np.empty(0, np.int64)
        seg_dst = np.empty(0, np.int32)

    edge_index = {
        (int(s), int(t)): e for e, (s, t) in enumerate(zip(edge_src.tolist(), edge_dst.tolist()))
    }

    return _DecodePlan(
        n_states=n,
        edge_src=edge_src.astype(np.int32),
        edge_dst=edge_dst.astype(np.int32),
        seg_starts=seg_starts,
        seg_dst=seg_dst.astype(np.int32),
        group_token_ids=group_token_ids,
        group_offsets=group_offsets,
        cand_group=cand_group.astype(np.int32),
        cand_offsets=cand_offsets,
        edge_min_real_token=edge_min_real_token,
        edge_index=edge_index,
    )


# ---------------------------------------------------------------------------
# Cost tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostTables:
    """Per-position best single-token cost of every realized state edge.

    `cost[i, e]` is the maximum probability of any token (mask included)
    driving edge e at position i; edges missing from the plan have cost 0 by
    construction.  `tran(i, src, dst)` resolves the argmax token lazily, with
    ties broken toward the smallest token id.
    """

    ta: TokenAutomaton
    plan: _DecodePlan
    block: ProbabilityBlock
    cost: np.ndarray  # float64 [d, E]

    @property
    def d(self) -> int:
        return self.block.d

    def cost_of(self, i: int, src: int, dst: int) -> float:
        e = self.plan.edge_index.get((src, dst))
        return 0.0 if e is None else float(self.cost[i, e])

    def tran(self, i: int, src: int, dst: int) -> int | None:
        e = self.plan.edge_index.get((src, dst))
        if e is None:
            return None
        return self._argmax_token(i, e)

    def _argmax_token(self, i: int, e: int) -> int:
        """Smallest token id achieving cost[i, e] on edge e."""
        plan = self.plan
        row = self.block.rows[i]
        target = self.cost[i, e]
        best: int | None = None
        if row[self.ta.mask_id] == target:
            best = self.ta.mask_id
        for g in plan.cand_group[plan.cand_offsets[e] : plan.cand_offsets[e + 1]].tolist():
            toks = plan.group_token_ids[plan.group_offsets[g] : plan.group_offsets[g + 1]]
            hits = toks[row[toks] == target]
            if hits.size:
                t = int(hits[0])  # token ids ascending within a group
                if best is None or t < best:
                    best = t
        return best if best is not None else int(plan.edge_min_real_token[e])

    def realizer(self, e: int) -> int:
        """A real (non-mask) token realizing edge e."""
        return int(self.plan.edge_min_real_token[e])


def build_cost_tables(ta: TokenAutomaton, block: ProbabilityBlock) -> CostTables:
    """Max-over-tokens edge costs for every position of the block."""
    if block.vocab_size != ta.vocab_size:
        raise DimensionMismatchError(
            f"block rows have {block.vocab_size} entries, vocabulary has {ta.vocab_size}"
        )
    plan = _decode_plan(ta)
    d = block.d
    cost = np.zeros((d, plan.n_edges), dtype=np.float64)
    rows = block.rows
    if plan.n_edges:
        n_groups = plan.group_offsets.shape[0] - 1
        for i in range(d):
            if n_groups:
                gmax = np.maximum.reduceat(rows[i, plan.group_token_ids], plan.group_offsets[:-1])
                edge_cost = np.maximum.reduceat(gmax[plan.cand_group], plan.cand_offsets[:-1])
            else:
                edge_cost = np.zeros(plan.n_edges)
            cost[i] = np.maximum(edge_cost, rows[i, ta.mask_id])
    return CostTables(ta=ta, plan=plan, block=block, cost=cost)


# ---------------------------------------------------------------------------
# Forward DP and path reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DpTable:
    """Best log-probabilities per (position, state) with parent pointers.

    `a[i, q]` is the log of the maximum probability of reaching q with i
    tokens; unreachable entries are -inf.  `parent_edge[i - 1, q]` is the
    plan edge taken into (i, q), or -1; `parent(i, q)` resolves it to the
    (previous state, token) pair.
    """

    tables: CostTables
    start_state: int
    a: np.ndarray  # float64 [d + 1, n_states]
    parent_edge: np.ndarray  # int64 [d, n_states]

    def parent(self, i: int, q: int) -> tuple[int, int] | None:
        """Previous state and argmax token of the step into (i, q); i >= 1."""
        if i < 1:
            raise ValueError("position 0 has no parent")
        e = int(self.parent_edge[i - 1, q])
        if e < 0:
            return None
        src = int(self.tables.plan.edge_src[e])
        token = self.tables._argmax_token(i - 1, e)
        return src, token


def dp_forward(tables: CostTables, start_state: int) -> DpTable:
    """Viterbi recursion in log domain over the cost tables."""
    plan = tables.plan
    n = plan.n_states
    d = tables.d
    if not 0 <= start_state < n:
        raise ValueError(f"start state {start_state} out of range")

    a = np.full((d + 1, n), NEG_INF, dtype=np.float64)
    a[0, start_state] = 0.0
    parent_edge = np.full((d, n), -1, dtype=np.int64)

    if plan.n_edges == 0:
        return DpTable(tables=tables, start_state=start_state, a=a, parent_edge=parent_edge)

    with np.errstate(divide="ignore"):
        logcost = np.log(tables.cost)

    edge_ids = np.arange(plan.n_edges, dtype=np.int64)
    for i in range(d):
        cand = a[i, plan.edge_src] + logcost[i]
        seg_max = np.maximum.reduceat(cand, plan.seg_starts)
        reachable = seg_max > NEG_INF
        if not reachable.any():
            continue
        # First edge in each segment attaining the max; edges are sorted by
        # (dst, src) so this breaks ties toward the smaller previous state.
        spread = np.repeat(seg_max, np.diff(np.concatenate([plan.seg_starts, [plan.n_edges]])))
        hit = np.where(cand == spread, edge_ids, plan.n_edges)
        seg_arg = np.minimum.reduceat(hit, plan.seg_starts)
        dst = plan.seg_dst[reachable]
        a[i + 1, dst] = seg_max[reachable]
        parent_edge[i, dst] = seg_arg[reachable]
    return DpTable(tables=tables, start_state=start_state, a=a, parent_edge=parent_edge)


@dataclass(frozen=True)
class Optimal:
    """Maximum-probability valid decode of a block.

    `tokens` may contain the mask id; `realizers` records, per masked
    position, a real token realizing the same state edge (None elsewhere).
    """

    tokens: tuple[int, ...]
    end_state: int
    log_prob: float
    realizers: tuple[int | None, ...]

    @property
    def is_optimal(self) -> bool:
        return True

    def substituted_tokens(self) -> tuple[int, ...]:
        """Fully unmasked sequence with each mask replaced by its realizer."""
        return tuple(
            r if r is not None else t for t, r in zip(self.tokens, self.realizers)
        )


@dataclass(frozen=True)
class NoValidPrefix:
    """No positive-probability sequence can end in a live state."""

    witness_state: int | None

    @property
    def is_optimal(self) -> bool:
        return False


DecodeOutcome = Union[Optimal, NoValidPrefix]


def reconstruct_path(table: DpTable, live: np.ndarray, d: int) -> DecodeOutcome:
    """Argmax over live end states, then a backward walk over parents."""
    a_final = table.a[d]
    masked = np.where(live, a_final, NEG_INF)
    if not live.any():
        return NoValidPrefix(witness_state=None)
    q_max = int(np.argmax(masked))  # ties resolve to the smaller state id
    if masked[q_max] == NEG_INF:
        return NoValidPrefix(witness_state=q_max)

    tables = table.tables
    plan = tables.plan
    mask_id = tables.ta.mask_id
    tokens: list[int] = []
    realizers: list[int | None] = []
    q = q_max
    for i in range(d, 0, -1):
        e = int(table.parent_edge[i - 1, q])
        token = tables._argmax_token(i - 1, e)
        tokens.append(token)
        realizers.append(tables.realizer(e) if token == mask_id else None)
        q = int(plan.edge_src[e])
    tokens.reverse()
    realizers.reverse()
    return Optimal(
        tokens=tuple(tokens),
        end_state=q_max,
        log_prob=float(masked[q_max]),
        realizers=tuple(realizers),
    )


def decode_block(
    ta: TokenAutomaton,
    block: ProbabilityBlock,
    start_state: int | None = None,
) -> DecodeOutcome:
    """Full decode: cost tables, forward DP, then path reconstruction."""
    tables = build_cost_tables(ta, block)
    table = dp_forward(tables, ta.start if start_state is None else start_state)
    return reconstruct_path(table, ta.live, block.d)
