"""Token-level automata lifted from character-level DFAs.

A token automaton shares its state set with the underlying character DFA but
its edges are whole vocabulary tokens: the edge (q, t) -> q' exists iff
running the character DFA over t's characters from q ends in the non-dead
state q'.  The mask token has a set-valued transition: from q it can reach
any state that some real token reaches, which is what lets partially masked
blocks be scored without enumerating substitutions.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InvalidTokenError,
    VersionMismatchError,
    VocabularyMismatchError,
)
from .regex_automaton import CharDfa, LiveSet

_MAGIC = b"DGTA"
_VERSION = 1


@dataclass(frozen=True)
class TokenVocabulary:
    """Ordered token strings with a reserved mask id.

    Token ids are dense (0..size-1).  The mask token occupies a regular id
    but is never a real edge label; `special_ids` (padding and similar) are
    excluded from decoding entirely.
    """

    tokens: tuple[str, ...]
    mask_id: int
    special_ids: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("vocabulary is empty")
        if any(t == "" for t in self.tokens):
            raise ValueError("token strings must be non-empty")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("token strings must be unique")
        if not 0 <= self.mask_id < len(self.tokens):
            raise ValueError(f"mask id {self.mask_id} out of range")
        if self.mask_id in self.special_ids:
            raise ValueError("mask token cannot also be special")
        for s in self.special_ids:
            if not 0 <= s < len(self.tokens):
                raise ValueError(f"special id {s} out of range")

    @classmethod
    def build(
        cls, tokens: list[str] | tuple[str, ...], mask: str, special: tuple[str, ...] = ()
    ) -> "TokenVocabulary":
        """Vocabulary from plain token strings; appends the mask if absent."""
        toks = list(tokens)
        if mask not in toks:
            toks.append(mask)
        special_ids = frozenset(toks.index(s) for s in special)
        return cls(tokens=tuple(toks), mask_id=toks.index(mask), special_ids=special_ids)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def mask_token(self) -> str:
        return self.tokens[self.mask_id]

    def real_ids(self) -> np.ndarray:
        """Ids eligible as real edges: everything but mask and specials."""
        skip = {self.mask_id, *self.special_ids}
        return np.array([i for i in range(self.size) if i not in skip], dtype=np.int32)

    def fingerprint(self) -> bytes:
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<II", self.size, self.mask_id))
        for i in sorted(self.special_ids):
            h.update(struct.pack("<I", i))
        for t in self.tokens:
            raw = t.encode("utf-8")
            h.update(struct.pack("<I", len(raw)))
            h.update(raw)
        return h.digest()

    def to_json_dict(self) -> dict:
        out: dict = {"tokens": list(self.tokens), "mask": self.mask_token}
        if self.special_ids:
            out["special"] = sorted(self.special_ids)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "TokenVocabulary":
        tokens = data["tokens"]
        mask = data["mask"]
        if tokens.count(mask) != 1:
            raise ValueError("mask string must occur exactly once in tokens")
        special = frozenset(int(i) for i in data.get("special", []))
        return cls(tokens=tuple(tokens), mask_id=tokens.index(mask), special_ids=special)

    @classmethod
    def load(cls, path: str | Path) -> "TokenVocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, ensure_ascii=False)


@dataclass(frozen=True, eq=False)
class TokenAutomaton:
    """Token-level transitions, mask closure and live set over a vocabulary.

    `delta_t` is stored as CSR over source states: row q holds the token ids
    (ascending) with a defined, non-dead target.  `delta_mask` adjacency is
    the per-state set of states reachable by any single real token.
    """

    n_states: int
    start: int
    dead: int
    accepting: np.ndarray  # bool [n_states]
    live: np.ndarray  # bool [n_states], token-level
    src_offsets: np.ndarray  # int64 [n_states + 1]
    edge_tokens: np.ndarray  # int32 [E]
    edge_dsts: np.ndarray  # int32 [E]
    mask_offsets: np.ndarray  # int64 [n_states + 1]
    mask_dsts: np.ndarray  # int32 [M]
    vocab_hash: bytes
    vocab_size: int
    mask_id: int
    _plan_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return int(self.edge_tokens.shape[0])

    def row_tokens(self, q: int) -> np.ndarray:
        return self.edge_tokens[self.src_offsets[q] : self.src_offsets[q + 1]]

    def row_dsts(self, q: int) -> np.ndarray:
        return self.edge_dsts[self.src_offsets[q] : self.src_offsets[q + 1]]

    def delta_t(self, q: int, t: int) -> int | None:
        """Target of the token edge, or None when it would die."""
        row = self.row_tokens(q)
        j = int(np.searchsorted(row, t))
        if j < row.shape[0] and row[j] == t:
            return int(self.row_dsts(q)[j])
        return None

    def mask_closure(self, q: int) -> set[int]:
        """States reachable from q by one arbitrary real token."""
        return set(self.mask_dsts[self.mask_offsets[q] : self.mask_offsets[q + 1]].tolist())

    def combined_transition(self, q: int, t: int) -> set[int]:
        """Single-token successor set; the mask token fans out to its closure."""
        if not 0 <= t < self.vocab_size:
            raise InvalidTokenError(f"token id {t} out of range for |V|={self.vocab_size}")
        if t == self.mask_id:
            return self.mask_closure(q)
        dst = self.delta_t(q, t)
        return set() if dst is None else {dst}

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        def bitset(flags: np.ndarray) -> bytes:
            return np.packbits(flags.astype(np.uint8), bitorder="little").tobytes()

        head = struct.pack(
            "<4sI8sIIIIIQQ",
            _MAGIC,
            _VERSION,
            self.vocab_hash,
            self.n_states,
            self.start,
            self.dead,
            self.mask_id,
            self.vocab_size,
            self.n_edges,
            int(self.mask_dsts.shape[0]),
        )
        parts = [
            head,
            bitset(self.accepting),
            bitset(self.live),
            self.src_offsets.astype("<u8").tobytes(),
            self.edge_tokens.astype("<u4").tobytes(),
            self.edge_dsts.astype("<u4").tobytes(),
            self.mask_offsets.astype("<u8").tobytes(),
            self.mask_dsts.astype("<u4").tobytes(),
        ]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, vocab: TokenVocabulary) -> "TokenAutomaton":
        head_size = struct.calcsize("<4sI8sIIIIIQQ")
        if len(data) < head_size:
            raise FormatError("automaton payload truncated before header end")
        magic, version, vhash, n_states, start, dead, mask_id, vocab_size, n_edges, n_mask = (
            struct.unpack_from("<4sI8sIIIIIQQ", data, 0)
        )
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise VersionMismatchError(f"format version {version}, expected {_VERSION}")
        if vhash != vocab.fingerprint():
            raise VocabularyMismatchError(
                "automaton was built against a different vocabulary"
            )
        if vocab_size != vocab.size or mask_id != vocab.mask_id:
            raise VocabularyMismatchError("vocabulary shape does not match header")

        nbit = (n_states + 7) // 8
        sizes = [
            nbit,
            nbit,
            (n_states + 1) * 8,
            n_edges * 4,
            n_edges * 4,
            (n_states + 1) * 8,
            n_mask * 4,
        ]
        if len(data) != head_size + sum(sizes):
            raise FormatError("automaton payload has wrong length")

        pos = head_size

        def take(n: int) -> bytes:
            nonlocal pos
            chunk = data[pos : pos + n]
            pos += n
            return chunk

        def unbitset(raw: bytes) -> np.ndarray:
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
            return bits[:n_states].astype(bool)

        accepting = unbitset(take(nbit))
        live = unbitset(take(nbit))
        src_offsets = np.frombuffer(take(sizes[2]), dtype="<u8").astype(np.int64)
        edge_tokens = np.frombuffer(take(sizes[3]), dtype="<u4").astype(np.int32)
        edge_dsts = np.frombuffer(take(sizes[4]), dtype="<u4").astype(np.int32)
        mask_offsets = np.frombuffer(take(sizes[5]), dtype="<u8").astype(np.int64)
        mask_dsts = np.frombuffer(take(sizes[6]), dtype="<u4").astype(np.int32)
        if src_offsets[0] != 0 or src_offsets[-1] != n_edges or mask_offsets[-1] != n_mask:
            raise FormatError("inconsistent CSR offsets")
        return cls(
            n_states=n_states,
            start=start,
            dead=dead,
            accepting=accepting,
            live=live,
            src_offsets=src_offsets,
            edge_tokens=edge_tokens,
            edge_dsts=edge_dsts,
            mask_offsets=mask_offsets,
            mask_dsts=mask_dsts,
            vocab_hash=vhash,
            vocab_size=vocab_size,
            mask_id=mask_id,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path, vocab: TokenVocabulary) -> "TokenAutomaton":
        return cls.from_bytes(Path(path).read_bytes(), vocab)


def serialize(ta: TokenAutomaton) -> bytes:
    return ta.to_bytes()


def deserialize(data: bytes, vocab: TokenVocabulary) -> TokenAutomaton:
    return TokenAutomaton.from_bytes(data, vocab)


def mask_closure(ta: TokenAutomaton, q: int) -> set[int]:
    return ta.mask_closure(q)


def combined_transition(ta: TokenAutomaton, q: int, t: int) -> set[int]:
    return ta.combined_transition(q, t)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _walk_tokens(
    trans: np.ndarray,
    dead: int,
    cls_flat: np.ndarray,
    offsets: np.ndarray,
    lengths: np.ndarray,
    q: int,
) -> np.ndarray:
    """Final state per token after running the char DFA from q (vectorized)."""
    n = lengths.shape[0]
    cur = np.full(n, q, dtype=np.int32)
    alive = np.arange(n)
    step = 0
    while alive.size:
        has_char = lengths[alive] > step
        alive = alive[has_char]
        if not alive.size:
            break
        cls = cls_flat[offsets[alive] + step]
        cur[alive] = trans[cur[alive], cls]
        alive = alive[cur[alive] != dead]
        step += 1
    return cur


def build_token_dfa(
    dfa: CharDfa,
    live: LiveSet,
    vocab: TokenVocabulary,
    workers: int = 0,
) -> TokenAutomaton:
    """Lift the character DFA to the vocabulary.

    Runs every real token's characters through the DFA from every state,
    keeping only edges that end outside the dead sink, then derives the mask
    closure and recomputes liveness over token edges (a character-level live
    state can be token-level dead when no token realizes the continuation).

    `workers` > 1 splits the per-state walks across a thread pool; the merge
    is by state order, so results are identical to the serial build.
    """
    del live  # character-level liveness is not reused; see module docstring
    real_ids = vocab.real_ids()
    real_tokens = [vocab.tokens[i] for i in real_ids.tolist()]
    joined = "".join(real_tokens)
    cps = np.frombuffer(joined.encode("utf-32-le"), dtype="<u4").astype(np.int64)
    cls_flat = dfa.classes_of_codepoints(cps).astype(np.int64)
    lengths = np.array([len(t) for t in real_tokens], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])

    n_states = dfa.n_states
    dead = dfa.dead

    def run(q: int) -> np.ndarray:
        return _walk_tokens(dfa.trans, dead, cls_flat, offsets, lengths, q)

    if workers and workers > 1 and n_states > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            final_states = list(pool.map(run, range(n_states)))
    else:
        final_states = [run(q) for q in range(n_states)]

    row_token_arrays: list[np.ndarray] = []
    row_dst_arrays: list[np.ndarray] = []
    mask_arrays: list[np.ndarray] = []
    src_offsets = np.zeros(n_states + 1, dtype=np.int64)
    mask_offsets = np.zeros(n_states + 1, dtype=np.int64)
    for q in range(n_states):
        dsts = final_states[q]
        defined = dsts != dead
        row_token_arrays.append(real_ids[defined])
        row_dst_arrays.append(dsts[defined].astype(np.int32))
        mask_arrays.append(np.unique(dsts[defined]).astype(np.int32))
        src_offsets[q + 1] = src_offsets[q] + int(defined.sum())
        mask_offsets[q + 1] = mask_offsets[q] + int(mask_arrays[-1].shape[0])

    edge_tokens = (
        np.concatenate(row_token_arrays) if row_token_arrays else np.empty(0, np.int32)
    )
    edge_dsts = np.concatenate(row_dst_arrays) if row_dst_arrays else np.empty(0, np.int32)
    mask_dsts = np.concatenate(mask_arrays) if mask_arrays else np.empty(0, np.int32)

    token_live = _token_live(n_states, mask_offsets, mask_dsts, dfa.accepting)

    return TokenAutomaton(
        n_states=n_states,
        start=dfa.start,
        dead=dead,
        accepting=dfa.accepting.copy(),
        live=token_live,
        src_offsets=src_offsets,
        edge_tokens=edge_tokens.astype(np.int32),
        edge_dsts=edge_dsts,
        mask_offsets=mask_offsets,
        mask_dsts=mask_dsts,
        vocab_hash=vocab.fingerprint(),
        vocab_size=vocab.size,
        mask_id=vocab.mask_id,
    )


def _token_live(
    n_states: int,
    mask_offsets: np.ndarray,
    mask_dsts: np.ndarray,
    accepting: np.ndarray,
) -> np.ndarray:
    """Reverse reachability of accepting states over token edges."""
    preds: list[list[int]] = [[] for _ in range(n_states)]
    for q in range(n_states):
        for v in mask_dsts[mask_offsets[q] : mask_offsets[q + 1]].tolist():
            preds[v].append(q)
    live = accepting.copy()
    stack = np.flatnonzero(accepting).tolist()
    while stack:
        v = stack.pop()
        for u in preds[v]:
            if not live[u]:
                live[u] = True
                stack.append(u)
    return live
