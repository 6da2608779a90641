"""Regular expressions compiled to minimized character-level DFAs.

The supported dialect covers what structured-output constraints need:
literals, escapes (including ``\\xHH``/``\\uHHHH`` and the ``\\d``/``\\w``/``\\s``
shorthands), character classes with ranges and negation, alternation,
grouping (capturing groups are treated as plain groups), and the ``*`` ``+``
``?`` ``{m}`` ``{m,}`` ``{m,n}`` quantifiers.  Matching is full-match: a string
belongs to the language iff the whole string matches the pattern.
Backreferences, lookaround and explicit anchors are rejected.

The alphabet of a compiled DFA is a partition of the Unicode scalar values
into contiguous intervals ("character classes"), derived from the range
endpoints mentioned by the pattern.  Every state has a transition for every
class; moves that cannot lead anywhere go to a single designated dead sink,
so the transition table is total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import RegexSyntaxError, UnsupportedFeatureError

MAX_SCALAR = 0x10FFFF
_END = MAX_SCALAR + 1  # exclusive upper bound used for interval arithmetic

# ---------------------------------------------------------------------------
# Pattern AST
# ---------------------------------------------------------------------------

Ranges = tuple[tuple[int, int], ...]  # disjoint, sorted, inclusive codepoints


@dataclass(frozen=True)
class _CharSet:
    ranges: Ranges


@dataclass(frozen=True)
class _Concat:
    parts: tuple["_Node", ...]


@dataclass(frozen=True)
class _Alt:
    parts: tuple["_Node", ...]


@dataclass(frozen=True)
class _Repeat:
    node: "_Node"
    lo: int
    hi: int | None  # None means unbounded


@dataclass(frozen=True)
class _Empty:
    pass


_Node = Union[_CharSet, _Concat, _Alt, _Repeat, _Empty]


def _normalize(ranges: list[tuple[int, int]]) -> Ranges:
    """Sort, clip and merge overlapping/adjacent inclusive ranges."""
    clipped = [(max(lo, 0), min(hi, MAX_SCALAR)) for lo, hi in ranges if lo <= hi]
    clipped.sort()
    merged: list[tuple[int, int]] = []
    for lo, hi in clipped:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def _negate(ranges: Ranges) -> Ranges:
    out: list[tuple[int, int]] = []
    prev = 0
    for lo, hi in ranges:
        if lo > prev:
            out.append((prev, lo - 1))
        prev = hi + 1
    if prev <= MAX_SCALAR:
        out.append((prev, MAX_SCALAR))
    return tuple(out)


_DIGIT: Ranges = ((0x30, 0x39),)
_WORD: Ranges = _normalize([(0x30, 0x39), (0x41, 0x5A), (0x5F, 0x5F), (0x61, 0x7A)])
_SPACE: Ranges = _normalize([(0x09, 0x0D), (0x20, 0x20)])
_ANY: Ranges = ((0, MAX_SCALAR),)

_SIMPLE_ESCAPES = {
    "n": 0x0A,
    "t": 0x09,
    "r": 0x0D,
    "f": 0x0C,
    "v": 0x0B,
    "a": 0x07,
    "0": 0x00,
}


class _Parser:
    """Recursive-descent parser producing the pattern AST.

    Grammar:
        alt    -> concat ('|' concat)*
        concat -> factor*
        factor -> atom quantifier?
        atom   -> group | class | '.' | escape | literal
    """

    def __init__(self, pattern: str) -> None:
        self.pattern = pattern
        self.pos = 0

    def error(self, msg: str) -> RegexSyntaxError:
        return RegexSyntaxError(f"{msg} at position {self.pos} in {self.pattern!r}")

    def peek(self) -> str | None:
        return self.pattern[self.pos] if self.pos < len(self.pattern) else None

    def advance(self) -> str:
        if self.pos >= len(self.pattern):
            raise self.error("unexpected end of pattern")
        ch = self.pattern[self.pos]
        self.pos += 1
        return ch

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self) -> _Node:
        if not self.pattern:
            return _Empty()
        node = self._parse_alt()
        if self.pos < len(self.pattern):
            raise self.error(f"unexpected {self.pattern[self.pos]!r}")
        return node

    def _parse_alt(self) -> _Node:
        parts = [self._parse_concat()]
        while self.peek() == "|":
            self.advance()
            parts.append(self._parse_concat())
        return parts[0] if len(parts) == 1 else _Alt(tuple(parts))

    def _parse_concat(self) -> _Node:
        parts: list[_Node] = []
        while self.peek() is not None and self.peek() not in ("|", ")"):
            parts.append(self._parse_factor())
        if not parts:
            return _Empty()
        return parts[0] if len(parts) == 1 else _Concat(tuple(parts))

    def _parse_factor(self) -> _Node:
        atom = self._parse_atom()
        while True:
            quant = self._parse_quantifier()
            if quant is None:
                return atom
            lo, hi = quant
            atom = _Repeat(atom, lo, hi)

    def _parse_quantifier(self) -> tuple[int, int | None] | None:
        ch = self.peek()
        if ch == "*":
            self.advance()
            out: tuple[int, int | None] = (0, None)
        elif ch == "+":
            self.advance()
            out = (1, None)
        elif ch == "?":
            self.advance()
            out = (0, 1)
        elif ch == "{":
            counted = self._try_parse_counted()
            if counted is None:
                return None  # literal '{', handled by the atom parser
            out = counted
        else:
            return None
        # Lazy quantifiers define the same language; accept and ignore the '?'.
        if self.peek() == "?":
            self.advance()
        return out

    def _try_parse_counted(self) -> tuple[int, int | None] | None:
        """Parse {m}, {m,}, {m,n}; roll back to treat '{' as a literal."""
        saved = self.pos
        self.advance()  # '{'
        lo_digits = self._take_digits()
        if not lo_digits:
            self.pos = saved
            return None
        lo = int(lo_digits)
        if self.peek() == "}":
            self.advance()
            return (lo, lo)
        if self.peek() != ",":
            self.pos = saved
            return None
        self.advance()
        hi_digits = self._take_digits()
        if self.peek() != "}":
            self.pos = saved
            return None
        self.advance()
        if not hi_digits:
            return (lo, None)
        hi = int(hi_digits)
        if hi < lo:
            raise self.error(f"bad repetition bounds {{{lo},{hi}}}")
        return (lo, hi)

    def _take_digits(self) -> str:
        digits = ""
        while (c := self.peek()) is not None and c.isdigit():
            digits += self.advance()
        return digits

    def _parse_atom(self) -> _Node:
        ch = self.peek()
        if ch is None:
            raise self.error("expected an atom")
        if ch == "(":
            return self._parse_group()
        if ch == "[":
            return _CharSet(self._parse_class())
        if ch == ".":
            self.advance()
            return _CharSet(_ANY)
        if ch == "\\":
            return _CharSet(self._parse_escape(in_class=False))
        if ch in ("^", "$"):
            raise UnsupportedFeatureError(
                "anchors are not supported: matching is always full-match"
            )
        if ch in ("*", "+", "?"):
            raise self.error(f"quantifier {ch!r} with nothing to repeat")
        self.advance()
        return _CharSet(((ord(ch), ord(ch)),))

    def _parse_group(self) -> _Node:
        self.expect("(")
        if self.peek() == "?":
            self.advance()
            mark = self.peek()
            if mark == ":":
                self.advance()
            elif mark in ("=", "!", "<"):
                raise UnsupportedFeatureError("lookaround is not supported")
            elif mark == "P":
                raise UnsupportedFeatureError("named groups are not supported")
            else:
                raise UnsupportedFeatureError(f"unsupported group (?{mark}...)")
        node = self._parse_alt()
        self.expect(")")
        return node

    def _parse_escape(self, in_class: bool) -> Ranges:
        self.expect("\\")
        ch = self.advance()
        if ch == "d":
            return _DIGIT
        if ch == "D":
            return _negate(_DIGIT)
        if ch == "w":
            return _WORD
        if ch == "W":
            return _negate(_WORD)
        if ch == "s":
            return _SPACE
        if ch == "S":
            return _negate(_SPACE)
        if ch in _SIMPLE_ESCAPES:
            cp = _SIMPLE_ESCAPES[ch]
            return ((cp, cp),)
        if ch == "x":
            cp = self._parse_hex(2)
            return ((cp, cp),)
        if ch == "u":
            cp = self._parse_hex(4)
            return ((cp, cp),)
        if ch == "U":
            cp = self._parse_hex(8)
            if cp > MAX_SCALAR:
                raise self.error(f"codepoint U+{cp:X} out of range")
            return ((cp, cp),)
        if not in_class and ch.isdigit():
            raise UnsupportedFeatureError("backreferences are not supported")
        if ch == "b" and not in_class:
            raise UnsupportedFeatureError("word-boundary assertions are not supported")
        return ((ord(ch), ord(ch)),)

    def _parse_hex(self, width: int) -> int:
        digits = ""
        for _ in range(width):
            c = self.advance()
            if c not in "0123456789abcdefABCDEF":
                raise self.error(f"bad hex digit {c!r}")
            digits += c
        return int(digits, 16)

    def _parse_class(self) -> Ranges:
        self.expect("[")
        negated = False
        if self.peek() == "^":
            self.advance()
            negated = True
        items: list[tuple[int, int]] = []
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                raise self.error("unterminated character class")
            if ch == "]" and not first:
                break
            first = False
            lo_set = self._parse_class_item()
            if (
                len(lo_set) == 1
                and lo_set[0][0] == lo_set[0][1]
                and self.peek() == "-"
                and self.pos + 1 < len(self.pattern)
                and self.pattern[self.pos + 1] != "]"
            ):
                self.advance()  # '-'
                hi_set = self._parse_class_item()
                if len(hi_set) != 1 or hi_set[0][0] != hi_set[0][1]:
                    raise self.error("character range endpoint must be a single character")
                lo, hi = lo_set[0][0], hi_set[0][0]
                if hi < lo:
                    raise self.error(f"reversed character range {chr(lo)!r}-{chr(hi)!r}")
                items.append((lo, hi))
            else:
                items.extend(lo_set)
        self.expect("]")
        ranges = _normalize(items)
        return _negate(ranges) if negated else ranges

    def _parse_class_item(self) -> Ranges:
        ch = self.peek()
        if ch == "\\":
            return self._parse_escape(in_class=True)
        self.advance()
        return ((ord(ch), ord(ch)),)


# ---------------------------------------------------------------------------
# Alphabet partition
# ---------------------------------------------------------------------------


def _collect_ranges(node: _Node, out: list[tuple[int, int]]) -> None:
    if isinstance(node, _CharSet):
        out.extend(node.ranges)
    elif isinstance(node, (_Concat, _Alt)):
        for part in node.parts:
            _collect_ranges(part, out)
    elif isinstance(node, _Repeat):
        _collect_ranges(node.node, out)


def _build_boundaries(node: _Node) -> np.ndarray:
    """Interval starts partitioning [0, MAX_SCALAR] by the pattern's endpoints."""
    ranges: list[tuple[int, int]] = []
    _collect_ranges(node, ranges)
    points = {0, _END}
    for lo, hi in ranges:
        points.add(lo)
        points.add(hi + 1)
    return np.array(sorted(points), dtype=np.int64)


def _classes_for(ranges: Ranges, boundaries: np.ndarray) -> tuple[int, ...]:
    """Class ids whose interval lies inside the given range set."""
    out: list[int] = []
    for lo, hi in ranges:
        first = int(np.searchsorted(boundaries, lo, side="right")) - 1
        last = int(np.searchsorted(boundaries, hi + 1, side="left"))
        out.extend(range(first, last))
    return tuple(sorted(set(out)))


# ---------------------------------------------------------------------------
# Thompson construction
# ---------------------------------------------------------------------------


class _Nfa:
    def __init__(self) -> None:
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[tuple[int, ...], int]]] = []

    def new_state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def add_eps(self, src: int, dst: int) -> None:
        self.eps[src].append(dst)

    def add_edge(self, src: int, classes: tuple[int, ...], dst: int) -> None:
        self.edges[src].append((classes, dst))

    def build(self, node: _Node, boundaries: np.ndarray) -> tuple[int, int]:
        """Build a fragment for `node`; returns (entry, exit) state ids."""
        if isinstance(node, _Empty):
            s = self.new_state()
            t = self.new_state()
            self.add_eps(s, t)
            return s, t
        if isinstance(node, _CharSet):
            s = self.new_state()
            t = self.new_state()
            self.add_edge(s, _classes_for(node.ranges, boundaries), t)
            return s, t
        if isinstance(node, _Concat):
            first_s, prev_t = self.build(node.parts[0], boundaries)
            for part in node.parts[1:]:
                s, t = self.build(part, boundaries)
                self.add_eps(prev_t, s)
                prev_t = t
            return first_s, prev_t
        if isinstance(node, _Alt):
            s = self.new_state()
            t = self.new_state()
            for part in node.parts:
                ps, pt = self.build(part, boundaries)
                self.add_eps(s, ps)
                self.add_eps(pt, t)
            return s, t
        if isinstance(node, _Repeat):
            return self._build_repeat(node, boundaries)
        raise TypeError(f"unknown node {node!r}")

    def _build_repeat(self, node: _Repeat, boundaries: np.ndarray) -> tuple[int, int]:
        lo, hi = node.lo, node.hi
        s = self.new_state()
        prev = s
        for _ in range(lo):
            ps, pt = self.build(node.node, boundaries)
            self.add_eps(prev, ps)
            prev = pt
        if hi is None:
            # Kleene closure of one more copy.
            ps, pt = self.build(node.node, boundaries)
            t = self.new_state()
            self.add_eps(prev, ps)
            self.add_eps(prev, t)
            self.add_eps(pt, ps)
            self.add_eps(pt, t)
            return s, t
        # (hi - lo) optional copies, each skippable to the end.
        t = self.new_state()
        for _ in range(hi - lo):
            ps, pt = self.build(node.node, boundaries)
            self.add_eps(prev, ps)
            self.add_eps(prev, t)
            prev = pt
        self.add_eps(prev, t)
        return s, t


# ---------------------------------------------------------------------------
# Determinization and minimization
# ---------------------------------------------------------------------------


def _determinize(
    nfa: _Nfa, start: int, accept: int, n_classes: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Subset construction over NFA-state bitmasks.

    Returns (trans[n, k], accepting[n], start_id).  The empty subset is a
    regular state here, so the table is already total; it will be the dead
    sink after minimization.
    """
    n = len(nfa.eps)
    closure: list[int] = [0] * n
    for root in range(n):
        stack = [root]
        seen = {root}
        while stack:
            u = stack.pop()
            for v in nfa.eps[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        mask = 0
        for u in seen:
            mask |= 1 << u
        closure[root] = mask
    # Per-(state,class) targets with epsilon closure pre-applied.
    closed_targets: list[dict[int, int]] = [dict() for _ in range(n)]
    for u in range(n):
        for classes, v in nfa.edges[u]:
            cl = closure[v]
            row = closed_targets[u]
            for c in classes:
                row[c] = row.get(c, 0) | cl

    start_mask = closure[start]
    accept_bit = 1 << accept

    index: dict[int, int] = {start_mask: 0}
    queue: list[int] = [start_mask]
    rows: list[list[int]] = []
    accepting: list[bool] = []
    head = 0
    while head < len(queue):
        cur = queue[head]
        head += 1
        accepting.append(bool(cur & accept_bit))
        row = [0] * n_classes
        moves: dict[int, int] = {}
        m = cur
        while m:
            b = m & -m
            u = b.bit_length() - 1
            m ^= b
            for c, tgt in closed_targets[u].items():
                moves[c] = moves.get(c, 0) | tgt
        for c in range(n_classes):
            nxt = moves.get(c, 0)
            if nxt not in index:
                index[nxt] = len(queue)
                queue.append(nxt)
            row[c] = index[nxt]
        rows.append(row)
    trans = np.array(rows, dtype=np.int32)
    return trans, np.array(accepting, dtype=bool), 0


def _minimize(
    trans: np.ndarray, accepting: np.ndarray, start: int
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Moore partition refinement to the Nerode quotient, then a canonical
    BFS renumbering with the dead sink pinned to the last id.

    Returns (trans, accepting, start, dead).
    """
    part = accepting.astype(np.int64)
    n_parts = len(np.unique(part))
    while True:
        sig = np.concatenate([part[:, None], part[trans]], axis=1)
        _, new_part = np.unique(sig, axis=0, return_inverse=True)
        new_count = int(new_part.max()) + 1
        if new_count == n_parts:
            part = new_part
            break
        part, n_parts = new_part, new_count

    n_classes = trans.shape[1]
    rep: dict[int, int] = {}
    for state, p in enumerate(part.tolist()):
        rep.setdefault(p, state)
    q_trans = np.empty((n_parts, n_classes), dtype=np.int32)
    q_accept = np.zeros(n_parts, dtype=bool)
    for p, state in rep.items():
        q_trans[p] = part[trans[state]]
        q_accept[p] = accepting[state]
    q_start = int(part[start])

    # Locate the (unique) empty-language class, if reachable.
    live = _live_mask(q_trans, q_accept)
    dead_parts = np.flatnonzero(~live)
    dead_part = int(dead_parts[0]) if dead_parts.size else -1

    # Canonical order: BFS from the start exploring classes in ascending
    # order, with the dead sink forced to the final id.
    order: list[int] = []
    if q_start != dead_part:
        seen = {q_start}
        fifo = [q_start]
        while fifo:
            u = fifo.pop(0)
            order.append(u)
            for v in q_trans[u].tolist():
                if v != dead_part and v not in seen:
                    seen.add(v)
                    fifo.append(v)
    n_final = len(order) + 1
    dead_id = n_final - 1
    remap = np.empty(n_parts, dtype=np.int32)
    for new_id, old in enumerate(order):
        remap[old] = new_id
    if dead_part >= 0:
        remap[dead_part] = dead_id

    out_trans = np.full((n_final, n_classes), dead_id, dtype=np.int32)
    out_accept = np.zeros(n_final, dtype=bool)
    for new_id, old in enumerate(order):
        out_trans[new_id] = remap[q_trans[old]]
        out_accept[new_id] = q_accept[old]
    out_start = 0 if order else dead_id
    return out_trans, out_accept, out_start, dead_id


def _live_mask(trans: np.ndarray, accepting: np.ndarray) -> np.ndarray:
    """States from which some accepting state is reachable (reverse BFS)."""
    n = trans.shape[0]
    preds: list[set[int]] = [set() for _ in range(n)]
    for u in range(n):
        for v in trans[u].tolist():
            preds[v].add(u)
    live = accepting.copy()
    fifo = list(np.flatnonzero(accepting))
    while fifo:
        v = fifo.pop()
        for u in preds[v]:
            if not live[u]:
                live[u] = True
                fifo.append(u)
    return live


# ---------------------------------------------------------------------------
# Public types and operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CharDfa:
    """Minimized total DFA over interval character classes.

    `boundaries[j]` is the first codepoint of class j; class j covers
    [boundaries[j], boundaries[j+1]-1].  `trans` is total: every move is
    defined, with impossible moves going to the `dead` sink (always
    materialized, possibly unreachable).  The state count includes the sink.
    """

    boundaries: np.ndarray  # int64 [n_classes + 1], boundaries[-1] == 0x110000
    trans: np.ndarray  # int32 [n_states, n_classes]
    start: int
    accepting: np.ndarray  # bool [n_states]
    dead: int

    @property
    def n_states(self) -> int:
        return int(self.trans.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.trans.shape[1])

    def class_of(self, ch: str) -> int:
        return int(np.searchsorted(self.boundaries, ord(ch), side="right")) - 1

    def classes_of_codepoints(self, codepoints: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.boundaries, codepoints, side="right") - 1

    def step(self, q: int, ch: str) -> int:
        return int(self.trans[q, self.class_of(ch)])

    def accepts(self, w: str) -> bool:
        return bool(self.accepting[extended_transition(self, w, self.start)])

    def class_ranges(self) -> list[tuple[int, int]]:
        b = self.boundaries.tolist()
        return [(b[j], b[j + 1] - 1) for j in range(len(b) - 1)]

    def to_json_dict(self) -> dict:
        return {
            "states": self.n_states,
            "start": self.start,
            "accepting": np.flatnonzero(self.accepting).tolist(),
            "classes": [[lo, hi] for lo, hi in self.class_ranges()],
            "trans": self.trans.tolist(),
        }


@dataclass(frozen=True)
class LiveSet:
    """States from which some accepting state is reachable."""

    live: np.ndarray  # bool [n_states]

    def __contains__(self, q: int) -> bool:
        return bool(self.live[q])

    def ids(self) -> list[int]:
        return np.flatnonzero(self.live).tolist()


def compile_regex(pattern: str) -> CharDfa:
    """Compile a pattern into a minimized character-level DFA.

    Raises RegexSyntaxError for malformed patterns and
    UnsupportedFeatureError for constructs outside the dialect.
    """
    node = _Parser(pattern).parse()
    boundaries = _build_boundaries(node)
    n_classes = len(boundaries) - 1
    nfa = _Nfa()
    entry, exit_ = nfa.build(node, boundaries)
    trans, accepting, start = _determinize(nfa, entry, exit_, n_classes)
    out_trans, out_accept, out_start, dead = _minimize(trans, accepting, start)
    return CharDfa(
        boundaries=boundaries,
        trans=out_trans,
        start=out_start,
        accepting=out_accept,
        dead=dead,
    )


def compute_live_states(dfa: CharDfa) -> LiveSet:
    """Live set per reverse reachability from the accepting states."""
    return LiveSet(live=_live_mask(dfa.trans, dfa.accepting))


def extended_transition(dfa: CharDfa, w: str, q: int) -> int:
    """Run the DFA over `w` starting at `q`; the empty string is identity."""
    state = q
    trans = dfa.trans
    boundaries = dfa.boundaries
    for ch in w:
        cls = int(np.searchsorted(boundaries, ord(ch), side="right")) - 1
        state = int(trans[state, cls])
    return state
