"""Bundled constraint patterns and synthetic vocabularies.

The math-reasoning pattern matches free text interleaved with ``<<...>>``
expression blocks: single-letter variables a-j, 1-3 digit integers, the
arithmetic operators ``+ - * ** / //``, optional single spaces around
operators, and parentheses nested up to three deep.  At least one expression
block must appear.  Note that its nested quantifiers make Python's
backtracking `re` engine unusable on it; match with the compiled DFA.

The JSON pattern constrains output to one concrete schema: a flat object
with campaign/product ids, ISO dates, and an optional discount field.

Synthetic vocabularies stand in for real tokenizer vocabularies (which are
not redistributable here): deterministic, BPE-shaped token strings mixing
word pieces, digits, punctuation, and a few multibyte characters.
"""

from __future__ import annotations

import numpy as np

from .token_automaton import TokenVocabulary

_TEXT = r"(?:(?:[ -;=?-~\n]+))*"
_WS = r"(?:(?:\ ))?"
_VAR = r"(?:[a-j])"
_NUM = r"(?:[0-9]{1,3})"
_OPS = r"\+|\-|//|/|\*\*|\*"


def _expr(depth: int) -> str:
    alt = f"{_VAR}|{_NUM}" if depth == 0 else f"{_VAR}|{_NUM}|\\({_expr(depth - 1)}\\)"
    item = f"(?:{_WS}(?:(?:{_OPS})){_WS}(?:(?:{alt})))"
    return f"(?:(?:(?:{alt}))(?:{item})*)"


def gsm_symbolic_pattern(depth: int = 3) -> str:
    """Math-reasoning constraint: text with >= 1 ``<<expression>>`` blocks."""
    block = f"(?:<<{_WS}(?:{_expr(depth)}){_WS}>>)"
    return f"(?:(?:(?:{_TEXT}{block})+{_TEXT}))"


def json_campaign_pattern() -> str:
    """Schema-shaped JSON object with id, date, and optional detail fields."""
    string = r'"([^"\\\x00-\x1F\x7F-\x9F]|\\["\\])*"'
    date = r'"(?:\d{4})-(?:0[1-9]|1[0-2])-(?:0[1-9]|[1-2][0-9]|3[0-1])"'
    sp = r"[ ]?"
    return (
        r"\{" + sp
        + f'"campaignID"{sp}:{sp}{string}{sp},{sp}'
        + f'"productID"{sp}:{sp}{string}{sp},{sp}'
        + f'"startDate"{sp}:{sp}{date}{sp},{sp}'
        + f'"endDate"{sp}:{sp}{date}'
        + f'({sp},{sp}"discountDetails"{sp}:{sp}{string})?'
        + sp + r"\}"
    )


SMALL_PATTERNS = {
    "star_b": "a*b",
    "pair_or": "(aa)|(bc)",
    "letters": "[abc]*",
    "repeat": "(ab)+c",
    "number": r"[0-9]{1,3}(\.[0-9]{1,2})?",
    "ident_list": r"[a-z]+(,[a-z]+)*",
}

_WORD_PIECES = (
    "the a an of to in is on for and or as at it this that with from was were "
    "be by not are but had has have will would can could one two three time "
    "people way day man new old see him your work life down back little only "
    "round year came show every good me give our under name very through just "
    "form sentence great think say help low line differ turn cause much mean "
    "before move right boy old too same tell does set want air well also play "
    "small end put home read hand port large spell add even land here must big "
    "high such follow act why ask men change went light kind off need house"
).split()

_SUFFIX_PIECES = "ing ed er s ly tion ment ness able est ize ous ful ish al ity".split()

_PUNCT = list(" .,:;!?'\"()[]{}<>«»+-*/=%$#@&_^~|\\\n\t")

_UNICODE_EXTRA = list("éèüöäñçабвгдежзиклмнопрстуфхцч日本語中文한국어αβγδεζηθικλμνξ")


def synthetic_vocabulary(
    size: int, seed: int = 0, mask: str = "<|mask|>"
) -> TokenVocabulary:
    """Deterministic tokenizer-like vocabulary of `size` strings (mask included).

    Mix per draw: space-prefixed or bare word pieces, suffix fragments,
    digit runs, single punctuation, short random letter chunks, and some
    multibyte characters.  Collisions are dropped, so the pool is padded
    with indexed filler ids at the tail if the stream runs short.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, size)))
    target = size - 1  # one slot reserved for the mask token
    seen: set[str] = set()
    out: list[str] = []

    def add(tok: str) -> None:
        if tok and tok != mask and tok not in seen:
            seen.add(tok)
            out.append(tok)

    # Guaranteed coverage of decoding-relevant short tokens.
    for ch in "abcdefghij0123456789 ()+-*/<>=.,":
        add(ch)
    for two in ("<<", ">>", "//", "**", "((", "))", ", ", ". "):
        add(two)
    for i in range(100):
        add(str(i))

    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    while len(out) < target:
        batch = min(65536, (target - len(out)) * 2 + 64)
        kinds = rng.choice(6, size=batch, p=[0.35, 0.15, 0.12, 0.1, 0.23, 0.05])
        words = rng.choice(len(_WORD_PIECES), size=batch)
        suffixes = rng.choice(len(_SUFFIX_PIECES), size=batch)
        puncts = rng.choice(len(_PUNCT), size=batch)
        unis = rng.choice(len(_UNICODE_EXTRA), size=batch)
        digit_lens = rng.integers(1, 5, size=batch)
        chunk_lens = rng.integers(2, 9, size=batch)
        digit_chars = rng.integers(0, 10, size=(batch, 4))
        chunk_chars = rng.integers(0, 26, size=(batch, 8))
        salt = rng.integers(0, 1000, size=batch)
        for j in range(batch):
            kind = kinds[j]
            if kind == 0:
                tok = " " + _WORD_PIECES[words[j]]
            elif kind == 1:
                tok = _WORD_PIECES[words[j]] + _SUFFIX_PIECES[suffixes[j]]
            elif kind == 2:
                tok = "".join(str(c) for c in digit_chars[j, : digit_lens[j]])
            elif kind == 3:
                tok = _PUNCT[puncts[j]] + (_WORD_PIECES[words[j]] if salt[j] % 3 == 0 else "")
            elif kind == 4:
                tok = "".join(letters[chunk_chars[j, : chunk_lens[j]]])
            else:
                tok = _UNICODE_EXTRA[unis[j]] + (str(salt[j] % 10) if salt[j] % 4 == 0 else "")
            add(tok)
            if len(out) >= target:
                break
        else:
            continue
        break
    # Deterministic filler if the random stream saturated on duplicates.
    i = 0
    while len(out) < target:
        add(f"<|extra_{i}|>")
        i += 1

    return TokenVocabulary.build(out, mask)
