"""Character-level DFA compilation, liveness, and extended transitions."""

import random
import re

import numpy as np
import pytest

from dingo.errors import RegexSyntaxError, UnsupportedFeatureError
from dingo.regex_automaton import (
    CharDfa,
    compile_regex,
    compute_live_states,
    extended_transition,
)


def brute_accepts(pattern: str, s: str) -> bool:
    return re.fullmatch(pattern, s, re.DOTALL) is not None


def all_strings(alphabet: str, max_len: int):
    frontier = [""]
    yield ""
    for _ in range(max_len):
        frontier = [w + c for w in frontier for c in alphabet]
        yield from frontier


class TestCompile:
    def test_a_star_b_shape(self):
        dfa = compile_regex("a*b")
        assert dfa.n_states == 3  # q0, q1, dead sink
        assert dfa.start == 0
        assert dfa.accepting.tolist() == [False, True, False]
        assert dfa.step(0, "a") == 0
        assert dfa.step(0, "b") == 1
        assert dfa.step(1, "a") == dfa.dead
        assert dfa.step(1, "b") == dfa.dead

    def test_a_star_b_membership_exhaustive(self):
        dfa = compile_regex("a*b")
        for s in all_strings("ab", 4):
            assert dfa.accepts(s) == brute_accepts("a*b", s), s

    def test_empty_pattern_matches_only_empty(self):
        dfa = compile_regex("")
        assert dfa.accepts("")
        assert not dfa.accepts("a")
        assert dfa.n_states == 2
        assert dfa.trans[dfa.start].tolist() == [dfa.dead]

    def test_dead_sink_is_total_and_absorbing(self):
        dfa = compile_regex("(aa)|(bc)")
        assert (dfa.trans >= 0).all() and (dfa.trans < dfa.n_states).all()
        assert (dfa.trans[dfa.dead] == dfa.dead).all()
        assert not dfa.accepting[dfa.dead]

    def test_syntax_errors(self):
        for bad in ["a(", "[a-", "a{2,1}", "*a", "a|)", "(?:a", r"\x2"]:
            with pytest.raises(RegexSyntaxError):
                compile_regex(bad)

    def test_unsupported_features(self):
        for bad in ["(?=a)", "(?!a)", "(?<=a)b", r"(a)\1", "^a", "a$", r"a\b"]:
            with pytest.raises(UnsupportedFeatureError):
                compile_regex(bad)

    def test_counted_repetition(self):
        dfa = compile_regex("[0-9]{2,4}")
        for s in ["12", "123", "1234"]:
            assert dfa.accepts(s)
        for s in ["1", "12345", "", "a1"]:
            assert not dfa.accepts(s)

    def test_literal_brace_without_quantifier(self):
        dfa = compile_regex("a{b")
        assert dfa.accepts("a{b")
        assert not dfa.accepts("ab")

    def test_hex_and_class_escapes(self):
        dfa = compile_regex(r"[\x41-\x43]+")
        assert dfa.accepts("ABC") and not dfa.accepts("D")
        dfa2 = compile_regex(r"A\d")
        assert dfa2.accepts("A7") and not dfa2.accepts("B7")

    def test_negated_class_covers_unicode(self):
        dfa = compile_regex("[^a]")
        assert dfa.accepts("б") and dfa.accepts("\n") and not dfa.accepts("a")
        assert not dfa.accepts("xy")

    def test_dot_matches_any_scalar(self):
        dfa = compile_regex(".*")
        for s in ["", "\n", "日本語", "a b"]:
            assert dfa.accepts(s)

    def test_lazy_quantifiers_define_same_language(self):
        assert compile_regex("a+?b").to_json_dict() == compile_regex("a+b").to_json_dict()

    def test_membership_fuzz_against_re(self):
        patterns = [
            "a*b", "(aa)|(bc)", "[a-c]{1,3}", "a?b+c*", "(ab|a)(b|)",
            "[^ab]c", "x|", "(a|b)*abb", "a(b|c)*d?", "[ab]*c[ab]*",
        ]
        rng = random.Random(7)
        for pat in patterns:
            dfa = compile_regex(pat)
            ref = re.compile(pat, re.DOTALL)
            for _ in range(100):
                s = "".join(rng.choice("abcdx") for _ in range(rng.randrange(0, 8)))
                assert dfa.accepts(s) == (ref.fullmatch(s) is not None), (pat, s)


class TestMinimality:
    @staticmethod
    def nerode_classes(dfa: CharDfa) -> int:
        """Independent table-filling distinguishability count."""
        n, k = dfa.n_states, dfa.n_classes
        dist = np.zeros((n, n), dtype=bool)
        for p in range(n):
            for q in range(n):
                if dfa.accepting[p] != dfa.accepting[q]:
                    dist[p, q] = True
        changed = True
        while changed:
            changed = False
            for p in range(n):
                for q in range(p):
                    if not dist[p, q]:
                        for c in range(k):
                            a, b = dfa.trans[p, c], dfa.trans[q, c]
                            if dist[a, b]:
                                dist[p, q] = dist[q, p] = True
                                changed = True
                                break
        merged = sum(1 for p in range(n) for q in range(p) if not dist[p, q])
        return n - merged

    @pytest.mark.parametrize(
        "pattern",
        ["a*b", "(aa)|(bc)", "(a|b)*abb", "[ab]{1,3}", "a?b?c?", "((a)|(aa))*", "x|", ""],
    )
    def test_no_equivalent_state_pairs(self, pattern):
        dfa = compile_regex(pattern)
        assert dfa.n_states <= 13
        assert self.nerode_classes(dfa) == dfa.n_states

    def test_build_is_deterministic(self):
        a = compile_regex("(a|b)*abb").to_json_dict()
        b = compile_regex("(a|b)*abb").to_json_dict()
        assert a == b


class TestLiveStates:
    def test_a_star_b(self):
        dfa = compile_regex("a*b")
        live = compute_live_states(dfa)
        assert live.ids() == [0, 1]
        assert dfa.dead not in live

    def test_empty_language(self):
        dfa = compile_regex("[^\\x00-\\U0010FFFF]")  # empty character class
        live = compute_live_states(dfa)
        assert live.ids() == []

    def test_dot_star_all_nondead_live(self):
        dfa = compile_regex(".*")
        live = compute_live_states(dfa)
        assert live.ids() == [dfa.start]

    def test_reverse_bfs_oracle(self):
        rng = random.Random(11)
        for pattern in ["(a|b)*abb", "a{2,5}b?", "(ab)+c"]:
            dfa = compile_regex(pattern)
            live = compute_live_states(dfa)
            # forward search oracle: q live iff BFS from q hits accepting
            for q in range(dfa.n_states):
                seen = {q}
                stack = [q]
                hit = False
                while stack:
                    u = stack.pop()
                    if dfa.accepting[u]:
                        hit = True
                        break
                    for v in dfa.trans[u].tolist():
                        if v not in seen:
                            seen.add(v)
                            stack.append(v)
                assert hit == (q in live), (pattern, q)


class TestExtendedTransition:
    def test_examples(self):
        dfa = compile_regex("a*b")
        assert extended_transition(dfa, "aab", 0) == 1
        assert extended_transition(dfa, "", 1) == 1
        assert extended_transition(dfa, "ba", 0) == dfa.dead

    def test_chars_outside_pattern_route_to_other_class(self):
        dfa = compile_regex("a*b")
        assert extended_transition(dfa, "z", 0) == dfa.dead
        assert extended_transition(dfa, "ф", 0) == dfa.dead

    def test_prefix_characterization(self):
        # live(delta*(w, q0)) iff some bounded suffix completes w
        pattern = "(ab)+c"
        dfa = compile_regex(pattern)
        live = compute_live_states(dfa)
        bound = dfa.n_states
        for w in all_strings("abc", 4):
            q = extended_transition(dfa, w, dfa.start)
            completable = any(
                brute_accepts(pattern, w + s) for s in all_strings("abc", bound)
            )
            assert (q in live) == completable, w


class TestJsonExport:
    def test_schema_and_roundtrip_semantics(self):
        dfa = compile_regex("(aa)|(bc)")
        data = dfa.to_json_dict()
        assert set(data) == {"states", "start", "accepting", "classes", "trans"}
        assert data["states"] == dfa.n_states
        assert len(data["trans"]) == dfa.n_states
        assert len(data["trans"][0]) == len(data["classes"])
        # classes partition the full scalar range
        lo, hi = data["classes"][0][0], data["classes"][-1][1]
        assert lo == 0 and hi == 0x10FFFF
        for (a, b), (c, _d) in zip(data["classes"], data["classes"][1:]):
            assert c == b + 1
