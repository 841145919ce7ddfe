"""Attachment scores and the paired approximate randomization test."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Misaligned(ValueError):
    pass


@dataclass
class EvalResult:
    las: float
    uas: float
    correct_labeled: int
    correct_unlabeled: int
    total: int
    per_sentence: list[tuple[int, int]] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {"las": self.las, "uas": self.uas, "total": self.total}


def _label(rel: str | None, truncate: bool) -> str | None:
    if rel is None or not truncate:
        return rel
    return rel.split(":", 1)[0]


def check_aligned(gold: Sequence, system: Sequence) -> None:
    if len(gold) != len(system):
        raise Misaligned(f"sentence counts differ: gold {len(gold)}, system {len(system)}")
    for i, (g, s) in enumerate(zip(gold, system)):
        if len(g.tokens) != len(s.tokens):
            raise Misaligned(f"sentence {i}: {len(g.tokens)} gold tokens vs {len(s.tokens)} system tokens")
        for gt, st in zip(g.tokens, s.tokens):
            if gt.form != st.form:
                raise Misaligned(f"sentence {i}, token {gt.id}: form {gt.form!r} vs {st.form!r}")


def las(gold: Sequence, system: Sequence, truncate_subtypes: bool = False, tokens=None) -> EvalResult:
    """Labeled and unlabeled attachment scores over all syntactic words.

    Alignment is positional.  ``tokens``, if given, maps a sentence index to
    the token ids to score (used to restrict scoring to a subset of words).
    """
    check_aligned(gold, system)
    per_sentence = []
    cl = cu = n = 0
    for i, (g, s) in enumerate(zip(gold, system)):
        keep = None if tokens is None else set(tokens(i, g))
        sl = su = sn = 0
        for gt, st in zip(g.tokens, s.tokens):
            if keep is not None and gt.id not in keep:
                continue
            sn += 1
            if gt.head == st.head:
                su += 1
                if _label(gt.deprel, truncate_subtypes) == _label(st.deprel, truncate_subtypes):
                    sl += 1
        per_sentence.append((sl, sn))
        cl += sl
        cu += su
        n += sn
    if n == 0:
        return EvalResult(0.0, 0.0, 0, 0, 0, per_sentence)
    return EvalResult(100.0 * cl / n, 100.0 * cu / n, cl, cu, n, per_sentence)


def randomization_test(
    gold: Sequence,
    system_a: Sequence,
    system_b: Sequence,
    iterations: int = 10000,
    seed: int = 0,
    truncate_subtypes: bool = False,
    chunk: int = 1000,
) -> float:
    """Two-sided p-value for the LAS difference of two systems.

    Each iteration exchanges the two systems' outputs on every sentence
    independently with probability 1/2.  Draws come from a counter-based
    generator in fixed-size chunks so the result depends only on ``seed``
    and ``iterations``.
    """
    a = las(gold, system_a, truncate_subtypes)
    b = las(gold, system_b, truncate_subtypes)
    # LAS differences are compared as integer counts: total is shared
    diff = np.array([x[0] - y[0] for x, y in zip(a.per_sentence, b.per_sentence)], dtype=np.int64)
    observed = abs(int(diff.sum()))
    hits = 0
    done = 0
    block = 0
    while done < iterations:
        k = min(chunk, iterations - done)
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[block, 0, 0, 0]))
        signs = np.where(rng.random((k, len(diff))) < 0.5, -1, 1)
        stats = np.abs(signs @ diff)
        hits += int((stats >= observed).sum())
        done += k
        block += 1
    return (hits + 1) / (iterations + 1)


def significance_marker(p_vs_single: float | None, p_vs_concat: float | None, level: float = 0.05) -> str:
    """``+`` differs from single, ``×`` from concat, ``*`` from both."""
    s = p_vs_single is not None and p_vs_single < level
    c = p_vs_concat is not None and p_vs_concat < level
    if s and c:
        return "*"
    if s:
        return "+"
    if c:
        return "×"
    return ""
