"""Greedy decoding and per-sentence training with the static-dynamic oracle."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autograd as ag
from .neural import Adam, Model, embed_sentence, encode_sentence, feature_rows, score_graph, with_special_rows
from .transition import (
    Configuration,
    GoldTree,
    Kind,
    OracleStuck,
    Transition,
    arcs_to_sentence,
    dynamic_costs,
    initial_config,
    is_terminal,
    max_transitions,
    oracle_next,
)


def allowed_kinds(c: Configuration) -> list[Kind]:
    """Legal kinds, minus LEFT_ARC to the root while more than one word is
    on the stack, so complete derivations always yield a single root."""
    kinds = [k for k in Kind if c.can(k)]
    if len(c.stack) > 1 and c.buffer and c.buffer[0] == c.n + 1:
        kinds.remove(Kind.LEFT_ARC)
    return kinds


def kind_outputs(kind: Kind, n_labels: int) -> range:
    if kind == Kind.SHIFT:
        return range(0, 1)
    if kind == Kind.SWAP:
        return range(1, 2)
    if kind == Kind.LEFT_ARC:
        return range(2, 2 + n_labels)
    return range(2 + n_labels, 2 + 2 * n_labels)


def _output_transition(index: int, n_labels: int) -> tuple[Kind, int | None]:
    if index == 0:
        return Kind.SHIFT, None
    if index == 1:
        return Kind.SWAP, None
    if index < 2 + n_labels:
        return Kind.LEFT_ARC, index - 2
    return Kind.RIGHT_ARC, index - 2 - n_labels


class _Scorer:
    """Configuration scorer over a fixed sentence encoding.

    The first MLP layer is split per feature slot and applied to every row of
    the encoding once, so each configuration costs a few row additions.
    """

    def __init__(self, model: Model, encoded: np.ndarray):
        p = model.params
        h = model.hyper
        self.n_stack, self.n_buffer = h.n_stack, h.n_buffer
        width = encoded.shape[1]
        w1 = p["mlp_w1"].value
        slots = h.n_stack + h.n_buffer
        self.proj = [encoded @ w1[k * width : (k + 1) * width] for k in range(slots)]
        self.b1 = p["mlp_b1"].value
        self.w2 = p["mlp_w2"].value
        self.b2 = p["mlp_b2"].value

    def __call__(self, c: Configuration) -> tuple[list[int], np.ndarray]:
        rows = feature_rows(c, self.n_stack, self.n_buffer)
        pre = self.b1.copy()
        for proj, r in zip(self.proj, rows):
            pre += proj[r]
        return rows, np.tanh(pre) @ self.w2 + self.b2


def _encode(model: Model, forms, tb_id, rng=None) -> ag.Tensor:
    x = embed_sentence(model, forms, tb_id, rng)
    return with_special_rows(model, encode_sentence(model, x))


def decode(model: Model, forms: Sequence[str], tb_id: int | None = None) -> Configuration:
    """Greedy highest-scoring legal transition until every word has a head."""
    with ag.no_grad():
        encoded = _encode(model, forms, tb_id).value
    scorer = _Scorer(model, encoded)
    n_labels = model.n_labels
    c = initial_config(len(forms))
    for _ in range(max_transitions(c.n)):
        if is_terminal(c):
            break
        _, scores = scorer(c)
        best, best_score = -1, -np.inf
        for kind in allowed_kinds(c):
            for i in kind_outputs(kind, n_labels):
                if scores[i] > best_score:
                    best, best_score = i, scores[i]
        kind, label = _output_transition(best, n_labels)
        c.step(Transition(kind, label))
    return c


def parse_sentence(model: Model, sentence, tb_id: int | None = None):
    c = decode(model, sentence.forms, tb_id)
    return arcs_to_sentence(c, sentence, model.vocab.labels)


def parse_sentences(model: Model, sentences, tb_id: int | None = None) -> list:
    return [parse_sentence(model, s, tb_id) for s in sentences]


def gold_tree(model: Model, sentence) -> GoldTree:
    return GoldTree(
        [t.head for t in sentence.tokens],
        [model.vocab.label_id(t.deprel) for t in sentence.tokens],
    )


def _static_fallback(c, gold, deps, kinds, costs) -> list[Kind]:
    try:
        kind = oracle_next(c, gold, deps).kind
    except OracleStuck:
        kind = None
    if kind in kinds:
        return [kind]
    best = min(costs[k] for k in kinds)
    return [k for k in kinds if costs[k] == best]


def derivation_loss(
    model: Model,
    sentence,
    tb_id: int | None = None,
    rng: np.random.Generator | None = None,
    explore: bool = False,
    gold: GoldTree | None = None,
) -> tuple[ag.Tensor | None, int]:
    """Hinge loss summed over the margin-violating steps of one derivation.

    Correct transitions are the zero-cost ones, or the static oracle's
    choice when none has zero cost.  The derivation follows the
    highest-scoring correct transition or, with probability ``explore_prob``
    when ``explore`` is set, the model's own choice if that is incorrect.
    Returns ``(loss or None, n_steps)``.
    """
    h = model.hyper
    if gold is None:
        gold = gold_tree(model, sentence)
    encoded = _encode(model, sentence.forms, tb_id, rng)
    scorer = _Scorer(model, encoded.value)
    n_labels = model.n_labels
    deps = gold.dependents()
    c = initial_config(gold.n)
    steps_rows, correct, wrong = [], [], []
    n_steps = 0
    while not is_terminal(c):
        if n_steps >= max_transitions(c.n):
            raise RuntimeError("training derivation exceeded the transition bound")
        rows, scores = scorer(c)
        kinds = allowed_kinds(c)
        costs = dynamic_costs(c, gold)
        correct_kinds = [k for k in kinds if costs[k] == 0]
        if not correct_kinds:
            # the cost formulas ignore arcs a later SWAP can still recover;
            # then the static oracle decides
            correct_kinds = _static_fallback(c, gold, deps, kinds, costs)
        gold_label = gold.label[c.stack[-1] - 1] if c.stack else None
        zero = []
        legal_out = []
        for k in kinds:
            outs = kind_outputs(k, n_labels)
            legal_out.extend(outs)
            if k in correct_kinds:
                zero.append(outs[0] if k in (Kind.SHIFT, Kind.SWAP) else outs[gold_label])
        zero_set = set(zero)
        best_correct = max(zero, key=lambda i: scores[i])
        others = [i for i in legal_out if i not in zero_set]
        follow = best_correct
        if others:
            best_wrong = max(others, key=lambda i: scores[i])
            if scores[best_wrong] + h.margin > scores[best_correct]:
                steps_rows.append(rows)
                correct.append(best_correct)
                wrong.append(best_wrong)
            if explore and scores[best_wrong] > scores[best_correct] and rng is not None:
                if rng.random() < h.explore_prob:
                    follow = best_wrong
        kind, label = _output_transition(follow, n_labels)
        c.step(Transition(kind, label))
        n_steps += 1
    if not correct:
        return None, n_steps
    k = len(correct)
    feats = ag.reshape(ag.take(encoded, np.array(steps_rows)), (k, -1))
    scores_t = score_graph(model, feats)
    idx = np.arange(k)
    margin = ag.add(ag.pick(scores_t, idx, wrong), h.margin)
    loss = ag.total(ag.relu(ag.add(margin, ag.mul(ag.pick(scores_t, idx, correct), -1.0))))
    return loss, n_steps


def train_sentence(model: Model, optimizer: Adam, sentence, tb_id=None, rng=None, explore=False) -> float:
    loss, _ = derivation_loss(model, sentence, tb_id, rng, explore)
    if loss is None:
        return 0.0
    ag.backward(loss)
    optimizer.step(model)
    return float(loss.value)
