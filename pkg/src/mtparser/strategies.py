"""Training regimes for several treebanks of one language.

* ``single``: one treebank, one model.
* ``concat``: all training sets merged; treebank identity is ignored.
* ``cft``: ``concat``, then the best epoch is fine-tuned separately on each
  treebank, giving one model per treebank.
* ``tbemb``: one model over the merged data whose word vectors include a
  learned embedding of the sentence's treebank.

Random streams are derived from the master seed: model initialisation uses
``SeedSequence([seed, 0])``, training ``[seed, 1]`` and fine-tuning on the
treebank with id k ``[seed, 2, k]``.  Strategies therefore start from the same
initial weights wherever their parameter shapes agree.
"""
from __future__ import annotations

import enum
import logging
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .conllu import Sentence, TreebankRegistry, read_conllu, validate_tree
from .evaluate import las
from .neural import Adam, Hyperparameters, Model, Vocabularies
from .parser import parse_sentences, train_sentence

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    SINGLE = "single"
    CONCAT = "concat"
    C_FT = "cft"
    TB_EMB = "tbemb"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        key = value.lower().replace("+", "").replace("-", "").replace("_", "")
        for s in cls:
            if s.value == key:
                return s
        raise ValueError(f"unknown strategy {value!r}; expected one of {[s.value for s in cls]}")


class EmptyTreebank(ValueError):
    pass


class DevMissing(ValueError):
    pass


class UnknownProxy(ValueError):
    def __init__(self, proxy, valid):
        super().__init__(f"unknown proxy treebank {proxy!r}; valid: {', '.join(valid)}")
        self.proxy = proxy
        self.valid = list(valid)


@dataclass
class TreebankSpec:
    """A treebank given either as file paths or as already parsed sentences."""

    name: str
    train: str | os.PathLike | list[Sentence]
    dev: str | os.PathLike | list[Sentence] | None = None
    test: str | os.PathLike | list[Sentence] | None = None


@dataclass
class StrategyConfig:
    kind: Strategy
    treebanks: list[TreebankSpec]
    epochs: int = 30
    ft_epochs: int = 10
    per_epoch_cap: int | None = None
    seed: int = 0
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def __post_init__(self):
        self.kind = Strategy.parse(self.kind)
        if self.kind == Strategy.SINGLE and len(self.treebanks) != 1:
            raise ValueError("the single strategy trains on exactly one treebank")
        if not self.treebanks:
            raise ValueError("at least one treebank is required")
        names = [t.name for t in self.treebanks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate treebank names: {names}")
        if self.per_epoch_cap is not None and self.per_epoch_cap <= 0:
            raise ValueError("per-epoch cap must be positive")


@dataclass
class StrategyRun:
    config: StrategyConfig
    registry: TreebankRegistry
    models: dict[str, Model]
    dev_curve: dict[str, list[list[float]]]
    selected_epoch: dict[str, int]
    train_seconds: float = 0.0

    @property
    def kind(self) -> Strategy:
        return self.config.kind


def _sentences(source, what: str, name: str) -> list[Sentence]:
    if source is None:
        return []
    if isinstance(source, (str, os.PathLike)):
        if not os.path.exists(source):
            raise FileNotFoundError(f"{what} file for treebank {name!r} not found: {source}")
        return read_conllu(source)
    return [s.copy() for s in source]


def _usable(sentences: list[Sentence], name: str) -> list[Sentence]:
    out = []
    for i, s in enumerate(sentences):
        problems = validate_tree(s)
        if problems or any(t.deprel is None for t in s.tokens):
            log.warning("treebank %s: skipping training sentence %d (%s)", name, i, "; ".join(problems) or "missing label")
            continue
        out.append(s)
    return out


@dataclass
class LoadedTreebank:
    name: str
    id: int
    train: list[Sentence]
    dev: list[Sentence]
    test: list[Sentence]


def load_config_data(config: StrategyConfig, registry: TreebankRegistry | None = None) -> tuple[TreebankRegistry, list[LoadedTreebank]]:
    registry = registry or TreebankRegistry()
    out = []
    for spec in config.treebanks:
        tb = registry.register(spec.name)
        train = _usable(_sentences(spec.train, "training", spec.name), spec.name)
        if not train:
            raise EmptyTreebank(f"treebank {spec.name!r} has no usable training sentences")
        if spec.dev is None:
            raise DevMissing(f"treebank {spec.name!r} has no dev set for epoch selection")
        dev = _sentences(spec.dev, "dev", spec.name)
        if not dev:
            raise DevMissing(f"dev set of treebank {spec.name!r} is empty")
        test = _sentences(spec.test, "test", spec.name)
        for s in train + dev + test:
            s.treebank_id = tb
        out.append(LoadedTreebank(spec.name, tb, train, dev, test))
    return registry, out


def select_best_epoch(curves: Sequence[float] | Sequence[Sequence[float]]) -> int:
    """1-based epoch with the highest unweighted mean dev LAS; earliest on ties.

    ``curves`` is one curve (scores per epoch) or a list of per-treebank curves.
    """
    if not curves:
        raise ValueError("no epochs evaluated")
    if isinstance(curves[0], (int, float, np.floating)):
        curves = [curves]
    n_epochs = len(curves[0])
    if any(len(c) != n_epochs for c in curves):
        raise ValueError("per-treebank curves differ in length")
    means = [sum(c[e] for c in curves) / len(curves) for e in range(n_epochs)]
    best = 0
    for e in range(1, n_epochs):
        if means[e] > means[best]:
            best = e
    return best + 1


def epoch_sample(groups, cap: int | None, rng: np.random.Generator) -> list[Sentence]:
    """One epoch's training sequence.

    Per treebank, ``min(cap, size)`` sentences are drawn without
    replacement (all of them when ``cap`` is None); the union is shuffled.
    ``groups`` is a Dataset, a mapping treebank -> sentences, or a list.
    """
    if hasattr(groups, "by_treebank"):
        groups = groups.by_treebank()
    elif not isinstance(groups, Mapping):
        groups = {0: list(groups)}
    merged: list[Sentence] = []
    for key in sorted(groups):
        sents = groups[key]
        if cap is not None and len(sents) > cap:
            idx = np.sort(rng.choice(len(sents), size=cap, replace=False))
            merged.extend(sents[i] for i in idx)
        else:
            merged.extend(sents)
    order = rng.permutation(len(merged))
    return [merged[i] for i in order]


def _streams(seed: int):
    init = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    train = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return init, train


def evaluate_dev(model: Model, dev: Mapping[int, list[Sentence]], use_tb: bool) -> list[float]:
    return [
        las(sents, parse_sentences(model, sents, tb if use_tb else None)).las
        for tb, sents in sorted(dev.items())
    ]


def fit(
    model: Model,
    train: Mapping[int, list[Sentence]],
    dev: Mapping[int, list[Sentence]],
    epochs: int,
    rng: np.random.Generator,
    cap: int | None = None,
    use_tb: bool = False,
    epoch_offset: int = 0,
    label: str = "",
    on_epoch: Callable[[str, int, list[float]], None] | None = None,
) -> tuple[list[list[float]], int]:
    """Train for ``epochs`` epochs, then restore the best epoch's weights.

    Returns the dev curve (per epoch, per treebank) and the 1-based selected
    epoch.  A fresh optimizer is used, so fine-tuning restarts its moments.
    """
    h = model.hyper
    opt = Adam(model)
    curve: list[list[float]] = []
    best_state = None
    best_mean = -np.inf
    best_epoch = 0
    for e in range(1, epochs + 1):
        explore = h.explore_prob > 0 and epoch_offset + e >= h.explore_from
        for s in epoch_sample(train, cap, rng):
            train_sentence(model, opt, s, s.treebank_id if use_tb else None, rng, explore)
        scores = evaluate_dev(model, dev, use_tb)
        curve.append(scores)
        mean = sum(scores) / len(scores)
        if mean > best_mean:
            best_mean, best_state, best_epoch = mean, model.state(), e
        log.info("%s epoch %d dev LAS %s", label, e, " ".join(f"{x:.2f}" for x in scores))
        if on_epoch is not None:
            on_epoch(label, e, scores)
    model.load_state(best_state)
    return curve, best_epoch


def _new_model(config: StrategyConfig, registry: TreebankRegistry, train_sents, use_tb: bool, init_rng) -> Model:
    vocab = Vocabularies.build(train_sents)
    hyper = config.hyper.replace(use_tb=use_tb)
    return Model.create(hyper, vocab, registry.names, init_rng)


def _stamp(model: Model, config: StrategyConfig, curve, epoch, fine_tuned_on=None):
    # no strategy name: one-treebank single and concat runs must serialize identically
    model.meta = {"seed": config.seed, "selected_epoch": epoch, "dev_curve": curve}
    if fine_tuned_on is not None:
        model.meta["fine_tuned_on"] = fine_tuned_on


def train(config: StrategyConfig, registry: TreebankRegistry | None = None, base: Model | None = None, on_epoch=None) -> StrategyRun:
    """Train ``config``'s strategy.

    For ``cft`` an already trained concatenation model may be passed as
    ``base`` (it is copied, not modified) to skip the shared first phase.
    """
    started = time.perf_counter()
    if base is not None:
        if config.kind != Strategy.C_FT:
            raise ValueError("a base model only applies to the cft strategy")
        missing = [t.name for t in config.treebanks if t.name not in base.treebanks]
        if missing:
            raise ValueError(f"treebanks {missing} are unknown to the base model ({', '.join(base.treebanks)})")
        registry = TreebankRegistry(base.treebanks)
    registry, tbs = load_config_data(config, registry)
    init_rng, rng = _streams(config.seed)
    kind = config.kind
    train_groups = {t.id: t.train for t in tbs}
    dev_groups = {t.id: t.dev for t in tbs}
    all_train = [s for t in tbs for s in t.train]
    models: dict[str, Model] = {}
    curves: dict[str, list[list[float]]] = {}
    selected: dict[str, int] = {}

    if kind in (Strategy.SINGLE, Strategy.CONCAT, Strategy.TB_EMB):
        use_tb = kind == Strategy.TB_EMB
        model = _new_model(config, registry, all_train, use_tb, init_rng)
        curve, epoch = fit(model, train_groups, dev_groups, config.epochs, rng, config.per_epoch_cap, use_tb, label=kind.value, on_epoch=on_epoch)
        _stamp(model, config, curve, epoch)
        models[kind.value] = model
        curves[kind.value] = curve
        selected[kind.value] = epoch
    else:
        if base is None:
            base = _new_model(config, registry, all_train, False, init_rng)
            curve, epoch = fit(base, train_groups, dev_groups, config.epochs, rng, config.per_epoch_cap, False, label="base", on_epoch=on_epoch)
            _stamp(base, config, curve, epoch)
        else:
            base = base.copy()
            curve, epoch = base.meta.get("dev_curve", []), base.meta.get("selected_epoch", 0)
        models["base"] = base
        curves["base"] = curve
        selected["base"] = epoch
        for t in tbs:
            ft = base.copy()
            ft_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2, t.id]))
            name = f"ft:{t.name}"
            curve, epoch = fit(
                ft, {t.id: t.train}, {t.id: t.dev}, config.ft_epochs, ft_rng, config.per_epoch_cap,
                False, epoch_offset=config.epochs, label=name, on_epoch=on_epoch,
            )
            _stamp(ft, config, curve, epoch, t.name)
            models[name] = ft
            curves[name] = curve
            selected[name] = epoch
    return StrategyRun(config, registry, models, curves, selected, time.perf_counter() - started)


def resolve_model(kind: Strategy, models: Mapping[str, Model], treebanks: Sequence[str], proxy: str | None) -> tuple[Model, int | None]:
    """Model and treebank id to use for input parsed with ``proxy``."""
    if kind in (Strategy.SINGLE, Strategy.CONCAT):
        if proxy is not None:
            warnings.warn(f"proxy {proxy!r} is ignored by the {kind.value} strategy", stacklevel=3)
        (model,) = [m for name, m in models.items() if name != "base"] or list(models.values())
        return model, None
    if proxy is None or proxy not in treebanks:
        raise UnknownProxy(proxy, treebanks)
    if kind == Strategy.C_FT:
        return models[f"ft:{proxy}"], None
    return models[kind.value], list(treebanks).index(proxy)


def parse_with(run: StrategyRun, sentences: Sequence[Sentence], proxy: str | None = None) -> list[Sentence]:
    model, tb = resolve_model(run.kind, run.models, run.registry.names, proxy)
    return parse_sentences(model, sentences, tb)


def parse_with_model(model: Model, sentences: Sequence[Sentence], proxy: str | None = None) -> list[Sentence]:
    """Parse with a single loaded model; ``proxy`` selects the treebank embedding."""
    kind = Strategy.TB_EMB if model.uses_tb else Strategy.CONCAT
    if kind == Strategy.TB_EMB:
        if proxy is None or proxy not in model.treebanks:
            raise UnknownProxy(proxy, model.treebanks)
        return parse_sentences(model, sentences, model.treebanks.index(proxy))
    return parse_sentences(model, sentences, None)
