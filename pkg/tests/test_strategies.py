import warnings

import numpy as np
import pytest

from conftest import FIXTURES, SMALL
from mtparser.conllu import Sentence, Token, read_conllu, tag
from mtparser.neural import model_bytes
from mtparser.strategies import (
    DevMissing,
    EmptyTreebank,
    Strategy,
    StrategyConfig,
    TreebankSpec,
    UnknownProxy,
    epoch_sample,
    load_config_data,
    parse_with,
    parse_with_model,
    select_best_epoch,
    train,
)

A_TRAIN = read_conllu(FIXTURES / "toy_a_train.conllu")[:12]
A_DEV = read_conllu(FIXTURES / "toy_a_dev.conllu")[:6]
B_TRAIN = read_conllu(FIXTURES / "toy_b_train.conllu")[:12]
B_DEV = read_conllu(FIXTURES / "toy_b_dev.conllu")[:6]


def specs():
    return [TreebankSpec("a", A_TRAIN, A_DEV), TreebankSpec("b", B_TRAIN, B_DEV)]


def config(kind, tbs=None, **kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("ft_epochs", 1)
    return StrategyConfig(kind, tbs or specs(), seed=3, hyper=SMALL, **kw)


def test_strategy_names():
    assert [s.value for s in Strategy] == ["single", "concat", "cft", "tbemb"]
    assert Strategy.parse("tbemb") is Strategy.TB_EMB
    with pytest.raises(ValueError):
        Strategy.parse("bogus")


def test_config_validation():
    with pytest.raises(ValueError):
        config("single")
    with pytest.raises(ValueError):
        config("concat", [TreebankSpec("a", A_TRAIN, A_DEV)] * 2)
    with pytest.raises(ValueError):
        config("concat", per_epoch_cap=0)


def test_missing_data_errors():
    with pytest.raises(DevMissing):
        load_config_data(config("concat", [TreebankSpec("a", A_TRAIN)]))
    with pytest.raises(EmptyTreebank):
        load_config_data(config("concat", [TreebankSpec("a", [], A_DEV)]))


def test_invalid_training_trees_are_skipped(caplog):
    bad = Sentence([Token(1, "x", head=1, deprel="root")])
    _, tbs = load_config_data(config("concat", [TreebankSpec("a", A_TRAIN + [bad], A_DEV)]))
    assert len(tbs[0].train) == len(A_TRAIN)
    assert "skipping training sentence" in caplog.text


def test_select_best_epoch():
    assert select_best_epoch([70.0, 72.0, 71.0]) == 2
    assert select_best_epoch([70.0, 72.0, 72.0]) == 2
    assert select_best_epoch([[80, 60], [60, 81], [70, 70]]) == 2
    # unweighted mean over treebanks: epoch 1 averages 70.5, epoch 2 70
    assert select_best_epoch([[90, 80], [51, 60]]) == 1
    with pytest.raises(ValueError):
        select_best_epoch([])


def test_epoch_sample():
    a = tag(A_TRAIN, 0)
    b = tag(B_TRAIN[:5], 1)
    rng = np.random.default_rng(0)
    out = epoch_sample({0: a, 1: b}, 4, rng)
    assert len(out) == 8
    assert sum(s.treebank_id == 0 for s in out) == 4
    assert len({id(s) for s in out}) == 8
    full = epoch_sample({0: a, 1: b}, None, rng)
    assert sorted(map(id, full)) == sorted(map(id, a + b))
    assert len(epoch_sample({0: a[:3]}, 10, rng)) == 3
    x = epoch_sample({0: a, 1: b}, 4, np.random.default_rng(7))
    y = epoch_sample({0: a, 1: b}, 4, np.random.default_rng(7))
    assert [id(s) for s in x] == [id(s) for s in y]


@pytest.fixture(scope="module")
def runs():
    return {k: train(config(k)) for k in ("concat", "cft", "tbemb")}


def test_model_counts(runs):
    assert list(runs["concat"].models) == ["concat"]
    assert list(runs["tbemb"].models) == ["tbemb"]
    assert sorted(runs["cft"].models) == ["base", "ft:a", "ft:b"]
    single = train(config("single", [specs()[0]]))
    assert list(single.models) == ["single"]
    assert runs["tbemb"].models["tbemb"].uses_tb
    assert not runs["cft"].models["ft:a"].uses_tb


def test_selected_epoch_and_curves(runs):
    run = runs["concat"]
    curve = run.dev_curve["concat"]
    assert len(curve) == 2 and all(len(c) == 2 for c in curve)
    per_treebank = [list(c) for c in zip(*curve)]
    assert run.selected_epoch["concat"] == select_best_epoch(per_treebank)
    assert run.models["concat"].meta["selected_epoch"] == run.selected_epoch["concat"]
    assert len(runs["cft"].dev_curve["ft:a"]) == 1


def test_fine_tuning_leaves_base_untouched(runs):
    run = runs["cft"]
    base = run.models["base"]
    again = train(config("cft"), base=base)
    assert model_bytes(again.models["base"]) == model_bytes(base)
    assert model_bytes(again.models["ft:a"]) == model_bytes(run.models["ft:a"])
    assert model_bytes(run.models["ft:a"]) != model_bytes(base)


def test_parse_dispatch(runs):
    sents = A_DEV[:3]
    with pytest.raises(UnknownProxy) as err:
        parse_with(runs["tbemb"], sents, "zz")
    assert err.value.valid == ["a", "b"]
    with pytest.raises(UnknownProxy):
        parse_with(runs["cft"], sents, None)
    with pytest.warns(UserWarning, match="ignored"):
        parse_with(runs["concat"], sents, "a")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plain = parse_with(runs["concat"], sents)
    assert [s.heads for s in plain] == [s.heads for s in parse_with_model(runs["concat"].models["concat"], sents)]
    ft = parse_with(runs["cft"], sents, "b")
    assert [s.heads for s in ft] == [s.heads for s in parse_with_model(runs["cft"].models["ft:b"], sents)]
    tb = parse_with(runs["tbemb"], sents, "b")
    assert [s.heads for s in tb] == [s.heads for s in parse_with_model(runs["tbemb"].models["tbemb"], sents, "b")]
    with pytest.raises(UnknownProxy):
        parse_with_model(runs["tbemb"].models["tbemb"], sents, None)


def test_one_treebank_single_equals_concat():
    tb = [TreebankSpec("a", A_TRAIN, A_DEV)]
    s = train(config("single", tb)).models["single"]
    c = train(config("concat", tb)).models["concat"]
    assert model_bytes(s) == model_bytes(c)


def test_training_is_reproducible():
    a = train(config("tbemb")).models["tbemb"]
    b = train(config("tbemb")).models["tbemb"]
    assert model_bytes(a) == model_bytes(b)
