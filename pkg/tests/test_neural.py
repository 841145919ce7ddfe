import os
import warnings

import numpy as np
import pytest

from conftest import FIXTURES, SMALL, TINY
from gradcheck import SENTENCES, check_model_gradients, tiny_model
from mtparser import autograd as ag
from mtparser.conllu import read_conllu
from mtparser.neural import (
    Adam,
    Model,
    ModelFormatError,
    RegistryMismatch,
    Vocabularies,
    embed_sentence,
    embed_token,
    encode_sentence,
    extract_features,
    hinge_loss,
    load_model,
    load_model_bytes,
    model_bytes,
    save_model,
    score,
    with_special_rows,
    word_ids,
)
from mtparser.parser import derivation_loss, parse_sentences, train_sentence
from mtparser.transition import Configuration, initial_config


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


@pytest.mark.parametrize(
    "build",
    [
        lambda a, b: ag.total(ag.tanh(ag.matmul(a, b))),
        lambda a, b: ag.total(ag.mul(ag.sigmoid(a), ag.add(a, 1.0))),
        lambda a, b: ag.total(ag.relu(ag.add(ag.matmul(a, b), ag.reshape(ag.take(b, 1), (1, 2))))),
        lambda a, b: ag.total(ag.tanh(ag.concat([a, ag.reshape(b, (3, 2))], axis=1))),
        lambda a, b: ag.total(ag.pick(ag.matmul(a, b), [0, 1, 1], [1, 0, 1])),
        lambda a, b: ag.total(ag.tanh(ag.take(ag.matmul(a, b), np.array([2, 0, 2])))),
    ],
)
def test_op_gradients(build):
    rng = np.random.default_rng(0)
    a = ag.parameter(rng.normal(size=(3, 3)))
    b = ag.parameter(rng.normal(size=(3, 2)))
    loss = build(a, b)
    ag.backward(loss)
    for p in (a, b):
        num = numeric_grad(lambda: float(build(a, b).value), p.value)
        np.testing.assert_allclose(p.grad, num, rtol=1e-5, atol=1e-7)


def test_lstm_gradient_with_mask():
    rng = np.random.default_rng(1)
    T, B, D, H = 4, 3, 2, 3
    x = ag.parameter(rng.normal(size=(T, B, D)))
    wx = ag.parameter(rng.normal(size=(D, 4 * H)) * 0.5)
    wh = ag.parameter(rng.normal(size=(H, 4 * H)) * 0.5)
    b = ag.parameter(rng.normal(size=4 * H) * 0.1)
    mask = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0], [1, 0, 0]], dtype=bool)

    def f():
        out = ag.lstm(x, wx, wh, b, mask)
        return ag.total(ag.tanh(ag.take(out, T - 1)))

    ag.backward(f())
    for p in (x, wx, wh, b):
        num = numeric_grad(lambda: float(f().value), p.value)
        np.testing.assert_allclose(p.grad, num, rtol=1e-5, atol=1e-8)
    # padded steps carry the state forward unchanged
    out = ag.lstm(x, wx, wh, b, mask).value
    np.testing.assert_array_equal(out[3, 1], out[1, 1])
    np.testing.assert_array_equal(out[3, 2], out[0, 2])


def test_no_grad_builds_no_graph():
    a = ag.parameter(np.ones(2))
    with ag.no_grad():
        y = ag.tanh(a)
    assert not y.requires_grad and not y.parents


@pytest.mark.parametrize("seed", range(2))
def test_finite_differences_tiny_model(seed):
    model = tiny_model(TINY, seed, use_tb=seed % 2 == 0)
    errors = check_model_gradients(model, 1 if model.uses_tb else None, seed)
    assert max(errors.values()) < 1e-4, errors


def small_model(use_tb=False, seed=0):
    return Model.create(SMALL.replace(use_tb=use_tb), Vocabularies.build(SENTENCES), ["A", "B", "C"], seed)


def test_input_dimensions():
    m = small_model(use_tb=True)
    x = embed_token(m, "abc", 0)
    assert x.shape == (SMALL.dim_word + 2 * SMALL.hidden_char + SMALL.dim_tb,)
    assert small_model().hyper.dim_input == SMALL.dim_word + 2 * SMALL.hidden_char


def test_default_treebank_embedding_size():
    from mtparser.neural import Hyperparameters

    h = Hyperparameters(use_tb=True)
    assert h.dim_tb == 12 and h.dim_input == 100 + 2 * 50 + 12


def test_treebank_ids_change_only_the_tail():
    m = small_model(use_tb=True)
    a, b = embed_token(m, "bca", 0), embed_token(m, "bca", 2)
    k = SMALL.dim_tb
    np.testing.assert_array_equal(a[:-k], b[:-k])
    assert np.all(a[-k:] != b[-k:])


def test_embed_errors():
    m = small_model(use_tb=True)
    with pytest.raises(ValueError):
        embed_token(m, "", 0)
    with pytest.raises(ValueError):
        embed_token(m, "ab", 3)
    with pytest.raises(ValueError):
        embed_token(m, "ab", None)


def test_unknown_words_and_chars_map_to_unk():
    m = small_model()
    assert word_ids(m, ["zzz", "ab"])[0] == 0
    np.testing.assert_array_equal(embed_token(m, "ž"), embed_token(m, "ý"))


def test_word_dropout_off_ignores_rng():
    m = small_model()
    m.hyper = m.hyper.replace(word_dropout=0.0)
    forms = SENTENCES[1].forms
    a = embed_sentence(m, forms, None, np.random.default_rng(1)).value
    b = embed_sentence(m, forms, None, np.random.default_rng(2)).value
    np.testing.assert_array_equal(a, b)


def test_word_dropout_rate_follows_frequency():
    m = small_model()
    rng = np.random.default_rng(0)
    # every word in the tiny vocabulary has frequency 1 or 2
    forms = ["a"] * 20000
    freq = m.vocab.word_freq[m.vocab.word_id("a")]
    dropped = np.mean(word_ids(m, forms, rng) == 0)
    assert abs(dropped - 0.25 / (0.25 + freq)) < 0.01


def _encode(m, forms):
    with ag.no_grad():
        return encode_sentence(m, embed_sentence(m, forms)).value


def test_encoder_is_contextual():
    m = small_model()
    forms = ["ab", "bca", "c", "a"]
    v = _encode(m, forms)
    assert v.shape == (4, 2 * SMALL.hidden_word)
    assert _encode(m, ["ab"]).shape == (1, 2 * SMALL.hidden_word)
    perm = _encode(m, forms[::-1])
    assert not np.allclose(v[::-1], perm)
    changed = _encode(m, forms[:-1] + ["ca"])
    assert not np.allclose(v[0], changed[0])


def test_feature_extraction():
    m = small_model()
    forms = ["ab", "bca", "c"]
    with ag.no_grad():
        enc = with_special_rows(m, encode_sentence(m, embed_sentence(m, forms))).value
    pad, root = m.params["pad_vec"].value, m.params["root_vec"].value
    phi = extract_features(initial_config(3), enc).reshape(4, -1)
    for k in range(3):
        np.testing.assert_array_equal(phi[k], pad)
    np.testing.assert_array_equal(phi[3], enc[0])
    late = Configuration(3, [2], [4], [-1] * 5, [-1] * 5)
    phi = extract_features(late, enc).reshape(4, -1)
    np.testing.assert_array_equal(phi[3], root)
    np.testing.assert_array_equal(phi[0], enc[1])
    assert extract_features(late, enc).shape == (4 * 2 * SMALL.hidden_word,)


def test_score_shape_and_stability():
    m = small_model()
    rng = np.random.default_rng(0)
    for _ in range(200):
        phi = rng.normal(scale=rng.choice([1, 10, 1000]), size=4 * 2 * SMALL.hidden_word)
        s = score(m, phi)
        assert s.shape == (2 + 2 * m.n_labels,)
        assert np.all(np.isfinite(s))
    phi = rng.normal(size=4 * 2 * SMALL.hidden_word)
    np.testing.assert_array_equal(score(m, phi), score(m, phi))
    with pytest.raises(ValueError):
        score(m, np.zeros(3))


def test_hinge_loss():
    s = ag.parameter(np.array([3.0, 1.0, 0.5, 2.5]))
    assert hinge_loss(s, [0], [0, 1, 2]).value == 0.0
    s = ag.parameter(np.array([2.0, 2.0, 0.0]))
    loss = hinge_loss(s, [0], [0, 1, 2])
    assert loss.value == 1.0
    ag.backward(loss)
    np.testing.assert_array_equal(s.grad, [-1.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        hinge_loss(s, [], [0, 1])


def test_zero_loss_gives_zero_gradients():
    s = ag.parameter(np.array([5.0, 1.0]))
    ag.backward(hinge_loss(s, [0], [0, 1]))
    np.testing.assert_array_equal(s.grad, 0.0)


def test_unused_treebank_rows_get_no_gradient():
    m = small_model(use_tb=True)
    loss, _ = derivation_loss(m, SENTENCES[1], 1)
    ag.backward(loss)
    g = m.params["tb_emb"].grad
    assert np.any(g[1] != 0)
    np.testing.assert_array_equal(g[0], 0.0)
    np.testing.assert_array_equal(g[2], 0.0)


def test_adam_zero_gradient_is_a_no_op_and_clears_grads():
    m = small_model()
    before = m.state()
    opt = Adam(m)
    opt.step(m)
    for k, v in m.state().items():
        np.testing.assert_array_equal(v, before[k])
    p = m.params["mlp_b2"]
    p.grad[...] = np.where(np.arange(p.value.size) % 2 == 0, 1.0, -1.0)
    old = p.value.copy()
    opt.step(m)
    assert np.all(np.sign(p.value - old) == -np.sign(np.where(np.arange(p.value.size) % 2 == 0, 1.0, -1.0)))
    assert np.all(p.grad == 0)


def test_loss_decreases_on_fixed_sentence():
    decreased = 0
    trials = 20
    for seed in range(trials):
        m = small_model(seed=seed)
        opt = Adam(m)
        s = SENTENCES[seed % 2]
        loss = derivation_loss(m, s)[0]
        first = 0.0 if loss is None else float(loss.value)
        for _ in range(50):
            train_sentence(m, opt, s)
        loss = derivation_loss(m, s)[0]
        last = 0.0 if loss is None else float(loss.value)
        decreased += last <= first
    assert decreased >= 0.95 * trials


def test_save_load_round_trip(tmp_path):
    m = small_model(use_tb=True)
    m.meta = {"selected_epoch": 3}
    path = tmp_path / "m.model"
    save_model(m, path)
    assert os.listdir(tmp_path) == ["m.model"]
    back = load_model(path)
    assert back.treebanks == ["A", "B", "C"] and back.meta == {"selected_epoch": 3}
    assert back.hyper == m.hyper and back.vocab.words == m.vocab.words
    rng = np.random.default_rng(0)
    for _ in range(10):
        phi = rng.normal(size=4 * 2 * SMALL.hidden_word)
        np.testing.assert_array_equal(score(back, phi), score(m, phi))
    sents = read_conllu(FIXTURES / "tiny10.conllu")
    assert [s.heads for s in parse_sentences(back, sents, 1)] == [s.heads for s in parse_sentences(m, sents, 1)]
    assert model_bytes(back) == model_bytes(m)


def test_float32_serialization(tmp_path):
    m = small_model()
    save_model(m, tmp_path / "m32", dtype="float32")
    back = load_model(tmp_path / "m32")
    for k, p in m.params.items():
        np.testing.assert_allclose(back.params[k].value, p.value, rtol=1e-6)
    assert (tmp_path / "m32").stat().st_size < len(model_bytes(m))


def test_model_file_layout():
    import json
    import struct

    m = small_model()
    data = model_bytes(m)
    assert data[:4] == b"HPM1"
    (size,) = struct.unpack("<Q", data[4:12])
    header = json.loads(data[12 : 12 + size])
    assert header["format_version"] == 1
    first = header["tensors"][0]
    arr = np.frombuffer(data, dtype="<f8", count=int(np.prod(first["shape"])), offset=12 + size + first["offset"])
    np.testing.assert_array_equal(arr.reshape(first["shape"]), m.params[first["name"]].value)


def test_load_errors():
    data = bytearray(model_bytes(small_model()))
    data[0:4] = b"XXXX"
    with pytest.raises(ModelFormatError):
        load_model_bytes(bytes(data))
    good = model_bytes(small_model())
    with pytest.warns(RegistryMismatch):
        load_model_bytes(good, ["A", "C", "B"])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_model_bytes(good, ["A", "B", "C"])


def test_training_is_bit_deterministic():
    sents = read_conllu(FIXTURES / "tiny10.conllu")

    def run():
        m = Model.create(SMALL, Vocabularies.build(sents), [], 4)
        opt = Adam(m)
        rng = np.random.default_rng(9)
        for epoch in range(3):
            for s in sents:
                train_sentence(m, opt, s, None, rng, explore=epoch > 0)
        return model_bytes(m)

    assert run() == run()


def test_treebank_embedding_inference():
    sents = read_conllu(FIXTURES / "toy_a_dev.conllu")
    m = Model.create(SMALL.replace(use_tb=True), Vocabularies.build(sents), ["A", "B", "C"], 1)
    a = [s.heads for s in parse_sentences(m, sents, 0)]
    assert a == [s.heads for s in parse_sentences(m, sents, 0)]
    c = initial_config(len(sents[0]))

    def first_scores(tb):
        with ag.no_grad():
            enc = with_special_rows(m, encode_sentence(m, embed_sentence(m, sents[0].forms, tb))).value
        return score(m, extract_features(c, enc))

    np.testing.assert_array_equal(first_scores(1), first_scores(1))
    assert not np.allclose(first_scores(0), first_scores(1))
