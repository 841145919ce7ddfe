"""Generated treebanks for tests, demos and the multi-treebank experiments.

``conflict_corpus`` builds the minimal case of two treebanks that annotate
one construction differently: a clause introduced by a complementizer
after a noun is a clausal complement of the verb (``ccomp``, introduced by
``mark``) under style A and a relative clause on the noun (``acl:relcl``,
whose relative word is its ``nsubj``) under style B.  Tokens
whose analysis depends on the style carry ``Conflict=Yes`` in MISC.

``toy_language`` generates a richer language with determiners, adjectives,
prepositional phrases with lexically preferred attachment, adverbs and
embedded clauses.  Treebanks drawn from it can differ in domain (word
frequencies, sentence shapes) and in annotation style.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .conllu import Sentence, Token

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr", "sk", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "n", "r", "s", "l", "m", "k"]


def make_words(count: int, rng: random.Random, suffix: str = "", syllables=(1, 3)) -> list[str]:
    out: list[str] = []
    seen = set()
    while len(out) < count:
        k = rng.randint(*syllables)
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS) for _ in range(k)) + suffix
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def _sentence(words: list[tuple[str, str, int, str]], comments=(), conflicts=()) -> Sentence:
    toks = []
    for i, (form, upos, head, rel) in enumerate(words, start=1):
        misc = "Conflict=Yes" if i in conflicts else "_"
        toks.append(Token(i, form, "_", upos, "_", "_", head, rel, "_", misc))
    return Sentence(toks, list(comments))


def conflict_tokens(sentence: Sentence) -> list[int]:
    return [t.id for t in sentence.tokens if "Conflict=Yes" in t.misc.split("|")]


# ---------------------------------------------------------------- conflict corpus


def conflict_corpus(n: int, style: str, seed: int = 0, lexicon_seed: int = 7) -> list[Sentence]:
    """Pro-drop sentences ``V N that V N that V ...`` with 1-3 embedded clauses.

    Both styles share the lexicon and the word sequences' distribution; only
    the attachment of each embedded verb differs.
    """
    if style not in ("A", "B"):
        raise ValueError("style must be 'A' or 'B'")
    lex = random.Random(lexicon_seed)
    nouns = make_words(40, lex, "o")
    verbs = make_words(25, lex, "et")
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        k = rng.choice((1, 2, 2, 3))
        words: list[list] = []
        conflicts = []
        # main clause: [subject] verb object
        subj = rng.random() < 0.3
        if subj:
            words.append([rng.choice(nouns), "NOUN", None, "nsubj"])
        verb_pos = len(words) + 1
        words.append([rng.choice(verbs), "VERB", 0, "root"])
        if subj:
            words[0][2] = verb_pos
        prev_verb = verb_pos
        noun_pos = len(words) + 1
        words.append([rng.choice(nouns), "NOUN", verb_pos, "obj"])
        for j in range(k):
            comp_pos = len(words) + 1
            # B reads "ke" as a relative pronoun subject, A as a complementizer
            words.append(["ke", "SCONJ", None, "mark" if style == "A" else "nsubj"])
            v_pos = len(words) + 1
            if style == "A":
                words.append([rng.choice(verbs), "VERB", prev_verb, "ccomp"])
            else:
                words.append([rng.choice(verbs), "VERB", noun_pos, "acl:relcl"])
            words[comp_pos - 1][2] = v_pos
            conflicts += [comp_pos, v_pos]
            if j < k - 1 or rng.random() < 0.5:
                noun_pos = len(words) + 1
                words.append([rng.choice(nouns), "NOUN", v_pos, "obj"])
            prev_verb = v_pos
        out.append(_sentence([tuple(w) for w in words], conflicts=conflicts))
    return out


# ---------------------------------------------------------------- toy language


@dataclass
class Style:
    """Annotation conventions of one treebank."""

    clause_after_object: str = "ccomp"  # or "acl:relcl": attach to the object noun
    verbal_pp_label: str = "obl"  # "nmod" mimics the older scheme


@dataclass
class Domain:
    """Sampling preferences of one treebank's text."""

    lexicon_shift: int = 0
    zipf: float = 1.1
    pp_rate: float = 0.5
    clause_rate: float = 0.25
    adj_rate: float = 0.3
    adv_rate: float = 0.15
    subject_rate: float = 0.9
    max_pps: int = 2


@dataclass
class Lexicon:
    nouns: list[str]
    tverbs: list[str]
    iverbs: list[str]
    cverbs: list[str]
    adjs: list[str]
    advs: list[str]
    dets: list[str]
    preps: list[str]
    prep_to_verb: dict[str, float] = field(default_factory=dict)

    @classmethod
    def generate(cls, seed: int = 11) -> "Lexicon":
        rng = random.Random(seed)
        preps = make_words(8, rng, syllables=(1, 1))
        lex = cls(
            nouns=make_words(400, rng, "a"),
            tverbs=make_words(80, rng, "ir"),
            iverbs=make_words(40, rng, "um"),
            cverbs=make_words(15, rng, "es"),
            adjs=make_words(80, rng, "i"),
            advs=make_words(30, rng, "ly"),
            dets=make_words(4, rng, syllables=(1, 1)),
            preps=preps,
        )
        # each preposition mostly attaches to the verb or to the preceding noun
        lex.prep_to_verb = {p: (0.9 if i % 2 == 0 else 0.1) for i, p in enumerate(preps)}
        return lex


def _zipf_pick(items: list[str], rng: random.Random, shift: int, s: float) -> str:
    n = len(items)
    weights = [1.0 / (r + 1) ** s for r in range(n)]
    idx = rng.choices(range(n), weights)[0]
    return items[(idx + shift) % n]


class _Builder:
    def __init__(self):
        self.words: list[list] = []

    def add(self, form, upos, head, rel) -> int:
        self.words.append([form, upos, head, rel])
        return len(self.words)

    def set_head(self, i, head, rel=None):
        self.words[i - 1][2] = head
        if rel is not None:
            self.words[i - 1][3] = rel


def toy_language(n: int, style: Style | None = None, domain: Domain | None = None, seed: int = 0, lexicon: Lexicon | None = None) -> list[Sentence]:
    style = style or Style()
    domain = domain or Domain()
    lex = lexicon or Lexicon.generate()
    rng = random.Random(seed)

    def pick(items):
        return _zipf_pick(items, rng, domain.lexicon_shift, domain.zipf)

    def noun_phrase(b: _Builder, head_of_np=None, rel=None):
        """Append a noun phrase; returns the noun position."""
        det = b.add(pick(lex.dets), "DET", None, "det") if rng.random() < 0.7 else None
        adj = b.add(pick(lex.adjs), "ADJ", None, "amod") if rng.random() < domain.adj_rate else None
        noun = b.add(pick(lex.nouns), "NOUN", head_of_np, rel)
        for x in (det, adj):
            if x is not None:
                b.set_head(x, noun)
        return noun

    def pps(b: _Builder, verb: int, last_noun: int):
        for _ in range(rng.randint(0, domain.max_pps)):
            if rng.random() >= domain.pp_rate:
                break
            prep_form = pick(lex.preps)
            to_verb = rng.random() < lex.prep_to_verb[prep_form]
            case = b.add(prep_form, "ADP", None, "case")
            if to_verb:
                noun = noun_phrase(b, verb, style.verbal_pp_label)
            else:
                noun = noun_phrase(b, last_noun, "nmod")
            b.set_head(case, noun)
            last_noun = noun

    def clause(b: _Builder, head, rel, depth):
        subj = noun_phrase(b) if rng.random() < domain.subject_rate else None
        adv = b.add(pick(lex.advs), "ADV", None, "advmod") if rng.random() < domain.adv_rate else None
        kind = rng.random()
        if depth < 2 and kind < domain.clause_rate:
            verb = b.add(pick(lex.cverbs), "VERB", head, rel)
            obj = noun_phrase(b, verb, "obj") if rng.random() < 0.5 else None
            mark = b.add("ke", "SCONJ", None, "mark")
            if obj is not None and style.clause_after_object == "acl:relcl":
                inner = clause(b, obj, "acl:relcl", depth + 1)
            else:
                inner = clause(b, verb, "ccomp", depth + 1)
            b.set_head(mark, inner)
        elif kind < 0.7:
            verb = b.add(pick(lex.tverbs), "VERB", head, rel)
            obj = noun_phrase(b, verb, "obj")
            pps(b, verb, obj)
        else:
            verb = b.add(pick(lex.iverbs), "VERB", head, rel)
            pps(b, verb, subj if subj is not None else verb)
        for x, r in ((subj, "nsubj"), (adv, "advmod")):
            if x is not None:
                b.set_head(x, verb, r)
        return verb

    out = []
    for _ in range(n):
        b = _Builder()
        root = clause(b, 0, "root", 0)
        b.add(".", "PUNCT", root, "punct")
        # a PP headed by a noun that is really the verb (intransitive, no subject) -> obl
        for w in b.words:
            if w[3] == "nmod" and b.words[w[2] - 1][1] == "VERB":
                w[3] = style.verbal_pp_label
        out.append(_sentence([tuple(w) for w in b.words]))
    return out


def heterogeneous_pair(n_train: int = 500, n_dev: int = 150, seed: int = 0):
    """Two treebanks of the toy language differing in domain and style.

    Returns ``{"A": (train, dev), "B": (train, dev)}``.  B follows the
    older PP labelling and the relative-clause analysis; its sentences are
    shorter (about 10% fewer words) and its vocabulary is shifted.
    """
    lex = Lexicon.generate()
    styles = {"A": Style(), "B": Style(clause_after_object="acl:relcl", verbal_pp_label="nmod")}
    domains = {
        "A": Domain(lexicon_shift=0, pp_rate=0.6, clause_rate=0.2),
        "B": Domain(lexicon_shift=25, pp_rate=0.4, clause_rate=0.3, adj_rate=0.15, max_pps=1),
    }
    out = {}
    for k, name in enumerate(("A", "B")):
        train = toy_language(n_train, styles[name], domains[name], seed=1000 * seed + 2 * k, lexicon=lex)
        dev = toy_language(n_dev, styles[name], domains[name], seed=1000 * seed + 2 * k + 1, lexicon=lex)
        out[name] = (train, dev)
    return out
