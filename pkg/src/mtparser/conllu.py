"""CoNLL-U reading and writing, tree validation, and treebank-tagged datasets."""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, TextIO

from .transition import tree_problems

log = logging.getLogger(__name__)

FIELDS = ("id", "form", "lemma", "upos", "xpos", "feats", "head", "deprel", "deps", "misc")


class ConlluError(ValueError):
    pass


class MalformedLine(ConlluError):
    pass


class BadHead(ConlluError):
    pass


@dataclass
class Token:
    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: str = "_"
    head: int | None = None
    deprel: str | None = None
    deps: str = "_"
    misc: str = "_"

    def to_line(self) -> str:
        return "\t".join(
            (
                str(self.id),
                self.form,
                self.lemma or "_",
                self.upos or "_",
                self.xpos or "_",
                self.feats or "_",
                "_" if self.head is None else str(self.head),
                self.deprel or "_",
                self.deps or "_",
                self.misc or "_",
            )
        )


class ExtraLine(NamedTuple):
    """A non-token line kept for round-tripping: multiword ranges, empty
    nodes, or comments inside a sentence.  ``anchor`` counts the tokens
    that precede it."""

    anchor: int
    id: str
    raw: str


@dataclass
class Sentence:
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)
    mwt_lines: list[ExtraLine] = field(default_factory=list)
    treebank_id: int | None = None

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def heads(self) -> list[int | None]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str | None]:
        return [t.deprel for t in self.tokens]

    def copy(self) -> "Sentence":
        return Sentence(
            [Token(**vars(t)) for t in self.tokens],
            list(self.comments),
            list(self.mwt_lines),
            self.treebank_id,
        )


def _parse_token(fields: list[str], lineno: int) -> Token:
    try:
        tid = int(fields[0])
    except ValueError:
        raise MalformedLine(f"line {lineno}: bad token id {fields[0]!r}") from None
    if tid < 1:
        raise MalformedLine(f"line {lineno}: token id must be positive")
    head: int | None
    if fields[6] == "_":
        head = None
    else:
        try:
            head = int(fields[6])
        except ValueError:
            raise BadHead(f"line {lineno}: head {fields[6]!r} is not an integer") from None
    deprel = None if fields[7] == "_" else fields[7]
    return Token(tid, fields[1], fields[2], fields[3], fields[4], fields[5], head, deprel, fields[8], fields[9])


def _finish(tokens, comments, extras, start_line) -> Sentence:
    n = len(tokens)
    for i, tok in enumerate(tokens, start=1):
        if tok.id != i:
            raise MalformedLine(f"sentence at line {start_line}: token ids not consecutive from 1 (got {tok.id} at position {i})")
        if tok.head is not None and (not 0 <= tok.head <= n or tok.head == tok.id):
            raise BadHead(f"sentence at line {start_line}: token {tok.id} has head {tok.head} out of range")
    return Sentence(tokens, comments, extras)


def iter_conllu(lines: Iterable[str]) -> Iterable[Sentence]:
    tokens: list[Token] = []
    comments: list[str] = []
    extras: list[ExtraLine] = []
    start = 1
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            if tokens or comments or extras:
                if not tokens:
                    raise MalformedLine(f"line {lineno}: sentence without tokens")
                yield _finish(tokens, comments, extras, start)
            tokens, comments, extras = [], [], []
            start = lineno + 1
            continue
        if line.startswith("#"):
            if tokens or extras:
                extras.append(ExtraLine(len(tokens), "#", line))
            else:
                comments.append(line)
            continue
        fields = line.split("\t")
        if len(fields) != 10:
            raise MalformedLine(f"line {lineno}: expected 10 tab-separated fields, got {len(fields)}")
        if "-" in fields[0] or "." in fields[0]:
            extras.append(ExtraLine(len(tokens), fields[0], line))
            continue
        tokens.append(_parse_token(fields, lineno))
    if tokens or comments or extras:
        if not tokens:
            raise MalformedLine(f"line {lineno}: sentence without tokens")
        yield _finish(tokens, comments, extras, start)


def parse_conllu(text: str | TextIO) -> list[Sentence]:
    if isinstance(text, str):
        text = io.StringIO(text)
    return list(iter_conllu(text))


def sentence_lines(s: Sentence) -> list[str]:
    out = list(s.comments)
    extras = sorted(s.mwt_lines, key=lambda e: e.anchor)
    j = 0
    for i, tok in enumerate(s.tokens):
        while j < len(extras) and extras[j].anchor <= i:
            out.append(extras[j].raw)
            j += 1
        out.append(tok.to_line())
    out.extend(e.raw for e in extras[j:])
    return out


def write_conllu(sentences: Iterable[Sentence], stream: TextIO | None = None) -> str:
    chunks = []
    for s in sentences:
        chunks.append("\n".join(sentence_lines(s)) + "\n\n")
    text = "".join(chunks)
    if stream is not None:
        stream.write(text)
    return text


def read_conllu(path: str | os.PathLike) -> list[Sentence]:
    with open(path, encoding="utf-8") as f:
        return list(iter_conllu(f))


def validate_tree(s: Sentence) -> list[str]:
    """Tree well-formedness problems for ``s``; empty when it is a single-rooted tree.

    Missing heads count as dangling.
    """
    heads = [-1 if t.head is None else t.head for t in s.tokens]
    return tree_problems(heads)


class TreebankRegistry:
    """Ordered, duplicate-free treebank names; a name's position is its id."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list[str] = []
        self._paths: dict[str, str] = {}
        for name in names:
            self.register(name)

    def register(self, name: str, path: str | None = None) -> int:
        if name in self.names:
            old = self._paths.get(name)
            if path is not None and old is not None and old != path:
                log.warning("treebank %r already registered from %s; also loading %s", name, old, path)
            return self.names.index(name)
        self.names.append(name)
        if path is not None:
            self._paths[name] = path
        return len(self.names) - 1

    def id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown treebank {name!r}; known: {', '.join(self.names)}") from None

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.names

    def __eq__(self, other):
        if isinstance(other, TreebankRegistry):
            return self.names == other.names
        return NotImplemented

    def __repr__(self):
        return f"TreebankRegistry({self.names!r})"


@dataclass
class Dataset:
    sentences: list[Sentence]
    registry: TreebankRegistry

    def __post_init__(self):
        for s in self.sentences:
            if s.treebank_id is None or not 0 <= s.treebank_id < len(self.registry):
                raise ValueError(f"sentence treebank id {s.treebank_id!r} not in {self.registry!r}")

    def __len__(self):
        return len(self.sentences)

    def __add__(self, other: "Dataset") -> "Dataset":
        if other.registry is not self.registry and other.registry != self.registry:
            raise ValueError("datasets use different treebank registries")
        return Dataset(self.sentences + other.sentences, self.registry)

    def by_treebank(self) -> dict[int, list[Sentence]]:
        out: dict[int, list[Sentence]] = {}
        for s in self.sentences:
            out.setdefault(s.treebank_id, []).append(s)
        return out


def tag(sentences: Iterable[Sentence], treebank_id: int) -> list[Sentence]:
    out = []
    for s in sentences:
        s.treebank_id = treebank_id
        out.append(s)
    return out


def load_treebank(path: str | os.PathLike, name: str, registry: TreebankRegistry) -> Dataset:
    tb = registry.register(name, str(Path(path).resolve()))
    return Dataset(tag(read_conllu(path), tb), registry)


def load_ud_directory(directory: str | os.PathLike, name: str, registry: TreebankRegistry) -> dict[str, Dataset]:
    """Load ``*-ud-{train,dev,test}.conllu`` files from a UD-style directory."""
    directory = Path(directory)
    tb = registry.register(name, str(directory.resolve()))
    out = {}
    for split in ("train", "dev", "test"):
        found = sorted(directory.glob(f"*-ud-{split}.conllu")) or sorted(directory.glob(f"*{split}*.conllu"))
        if found:
            out[split] = Dataset(tag(read_conllu(found[0]), tb), registry)
    if not out:
        raise FileNotFoundError(f"no CoNLL-U splits found in {directory}")
    return out
