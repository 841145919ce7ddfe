"""Arc-hybrid transition system with SWAP and a static-dynamic oracle.

Words are numbered 1..n and the artificial root is node ``n + 1``, sitting
at the end of the buffer.  Root attachment is done with LEFT_ARC from the
root node, so a completed derivation ends with an empty stack and a buffer
holding only the root.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class Kind(enum.IntEnum):
    SHIFT = 0
    SWAP = 1
    LEFT_ARC = 2
    RIGHT_ARC = 3


ARC_KINDS = (Kind.LEFT_ARC, Kind.RIGHT_ARC)


class IllegalTransition(ValueError):
    pass


class InvalidTree(ValueError):
    pass


class OracleStuck(RuntimeError):
    pass


@dataclass(frozen=True)
class Transition:
    kind: Kind
    label: int | None = None

    def __post_init__(self):
        if (self.kind in ARC_KINDS) != (self.label is not None):
            raise ValueError(f"{self.kind.name} label mismatch: {self.label!r}")

    def __str__(self):
        if self.label is None:
            return self.kind.name
        return f"{self.kind.name}({self.label})"


def n_outputs(n_labels: int) -> int:
    return 2 + 2 * n_labels


def output_index(t: Transition, n_labels: int) -> int:
    """Position of ``t`` in the scorer's output vector.

    Layout: SHIFT, SWAP, LEFT_ARC x labels, RIGHT_ARC x labels.
    """
    if t.kind == Kind.SHIFT:
        return 0
    if t.kind == Kind.SWAP:
        return 1
    if t.kind == Kind.LEFT_ARC:
        return 2 + t.label
    return 2 + n_labels + t.label


def transition_at(index: int, n_labels: int) -> Transition:
    if index == 0:
        return Transition(Kind.SHIFT)
    if index == 1:
        return Transition(Kind.SWAP)
    index -= 2
    if index < n_labels:
        return Transition(Kind.LEFT_ARC, index)
    index -= n_labels
    if index < n_labels:
        return Transition(Kind.RIGHT_ARC, index)
    raise IndexError(index)


def max_transitions(n: int) -> int:
    """Upper bound on derivation length.

    Each word pair can be inverted by SWAP at most once, and every SWAP puts
    a word back into the buffer, costing one more SHIFT: n arcs, n + k shifts
    and k <= n(n-1)/2 swaps.
    """
    return 2 * n + n * (n - 1)


class Configuration:
    """Parser state over one sentence of ``n`` words.

    ``head[d]`` / ``label[d]`` hold the arc assigned to word ``d`` (or -1).
    """

    __slots__ = ("n", "stack", "buffer", "head", "label")

    def __init__(self, n, stack, buffer, head, label):
        self.n = n
        self.stack = stack
        self.buffer = buffer
        self.head = head
        self.label = label

    @property
    def root(self) -> int:
        return self.n + 1

    @property
    def arcs(self) -> set[tuple[int, int, int]]:
        return {
            (self.head[d], d, self.label[d])
            for d in range(1, self.n + 1)
            if self.head[d] >= 0
        }

    def copy(self) -> "Configuration":
        return Configuration(
            self.n, list(self.stack), list(self.buffer), list(self.head), list(self.label)
        )

    def key(self):
        return tuple(self.stack), tuple(self.buffer)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.n == other.n
            and self.stack == other.stack
            and self.buffer == other.buffer
            and self.head == other.head
            and self.label == other.label
        )

    def __repr__(self):
        return f"Configuration(stack={self.stack}, buffer={self.buffer}, arcs={sorted(self.arcs)})"

    def can(self, kind: Kind) -> bool:
        stack, buffer = self.stack, self.buffer
        if kind == Kind.SHIFT:
            return bool(buffer) and buffer[0] != self.n + 1
        if kind == Kind.LEFT_ARC:
            return bool(stack) and bool(buffer)
        if kind == Kind.RIGHT_ARC:
            return len(stack) >= 2
        # SWAP: node indices are original word positions
        return bool(stack) and bool(buffer) and buffer[0] != self.n + 1 and stack[-1] < buffer[0]

    def step(self, t: Transition) -> None:
        """Apply ``t`` in place."""
        if not self.can(t.kind):
            raise IllegalTransition(f"{t} not legal in {self!r}")
        kind = t.kind
        if kind == Kind.SHIFT:
            self.stack.append(self.buffer.pop(0))
        elif kind == Kind.LEFT_ARC:
            d = self.stack.pop()
            self.head[d] = self.buffer[0]
            self.label[d] = t.label
        elif kind == Kind.RIGHT_ARC:
            d = self.stack.pop()
            self.head[d] = self.stack[-1]
            self.label[d] = t.label
        else:
            self.buffer.insert(1, self.stack.pop())


def initial_config(n: int) -> Configuration:
    if n < 1:
        raise ValueError("sentence length must be at least 1")
    return Configuration(n, [], list(range(1, n + 2)), [-1] * (n + 2), [-1] * (n + 2))


def legal(c: Configuration) -> set[Kind]:
    return {k for k in Kind if c.can(k)}


def apply(c: Configuration, t: Transition) -> Configuration:
    new = c.copy()
    new.step(t)
    return new


def is_terminal(c: Configuration) -> bool:
    return all(c.head[d] >= 0 for d in range(1, c.n + 1))


@dataclass
class GoldTree:
    """Gold heads (0 = root) and label ids for words 1..n, stored 0-based."""

    head: list[int]
    label: list[int]
    proj_order: list[int] = field(default=None)

    def __post_init__(self):
        self.head = [int(h) for h in self.head]
        self.label = [int(l) for l in self.label]
        if len(self.head) != len(self.label):
            raise InvalidTree("head and label arrays differ in length")
        problems = tree_problems(self.head)
        if problems:
            raise InvalidTree("; ".join(problems))
        if self.proj_order is None:
            self.proj_order = projective_order(self)

    @property
    def n(self) -> int:
        return len(self.head)

    def node_head(self, d: int) -> int:
        """Gold head of word ``d`` as a node index (root -> n + 1)."""
        h = self.head[d - 1]
        return self.n + 1 if h == 0 else h

    def dependents(self) -> list[list[int]]:
        """Node-indexed dependent lists, including the root node at n + 1."""
        deps = [[] for _ in range(self.n + 2)]
        for d in range(1, self.n + 1):
            deps[self.node_head(d)].append(d)
        return deps


def tree_problems(head: Sequence[int]) -> list[str]:
    """Well-formedness diagnostics for a 0-rooted head array (words 1..n)."""
    n = len(head)
    out = []
    dangling = [i + 1 for i, h in enumerate(head) if not 0 <= h <= n or h == i + 1]
    if dangling:
        out.append(f"dangling-head: {dangling}")
    roots = [i + 1 for i, h in enumerate(head) if h == 0]
    cyclic = set()
    for start in range(1, n + 1):
        seen = []
        node = start
        while 1 <= node <= n and node not in seen and node not in cyclic:
            seen.append(node)
            h = head[node - 1]
            if h == node:
                break
            node = h
        if 1 <= node <= n and node in seen:
            cyclic.update(seen[seen.index(node):])
    if cyclic:
        out.append(f"cycle: {sorted(cyclic)}")
    if not roots:
        out.append("zero-root")
    elif len(roots) > 1:
        out.append(f"multi-root: {roots}")
    return out


def projective_order(g: GoldTree) -> list[int]:
    """Position of each word (0-based list for words 1..n) in the in-order
    traversal of the gold tree: left dependents, the node, right dependents."""
    n = len(g.head)
    if tree_problems(g.head):
        raise InvalidTree("projective order requires a valid tree")
    deps = [[] for _ in range(n + 1)]
    for d in range(1, n + 1):
        deps[g.head[d - 1]].append(d)
    order = [0] * n
    pos = 0
    # iterative in-order walk; the artificial root (0) has only right deps
    stack: list[tuple[int, bool]] = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            if node:
                pos += 1
                order[node - 1] = pos
            continue
        left = [d for d in deps[node] if d < node]
        right = [d for d in deps[node] if d > node]
        for d in reversed(right):
            stack.append((d, False))
        stack.append((node, True))
        for d in reversed(left):
            stack.append((d, False))
    return order


def is_projective(head: Sequence[int]) -> bool:
    """Crossing-arcs test with the root at position 0."""
    spans = [(min(h, d), max(h, d)) for d, h in enumerate(head, start=1)]
    for a, b in spans:
        for c, d in spans:
            if a < c < b < d:
                return False
    return True


def _swap_mandated(c: Configuration, g: GoldTree) -> bool:
    if not c.can(Kind.SWAP):
        return False
    return g.proj_order[c.stack[-1] - 1] > g.proj_order[c.buffer[0] - 1]


def dynamic_costs(c: Configuration, g: GoldTree) -> dict[Kind, int]:
    """Cost of each legal transition kind in ``c`` with respect to ``g``.

    SHIFT/LEFT_ARC/RIGHT_ARC use the arc-hybrid arc-reachability counts;
    SWAP is supervised statically from the projective order.
    """
    costs: dict[Kind, int] = {}
    stack, buffer = c.stack, c.buffer
    root = c.n + 1
    gh = g.node_head
    if stack:
        s0 = stack[-1]
        h0 = gh(s0)
        deps_in_buffer = sum(1 for b in buffer if b != root and gh(b) == s0)
        if buffer:
            costs[Kind.LEFT_ARC] = (
                deps_in_buffer
                + (h0 in stack[:-1] or h0 in buffer[1:])
            )
        if len(stack) >= 2:
            costs[Kind.RIGHT_ARC] = deps_in_buffer + (h0 in buffer)
    if c.can(Kind.SHIFT):
        b0 = buffer[0]
        costs[Kind.SHIFT] = (
            sum(1 for s in stack if gh(s) == b0)
            + (gh(b0) in stack[:-1])
        )
    if c.can(Kind.SWAP):
        if _swap_mandated(c, g):
            costs = {k: max(1, v) for k, v in costs.items()}
            costs[Kind.SWAP] = 0
        else:
            costs[Kind.SWAP] = 1
    return costs


def zero_cost(c: Configuration, g: GoldTree) -> list[Transition]:
    """All zero-cost transitions, arc transitions carrying the gold label of s0."""
    out = []
    for kind, cost in sorted(dynamic_costs(c, g).items()):
        if cost:
            continue
        if kind in ARC_KINDS:
            out.append(Transition(kind, g.label[c.stack[-1] - 1]))
        else:
            out.append(Transition(kind))
    return out


def _complete(c: Configuration, g: GoldTree, deps, word: int) -> bool:
    return all(c.head[d] >= 0 for d in deps[word])


def oracle_next(c: Configuration, g: GoldTree, deps=None) -> Transition:
    """The static oracle's choice in configuration ``c``."""
    if deps is None:
        deps = g.dependents()
    if _swap_mandated(c, g):
        return Transition(Kind.SWAP)
    if c.stack:
        s0 = c.stack[-1]
        h0 = g.node_head(s0)
        if _complete(c, g, deps, s0):
            if c.buffer and c.buffer[0] == h0:
                return Transition(Kind.LEFT_ARC, g.label[s0 - 1])
            if len(c.stack) >= 2 and c.stack[-2] == h0:
                return Transition(Kind.RIGHT_ARC, g.label[s0 - 1])
    if c.can(Kind.SHIFT):
        return Transition(Kind.SHIFT)
    raise OracleStuck(f"no oracle transition in {c!r}")


def static_oracle(g: GoldTree) -> list[Transition]:
    deps = g.dependents()
    c = initial_config(g.n)
    out = []
    limit = max_transitions(g.n)
    while not is_terminal(c):
        if len(out) >= limit:
            raise OracleStuck("derivation exceeded the transition bound")
        t = oracle_next(c, g, deps)
        c.step(t)
        out.append(t)
    return out


def replay(n: int, transitions: Iterable[Transition]) -> Configuration:
    c = initial_config(n)
    for t in transitions:
        c.step(t)
    return c


def arcs_to_sentence(c: Configuration, sentence, labels: Sequence[str], fallback: str = "root"):
    """Copy of ``sentence`` carrying the heads and labels in ``c``.

    Words without an arc (decoding aborted) are attached to the root with
    the ``fallback`` label.
    """
    out = sentence.copy()
    for d, tok in enumerate(out.tokens, start=1):
        h = c.head[d]
        if h < 0:
            tok.head, tok.deprel = 0, fallback
        else:
            tok.head = 0 if h == c.n + 1 else h
            tok.deprel = labels[c.label[d]]
    return out


def trace_lines(n: int, transitions: Iterable[Transition]) -> list[str]:
    """Debug trace: one line per transition with the state before it."""
    c = initial_config(n)
    lines = []
    for i, t in enumerate(transitions, start=1):
        lines.append(f"{i}\t{t}\t{c.stack}\t{c.buffer}")
        c.step(t)
    return lines
