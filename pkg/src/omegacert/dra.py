"""Deterministic Rabin automata over polynomial-comparison propositions.

File format (line oriented, ``#`` starts a comment)::

    # property: F(x=1) & F(y>0)
    ap a := x = 1;
    ap b := y > 0;
    states 4;
    initial 0;
    edge 0 : !a & !b -> 0;
    pair E={} F={3};

Guards are boolean formulas over proposition names with ``!``, ``&``, ``|``,
parentheses and the constants ``true``/``1`` and ``false``/``0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import conditions as cnd
from .conditions import Constraint

MAX_APS = 16


class DraError(ValueError):
    pass


# -- guard formulas over proposition names -----------------------------------


@dataclass(frozen=True)
class GConst:
    value: bool


@dataclass(frozen=True)
class GAp:
    name: str


@dataclass(frozen=True)
class GNot:
    arg: object


@dataclass(frozen=True)
class GAnd:
    args: tuple


@dataclass(frozen=True)
class GOr:
    args: tuple


def guard_holds(g, letter: frozenset) -> bool:
    if isinstance(g, GConst):
        return g.value
    if isinstance(g, GAp):
        return g.name in letter
    if isinstance(g, GNot):
        return not guard_holds(g.arg, letter)
    if isinstance(g, GAnd):
        return all(guard_holds(a, letter) for a in g.args)
    return any(guard_holds(a, letter) for a in g.args)


def guard_names(g) -> set[str]:
    if isinstance(g, GAp):
        return {g.name}
    if isinstance(g, GNot):
        return guard_names(g.arg)
    if isinstance(g, (GAnd, GOr)):
        return set().union(*(guard_names(a) for a in g.args))
    return set()


def format_guard(g, parent: int = 0) -> str:
    # precedence: or=1, and=2, not/atom=3
    if isinstance(g, GConst):
        return "true" if g.value else "false"
    if isinstance(g, GAp):
        return g.name
    if isinstance(g, GNot):
        inner = format_guard(g.arg, 3)
        return "!" + inner
    if isinstance(g, GAnd):
        s = " & ".join(format_guard(a, 2) for a in g.args)
        return f"({s})" if parent > 2 else s
    s = " | ".join(format_guard(a, 1) for a in g.args)
    return f"({s})" if parent > 1 else s


_GUARD_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([01])|(.))")


def parse_guard(text: str):
    toks = []
    for m in _GUARD_TOKEN.finditer(text):
        if m.group(1):
            toks.append(m.group(1))
        elif m.group(2):
            toks.append(m.group(2))
        elif m.group(3) and not m.group(3).isspace():
            toks.append(m.group(3))
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take():
        nonlocal pos
        pos += 1
        return toks[pos - 1]

    def disj():
        parts = [conj()]
        while peek() == "|":
            take()
            parts.append(conj())
        return parts[0] if len(parts) == 1 else GOr(tuple(parts))

    def conj():
        parts = [unary()]
        while peek() == "&":
            take()
            parts.append(unary())
        return parts[0] if len(parts) == 1 else GAnd(tuple(parts))

    def unary():
        t = peek()
        if t is None:
            raise DraError(f"unexpected end of guard {text!r}")
        if t == "!":
            take()
            return GNot(unary())
        if t == "(":
            take()
            g = disj()
            if peek() != ")":
                raise DraError(f"missing ')' in guard {text!r}")
            take()
            return g
        take()
        if t in ("true", "1"):
            return GConst(True)
        if t in ("false", "0"):
            return GConst(False)
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", t):
            return GAp(t)
        raise DraError(f"unexpected {t!r} in guard {text!r}")

    g = disj()
    if pos != len(toks):
        raise DraError(f"trailing input in guard {text!r}")
    return g


def guard_to_formula(g, aps: Mapping[str, Constraint]) -> cnd.Formula:
    """Replace proposition names by their comparisons."""
    if isinstance(g, GConst):
        return cnd.TrueF() if g.value else cnd.FalseF()
    if isinstance(g, GAp):
        return cnd.Atom(aps[g.name])
    if isinstance(g, GNot):
        return cnd.Not(guard_to_formula(g.arg, aps))
    parts = tuple(guard_to_formula(a, aps) for a in g.args)
    return cnd.And(parts) if isinstance(g, GAnd) else cnd.Or(parts)


# -- automaton ----------------------------------------------------------------


@dataclass(frozen=True)
class AtomicProposition:
    name: str
    constraint: Constraint
    source: str = ""  # comparison as written, kept for printing

    def holds(self, env) -> bool:
        return self.constraint.holds(env)


@dataclass(frozen=True)
class RabinPair:
    E: frozenset
    F: frozenset
    index: int = 0


@dataclass(frozen=True)
class Edge:
    src: int
    guard: object
    dst: int


@dataclass(frozen=True)
class Dra:
    aps: tuple  # AtomicProposition, ...
    n_states: int
    initial: int
    edges: tuple  # Edge, ...
    pairs: tuple  # RabinPair, ...
    ltl: str = ""
    _table: dict = field(default=None, compare=False, repr=False)

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def ap_names(self) -> list[str]:
        return [a.name for a in self.aps]

    def ap_map(self) -> dict[str, Constraint]:
        return {a.name: a.constraint for a in self.aps}

    def edges_from(self, q: int) -> list[Edge]:
        return [e for e in self.edges if e.src == q]

    def letter_mask(self, letter: Iterable[str]) -> int:
        s = set(letter)
        return sum(1 << i for i, a in enumerate(self.aps) if a.name in s)

    def mask_letter(self, mask: int) -> frozenset:
        return frozenset(a.name for i, a in enumerate(self.aps) if mask >> i & 1)


def validate_dra(dra: Dra) -> Dra:
    """Check determinism, completeness and pair disjointness; build the step table."""
    names = dra.ap_names
    if len(set(names)) != len(names):
        raise DraError("duplicate proposition name")
    if len(names) > MAX_APS:
        raise DraError(f"at most {MAX_APS} propositions supported")
    if not 0 <= dra.initial < dra.n_states:
        raise DraError(f"initial state {dra.initial} out of range")
    for e in dra.edges:
        for q in (e.src, e.dst):
            if not 0 <= q < dra.n_states:
                raise DraError(f"edge state {q} out of range")
        unknown = guard_names(e.guard) - set(names)
        if unknown:
            raise DraError(f"unknown proposition(s) {sorted(unknown)} in edge from {e.src}")
    for i, p in enumerate(dra.pairs):
        if p.E & p.F:
            raise DraError(f"pair {i}: E and F overlap on {sorted(p.E & p.F)}")
        if any(not 0 <= q < dra.n_states for q in p.E | p.F):
            raise DraError(f"pair {i}: state out of range")
    table: dict = {}
    for q in dra.states:
        out = dra.edges_from(q)
        for mask in range(1 << len(names)):
            letter = dra.mask_letter(mask)
            hits = [e for e in out if guard_holds(e.guard, letter)]
            if not hits:
                raise DraError(f"state {q} incomplete: no edge for letter {sorted(letter)}")
            if len(hits) > 1:
                a, b = hits[0], hits[1]
                raise DraError(
                    f"state {q} nondeterministic: guards {format_guard(a.guard)!r} and "
                    f"{format_guard(b.guard)!r} both hold for letter {sorted(letter)}"
                )
            table[q, mask] = hits[0].dst
    object.__setattr__(dra, "_table", table)
    return dra


def make_dra(aps, n_states, initial, edges, pairs, ltl="") -> Dra:
    pairs = tuple(RabinPair(frozenset(E), frozenset(F), i) for i, (E, F) in enumerate(pairs))
    return validate_dra(Dra(tuple(aps), n_states, initial, tuple(edges), pairs, ltl))


def _parse_ap(name: str, text: str) -> AtomicProposition:
    from .ppl import ParseError, parse_condition

    try:
        f = parse_condition(text)
    except ParseError as e:
        raise DraError(f"proposition {name}: {e}") from None
    if not isinstance(f, cnd.Atom):
        raise DraError(f"proposition {name} must be a single comparison (>=, >, <=, <, =)")
    return AtomicProposition(name, f.c, text.strip())


def _parse_set(text: str) -> frozenset:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise DraError(f"expected a state set, got {text!r}")
    body = text[1:-1].strip()
    if not body:
        return frozenset()
    return frozenset(int(t) for t in re.split(r"[,\s]+", body) if t)


def parse_dra(source: str, vocabulary: Iterable[str] | None = None) -> Dra:
    """Parse and validate a DRA; ``vocabulary`` restricts proposition variables."""
    aps, edges, pairs = [], [], []
    n_states = initial = None
    prop = ""
    statements = []
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            m = re.match(r"#\s*property:\s*(.*)$", line)
            if m:
                prop = m.group(1).strip()
            continue
        line = line.split("#", 1)[0]
        for part in line.split(";"):
            if part.strip():
                statements.append((lineno, part.strip()))
    for lineno, st in statements:
        try:
            if st.startswith("ap "):
                m = re.fullmatch(r"ap\s+([A-Za-z_][A-Za-z0-9_]*)\s*:=\s*(.+)", st)
                if not m:
                    raise DraError("expected 'ap <name> := <comparison>'")
                aps.append(_parse_ap(m.group(1), m.group(2)))
            elif st.startswith("states"):
                n_states = int(st.split()[1])
            elif st.startswith("initial"):
                initial = int(st.split()[1])
            elif st.startswith("edge"):
                m = re.fullmatch(r"edge\s+(\d+)\s*:\s*(.+?)\s*->\s*(\d+)", st)
                if not m:
                    raise DraError("expected 'edge <q> : <guard> -> <q>'")
                edges.append(Edge(int(m.group(1)), parse_guard(m.group(2)), int(m.group(3))))
            elif st.startswith("pair"):
                m = re.fullmatch(r"pair\s+E\s*=\s*(\{[^}]*\})\s*F\s*=\s*(\{[^}]*\})", st)
                if not m:
                    raise DraError("expected 'pair E={...} F={...}'")
                pairs.append((_parse_set(m.group(1)), _parse_set(m.group(2))))
            else:
                raise DraError(f"unknown statement {st!r}")
        except (DraError, ValueError) as e:
            raise DraError(f"line {lineno}: {e}") from None
    if n_states is None or initial is None:
        raise DraError("missing 'states' or 'initial' declaration")
    if not pairs:
        raise DraError("at least one Rabin pair is required")
    if vocabulary is not None:
        vocab = set(vocabulary)
        for a in aps:
            extra = a.constraint.variables() - vocab
            if extra:
                raise DraError(f"proposition {a.name} uses undeclared variable(s) {sorted(extra)}")
    return make_dra(aps, n_states, initial, edges, pairs, prop)


def _format_set(s) -> str:
    return "{" + ", ".join(str(q) for q in sorted(s)) + "}"


def print_dra(dra: Dra) -> str:
    lines = []
    if dra.ltl:
        lines.append(f"# property: {dra.ltl}")
    for a in dra.aps:
        lines.append(f"ap {a.name} := {a.source or cnd.Atom(a.constraint)};")
    lines.append(f"states {dra.n_states};")
    lines.append(f"initial {dra.initial};")
    for e in dra.edges:
        lines.append(f"edge {e.src} : {format_guard(e.guard)} -> {e.dst};")
    for p in dra.pairs:
        lines.append(f"pair E={_format_set(p.E)} F={_format_set(p.F)};")
    return "\n".join(lines) + "\n"


def evaluate_label(aps: Iterable[AtomicProposition], env: Mapping) -> frozenset:
    """Names of the propositions true at a valuation."""
    return frozenset(a.name for a in aps if a.holds(env))


def dra_step(dra: Dra, q: int, letter) -> int:
    """Successor of ``q`` on a letter (a set of names or a bit mask)."""
    mask = letter if isinstance(letter, int) else dra.letter_mask(letter)
    try:
        return dra._table[q, mask]
    except KeyError:
        raise DraError(f"no transition from {q} (automaton not validated?)") from None


def label_mask(dra: Dra, env: Mapping) -> int:
    return sum(1 << i for i, a in enumerate(dra.aps) if a.holds(env))


def universal_dra() -> Dra:
    return make_dra([], 1, 0, [Edge(0, GConst(True), 0)], [((), (0,))], "true")
