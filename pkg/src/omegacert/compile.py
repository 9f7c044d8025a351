"""Compile a program AST into a probabilistic transition system.

Locations are cut points: the program entry, every ``while`` head, every
``if`` whose condition reads a freshly sampled value, and the exit.  The
loop-free code between two cut points is executed symbolically, so one PTS
step covers a whole loop iteration.  Deterministic tests met on the way are
pushed up front as guards on the pre-state, forming a decision tree whose
leaves partition the valuation space; each leaf becomes one transition with
the probabilistic paths of that leaf as forks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import conditions as cnd
from .conditions import Constraint, Formula
from .distributions import Distribution
from .ppl import Assign, If, ProbIf, ProgramAst, Sample, Skip, While, _formula_vars
from .pts import Fork, InitSpec, ModelError, Pts, Transition
from .poly import Poly


class CompileError(ValueError):
    pass


def substitute_formula(f: Formula, env: dict) -> Formula:
    """Substitute variables and fold constant atoms."""
    if isinstance(f, cnd.Atom):
        p = f.c.poly.substitute(env)
        if p.is_constant():
            v = p.constant_term()
            ok = v >= 0 if f.c.op == cnd.GE else (v > 0 if f.c.op == cnd.GT else v == 0)
            return cnd.TrueF() if ok else cnd.FalseF()
        return cnd.Atom(Constraint.make(p, f.c.op))
    if isinstance(f, cnd.Not):
        inner = substitute_formula(f.f, env)
        if isinstance(inner, cnd.TrueF):
            return cnd.FalseF()
        if isinstance(inner, cnd.FalseF):
            return cnd.TrueF()
        return cnd.Not(inner)
    if isinstance(f, cnd.And):
        parts = [substitute_formula(p, env) for p in f.parts]
        if any(isinstance(p, cnd.FalseF) for p in parts):
            return cnd.FalseF()
        parts = [p for p in parts if not isinstance(p, cnd.TrueF)]
        return cnd.TrueF() if not parts else (parts[0] if len(parts) == 1 else cnd.And(tuple(parts)))
    if isinstance(f, cnd.Or):
        parts = [substitute_formula(p, env) for p in f.parts]
        if any(isinstance(p, cnd.TrueF) for p in parts):
            return cnd.TrueF()
        parts = [p for p in parts if not isinstance(p, cnd.FalseF)]
        return cnd.FalseF() if not parts else (parts[0] if len(parts) == 1 else cnd.Or(tuple(parts)))
    return f


@dataclass
class _Path:
    tests: tuple  # ((Formula, bool), ...)
    prob: Fraction
    env: dict
    dest: str


class _Compiler:
    def __init__(self, ast: ProgramAst):
        self.ast = ast
        self.variables = list(ast.variables)
        self.locations: dict[str, tuple] = {}  # name -> continuation
        self.order: list[str] = []
        self.node_loc: dict[int, str] = {}
        self.sample_names: dict[int, str] = {}
        self.samples: dict[str, Distribution] = {}
        loops = [s for s in ast.walk() if isinstance(s, While)]
        self.loop_names = {}
        for i, w in enumerate(loops, 1):
            self.loop_names[w.sid] = w.label or f"loop{i}"
        for i, s in enumerate((s for s in ast.walk() if isinstance(s, Sample)), 1):
            self.sample_names[s.sid] = f"r{i}"
            self.samples[f"r{i}"] = s.dist
        self.cut_count = 0

    def location_for(self, node, rest: tuple) -> str:
        if node.sid in self.node_loc:
            return self.node_loc[node.sid]
        if isinstance(node, While):
            name = self.loop_names[node.sid]
        else:
            self.cut_count += 1
            name = f"cut{self.cut_count}"
        self.node_loc[node.sid] = name
        self.locations[name] = (node,) + rest
        self.order.append(name)
        return name

    def explore(self, stmts: tuple, env: dict, tests: tuple, prob: Fraction, entry: bool):
        if prob == 0:
            return
        if not stmts:
            yield _Path(tests, prob, env, "out")
            return
        s, rest = stmts[0], stmts[1:]
        if isinstance(s, Skip):
            yield from self.explore(rest, env, tests, prob, False)
        elif isinstance(s, Assign):
            env2 = dict(env)
            env2[s.var] = s.expr.substitute(env)
            yield from self.explore(rest, env2, tests, prob, False)
        elif isinstance(s, Sample):
            env2 = dict(env)
            env2[s.var] = Poly.var(self.sample_names[s.sid])
            yield from self.explore(rest, env2, tests, prob, False)
        elif isinstance(s, ProbIf):
            yield from self.explore(s.then + rest, env, tests, prob * s.p, False)
            yield from self.explore(s.orelse + rest, env, tests, prob * (1 - s.p), False)
        elif isinstance(s, If):
            cond = substitute_formula(s.cond, env)
            if not entry and _formula_vars(cond) - set(self.variables):
                yield _Path(tests, prob, env, self.location_for(s, rest))
                return
            yield from self._branch(cond, s.then + rest, s.orelse + rest, env, tests, prob)
        elif isinstance(s, While):
            if not entry:
                yield _Path(tests, prob, env, self.location_for(s, rest))
                return
            loop = s.body + (s,) + rest
            if isinstance(s.cond, Fraction):
                yield from self.explore(loop, env, tests, prob * s.cond, False)
                yield from self.explore(rest, env, tests, prob * (1 - s.cond), False)
            else:
                cond = substitute_formula(s.cond, env)
                yield from self._branch(cond, loop, rest, env, tests, prob)
        else:
            raise CompileError(f"unknown statement {s!r}")

    def _branch(self, cond, then, orelse, env, tests, prob):
        if isinstance(cond, cnd.TrueF):
            yield from self.explore(then, env, tests, prob, False)
            return
        if isinstance(cond, cnd.FalseF):
            yield from self.explore(orelse, env, tests, prob, False)
            return
        known = dict(tests)
        for polarity, branch in ((True, then), (False, orelse)):
            if cond in known and known[cond] != polarity:
                continue
            t2 = tests if cond in known else tests + ((cond, polarity),)
            if cond not in known and not _tests_feasible(t2):
                continue
            yield from self.explore(branch, env, t2, prob, False)


def _tests_feasible(tests) -> bool:
    f = cnd.And(tuple(c if pol else cnd.Not(c) for c, pol in tests))
    return any(cnd.feasible(conj) for conj in cnd.dnf(f))


def _decision_tree(paths: list[_Path], decided: tuple, implied: tuple = ()):
    """Split paths on their test formulas; yields (decided literals, paths).

    A test whose outcome is forced by the literals decided so far is
    recorded in ``implied`` and kept out of the guard.
    """
    known = dict(decided + implied)
    for p in paths:
        for f, _ in p.tests:
            if f not in known:
                sides = [pol for pol in (True, False) if _tests_feasible(decided + implied + ((f, pol),))]
                for pol in sides:
                    sub = [q for q in paths if dict(q.tests).get(f, pol) == pol]
                    if len(sides) == 1:
                        yield from _decision_tree(sub, decided, implied + ((f, pol),))
                    else:
                        yield from _decision_tree(sub, decided + ((f, pol),), implied)
                return
    yield decided, paths


def _guard_formula(decided) -> Formula:
    lits = [f if pol else cnd.Not(f) for f, pol in decided]
    if not lits:
        return cnd.TrueF()
    return lits[0] if len(lits) == 1 else cnd.And(tuple(lits))


def compile_to_pts(ast: ProgramAst) -> Pts:
    """Build the PTS; transitions out of each location partition its valuations."""
    comp = _Compiler(ast)
    variables = comp.variables
    body = ast.body
    if body and isinstance(body[0], While):
        init = comp.location_for(body[0], body[1:])
    else:
        init = "init"
        comp.locations[init] = body
        comp.order.insert(0, init)
    identity = {v: Poly.var(v) for v in variables}
    transitions: list[Transition] = []
    done: set[str] = set()
    while True:
        pending = [loc for loc in comp.order if loc not in done]
        if not pending:
            break
        loc = pending[0]
        done.add(loc)
        paths = list(comp.explore(comp.locations[loc], identity, (), Fraction(1), True))
        for decided, leaf in _decision_tree(paths, ()):
            merged: dict = {}
            for p in leaf:
                update = tuple((v, p.env.get(v, Poly.var(v))) for v in variables)
                key = (update, p.dest)
                merged[key] = merged.get(key, Fraction(0)) + p.prob
            forks = tuple(Fork(pr, upd, dest) for (upd, dest), pr in merged.items())
            transitions.append(Transition(loc, _guard_formula(decided), forks))
    locations = tuple(comp.order) + ("out",)
    aliases = {"init": init, "out": "out"}
    invariants = []
    for label, f in ast.invariants.items():
        loc = aliases.get(label, label)
        if loc not in locations:
            raise CompileError(f"invariant for unknown location {label!r}")
        conjs = cnd.dnf(f)
        if len(conjs) != 1:
            raise CompileError(f"invariant({label}) must be a conjunction of comparisons")
        invariants.append((loc, cnd.conj_and(conjs[0])))
    init_spec = make_init_spec(ast)
    try:
        return Pts(
            locations=locations,
            init=init,
            out="out",
            variables=tuple(variables),
            sample_vars=tuple(sorted(comp.samples.items())),
            transitions=tuple(transitions),
            invariants=tuple(sorted(invariants)),
            init_spec=init_spec,
        )
    except ModelError as e:
        raise CompileError(str(e)) from None


def make_init_spec(ast: ProgramAst) -> InitSpec:
    dists = []
    support: list[Constraint] = []
    for v in ast.variables:
        d = ast.init.get(v, Fraction(0))
        dists.append((v, d))
        x = Poly.var(v)
        if isinstance(d, Distribution):
            lo, hi = d.support_bounds()
            support.append(Constraint.make(x - lo, cnd.GE))
            support.append(Constraint.make(Poly.const(hi) - x, cnd.GE))
        else:
            support.append(Constraint.make(x - d, cnd.EQ))
    if ast.support is not None:
        conjs = cnd.dnf(ast.support)
        if len(conjs) != 1:
            raise CompileError("support must be a conjunction of comparisons")
        support = list(conjs[0])
        point = {v: d for v, d in dists if not isinstance(d, Distribution)}
        if len(point) == len(dists) and not cnd.conj_holds(support, point):
            raise CompileError("initial constants lie outside the declared support")
    if not cnd.feasible(support):
        raise CompileError("initial support polytope is empty")
    return InitSpec(tuple(dists), cnd.conj_and(support))
