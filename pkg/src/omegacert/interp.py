"""Direct interpreter for program ASTs, independent of the PTS compiler.

Used to cross-check compilation: both the exact terminal distribution
(discrete programs) and sampled runs are produced from the tree itself.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .conditions import Formula
from .distributions import Distribution
from .ppl import Assign, If, ProbIf, ProgramAst, Sample, Skip, While
from .pts import Pts, PtsState


class NonTermination(RuntimeError):
    pass


def _initial(ast: ProgramAst) -> dict:
    combos = [((), Fraction(1))]
    for v in ast.variables:
        d = ast.init.get(v, Fraction(0))
        outs = d.outcomes() if isinstance(d, Distribution) else [(Fraction(d), Fraction(1))]
        combos = [(vals + (x,), p * q) for vals, p in combos for x, q in outs]
    dist: dict = {}
    for vals, p in combos:
        dist[vals] = dist.get(vals, Fraction(0)) + p
    return dist


class _Exact:
    def __init__(self, ast: ProgramAst, max_iterations: int):
        self.vars = list(ast.variables)
        self.max_iterations = max_iterations

    def env(self, vals):
        return dict(zip(self.vars, vals))

    def set(self, vals, var, x):
        i = self.vars.index(var)
        return vals[:i] + (x,) + vals[i + 1:]

    def run(self, stmts, dist: dict) -> dict:
        for s in stmts:
            dist = self.stmt(s, dist)
        return dist

    def stmt(self, s, dist: dict) -> dict:
        out: dict = {}

        def put(vals, p):
            if p:
                out[vals] = out.get(vals, Fraction(0)) + p

        if isinstance(s, Skip):
            return dist
        if isinstance(s, Assign):
            for vals, p in dist.items():
                put(self.set(vals, s.var, Fraction(s.expr.evaluate(self.env(vals)))), p)
            return out
        if isinstance(s, Sample):
            for vals, p in dist.items():
                for x, q in s.dist.outcomes():
                    put(self.set(vals, s.var, x), p * q)
            return out
        if isinstance(s, ProbIf):
            for part, w in ((s.then, s.p), (s.orelse, 1 - s.p)):
                if w:
                    for vals, p in self.run(part, {v: p * w for v, p in dist.items()}).items():
                        put(vals, p)
            return out
        if isinstance(s, If):
            yes = {v: p for v, p in dist.items() if s.cond.holds(self.env(v))}
            no = {v: p for v, p in dist.items() if v not in yes}
            for part, sub in ((s.then, yes), (s.orelse, no)):
                if sub:
                    for vals, p in self.run(part, sub).items():
                        put(vals, p)
            return out
        if isinstance(s, While):
            live = dist
            for _ in range(self.max_iterations):
                if not live:
                    return out
                if isinstance(s.cond, Formula):
                    stay = {v: p for v, p in live.items() if s.cond.holds(self.env(v))}
                    for v, p in live.items():
                        if v not in stay:
                            put(v, p)
                else:
                    c = Fraction(s.cond)
                    stay = {v: p * c for v, p in live.items()} if c else {}
                    for v, p in live.items():
                        put(v, p * (1 - c))
                live = self.run(s.body, stay) if stay else {}
            raise NonTermination(f"loop at line {s.pos.line} still running after {self.max_iterations} iterations")
        raise TypeError(f"unknown statement {s!r}")


def ast_terminal_distribution(ast: ProgramAst, max_iterations: int = 10_000) -> dict[tuple, Fraction]:
    """Exact distribution of final valuations (variable order of the program)."""
    return _Exact(ast, max_iterations).run(ast.body, _initial(ast))


def pts_terminal_distribution(pts: Pts, max_steps: int = 100_000) -> dict[tuple, Fraction]:
    """Exact distribution of valuations on reaching the terminal location."""
    from .chain import initial_distribution, pts_successors

    live = {PtsState(pts.init, vals): p for vals, p in initial_distribution(pts).items()}
    done: dict = {}
    for _ in range(max_steps):
        nxt: dict = {}
        for s, p in live.items():
            if s.loc == pts.out:
                done[s.vals] = done.get(s.vals, Fraction(0)) + p
                continue
            for s2, q in pts_successors(pts, s):
                nxt[s2] = nxt.get(s2, Fraction(0)) + p * q
        live = nxt
        if not live:
            return done
    raise NonTermination(f"mass still outside the terminal location after {max_steps} steps")


def sample_run(ast: ProgramAst, rng: np.random.Generator, max_steps: int = 100_000) -> tuple:
    """One sampled execution; returns the final valuation as floats."""
    env = {}
    for v in ast.variables:
        d = ast.init.get(v, Fraction(0))
        env[v] = d.sample(rng) if isinstance(d, Distribution) else float(d)
    budget = [max_steps]

    def run(stmts):
        for s in stmts:
            budget[0] -= 1
            if budget[0] < 0:
                raise NonTermination("step budget exhausted")
            if isinstance(s, Assign):
                env[s.var] = float(s.expr.evaluate_float(env))
            elif isinstance(s, Sample):
                env[s.var] = s.dist.sample(rng)
            elif isinstance(s, ProbIf):
                run(s.then if rng.random() < float(s.p) else s.orelse)
            elif isinstance(s, If):
                run(s.then if s.cond.holds(env) else s.orelse)
            elif isinstance(s, While):
                while (s.cond.holds(env) if isinstance(s.cond, Formula) else rng.random() < float(s.cond)):
                    run(s.body)
                    budget[0] -= 1
                    if budget[0] < 0:
                        raise NonTermination("step budget exhausted")

    run(ast.body)
    return tuple(env[v] for v in ast.variables)


__all__ = ["NonTermination", "ast_terminal_distribution", "pts_terminal_distribution", "sample_run"]
