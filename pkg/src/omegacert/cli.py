"""Command line entry point: verify, tpi, simulate, oracle, check-cert."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from fractions import Fraction
from pathlib import Path

from .certgen import MODES, TemplateError, mode_kind
from .chain import ChainError, build_automaton_chain, build_finite_chain, exact_probability
from .compile import CompileError, compile_to_pts
from .distributions import UnsupportedDistribution
from .dra import DraError, parse_dra, universal_dra
from .martingale import MartingaleConfig, martingale_check
from .ppl import ParseError, parse_condition, parse_expression, parse_program
from .product import ProductError, ProductSystem
from .pts import ModelError
from .simulate import ACCEPT, COUNTER, FORMULA, SimConfig, accept_system, simulate_event
from .solver import Certificate, DEFAULT_ALPHA_GRID
from .verify import (
    NO_CERTIFICATE, BoundInterval, ConjunctionError, VerificationTask, compute_tpd, conjoin_dras, verify_property,
)

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_SOLVER = 0, 1, 2, 3
COLUMNS = ("Task", "Property", "Sim.", "L.B.", "U.B.", "E.d.", "F.d.", "k", "time")
MODEL_ERRORS = (ParseError, CompileError, DraError, ModelError, ProductError, TemplateError,
                ChainError, UnsupportedDistribution, ConjunctionError)
BACKENDS = ("highs",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _alpha_grid(text: str) -> tuple:
    return tuple(_fraction(a) for a in text.split(",") if a.strip())


def _state_set(text: str) -> frozenset:
    return frozenset(int(q) for q in text.replace("{", "").replace("}", "").split(",") if q.strip())


def _domain(text: str):
    name, _, body = text.partition("=")
    if not name or not body:
        raise argparse.ArgumentTypeError(f"domain must look like var=lo:hi or var=a,b,c (got {text!r})")
    if ":" in body:
        lo, hi = body.split(":", 1)
        return name.strip(), (Fraction(lo), Fraction(hi))
    return name.strip(), frozenset(Fraction(v) for v in body.split(","))


def _add_model_args(p, dra=True):
    p.add_argument("--program", required=True, help="program file")
    if dra:
        p.add_argument("--dra", help="automaton file for the property")


def _add_solver_args(p):
    p.add_argument("--degree", "-d", type=int, default=2, help="template degree for both sides")
    p.add_argument("--degree-e", type=int, help="template degree for the persistence side")
    p.add_argument("--degree-f", type=int, help="template degree for the recurrence side")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha-grid", type=_alpha_grid, default=DEFAULT_ALPHA_GRID)
    p.add_argument("--lambda", dest="lam", type=_fraction, default=Fraction(1))
    p.add_argument("--relaxation-degree", type=int)
    p.add_argument("--conservative", action="store_true")
    p.add_argument("--dump-lp", type=Path, help="directory for LP files")
    p.add_argument("--dump-cert", type=Path, help="directory for certificate JSON files")


def _add_sim_args(p, samples=100_000):
    p.add_argument("--samples", type=int, default=samples)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="omegacert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="certified bounds for one property")
    _add_model_args(v)
    _add_solver_args(v)
    _add_sim_args(v)
    v.add_argument("--task", help="task name for the report")
    v.add_argument("--output", choices=("json", "table", "csv"), default="json")

    t = sub.add_parser("tpi", help="posterior bounds P[phi and psi] / P[psi]")
    _add_model_args(t)
    t.add_argument("--dra-psi", help="automaton for the observation psi")
    t.add_argument("--dra-phi-and-psi", help="automaton for phi and psi")
    _add_solver_args(t)
    _add_sim_args(t)
    t.add_argument("--task")
    t.add_argument("--output", choices=("json", "table", "csv"), default="json")

    s = sub.add_parser("simulate", help="Monte Carlo estimate of an event")
    _add_model_args(s)
    _add_sim_args(s)
    s.add_argument("--event", choices=(ACCEPT, COUNTER, FORMULA), default=ACCEPT)
    s.add_argument("--formula", help="condition for the formula event")
    s.add_argument("--mode", choices=("FOV", "IOV"), default="FOV")
    s.add_argument("--set", type=_state_set, default=frozenset(), help="tracked automaton states, e.g. 1,2")
    s.add_argument("--k", type=int, default=0)

    o = sub.add_parser("oracle", help="exact probability on a finite-state chain")
    _add_model_args(o)
    o.add_argument("--domain", type=_domain, action="append", default=[], help="var=lo:hi or var=a,b")
    o.add_argument("--event", choices=(ACCEPT, COUNTER), default=ACCEPT)
    o.add_argument("--mode", choices=("FOV", "IOV"), default="FOV")
    o.add_argument("--set", type=_state_set, default=frozenset())
    o.add_argument("--k", type=int, default=0)
    o.add_argument("--export", type=Path, help="write the chain as sparse triplets")

    c = sub.add_parser("check-cert", help="re-check a dumped certificate at sampled states")
    _add_model_args(c)
    c.add_argument("--cert", type=Path, required=True)
    c.add_argument("--states", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tolerance", type=float, default=1e-6)
    return ap


# -- helpers ------------------------------------------------------------------


def _load_pts(path):
    return compile_to_pts(parse_program(Path(path).read_text()))


def _load_dra(path):
    return parse_dra(Path(path).read_text())


def _require(args, *names):
    for n in names:
        if getattr(args, n.replace("-", "_")) is None:
            raise UsageError(f"missing required option --{n}")


def _task(args, pts, dra) -> VerificationTask:
    return VerificationTask(
        pts, dra, k=args.k,
        degree_fin=args.degree_e if args.degree_e is not None else args.degree,
        degree_inf=args.degree_f if args.degree_f is not None else args.degree,
        alpha_grid=args.alpha_grid, lam=args.lam,
        relaxation_degree=args.relaxation_degree, conservative=args.conservative,
    )


def _simulate_accept(args, pts, dra):
    if args.samples <= 0:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = simulate_event(accept_system(pts, dra), SimConfig(args.samples, args.horizon, args.seed, ACCEPT))
    return est


def _dump(args, label, report, dra):
    for r in report.pairs:
        for side, info in r.solves.items():
            stem = f"{label}_pair{r.index}_{side}"
            if args.dump_lp and info.get("lp") is not None:
                args.dump_lp.mkdir(parents=True, exist_ok=True)
                (args.dump_lp / f"{stem}.lp").write_text(info["lp"].to_lp_format())
            cert = info.get("certificate")
            if args.dump_cert and cert is not None:
                args.dump_cert.mkdir(parents=True, exist_ok=True)
                doc = json.loads(cert.to_json())
                pair = dra.pairs[r.index]
                doc["tracked"] = sorted(pair.E if side.endswith("fin") else pair.F)
                (args.dump_cert / f"{stem}.json").write_text(json.dumps(doc, indent=1) + "\n")


def _row(task, prop, sim, interval: BoundInterval, d_e, d_f, k, seconds) -> dict:
    return {
        "Task": task, "Property": prop,
        "Sim.": None if sim is None else round(sim.value, 4),
        "L.B.": round(interval.lower, 5), "U.B.": round(interval.upper, 5),
        "E.d.": d_e, "F.d.": d_f, "k": k, "time": round(seconds, 2),
        "status": interval.status, "notes": interval.notes,
    }


def _render(rows: list[dict], fmt: str, extra: dict | None = None) -> str:
    if fmt == "json":
        doc = rows[0] if len(rows) == 1 and not extra else {"rows": rows, **(extra or {})}
        return json.dumps(doc, indent=1)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else r[c] for c in COLUMNS])
        if extra and "posterior" in extra:
            w.writerow(["posterior", "", "", extra["posterior"]["L.B."], extra["posterior"]["U.B."], "", "", "", ""])
        return buf.getvalue().rstrip("\n")
    cells = [[str(c) for c in COLUMNS]] + [["-" if r[c] is None else str(r[c]) for c in COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    if extra and "posterior" in extra:
        p = extra["posterior"]
        lines.append(f"posterior  L.B. {p['L.B.']}  U.B. {p['U.B.']}")
    return "\n".join(lines)


def _property_name(dra, path) -> str:
    return dra.ltl or Path(path).stem


# -- commands -------------------------------------------------------------


def cmd_verify(args) -> int:
    _require(args, "dra")
    pts, dra = _load_pts(args.program), _load_dra(args.dra)
    rep = verify_property(_task(args, pts, dra))
    _dump(args, "phi", rep, dra)
    sim = _simulate_accept(args, pts, dra)
    task = args.task or Path(args.program).stem
    t = _task(args, pts, dra)
    row = _row(task, _property_name(dra, args.dra), sim, rep.interval, t.degree_fin, t.degree_inf, args.k, rep.seconds)
    print(_render([row], args.output))
    return EXIT_SOLVER if rep.interval.status == NO_CERTIFICATE else EXIT_OK


def cmd_tpi(args) -> int:
    _require(args, "dra-psi")
    if args.dra_phi_and_psi is None and args.dra is None:
        raise UsageError("tpi needs --dra-phi-and-psi, or --dra for phi to conjoin with psi")
    pts = _load_pts(args.program)
    psi = _load_dra(args.dra_psi)
    both = _load_dra(args.dra_phi_and_psi) if args.dra_phi_and_psi else conjoin_dras(_load_dra(args.dra), psi)
    task = args.task or Path(args.program).stem
    rows, reps = [], []
    for label, dra, path in (("phi_and_psi", both, args.dra_phi_and_psi or args.dra), ("psi", psi, args.dra_psi)):
        t = _task(args, pts, dra)
        rep = verify_property(t)
        _dump(args, label, rep, dra)
        reps.append(rep)
        rows.append(_row(task, _property_name(dra, path), _simulate_accept(args, pts, dra), rep.interval,
                         t.degree_fin, t.degree_inf, args.k, rep.seconds))
    num, den = reps[0].interval, reps[1].interval
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            post = compute_tpd(num, den)
        posterior = {"L.B.": round(post.lower, 5), "U.B.": round(post.upper, 5), "notes": post.notes}
        status = EXIT_OK
    except ValueError as e:
        posterior = {"L.B.": None, "U.B.": None, "notes": [str(e)]}
        status = EXIT_SOLVER
    print(_render(rows, args.output, {"posterior": posterior}))
    if NO_CERTIFICATE in (num.status, den.status):
        status = EXIT_SOLVER
    return status


def cmd_simulate(args) -> int:
    pts = _load_pts(args.program)
    if args.event == FORMULA:
        if not args.formula:
            raise UsageError("the formula event needs --formula")
        dra = _load_dra(args.dra) if args.dra else None
        psys = accept_system(pts, dra or universal_dra())
        formula = parse_condition(args.formula)
    else:
        _require(args, "dra")
        dra = _load_dra(args.dra)
        psys = ProductSystem(pts, dra, args.set, args.mode, args.k) if args.event == COUNTER else accept_system(pts, dra)
        formula = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = simulate_event(psys, SimConfig(args.samples, args.horizon, args.seed, args.event), formula)
    doc = est.as_dict()
    doc["warnings"] = [str(w.message) for w in caught]
    print(json.dumps(doc, indent=1))
    return EXIT_OK


def cmd_oracle(args) -> int:
    _require(args, "dra")
    pts, dra = _load_pts(args.program), _load_dra(args.dra)
    domains = dict(args.domain)
    if args.event == ACCEPT:
        chain = build_automaton_chain(pts, dra, domains)
        value = exact_probability(chain, ("accept", dra))
    else:
        chain = build_finite_chain(ProductSystem(pts, dra, args.set, args.mode, args.k), domains)
        value = exact_probability(chain, ("counter", args.k))
    if args.export:
        args.export.write_text(chain.export_triplets())
    print(json.dumps({"event": args.event, "exact": str(value), "value": float(value), "states": len(chain)}, indent=1))
    return EXIT_OK


def load_certificate(path: Path) -> tuple[Certificate, frozenset]:
    doc = json.loads(Path(path).read_text())
    pieces = {}
    for key, text in doc["pieces"].items():
        loc, q, l = key.rsplit(",", 2)
        pieces[loc, int(q), int(l)] = parse_expression(text)
    gamma = Fraction(doc.get("gamma_exact") or doc["gamma"])
    cert = Certificate(
        doc["mode"], doc["d"], doc["k"],
        None if doc.get("alpha") is None else Fraction(doc["alpha"]),
        None if doc.get("lambda") is None else Fraction(doc["lambda"]),
        gamma, 1 - gamma, pieces, doc.get("replay_residual", 0.0),
    )
    return cert, frozenset(doc.get("tracked", ()))


def cmd_check_cert(args) -> int:
    _require(args, "dra")
    pts, dra = _load_pts(args.program), _load_dra(args.dra)
    cert, tracked = load_certificate(args.cert)
    if cert.mode not in MODES:
        raise UsageError(f"unknown certificate mode {cert.mode!r}")
    psys = ProductSystem(pts, dra, tracked, mode_kind(cert.mode), cert.k)
    missing = [key for key in ((loc, q, l) for loc in pts.locations for q in dra.states for l in range(cert.k + 2))
               if key not in cert.pieces]
    if missing:
        raise UsageError(f"certificate lacks pieces, e.g. {missing[0]}")
    rep = martingale_check(cert, psys, MartingaleConfig(states=args.states, seed=args.seed))
    ok = rep.ok(args.tolerance)
    print(json.dumps({"mode": cert.mode, "max_violation": rep.max_violation, "by_condition": rep.by_condition,
                      "states": rep.states_checked, "worst": rep.worst, "ok": ok}, indent=1))
    return EXIT_OK if ok else EXIT_SOLVER


COMMANDS = {"verify": cmd_verify, "tpi": cmd_tpi, "simulate": cmd_simulate, "oracle": cmd_oracle,
            "check-cert": cmd_check_cert}


def run_cli(argv=None) -> int:
    backend = os.environ.get("TPI_SOLVER", "highs").lower()
    try:
        if backend not in BACKENDS:
            raise UsageError(f"TPI_SOLVER={backend!r} not available (choose from {', '.join(BACKENDS)})")
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except MODEL_ERRORS as e:
        print(f"model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
