"""``nyqtune`` command line: bench catalog, reduction, tuning, rules, GP and the full pipeline.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np

from .evo import SEED_ENV, GaConfig
from .fracsim import ControllerParams
from .gp import GpConfig, evolve
from .lti import LtiError, catalog, freq_response, make_testbench, parse_bench
from .reduction import FrequencyGrid, ReductionObjective, reduce
from .rules import RuleInput, rule_fopid, rule_pid, rule_values
from .table1 import lookup
from .tuning import (FEATURE_NAMES, FOPID_TARGETS, PID_TARGETS, RuleDataset, TuningProblem,
                     build_dataset, catalog_costs, compare_rule_vs_optimal, evaluate_controller,
                     evolved_rule, tune_controller)

log = logging.getLogger("nyqtune")

REPRESENTATIVES = ("P1:5", "P2:0.5", "P3:0.5", "P4:0.5")


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(out: Path, name: str, text: str, written: list[str]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    written.append(name)
    return path


def _manifest(out: Path, command: str, argv: list[str], config: dict, seed, written: list[str]):
    doc = {"command": command, "argv": argv, "config": config, "seed": seed,
           "version": _version(), "outputs": sorted(written)}
    (out / "manifest.json").write_text(_dump(doc))


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = GaConfig.seed_from_env()
    if env is None:
        raise UsageError(f"this command is randomized: pass --seed or set {SEED_ENV}")
    return env


def _objective(args) -> ReductionObjective:
    unit = {"rad": "rad/s", "hz": "Hz"}[args.grid_unit]
    return ReductionObjective(args.objective, grid=FrequencyGrid.logspace(unit=unit), norm=args.norm)


def _ga(args, seed: int) -> GaConfig:
    return GaConfig(population=args.population, generations=args.generations, seed=seed)


def _bench(text: str):
    try:
        return parse_bench(text)
    except LtiError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# commands


def cmd_bench(args, argv) -> int:
    if args.action == "list":
        for s in catalog():
            print(f"{s.class_id},{s.param_text}")
        return 0
    spec = _bench(args.bench)
    doc = {"label": spec.label, "class": spec.class_id, spec.param_name: spec.parameter,
           "in_catalog": spec.in_catalog, "plant": make_testbench(spec).to_dict()}
    if spec.in_catalog:
        row = lookup(spec)
        doc["table"] = {"J_min": row.J_min, **row.model.params()}
    sys.stdout.write(_dump(doc))
    return 0


def cmd_reduce(args, argv) -> int:
    seed = _seed(args)
    spec = _bench(args.bench)
    plant = make_testbench(spec)
    obj = _objective(args)
    ga = _ga(args, seed)
    res = reduce(plant, args.template, obj, ga)
    out, written = Path(args.out), []
    _write(out, "reduction.json", res.to_json() + "\n", written)
    w = obj.grid.omega
    true, model = freq_response(plant, w), freq_response(res.model.to_tf(), w)
    lines = ["omega,re_true,im_true,re_model,im_model"]
    lines += [",".join(repr(float(v)) for v in (om, t.real, t.imag, m.real, m.imag))
              for om, t, m in zip(w, true, model)]
    _write(out, "nyquist.csv", "\n".join(lines) + "\n", written)
    _manifest(out, "reduce", argv, {"bench": spec.label, "template": args.template.upper(),
                                    "objective": obj.describe(), "ga": asdict(ga)}, seed, written)
    sys.stdout.write(res.to_json() + "\n")
    return 0


def cmd_tune(args, argv) -> int:
    seed = _seed(args)
    spec = _bench(args.bench)
    plant = make_testbench(spec)
    ga = _ga(args, seed)
    kind = args.kind.upper()
    init = None
    if kind == "FOPID":
        pid, _ = tune_controller(TuningProblem(plant, "PID"), ga)
        init = [[pid.Kp, pid.Ki, pid.Kd, 1.0, 1.0]]
    prob = TuningProblem(plant, kind)
    c, j = tune_controller(prob, ga, initial=init)
    _, traj = evaluate_controller(prob, c)
    doc = {"bench": spec.label, "kind": kind, "params": c.as_dict(), "J": j, "seed": seed}
    out, written = Path(args.out), []
    _write(out, "tuning.json", _dump(doc), written)
    _write(out, "trajectory.csv", traj.to_csv(), written)
    _manifest(out, "tune", argv, {"bench": spec.label, "kind": kind, "ga": asdict(ga)}, seed, written)
    sys.stdout.write(_dump(doc))
    return 0


def _rule_opts(args) -> dict:
    if args.kind == "pid":
        return {"sine_grouping": args.sine_grouping, "ki_reading": args.ki_reading}
    return {"kp_denominator": args.kp_denominator}


def cmd_rules(args, argv) -> int:
    opts = _rule_opts(args)
    if args.action == "eval":
        try:
            x = RuleInput(args.tau_max, args.tau_min, args.L, args.K)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        c = rule_pid(x, **opts) if args.kind == "pid" else rule_fopid(x, **opts)
        doc = c.as_dict() if args.kind == "fopid" else {k: c.as_dict()[k] for k in PID_TARGETS}
        if args.raw:
            doc = rule_values(args.kind, x, **opts)
        sys.stdout.write(_dump(doc))
        return 0
    seed = _seed(args)
    spec = _bench(args.bench)
    ga = _ga(args, seed)
    cmp_ = compare_rule_vs_optimal(spec, args.kind, ga, **opts)
    out, written = Path(args.out), []
    _write(out, "comparison.csv", cmp_.to_csv(), written)
    _write(out, "comparison.json", _dump(cmp_.summary()), written)
    _manifest(out, "rules compare", argv, {"bench": spec.label, "kind": args.kind.upper(),
                                           "ga": asdict(ga), "rule_options": opts}, seed, written)
    sys.stdout.write(_dump(cmp_.summary()))
    return 0


def _gp_cfg(args, seed: int) -> GpConfig:
    return GpConfig(population=args.gp_population, generations=args.gp_generations, seed=seed,
                    max_genes=args.max_genes)


def cmd_gp(args, argv) -> int:
    seed = _seed(args)
    ds = RuleDataset.from_csv(Path(args.dataset).read_text())
    X, Y = ds.matrix(args.kind)
    if args.target not in Y:
        raise UsageError(f"target must be one of {sorted(Y)} for kind {args.kind}")
    if len(X) == 0:
        raise RuntimeError(f"dataset has no {args.kind.upper()} rows")
    cfg = _gp_cfg(args, seed)
    res = evolve(X, Y[args.target], cfg)
    out, written = Path(args.out), []
    _write(out, "archive.json", res.archive_json(FEATURE_NAMES) + "\n", written)
    _write(out, "pareto.csv", res.pareto_csv(), written)
    _manifest(out, "gp run", argv, {"dataset": str(args.dataset), "kind": args.kind,
                                    "target": args.target, "gp": cfg.to_dict()}, seed, written)
    sys.stdout.write(_dump(res.best.to_dict()))
    return 0


def cmd_pipeline(args, argv) -> int:
    seed = _seed(args)
    out, written = Path(args.out), []
    ga = _ga(args, seed)
    obj = _objective(args)
    kinds = tuple(k.upper() for k in args.kinds)
    failures = {}

    # 1. reduction of every plant
    models, table = {}, ["class,parameter,J_min,K,tau_max,tau_min,L"]
    for spec in catalog():
        try:
            r = reduce(make_testbench(spec), "SOPTD", obj, GaConfig(seed=seed))
        except Exception as exc:  # noqa: BLE001 - recorded in the summary
            failures[spec.label] = f"reduction: {exc}"
            continue
        m = r.model
        models[spec.label] = (m, r.j_value)
        table.append(",".join([spec.class_id, spec.param_text] +
                              [repr(v) for v in (r.j_value, m.K, m.tau_max, m.tau_min, m.L)]))
        log.info("reduced %s J=%.6g", spec.label, r.j_value)
    _write(out, "table_reduction.csv", "\n".join(table) + "\n", written)
    if not models:
        raise RuntimeError("no plant completed the reduction stage")

    # 2. optimal controllers and the dataset
    specs = [s for s in catalog() if s.label in models]
    ds = build_dataset(specs, ga, kinds=kinds, models=models)
    for r in ds.rows:
        if r.error:
            failures[r.spec.label] = f"tuning: {r.error}"
    _write(out, "dataset.csv", ds.to_csv(), written)
    _write(out, "dataset.json", ds.sidecar() + "\n", written)

    # 3. one regression per controller parameter
    gp_cfg = _gp_cfg(args, seed)
    rules = {}
    for kind in kinds:
        X, Y = ds.matrix(kind)
        if len(X) < 2:
            failures[f"gp_{kind}"] = "not enough tuned plants"
            continue
        rules[kind] = {}
        for name, y in Y.items():
            res = evolve(X, y, gp_cfg)
            rules[kind][name] = res.best.model
            tag = f"gp_{kind.lower()}_{name}"
            _write(out, f"{tag}_archive.json", res.archive_json(FEATURE_NAMES) + "\n", written)
            _write(out, f"{tag}_pareto.csv", res.pareto_csv(), written)

    # 4. rule-vs-optimal on the representative plants
    summary = {"seed": seed, "plants_completed": len(ds.ok_rows(kinds[0])),
               "failures": failures, "comparisons": [], "catalog": {}}
    by_label = {r.spec.label: r for r in ds.rows}
    for label in args.representatives:
        row = by_label.get(_bench(label).label)
        for kind in kinds:
            opt = row and (row.pid if kind == "PID" else row.fopid)
            if not opt:
                summary["comparisons"].append({"plant": label, "kind": kind, "error": "no optimum"})
                continue
            cmp_ = compare_rule_vs_optimal(row.spec, kind, optimal=opt, model=row.model)
            entry = cmp_.summary()
            if kind in rules:
                ev = compare_rule_vs_optimal(row.spec, kind, optimal=opt,
                                             rule=_evolved(rules[kind], row.model, kind))
                entry["evolved_rule"] = ev.rule.as_dict()
                entry["J_evolved"] = ev.j_rule
                entry["ratio_evolved"] = ev.ratio
            tag = f"compare_{kind.lower()}_{row.spec.label.replace(':', '_')}"
            _write(out, f"{tag}.csv", cmp_.to_csv(), written)
            summary["comparisons"].append(entry)

    # 5. catalog-wide mean cost of the evolved rules
    for kind, ms in rules.items():
        costs = catalog_costs(ds, lambda r, ms=ms, kind=kind: _evolved(ms, r.model, kind), kind)
        j_ga = float(np.mean([c[1] for c in costs]))
        j_rule = float(np.mean([c[2] for c in costs]))
        summary["catalog"][kind] = {"mean_J_GA": j_ga, "mean_J_evolved_rule": j_rule,
                                    "ratio": j_rule / j_ga,
                                    "rule": {k: m.render() for k, m in ms.items()}}
    _write(out, "summary.json", _dump(summary), written)
    _manifest(out, "pipeline full", argv, {"ga": asdict(ga), "gp": gp_cfg.to_dict(),
                                           "objective": obj.describe(), "kinds": list(kinds),
                                           "representatives": list(args.representatives)},
              seed, written)
    sys.stdout.write(_dump({k: summary[k] for k in ("plants_completed", "catalog")}))
    return 0


def _evolved(models: dict, reduced, kind: str) -> ControllerParams:
    # PID models carry no order keys, so lambda = mu = 1
    return evolved_rule(models, reduced)


def cmd_replay(args, argv) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    return main(doc["argv"])


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV})")


def _add_ga(p, population=50, generations=200):
    p.add_argument("--population", type=int, default=population)
    p.add_argument("--generations", type=int, default=generations)


def _add_objective(p):
    p.add_argument("--objective", choices=("nyquist", "h2"), default="nyquist")
    p.add_argument("--grid-unit", choices=("rad", "hz"), default="rad")
    p.add_argument("--norm", choices=("length", "rms"), default="length")


def _add_rule_opts(p):
    p.add_argument("--kind", choices=("pid", "fopid"), default="pid")
    p.add_argument("--sine-grouping", choices=("argument", "printed"), default="argument")
    p.add_argument("--ki-reading", choices=("inside", "outside"), default="inside")
    p.add_argument("--kp-denominator", choices=("product", "first"), default="product")


def _add_gp(p):
    p.add_argument("--gp-population", type=int, default=500)
    p.add_argument("--gp-generations", type=int, default=100)
    p.add_argument("--max-genes", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nyqtune", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bench", help="test-bench catalog")
    bs = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    bs.add_parser("list")
    q = bs.add_parser("show")
    q.add_argument("--bench", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reduce", help="fit an FOPTD/SOPTD model")
    p.add_argument("--bench", required=True)
    p.add_argument("--template", type=str.upper, choices=("FOPTD", "SOPTD"), default="SOPTD")
    _add_objective(p)
    _add_seed(p)
    _add_ga(p)
    p.add_argument("--out", default="out/reduce")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("tune", help="GA-tune a PID or FOPID controller")
    p.add_argument("--bench", required=True)
    p.add_argument("--kind", choices=("pid", "fopid"), default="pid")
    _add_seed(p)
    _add_ga(p)
    p.add_argument("--out", default="out/tune")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("rules", help="published tuning rules")
    rs = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = rs.add_parser("eval")
    _add_rule_opts(q)
    q.add_argument("--tau-max", type=float, required=True)
    q.add_argument("--tau-min", type=float, required=True)
    q.add_argument("--L", type=float, required=True)
    q.add_argument("--K", type=float, default=1.0)
    q.add_argument("--raw", action="store_true", help="unclamped formula values")
    q = rs.add_parser("compare")
    _add_rule_opts(q)
    q.add_argument("--bench", required=True)
    _add_seed(q)
    _add_ga(q)
    q.add_argument("--out", default="out/compare")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("gp", help="symbolic regression")
    gs = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = gs.add_parser("run")
    q.add_argument("--dataset", required=True, help="dataset CSV from `pipeline full`")
    q.add_argument("--kind", choices=("pid", "fopid"), default="pid")
    q.add_argument("--target", required=True, choices=sorted(set(PID_TARGETS + FOPID_TARGETS)))
    _add_seed(q)
    _add_gp(q)
    q.add_argument("--out", default="out/gp")
    p.set_defaults(func=cmd_gp)

    p = sub.add_parser("pipeline", help="end-to-end run")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = ps.add_parser("full")
    _add_seed(q)
    _add_ga(q)
    _add_gp(q)
    _add_objective(q)
    q.add_argument("--kinds", nargs="+", choices=("pid", "fopid"), default=["pid", "fopid"])
    q.add_argument("--representatives", nargs=4, default=list(REPRESENTATIVES), metavar="BENCH")
    q.add_argument("--out", default="out/pipeline")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        return 2
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        sys.stderr.write(f"nyqtune: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        sys.stderr.write(f"nyqtune: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
