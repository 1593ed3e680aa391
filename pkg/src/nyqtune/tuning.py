"""GA tuning of PID / PI^lambda D^mu controllers, the rule dataset and rule-vs-optimal comparisons."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize as spopt

from .evo import GaConfig, SearchSpace, minimize
from .fracsim import (PENALTY, ControllerParams, CostWeights, SimConfig, Trajectory, cost_j,
                      simulate_step)
from .lti import (DelayTF, LtiError, ReducedModel, TestbenchSpec, is_stable, make_testbench,
                  residence_time)
from .reduction import ReductionObjective, reduce
from .rules import RuleInput, clamp_params, rule_fopid, rule_pid
from .table1 import lookup

log = logging.getLogger(__name__)

__all__ = [
    "TuningProblem", "TuningError", "tune_controller", "controller_space", "features",
    "FEATURE_NAMES", "DatasetRow", "RuleDataset", "build_dataset", "RuleComparison",
    "compare_rule_vs_optimal", "TUNING_SIM", "evaluate_controller", "evolved_rule",
    "catalog_costs", "conservative_starts",
]

GAIN_BOX = (0.0, 20.0)
ORDER_BOX = (0.05, 2.0)
FEATURE_NAMES = ("L", "tau_max", "tau_min", "tau_max/tau_min", "L/tau_min", "L/tau_max")
PID_TARGETS = ("Kp", "Ki", "Kd")
FOPID_TARGETS = ("Kp", "Ki", "Kd", "lambda", "mu")

# Delay-free loops are discretized exactly, so a coarser grid only affects
# the trapezoidal cost quadrature.
TUNING_SIM = SimConfig(n_steps=4000)


class TuningError(RuntimeError):
    pass


def controller_space(kind: str) -> SearchSpace:
    g, o = GAIN_BOX, ORDER_BOX
    if kind.upper() == "PID":
        return SearchSpace((g[0],) * 3, (g[1],) * 3)
    return SearchSpace((g[0],) * 3 + (o[0],) * 2, (g[1],) * 3 + (o[1],) * 2)


@dataclass(frozen=True)
class TuningProblem:
    plant: DelayTF
    kind: str = "PID"
    weights: CostWeights = field(default_factory=CostWeights)
    space: SearchSpace | None = None
    sim: SimConfig = TUNING_SIM

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("PID", "FOPID"):
            raise ValueError(f"kind must be PID or FOPID, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.space is None:
            object.__setattr__(self, "space", controller_space(kind))
        if self.space.dim != (3 if kind == "PID" else 5):
            raise ValueError("search-space dimension does not match the controller kind")


def evaluate_controller(prob: TuningProblem, c: ControllerParams) -> tuple[float, Trajectory]:
    """Simulate ``c`` on the problem's plant; unstable loops cost :data:`PENALTY`."""
    horizon, dt = prob.sim.resolve(prob.plant)
    tr = simulate_step(prob.plant, c, horizon, dt, prob.sim.frac, derivative_on=prob.sim.derivative_on)
    if not tr.stable:
        return PENALTY, tr
    j = cost_j(tr, prob.weights)
    return (j if math.isfinite(j) else PENALTY), tr


def _objective(prob: TuningProblem):
    def f(x):
        try:
            c = ControllerParams.from_vector(x)
        except ValueError:
            return PENALTY
        return evaluate_controller(prob, c)[0]
    return f


def tune_controller(prob: TuningProblem, ga: GaConfig | None = None, initial=None,
                    polish: bool = True) -> tuple[ControllerParams, float]:
    """Minimize the ITAE+ISCO cost of ``prob`` with the box-constrained GA.

    ``initial`` seeds the first generation (e.g. a PID solution padded with
    ``lambda = mu = 1`` for an FOPID run).  A few low-gain PI points from
    :func:`conservative_starts` are always added so that slow plants have a
    stable candidate even when random sampling of the box finds none.  ``polish`` refines the GA optimum
    with a short bounded Nelder-Mead run, accepted only on improvement.
    The returned cost is recomputed from a fresh simulation at the returned
    parameters.
    """
    ga = ga or GaConfig()
    if not is_stable(prob.plant):
        raise LtiError("controller tuning needs a stable open-loop plant")
    f = _objective(prob)
    starts = conservative_starts(prob)
    if initial is not None:
        starts = [list(v) for v in initial] + starts
    res = minimize(f, prob.space, ga, initial=starts)
    if not res.best_f < PENALTY:
        raise TuningError(f"every candidate in the box {prob.space} gave an unstable loop")
    x = res.best_x
    if polish:
        opt = spopt.minimize(f, x, method="Nelder-Mead",
                             bounds=list(zip(prob.space.lower, prob.space.upper)),
                             options={"maxfev": 60 * prob.space.dim, "xatol": 1e-6, "fatol": 1e-9})
        xp = prob.space.clip(opt.x)
        if f(xp) < res.best_f:
            x = xp
    c = ControllerParams.from_vector(x)
    return c, evaluate_controller(prob, c)[0]


def conservative_starts(prob: TuningProblem) -> list[list[float]]:
    """PI points ``Kp = a/|K|``, ``Ki = Kp/T_res`` for ``a`` in (0.25, 0.5, 1), clipped to the box."""
    k = abs(prob.plant.dcgain()) or 1.0
    t_res = max(residence_time(prob.plant), 1e-3)
    pts = []
    for a in (0.25, 0.5, 1.0):
        x = [a / k, a / (k * t_res), 0.0] + ([1.0, 1.0] if prob.kind == "FOPID" else [])
        pts.append(list(prob.space.clip(np.array(x))))
    return pts


def pid_as_fopid(c: ControllerParams) -> list[float]:
    return [c.Kp, c.Ki, c.Kd, 1.0, 1.0]


# --------------------------------------------------------------------------
# dataset


def features(model: ReducedModel) -> dict[str, float]:
    tmax, tmin, L = model.tau_max, model.tau_min, model.L
    return {"L": L, "tau_max": tmax, "tau_min": tmin, "tau_max/tau_min": tmax / tmin,
            "L/tau_min": L / tmin, "L/tau_max": L / tmax}


@dataclass
class DatasetRow:
    spec: TestbenchSpec
    model: ReducedModel
    j_reduction: float
    pid: ControllerParams | None = None
    j_pid: float | None = None
    fopid: ControllerParams | None = None
    j_fopid: float | None = None
    error: str | None = None

    @property
    def features(self) -> dict[str, float]:
        return features(self.model)


@dataclass
class RuleDataset:
    rows: list[DatasetRow]
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def ok_rows(self, kind: str = "PID") -> list[DatasetRow]:
        attr = "pid" if kind.upper() == "PID" else "fopid"
        return [r for r in self.rows if getattr(r, attr) is not None]

    def matrix(self, kind: str = "PID") -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Feature matrix (rows x 6) and one target vector per controller parameter."""
        rows = self.ok_rows(kind)
        X = np.array([[r.features[n] for n in FEATURE_NAMES] for r in rows], dtype=float)
        names = PID_TARGETS if kind.upper() == "PID" else FOPID_TARGETS
        attr = "pid" if kind.upper() == "PID" else "fopid"
        Y = {n: np.array([getattr(r, attr).as_dict()[n] for r in rows]) for n in names}
        return X, Y

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "parameter", "J_min", "K", "tau_max", "tau_min", "L", *FEATURE_NAMES,
                    "pid_Kp", "pid_Ki", "pid_Kd", "J_pid",
                    "fopid_Kp", "fopid_Ki", "fopid_Kd", "fopid_lambda", "fopid_mu", "J_fopid",
                    "error"])
        for r in self.rows:
            f = r.features
            pid = [r.pid.Kp, r.pid.Ki, r.pid.Kd] if r.pid else ["", "", ""]
            fo = ([r.fopid.Kp, r.fopid.Ki, r.fopid.Kd, r.fopid.lam, r.fopid.mu]
                  if r.fopid else [""] * 5)
            w.writerow([r.spec.class_id, r.spec.param_text, r.j_reduction, r.model.K,
                        r.model.tau_max, r.model.tau_min, r.model.L,
                        *[f[n] for n in FEATURE_NAMES], *pid,
                        "" if r.j_pid is None else r.j_pid, *fo,
                        "" if r.j_fopid is None else r.j_fopid, r.error or ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, meta: dict | None = None) -> "RuleDataset":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            spec = TestbenchSpec(rec["class"], float(rec["parameter"]))
            model = ReducedModel.soptd(float(rec["K"]), float(rec["tau_max"]),
                                       float(rec["tau_min"]), float(rec["L"]))
            pid = fopid = None
            if rec["pid_Kp"]:
                pid = ControllerParams(float(rec["pid_Kp"]), float(rec["pid_Ki"]), float(rec["pid_Kd"]))
            if rec["fopid_Kp"]:
                fopid = ControllerParams(*(float(rec[f"fopid_{k}"])
                                           for k in ("Kp", "Ki", "Kd", "lambda", "mu")))
            rows.append(DatasetRow(spec, model, float(rec["J_min"]), pid,
                                   float(rec["J_pid"]) if rec["J_pid"] else None, fopid,
                                   float(rec["J_fopid"]) if rec["J_fopid"] else None,
                                   rec["error"] or None))
        return cls(rows, meta or {})

    def sidecar(self) -> str:
        return json.dumps(self.meta, sort_keys=True, indent=2)


def build_dataset(catalog: list[TestbenchSpec], ga: GaConfig | None = None, *,
                  reduction: str = "table", reduction_ga: GaConfig | None = None,
                  kinds=("PID", "FOPID"), sim: SimConfig = TUNING_SIM,
                  weights: CostWeights | None = None,
                  models: dict[str, tuple[ReducedModel, float]] | None = None) -> RuleDataset:
    """Tune controllers for every plant and pair them with SOPTD features.

    Parameters
    ----------
    catalog
        Test-bench plants.
    ga
        GA settings for controller tuning (FOPID runs are seeded with the
        PID optimum).
    reduction
        ``"table"`` takes the published SOPTD parameters; ``"ga"`` runs the
        Nyquist reduction with ``reduction_ga``.
    kinds
        Controller kinds to tune.
    models
        Precomputed ``label -> (SOPTD model, J)`` pairs; overrides ``reduction``.
    """
    ga = ga or GaConfig()
    weights = weights or CostWeights()
    rows = []
    for spec in catalog:
        plant = make_testbench(spec)
        try:
            if models is not None:
                model, jr = models[spec.label]
            elif reduction == "table":
                tab = lookup(spec)
                model, jr = tab.model, tab.J_min
            else:
                rr = reduce(plant, "SOPTD", ReductionObjective(), reduction_ga or GaConfig(seed=ga.seed))
                model, jr = rr.model, rr.j_value
        except Exception as exc:  # noqa: BLE001 - recorded per plant
            log.warning("reduction failed for %s: %s", spec.label, exc)
            continue
        row = DatasetRow(spec, model, jr)
        try:
            if "PID" in kinds:
                row.pid, row.j_pid = tune_controller(TuningProblem(plant, "PID", weights, sim=sim), ga)
            if "FOPID" in kinds:
                init = [pid_as_fopid(row.pid)] if row.pid else None
                row.fopid, row.j_fopid = tune_controller(
                    TuningProblem(plant, "FOPID", weights, sim=sim), ga, initial=init)
        except Exception as exc:  # noqa: BLE001 - recorded per plant
            log.warning("tuning failed for %s: %s", spec.label, exc)
            row.error = str(exc)
        rows.append(row)
        log.info("dataset row %s done", spec.label)
    meta = {"ga": asdict(ga), "reduction": "given" if models is not None else reduction,
            "reduction_ga": asdict(reduction_ga) if reduction_ga else None,
            "grid": ReductionObjective().describe(),
            "sim": {"n_steps": sim.n_steps, "horizon": sim.horizon,
                    "derivative_on": sim.derivative_on, "frac": asdict(sim.frac)},
            "weights": asdict(weights), "kinds": list(kinds)}
    return RuleDataset(rows, meta)


# --------------------------------------------------------------------------
# rule vs optimal


@dataclass
class RuleComparison:
    spec: TestbenchSpec
    kind: str
    optimal: ControllerParams
    rule: ControllerParams
    j_optimal: float
    j_rule: float
    traj_optimal: Trajectory
    traj_rule: Trajectory

    @property
    def ratio(self) -> float:
        return self.j_rule / self.j_optimal

    def summary(self) -> dict:
        return {"plant": self.spec.label, "kind": self.kind, "J_GA": self.j_optimal,
                "J_rule": self.j_rule, "ratio": self.ratio,
                "optimal": self.optimal.as_dict(), "rule": self.rule.as_dict(),
                "rule_stable": self.traj_rule.stable,
                "rule_final_error": float(abs(self.traj_rule.e[-1]))}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "y_GA", "y_rule", "u_GA", "u_rule"])
        a, b = self.traj_optimal, self.traj_rule
        for row in zip(a.t, a.y, b.y, a.u, b.u):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def compare_rule_vs_optimal(spec: TestbenchSpec, kind: str = "PID", ga: GaConfig | None = None, *,
                            optimal: ControllerParams | None = None, rule: ControllerParams | None = None,
                            model: ReducedModel | None = None, sim: SimConfig = TUNING_SIM,
                            **rule_opts) -> RuleComparison:
    """Simulate the GA-optimal and the rule-derived controller on the full plant.

    ``optimal`` skips the GA when already known; ``rule`` overrides the
    published rule (e.g. with a freshly evolved one); ``model`` overrides the
    published SOPTD features.  The rule input uses the time constants and
    delay of the SOPTD model and the dc gain of the full plant.
    """
    kind = kind.upper()
    plant = make_testbench(spec)
    prob = TuningProblem(plant, kind, sim=sim)
    if optimal is None:
        init = None
        if kind == "FOPID":
            pid, _ = tune_controller(TuningProblem(plant, "PID", sim=sim), ga)
            init = [pid_as_fopid(pid)]
        optimal, _ = tune_controller(prob, ga, initial=init)
    if rule is None:
        m = model or lookup(spec).model
        # the rules take the process gain from the plant itself; a fitted K is only approximate
        x = RuleInput(m.tau_max, m.tau_min, m.L, plant.dcgain())
        rule = rule_pid(x, **rule_opts) if kind == "PID" else rule_fopid(x, **rule_opts)
    j_opt, tr_opt = evaluate_controller(prob, optimal)
    j_rule, tr_rule = evaluate_controller(prob, rule)
    return RuleComparison(spec, kind, optimal, rule, j_opt, j_rule, tr_opt, tr_rule)


def evolved_rule(models: dict, reduced: ReducedModel) -> ControllerParams:
    """Controller from per-parameter regression models (anything with ``predict(X)``).

    Keys are controller parameter names; missing orders default to 1.
    Outputs are clamped like the published rules.
    """
    f = features(reduced)
    X = np.array([[f[n] for n in FEATURE_NAMES]])
    return clamp_params({k: float(np.asarray(m.predict(X)).ravel()[0]) for k, m in models.items()})


def catalog_costs(dataset: RuleDataset, rule_for, kind: str = "PID",
                  sim: SimConfig = TUNING_SIM) -> list[tuple[str, float, float]]:
    """``(label, J_GA, J_rule)`` on every dataset plant; ``rule_for(row)`` returns the rule controller."""
    out = []
    for row in dataset.ok_rows(kind):
        prob = TuningProblem(make_testbench(row.spec), kind, sim=sim)
        j_opt = row.j_pid if kind.upper() == "PID" else row.j_fopid
        out.append((row.spec.label, j_opt, evaluate_controller(prob, rule_for(row))[0]))
    return out
