import json

import numpy as np
import pytest

from nyqtune.evo import GaConfig, SearchSpace
from nyqtune.fracsim import ControllerParams, SimConfig, cost_j, simulate_step
from nyqtune.lti import DelayTF, LtiError, TestbenchSpec, catalog, make_testbench
from nyqtune.tuning import (FEATURE_NAMES, TUNING_SIM, RuleDataset, TuningError, TuningProblem,
                            build_dataset, compare_rule_vs_optimal, conservative_starts,
                            evaluate_controller, features, tune_controller)
from nyqtune.table1 import lookup

SMALL = GaConfig(population=16, generations=12, seed=3)
LAG = DelayTF((1.0,), (1.0, 1.0))


class TestProblem:
    def test_dimensions(self):
        assert TuningProblem(LAG).space.dim == 3
        assert TuningProblem(LAG, "fopid").space.dim == 5

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            TuningProblem(LAG, "PD")

    def test_space_mismatch(self):
        with pytest.raises(ValueError):
            TuningProblem(LAG, "PID", space=SearchSpace((0.0,) * 5, (1.0,) * 5))

    def test_conservative_starts_are_stable(self):
        for s in catalog():
            prob = TuningProblem(make_testbench(s))
            assert all(evaluate_controller(prob, ControllerParams(*x))[1].stable for x in conservative_starts(prob))


class TestTune:
    def test_beats_fixed_p_controller(self):
        prob = TuningProblem(LAG)
        c, j = tune_controller(prob, SMALL)
        assert j < evaluate_controller(prob, ControllerParams(1.0))[0]

    def test_cost_consistency_and_box(self):
        plant = make_testbench(TestbenchSpec("P2", 0.5))
        prob = TuningProblem(plant)
        c, j = tune_controller(prob, SMALL)
        h, dt = TUNING_SIM.resolve(plant)
        assert j == pytest.approx(cost_j(simulate_step(plant, c, h, dt)), rel=1e-12)
        assert prob.space.contains([c.Kp, c.Ki, c.Kd])

    def test_deterministic(self):
        prob = TuningProblem(make_testbench(TestbenchSpec("P4", 0.5)))
        assert tune_controller(prob, SMALL) == tune_controller(prob, SMALL)

    @pytest.mark.parametrize("label", ["P1:3", "P3:0.5"])
    def test_seeded_fopid_not_worse(self, label):
        plant = make_testbench(TestbenchSpec(*label.split(":")))
        pid, j_pid = tune_controller(TuningProblem(plant), SMALL)
        _, j_fo = tune_controller(TuningProblem(plant, "FOPID"), SMALL,
                                  initial=[[pid.Kp, pid.Ki, pid.Kd, 1.0, 1.0]])
        assert j_fo <= j_pid

    def test_all_unstable_reports_box(self):
        plant = make_testbench(TestbenchSpec("P1", 3))
        space = SearchSpace((10.0, 0.0, 0.0), (20.0, 1e-3, 1e-3))
        with pytest.raises(TuningError, match="10.0"):
            tune_controller(TuningProblem(plant, space=space), GaConfig(population=6, generations=2), polish=False)

    def test_unstable_plant_rejected(self):
        with pytest.raises(LtiError):
            tune_controller(TuningProblem(DelayTF((1.0,), (1.0, -1.0))), SMALL)


@pytest.fixture(scope="module")
def ds():
    specs = [s for s in catalog() if s.label in ("P1:3", "P2:0.5", "P3:10")]
    return build_dataset(specs, GaConfig(population=8, generations=4, seed=1))


class TestDataset:
    def test_rows_and_targets(self, ds):
        assert len(ds) == 3
        X, Y = ds.matrix("PID")
        assert X.shape == (3, 6) and set(Y) == {"Kp", "Ki", "Kd"}
        X, Y = ds.matrix("FOPID")
        assert set(Y) == {"Kp", "Ki", "Kd", "lambda", "mu"}

    def test_features(self):
        f = features(lookup(TestbenchSpec("P1", 3)).model)
        assert tuple(f) == FEATURE_NAMES
        assert f["tau_max/tau_min"] == pytest.approx(1.335035 / 1.296596)
        assert f["L/tau_max"] == pytest.approx(0.458524 / 1.335035)

    def test_nesting(self, ds):
        for r in ds.rows:
            assert r.j_fopid <= r.j_pid

    def test_csv_round_trip(self, ds):
        back = RuleDataset.from_csv(ds.to_csv())
        assert back.to_csv() == ds.to_csv()
        assert json.loads(ds.sidecar())["ga"]["seed"] == 1

    def test_failures_are_recorded(self):
        # a 2-step simulation grid is rejected by the simulator; the row keeps the message
        specs = [TestbenchSpec("P1", 3)]
        ds = build_dataset(specs, GaConfig(population=4, generations=1), kinds=("PID",),
                           models={"P1:3": (lookup(specs[0]).model, 0.0)},
                           sim=SimConfig(horizon=1.0, n_steps=2))
        assert len(ds) == 1 and ds.rows[0].error and ds.rows[0].pid is None

    def test_full_catalog_row_count(self):
        ds = build_dataset(catalog(), GaConfig(population=4, generations=1), kinds=())
        assert len(ds) == 38


@pytest.fixture(scope="module")
def cmp():
    return compare_rule_vs_optimal(TestbenchSpec("P1", 3), "PID", GaConfig(population=20, generations=20, seed=2))


class TestCompare:
    def test_rule_loop(self, cmp):
        assert cmp.traj_rule.stable
        assert abs(cmp.traj_rule.e[-1]) < 0.02

    def test_near_dominance(self, cmp):
        assert np.all(np.isfinite(cmp.traj_rule.y)) and np.all(np.isfinite(cmp.traj_optimal.y))
        assert cmp.j_rule >= 0.95 * cmp.j_optimal

    def test_csv(self, cmp):
        lines = cmp.to_csv().splitlines()
        assert lines[0] == "t,y_GA,y_rule,u_GA,u_rule"
        assert len(lines) == len(cmp.traj_rule) + 1
        assert cmp.summary()["ratio"] == pytest.approx(cmp.j_rule / cmp.j_optimal)
