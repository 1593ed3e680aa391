import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nyqtune.lti import (DelayTF, LtiError, ReducedModel, TestbenchSpec, catalog, freq_response,
                         is_stable, make_testbench, pade3, parse_bench, rationalize, residence_time,
                         to_state_space)

pos = st.floats(0.05, 20.0)


def _rand_stable_tf(seed):
    rng = np.random.default_rng(seed)
    poles = -rng.uniform(0.1, 5.0, rng.integers(1, 5))
    num = rng.normal(size=rng.integers(1, len(poles) + 1))
    return DelayTF(num, np.poly(poles), rng.uniform(0, 2))


class TestDelayTF:
    def test_trims_leading_zeros(self):
        p = DelayTF((0.0, 0.0, 2.0), (0.0, 1.0, 1.0))
        assert p.num == (2.0,) and p.den == (1.0, 1.0)

    def test_zero_denominator_rejected(self):
        with pytest.raises(LtiError):
            DelayTF((1.0,), (0.0,))

    def test_negative_delay_rejected(self):
        with pytest.raises(LtiError):
            DelayTF((1.0,), (1.0, 1.0), -0.1)

    def test_json_round_trip(self):
        p = DelayTF((1.0, 2.0), (1.0, 3.0, 2.0), 0.25)
        q = DelayTF.from_dict(json.loads(json.dumps(p.to_dict())))
        assert q == p
        assert set(p.to_dict()) == {"num", "den", "delay_s"}

    def test_sum_and_product(self):
        a = DelayTF((1.0,), (1.0, 1.0))
        b = DelayTF((1.0,), (1.0, 2.0))
        w = np.array([0.3, 1.0, 7.0])
        assert np.allclose(freq_response(a + b, w), freq_response(a, w) + freq_response(b, w))
        assert np.allclose(freq_response(a * b, w), freq_response(a, w) * freq_response(b, w))


class TestPade:
    def test_zero_delay_is_unity(self):
        p = pade3(0.0)
        assert p.num == (1.0,) and p.den == (1.0,)

    def test_unit_delay_coefficients(self):
        p = pade3(1.0)
        assert p.num == (-1.0, 12.0, -60.0, 120.0)
        assert p.den == (1.0, 12.0, 60.0, 120.0)

    def test_negative_delay(self):
        with pytest.raises(LtiError):
            pade3(-1.0)

    @given(st.floats(0.0, 50.0), st.floats(-1e4, 1e4))
    def test_all_pass(self, L, w):
        assert abs(abs(freq_response(pade3(L), w)) - 1.0) < 1e-12

    @given(st.floats(1e-3, 20.0), st.floats(0.0, 1.0))
    def test_low_frequency_accuracy(self, L, wl):
        w = wl / L
        assert abs(freq_response(pade3(L), w) - np.exp(-1j * wl)) < 0.02


class TestRationalize:
    def test_no_delay_identity(self):
        p = DelayTF((1.0,), (1.0, 3.0, 3.0, 1.0))
        assert rationalize(p) == p

    def test_foptd_shape_and_dc(self):
        q = rationalize(ReducedModel.foptd(1.0, 1.0, 1.0).to_tf())
        assert len(q.num) - 1 == 3 and q.order == 4 and q.delay_s == 0
        assert q.dcgain() == pytest.approx(1.0)

    def test_matches_exact_delay_at_low_frequency(self):
        p = ReducedModel.soptd(1.0, 2.0, 0.5, 0.8).to_tf()
        exact = 1.0 / ((2j * 0.1 + 1) * (0.5j * 0.1 + 1)) * np.exp(-0.08j)
        assert abs(freq_response(rationalize(p), 0.1) - exact) / abs(exact) < 1e-6

    @given(st.integers(0, 10_000))
    def test_dc_consistency(self, seed):
        p = _rand_stable_tf(seed)
        assert freq_response(rationalize(p), 0.0) == freq_response(p, 0.0)


class TestFreqResponse:
    def test_p1_n3_at_unit_frequency(self):
        assert freq_response(make_testbench(TestbenchSpec("P1", 3)), 1.0) == pytest.approx(-0.25 - 0.25j)

    def test_p4_alpha1_at_unit_frequency(self):
        assert freq_response(make_testbench(TestbenchSpec("P4", 1.0)), 1.0) == pytest.approx(-0.5 + 0j)

    def test_dc_value(self):
        p = DelayTF((3.0,), (2.0, 1.0), 1.5)
        assert freq_response(p, 0.0) == 3.0 + 0j

    def test_imaginary_axis_pole_names_frequency(self):
        with pytest.raises(LtiError, match="omega=2.0"):
            freq_response(DelayTF((1.0,), (1.0, 0.0, 4.0)), np.array([1.0, 2.0]))

    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_conjugate_symmetry(self, seed, w):
        p = _rand_stable_tf(seed)
        assert freq_response(p, -w) == pytest.approx(np.conj(freq_response(p, w)), rel=1e-12, abs=1e-15)


class TestTestbench:
    def test_catalog_counts(self):
        cat = catalog()
        assert len(cat) == 38
        assert [sum(s.class_id == c for s in cat) for c in ("P1", "P2", "P3", "P4")] == [8, 9, 10, 11]

    def test_p1_n3(self):
        p = make_testbench(TestbenchSpec("P1", 3))
        assert p.num == (1.0,) and np.allclose(p.den, (1, 3, 3, 1))

    def test_p2_roots(self):
        p = make_testbench(TestbenchSpec("P2", 0.5))
        assert np.allclose(sorted(np.roots(p.den).real), [-8, -4, -2, -1])

    def test_p4_rhp_zero(self):
        p = make_testbench(TestbenchSpec("P4", 1.1))
        assert np.allclose(np.roots(p.num), [1 / 1.1])

    def test_p1_noninteger_rejected(self):
        with pytest.raises(LtiError):
            make_testbench(TestbenchSpec("P1", 2.5))

    def test_out_of_catalog_flag(self):
        assert TestbenchSpec("P2", 0.5).in_catalog
        assert not TestbenchSpec("P2", 0.55).in_catalog

    def test_unity_dc_gain(self):
        for s in catalog():
            assert make_testbench(s).dcgain() == pytest.approx(1.0, abs=1e-14)

    def test_parse_bench(self):
        assert parse_bench("p3:0.005") == TestbenchSpec("P3", 0.005)
        assert parse_bench("P1:3").label == "P1:3"
        with pytest.raises(LtiError):
            parse_bench("P1-3")


class TestStability:
    def test_simple(self):
        assert is_stable(DelayTF((1.0,), (1.0, 1.0)))
        assert not is_stable(DelayTF((1.0,), (1.0, -1.0)))

    def test_p1_n20(self):
        assert is_stable(make_testbench(TestbenchSpec("P1", 20)))


class TestReducedModel:
    def test_sorts_time_constants(self):
        m = ReducedModel.soptd(1.0, 0.5, 2.0, 0.1)
        assert (m.tau_max, m.tau_min) == (2.0, 0.5)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1.0, 0.1), (1.0, 1.0, 0.0, 0.1), (1.0, 1.0, 1.0, -0.1)])
    def test_invalid(self, args):
        with pytest.raises(LtiError):
            ReducedModel.soptd(*args)

    @given(pos, pos, pos, st.floats(0.0, 10.0))
    def test_residence_time_of_soptd(self, k, t1, t2, L):
        m = ReducedModel.soptd(k, t1, t2, L)
        assert residence_time(m.to_tf()) == pytest.approx(t1 + t2 + L, rel=1e-9)


class TestStateSpace:
    @given(st.integers(0, 10_000))
    def test_realization_matches_tf(self, seed):
        p = _rand_stable_tf(seed)
        A, B, C, D = to_state_space(p)
        for w in (0.1, 1.0, 10.0):
            s = 1j * w
            g = (C @ np.linalg.solve(s * np.eye(A.shape[0]) - A, B) + D).item()
            ref = np.polyval(p.num, s) / np.polyval(p.den, s)
            assert g == pytest.approx(ref, rel=1e-8, abs=1e-12)
