import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from arxdw.controller import (
    NoiseConfig,
    SimulationOverflow,
    control_step,
    reference_bounded,
    reference_constant,
    reference_zero,
    run_closed_loop,
)
from arxdw.model import SystemSpec

from conftest import ARX1


class TestControlStep:
    def test_pure_excitation(self):
        assert control_step(np.zeros(3), np.array([4.0, -2.0, 1.0]), 0.0, 0.7) == 0.7

    def test_hand_example(self):
        assert control_step([1.8, -0.45, -0.3], [1.0, 0.0, 0.0], 0.0, 0.0) == pytest.approx(-1.8)

    def test_zero_regressor(self):
        assert control_step([3.0, 1.0, -2.0], np.zeros(3), 2.0, -1.0) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            control_step(np.zeros(3), np.zeros(4), 0.0, 0.0)


class TestReferences:
    def test_zero(self):
        ref = reference_zero()
        assert all(ref(n) == 0.0 for n in (0, 5, 10**6))

    def test_bounded_indexing(self):
        assert reference_bounded((1, -1, 1, -1))(2) == 1.0

    def test_constant_tracking(self):
        c, n = 3.0, 100_000
        spec = SystemSpec(ARX1)
        trace, _ = run_closed_loop(spec, NoiseConfig.from_seed(21), reference_constant(c), burn_in=100, n=n)
        x = trace.x_out[trace.burn_in + 1 :]
        se = x.std() / np.sqrt(n)
        assert abs(x.mean() - c) < 3 * se


class TestClosedLoop:
    def test_trace_shapes(self):
        trace, rls = run_closed_loop(SystemSpec(ARX1), NoiseConfig.from_seed(0), burn_in=10, n=25)
        assert len(trace.x_out) == 36 and len(trace.u) == 35 and len(trace.xi) == 35
        assert trace.n == 25
        x, u = trace.window()
        assert len(x) == 26 and len(u) == 25
        assert rls.step == 35

    def test_deterministic(self):
        spec = SystemSpec((-1.0, 2.0), rho=0.2)
        a, ra = run_closed_loop(spec, NoiseConfig.from_seed(5), burn_in=50, n=500)
        b, rb = run_closed_loop(spec, NoiseConfig.from_seed(5), burn_in=50, n=500)
        np.testing.assert_array_equal(a.x_out, b.x_out)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(ra.vartheta_hat, rb.vartheta_hat)

    def test_stream_independence(self):
        spec = SystemSpec(ARX1)
        base = NoiseConfig.from_seed(9)
        other = replace(base, seed_xi=np.random.SeedSequence(12345))
        a, _ = run_closed_loop(spec, base, burn_in=0, n=200)
        b, _ = run_closed_loop(spec, other, burn_in=0, n=200)
        np.testing.assert_array_equal(a.v, b.v)
        assert not np.array_equal(a.xi, b.xi)

    def test_first_control_is_excitation(self):
        trace, _ = run_closed_loop(SystemSpec(ARX1), NoiseConfig.from_seed(1), burn_in=0, n=5)
        assert trace.u[0] == trace.xi[0]
        assert trace.x_out[1] == pytest.approx(trace.u[0] + trace.v[0])

    @pytest.mark.parametrize("dist", ["uniform", "rademacher", "laplace"])
    def test_other_noise_distributions(self, dist):
        spec = SystemSpec(ARX1, nu2=4.0)
        trace, _ = run_closed_loop(spec, NoiseConfig.from_seed(2, v_dist=dist, xi_dist=dist), burn_in=100, n=20_000)
        assert abs(np.mean(trace.x_out[101:] ** 2) / 5.0 - 1) < 0.1

    def test_unknown_distribution(self):
        with pytest.raises(ValueError):
            NoiseConfig.from_seed(0, v_dist="cauchy").draw(SystemSpec(ARX1), 10)

    def test_overflow_reports_step(self):
        spec = SystemSpec(ARX1, sigma2=1e30)
        with pytest.raises(SimulationOverflow) as info:
            run_closed_loop(spec, NoiseConfig.from_seed(0), burn_in=0, n=10)
        assert info.value.step == 1

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            run_closed_loop(SystemSpec(ARX1), NoiseConfig.from_seed(0), burn_in=-1, n=10)
        with pytest.raises(ValueError):
            run_closed_loop(SystemSpec(ARX1), NoiseConfig.from_seed(0), burn_in=0, n=0)


class TestLongRun:
    def test_output_power_limit(self, model_spec):
        trace, _ = run_closed_loop(model_spec, NoiseConfig.from_seed(17), burn_in=100, n=100_000)
        x = trace.x_out[trace.burn_in + 1 :]
        assert np.isfinite(np.abs(trace.x_out).max())
        target = model_spec.sigma2 + model_spec.nu2
        assert abs(np.mean(x**2) / target - 1) < 0.10
        # sigma2 = 1, nu2 = 4: the tighter 5% band
        assert abs(np.mean(x**2) - 5.0) < 0.25
        assert abs(np.var(trace.xi) / model_spec.nu2 - 1) < 0.05


class TestCsvExport:
    def test_schema(self):
        trace, _ = run_closed_loop(SystemSpec(ARX1), NoiseConfig.from_seed(3), burn_in=4, n=6)
        rows = list(csv.DictReader(io.StringIO(trace.to_csv())))
        assert list(rows[0]) == ["k", "X", "U", "x_ref", "xi", "burn_in"]
        assert len(rows) == 11
        assert [int(r["burn_in"]) for r in rows] == [1] * 4 + [0] * 7
        assert rows[0]["xi"] == "" and rows[-1]["U"] == ""
        np.testing.assert_array_equal([float(r["X"]) for r in rows], trace.x_out)
        np.testing.assert_array_equal([float(r["xi"]) for r in rows[1:]], trace.xi)
