import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from highlights.energy import (DEFAULT_CARBON_INTENSITY, DEFAULT_PUE,
                               EnergyParams, carbon_footprint, memory_power,
                               session_report)


def params(**kw):
    base = dict(t_hours=1.0, n_cores=1, core_watts=100.0)
    base.update(kw)
    return EnergyParams(**base)


class TestDefaults:
    def test_pue(self):
        assert EnergyParams().pue == 1.10

    def test_carbon_intensity(self):
        assert EnergyParams().carbon_intensity == 475.0
        assert DEFAULT_PUE == 1.10 and DEFAULT_CARBON_INTENSITY == 475.0


class TestMemoryPower:
    def test_eight_gb(self):
        assert abs(memory_power(8.0) - 2.98) < 1e-9

    def test_zero(self):
        assert memory_power(0.0) == 0.0

    def test_negative(self):
        with pytest.raises(ValueError):
            memory_power(-1.0)


class TestCarbonFootprint:
    def test_derived_case(self):
        # 1 h at 100 W, PUE 1.10, CI 475 -> 0.1 kWh -> 52.25 g
        report = carbon_footprint(params())
        assert abs(report.grams_co2e - 52.25) < 1e-9
        assert abs(report.kwh - 0.1) < 1e-12

    def test_component_breakdown(self):
        p = params(n_cores=2, core_watts=50.0, core_usage=0.5,
                   n_gpus=1, gpu_watts=200.0, gpu_usage=0.25, mem_gb=8.0)
        report = carbon_footprint(p)
        assert report.cpu_watts == 50.0
        assert report.gpu_watts == 50.0
        assert abs(report.memory_watts - 2.98) < 1e-9

    def test_zero_everything(self):
        report = carbon_footprint(EnergyParams())
        assert report.grams_co2e == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            EnergyParams(t_hours=-1.0)
        with pytest.raises(ValueError):
            EnergyParams(core_usage=1.5)
        with pytest.raises(ValueError):
            EnergyParams(gpu_usage=-0.1)

    @given(st.floats(0.0, 100.0), st.floats(0.1, 10.0))
    def test_linearity_in_time(self, hours, scale):
        base = carbon_footprint(params(t_hours=hours)).grams_co2e
        scaled = carbon_footprint(params(t_hours=hours * scale)).grams_co2e
        assert math.isclose(scaled, base * scale, rel_tol=1e-9, abs_tol=1e-9)

    @given(st.floats(0.0, 500.0), st.floats(0.0, 500.0))
    def test_monotone_in_power(self, w1, w2):
        lo, hi = sorted((w1, w2))
        a = carbon_footprint(params(core_watts=lo)).grams_co2e
        b = carbon_footprint(params(core_watts=hi)).grams_co2e
        assert a <= b

    @given(st.floats(0.0, 64.0), st.floats(0.0, 64.0))
    def test_monotone_in_memory(self, m1, m2):
        lo, hi = sorted((m1, m2))
        a = carbon_footprint(params(mem_gb=lo)).grams_co2e
        b = carbon_footprint(params(mem_gb=hi)).grams_co2e
        assert a <= b

    @given(st.floats(1.0, 2.0), st.floats(0.0, 1000.0))
    def test_linearity_in_pue_and_ci(self, pue, ci):
        base = carbon_footprint(params(pue=1.0, carbon_intensity=1.0)).grams_co2e
        full = carbon_footprint(params(pue=pue, carbon_intensity=ci)).grams_co2e
        assert math.isclose(full, base * pue * ci, rel_tol=1e-9, abs_tol=1e-9)

    def test_additivity_of_components(self):
        cpu = carbon_footprint(params()).grams_co2e
        gpu = carbon_footprint(EnergyParams(
            t_hours=1.0, n_gpus=1, gpu_watts=250.0)).grams_co2e
        both = carbon_footprint(params(n_gpus=1, gpu_watts=250.0)).grams_co2e
        assert math.isclose(both, cpu + gpu, rel_tol=1e-12)


class TestSessionReport:
    def test_wall_clock_and_sampled_usage(self):
        p = params(t_hours=0.0)
        report, per_epoch = session_report(
            2.0, p, sampled_core_usage=[1.0, 0.5], epochs=4)
        # 2 h at 100 W * 0.75 usage
        assert math.isclose(report.kwh, 2.0 * 75.0 * 0.001)
        assert math.isclose(per_epoch, report.grams_co2e / 4)

    def test_no_epochs(self):
        report, per_epoch = session_report(1.0, params())
        assert per_epoch is None
        assert report.grams_co2e > 0

    def test_negative_wall_clock(self):
        with pytest.raises(ValueError):
            session_report(-1.0, params())

    def test_as_dict_keys(self):
        report = carbon_footprint(params())
        assert set(report.as_dict()) == {"grams_co2e", "kwh", "cpu_w",
                                         "gpu_w", "mem_w"}
