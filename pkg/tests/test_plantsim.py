"""Simulator contract: value composition, crossings, labels, faults.

Golden values were computed by an independent generator implementation
(SplitMix64 reference + the documented value formula) and are frozen here;
the in-test oracle below reproduces them so drift in either side is caught.
"""

import dataclasses
import json
import math

import pytest

from smartline.core import METRICS
from smartline.errors import ExhaustedError, ParseError, ValidationError
from smartline.plantsim import (
    DegradationSpec,
    FaultSpec,
    MachineProfile,
    SimConfig,
    Simulator,
    common_metrics,
    config_from_dict,
    config_to_dict,
    default_profiles,
    generate_labeled_dataset,
    inject_faults,
    load_config,
    run_stream,
    save_config,
)

MASK = (1 << 64) - 1


def ref_mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return (z ^ (z >> 31)) & MASK


def ref_draw(seed, i):
    return ref_mix64((seed + i * 0x9E3779B97F4A7C15) & MASK)


def ref_fnv(name):
    h = 0xCBF29CE484222325
    for b in name.encode():
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def ref_float(u):
    return (u >> 11) * 2.0 ** -53


def oracle_value(profiles, seed, machine, tick, metric,
                 diurnal_amp=0.0, tick_ms=1000):
    """Independent recomputation of one emitted sensor value (no drift/faults)."""
    profile = next(p for p in profiles if p.machine == machine)
    metrics = [m for m in METRICS if m in profile.baselines]
    j = metrics.index(metric)
    sub = seed ^ ref_fnv(machine)
    base = 2 * (tick * len(metrics) + j)
    u1 = 1.0 - ref_float(ref_draw(sub, base + 1))
    u2 = ref_float(ref_draw(sub, base + 2))
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    diurnal = 1.0 + diurnal_amp * math.sin(
        2.0 * math.pi * (tick * tick_ms / 1000.0) / 86400.0)
    return profile.baselines[metric] * diurnal + profile.noise_sigma[metric] * z


def small_profile(machine="Formation Equipment", **overrides):
    fields = dict(
        machine=machine,
        baselines={"Temperature": 40.0, "VibrationLevel": 1.0},
        noise_sigma={"Temperature": 0.5, "VibrationLevel": 0.1},
        failure_thresholds={"VibrationLevel": 3.0},
    )
    fields.update(overrides)
    return MachineProfile(**fields)


@pytest.fixture(scope="module")
def stream():
    config = SimConfig(seed=42, ticks=10, profiles=default_profiles())
    readings, _ = run_stream(config)
    return {(r.machine, r.tick): r for r in readings}


class TestGoldenValues:
    """Seed-42 values frozen from the independent reference implementation."""

    GOLDENS = [
        ("Formation Equipment", 0, "Temperature", 41.63086667682957),
        ("Formation Equipment", 3, "PowerLoad", 120.92140273439547),
        ("AGV", 7, "GridUsage", 0.5282374857469683),
        ("Coating Machine", 2, "CoatingThickness", 124.10157457476136),
    ]

    @pytest.mark.parametrize("machine,tick,metric,expected", GOLDENS)
    def test_frozen_golden(self, stream, machine, tick, metric, expected):
        assert stream[(machine, tick)].values[metric] == pytest.approx(
            expected, rel=1e-12)

    def test_oracle_agrees_everywhere(self, stream):
        profiles = default_profiles()
        for (machine, tick), r in stream.items():
            for metric, value in r.values.items():
                expected = oracle_value(profiles, 42, machine, tick, metric)
                assert value == pytest.approx(expected, rel=1e-12), (
                    machine, tick, metric)


class TestValueComposition:
    def test_zero_sigma_emits_scaled_baseline_exactly(self):
        profile = small_profile(noise_sigma={"Temperature": 0.0,
                                             "VibrationLevel": 0.0})
        config = SimConfig(seed=1, ticks=5, profiles=(profile,),
                           diurnal_amplitude=0.2, tick_ms=3_600_000)
        readings, _ = run_stream(config)
        for r in readings:
            diurnal = 1.0 + 0.2 * math.sin(2.0 * math.pi * r.tick * 3600 / 86400)
            assert r.values["Temperature"] == 40.0 * diurnal
            assert r.values["VibrationLevel"] == 1.0 * diurnal

    def test_zero_sigma_metric_still_consumes_draws(self):
        # Silencing one metric must not shift the noise of the others.
        noisy = small_profile()
        muted = small_profile(noise_sigma={"Temperature": 0.0,
                                           "VibrationLevel": 0.1})
        r_noisy, _ = run_stream(SimConfig(seed=4, ticks=3, profiles=(noisy,)))
        r_muted, _ = run_stream(SimConfig(seed=4, ticks=3, profiles=(muted,)))
        for a, b in zip(r_noisy, r_muted):
            assert a.values["VibrationLevel"] == b.values["VibrationLevel"]

    def test_fault_adds_exact_sigma_multiple(self):
        profile = small_profile()
        fault = FaultSpec(machine=profile.machine, metric="Temperature",
                          start_tick=2, duration=2, magnitude_sigmas=6.0)
        base_cfg = SimConfig(seed=3, ticks=6, profiles=(profile,))
        fault_cfg = dataclasses.replace(base_cfg, faults=(fault,))
        base, _ = run_stream(base_cfg)
        spiked, _ = run_stream(fault_cfg)
        for b, s in zip(base, spiked):
            delta = s.values["Temperature"] - b.values["Temperature"]
            if 2 <= b.tick < 4:
                assert delta == pytest.approx(6.0 * 0.5, rel=1e-12)
            else:
                assert delta == 0.0
            assert s.values["VibrationLevel"] == b.values["VibrationLevel"]

    def test_determinism_across_runs(self):
        config = SimConfig(seed=42, ticks=50, profiles=default_profiles(),
                           diurnal_amplitude=0.1)
        first, _ = run_stream(config)
        second, _ = run_stream(config)
        assert first == second

    def test_different_seeds_differ(self):
        profile = small_profile()
        a, _ = run_stream(SimConfig(seed=1, ticks=5, profiles=(profile,)))
        b, _ = run_stream(SimConfig(seed=2, ticks=5, profiles=(profile,)))
        assert a != b

    def test_step_past_horizon_raises(self):
        sim = Simulator(SimConfig(seed=0, ticks=2, profiles=(small_profile(),)))
        sim.step()
        sim.step()
        with pytest.raises(ExhaustedError):
            sim.step()

    def test_values_in_canonical_metric_order(self):
        readings, _ = run_stream(
            SimConfig(seed=0, ticks=1, profiles=default_profiles()))
        for r in readings:
            keys = list(r.values)
            assert keys == [m for m in METRICS if m in keys]


class TestDegradations:
    def config(self, drift=0.05, start=10, seed=5, ticks=200):
        profile = small_profile()
        spec = DegradationSpec(machine=profile.machine,
                               metric="VibrationLevel",
                               start_tick=start, drift_per_tick=drift)
        return SimConfig(seed=seed, ticks=ticks, profiles=(profile,),
                         degradations=(spec,))

    def test_crossing_is_first_emitted_threshold_hit(self):
        readings, crossings = run_stream(self.config())
        assert len(crossings) == 1
        c = crossings[0]
        by_tick = {r.tick: r.values["VibrationLevel"] for r in readings}
        assert by_tick[c.tick] >= 3.0
        for t in range(10, c.tick):
            assert by_tick[t] < 3.0

    def test_drift_resets_after_crossing(self):
        # Post-crossing the machine runs repaired: values return to the
        # baseline noise band instead of staying pinned above threshold.
        readings, crossings = run_stream(self.config(ticks=300))
        c = crossings[0]
        post = [r.values["VibrationLevel"] for r in readings
                if r.tick > c.tick + 5]
        assert post
        assert max(post) < 2.0

    def test_drift_magnitude_before_crossing(self):
        cfg = self.config(drift=0.05, start=10, seed=6)
        clean = dataclasses.replace(cfg, degradations=())
        degraded, _ = run_stream(cfg)
        baseline, _ = run_stream(clean)
        for d, b in zip(degraded, baseline):
            if 10 <= d.tick < 20:  # well before any plausible crossing
                expected = 0.05 * (d.tick - 10 + 1)
                delta = d.values["VibrationLevel"] - b.values["VibrationLevel"]
                assert delta == pytest.approx(expected, rel=1e-12)

    def test_wrong_direction_drift_rejected(self):
        profile = small_profile()
        spec = DegradationSpec(machine=profile.machine,
                               metric="VibrationLevel",
                               start_tick=0, drift_per_tick=-0.05)
        with pytest.raises(ValidationError):
            SimConfig(seed=0, ticks=10, profiles=(profile,),
                      degradations=(spec,)).validate()

    def test_downward_threshold_supported(self):
        profile = small_profile(
            baselines={"BatteryCapacity": 0.9},
            noise_sigma={"BatteryCapacity": 0.01},
            failure_thresholds={"BatteryCapacity": 0.2})
        spec = DegradationSpec(machine=profile.machine,
                               metric="BatteryCapacity",
                               start_tick=0, drift_per_tick=-0.01)
        readings, crossings = run_stream(
            SimConfig(seed=7, ticks=200, profiles=(profile,),
                      degradations=(spec,)))
        assert len(crossings) == 1
        by_tick = {r.tick: r.values["BatteryCapacity"] for r in readings}
        assert by_tick[crossings[0].tick] <= 0.2


class TestLabels:
    def test_exactly_horizon_positives_per_crossing(self):
        profile = small_profile()
        spec = DegradationSpec(machine=profile.machine,
                               metric="VibrationLevel",
                               start_tick=20, drift_per_tick=0.05)
        config = SimConfig(seed=9, ticks=300, profiles=(profile,),
                           degradations=(spec,))
        horizon = 20
        ds = generate_labeled_dataset(config, horizon=horizon)
        assert len(ds.crossings) == 1
        c = ds.crossings[0].tick
        positive_ticks = sorted(int(t) for t, y in zip(ds.ticks, ds.y) if y == 1)
        assert positive_ticks == list(range(c - horizon, c))

    def test_label_window_excludes_crossing_tick_itself(self):
        profile = small_profile()
        spec = DegradationSpec(machine=profile.machine,
                               metric="VibrationLevel",
                               start_tick=20, drift_per_tick=0.05)
        ds = generate_labeled_dataset(
            SimConfig(seed=9, ticks=300, profiles=(profile,),
                      degradations=(spec,)), horizon=20)
        c = ds.crossings[0].tick
        label_at = {int(t): int(y) for t, y in zip(ds.ticks, ds.y)}
        assert label_at[c] == 0
        assert label_at[c - 1] == 1
        assert label_at[c - 20] == 1
        assert label_at[c - 21] == 0

    def test_no_degradations_sets_warning(self):
        ds = generate_labeled_dataset(
            SimConfig(seed=1, ticks=30, profiles=(small_profile(),)),
            horizon=5)
        assert ds.warning is not None
        assert ds.y.sum() == 0

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValidationError):
            generate_labeled_dataset(
                SimConfig(seed=1, ticks=30, profiles=(small_profile(),)),
                horizon=0)

    def test_feature_names_are_shared_metrics(self):
        ds = generate_labeled_dataset(
            SimConfig(seed=1, ticks=30, profiles=default_profiles()),
            horizon=5)
        assert ds.feature_names == common_metrics(default_profiles())
        assert ds.X.shape == (30 * 6, len(ds.feature_names))


class TestInjectFaults:
    def test_outside_stream_range_rejected(self):
        profile = small_profile()
        readings, _ = run_stream(SimConfig(seed=1, ticks=10,
                                           profiles=(profile,)))
        bad = FaultSpec(machine=profile.machine, metric="Temperature",
                        start_tick=8, duration=5, magnitude_sigmas=3.0)
        with pytest.raises(ValidationError):
            inject_faults(readings, [bad], (profile,))

    def test_overlapping_faults_rejected(self):
        profile = small_profile()
        readings, _ = run_stream(SimConfig(seed=1, ticks=20,
                                           profiles=(profile,)))
        f1 = FaultSpec(profile.machine, "Temperature", 2, 5, 3.0)
        f2 = FaultSpec(profile.machine, "Temperature", 4, 5, 3.0)
        with pytest.raises(ValidationError):
            inject_faults(readings, [f1, f2], (profile,))

    def test_injection_matches_simulated_fault(self):
        # Post-hoc injection and in-sim faults are the same transformation.
        profile = small_profile()
        fault = FaultSpec(profile.machine, "Temperature", 3, 4, 5.0)
        cfg = SimConfig(seed=11, ticks=12, profiles=(profile,))
        clean, _ = run_stream(cfg)
        in_sim, _ = run_stream(dataclasses.replace(cfg, faults=(fault,)))
        injected, truth = inject_faults(clean, [fault], (profile,))
        assert injected == in_sim
        assert len(truth) == 1
        assert (truth[0].start_tick, truth[0].end_tick) == (3, 7)

    def test_input_stream_not_modified(self):
        profile = small_profile()
        readings, _ = run_stream(SimConfig(seed=1, ticks=10,
                                           profiles=(profile,)))
        before = [dict(r.values) for r in readings]
        inject_faults(readings,
                      [FaultSpec(profile.machine, "Temperature", 2, 3, 4.0)],
                      (profile,))
        assert [dict(r.values) for r in readings] == before


class TestConfigFiles:
    def test_round_trip(self, tmp_path):
        config = SimConfig(
            seed=7, ticks=100, profiles=default_profiles(),
            diurnal_amplitude=0.15, tick_ms=2000,
            degradations=(DegradationSpec("Formation Equipment",
                                          "VibrationLevel", 50, 0.01),),
            faults=(FaultSpec("AGV", "Temperature", 10, 3, 4.0),))
        path = str(tmp_path / "sim.json")
        save_config(config, path)
        assert load_config(path) == config

    def test_dict_round_trip(self):
        config = SimConfig(seed=1, ticks=10, profiles=(small_profile(),))
        assert config_from_dict(config_to_dict(config)) == config

    def test_bad_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  broken\n}")
        with pytest.raises(ParseError, match="line"):
            load_config(str(path))

    def test_unsupported_version_rejected(self):
        doc = config_to_dict(SimConfig(seed=1, ticks=10,
                                       profiles=(small_profile(),)))
        doc["version"] = 99
        with pytest.raises(ParseError):
            config_from_dict(doc)


class TestConfigValidation:
    def test_amplitude_bounds(self):
        with pytest.raises(ValidationError):
            SimConfig(seed=0, ticks=10, profiles=(small_profile(),),
                      diurnal_amplitude=1.0).validate()

    def test_duplicate_machines_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(seed=0, ticks=10,
                      profiles=(small_profile(), small_profile())).validate()

    def test_fraction_metric_range_enforced(self):
        with pytest.raises(ValidationError):
            MachineProfile(
                machine="AGV",
                baselines={"MachineLoad": 2.0},
                noise_sigma={"MachineLoad": 0.1},
                failure_thresholds={},
            ).validate()

    def test_degradation_needs_threshold(self):
        profile = small_profile(failure_thresholds={})
        spec = DegradationSpec(profile.machine, "VibrationLevel", 0, 0.01)
        with pytest.raises(ValidationError):
            SimConfig(seed=0, ticks=10, profiles=(profile,),
                      degradations=(spec,)).validate()

    def test_default_profiles_json_is_valid(self):
        doc = json.loads(
            __import__("importlib.resources", fromlist=["files"])
            .files("smartline.data").joinpath("default_profiles.json")
            .read_text())
        assert doc["version"] == 1
        for p in default_profiles():
            p.validate()
