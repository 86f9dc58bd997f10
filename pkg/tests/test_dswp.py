import math

import numpy as np
import pytest

from wavenmpc.dswp import (DisturbancePreview, ElevationRecord, EmptyPredictionHorizonError,
                           NonUniformSampleError, NoPredictableComponentsError,
                           ReconstructedSpectrum, RecordBuffer, WavePredictor,
                           estimate_spectrum, predict_disturbance, predict_elevation,
                           predictable_region, region_from_celerities, write_preview_csv)
from wavenmpc.vehicle import field_wave_load
from wavenmpc.wave_field import (SeaState, SpectrumSpec, WaveComponent, full_kinematics,
                                 surface_elevation, synthesize_sea)

G = 9.81
DT = 0.1
J = 3000
DEPTH = 54.0


def grid_omega(n, samples=J, dt=DT):
    return 2 * math.pi * n / (samples * dt)


def single_sea(height, omega, phase=0.0, deep_water=True):
    comp = WaveComponent.from_frequency(height, omega, phase, DEPTH, deep_water=deep_water)
    return SeaState((comp,), DEPTH, second_order=False)


def probe_record(sea, samples=J, dt=DT):
    t = dt * np.arange(samples)
    return ElevationRecord(surface_elevation(sea, 0.0, t), dt)


def truth_kinematics(sea):
    return lambda x, z, t: full_kinematics(sea, x, z, t)


class TestRecordBuffer:
    def test_evicts_oldest(self):
        buf = RecordBuffer(0.5, DT)
        for i in range(6):
            buf.record_sample(float(i), i * DT)
        snap = buf.snapshot()
        assert len(buf) == 5
        assert list(snap.samples) == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert snap.t_start == pytest.approx(DT)

    def test_duration_bounded(self):
        buf = RecordBuffer(1.0, DT)
        for i in range(40):
            buf.record_sample(0.0, i * DT)
            assert buf.duration <= 1.0 + 1e-12

    def test_full_record_holds_3000_samples(self):
        buf = RecordBuffer(300.0, DT)
        for i in range(3000):
            buf.record_sample(0.0, i * DT)
        assert buf.full and len(buf) == 3000

    def test_rejects_irregular_timestamps(self):
        buf = RecordBuffer(1.0, DT).record_sample(0.0, 0.0)
        with pytest.raises(NonUniformSampleError):
            buf.record_sample(0.0, 0.25)

    def test_rejects_fractional_capacity(self):
        with pytest.raises(ValueError):
            RecordBuffer(1.05, 0.1 + 1e-3)


class TestEstimateSpectrum:
    def test_on_grid_sinusoid(self):
        w = grid_omega(25)
        t = DT * np.arange(J)
        spec = estimate_spectrum(ElevationRecord(1.5 * np.cos(w * t + 0.3), DT), amp_floor=1e-6)
        i = int(np.argmax(spec.amplitude))
        assert 1.485 <= spec.amplitude[i] <= 1.515
        assert spec.omega[i] == pytest.approx(w, rel=1e-12)
        # cos(w t + 0.3) = cos(k x - w t + eps) at x = 0 with eps = -0.3
        err = (spec.phase[i] - (-0.3)) % (2 * math.pi)
        assert min(err, 2 * math.pi - err) < 0.01

    def test_zero_record_has_no_components(self):
        with pytest.raises(NoPredictableComponentsError):
            estimate_spectrum(ElevationRecord(np.zeros(100), DT))

    @pytest.mark.parametrize("samples", [1000, 1001])
    def test_parseval(self, rng, samples):
        z = rng.normal(0.3, 1.0, samples)
        spec = estimate_spectrum(ElevationRecord(z, DT))
        A, w = spec.amplitude, spec.omega
        nyquist = np.isclose(w, math.pi / DT)
        power = np.sum(np.where(w == 0, A ** 2, np.where(nyquist, A ** 2, A ** 2 / 2)))
        assert power == pytest.approx(np.mean(z ** 2), rel=1e-6)
        ac = np.sum(np.where((w > 0) & ~nyquist, A ** 2 / 2, 0.0)) + np.sum(A[nyquist] ** 2)
        assert ac == pytest.approx(np.var(z), rel=1e-6)

    def test_band_and_floor(self, rng):
        rec = ElevationRecord(rng.normal(size=J), DT)
        spec = estimate_spectrum(rec, band=(0.4, 2.5), relative_floor=0.01)
        assert spec.omega.min() >= 0.4 and spec.omega.max() <= 2.5
        assert spec.amplitude.min() >= 0.01 * spec.amplitude.max() - 1e-15
        np.testing.assert_allclose(spec.wavenumber, spec.omega ** 2 / G)

    def test_rejects_band_beyond_nyquist(self):
        with pytest.raises(ValueError):
            estimate_spectrum(ElevationRecord(np.ones(10), DT), band=(40.0, 50.0))


class TestRegion:
    def test_two_celerities(self):
        r = region_from_celerities(5.0, 10.0, 50.0, 300.0)
        assert r.t_s == pytest.approx(10.0, abs=1e-12)
        assert r.t_f == pytest.approx(305.0, abs=1e-12)

    def test_from_spectrum_matches_deep_water_celerities(self):
        w_fast, w_slow = G / 10.0, G / 5.0
        w = np.array([w_fast, w_slow])
        spec = ReconstructedSpectrum(np.ones(2), np.zeros(2), w, w ** 2 / G, 0.0, 300.0)
        r = predictable_region(spec, 50.0, 300.0)
        assert (r.t_s, r.t_f) == pytest.approx((10.0, 305.0), abs=1e-12)

    def test_single_component_spans_record(self):
        spec = estimate_spectrum(probe_record(single_sea(1.0, grid_omega(40))), amp_floor=0.1)
        assert len(spec) == 1
        r = predictable_region(spec, 50.0)
        assert r.t_s == pytest.approx(50.0 * spec.omega[0] / G)
        assert r.duration == pytest.approx(300.0, abs=1e-9)

    def test_band_narrowing_never_shrinks(self, rng):
        rec = ElevationRecord(rng.normal(size=J), DT)
        durations = []
        for hi in (3.0, 2.5, 2.0, 1.5, 1.0):
            spec = estimate_spectrum(rec, band=(0.3, hi))
            durations.append(predictable_region(spec, 50.0).duration)
        assert all(b >= a - 1e-12 for a, b in zip(durations, durations[1:]))

    def test_empty_horizon(self):
        with pytest.raises(EmptyPredictionHorizonError):
            region_from_celerities(0.1, 100.0, 50.0, 10.0)

    def test_contains_boundaries(self):
        r = region_from_celerities(5.0, 10.0, 50.0, 300.0)
        assert list(r.contains([9.99, 10.0, 305.0, 305.01])) == [False, True, True, False]


class TestPredictElevation:
    def test_round_trip(self, rng):
        rec = ElevationRecord(rng.normal(size=J), DT, t_start=12.3)
        spec = estimate_spectrum(rec)
        pred = predict_elevation(spec, 0.0, rec.times)
        assert np.max(np.abs(pred.values - rec.samples)) < 1e-8

    def test_single_component_propagation(self):
        sea = single_sea(2.0, grid_omega(30), phase=1.1)
        spec = estimate_spectrum(probe_record(sea), relative_floor=0.01)
        region = predictable_region(spec, 50.0)
        t = np.linspace(*region.absolute, 400)
        pred = predict_elevation(spec, 50.0, t, region)
        assert not pred.out_of_region.any()
        amplitude = 1.0
        assert np.max(np.abs(pred.values - surface_elevation(sea, 50.0, t))) < 0.02 * amplitude

    def test_floor_above_peak_gives_zero(self):
        rec = probe_record(single_sea(2.0, grid_omega(30)))
        spec = estimate_spectrum(rec, amp_floor=5.0, allow_empty=True)
        assert spec.empty
        assert np.all(predict_elevation(spec, 50.0, np.arange(10.0)).values == 0.0)

    def test_out_of_region_flag(self, caplog):
        spec = estimate_spectrum(probe_record(single_sea(1.0, grid_omega(30))), amp_floor=0.1)
        region = predictable_region(spec, 50.0)
        a, b = region.absolute
        t = np.array([a - 1.0, a, 0.5 * (a + b), b, b + 1.0])
        pred = predict_elevation(spec, 50.0, t, region)
        assert list(pred.out_of_region) == [True, False, False, False, True]
        assert "outside the predictable region" in caplog.text

    def test_second_order_adds_bound_harmonic(self):
        spec = estimate_spectrum(probe_record(single_sea(2.0, grid_omega(30))), amp_floor=0.1)
        t = np.linspace(0, 20, 50)
        lin = predict_elevation(spec, 0.0, t).values
        nl = predict_elevation(spec, 0.0, t, second_order=True).values
        A, k = spec.amplitude[0], spec.wavenumber[0]
        assert np.max(np.abs(nl - lin)) == pytest.approx(0.5 * k * A * A, rel=1e-3)


class TestPredictDisturbance:
    def test_empty_spectrum_gives_zero_preview(self, params):
        rec = probe_record(single_sea(2.0, grid_omega(30)))
        spec = estimate_spectrum(rec, amp_floor=5.0, allow_empty=True)
        prev = predict_disturbance(spec, (50.0, -8.0, 0.0), 20, DT, 300.0, params, DEPTH)
        assert len(prev) == 20 and np.all(prev.loads == 0.0)

    def test_exact_spectrum_at_probe_matches_truth(self, params):
        sea = single_sea(2.78, grid_omega(42), phase=0.4)
        spec = estimate_spectrum(probe_record(sea), relative_floor=0.01)
        prev = predict_disturbance(spec, (0.0, -5.0, 0.1), 40, DT, 300.0, params, DEPTH)
        truth = field_wave_load(params, truth_kinematics(sea), 0.0, -5.0, 0.1, prev.times)
        scale = np.abs(truth).max(axis=0)
        assert np.all(np.abs(prev.loads - truth) <= 1e-6 * scale)

    def test_finite_depth_truth_within_five_percent(self, params):
        # deep-water filter against a finite-depth truth sea, W1 amplitude
        sea = single_sea(2.78, grid_omega(42), deep_water=False)
        spec = estimate_spectrum(probe_record(sea), relative_floor=0.01)
        region = predictable_region(spec, 50.0)
        t0 = region.absolute[0] + 1.0
        prev = predict_disturbance(spec, (50.0, -5.0, 0.0), 200, DT, t0, params, DEPTH, region)
        truth = field_wave_load(params, truth_kinematics(sea), 50.0, -5.0, 0.0, prev.times)
        peak = np.abs(truth).max(axis=0)
        assert np.all(np.abs(prev.loads - truth).max(axis=0) <= 0.05 * peak)

    def test_truncation_reports_shortfall(self, params):
        spec = estimate_spectrum(probe_record(single_sea(1.0, grid_omega(30))), amp_floor=0.1)
        region = predictable_region(spec, 50.0)
        t0 = region.absolute[1] - 5 * DT + 1e-6
        prev = predict_disturbance(spec, (50.0, -8.0, 0.0), 20, DT, t0, params, DEPTH, region)
        assert prev.truncated
        assert len(prev) + prev.shortfall == 20
        assert np.all(region.contains(prev.times))

    def test_rejects_vehicle_out_of_water(self, params):
        spec = estimate_spectrum(probe_record(single_sea(1.0, grid_omega(30))), amp_floor=0.1)
        with pytest.raises(ValueError):
            predict_disturbance(spec, (50.0, 1.0, 0.0), 5, DT, 0.0, params, DEPTH)

    def test_deterministic(self, params):
        sea = synthesize_sea(SpectrumSpec(2.78, 7.1, 64, seed=2), DEPTH)
        spec = estimate_spectrum(probe_record(sea), band=(0.4, 2.5), relative_floor=0.01)
        a = predict_disturbance(spec, (50.0, -8.0, 0.05), 20, DT, 320.0, params, DEPTH)
        b = predict_disturbance(spec, (50.0, -8.0, 0.05), 20, DT, 320.0, params, DEPTH)
        assert a.loads.tobytes() == b.loads.tobytes()

    def test_preview_csv(self, tmp_path):
        prev = DisturbancePreview(1.0, DT, np.arange(9.0).reshape(3, 3))
        path = tmp_path / "preview.csv"
        write_preview_csv(prev, path)
        rows = path.read_text().splitlines()
        assert rows[0] == "t,X_E,Z_E,M_E"
        assert [float(v) for v in rows[2].split(",")] == [1.1, 3.0, 4.0, 5.0]


class TestWavePredictor:
    def make(self, params, **kw):
        return WavePredictor(300.0, DT, DEPTH, params, band=(0.4, 2.5), **kw)

    def feed(self, pred, sea, n=J):
        for i in range(n):
            pred.record(float(surface_elevation(sea, 0.0, i * DT)), i * DT)

    def test_refresh_cadence(self, params):
        sea = single_sea(1.0, grid_omega(30))
        pred = self.make(params, refresh_period=1.0)
        self.feed(pred, sea)
        assert pred.ready
        first = pred.refresh(300.0)
        assert pred.refresh(300.5) is first
        assert pred.refresh(301.0) is not first

    def test_calm_sea_gives_zero_preview(self, params):
        pred = self.make(params)
        for i in range(J):
            pred.record(0.0, i * DT)
        prev = pred.preview((50.0, -8.0, 0.0), 300.0, 20)
        assert pred.region(50.0) is None
        assert np.all(prev.loads == 0.0)

    def test_preview_matches_offline_path(self, params):
        sea = synthesize_sea(SpectrumSpec(2.78, 7.1, 64, seed=4), DEPTH)
        pred = self.make(params)
        self.feed(pred, sea)
        online = pred.preview((50.0, -8.0, 0.0), 300.0, 20)
        spec = estimate_spectrum(probe_record(sea), band=(0.4, 2.5), relative_floor=0.01)
        offline = predict_disturbance(spec, (50.0, -8.0, 0.0), 20, DT, 300.0, params, DEPTH,
                                      predictable_region(spec, 50.0))
        np.testing.assert_array_equal(online.loads, offline.loads)

    def test_stale_spectrum_refreshed_to_cover_horizon(self, params):
        sea = synthesize_sea(SpectrumSpec(2.78, 7.1, 64, seed=4), DEPTH)
        pred = self.make(params, refresh_period=1.0)
        self.feed(pred, sea, J + 1)
        first = pred.refresh(300.0)
        for i in range(J + 1, J + 6):
            pred.record(float(surface_elevation(sea, 0.0, i * DT)), i * DT)
        prev = pred.preview((50.0, -8.0, 0.0), 300.5, 21)
        assert pred.spectrum is not first
        assert len(prev) == 21 and not prev.truncated
