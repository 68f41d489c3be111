import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lossqkd.channel import FiberSpan, LineModel
from lossqkd.losscontrol import (
    ConvergenceError,
    LossEvent,
    LossSeries,
    OTDRTrace,
    ProbeError,
    TraceParseError,
    TransmitProbe,
    alarm_onsets,
    detect_intervention,
    exceedance_probability,
    l1_trend_filter,
    localize_losses,
    lockin_amplitude,
    loss_estimate,
    read_events_json,
    simulate_loss_series,
    solve_trend,
    splice_leak_budget,
    synthesize_otdr,
    trend_objective,
    write_events_json,
)
from lossqkd.losscontrol.l1filter import affine_fit

PROBE = TransmitProbe()


# ---------------------------------------------------------------- lock-in
@pytest.mark.parametrize("amp, phase", [(1.0, 0.0), (0.37, 1.1), (250.0, -2.0)])
def test_lockin_exact_on_pure_sinusoid(amp, phase):
    assert lockin_amplitude(PROBE.waveform(amp, phase), PROBE) == pytest.approx(amp, rel=1e-9)


def test_lockin_zero_signal():
    assert lockin_amplitude(np.zeros(PROBE.n_samples), PROBE) == 0.0


def test_lockin_within_one_percent_at_20db_snr():
    probe = TransmitProbe(duration=1e-5)
    sigma = math.sqrt(0.5 / 100)  # signal power A^2/2 over noise power = 100
    rng = np.random.default_rng(0)
    x = probe.waveform(1.0) + sigma * rng.standard_normal((100, probe.n_samples))
    est = lockin_amplitude(x, probe)
    assert est.shape == (100,)
    assert np.all(np.abs(est - 1.0) < 0.01)


@pytest.mark.parametrize(
    "kw",
    [dict(sample_rate=50e6), dict(duration=1.01e-7), dict(carrier_freq=0.0), dict(sample_rate=125e6 + 1, duration=1e-6)],
)
def test_probe_rejects_ambiguous_settings(kw):
    with pytest.raises(ProbeError):
        TransmitProbe(**kw)


def test_lockin_rejects_wrong_length():
    with pytest.raises(ProbeError):
        lockin_amplitude(np.zeros(10), PROBE)


# ---------------------------------------------------------------- loss estimate
def test_loss_estimate_examples():
    assert loss_estimate(2.0, 2.0) == 0.0
    assert loss_estimate(0.99, 1.0) == pytest.approx(0.01)
    assert loss_estimate(1.01, 1.0) == pytest.approx(-0.01)
    with pytest.raises(ValueError):
        loss_estimate(1.0, 0.0)


@given(st.floats(0, 10), st.floats(1e-3, 10), st.floats(1e-3, 1e3))
def test_loss_estimate_scale_invariant(a_t, a_ref, c):
    assert loss_estimate(c * a_t, c * a_ref) == pytest.approx(loss_estimate(a_t, a_ref), rel=1e-12, abs=1e-12)


def test_loss_series_validation():
    t = np.arange(4.0)
    ok = LossSeries(t, np.zeros(4), np.array([1.0, 1.0, 2.0, 2.0]), np.array([0, 2]))
    assert len(ok) == 4
    with pytest.raises(ValueError):
        LossSeries(t, np.zeros(4), np.array([1.0, 1.5, 2.0, 2.0]), np.array([0, 2]))
    with pytest.raises(ValueError):
        LossSeries(t, np.zeros(4), np.ones(4), np.array([1]))
    with pytest.raises(ValueError):
        LossSeries(t, np.zeros(3), np.ones(4), np.array([0]))


def test_cumulative_losses_follow_the_first_reference():
    s = LossSeries.from_amplitudes([1.0, 0.99, 0.98, 0.98], [1.0, 0.99], refresh_every=2)
    assert s.losses == pytest.approx([0.0, 0.01, 1 - 0.98 / 0.99, 1 - 0.98 / 0.99])
    assert s.cumulative_losses() == pytest.approx([0.0, 0.01, 0.02, 0.02])


def test_injected_tap_shifts_mean_loss():
    s = simulate_loss_series(4000, tap_loss=0.01, tap_epoch=2000, rng=1)
    cum = s.cumulative_losses()
    assert cum[2000:].mean() - cum[:2000].mean() == pytest.approx(0.01, abs=0.0005)


# ---------------------------------------------------------------- detection
def test_constant_series_has_no_alarms():
    s = LossSeries.from_amplitudes(np.ones(500), np.ones(100), refresh_every=5)
    assert detect_intervention(s, 0.002) == []


def test_one_percent_step_alarms_at_step():
    s = simulate_loss_series(300, tap_loss=0.01, tap_epoch=150, rng=3)
    onsets = alarm_onsets(detect_intervention(s, 0.002))
    assert len(onsets) == 1
    assert abs(onsets[0] - 150) <= 1


def test_one_percent_step_onset_within_one_epoch_in_most_seeds():
    hits = 0
    for seed in range(200):
        s = simulate_loss_series(200, tap_loss=0.01, tap_epoch=100, rng=seed)
        onsets = alarm_onsets(detect_intervention(s, 0.002))
        hits += bool(onsets) and abs(onsets[0] - 100) <= 1
    assert hits >= 196


def test_sub_threshold_step_exceedance_rate_matches_tail():
    p = exceedance_probability(0.004, 0.002)
    assert p == pytest.approx(stats.norm.sf(1.0))
    rng = np.random.default_rng(4)
    step = 0.004 + 0.002 * rng.standard_normal(10**5)
    assert np.mean(step > 0.006) == pytest.approx(p, abs=0.005)
    with pytest.raises(ValueError):
        exceedance_probability(0.01, 0.0)


def test_detector_validation():
    s = simulate_loss_series(50, rng=0)
    with pytest.raises(ValueError):
        detect_intervention(s, 0.0)
    with pytest.raises(ValueError):
        detect_intervention(s, 0.002, persistence=0)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.03), st.floats(0.0, 0.03), st.integers(40, 160))
def test_alarms_monotone_in_tap_size(seed, t1, t2, tap_epoch):
    lo, hi = sorted((t1, t2))
    small = detect_intervention(simulate_loss_series(200, tap_loss=lo, tap_epoch=tap_epoch, rng=seed), 0.002)
    large = detect_intervention(simulate_loss_series(200, tap_loss=hi, tap_epoch=tap_epoch, rng=seed), 0.002)
    assert len(large) >= len(small)


def test_waveform_mode_detects_step():
    probe = TransmitProbe(duration=2e-6)
    s = simulate_loss_series(120, tap_loss=0.01, tap_epoch=60, rng=5, probe=probe, waveform=True)
    onsets = alarm_onsets(detect_intervention(s, 0.002))
    assert onsets and 60 <= onsets[0] < 70


# ---------------------------------------------------------------- reflectograms
def test_single_span_trace_slope():
    tr = synthesize_otdr(LineModel((FiberSpan(20, 0.2),)), noise_std=0.0)
    slope = np.polyfit(tr.distance_km, tr.power_db, 1)[0]
    assert slope == pytest.approx(-0.4, rel=1e-9)
    assert tr.power_db[0] == 0.0


def test_amplified_line_has_21_up_jumps():
    line = LineModel.amplified(21, 50.0, 0.2, 10.0, tail_km=29.0)
    tr = synthesize_otdr(line, noise_std=0.0)
    d = np.diff(tr.power_db)
    assert np.count_nonzero(d > 1.0) == 21


def test_leak_step_height():
    line = LineModel((FiberSpan(100, 0.2),))
    with_leak = synthesize_otdr(line, [LossEvent(50.0, 0.03)], noise_std=0.0)
    without = synthesize_otdr(line, noise_std=0.0)
    diff = with_leak.power_db - without.power_db
    assert diff[-1] == pytest.approx(20 * math.log10(0.97))
    assert diff[with_leak.distance_km < 50.0].max() == 0.0


def test_event_outside_line_rejected():
    with pytest.raises(ValueError):
        synthesize_otdr(LineModel((FiberSpan(10, 0.2),)), [LossEvent(11.0, 0.01)])


def test_noise_scales_with_averaging():
    line = LineModel((FiberSpan(200, 0.2),))
    clean = synthesize_otdr(line, noise_std=0.0)
    noisy = synthesize_otdr(line, noise_std=2.0, averages=16, rng=0)
    assert np.std(noisy.power_db - clean.power_db) == pytest.approx(0.5, rel=0.1)


def test_event_validation():
    with pytest.raises(ValueError):
        LossEvent(1.0, 1.0)
    with pytest.raises(ValueError):
        LossEvent(1.0, -0.1, "leak")
    with pytest.raises(ValueError):
        LossEvent(1.0, 0.1, "amplifier")
    with pytest.raises(ValueError):
        LossEvent(1.0, 0.1, "bend")
    ev = LossEvent.from_step(3.0, 20 * math.log10(0.97))
    assert ev.kind == "leak" and ev.magnitude == pytest.approx(0.03)
    assert LossEvent.from_step(3.0, 20.0).kind == "amplifier"


def test_trace_csv_round_trip(tmp_path):
    tr = synthesize_otdr(LineModel((FiberSpan(5, 0.2),)), rng=1)
    tr.write_csv(tmp_path / "t.csv")
    back = OTDRTrace.read_csv(tmp_path / "t.csv")
    assert np.array_equal(back.distance_km, tr.distance_km)
    assert np.array_equal(back.power_db, tr.power_db)
    assert back.resolution_km == pytest.approx(tr.resolution_km)
    assert back.pulse_duration_s == pytest.approx(tr.pulse_duration_s)


@pytest.mark.parametrize(
    "body",
    ["distance_km,power_dB\n0,1\n1,x\n2,3\n", "0,1\n1,2,3\n", "0,1\n0,2\n1,3\n", "0,1\n1,2\n", "0,1\n1,nan\n2,2\n"],
)
def test_malformed_trace_csv(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(TraceParseError):
        OTDRTrace.read_csv(path)


def test_trace_validation():
    with pytest.raises(ValueError):
        OTDRTrace(np.arange(3.0), np.array([0.0, np.inf, 1.0]), 1.0, 1e-6)
    with pytest.raises(ValueError):
        OTDRTrace(np.arange(3.0), np.zeros(3), 0.0, 1e-6)


def test_events_json_round_trip(tmp_path):
    events = [LossEvent(1035.0, 0.03), LossEvent(50.0, -9.0, "amplifier"), LossEvent(7.5, 0.002, "splice")]
    write_events_json(tmp_path / "e.json", events)
    assert read_events_json(tmp_path / "e.json") == events


# ---------------------------------------------------------------- L1 trend filter
def test_zero_lambda_is_identity():
    y = np.random.default_rng(0).standard_normal(100)
    assert solve_trend(y, 0.0).x == pytest.approx(y)


def test_affine_input_is_fixed_point():
    y = 3.0 - 0.4 * np.arange(300)
    assert np.abs(solve_trend(y, 5.0).x - y).max() < 1e-6


def test_kinked_input_is_recovered_as_lambda_vanishes():
    y = np.r_[np.linspace(0, -10, 50), np.linspace(-10.2, -15, 50)]
    errs = [np.abs(solve_trend(y, lam).x - y).max() for lam in (1.0, 0.1)]
    assert errs[1] < errs[0] and errs[1] < 1e-3


def test_large_lambda_gives_affine_fit():
    y = np.random.default_rng(1).standard_normal(200).cumsum()
    assert solve_trend(y, 1e7).x == pytest.approx(affine_fit(y), abs=1e-4)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
@settings(max_examples=30)
def test_filter_descends_objective(seed, lam):
    y = np.random.default_rng(seed).standard_normal(80).cumsum()
    fit = solve_trend(y, lam)
    assert fit.objective <= trend_objective(y, y, lam) + 1e-9
    assert fit.duality_gap < 1e-6 * max(1.0, abs(fit.objective))


def test_filter_reduces_rmse_three_fold():
    line = LineModel((FiberSpan(30, 0.2), FiberSpan(40, 0.25), FiberSpan(30, 0.18)))
    clean = synthesize_otdr(line, noise_std=0.0)
    noisy = synthesize_otdr(line, noise_std=2.0, averages=1, rng=0)
    filtered = l1_trend_filter(noisy, 10.0)
    raw = np.sqrt(np.mean((noisy.power_db - clean.power_db) ** 2))
    out = np.sqrt(np.mean((filtered.power_db - clean.power_db) ** 2))
    assert raw / out >= 3.0
    assert isinstance(filtered, OTDRTrace)


def test_admm_agrees_with_interior_point():
    y = np.random.default_rng(2).standard_normal(150).cumsum()
    a = solve_trend(y, 2.0, method="ipm")
    b = solve_trend(y, 2.0, method="admm", max_iter=100_000, tol=1e-9)
    assert b.objective == pytest.approx(a.objective, rel=1e-5)


def test_iteration_cap_raises_with_residuals():
    y = np.random.default_rng(3).standard_normal(500).cumsum()
    with pytest.raises(ConvergenceError) as info:
        solve_trend(y, 1.0, method="admm", max_iter=3)
    assert info.value.iterations == 3
    with pytest.raises(ValueError):
        solve_trend(y, -1.0)


# ---------------------------------------------------------------- localization
def test_flat_trace_has_no_events():
    tr = OTDRTrace(np.arange(200.0), np.zeros(200), 1.0, 1e-6)
    assert localize_losses(tr) == []
    sloped = tr.with_power(-0.4 * np.arange(200.0))
    assert localize_losses(sloped) == []


def test_noiseless_leak_and_amplifier_classified():
    line = LineModel.amplified(1, 50.0, 0.2, tail_km=50.0)
    tr = synthesize_otdr(line, [LossEvent(75.0, 0.03)], noise_std=0.0)
    events = localize_losses(tr)
    kinds = sorted(e.kind for e in events)
    assert kinds == ["amplifier", "leak"]
    leak = next(e for e in events if e.kind == "leak")
    assert abs(leak.position_km - 75.0) <= tr.resolution_km
    assert leak.magnitude == pytest.approx(0.03, abs=1e-6)
    amp = next(e for e in events if e.kind == "amplifier")
    assert amp.magnitude < 0
    assert abs(amp.position_km - 50.0) <= tr.resolution_km


def test_known_splice_is_not_a_leak():
    tr = synthesize_otdr(LineModel((FiberSpan(40, 0.2),)), [LossEvent(20.0, 0.02)], noise_std=0.0)
    (ev,) = localize_losses(tr, known_splices_km=[20.0])
    assert ev.kind == "splice"


# ---------------------------------------------------------------- splice budget
def test_splice_budget_examples():
    assert splice_leak_budget(0.9935, 0.0, 0.26) == pytest.approx(0.00169, abs=1e-6)
    assert splice_leak_budget(1.0, 0.0, 0.5) == 0.0
    assert splice_leak_budget(0.9, 0.05, 0.0) == 0.0


@pytest.mark.parametrize("args", [(0.9, 0.2, 0.5), (-0.1, 0.0, 0.5), (0.9, 0.0, 1.5)])
def test_splice_budget_validation(args):
    with pytest.raises(ValueError):
        splice_leak_budget(*args)
