import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossqkd.channel import (
    BASELINE_PULSES,
    CALIBRATED_BOB,
    Amplifier,
    FiberSpan,
    GaussianCalibrated,
    LineModel,
    PoissonIdeal,
    PulseSpec,
    TruncationError,
    analytic_pmf,
    end_to_end_mean,
    eve_model,
    EveTap,
    fock_cutoff,
    interval_mass,
    read_samples_csv,
    sample_bob,
    sample_bob_stream,
    sample_eve,
    write_samples_csv,
)


def long_line(**kw):
    return LineModel.amplified(21, 50.0, 0.2, 10.0, tail_km=29.0, **kw)


def test_span_and_amplifier_arithmetic():
    assert FiberSpan(50, 0.2).loss_db == pytest.approx(10.0)
    assert FiberSpan(50, 0.2).transmittance == pytest.approx(0.1)
    assert Amplifier(10).gain == pytest.approx(10.0)


@pytest.mark.parametrize("bad", [lambda: FiberSpan(0), lambda: FiberSpan(1, -0.1), lambda: Amplifier(-1), lambda: Amplifier(1, -1)])
def test_invalid_elements_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_line_geometry():
    line = long_line()
    assert line.length_km == pytest.approx(1079.0)
    assert line.amplifier_positions_km == pytest.approx([50.0 * (i + 1) for i in range(21)])


def test_compensated_line_returns_tail_loss_only():
    # 21 compensated spans then 29 km at 0.2 dB/km
    assert end_to_end_mean(long_line(), 1e4) == pytest.approx(1e4 * 10 ** (-0.58))


def test_receiver_gain_restores_launch_power():
    line = long_line(receiver_gain_db=5.8)
    assert end_to_end_mean(line, 12300) == pytest.approx(12300)


def test_ase_is_carried_downstream():
    line = LineModel((FiberSpan(50, 0.2), Amplifier(10, ase_noise_photons=3.0), FiberSpan(50, 0.2)))
    assert end_to_end_mean(line, 100) == pytest.approx((100 * 0.1 * 10 + 3) * 0.1)


def test_empty_line_and_bad_element_rejected():
    with pytest.raises(ValueError):
        LineModel(())
    with pytest.raises(TypeError):
        LineModel((FiberSpan(1), "amp"))


@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_end_to_end_mean_is_linear(a, b):
    line = long_line()
    assert end_to_end_mean(line, a + b) == pytest.approx(end_to_end_mean(line, a) + end_to_end_mean(line, b), rel=1e-12, abs=1e-9)


def test_pulse_spec_ordering():
    with pytest.raises(ValueError):
        PulseSpec(5, 5)
    with pytest.raises(ValueError):
        PulseSpec(6, 5)
    assert BASELINE_PULSES.mean(1) == 13700
    with pytest.raises(ValueError):
        BASELINE_PULSES.mean(2)


def test_eve_tap_bounds():
    with pytest.raises(ValueError):
        EveTap(1.5)
    m = eve_model(BASELINE_PULSES, EveTap(0.01))
    assert m.mean(0) == pytest.approx(123.0)


def test_fock_cutoff_tail_below_1e12():
    from scipy import stats

    for mu in (0.0, 1.0, 50.0, 5000.0):
        assert stats.poisson.sf(fock_cutoff(mu), mu) < 1e-12


def test_poisson_pmf_sums_to_one_and_truncation_detected():
    m = PoissonIdeal(30.0, 40.0)
    pmf = analytic_pmf(m, 1)
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert pmf.mean == pytest.approx(40.0, rel=1e-9)
    with pytest.raises(TruncationError):
        analytic_pmf(m, 1, grid=np.arange(45))


def test_gaussian_pmf_bins_and_truncation():
    pmf = analytic_pmf(CALIBRATED_BOB, 0)
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert pmf.mean == pytest.approx(CALIBRATED_BOB.loc0, abs=1e-6)
    with pytest.raises(TruncationError):
        analytic_pmf(CALIBRATED_BOB, 0, grid=np.linspace(0.1, 0.2, 50))


def test_interval_mass_inclusive_for_counts():
    m = PoissonIdeal(3.0, 4.0)
    from scipy import stats

    assert interval_mass(m, 0, 3, 3) == pytest.approx(stats.poisson.pmf(3, 3.0))


@pytest.mark.parametrize("model", [PoissonIdeal(50.0, 70.0), CALIBRATED_BOB])
def test_sampling_moments_match_model(model):
    rng = np.random.default_rng(0)
    for bit in (0, 1):
        x = sample_bob(model, bit, 200_000, rng)
        se = model.std(bit) / math.sqrt(x.size)
        assert abs(x.mean() - model.mean(bit)) < 5 * se
        assert x.std() == pytest.approx(model.std(bit), rel=0.02)


def test_sampling_is_seeded():
    a = sample_bob(CALIBRATED_BOB, 1, 10, 42)
    b = sample_bob(CALIBRATED_BOB, 1, 10, 42)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_bob(CALIBRATED_BOB, 1, 0)


def test_stream_sampling_uses_sent_bits():
    bits = np.array([0, 1] * 5000)
    x = sample_bob_stream(PoissonIdeal(10.0, 1000.0), bits, 1)
    assert np.all((x > 300) == (bits == 1))


def test_eve_samples_are_poisson_in_the_tap():
    x = sample_eve(BASELINE_PULSES, EveTap(0.01), 1, 100_000, 3)
    assert x.mean() == pytest.approx(137.0, rel=0.01)


def test_gaussian_scaled_and_photons():
    m = GaussianCalibrated(1.0, 2.0, 0.1, 0.2, volts_per_photon=0.5)
    s = m.scaled(2.0, 1.0)
    assert (s.loc0, s.loc1, s.scale0, s.scale1) == (3.0, 5.0, 0.2, 0.4)
    assert m.to_photons(1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        m.scaled(0, 1)


def test_samples_csv_round_trip(tmp_path):
    bits = np.array([0, 1, 1, 0], dtype=np.uint8)
    values = np.array([0.1, 2.5, 1e-300, -3.0])
    write_samples_csv(tmp_path / "s.csv", bits, values)
    b, v = read_samples_csv(tmp_path / "s.csv")
    assert np.array_equal(b, bits)
    assert np.array_equal(v, values)
