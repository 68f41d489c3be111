"""Randomness battery checked against the worked examples of SP 800-22."""
import numpy as np
import pytest

from lossqkd.postprocess import BitKey, binomial_summary, randomness_battery
from lossqkd.postprocess import randomness as R

EPS100 = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000"
EPS128 = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010"


def bits(s):
    return np.array([int(c) for c in s], dtype=np.uint8)


@pytest.mark.parametrize(
    "fn, expected",
    [
        (R.frequency_test, 0.109599),
        (lambda b: R.block_frequency_test(b, 10), 0.706438),
        (R.runs_test, 0.500798),
        (R.cumulative_sums_test, 0.219194),
        (lambda b: R.cumulative_sums_test(b, reverse=True), 0.114866),
    ],
)
def test_reference_examples_100_bits(fn, expected):
    assert fn(bits(EPS100)) == pytest.approx(expected, abs=1e-6)


def test_longest_run_reference_example():
    assert R.longest_run_test(bits(EPS128)) == pytest.approx(0.180598, abs=1e-6)


@pytest.mark.parametrize(
    "fn, seq, expected",
    [
        (R.frequency_test, "1011010101", 0.527089),
        (R.runs_test, "1001101011", 0.147232),
        (lambda b: R.block_frequency_test(b, 3), "0110011010", 0.801252),
        (R.cumulative_sums_test, "1011010111", 0.411659),
    ],
)
def test_short_reference_examples(monkeypatch, fn, seq, expected):
    monkeypatch.setattr(R, "MIN_LENGTH", {k: 1 for k in R.MIN_LENGTH})
    assert fn(bits(seq)) == pytest.approx(expected, abs=1e-6)


def test_short_sequences_are_not_applicable():
    report = randomness_battery(BitKey(bits(EPS100[:50])))
    assert all(not r.applicable for r in report.results)
    assert not report.passed
    assert report["Frequency"].assessment == "not applicable"


def test_runs_prerequisite_failure_gives_zero():
    assert R.runs_test(np.ones(1000, dtype=np.uint8)) == 0.0


def test_alternation_passes_frequency_fails_runs():
    report = randomness_battery(BitKey(np.arange(10**5) % 2))
    assert report["Frequency"].passed
    assert not report["Runs"].passed
    assert not report.passed


def test_longest_run_kernels_agree():
    rng = np.random.default_rng(0)
    seq = rng.integers(0, 2, 10**6, dtype=np.uint8)
    assert R.longest_run_test(seq, backend="python") == R.longest_run_test(seq)


def test_report_json_columns():
    report = randomness_battery(BitKey.random(200_000, np.random.default_rng(1)))
    d = report.to_dict()
    assert d["n_sequences"] == 4 and d["sequence_length"] == 50_000
    assert [t["test"] for t in d["tests"]] == list(R.TESTS)
    assert set(d["tests"][0]) == {"test", "p-value", "proportion", "assessment"}
    assert '"passed"' in report.to_json()
    with pytest.raises(KeyError):
        report["Nope"]


def test_uniformity_of_uniform_p_values():
    p = (np.arange(1000) + 0.5) / 1000
    assert R.uniformity_p_value(p) == pytest.approx(1.0)
    assert R.uniformity_p_value(np.full(1000, 0.05)) < 1e-10


def test_binomial_summary_examples():
    ones = binomial_summary([BitKey(np.ones(100)) for _ in range(5)])
    assert ones.mean == 100 and ones.variance == 0 and ones.std == 0
    biased = (np.random.default_rng(2).random((1000, 1000)) < 0.25).astype(np.uint8)
    s = binomial_summary(biased, p=0.25)
    assert s.expected_mean == 250 and s.expected_variance == pytest.approx(187.5)
    assert s.mean == pytest.approx(250, abs=2)
    assert s.variance == pytest.approx(187.5, rel=0.15)
    assert s.to_dict()["expected_std"] == pytest.approx(np.sqrt(187.5))


def test_binomial_summary_validation():
    with pytest.raises(ValueError):
        binomial_summary([BitKey(np.ones(10))])
    with pytest.raises(ValueError):
        binomial_summary([BitKey(np.ones(10)), BitKey(np.ones(11))])
