import numpy as np
import pytest

from ctf_mnmf.bench import BENCH_COLUMNS, benchmark_rules, fit_power_law, time_row_updates


def test_power_law_fit_recovers_exponent():
    sizes = np.array([4, 8, 16, 32])
    a, b = fit_power_law(sizes, 3e-6 * sizes**2.7)
    assert b == pytest.approx(2.7, abs=1e-12)
    assert a == pytest.approx(3e-6, rel=1e-10)


@pytest.mark.parametrize("rule", ["ip", "iss"])
def test_row_timings_are_positive(rule):
    t = time_row_updates(rule, 4, n_freq=16, n_frames=10, trials=3)
    assert t.shape == (3,) and np.all(t > 0)


def test_unknown_rule():
    with pytest.raises(ValueError):
        time_row_updates("newton", 4)


def test_benchmark_rows_and_determinism():
    rows = benchmark_rules([4], n_freq=9, n_frames=20, iterations=2, trials=2, seed=3)
    assert [(r["M"], r["rule"], r["seed"]) for r in rows] == [
        (4, "ip", 3), (4, "iss", 3), (4, "ip", 4), (4, "iss", 4)
    ]
    assert all(list(r) == BENCH_COLUMNS for r in rows)
    assert all(r["total_ms"] >= r["demix_ms"] + r["mu_ms"] for r in rows)


def test_benchmark_rejects_uneven_split():
    with pytest.raises(ValueError):
        benchmark_rules([5])
