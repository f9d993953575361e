"""Runtime measurements for the IP and ISS demixing updates."""
from __future__ import annotations

import time
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .estimator import run
from .model import CtfConfig
from .synth import simulate_ctf

__all__ = ["time_row_updates", "fit_power_law", "benchmark_rules", "BENCH_COLUMNS"]

BENCH_COLUMNS = ["M", "rule", "total_ms", "demix_ms", "mu_ms", "seed"]


def _row_problem(rule, n_channels, n_freq, n_frames, rng):
    M = n_channels
    W = np.eye(M) + 0.1 * (rng.standard_normal((n_freq, M, M)) + 1j * rng.standard_normal((n_freq, M, M)))
    W = np.ascontiguousarray(W, dtype=np.complex128)
    if rule == "ip":
        A = rng.standard_normal((n_freq, M, M)) + 1j * rng.standard_normal((n_freq, M, M))
        Q = A @ A.conj().swapaxes(-1, -2) / M + np.eye(M)
        return W, (np.ascontiguousarray(Q),)
    Y = rng.standard_normal((n_freq, M, n_frames)) + 1j * rng.standard_normal((n_freq, M, n_frames))
    phi = rng.uniform(0.5, 2.0, size=(n_freq, M, n_frames))
    return W, (np.ascontiguousarray(Y), phi)


def time_row_updates(
    rule: str,
    n_channels: int,
    n_freq: int = 257,
    n_frames: int = 100,
    trials: int = 20,
    seed: int = 0,
) -> np.ndarray:
    """Wall time of one demixing row update per frequency bin, per trial.

    IP gets a random Hermitian positive definite ``Q_r``; ISS gets random
    outputs and PSD weights for ``n_frames`` frames.  Each trial updates one
    row over all ``n_freq`` bins with the compiled kernel used by the
    estimator and reports ``elapsed / n_freq``.
    """
    rng = np.random.default_rng(seed)
    W0, extra = _row_problem(rule, n_channels, n_freq, n_frames, rng)
    if rule == "ip":
        ok = np.ones(n_freq, dtype=np.bool_)
        kernel = lambda W, r: _kernels.ip_rows(W, extra[0], r, ok)  # noqa: E731
    elif rule == "iss":
        z = np.empty((n_freq, n_channels), dtype=np.complex128)
        status = np.empty(n_freq, dtype=np.int64)

        def kernel(W, r):
            _kernels.iss_rows(W, extra[0].copy(), extra[1], r, z, status)
    else:
        raise ValueError(f"unknown update rule {rule!r}")

    kernel(W0.copy(), 0)  # compile / warm up
    times = np.empty(trials)
    for t in range(trials):
        W = W0.copy()
        r = t % n_channels
        if rule == "iss":
            Y = extra[0].copy()
            t0 = time.perf_counter()
            _kernels.iss_rows(W, Y, extra[1], r, z, status)
        else:
            t0 = time.perf_counter()
            kernel(W, r)
        times[t] = (time.perf_counter() - t0) / n_freq
    return times


def fit_power_law(sizes: Sequence[float], times: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit of ``t = a * M**b`` in log-log space; returns (a, b)."""
    b, log_a = np.polyfit(np.log(sizes), np.log(times), 1)
    return float(np.exp(log_a)), float(b)


def _warm_up(n_sources: int, n_bases: int) -> None:
    # load the compiled kernels before anything is timed
    taps = [1] * n_sources
    truth = simulate_ctf(8, 10, taps, n_bases, seed=0)
    for rule in ("ip", "iss"):
        config = CtfConfig(n_sources=n_sources, n_channels=n_sources, taps=taps,
                           bases=[n_bases], iterations=1, update_rule=rule)
        run(config, truth.mixture)


def benchmark_rules(
    channel_list: Iterable[int],
    n_sources: int = 2,
    n_freq: int = 129,
    n_frames: int = 100,
    iterations: int = 20,
    trials: int = 1,
    seed: int = 0,
    n_bases: int = 3,
    threads: int = 1,
) -> list[dict]:
    """Run IP and ISS on identical seeded CTF instances for each channel count.

    Taps are split evenly, ``L_n = M / n_sources``.
    """
    _warm_up(n_sources, n_bases)
    rows = []
    for M in channel_list:
        if M % n_sources:
            raise ValueError(f"{M} channels cannot be split evenly over {n_sources} sources")
        taps = [M // n_sources] * n_sources
        for trial in range(trials):
            inst_seed = seed + trial
            truth = simulate_ctf(n_freq, n_frames, taps, n_bases, seed=inst_seed)
            for rule in ("ip", "iss"):
                config = CtfConfig(
                    n_sources=n_sources,
                    n_channels=M,
                    taps=taps,
                    bases=[n_bases],
                    iterations=iterations,
                    update_rule=rule,
                    seed=inst_seed,
                )
                _, _, trace = run(config, truth.mixture, threads=threads)
                demix_ms = 1e3 * sum(trace.t_demix)
                mu_ms = 1e3 * sum(trace.t_mu)
                total_ms = demix_ms + mu_ms + 1e3 * sum(trace.t_rescale)
                rows.append(
                    {"M": M, "rule": rule, "total_ms": total_ms, "demix_ms": demix_ms,
                     "mu_ms": mu_ms, "seed": inst_seed}
                )
    return rows
