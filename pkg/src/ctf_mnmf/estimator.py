"""Block-coordinate estimation of the CTF-MNMF model.

One iteration sweeps all demixing rows (iterative projection or iterative
source steering), refreshes the delayed estimates, applies the
multiplicative NMF updates and finally normalises the scale of every
demixing row.  The negative log-likelihood is recorded after each
iteration.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .model import (
    CtfConfig,
    NmfFactors,
    compute_psd,
    init_demixing,
    init_factors,
    row_layout,
    shift_frames,
)

__all__ = [
    "DegeneracyError",
    "OptimizationTrace",
    "RowUpdate",
    "demix",
    "delayed_weights",
    "objective",
    "log_abs_det",
    "compute_weighted_covariance",
    "ip_update",
    "iss_compute_z",
    "iss_apply",
    "update_demixing",
    "mu_update_bases",
    "mu_update_activations",
    "rescale",
    "run",
]

logger = logging.getLogger(__name__)

_MIN_DET = 1e-300


class DegeneracyError(RuntimeError):
    """Numerical breakdown of the optimisation (singular or non-finite state)."""

    def __init__(self, message, *, iteration=None, frequency=None, row=None, other_row=None):
        self.iteration = iteration
        self.frequency = frequency
        self.row = row
        self.other_row = other_row
        super().__init__(message)

    def context(self) -> dict:
        ctx = {"message": str(self), "kind": "numerical_degeneracy"}
        for key in ("iteration", "frequency", "row", "other_row"):
            value = getattr(self, key)
            if value is not None:
                ctx[key] = int(value)
        return ctx


@dataclass
class OptimizationTrace:
    objective: list[float] = field(default_factory=list)
    t_demix: list[float] = field(default_factory=list)
    t_mu: list[float] = field(default_factory=list)
    t_rescale: list[float] = field(default_factory=list)
    initial_objective: float | None = None

    def __len__(self):
        return len(self.objective)

    def append(self, value, t_demix, t_mu, t_rescale):
        self.objective.append(float(value))
        self.t_demix.append(t_demix)
        self.t_mu.append(t_mu)
        self.t_rescale.append(t_rescale)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iter", "objective", "t_demix_ms", "t_mu_ms", "t_rescale_ms"])
            for k, row in enumerate(
                zip(self.objective, self.t_demix, self.t_mu, self.t_rescale), start=1
            ):
                obj, td, tm, tr = row
                writer.writerow(
                    [k, repr(obj), f"{td * 1e3:.6f}", f"{tm * 1e3:.6f}", f"{tr * 1e3:.6f}"]
                )


@dataclass
class RowUpdate:
    """Snapshot handed to ``run``'s callback after each demixing row update.

    ``steering`` is the ISS vector ``z`` of shape (I, L) and ``None`` for IP.
    """

    iteration: int
    rule: str
    row: int
    W_before: np.ndarray
    W_after: np.ndarray
    steering: np.ndarray | None
    psd: list[np.ndarray]


def demix(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Delayed source estimates ``y[i, j, r] = w_r^H x_{i,j}``."""
    return np.matmul(x, W.transpose(0, 2, 1))


def delayed_weights(psd: Sequence[np.ndarray], taps: Sequence[int]) -> np.ndarray:
    """Inverse delayed PSD ``1 / lambda_{n,i,j-l}`` per row, shape (I, L, J)."""
    sources, lags = row_layout(taps)
    return np.stack([1.0 / shift_frames(psd[n], l) for n, l in zip(sources, lags)], axis=1)


def log_abs_det(W: np.ndarray) -> np.ndarray:
    """``log|det W_i|`` per bin via LU; raises on (near-)singular bins."""
    _, logdet = np.linalg.slogdet(W)
    bad = ~(logdet > np.log(_MIN_DET))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegeneracyError(f"demixing matrix is singular at frequency {i}", frequency=i)
    return logdet


def objective(
    W: np.ndarray, factors: NmfFactors, x: np.ndarray, taps: Sequence[int]
) -> float:
    """Negative log-likelihood without its additive constant.

    Sum over rows and frames of ``log lambda + |y|^2 / lambda`` for the
    delayed PSD, minus ``2 J sum_i log|det W_i|``.  Delays reaching before
    the first frame use the PSD of frame 0.
    """
    n_frames = x.shape[1]
    y = demix(W, x)
    sources, lags = row_layout(taps)
    psd = factors.all_psd()
    total = 0.0
    for r, (n, l) in enumerate(zip(sources, lags)):
        lam = shift_frames(psd[n], l)
        total += np.sum(np.log(lam)) + np.sum(np.abs(y[:, :, r]) ** 2 / lam)
    return float(total - 2.0 * n_frames * np.sum(log_abs_det(W)))


def compute_weighted_covariance(
    x: np.ndarray, psd: np.ndarray, l: int, i: int | None = None
) -> np.ndarray:
    """Weighted covariance ``(1/J) sum_j x x^H / lambda_{j-l}``.

    Returns ``(M, M)`` for a single bin ``i`` or ``(I, M, M)``.
    """
    n_frames = x.shape[1]
    weight = 1.0 / shift_frames(psd, l)
    if i is not None:
        xi = x[i]
        Q = (xi.T * weight[i]) @ xi.conj() / n_frames
        return 0.5 * (Q + Q.conj().T)
    Q = np.matmul((x * weight[:, :, None]).transpose(0, 2, 1), x.conj()) / n_frames
    return 0.5 * (Q + Q.conj().swapaxes(-1, -2))


def ip_update(W_i: np.ndarray, Q: np.ndarray, r: int) -> np.ndarray:
    """Iterative-projection update of row ``r`` of a single ``W_i``.

    Returns a new matrix; only row ``r`` differs from the input.
    """
    M = W_i.shape[-1]
    e = np.zeros(M, dtype=np.complex128)
    e[r] = 1.0
    A = W_i @ Q
    try:
        w = np.linalg.solve(A, e)
    except np.linalg.LinAlgError:
        load = 1e-10 * np.trace(Q).real / M
        logger.warning("singular W Q in IP update of row %d; diagonal loading %.3g", r, load)
        Q = Q + load * np.eye(M)
        try:
            w = np.linalg.solve(W_i @ Q, e)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"W Q singular in IP update of row {r}", row=r) from exc
    quad = np.real(w.conj() @ Q @ w)
    if not quad > 0:
        raise DegeneracyError(f"zero weighted power in IP update of row {r}", row=r)
    out = W_i.copy()
    out[r] = (w / np.sqrt(quad)).conj()
    return out


def iss_compute_z(W_i: np.ndarray, Q_list: Sequence[np.ndarray], r: int) -> np.ndarray:
    """Steering vector minimising the auxiliary cost of ``W_i - z w_r^H``.

    ``Q_list[p]`` is the weighted covariance of row ``p``.  For ``p != r``
    the coefficient is ``w_p^H Q_p w_r / w_r^H Q_p w_r``; for ``p == r`` it is
    ``1 - (w_r^H Q_r w_r)^{-1/2}``.
    """
    w_r = W_i[r].conj()
    z = np.empty(len(Q_list), dtype=np.complex128)
    for p, Qp in enumerate(Q_list):
        Qw = Qp @ w_r
        den = np.real(w_r.conj() @ Qw)
        if not den > 0:
            raise DegeneracyError(
                f"vanishing denominator w_r^H Q_p w_r for r={r}, p={p}", row=r, other_row=p
            )
        if p == r:
            z[p] = 1.0 - 1.0 / np.sqrt(den)
        else:
            z[p] = (W_i[p] @ Qw) / den
    return z


def iss_apply(W_i: np.ndarray, z: np.ndarray, r: int) -> np.ndarray:
    """Rank-1 update ``W_i - z w_r^H`` using the current row ``r``."""
    return W_i - np.outer(z, W_i[r])


def _split(n_freq: int, threads: int) -> list[slice]:
    edges = np.linspace(0, n_freq, max(1, min(threads, n_freq)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _parallel(fn, n_freq: int, threads: int) -> None:
    chunks = _split(n_freq, threads)
    if len(chunks) == 1:
        fn(chunks[0])
        return
    with ThreadPoolExecutor(len(chunks)) as pool:
        list(pool.map(fn, chunks))


def _ip_row(W: np.ndarray, Q: np.ndarray, r: int, threads: int, iteration) -> None:
    ok = np.ones(W.shape[0], dtype=np.bool_)
    _parallel(lambda s: _kernels.ip_rows(W[s], Q[s], r, ok[s]), W.shape[0], threads)
    if ok.all():
        return
    bad = np.flatnonzero(~ok)
    M = W.shape[-1]
    load = 1e-10 * np.trace(Q[bad], axis1=-2, axis2=-1).real / M
    logger.warning(
        "IP row %d: singular system in %d bin(s), retrying with diagonal loading",
        r, bad.size,
    )
    Wb = np.ascontiguousarray(W[bad])
    Qb = Q[bad] + load[:, None, None] * np.eye(M)
    okb = np.ones(bad.size, dtype=np.bool_)
    _kernels.ip_rows(Wb, Qb, r, okb)
    if not okb.all():
        i = int(bad[np.flatnonzero(~okb)[0]])
        raise DegeneracyError(
            f"IP update of row {r} singular at frequency {i} after diagonal loading",
            iteration=iteration, frequency=i, row=r,
        )
    W[bad] = Wb


def _renormalise_row(W, x, psd, l, r) -> None:
    # w^H Q w as a frame average of nonnegative terms; the quadratic form
    # itself loses digits when Q is ill-conditioned
    y_r = np.matmul(x, W[:, r, :, None])[..., 0]
    quad = np.mean(np.abs(y_r) ** 2 / shift_frames(psd, l), axis=1)
    W[:, r] /= np.sqrt(quad)[:, None]


def update_demixing(
    W: np.ndarray,
    x: np.ndarray,
    psd: Sequence[np.ndarray],
    taps: Sequence[int],
    rule: str,
    threads: int = 1,
    iteration: int | None = None,
    callback: Callable[[RowUpdate], None] | None = None,
) -> np.ndarray:
    """One sweep over all demixing rows, in place.

    IP forms ``Q_r`` for every row and solves for the new filter; ISS works
    on the demixed outputs directly, where the weighted inner products of
    the steering coefficients reduce to frame sums.
    """
    n_freq, L, _ = W.shape
    sources, lags = row_layout(taps)
    if rule == "ip":
        for r in range(L):
            Q = compute_weighted_covariance(x, psd[sources[r]], lags[r])
            before = W.copy() if callback else None
            _ip_row(W, Q, r, threads, iteration)
            _renormalise_row(W, x, psd[sources[r]], lags[r], r)
            if callback:
                callback(RowUpdate(iteration, rule, r, before, W.copy(), None, list(psd)))
    elif rule == "iss":
        phi = delayed_weights(psd, taps)
        Y = np.matmul(W, x.transpose(0, 2, 1))  # (I, L, J)
        z = np.empty((n_freq, L), dtype=np.complex128)
        status = np.empty(n_freq, dtype=np.int64)
        for r in range(L):
            before = W.copy() if callback else None
            _parallel(
                lambda s: _kernels.iss_rows(W[s], Y[s], phi[s], r, z[s], status[s]),
                n_freq, threads,
            )
            if np.any(status >= 0):
                i = int(np.flatnonzero(status >= 0)[0])
                p = int(status[i])
                raise DegeneracyError(
                    f"ISS steering denominator vanished (r={r}, p={p}, i={i})",
                    iteration=iteration, frequency=i, row=r, other_row=p,
                )
            if callback:
                callback(RowUpdate(iteration, rule, r, before, W.copy(), z.copy(), list(psd)))
    else:
        raise ValueError(f"unknown update rule {rule!r}")
    return W


def _source_rows(taps: Sequence[int], n: int) -> slice:
    start = sum(taps[:n])
    return slice(start, start + taps[n])


def mu_update_bases(
    factors: NmfFactors, y: np.ndarray, n: int, taps: Sequence[int]
) -> np.ndarray:
    """Multiplicative update of ``B_n`` over all taps of source ``n``."""
    B, V = factors.bases[n], factors.activations[n]
    lam = compute_psd(factors, n)
    power = np.abs(y[:, :, _source_rows(taps, n)]) ** 2
    num = np.zeros_like(B)
    den = np.zeros_like(B)
    for l in range(taps[n]):
        lam_l = shift_frames(lam, l)
        V_l = shift_frames(V, l).T
        num += (power[:, :, l] / lam_l**2) @ V_l
        den += (1.0 / lam_l) @ V_l
    return np.maximum(B * np.sqrt(num / den), factors.floor)


def _unshift_add(acc: np.ndarray, a: np.ndarray, l: int) -> None:
    # adjoint of shift_frames: frame j of ``a`` feeds frame max(j - l, 0)
    n_frames = a.shape[-1]
    if l >= n_frames:
        acc[:, 0] += a.sum(axis=1)
        return
    acc[:, : n_frames - l] += a[:, l:]
    if l:
        acc[:, 0] += a[:, :l].sum(axis=1)


def mu_update_activations(
    factors: NmfFactors,
    y: np.ndarray,
    n: int,
    taps: Sequence[int],
    zero_delay_only: bool = False,
) -> np.ndarray:
    """Multiplicative update of ``V_n``.

    Every activation collects the terms of all taps that see it through the
    delay line.  ``zero_delay_only=True`` restricts the sums to the ``l = 0``
    output; that variant is not a majorisation step for the full objective
    when a source has more than one tap.
    """
    B, V = factors.bases[n], factors.activations[n]
    lam = compute_psd(factors, n)
    start = sum(taps[:n])
    n_taps = 1 if zero_delay_only else taps[n]
    num = np.zeros_like(V)
    den = np.zeros_like(V)
    for l in range(n_taps):
        lam_l = shift_frames(lam, l)
        power = np.abs(y[:, :, start + l]) ** 2
        _unshift_add(num, B.T @ (power / lam_l**2), l)
        _unshift_add(den, B.T @ (1.0 / lam_l), l)
    return np.maximum(V * np.sqrt(num / den), factors.floor)


def rescale(
    W: np.ndarray, factors: NmfFactors, y: np.ndarray, taps: Sequence[int]
) -> tuple[np.ndarray, NmfFactors, np.ndarray]:
    """Fix the scale ambiguity between ``W`` and the NMF factors, in place.

    ``mu_n`` is the RMS of the zero-delay output of source ``n``.  All rows of
    source ``n`` in every ``W_i`` (and the matching outputs in ``y``) are
    divided by ``mu_n`` and ``B_n`` by ``mu_n^2``, which leaves the objective
    unchanged.  Silent sources (``mu_n == 0``) are left alone.
    """
    for n in range(len(taps)):
        rows = _source_rows(taps, n)
        mu = np.sqrt(np.mean(np.abs(y[:, :, rows.start]) ** 2))
        if not mu > 0:
            continue
        W[:, rows] /= mu
        y[:, :, rows] /= mu
        factors.bases[n] = np.maximum(factors.bases[n] / mu**2, factors.floor)
    return W, factors, y


def _check_finite(name: str, arr, iteration: int) -> None:
    arrays = arr if isinstance(arr, (list, tuple)) else [arr]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DegeneracyError(
                f"non-finite values in {name} at iteration {iteration}", iteration=iteration
            )


def run(
    config: CtfConfig,
    x: np.ndarray,
    *,
    W: np.ndarray | None = None,
    factors: NmfFactors | None = None,
    threads: int = 1,
    callback: Callable[[RowUpdate], None] | None = None,
) -> tuple[np.ndarray, NmfFactors, OptimizationTrace]:
    """Fit the CTF-MNMF model to the mixture spectrogram ``x`` (I, J, M).

    Demixing matrices start at the identity and NMF factors at uniform random
    values drawn from ``config.seed``, unless given.  Runs exactly
    ``config.iterations`` iterations.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 3:
        raise ValueError("mixture must have shape (n_freq, n_frames, n_channels)")
    n_freq, n_frames, n_chan = x.shape
    if n_chan != config.n_channels:
        raise ValueError(
            f"mixture has {n_chan} channels but the config expects {config.n_channels}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("mixture contains non-finite values")
    power = float(np.mean(np.abs(x) ** 2))
    if power == 0:
        raise ValueError("mixture is identically zero")

    taps = config.taps
    floor = config.psd_floor * power
    W = init_demixing(n_freq, n_chan) if W is None else np.array(W, dtype=np.complex128)
    if factors is None:
        rng = np.random.default_rng(config.seed)
        factors = init_factors(n_freq, n_frames, config.bases, rng, floor)
    else:
        factors = factors.copy()
        factors.floor = floor

    trace = OptimizationTrace()
    trace.initial_objective = objective(W, factors, x, taps)
    for it in range(config.iterations):
        t0 = time.perf_counter()
        psd = factors.all_psd()
        try:
            update_demixing(W, x, psd, taps, config.update_rule, threads, it, callback)
        except DegeneracyError as exc:
            if exc.iteration is None:
                exc.iteration = it
            raise
        _check_finite("W", W, it)
        t1 = time.perf_counter()

        y = demix(W, x)
        _check_finite("y", y, it)
        for n in range(config.n_sources):
            factors.bases[n] = mu_update_bases(factors, y, n, taps)
            factors.activations[n] = mu_update_activations(factors, y, n, taps)
        _check_finite("lambda", factors.bases + factors.activations, it)
        t2 = time.perf_counter()

        rescale(W, factors, y, taps)
        t3 = time.perf_counter()

        try:
            value = objective(W, factors, x, taps)
        except DegeneracyError as exc:
            exc.iteration = it
            raise
        trace.append(value, t1 - t0, t2 - t1, t3 - t2)
    return W, factors, trace
