"""Synthetic ground truth: NMF-structured Gaussian sources, random CTF
filters and convolutive mixtures in the STFT or time domain."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .containers import save_array
from .model import NmfFactors

__all__ = [
    "ConditioningError",
    "GroundTruth",
    "sources_from_psd",
    "sample_nmf_sources",
    "sample_ctf_filters",
    "generate_ctf_mixture",
    "sample_exponential_firs",
    "generate_time_mixture",
    "simulate_ctf",
]


class ConditioningError(RuntimeError):
    """Filter sampling could not reach the required conditioning."""


@dataclass
class GroundTruth:
    """A mixture together with everything that generated it.

    For STFT-domain instances ``mixture`` is (I, J, M), ``sources`` (N, I, J),
    ``mixing`` the stacked CTF matrices (I, M, L) and ``images`` (N, I, J, M).
    For time-domain instances ``mixture`` is (M, T'), ``sources`` (N, T),
    ``mixing`` the FIRs (M, N, taps) and ``images`` (N, M, T').
    """

    mixture: np.ndarray
    sources: np.ndarray
    mixing: np.ndarray
    images: np.ndarray
    factors: NmfFactors | None = None
    taps: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def save(self, directory: str | Path) -> dict:
        """Write the arrays as tensor containers plus a JSON manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {
            "mixture": "mixture.bin",
            "sources": "sources.bin",
            "mixing": "mixing.bin",
            "images": "images.bin",
        }
        for key, name in files.items():
            save_array(directory / name, getattr(self, key))
        if self.factors is not None:
            for n, (B, V) in enumerate(zip(self.factors.bases, self.factors.activations)):
                files[f"bases_{n + 1}"] = f"bases_{n + 1}.bin"
                files[f"activations_{n + 1}"] = f"activations_{n + 1}.bin"
                save_array(directory / files[f"bases_{n + 1}"], B)
                save_array(directory / files[f"activations_{n + 1}"], V)
        manifest = {"taps": list(self.taps), "files": files, **self.meta}
        (directory / "truth.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return manifest


def sources_from_psd(psd: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian draws with variance ``psd`` (elementwise)."""
    scale = np.sqrt(np.asarray(psd) / 2.0)
    return scale * (rng.standard_normal(scale.shape) + 1j * rng.standard_normal(scale.shape))


def sample_nmf_sources(
    n_freq: int,
    n_frames: int,
    n_sources: int,
    n_bases: int | Sequence[int],
    seed: int | np.random.Generator | None = None,
) -> tuple[np.ndarray, NmfFactors]:
    """Draw NMF factors and STFT-domain sources with PSD ``B_n V_n``.

    Bases are uniform in (0.1, 1); activations are Gamma(0.5) distributed
    (plus a small offset) so the PSDs are clearly non-stationary.

    Returns sources of shape (N, I, J) and the true factors.
    """
    rng = np.random.default_rng(seed)
    if np.isscalar(n_bases):
        n_bases = [int(n_bases)] * n_sources
    if any(k < 1 for k in n_bases):
        raise ValueError("every source needs at least one basis")
    B = [rng.uniform(0.1, 1.0, size=(n_freq, k)) for k in n_bases]
    V = [rng.gamma(0.5, 1.0, size=(k, n_frames)) + 1e-3 for k in n_bases]
    factors = NmfFactors(B, V, floor=1e-12)
    sources = np.stack([sources_from_psd(factors.psd(n), rng) for n in range(n_sources)])
    return sources, factors


def sample_ctf_filters(
    n_channels: int,
    n_sources: int,
    taps: Sequence[int],
    n_freq: int,
    decay: float = 0.5,
    seed: int | np.random.Generator | None = None,
    max_cond: float = 100.0,
    max_attempts: int = 100,
) -> np.ndarray:
    """Random CTF mixing matrices, shape (I, M, L).

    Column ``r = (n, l)`` holds ``h_{:, n, i, l}``: complex Gaussian entries
    scaled by ``decay**l``.  Each bin is redrawn until its condition number
    is below ``max_cond``.
    """
    taps = list(taps)
    if len(taps) != n_sources:
        raise ValueError(f"taps lists {len(taps)} sources, expected {n_sources}")
    if sum(taps) != n_channels:
        raise ValueError(f"sum of taps ({sum(taps)}) must equal n_channels ({n_channels})")
    rng = np.random.default_rng(seed)
    gains = np.concatenate([decay ** np.arange(t, dtype=float) for t in taps])
    L = len(gains)
    H = np.empty((n_freq, n_channels, L), dtype=np.complex128)
    for i in range(n_freq):
        for _ in range(max_attempts):
            draw = rng.standard_normal((n_channels, L)) + 1j * rng.standard_normal((n_channels, L))
            draw *= gains / np.sqrt(2.0)
            if np.linalg.cond(draw) < max_cond:
                H[i] = draw
                break
        else:
            raise ConditioningError(
                f"could not draw a CTF mixing matrix with condition number < {max_cond} "
                f"in {max_attempts} attempts (frequency {i}, decay={decay})"
            )
    return H


def generate_ctf_mixture(
    sources: np.ndarray, filters: np.ndarray, taps: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``x_{m,i,j} = sum_n sum_l h_{m,n,i,l} s_{n,i,j-l}``.

    Sources are silent before the first frame.  Returns the mixture (I, J, M)
    and the per-source images (N, I, J, M).
    """
    sources = np.asarray(sources)
    n_src, n_freq, n_frames = sources.shape
    taps = list(taps)
    if len(taps) != n_src:
        raise ValueError(f"{n_src} sources but taps lists {len(taps)}")
    if filters.shape[0] != n_freq or filters.shape[2] != sum(taps):
        raise ValueError(
            f"filters of shape {filters.shape} do not match {n_freq} bins and {sum(taps)} taps"
        )
    images = np.zeros((n_src, n_freq, n_frames, filters.shape[1]), dtype=np.complex128)
    r = 0
    for n, t in enumerate(taps):
        for l in range(t):
            delayed = np.zeros((n_freq, n_frames), dtype=np.complex128)
            delayed[:, l:] = sources[n, :, : n_frames - l]
            images[n] += delayed[:, :, None] * filters[:, None, :, r]
            r += 1
    return images.sum(axis=0), images


def sample_exponential_firs(
    n_channels: int,
    n_sources: int,
    length: int,
    decay_time: float,
    seed: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Gaussian FIRs with exponentially decaying envelope, shape (M, N, length).

    ``decay_time`` is the 1/e envelope time constant in samples.
    """
    rng = np.random.default_rng(seed)
    envelope = np.exp(-np.arange(length) / decay_time)
    firs = rng.standard_normal((n_channels, n_sources, length)) * envelope
    return firs


def generate_time_mixture(
    sources: np.ndarray, firs: np.ndarray, max_fir_len: int | None = 4096
) -> tuple[np.ndarray, np.ndarray]:
    """Linear convolutive mixture ``x_m = sum_n h_{m,n} * s_n``.

    Returns the full-length mixture (M, T + taps - 1) and the per-source
    images (N, M, T + taps - 1).
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    firs = np.asarray(firs, dtype=np.float64)
    n_chan, n_src, fir_len = firs.shape
    if sources.shape[0] != n_src:
        raise ValueError(f"{sources.shape[0]} sources but FIRs for {n_src}")
    if max_fir_len is not None and fir_len > max_fir_len:
        raise ValueError(f"FIR length {fir_len} exceeds the cap of {max_fir_len}")
    out_len = sources.shape[1] + fir_len - 1
    images = np.empty((n_src, n_chan, out_len))
    for n in range(n_src):
        for m in range(n_chan):
            images[n, m] = sps.convolve(sources[n], firs[m, n], method="direct")
    return images.sum(axis=0), images


def simulate_ctf(
    n_freq: int,
    n_frames: int,
    taps: Sequence[int],
    n_bases: int | Sequence[int] = 3,
    decay: float = 0.5,
    seed: int = 0,
) -> GroundTruth:
    """Exact-model instance: NMF sources mixed through random CTF filters."""
    taps = list(taps)
    rng = np.random.default_rng(seed)
    sources, factors = sample_nmf_sources(n_freq, n_frames, len(taps), n_bases, rng)
    filters = sample_ctf_filters(sum(taps), len(taps), taps, n_freq, decay, rng)
    mixture, images = generate_ctf_mixture(sources, filters, taps)
    return GroundTruth(
        mixture=mixture,
        sources=sources,
        mixing=filters,
        images=images,
        factors=factors,
        taps=taps,
        meta={"kind": "ctf", "seed": seed, "decay": decay},
    )
