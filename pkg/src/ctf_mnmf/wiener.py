"""Multichannel Wiener reconstruction of the per-source spatial images."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import NmfFactors, row_layout, shift_frames
from .stft import Spectrogram, TimeSignal, inverse_stft

__all__ = ["delayed_psd_matrix", "wiener_gains", "reconstruct_images", "images_to_signals"]


def delayed_psd_matrix(factors: NmfFactors, taps: Sequence[int]) -> np.ndarray:
    """Diagonal of the stacked delayed-PSD matrix, shape (I, J, L).

    Entry ``[i, j, r]`` for row ``r = (n, l)`` is ``lambda_{n,i,j-l}``, with
    frames before the start clamped to frame 0.
    """
    sources, lags = row_layout(taps)
    psd = factors.all_psd()
    return np.stack([shift_frames(psd[n], l) for n, l in zip(sources, lags)], axis=-1)


def _mixing(W: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        from .estimator import DegeneracyError

        raise DegeneracyError("singular demixing matrix in Wiener reconstruction") from exc


def wiener_gains(
    W: np.ndarray, factors: NmfFactors, taps: Sequence[int], j: int
) -> np.ndarray:
    """Per-source gain matrices at frame ``j``, shape (N, I, M, M).

    ``G_n = H_n Lambda_n H_n^H (H Lambda H^H)^{-1}`` with ``H = W^{-1}``; the
    inverse of the mixture covariance is evaluated as ``W^H Lambda^{-1} W``.
    """
    H = _mixing(W)
    lam = delayed_psd_matrix(factors, taps)[:, j]  # (I, L)
    inv_cov = np.einsum("irm,ir,irk->imk", W.conj(), 1.0 / lam, W)
    gains = []
    start = 0
    for t in taps:
        Hn = H[:, :, start : start + t]
        cov_n = np.einsum("iml,il,ikl->imk", Hn, lam[:, start : start + t], Hn.conj())
        gains.append(cov_n @ inv_cov)
        start += t
    return np.stack(gains)


def reconstruct_images(
    W: np.ndarray, factors: NmfFactors, x: np.ndarray, taps: Sequence[int]
) -> np.ndarray:
    """Spatial image of every source, shape (N, I, J, M).

    Applies ``c_n = H_n Lambda_n H_n^H (H Lambda H^H)^{-1} x`` at every
    time-frequency point.  The mixture covariance is inverted through the
    demixing matrix, ``(H Lambda H^H)^{-1} = W^H Lambda^{-1} W``, which is exact
    for the floored (strictly positive) PSD and needs no regularisation.
    """
    x = np.asarray(x, dtype=np.complex128)
    H = _mixing(W)
    lam = delayed_psd_matrix(factors, taps)
    y = np.einsum("irm,ijm->ijr", W, x)
    u = np.einsum("irm,ijr->ijm", W.conj(), y / lam)  # (H Lambda H^H)^{-1} x
    g = np.einsum("iml,ijm->ijl", H.conj(), u)  # H^H u
    images = []
    start = 0
    for t in taps:
        sl = slice(start, start + t)
        images.append(np.einsum("iml,ijl->ijm", H[:, :, sl], lam[:, :, sl] * g[:, :, sl]))
        start += t
    return np.stack(images)


def images_to_signals(
    images: np.ndarray,
    window_len: int,
    hop: int,
    sample_rate: float = 16000.0,
    length: int | None = None,
    ref_channel: int | None = None,
) -> list[TimeSignal]:
    """Inverse STFT of each source image; all channels unless ``ref_channel``."""
    out = []
    for image in images:
        if ref_channel is not None:
            image = image[:, :, ref_channel : ref_channel + 1]
        spec = Spectrogram(image, window_len, hop, sample_rate, length)
        out.append(inverse_stft(spec))
    return out
