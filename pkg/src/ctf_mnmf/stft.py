"""Short-time Fourier transform with perfect reconstruction, WAV I/O and the
spectrogram container format.

Spectrograms are stored as complex arrays of shape ``(n_freq, n_frames,
n_channels)``; time signals as ``(n_channels, n_samples)``.

Container layout (all little-endian)::

    offset  size  field
    0       4     magic b"CTFS"
    4       4     uint32 format version (1)
    8       4     uint32 n_freq (I)
    12      4     uint32 n_frames (J)
    16      4     uint32 n_channels
    20      4     uint32 window_len
    24      4     uint32 hop
    28      8     float64 sample_rate
    36      8     uint64 original signal length in samples
    44      ...   I*J*n_channels complex64 values, C order over [i][j][channel],
                  each stored as an interleaved (real, imag) float32 pair
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "TimeSignal",
    "Spectrogram",
    "hann_window",
    "forward_stft",
    "inverse_stft",
    "read_wav",
    "write_wav",
    "save_spectrogram",
    "load_spectrogram",
]

_MAGIC = b"CTFS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIdQ")


@dataclass
class TimeSignal:
    """Real multichannel signal, ``samples`` has shape (n_channels, n_samples)."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError("samples must be 1-D or (n_channels, n_samples)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class Spectrogram:
    """One-sided STFT coefficients, ``bins`` has shape (I, J, n_channels)."""

    bins: np.ndarray
    window_len: int
    hop: int
    sample_rate: float = 16000.0
    length: int | None = None

    @property
    def n_freq(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def n_channels(self) -> int:
        return self.bins.shape[2]


def hann_window(window_len: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


def _check_sizes(window_len: int, hop: int) -> None:
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two, got {window_len}")
    if hop <= 0 or window_len % hop:
        raise ValueError(f"hop ({hop}) must divide window_len ({window_len})")


def _check_wola(window: np.ndarray, hop: int) -> None:
    # overlap-added squared window must be flat for the dual window to exist
    folded = (window**2).reshape(-1, hop).sum(axis=0)
    if np.ptp(folded) > 1e-10 * folded.max():
        raise ValueError(
            f"window/hop pair (window_len={window.size}, hop={hop}) does not "
            "satisfy the constant overlap-add condition"
        )


def forward_stft(
    signal: TimeSignal | np.ndarray,
    window_len: int = 1024,
    hop: int | None = None,
    sample_rate: float = 16000.0,
) -> Spectrogram:
    """Compute the one-sided STFT of a multichannel signal.

    The signal is reflect-padded by ``window_len // 2`` on both sides (plus
    trailing zeros so the last hop is complete) and analysed with a periodic
    Hann window. ``hop`` defaults to a quarter of the window.
    """
    if not isinstance(signal, TimeSignal):
        signal = TimeSignal(signal, sample_rate)
    if hop is None:
        hop = window_len // 4
    _check_sizes(window_len, hop)
    x = signal.samples
    n_samples = x.shape[1]
    if n_samples == 0:
        raise ValueError("cannot transform an empty signal")

    half = window_len // 2
    padded = np.pad(x, ((0, 0), (half, half)), mode="reflect")
    extra = (-(padded.shape[1] - window_len)) % hop
    if extra:
        padded = np.pad(padded, ((0, 0), (0, extra)))
    n_frames = 1 + (padded.shape[1] - window_len) // hop

    frames = np.lib.stride_tricks.sliding_window_view(padded, window_len, axis=1)[:, ::hop]
    frames = frames[:, :n_frames] * hann_window(window_len)
    bins = np.fft.rfft(frames, axis=-1)  # (C, J, I)
    return Spectrogram(
        bins=np.ascontiguousarray(bins.transpose(2, 1, 0)),
        window_len=window_len,
        hop=hop,
        sample_rate=signal.sample_rate,
        length=n_samples,
    )


def inverse_stft(spec: Spectrogram, length: int | None = None) -> TimeSignal:
    """Weighted overlap-add synthesis, the inverse of :func:`forward_stft`."""
    window_len, hop = spec.window_len, spec.hop
    _check_sizes(window_len, hop)
    if spec.n_freq != window_len // 2 + 1:
        raise ValueError(
            f"expected {window_len // 2 + 1} frequency bins, got {spec.n_freq}"
        )
    window = hann_window(window_len)
    _check_wola(window, hop)
    if length is None:
        length = spec.length
    n_frames = spec.n_frames
    total = window_len + hop * (n_frames - 1)
    if length is None:
        length = total - window_len

    frames = np.fft.irfft(spec.bins.transpose(2, 1, 0), n=window_len, axis=-1)
    frames = frames * window
    out = np.zeros((spec.n_channels, total))
    norm = np.zeros(total)
    for j in range(n_frames):
        out[:, j * hop : j * hop + window_len] += frames[:, j]
        norm[j * hop : j * hop + window_len] += window**2
    nz = norm > 1e-12 * norm.max()
    out[:, nz] /= norm[nz]

    half = window_len // 2
    samples = out[:, half : half + length]
    if samples.shape[1] < length:
        samples = np.pad(samples, ((0, 0), (0, length - samples.shape[1])))
    return TimeSignal(samples, spec.sample_rate)


def read_wav(path: str | Path) -> TimeSignal:
    """Read a WAV file as float64 in [-1, 1] (16-bit PCM or float)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return TimeSignal(data.T, float(rate))


def write_wav(path: str | Path, signal: TimeSignal, pcm16: bool = False) -> None:
    """Write a multichannel WAV as 32-bit float (default) or 16-bit PCM."""
    data = signal.samples.T
    if pcm16:
        data = np.clip(np.round(data * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = data.astype(np.float32)
    wavfile.write(path, int(round(signal.sample_rate)), data)


def save_spectrogram(path: str | Path, spec: Spectrogram) -> None:
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        spec.n_freq,
        spec.n_frames,
        spec.n_channels,
        spec.window_len,
        spec.hop,
        float(spec.sample_rate),
        0 if spec.length is None else int(spec.length),
    )
    body = np.ascontiguousarray(spec.bins, dtype="<c8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def load_spectrogram(path: str | Path) -> Spectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated spectrogram header")
    magic, version, n_freq, n_frames, n_chan, window_len, hop, rate, length = (
        _HEADER.unpack_from(raw)
    )
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a spectrogram container")
    count = n_freq * n_frames * n_chan
    body = np.frombuffer(raw, dtype="<c8", count=count, offset=_HEADER.size)
    return Spectrogram(
        bins=body.astype(np.complex128).reshape(n_freq, n_frames, n_chan),
        window_len=window_len,
        hop=hop,
        sample_rate=rate,
        length=length or None,
    )
