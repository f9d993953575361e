"""Problem configuration and the tensors shared by the estimators.

Index conventions (all zero-based):

* mixture ``x``: complex, shape ``(I, J, M)``
* demixing stack ``W``: complex, shape ``(I, L, M)``; row ``r`` of ``W[i]``
  holds ``w_r^H`` so that ``y_r = W[i, r] @ x[i, j]``
* delayed estimates ``y``: complex, shape ``(I, J, L)``
* row ``r`` maps to ``(source n, tap l)`` with
  ``r = taps[0] + ... + taps[n-1] + l``
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "CtfConfig",
    "NmfFactors",
    "flatten_index",
    "unflatten_index",
    "row_layout",
    "compute_psd",
    "delayed_psd",
    "shift_frames",
    "init_demixing",
    "init_factors",
    "read_config_file",
]

RULES = ("ip", "iss")


class ConfigError(ValueError):
    """Invalid problem configuration."""


def _int_list(value) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    elif np.isscalar(value):
        value = [value]
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a list of integers, got {value!r}") from exc


@dataclass
class CtfConfig:
    """Configuration of a CTF-MNMF run.

    ``taps[n]`` is the CTF filter length of source ``n``; the demixing system
    is square, so ``sum(taps)`` must equal ``n_channels``. ``psd_floor`` is
    relative to the mean power of the observed mixture.
    """

    n_sources: int = 2
    n_channels: int = 4
    taps: list[int] = field(default_factory=lambda: [2, 2])
    bases: list[int] = field(default_factory=lambda: [3])
    iterations: int = 100
    update_rule: str = "iss"
    psd_floor: float = 1e-10
    seed: int = 0

    # flat key/value names used by config files and the CLI
    KEYS = {
        "n_sources": "n_sources",
        "n_channels": "n_channels",
        "taps": "taps",
        "bases": "bases",
        "iters": "iterations",
        "rule": "update_rule",
        "floor": "psd_floor",
        "seed": "seed",
    }

    def __post_init__(self):
        self.taps = _int_list(self.taps)
        bases = _int_list(self.bases)
        if len(bases) == 1 and self.n_sources > 1:
            bases = bases * self.n_sources
        self.bases = bases
        self.update_rule = str(self.update_rule).lower()
        self.validate()

    def validate(self) -> None:
        if self.n_sources < 1:
            raise ConfigError("n_sources must be at least 1")
        if len(self.taps) != self.n_sources:
            raise ConfigError(
                f"taps lists {len(self.taps)} sources but n_sources={self.n_sources}"
            )
        if len(self.bases) != self.n_sources:
            raise ConfigError(
                f"bases lists {len(self.bases)} sources but n_sources={self.n_sources}"
            )
        if any(t < 1 for t in self.taps):
            raise ConfigError("every source needs at least one tap")
        if any(k < 1 for k in self.bases):
            raise ConfigError("every source needs at least one NMF basis")
        if sum(self.taps) != self.n_channels:
            raise ConfigError(
                f"sum of taps ({sum(self.taps)}) must equal n_channels "
                f"({self.n_channels}): the demixing matrix has to be square"
            )
        if self.update_rule not in RULES:
            raise ConfigError(f"rule must be one of {RULES}, got {self.update_rule!r}")
        if not self.psd_floor > 0:
            raise ConfigError("floor must be positive")
        if self.iterations < 0:
            raise ConfigError("iters must be non-negative")

    @property
    def n_rows(self) -> int:
        return sum(self.taps)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: "CtfConfig | None" = None):
        """Build a config from flat ``key: value`` pairs layered over ``base``.

        Keys outside the config vocabulary are ignored so that one file can
        also carry STFT or simulation settings.
        """
        params = asdict(base) if base is not None else {}
        for key, value in values.items():
            name = cls.KEYS.get(key)
            if name is None or value is None:
                continue
            params[name] = value
        try:
            for name in ("n_sources", "n_channels", "iterations", "seed"):
                if name in params:
                    params[name] = int(params[name])
            if "psd_floor" in params:
                params["psd_floor"] = float(params["psd_floor"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**params)

    def to_mapping(self) -> dict[str, object]:
        inverse = {v: k for k, v in self.KEYS.items()}
        return {inverse[k]: v for k, v in asdict(self).items()}

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_mapping().items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` text file (``#`` starts a comment)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split(sep, 1))
        values[key] = value
    return values


def row_layout(taps: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Source and tap index of every flat row."""
    sources = np.repeat(np.arange(len(taps)), taps)
    lags = np.concatenate([np.arange(t) for t in taps])
    return sources, lags


def flatten_index(n: int, l: int, taps: Sequence[int]) -> int:
    """Row index of tap ``l`` of source ``n``."""
    if not 0 <= n < len(taps):
        raise IndexError(f"source index {n} out of range for {len(taps)} sources")
    if not 0 <= l < taps[n]:
        raise IndexError(f"tap index {l} out of range for source {n} with {taps[n]} taps")
    return int(sum(taps[:n]) + l)


def unflatten_index(r: int, taps: Sequence[int]) -> tuple[int, int]:
    if not 0 <= r < sum(taps):
        raise IndexError(f"row index {r} out of range for {sum(taps)} rows")
    offset = 0
    for n, t in enumerate(taps):
        if r < offset + t:
            return n, r - offset
        offset += t
    raise AssertionError("unreachable")


@dataclass
class NmfFactors:
    """Per-source NMF bases ``(I, K_n)`` and activations ``(K_n, J)``.

    ``floor`` is the absolute PSD floor applied to the factors and to the
    modelled PSD.
    """

    bases: list[np.ndarray]
    activations: list[np.ndarray]
    floor: float = 1e-10

    @property
    def n_sources(self) -> int:
        return len(self.bases)

    def psd(self, n: int) -> np.ndarray:
        return compute_psd(self, n)

    def all_psd(self) -> list[np.ndarray]:
        return [compute_psd(self, n) for n in range(self.n_sources)]

    def copy(self) -> "NmfFactors":
        return copy.deepcopy(self)


def compute_psd(factors: NmfFactors, n: int) -> np.ndarray:
    """Modelled PSD of source ``n``, ``B_n @ V_n`` floored, shape ``(I, J)``."""
    return np.maximum(factors.bases[n] @ factors.activations[n], factors.floor)


def delayed_psd(psd: np.ndarray, j: int, l: int) -> np.ndarray:
    """PSD column seen by tap ``l`` at frame ``j``; frames before the start
    clamp to frame 0."""
    return psd[:, max(j - l, 0)]


def shift_frames(a: np.ndarray, l: int) -> np.ndarray:
    """Delay ``a`` by ``l`` frames along the last axis, clamping to frame 0."""
    if l == 0:
        return a
    if l >= a.shape[-1]:
        return np.broadcast_to(a[..., :1], a.shape).copy()
    out = np.empty_like(a)
    out[..., l:] = a[..., : a.shape[-1] - l]
    out[..., :l] = a[..., :1]
    return out


def init_demixing(n_freq: int, n_channels: int) -> np.ndarray:
    return np.tile(np.eye(n_channels, dtype=np.complex128), (n_freq, 1, 1))


def init_factors(
    n_freq: int,
    n_frames: int,
    bases: Sequence[int],
    rng: np.random.Generator,
    floor: float = 1e-10,
) -> NmfFactors:
    """Uniform random factors in (0.1, 1.0)."""
    B = [rng.uniform(0.1, 1.0, size=(n_freq, k)) for k in bases]
    V = [rng.uniform(0.1, 1.0, size=(k, n_frames)) for k in bases]
    return NmfFactors(B, V, floor)
