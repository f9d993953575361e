"""Scale-invariant SDR and permutation-resolved separation scores."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

__all__ = ["SI_SDR_CAP", "SeparationReport", "si_sdr", "align_and_score"]

SI_SDR_CAP = 80.0


def _flat(signal) -> np.ndarray:
    samples = getattr(signal, "samples", signal)
    return np.asarray(samples, dtype=np.float64).ravel()


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, capped at :data:`SI_SDR_CAP`.

    >>> round(si_sdr([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]), 1)
    80.0
    """
    est = _flat(estimate)
    ref = _flat(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ValueError("reference signal is zero")
    target = (est @ ref) / ref_energy * ref
    noise = target - est
    target_energy = target @ target
    noise_energy = noise @ noise
    if noise_energy <= target_energy * 10 ** (-SI_SDR_CAP / 10):
        return SI_SDR_CAP
    return float(min(10 * np.log10(target_energy / noise_energy), SI_SDR_CAP))


@dataclass
class SeparationReport:
    si_sdr_db: list[float]
    si_sdr_improvement_db: list[float]
    permutation: list[int]

    @property
    def median_si_sdr(self) -> float:
        return float(np.median(self.si_sdr_db))

    @property
    def mean_si_sdr(self) -> float:
        return float(np.mean(self.si_sdr_db))

    @property
    def median_improvement(self) -> float:
        return float(np.median(self.si_sdr_improvement_db))

    @property
    def mean_improvement(self) -> float:
        return float(np.mean(self.si_sdr_improvement_db))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(
            median_si_sdr_db=self.median_si_sdr,
            mean_si_sdr_db=self.mean_si_sdr,
            median_improvement_db=self.median_improvement,
            mean_improvement_db=self.mean_improvement,
        )
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    CSV_HEADER = "median_si_sdr_db,mean_si_sdr_db,median_improvement_db,mean_improvement_db,permutation"

    def to_csv_row(self) -> str:
        perm = " ".join(str(p) for p in self.permutation)
        return (
            f"{self.median_si_sdr:.6f},{self.mean_si_sdr:.6f},"
            f"{self.median_improvement:.6f},{self.mean_improvement:.6f},{perm}"
        )


def align_and_score(
    estimates: Sequence, references: Sequence, mixture_ref
) -> SeparationReport:
    """Score estimates against references under the best permutation.

    ``permutation[k]`` is the index of the estimate assigned to reference
    ``k``.  The improvement subtracts the SI-SDR of the unprocessed mixture
    channel ``mixture_ref`` against the same reference.
    """
    if len(estimates) != len(references):
        raise ValueError(
            f"{len(estimates)} estimates for {len(references)} references"
        )
    n = len(references)
    if n > 8:
        raise ValueError("exhaustive permutation search supports at most 8 sources")
    scores = np.array([[si_sdr(e, r) for e in estimates] for r in references])
    best = max(permutations(range(n)), key=lambda perm: scores[np.arange(n), perm].mean())
    sdr = [float(scores[k, best[k]]) for k in range(n)]
    baseline = [si_sdr(mixture_ref, r) for r in references]
    return SeparationReport(
        si_sdr_db=sdr,
        si_sdr_improvement_db=[s - b for s, b in zip(sdr, baseline)],
        permutation=list(best),
    )
