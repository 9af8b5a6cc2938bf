"""Embedding-quality scores used to rank candidate edge flips.

Both scores are upper bounds on the residual of the best rank-T approximation
of a filtered feature matrix: a spectrum term summed over the low-response
("tail") eigenpairs times the feature energy carried by those eigenpairs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import DegreeProfile
from .spectral import PerturbedSpectrum, SpectralDecomposition, spectral_tail_indices


class FilterFamily(str, enum.Enum):
    SYMMETRIC = "symmetric"      # SGC / GCN: (Â + I)^K
    RANDOM_WALK = "random_walk"  # DeepWalk / LINE: (1/K) Σ_k (D^-1 A)^k


@dataclass(frozen=True)
class AttackLossSpec:
    family: FilterFamily
    K: int
    T: int

    def __post_init__(self):
        object.__setattr__(self, "family", FilterFamily(self.family))
        if self.K < 1:
            raise ValueError(f"filter order K must be >= 1, got {self.K}")
        if self.T < 0:
            raise ValueError(f"rank cut T must be >= 0, got {self.T}")

    @classmethod
    def for_graph(cls, family, K: int, n: int, tail_size: int = 128) -> "AttackLossSpec":
        """Spec whose tail holds ``min(tail_size, n - 1)`` eigenpairs."""
        return cls(family, K, n - min(tail_size, n - 1))

    def check(self, n: int) -> None:
        if n - self.T < 1:
            raise ValueError(f"rank cut T={self.T} leaves no tail for n={n}")

    def response(self, lam: np.ndarray) -> np.ndarray:
        return filter_response(self.family, self.K, lam)


def filter_response(family, K: int, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if FilterFamily(family) is FilterFamily.SYMMETRIC:
        return (lam + 1.0) ** K
    return _window_mean(lam, K)


def _window_mean(lam: np.ndarray, K: int) -> np.ndarray:
    acc = np.zeros_like(lam)
    p = np.ones_like(lam)
    for _ in range(K):
        p = p * lam
        acc = acc + p
    return acc / K


@dataclass(frozen=True)
class SignalEnergy:
    energies: np.ndarray


def signal_energy(dec: SpectralDecomposition, X: np.ndarray) -> SignalEnergy:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != dec.n:
        raise ValueError(f"feature matrix has {X.shape[0]} rows, decomposition has n={dec.n}")
    proj = dec.vecs.T @ X
    e = np.einsum("ij,ij->i", proj, proj)
    e.setflags(write=False)
    return SignalEnergy(e)


def tail_indices(spec: AttackLossSpec, dec: SpectralDecomposition) -> np.ndarray:
    spec.check(len(dec))
    return spectral_tail_indices(dec, spec.response, spec.T)


def _tail_lambdas(lp, tail) -> np.ndarray:
    lam = lp.lambdas_prime if isinstance(lp, PerturbedSpectrum) else np.asarray(lp)
    return lam[..., tail]


def sgc_score(spec: AttackLossSpec, lp, se: SignalEnergy, tail) -> float:
    """Σ_tail (λ'+1)^{2K} · Σ_tail e_i.

    ``lp`` is a :class:`PerturbedSpectrum` over the full index range; larger
    scores mean a more damaging flip.
    """
    lam = _tail_lambdas(lp, tail)
    return float(np.sum((lam + 1.0) ** (2 * spec.K)) * se.energies[tail].sum())


def deepwalk_score(spec: AttackLossSpec, lp, se: SignalEnergy, deg: DegreeProfile, tail) -> float:
    """Σ_tail ((1/d_min)·|(1/K) Σ_k λ'^k|)² · Σ_tail e_i.  K = 1 is LINE."""
    lam = _tail_lambdas(lp, tail)
    mag = np.abs(_window_mean(lam, spec.K)) / deg.d_min
    return float(np.sum(mag ** 2) * se.energies[tail].sum())


def spectrum_terms(spec: AttackLossSpec, lam_tail: np.ndarray, deg: DegreeProfile) -> np.ndarray:
    """Spectrum factor for a batch of perturbed tail spectra (rows)."""
    if spec.family is FilterFamily.SYMMETRIC:
        return np.sum((lam_tail + 1.0) ** (2 * spec.K), axis=-1)
    mag = np.abs(_window_mean(lam_tail, spec.K)) / deg.d_min
    return np.sum(mag ** 2, axis=-1)


def rank_bound_check(dec: SpectralDecomposition, X: np.ndarray, response, T: int) -> tuple[float, float]:
    """Both sides of the rank-T residual bound for the filter ``response``.

    lhs is the squared Frobenius norm of the tail part of the filtered
    signal, rhs the product bound (Σ h(λ)²)·(Σ ‖vᵀX‖²) over the same tail.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    tail = spectral_tail_indices(dec, response, T)
    if tail.size == 0:
        return 0.0, 0.0
    h = np.asarray(response(dec.lambdas[tail]), dtype=np.float64)
    v = dec.vecs[:, tail]
    proj = v.T @ X
    lhs = float(np.linalg.norm(v @ (h[:, None] * proj), "fro") ** 2)
    rhs = float(np.sum(h ** 2) * np.sum(proj ** 2))
    return lhs, rhs
