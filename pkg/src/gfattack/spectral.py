"""Spectrum of the normalized adjacency and first-order eigenvalue updates.

The normalized adjacency ``Â = D^-1/2 A D^-1/2`` shares its eigenvalues with
the generalized problem ``A u = λ D u`` (``u = D^-1/2 v``). Flipping an edge
changes both ``A`` and ``D``; the first-order update of each generalized
eigenvalue is

    λ' ≈ λ + (uᵀ ΔA u − λ uᵀ ΔD u) / (uᵀ D u)

which for a single flip of pair (p, q) with sign w collapses to a handful of
entry lookups in ``u``.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .errors import NumericError, PreconditionError
from .graph import AttributedGraph, DegreeProfile, EdgeFlip, degree_profile

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000
CACHE_ENV = "GFATTACK_CACHE_DIR"
_CACHE_MAGIC = b"GFSPEC"
_CACHE_VERSION = 1


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of ``Â`` sorted by descending eigenvalue.

    ``vecs[:, i]`` is the orthonormal eigenvector for ``lambdas[i]`` and
    ``gen_vecs[:, i] = D^-1/2 vecs[:, i]`` its generalized counterpart, so that
    ``gen_vecs[:, i]ᵀ D gen_vecs[:, i] = 1``. A partial decomposition (from the
    iterative solver) holds only a subset of the spectrum.
    """

    lambdas: np.ndarray
    vecs: np.ndarray
    gen_vecs: np.ndarray
    partial: bool = False

    @property
    def n(self) -> int:
        return self.vecs.shape[0]

    def __len__(self):
        return self.lambdas.size


@dataclass(frozen=True)
class PerturbedSpectrum:
    lambdas_prime: np.ndarray


def normalized_adjacency(adj, deg: Optional[np.ndarray] = None):
    adj = sp.csr_matrix(adj)
    if deg is None:
        deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    return (d @ adj @ d).tocsr()


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _freeze(dec_lambdas, vecs, deg, partial=False) -> SpectralDecomposition:
    lambdas = np.ascontiguousarray(dec_lambdas, dtype=np.float64)
    vecs = np.ascontiguousarray(vecs, dtype=np.float64)
    gen = np.ascontiguousarray(vecs / np.sqrt(deg)[:, None])
    for a in (lambdas, vecs, gen):
        a.setflags(write=False)
    return SpectralDecomposition(lambdas, vecs, gen, partial)


def graph_digest(g: AttributedGraph) -> str:
    h = hashlib.sha256()
    h.update(struct.pack("<q", g.n))
    h.update(np.ascontiguousarray(g.adj.indptr, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(g.adj.indices, dtype="<i8").tobytes())
    return h.hexdigest()


def _cache_path(g: AttributedGraph, cache_dir) -> Optional[Path]:
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return None
    return Path(cache_dir) / f"{graph_digest(g)}.spec"


def save_decomposition(dec: SpectralDecomposition, path) -> None:
    """Binary layout: magic, u32 version, u64 n, u64 m, u8 partial, then
    ``m`` eigenvalues and the n×m eigenvector block as little-endian f8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<IQQB", _CACHE_VERSION, dec.n, len(dec), int(dec.partial)))
        fh.write(dec.lambdas.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(dec.vecs, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_decomposition(path, deg: np.ndarray) -> SpectralDecomposition:
    with open(path, "rb") as fh:
        if fh.read(len(_CACHE_MAGIC)) != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a spectrum cache file")
        version, n, m, partial = struct.unpack("<IQQB", fh.read(21))
        if version != _CACHE_VERSION:
            raise ValueError(f"{path}: cache version {version}, expected {_CACHE_VERSION}")
        lambdas = np.frombuffer(fh.read(8 * m), dtype="<f8")
        vecs = np.frombuffer(fh.read(8 * n * m), dtype="<f8").reshape(n, m)
    if len(deg) != n:
        raise ValueError(f"{path}: cached n={n} does not match graph n={len(deg)}")
    return _freeze(lambdas.copy(), vecs.copy(), deg, bool(partial))


def decompose(g: AttributedGraph, *, large: bool = False, n_eigs: Optional[int] = None,
              which: str = "SA", cache_dir=None) -> SpectralDecomposition:
    """Eigendecomposition of the normalized adjacency of ``g``.

    Graphs up to ``DENSE_LIMIT`` vertices are decomposed densely. Larger ones
    need ``large=True``, which computes only ``n_eigs`` eigenpairs with ARPACK:
    ``which="SA"`` targets the eigenvalues nearest -1 (the low-response end of
    the symmetric filter), ``which="SM"`` those nearest 0 (random-walk filter).
    Eigenvector signs are fixed so that each vector's largest-magnitude entry
    is positive.
    """
    deg = degree_profile(g).degrees.astype(np.float64)
    if g.n == 0:
        raise PreconditionError("cannot decompose an empty graph")
    if (deg == 0).any():
        raise PreconditionError(
            f"{int((deg == 0).sum())} isolated vertices; extract the largest connected component first")
    path = _cache_path(g, cache_dir)
    if path is not None and path.exists():
        try:
            dec = load_decomposition(path, deg)
            if dec.partial == (large and g.n > DENSE_LIMIT):
                return dec
        except ValueError as exc:
            log.warning("ignoring spectrum cache: %s", exc)

    a_hat = normalized_adjacency(g.adj, deg)
    if g.n <= DENSE_LIMIT:
        dense = a_hat.toarray()
        try:
            w, v = scipy.linalg.eigh(dense)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"dense eigensolver failed: {exc}") from exc
        order = np.argsort(-w, kind="stable")
        w, v = w[order], v[:, order]
        resid = np.abs(dense @ v - v * w).max()
        if resid > 1e-6:
            raise NumericError(f"eigendecomposition residual {resid:.3e} exceeds 1e-6")
        dec = _freeze(w, _fix_signs(v), deg)
    elif not large:
        raise PreconditionError(
            f"n={g.n} exceeds the dense limit {DENSE_LIMIT}; pass large=True for a partial decomposition")
    else:
        k = n_eigs or 128
        v0 = np.full(g.n, 1.0 / np.sqrt(g.n))
        try:
            if which == "SM":
                w, v = scipy.sparse.linalg.eigsh(a_hat, k=k, sigma=0.0, which="LM", v0=v0)
            else:
                w, v = scipy.sparse.linalg.eigsh(a_hat, k=k, which=which, v0=v0)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise NumericError(f"ARPACK did not converge: {len(exc.eigenvalues)} of {k} eigenpairs") from exc
        order = np.argsort(-w, kind="stable")
        w, v = w[order], v[:, order]
        resid = np.abs(a_hat @ v - v * w).max()
        if resid > 1e-6:
            raise NumericError(f"iterative eigensolver residual {resid:.3e} exceeds 1e-6")
        dec = _freeze(w, _fix_signs(v), deg, partial=True)
    if path is not None:
        save_decomposition(dec, path)
    return dec


def perturb_eigenvalues(dec: SpectralDecomposition, deg: DegreeProfile, flip: EdgeFlip,
                        index: Optional[Sequence[int]] = None, clamp: bool = True) -> PerturbedSpectrum:
    """First-order estimate of every eigenvalue after applying ``flip``.

    ``index`` restricts the estimate to a subset of eigenpairs (the result
    then has one entry per index). Estimates are clamped to [-1, 1] unless
    ``clamp`` is false.
    """
    lam = dec.lambdas if index is None else dec.lambdas[index]
    u = dec.gen_vecs if index is None else dec.gen_vecs[:, index]
    up, uq = u[flip.u], u[flip.v]
    est = lam + flip.sign * (2.0 * up * uq - lam * (up * up + uq * uq))
    return PerturbedSpectrum(np.clip(est, -1.0, 1.0) if clamp else est)


def perturb_incident(dec: SpectralDecomposition, target: int, others: np.ndarray, signs: np.ndarray,
                     index: Optional[Sequence[int]] = None) -> np.ndarray:
    """Vectorized :func:`perturb_eigenvalues` over flips ``(target, others[j])``.

    Returns a ``len(others) × len(index)`` array of clamped estimates.
    """
    lam = dec.lambdas if index is None else dec.lambdas[index]
    u = dec.gen_vecs if index is None else dec.gen_vecs[:, index]
    ut = u[target]
    uv = u[others]
    est = lam + signs[:, None] * (2.0 * ut * uv - lam * (ut * ut + uv * uv))
    return np.clip(est, -1.0, 1.0)


def spectral_tail_indices(dec: SpectralDecomposition, response: Callable[[np.ndarray], np.ndarray],
                          T: int) -> np.ndarray:
    """Indices of the ``len(dec) - T`` eigenpairs with the smallest |response|.

    Ties in |response| go to the larger index. The result is sorted by
    increasing |response|.
    """
    m = len(dec)
    if not 0 <= T <= m:
        raise ValueError(f"rank cut T={T} outside [0, {m}]")
    mag = np.abs(np.asarray(response(dec.lambdas), dtype=np.float64))
    idx = np.arange(m)
    order = np.lexsort((-idx, mag))
    return order[: m - T].copy()

