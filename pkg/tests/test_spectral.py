import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

import gfattack.spectral as spectral
from gfattack.errors import PreconditionError
from gfattack.graph import EdgeFlip, degree_profile, from_edges
from gfattack.spectral import (decompose, load_decomposition, perturb_eigenvalues, perturb_incident,
                               save_decomposition, spectral_tail_indices)

from conftest import connected_er as _connected_er
from conftest import exact_normalized_eigs, flipped


def connected_er(n, p, seed):
    return _connected_er(n, p, seed, min_degree=2)


def eq9_dense(A, D, dA, dD):
    """Generalized first-order update from dense matrices: (uᵀΔAu − λuᵀΔDu)/(uᵀDu)."""
    lam, U = scipy.linalg.eigh(A, D)
    corr = np.array([(U[:, i] @ dA @ U[:, i] - lam[i] * U[:, i] @ dD @ U[:, i]) / (U[:, i] @ D @ U[:, i])
                     for i in range(len(lam))])
    order = np.argsort(-lam)
    return lam[order], corr[order]


def test_p3_eigenvalues(p3):
    np.testing.assert_allclose(decompose(p3).lambdas, [1.0, 0.0, -1.0], atol=1e-12)


def test_k3_eigenvalues(k3):
    np.testing.assert_allclose(decompose(k3).lambdas, [1.0, -0.5, -0.5], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_decomposition_invariants(seed):
    g = connected_er(25, 0.25, seed)
    dec = decompose(g)
    A = g.dense_adjacency()
    d = A.sum(axis=1)
    assert np.all(dec.lambdas <= 1 + 1e-12) and np.all(dec.lambdas >= -1 - 1e-12)
    assert np.all(np.diff(dec.lambdas) <= 1e-12)
    assert abs(dec.lambdas[0] - 1.0) < 1e-8
    np.testing.assert_allclose(dec.vecs.T @ dec.vecs, np.eye(g.n), atol=1e-8)
    A_hat = A / np.sqrt(np.outer(d, d))
    assert np.abs(A_hat @ dec.vecs - dec.vecs * dec.lambdas).max() < 1e-6
    gen = dec.gen_vecs
    assert np.abs(A @ gen - (d[:, None] * gen) * dec.lambdas).max() < 1e-6
    np.testing.assert_allclose(np.einsum("ij,i,ij->j", gen, d, gen), 1.0, atol=1e-10)
    # stationary vector ∝ D^1/2 1
    top = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
    assert abs(abs(dec.vecs[:, 0] @ top) - 1.0) < 1e-8
    assert abs(dec.lambdas.sum()) < 1e-8
    # sign convention: largest-magnitude entry positive
    idx = np.argmax(np.abs(dec.vecs), axis=0)
    assert np.all(dec.vecs[idx, np.arange(g.n)] > 0)


def test_isolated_vertex_rejected():
    with pytest.raises(PreconditionError):
        decompose(from_edges(3, [(0, 1)]))


def test_dense_limit(monkeypatch):
    g = connected_er(40, 0.3, 1)
    dense = decompose(g)
    monkeypatch.setattr(spectral, "DENSE_LIMIT", 20)
    with pytest.raises(PreconditionError):
        decompose(g)
    part = decompose(g, large=True, n_eigs=5, which="SA")
    assert part.partial and len(part) == 5
    np.testing.assert_allclose(part.lambdas, dense.lambdas[-5:], atol=1e-8)
    np.testing.assert_allclose(np.abs(part.vecs.T @ dense.vecs[:, -5:]), np.eye(5), atol=1e-6)
    near_zero = decompose(g, large=True, n_eigs=4, which="SM")
    expect = np.sort(dense.lambdas[np.argsort(np.abs(dense.lambdas))[:4]])[::-1]
    np.testing.assert_allclose(near_zero.lambdas, expect, atol=1e-8)


def test_cache_roundtrip(tmp_path, monkeypatch):
    g = connected_er(20, 0.3, 2)
    monkeypatch.setenv(spectral.CACHE_ENV, str(tmp_path))
    dec = decompose(g)
    files = list(tmp_path.glob("*.spec"))
    assert len(files) == 1
    raw = files[0].read_bytes()
    assert raw.startswith(b"GFSPEC")
    assert len(raw) == 6 + 21 + 8 * (g.n + g.n * g.n)
    again = decompose(g)
    np.testing.assert_array_equal(again.lambdas, dec.lambdas)
    np.testing.assert_array_equal(again.vecs, dec.vecs)
    np.testing.assert_array_equal(again.gen_vecs, dec.gen_vecs)


def test_cache_rejects_wrong_version(tmp_path):
    g = connected_er(12, 0.4, 3)
    dec = decompose(g)
    path = tmp_path / "x.spec"
    save_decomposition(dec, path)
    data = bytearray(path.read_bytes())
    data[6] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="version"):
        load_decomposition(path, degree_profile(g).degrees.astype(float))


def test_zero_perturbation_identity():
    g = connected_er(15, 0.4, 4)
    dec = decompose(g)
    # a flip applied twice in opposite directions cancels exactly
    f = EdgeFlip(0, 1, -1 if g.has_edge(0, 1) else 1)
    up = perturb_eigenvalues(dec, degree_profile(g), f, clamp=False).lambdas_prime
    down = perturb_eigenvalues(dec, degree_profile(g), f.negate(), clamp=False).lambdas_prime
    np.testing.assert_allclose((up + down) / 2, dec.lambdas, atol=1e-14)


def test_closed_form_matches_general_formula():
    g = connected_er(18, 0.35, 5)
    dec = decompose(g)
    A = g.dense_adjacency()
    D = np.diag(A.sum(axis=1))
    for v in (1, 4, 9):
        w = -1.0 if g.has_edge(0, v) else 1.0
        dA = np.zeros_like(A)
        dA[0, v] = dA[v, 0] = w
        dD = np.diag(dA.sum(axis=1))
        lam, corr = eq9_dense(A, D, dA, dD)
        est = perturb_eigenvalues(dec, degree_profile(g), EdgeFlip(0, v, int(w)), clamp=False).lambdas_prime
        np.testing.assert_allclose(np.sort(est), np.sort(lam + corr), atol=1e-10)


def test_p3_removal_against_exact(p3):
    # removing (0, 1) isolates vertex 0; the remaining edge has spectrum {1, -1}
    # and the isolated vertex contributes 0
    dec = decompose(p3)
    est = perturb_eigenvalues(dec, degree_profile(p3), EdgeFlip(0, 1, -1)).lambdas_prime
    A = p3.dense_adjacency()
    D = np.diag(A.sum(axis=1))
    dA = np.zeros((3, 3))
    dA[0, 1] = dA[1, 0] = -1
    lam, corr = eq9_dense(A, D, dA, np.diag(dA.sum(axis=1)))
    np.testing.assert_allclose(est, np.clip(lam + corr, -1, 1), atol=1e-12)
    exact = np.array([1.0, 0.0, -1.0])
    # first order recovers the extreme eigenvalues exactly; the middle one moves
    np.testing.assert_allclose(est[[0, 2]], exact[[0, 2]], atol=1e-12)
    assert np.all(np.abs(est) <= 1.0)


def test_er30_single_flip_accuracy():
    g = connected_er(30, 0.3, 6)
    dec = decompose(g)
    A = g.dense_adjacency()
    t = 7
    errs = []
    for v in range(g.n):
        if v == t:
            continue
        f = EdgeFlip(t, v, -1 if g.has_edge(t, v) else 1)
        est = np.sort(perturb_eigenvalues(dec, degree_profile(g), f).lambdas_prime)[::-1]
        errs.append(np.abs(est - exact_normalized_eigs(flipped(A, t, v))))
    errs = np.array(errs)
    assert errs.max() <= 0.15
    assert errs.mean() <= 0.03


def test_batched_matches_single():
    g = connected_er(20, 0.3, 8)
    dec = decompose(g)
    others = np.array([1, 3, 5, 11])
    signs = np.array([-1 if g.has_edge(0, v) else 1 for v in others])
    batch = perturb_incident(dec, 0, others, signs, np.arange(4, 12))
    for row, v, s in zip(batch, others, signs):
        one = perturb_eigenvalues(dec, degree_profile(g), EdgeFlip(0, int(v), int(s)), np.arange(4, 12))
        np.testing.assert_array_equal(row, one.lambdas_prime)


def test_first_order_matches_finite_differences():
    g = connected_er(24, 0.3, 9)
    A = g.dense_adjacency()
    D = np.diag(A.sum(axis=1))
    t, v = 2, 13
    w = -1.0 if g.has_edge(t, v) else 1.0
    dA = np.zeros_like(A)
    dA[t, v] = dA[v, t] = w
    dD = np.diag(dA.sum(axis=1))
    lam0 = scipy.linalg.eigh(A, D, eigvals_only=True)[::-1]
    assert np.min(np.abs(np.diff(lam0))) > 1e-3, "test needs simple eigenvalues"
    eps = 1e-5
    plus = scipy.linalg.eigh(A + eps * dA, D + eps * dD, eigvals_only=True)[::-1]
    minus = scipy.linalg.eigh(A - eps * dA, D - eps * dD, eigvals_only=True)[::-1]
    fd = (plus - minus) / (2 * eps)
    dec = decompose(g)
    corr = perturb_eigenvalues(dec, degree_profile(g), EdgeFlip(t, v, int(w)), clamp=False).lambdas_prime - dec.lambdas
    np.testing.assert_allclose(corr, fd, atol=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 19), min_size=1, max_size=4, unique=True))
def test_corrections_are_additive(seed, vs):
    g = connected_er(20, 0.35, seed)
    dec = decompose(g)
    A = g.dense_adjacency()
    dA = np.zeros_like(A)
    total = np.zeros(g.n)
    for v in vs:
        w = -1 if g.has_edge(0, v) else 1
        dA[0, v] = dA[v, 0] = w
        total += perturb_eigenvalues(dec, degree_profile(g), EdgeFlip(0, v, w), clamp=False).lambdas_prime - dec.lambdas
    dD = np.diag(dA.sum(axis=1))
    U = dec.gen_vecs
    combined = np.einsum("ji,jk,ki->i", U, dA, U) - dec.lambdas * np.einsum("ji,jk,ki->i", U, dD, U)
    np.testing.assert_allclose(total, combined, atol=1e-12)


def test_tail_indices_examples(k3):
    dec = decompose(k3)
    resp = lambda lam: (lam + 1.0) ** 2
    assert spectral_tail_indices(dec, resp, 3).tolist() == []
    assert sorted(spectral_tail_indices(dec, resp, 0).tolist()) == [0, 1, 2]
    assert sorted(spectral_tail_indices(dec, resp, 1).tolist()) == [1, 2]
    # equal responses: the larger index enters the tail first
    assert spectral_tail_indices(dec, resp, 2).tolist() == [2]
    with pytest.raises(ValueError):
        spectral_tail_indices(dec, resp, 4)


def test_tail_by_response_magnitude():
    g = connected_er(20, 0.3, 10)
    dec = decompose(g)
    resp = lambda lam: lam + lam ** 2
    tail = spectral_tail_indices(dec, resp, 12)
    mags = np.abs(resp(dec.lambdas))
    assert set(tail) == set(np.argsort(mags, kind="stable")[:8])
