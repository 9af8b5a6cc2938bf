"""Random graph generators for tests and offline demos."""

from __future__ import annotations

import numpy as np

from .graph import AttributedGraph, from_edges, largest_connected_component, row_normalize


def erdos_renyi(n: int, p: float, seed=None, features=None) -> AttributedGraph:
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return from_edges(n, np.stack([iu[keep], ju[keep]], axis=1), features)


def citation_like(n: int = 2500, n_classes: int = 7, n_words: int = 1433, avg_degree: float = 3.9,
                  homophily: float = 0.78, words_per_doc: int = 18, topic_strength: float = 0.2,
                  seed: int = 0) -> AttributedGraph:
    """Degree-corrected planted partition with bag-of-words features.

    Defaults mimic the statistics of small citation benchmarks: sparse,
    heavy-tailed degrees, ~80% intra-class edges, and binary word features
    drawn from a class-specific topic mixed with a shared background. The
    result is reduced to its largest connected component, features are
    row-normalized.
    """
    rng = np.random.default_rng(seed)
    sizes = rng.dirichlet(np.full(n_classes, 8.0))
    labels = rng.choice(n_classes, size=n, p=sizes)
    # Pareto propensities give a heavy-tailed degree sequence
    theta = rng.pareto(2.5, size=n) + 1.0
    m = int(round(avg_degree * n / 2))
    n_intra = int(round(homophily * m))
    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    class_w = np.array([theta[ix].sum() for ix in by_class])

    def draw(ix, k):
        p = theta[ix] / theta[ix].sum()
        return rng.choice(ix, size=k, p=p)

    edges = []
    cls = rng.choice(n_classes, size=n_intra, p=class_w / class_w.sum())
    for c in range(n_classes):
        k = int((cls == c).sum())
        if k and by_class[c].size > 1:
            edges.append(np.stack([draw(by_class[c], k), draw(by_class[c], k)], axis=1))
    all_ix = np.arange(n)
    k = m - n_intra
    u, v = draw(all_ix, k), draw(all_ix, k)
    edges.append(np.stack([u, v], axis=1))
    edges = np.concatenate(edges)

    background = rng.dirichlet(np.full(n_words, 0.3))
    topics = rng.dirichlet(np.full(n_words, 0.05), size=n_classes)
    word_p = topic_strength * topics[labels] + (1 - topic_strength) * background
    X = np.zeros((n, n_words))
    for i in range(n):
        w = rng.choice(n_words, size=words_per_doc, p=word_p[i])
        X[i, w] = 1.0
    g = from_edges(n, edges, row_normalize(X), labels, n_classes=n_classes)
    return largest_connected_component(g)


def two_cliques(k: int, features=None) -> AttributedGraph:
    """Two disjoint k-cliques labelled 0 and 1."""
    e = [(i, j) for i in range(k) for j in range(i + 1, k)]
    e += [(i + k, j + k) for i, j in e]
    labels = np.repeat([0, 1], k)
    return from_edges(2 * k, e, features if features is not None else np.eye(2 * k), labels)

