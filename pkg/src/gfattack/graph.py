"""Attributed undirected graphs: data model, ingestion and structural helpers.

All graphs are immutable. Operations that "modify" a graph return a new one.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ContractError, FormatError, IntegrityError

log = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected simple graph with per-vertex features and optional labels.

    ``adj`` is a CSR matrix with sorted column indices, i.e. sorted neighbour
    lists. ``orig_ids`` maps each vertex to its id in the graph it was
    extracted from (identity for freshly loaded graphs).
    """

    adj: sp.csr_matrix
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    names: Optional[tuple] = None
    orig_ids: Optional[np.ndarray] = None
    n_classes: Optional[int] = None

    def __post_init__(self):
        adj = sp.csr_matrix(self.adj, dtype=np.float64)
        adj.sum_duplicates()
        adj.sort_indices()
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise IntegrityError(f"adjacency must be square, got {adj.shape}")
        if adj.nnz and (adj.diagonal() != 0).any():
            raise IntegrityError("adjacency has self-loops")
        if adj.nnz and not np.all(adj.data == 1.0):
            raise IntegrityError("adjacency must be binary")
        if (adj != adj.T).nnz:
            raise IntegrityError("adjacency must be symmetric")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != n:
            raise IntegrityError(f"feature matrix has {feats.shape[0]} rows, graph has {n} vertices")
        labels = self.labels
        n_classes = self.n_classes
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise IntegrityError("labels must have one entry per vertex")
            if labels.size and labels.min() < 0:
                raise IntegrityError("labels must be non-negative")
            top = int(labels.max()) + 1 if labels.size else 0
            n_classes = top if n_classes is None else n_classes
            if top > n_classes:
                raise IntegrityError(f"label {top - 1} out of range for {n_classes} classes")
            labels = _frozen(labels)
        if self.names is not None and len(self.names) != n:
            raise IntegrityError("names must have one entry per vertex")
        orig = np.arange(n) if self.orig_ids is None else np.asarray(self.orig_ids, dtype=np.int64)
        adj.data.setflags(write=False)
        adj.indices.setflags(write=False)
        adj.indptr.setflags(write=False)
        object.__setattr__(self, "adj", adj)
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", n_classes)
        object.__setattr__(self, "orig_ids", _frozen(orig))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adj.nnz // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.adj.indices[self.adj.indptr[v]:self.adj.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < nb.size and nb[i] == v)

    def edges(self) -> np.ndarray:
        """Edge list as an (m, 2) array with u < v, lexicographically sorted."""
        coo = sp.triu(self.adj, k=1).tocoo()
        e = np.stack([coo.row, coo.col], axis=1).astype(np.int64)
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    def dense_adjacency(self) -> np.ndarray:
        return self.adj.toarray()

    def with_adjacency(self, adj) -> "AttributedGraph":
        return AttributedGraph(adj, self.features, self.labels, self.names, self.orig_ids, self.n_classes)

    def __eq__(self, other):
        if not isinstance(other, AttributedGraph):
            return NotImplemented
        if self.n != other.n or (self.adj != other.adj).nnz:
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class DegreeProfile:
    degrees: np.ndarray
    volume: int
    d_min: int


@dataclass(frozen=True, order=True)
class EdgeFlip:
    """Toggle of the undirected pair (u, v): sign +1 inserts, -1 removes."""

    u: int
    v: int
    sign: int = field(compare=False)

    def __post_init__(self):
        if self.u == self.v:
            raise ContractError(f"flip ({self.u}, {self.v}) is a self-loop")
        if self.sign not in (1, -1):
            raise ContractError(f"flip sign must be +1 or -1, got {self.sign}")

    @property
    def key(self) -> tuple:
        return (min(self.u, self.v), max(self.u, self.v))

    def negate(self) -> "EdgeFlip":
        return EdgeFlip(self.u, self.v, -self.sign)


def from_edges(n: int, edges: Iterable[Sequence[int]], features=None, labels=None, **kw) -> AttributedGraph:
    """Build a graph from an edge iterable; duplicates and self-loops are dropped."""
    e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    a = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    a = ((a + a.T) > 0).astype(np.float64)
    if features is None:
        features = np.eye(n)
    return AttributedGraph(a, features, labels, **kw)


def degree_profile(g: AttributedGraph) -> DegreeProfile:
    deg = np.diff(g.adj.indptr).astype(np.int64)
    positive = deg[deg > 0]
    d_min = int(positive.min()) if positive.size else 0
    return DegreeProfile(_frozen(deg), int(deg.sum()), d_min)


def largest_connected_component(g: AttributedGraph) -> AttributedGraph:
    """Induced subgraph on the largest component.

    Ties between equally large components go to the one holding the lowest
    vertex id. Vertex order is preserved; ``orig_ids`` records the mapping
    back to ``g`` (composed with any earlier remap).
    """
    if g.n <= 1:
        return g
    _, comp = connected_components(g.adj, directed=False)
    sizes = np.bincount(comp)
    biggest = np.flatnonzero(sizes == sizes.max())
    lowest = np.full(sizes.size, g.n)
    np.minimum.at(lowest, comp, np.arange(g.n))
    keep = np.flatnonzero(comp == biggest[np.argmin(lowest[biggest])])
    if keep.size == g.n:
        return g
    adj = g.adj[keep][:, keep]
    labels = None if g.labels is None else g.labels[keep]
    names = None if g.names is None else tuple(g.names[i] for i in keep)
    return AttributedGraph(adj, g.features[keep], labels, names, g.orig_ids[keep], g.n_classes)


def apply_flips(g: AttributedGraph, flips: Sequence[EdgeFlip]) -> AttributedGraph:
    if not flips:
        return g
    seen = set()
    rows, cols, vals = [], [], []
    for f in flips:
        if not (0 <= f.u < g.n and 0 <= f.v < g.n):
            raise ContractError(f"flip {f} references a vertex outside the graph")
        if f.key in seen:
            raise ContractError(f"flip on pair {f.key} given twice")
        seen.add(f.key)
        present = g.has_edge(f.u, f.v)
        if present != (f.sign == -1):
            what = "insert existing" if present else "remove missing"
            raise ContractError(f"cannot {what} edge {f.key}")
        rows += [f.u, f.v]
        cols += [f.v, f.u]
        vals += [f.sign, f.sign]
    delta = sp.csr_matrix((vals, (rows, cols)), shape=g.adj.shape)
    a = (g.adj + delta).tocsr()
    a.eliminate_zeros()
    return g.with_adjacency(a)


# --------------------------------------------------------------------------
# ingestion


def _open_lines(path: Path):
    try:
        with open(path, newline="") as fh:
            yield from enumerate(fh, start=1)
    except FileNotFoundError:
        raise
    except UnicodeDecodeError as exc:
        raise FormatError(path, 0, f"not a text file ({exc})") from exc


def read_edge_list(path) -> list[tuple[int, int, int]]:
    path = Path(path)
    out = []
    for line_no, line in _open_lines(path):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError(path, line_no, f"expected two vertex ids, got {len(parts)} fields")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(path, line_no, f"non-integer vertex id in {s!r}") from None
        if u < 0 or v < 0:
            raise FormatError(path, line_no, "vertex ids must be non-negative")
        out.append((line_no, u, v))
    return out


def read_features(path) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with open(path, newline="") as fh:
        for line_no, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                row = [float(x) for x in rec]
            except ValueError:
                if line_no == 1:  # header row
                    continue
                raise FormatError(path, line_no, "non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(path, line_no, f"expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise FormatError(path, 0, "no feature rows")
    return np.asarray(rows, dtype=np.float64)


def read_labels(path, n: int) -> np.ndarray:
    path = Path(path)
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, newline="") as fh:
        for line_no, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            if len(rec) != 2:
                raise FormatError(path, line_no, "expected vertex_id,class")
            try:
                v, c = int(rec[0]), int(rec[1])
            except ValueError:
                if line_no == 1:
                    continue
                raise FormatError(path, line_no, "non-integer label record") from None
            if not 0 <= v < n:
                raise IntegrityError(f"{path}:{line_no}: label for unknown vertex {v}")
            if c < 0:
                raise FormatError(path, line_no, "class ids must be non-negative")
            labels[v] = c
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise IntegrityError(f"{path}: {missing.size} vertices have no label (first: {missing[0]})")
    return labels


def row_normalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s


def load_graph(edge_path, feature_path, label_path=None, normalize_features: bool = True) -> AttributedGraph:
    """Load a graph from an edge list, a feature CSV and an optional label CSV.

    Edges are symmetrized and deduplicated; self-loops are dropped and
    counted. The load report goes to the module logger.
    """
    feats = read_features(feature_path)
    n = feats.shape[0]
    recs = read_edge_list(edge_path)
    loops = 0
    pairs = set()
    for line_no, u, v in recs:
        if u >= n or v >= n:
            raise IntegrityError(
                f"{edge_path}:{line_no}: vertex {max(u, v)} has no feature row (n={n})")
        if u == v:
            loops += 1
            continue
        pairs.add((min(u, v), max(u, v)))
    duplicates = len(recs) - loops - len(pairs)
    log.info("loaded %s: n=%d edges=%d self_loops_dropped=%d duplicate_edges=%d",
             edge_path, n, len(pairs), loops, duplicates)
    labels = read_labels(label_path, n) if label_path else None
    if normalize_features:
        feats = row_normalize(feats)
    return from_edges(n, sorted(pairs), feats, labels)


def load_linqs(directory, name: str = "cora", normalize_features: bool = True) -> AttributedGraph:
    """Load the LINQS ``<name>.content`` / ``<name>.cites`` pair."""
    directory = Path(directory)
    content = directory / f"{name}.content"
    ids, rows, classes = [], [], []
    for line_no, line in _open_lines(content):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise FormatError(content, line_no, "expected id, features, class")
        ids.append(parts[0])
        try:
            rows.append([float(x) for x in parts[1:-1]])
        except ValueError:
            raise FormatError(content, line_no, "non-numeric feature value") from None
        classes.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    class_ids = {c: k for k, c in enumerate(sorted(set(classes)))}
    labels = np.array([class_ids[c] for c in classes])
    cites = directory / f"{name}.cites"
    edges, dangling = [], 0
    for line_no, line in _open_lines(cites):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise FormatError(cites, line_no, "expected two paper ids")
        if parts[0] not in index or parts[1] not in index:
            dangling += 1
            continue
        edges.append((index[parts[0]], index[parts[1]]))
    if dangling:
        log.info("%s: skipped %d citations to papers without content", cites, dangling)
    feats = np.asarray(rows)
    if normalize_features:
        feats = row_normalize(feats)
    return from_edges(len(ids), edges, feats, labels, names=ids)


def load_npz(path, normalize_features: bool = True) -> AttributedGraph:
    """Load the sparse ``.npz`` layout used by common graph-attack benchmarks."""
    with np.load(path, allow_pickle=False) as z:
        adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"]))
        if "attr_data" in z:
            feats = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]),
                                  shape=tuple(z["attr_shape"])).toarray()
        else:
            feats = z["attr_matrix"]
        labels = z["labels"] if "labels" in z else None
    adj = adj + adj.T
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj = (adj > 0).astype(np.float64)
    if normalize_features:
        feats = row_normalize(np.asarray(feats, dtype=np.float64))
    return AttributedGraph(adj, feats, labels)


def load_dataset(path, normalize_features: bool = True) -> AttributedGraph:
    """Load a dataset given a directory or an ``.npz`` file.

    A directory may hold ``edges.txt`` + ``features.csv`` (+ ``labels.csv``)
    or a LINQS ``*.content``/``*.cites`` pair.
    """
    path = Path(path)
    if path.is_file() and path.suffix == ".npz":
        return load_npz(path, normalize_features)
    if path.is_dir():
        if (path / "edges.txt").exists():
            labels = path / "labels.csv"
            return load_graph(path / "edges.txt", path / "features.csv",
                              labels if labels.exists() else None, normalize_features)
        content = sorted(path.glob("*.content"))
        if content:
            return load_linqs(path, content[0].stem, normalize_features)
        npz = sorted(path.glob("*.npz"))
        if npz:
            return load_npz(npz[0], normalize_features)
    raise FileNotFoundError(f"no recognised dataset at {path}")


def write_graph(g: AttributedGraph, directory) -> Path:
    """Write ``g`` in the edge-list/CSV layout understood by :func:`load_dataset`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.txt", "w") as fh:
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")
    np.savetxt(directory / "features.csv", g.features, delimiter=",", fmt="%.17g")
    if g.labels is not None:
        with open(directory / "labels.csv", "w") as fh:
            for v, c in enumerate(g.labels):
                fh.write(f"{v},{c}\n")
    return directory
