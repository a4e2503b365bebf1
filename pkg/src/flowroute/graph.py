"""Paired structural/functional graphs, oriented edge lists and the incidence map.

Edges are oriented i -> j with i < j and sorted lexicographically, so every
edge-indexed vector in the package lines up with ``EdgeList.edges``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptyGraphError, InputValidationError

SYM_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def check_symmetric(a: np.ndarray, name: str, tol: float = SYM_TOL) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputValidationError(f"{name} has non-finite entries")
    dev = np.max(np.abs(a - a.T)) if a.size else 0.0
    if dev > tol:
        raise InputValidationError(f"{name} is not symmetric (max |a - a^T| = {dev:.3e})")


def validate_sc(sc: np.ndarray) -> np.ndarray:
    sc = np.asarray(sc, dtype=np.float64)
    check_symmetric(sc, "sc")
    if np.any(np.diag(sc) != 0.0):
        raise InputValidationError("sc must have a zero diagonal")
    if np.any(sc < 0.0):
        raise InputValidationError("sc entries must be nonnegative")
    return sc


@dataclass(frozen=True)
class ConnectomePair:
    """One subject: structural weights, functional correlations, node features, label."""

    sc: np.ndarray
    fc: np.ndarray
    features: np.ndarray | None = None
    label: int | None = None
    id: str = ""

    def __post_init__(self):
        sc = validate_sc(self.sc)
        fc = np.asarray(self.fc, dtype=np.float64)
        check_symmetric(fc, "fc")
        if fc.shape != sc.shape:
            raise DimensionError(f"fc shape {fc.shape} does not match sc shape {sc.shape}")
        if sc.shape[0] < 2:
            raise InputValidationError("a subject needs at least 2 nodes")
        feats = self.features
        if feats is not None:
            feats = np.asarray(feats, dtype=np.float64)
            if feats.ndim == 1:
                feats = feats[:, None]
            if feats.shape[0] != sc.shape[0]:
                raise DimensionError(
                    f"features have {feats.shape[0]} rows, expected {sc.shape[0]}"
                )
            feats = _freeze(feats.copy())
        if self.label is not None and int(self.label) < 0:
            raise InputValidationError("label must be a nonnegative class index")
        object.__setattr__(self, "sc", _freeze(sc.copy()))
        object.__setattr__(self, "fc", _freeze(fc.copy()))
        object.__setattr__(self, "features", feats)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def n_nodes(self) -> int:
        return self.sc.shape[0]

    def node_features(self) -> np.ndarray:
        """Explicit features, or one-hot node identity when none were supplied."""
        if self.features is not None:
            return self.features
        return np.eye(self.n_nodes)


@dataclass(frozen=True)
class EdgeList:
    edges: np.ndarray  # (M, 2) int, i < j
    weights: np.ndarray  # (M,)
    n_nodes: int
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if edges.shape[0] != weights.shape[0]:
            raise DimensionError("edges and weights differ in length")
        object.__setattr__(self, "edges", _freeze(edges))
        object.__setattr__(self, "weights", _freeze(weights))

    def __len__(self) -> int:
        return self.edges.shape[0]

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def index_of(self, i: int, j: int) -> int:
        if self._index is None:
            object.__setattr__(
                self, "_index", {(int(a), int(b)): m for m, (a, b) in enumerate(self.edges)}
            )
        a, b = (i, j) if i < j else (j, i)
        return self._index[(a, b)]

    def degrees(self) -> np.ndarray:
        """Unweighted node degree."""
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def incidence(self) -> "IncidenceOperator":
        return IncidenceOperator(self.src, self.dst, self.n_nodes)

    def to_adjacency(self, values: np.ndarray | None = None) -> np.ndarray:
        """Symmetric N x N matrix with ``values`` (default: weights) on the edges."""
        vals = self.weights if values is None else np.asarray(values, dtype=np.float64)
        A = np.zeros((self.n_nodes, self.n_nodes))
        A[self.src, self.dst] = vals
        A[self.dst, self.src] = vals
        return A


def build_edge_list(sc: np.ndarray, threshold: float = 0.0) -> EdgeList:
    """All pairs i < j with ``sc[i, j] > threshold``, in lexicographic order."""
    sc = validate_sc(sc)
    if threshold < 0:
        raise InputValidationError("threshold must be nonnegative")
    # np.nonzero on the strict upper triangle walks rows then columns: lexicographic.
    i, j = np.nonzero(np.triu(sc > threshold, k=1))
    if i.size == 0:
        raise EmptyGraphError(f"no structural edges above threshold {threshold}")
    return EdgeList(np.stack([i, j], axis=1), sc[i, j], sc.shape[0])


class IncidenceOperator:
    """The signed M x N incidence map, applied without materialising it.

    Row m has +1 at ``src[m]`` and -1 at ``dst[m]``.
    """

    def __init__(self, src: np.ndarray, dst: np.ndarray, n_nodes: int):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.n_nodes = int(n_nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.src.size, self.n_nodes)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Node potentials -> edge differences v[i] - v[j]; works on (N,) or (N, k)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n_nodes:
            raise DimensionError(f"expected leading dimension {self.n_nodes}, got {v.shape[0]}")
        return v[self.src] - v[self.dst]

    def apply_transpose(self, e: np.ndarray) -> np.ndarray:
        """Edge values -> node divergence B^T e."""
        e = np.asarray(e, dtype=np.float64)
        if e.shape[0] != self.src.size:
            raise DimensionError(f"expected leading dimension {self.src.size}, got {e.shape[0]}")
        out = np.zeros((self.n_nodes,) + e.shape[1:])
        np.add.at(out, self.src, e)
        np.subtract.at(out, self.dst, e)
        return out

    def dense(self) -> np.ndarray:
        B = np.zeros(self.shape)
        rows = np.arange(self.src.size)
        B[rows, self.src] = 1.0
        B[rows, self.dst] = -1.0
        return B

    def columns(self) -> np.ndarray:
        """B^T as a dense N x M matrix: column m is e_i - e_j."""
        return self.dense().T


def apply_incidence(B: IncidenceOperator, v: np.ndarray) -> np.ndarray:
    return B.apply(v)


# --- file formats -------------------------------------------------------------


def read_matrix_csv(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        try:
            return np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise InputValidationError(f"{path}: not a numeric CSV matrix ({exc})") from None


def format_float(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else str(float(x))


def write_matrix_csv(path: str | os.PathLike, a: np.ndarray) -> None:
    """Headerless CSV with shortest round-trip (<= 17 significant digit) floats."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        for row in a:
            fh.write(",".join(format_float(x) for x in row))
            fh.write("\n")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    sc: Path
    fc: Path
    features: Path | None
    label: int | None

    def load(self) -> ConnectomePair:
        feats = read_matrix_csv(self.features) if self.features is not None else None
        return ConnectomePair(
            sc=read_matrix_csv(self.sc),
            fc=read_matrix_csv(self.fc),
            features=feats,
            label=self.label,
            id=self.id,
        )


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    """Parse a dataset manifest; relative paths resolve against the manifest's folder."""
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise InputValidationError("manifest must be a JSON array")
    base = path.parent

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    entries = []
    for k, obj in enumerate(raw):
        try:
            entries.append(
                ManifestEntry(
                    id=str(obj["id"]),
                    sc=resolve(obj["sc"]),
                    fc=resolve(obj["fc"]),
                    features=resolve(obj.get("features")),
                    label=None if obj.get("label") is None else int(obj["label"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise InputValidationError(f"manifest entry {k} is malformed: {exc}") from exc
    return entries


def write_manifest(path: str | os.PathLike, entries: list[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=1)
        fh.write("\n")


def load_dataset(path: str | os.PathLike) -> list[ConnectomePair]:
    return [e.load() for e in read_manifest(path)]


def max_normalize(sc: np.ndarray) -> np.ndarray:
    m = np.max(sc)
    return sc / m if m > 0 else sc
