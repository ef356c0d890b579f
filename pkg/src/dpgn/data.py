"""Datasets, chronological splits, normalisation and on-disk formats.

Files written by :func:`save_dataset`::

    graph.json      {"n_nodes", "edges": [[i, j, w], ...],
                     "triangle_weights": [[i, j, k, w], ...], "edge_types": [name, ...]}
    features.csv    sequence_id,t,node_id,<feature names...>
    targets.csv     sequence_id,t,node_id,<target names...>
    manifest.json   see :class:`DatasetManifest`
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DPGNError,
    EmptyDataset,
    MisalignedTime,
    ParseError,
    UnknownEdgeTypeName,
)
from .graph import Graph, build_graph

SCHEMA_VERSION = 1
DEFAULT_SPLIT = (0.65, 0.10, 0.25)
SPLITS = ("train", "val", "test")
UNKNOWN = "unknown"


# -- normalisation -------------------------------------------------------------


class NodeStandardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-score over arrays shaped ``(..., n_features)``.

    Thin wrapper around :class:`~sklearn.preprocessing.StandardScaler` that
    flattens the leading (time, node) axes.
    """

    def __init__(self, with_mean=True, with_std=True):
        self.with_mean = with_mean
        self.with_std = with_std

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.scaler_ = StandardScaler(with_mean=self.with_mean, with_std=self.with_std)
        self.scaler_.fit(X.reshape(-1, X.shape[-1]))
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scaler_")
        X = np.asarray(X, dtype=float)
        return self.scaler_.transform(X.reshape(-1, X.shape[-1])).reshape(X.shape)

    def inverse_transform(self, X):
        check_is_fitted(self, "scaler_")
        X = np.asarray(X, dtype=float)
        return self.scaler_.inverse_transform(X.reshape(-1, X.shape[-1])).reshape(X.shape)

    def to_dict(self) -> dict:
        check_is_fitted(self, "scaler_")
        s = self.scaler_
        return {
            "mean": None if s.mean_ is None else s.mean_.tolist(),
            "scale": None if s.scale_ is None else s.scale_.tolist(),
        }


# -- dataset -------------------------------------------------------------------


def assign_splits(sequence_ids, fractions=DEFAULT_SPLIT) -> np.ndarray:
    """Chronological train/val/test tags over the whole sample order.

    Samples are taken to be in time order, sequences being consecutive
    episodes: the first ``round(f_train * N)`` samples are train, the next
    ``round(f_val * N)`` val, the rest test.
    """
    fractions = _check_fractions(fractions)
    n = len(sequence_ids)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    split = np.empty(n, dtype=object)
    split[:n_train] = "train"
    split[n_train : n_train + n_val] = "val"
    split[n_train + n_val :] = "test"
    return split


def _check_fractions(fractions) -> tuple[float, float, float]:
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three positive numbers summing to 1, got {fr}")
    return fr


@dataclass
class TrajectoryDataset:
    """Supervised pairs on one graph.

    Sample ``k`` pairs ``node_features[k]`` (observations at time
    ``times[k]`` of sequence ``sequence_ids[k]``) with ``targets[k]``, the
    values one step later.  Samples are ordered by sequence, then time.
    """

    graph: Graph
    node_features: np.ndarray  # (N, n_nodes, d_in)
    targets: np.ndarray  # (N, n_nodes, d_out)
    edge_types: np.ndarray  # (n_edges,) int, 0 = unknown
    sequence_ids: np.ndarray
    times: np.ndarray
    split: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    target_names: list[str] = field(default_factory=list)
    edge_type_map: dict[str, int] = field(default_factory=lambda: {UNKNOWN: 0})
    feature_scaler: NodeStandardizer | None = None
    target_scaler: NodeStandardizer | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.edge_types = np.asarray(self.edge_types, dtype=np.int64)
        self.sequence_ids = np.asarray(self.sequence_ids, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.int64)
        self.split = np.asarray(self.split, dtype=object)
        N = len(self.node_features)
        if N == 0:
            raise EmptyDataset("dataset has no samples")
        if self.node_features.ndim != 3 or self.targets.ndim != 3:
            raise MisalignedTime("features and targets must be (time, node, channel) arrays")
        if len(self.targets) != N or not (len(self.sequence_ids) == len(self.times) == len(self.split) == N):
            raise MisalignedTime(
                f"{N} feature steps, {len(self.targets)} target steps, "
                f"{len(self.times)} time stamps"
            )
        n = self.graph.n_nodes
        if self.node_features.shape[1] != n or self.targets.shape[1] != n:
            raise MisalignedTime("node axis does not match the graph")
        if self.edge_types.shape != (self.graph.n_edges,):
            raise ValueError("one edge type per graph edge required")
        if not self.feature_names:
            self.feature_names = [f"f{k + 1}" for k in range(self.d_in)]
        if not self.target_names:
            self.target_names = [f"y{k + 1}" for k in range(self.d_out)]

    def __len__(self):
        return len(self.node_features)

    @property
    def d_in(self) -> int:
        return self.node_features.shape[2]

    @property
    def d_out(self) -> int:
        return self.targets.shape[2]

    @property
    def n_edge_types(self) -> int:
        return max(max(self.edge_type_map.values(), default=0), int(self.edge_types.max(initial=0))) + 1

    @property
    def n_sequences(self) -> int:
        return len(np.unique(self.sequence_ids))

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def windows(self, split: str, horizon: int) -> np.ndarray:
        """Start indices ``k`` whose targets ``k .. k+horizon-1`` are
        consecutive steps of one sequence, all inside ``split``."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        N = len(self)
        ok = self.split == split
        starts = []
        for k in np.flatnonzero(ok):
            end = k + horizon - 1
            if end >= N:
                continue
            if (
                self.sequence_ids[end] == self.sequence_ids[k]
                and self.times[end] - self.times[k] == horizon - 1
                and ok[k : end + 1].all()
            ):
                starts.append(k)
        return np.asarray(starts, dtype=np.int64)

    def with_splits(self, fractions=DEFAULT_SPLIT) -> "TrajectoryDataset":
        return replace(self, split=assign_splits(self.sequence_ids, fractions))

    def normalized(self) -> "TrajectoryDataset":
        """Z-score features and targets with statistics of the train split."""
        train = self.indices("train")
        if not len(train):
            raise EmptyDataset("no training samples to fit normalisation on")
        fs = NodeStandardizer().fit(self.node_features[train])
        ts = NodeStandardizer().fit(self.targets[train])
        return replace(
            self,
            node_features=fs.transform(self.node_features),
            targets=ts.transform(self.targets),
            feature_scaler=fs,
            target_scaler=ts,
        )

    def denormalize_targets(self, y) -> np.ndarray:
        if self.target_scaler is None:
            return np.asarray(y, dtype=float)
        return self.target_scaler.inverse_transform(y)


# -- graph JSON ----------------------------------------------------------------


def graph_to_json(g: Graph, edge_type_names: Sequence[str] | None = None) -> dict:
    out = {
        "n_nodes": g.n_nodes,
        "edges": [[int(i), int(j), float(w)] for (i, j), w in zip(g.edges, g.edge_weights)],
    }
    if g.n_triangles and np.any(g.triangle_weights != 1.0):
        out["triangle_weights"] = [
            [int(i), int(j), int(k), float(w)] for (i, j, k), w in zip(g.triangles, g.triangle_weights)
        ]
    if edge_type_names is not None:
        out["edge_types"] = list(edge_type_names)
    return out


def graph_from_json(obj: Mapping, path=None) -> tuple[Graph, list[str] | None]:
    """Parse a graph JSON object; returns the graph and its optional edge type names."""
    try:
        n = int(obj["n_nodes"])
        edges, weights = [], []
        for rec in obj["edges"]:
            if len(rec) not in (2, 3):
                raise ParseError(f"edge record {rec!r} must be [i, j] or [i, j, w]", path)
            edges.append((int(rec[0]), int(rec[1])))
            weights.append(float(rec[2]) if len(rec) == 3 else 1.0)
        tri = {}
        for rec in obj.get("triangle_weights") or []:
            tri[(int(rec[0]), int(rec[1]), int(rec[2]))] = float(rec[3])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed graph JSON: {exc}", path) from exc
    g = build_graph(n, edges, weights, tri)
    names = obj.get("edge_types")
    if names is not None:
        if len(names) != len(edges):
            raise ParseError(f"{len(names)} edge types for {len(edges)} edges", path)
        # reorder from file order to canonical order
        order = {(min(a, b), max(a, b)): name for (a, b), name in zip(edges, names)}
        names = [order[e] for e in g.edges]
    return g, names


def load_graph(path) -> tuple[Graph, list[str] | None]:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    return graph_from_json(obj, path)


def save_graph(g: Graph, path, edge_type_names: Sequence[str] | None = None) -> None:
    Path(path).write_text(json.dumps(graph_to_json(g, edge_type_names), indent=1) + "\n")


# -- CSV helpers ---------------------------------------------------------------


def _write_node_csv(path, prefix_cols, names, seq, times, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(prefix_cols) + list(names))
        n_nodes = values.shape[1]
        for k in range(len(values)):
            s, t = int(seq[k]), int(times[k])
            for node in range(n_nodes):
                w.writerow([s, t, node] + [repr(float(x)) for x in values[k, node]])


def _read_node_csv(path, n_nodes: int):
    """Returns (names, sequence_ids, times, values[N, n_nodes, d])."""
    rows: dict[tuple[int, int], dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        if [h.strip() for h in header[:3]] != ["sequence_id", "t", "node_id"]:
            raise ParseError("header must start with sequence_id,t,node_id", path, 1)
        names = [h.strip() for h in header[3:]]
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", path, lineno)
            try:
                s, t, node = int(rec[0]), int(rec[1]), int(rec[2])
                vals = [float(x) for x in rec[3:]]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from exc
            if not 0 <= node < n_nodes:
                raise ParseError(f"node_id {node} outside graph", path, lineno)
            rows.setdefault((s, t), {})[node] = vals
    if not rows:
        raise EmptyDataset(f"{path} has no data rows")
    keys = sorted(rows)
    values = np.empty((len(keys), n_nodes, len(names)))
    for k, key in enumerate(keys):
        per_node = rows[key]
        if len(per_node) != n_nodes:
            raise MisalignedTime(f"{path}: sequence {key[0]} t={key[1]} has {len(per_node)} of {n_nodes} nodes")
        for node, vals in per_node.items():
            values[k, node] = vals
    seq = np.array([k[0] for k in keys], dtype=np.int64)
    times = np.array([k[1] for k in keys], dtype=np.int64)
    return names, seq, times, values


def write_trajectory_csv(path, trajectories: Sequence[np.ndarray], sidecar: Mapping | None = None) -> None:
    """One row per (sequence, time, node); a JSON sidecar sits next to the CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        first = np.asarray(trajectories[0])
        k = 1 if first.ndim == 2 else first.shape[2]
        w.writerow(["sequence_id", "t", "node_id"] + (["value"] if k == 1 else [f"value{c + 1}" for c in range(k)]))
        for sid, states in enumerate(trajectories):
            states = np.asarray(states, dtype=float).reshape(len(states), -1, k)
            for t in range(states.shape[0]):
                for node in range(states.shape[1]):
                    w.writerow([sid, t, node] + [repr(float(x)) for x in states[t, node]])
    if sidecar is not None:
        path.with_suffix(".json").write_text(json.dumps(dict(sidecar), indent=1, sort_keys=True) + "\n")


# -- manifest ------------------------------------------------------------------


@dataclass
class DatasetManifest:
    graph_path: str = "graph.json"
    features_path: str = "features.csv"
    targets_path: str = "targets.csv"
    edge_type_map: dict[str, int] = field(default_factory=lambda: {UNKNOWN: 0})
    edge_type_map_closed: bool = False
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT
    normalization: str = "zscore"
    meta: dict = field(default_factory=dict)
    base_dir: Path | None = field(default=None, repr=False)

    def __post_init__(self):
        self.split_fractions = _check_fractions(self.split_fractions)
        if self.normalization not in ("zscore", "none"):
            raise ValueError(f"normalization must be 'zscore' or 'none', got {self.normalization!r}")
        if self.edge_type_map.get(UNKNOWN, 0) != 0 or 0 in {
            v for k, v in self.edge_type_map.items() if k != UNKNOWN
        }:
            raise ValueError("edge type id 0 is reserved for 'unknown'")
        self.edge_type_map = {UNKNOWN: 0, **self.edge_type_map}

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() or self.base_dir is None else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "graph_path": self.graph_path,
            "features_path": self.features_path,
            "targets_path": self.targets_path,
            "edge_type_map": self.edge_type_map,
            "edge_type_map_closed": self.edge_type_map_closed,
            "split_fractions": list(self.split_fractions),
            "normalization": self.normalization,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, obj: Mapping, base_dir=None) -> "DatasetManifest":
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported manifest schema_version {version!r}")
        return cls(
            graph_path=obj["graph_path"],
            features_path=obj["features_path"],
            targets_path=obj["targets_path"],
            edge_type_map={str(k): int(v) for k, v in obj.get("edge_type_map", {}).items()},
            edge_type_map_closed=bool(obj.get("edge_type_map_closed", False)),
            split_fractions=tuple(obj.get("split_fractions", DEFAULT_SPLIT)),
            normalization=obj.get("normalization", "zscore"),
            meta=dict(obj.get("meta", {})),
            base_dir=None if base_dir is None else Path(base_dir),
        )

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, exc.lineno) from exc
        return cls.from_dict(obj, base_dir=path.parent)


def load_dataset(manifest) -> TrajectoryDataset:
    """Read the files a manifest points at and assemble a dataset.

    ``manifest`` may be a :class:`DatasetManifest`, a manifest JSON path or a
    directory containing ``manifest.json``.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.read(manifest)
    g, type_names = load_graph(manifest.resolve(manifest.graph_path))
    type_map = manifest.edge_type_map
    if type_names is None:
        edge_types = np.zeros(g.n_edges, dtype=np.int64)
    else:
        ids = []
        for name in type_names:
            if name in type_map:
                ids.append(type_map[name])
            elif manifest.edge_type_map_closed:
                raise UnknownEdgeTypeName(f"edge type {name!r} is not in the closed edge_type_map")
            else:
                ids.append(0)
        edge_types = np.asarray(ids, dtype=np.int64)

    f_names, f_seq, f_t, feats = _read_node_csv(manifest.resolve(manifest.features_path), g.n_nodes)
    y_names, y_seq, y_t, targets = _read_node_csv(manifest.resolve(manifest.targets_path), g.n_nodes)
    if not (np.array_equal(f_seq, y_seq) and np.array_equal(f_t, y_t)):
        raise MisalignedTime("features and targets cover different (sequence_id, t) steps")

    ds = TrajectoryDataset(
        graph=g,
        node_features=feats,
        targets=targets,
        edge_types=edge_types,
        sequence_ids=f_seq,
        times=f_t,
        split=assign_splits(f_seq, manifest.split_fractions),
        feature_names=f_names,
        target_names=y_names,
        edge_type_map=dict(type_map),
        meta=dict(manifest.meta),
    )
    if manifest.normalization == "zscore":
        ds = ds.normalized()
    return ds


def save_dataset(dataset: TrajectoryDataset, directory, normalization: str = "zscore") -> DatasetManifest:
    """Write ``dataset`` (raw, un-normalised values) and its manifest into ``directory``."""
    if dataset is None or len(dataset) == 0:
        raise EmptyDataset("refusing to save an empty dataset")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DPGNError(f"cannot create {directory}: {exc}") from exc

    feats = dataset.node_features
    targets = dataset.targets
    if dataset.feature_scaler is not None:
        feats = dataset.feature_scaler.inverse_transform(feats)
    if dataset.target_scaler is not None:
        targets = dataset.target_scaler.inverse_transform(targets)

    id_to_name = {v: k for k, v in dataset.edge_type_map.items()}
    names = [id_to_name.get(int(t), f"type{int(t)}") for t in dataset.edge_types]
    type_map = dict(dataset.edge_type_map)
    for t, name in zip(dataset.edge_types, names):
        type_map.setdefault(name, int(t))

    fractions = _fractions_of(dataset)
    manifest = DatasetManifest(
        edge_type_map=type_map,
        split_fractions=fractions,
        normalization=normalization,
        meta=dict(dataset.meta),
        base_dir=directory,
    )
    save_graph(dataset.graph, directory / manifest.graph_path, names)
    _write_node_csv(
        directory / manifest.features_path,
        ("sequence_id", "t", "node_id"),
        dataset.feature_names,
        dataset.sequence_ids,
        dataset.times,
        feats,
    )
    _write_node_csv(
        directory / manifest.targets_path,
        ("sequence_id", "t", "node_id"),
        dataset.target_names,
        dataset.sequence_ids,
        dataset.times,
        targets,
    )
    tmp = directory / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    os.replace(tmp, directory / "manifest.json")
    return manifest


def _fractions_of(dataset: TrajectoryDataset) -> tuple[float, float, float]:
    stored = dataset.meta.get("split_fractions")
    if stored is not None:
        return tuple(stored)
    counts = np.array([np.sum(dataset.split == s) for s in SPLITS], dtype=float)
    if np.any(counts == 0):
        return DEFAULT_SPLIT
    return tuple(counts / counts.sum())
