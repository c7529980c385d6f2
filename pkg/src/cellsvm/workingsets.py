"""Task decomposition (label transformations) and cell decomposition (data
partitions), plus test-point routing for the spatial partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import DataError
from .solver import LossSpec

PARTITION_METHODS = ("none", "random_chunk", "voronoi_disjoint", "voronoi_overlap", "recursive")


@dataclass
class Task:
    """One solver sub-problem: a sample filter plus a label transformation."""

    id: str
    kind: str                      # binary | ova | ava | weighted | quantile | expectile
    loss: LossSpec
    indices: np.ndarray            # training indices this task uses
    solver_labels: np.ndarray      # transformed labels, full training length
    positive_class: float | None = None   # ova/weighted/npl: class mapped to +1
    negative_class: float | None = None   # binary/ava: class mapped to -1
    level: float | None = None     # quantile/expectile tau
    weight: float | None = None    # weighted/npl hinge weight

    def label_map(self, label: float) -> float:
        if self.kind in ("quantile", "expectile"):
            return label
        if label == self.positive_class:
            return 1.0
        return -1.0

    def inverse_label(self, solver_label: float):
        """Original label for a solver label, where that is well defined
        (two-class tasks; for OvA only +1 maps back)."""
        if self.kind in ("quantile", "expectile"):
            return solver_label
        if solver_label > 0:
            return self.positive_class
        return self.negative_class


def create_tasks(kind: str, labels: np.ndarray, loss_kind: str,
                 levels=None, weights=None, npl_class=None) -> list:
    """Build the task list for a scenario kind over the training labels.

    kind: binary | ova | ava | weighted | npl | regression
    """
    labels = np.asarray(labels, dtype=np.float64)
    all_idx = np.arange(labels.shape[0])
    if kind == "regression":
        if loss_kind == "least_squares":
            return [Task(id="ls", kind="ls", loss=LossSpec("least_squares"),
                         indices=all_idx, solver_labels=labels.copy())]
        tasks = []
        name = "qt" if loss_kind == "pinball" else "ex"
        tkind = "quantile" if loss_kind == "pinball" else "expectile"
        for tau in levels:
            tasks.append(Task(id=f"{name}@{tau:g}", kind=tkind,
                              loss=LossSpec(loss_kind, float(tau)),
                              indices=all_idx, solver_labels=labels.copy(),
                              level=float(tau)))
        return tasks

    classes = np.unique(labels)
    if not np.all(classes == np.round(classes)):
        raise DataError("classification labels must be integer-valued")
    if classes.size < 2:
        raise DataError("classification needs at least 2 classes")
    if kind == "binary":
        if classes.size != 2:
            raise DataError(f"binary scenario needs exactly 2 classes, got {classes.size}")
        neg, pos = classes
        y = np.where(labels == pos, 1.0, -1.0)
        return [Task(id="binary", kind="binary", loss=LossSpec(loss_kind),
                     indices=all_idx, solver_labels=y,
                     positive_class=float(pos), negative_class=float(neg))]
    if kind == "ova":
        tasks = []
        for c in classes:
            y = np.where(labels == c, 1.0, -1.0)
            tasks.append(Task(id=f"ova@{c:g}", kind="ova", loss=LossSpec(loss_kind),
                              indices=all_idx, solver_labels=y, positive_class=float(c)))
        return tasks
    if kind == "ava":
        tasks = []
        for i in range(classes.size):
            for j in range(i + 1, classes.size):
                lo, hi = classes[i], classes[j]
                idx = np.nonzero((labels == lo) | (labels == hi))[0]
                y = np.where(labels == hi, 1.0, -1.0)  # full length; used via idx
                tasks.append(Task(id=f"ava@{lo:g}vs{hi:g}", kind="ava",
                                  loss=LossSpec(loss_kind), indices=idx,
                                  solver_labels=y, positive_class=float(hi),
                                  negative_class=float(lo)))
        return tasks
    if kind in ("weighted", "npl"):
        if classes.size != 2:
            raise DataError(f"{kind} scenario needs exactly 2 classes, got {classes.size}")
        if kind == "npl":
            if npl_class is None or float(npl_class) not in classes:
                raise DataError(f"npl_class must be one of the data classes {classes}")
            pos = float(npl_class)
            neg = float(classes[classes != pos][0])
        else:
            neg, pos = float(classes[0]), float(classes[1])
        y = np.where(labels == pos, 1.0, -1.0)
        tasks = []
        for w in weights:
            tasks.append(Task(id=f"{kind}@w={w:g}", kind="weighted",
                              loss=LossSpec("hinge", float(w)), indices=all_idx,
                              solver_labels=y, positive_class=pos, negative_class=neg,
                              weight=float(w)))
        return tasks
    raise ValueError(f"unknown task kind {kind!r}")


@dataclass
class CellPartition:
    """Assignment of training indices to cells.

    cell_of holds the disjoint (core) assignment; members holds the training
    membership per cell, which exceeds the core only for the overlap method.
    Spatial methods carry centers for test routing; random chunks and the
    trivial partition are prediction ensembles instead (no routing).
    """

    method: str
    n: int
    cell_of: np.ndarray            # (n,) core assignment
    members: list = field(default_factory=list)   # [ndarray] per cell
    centers: np.ndarray | None = None
    radii: np.ndarray | None = None
    seed: int = 0
    cell_size: int = 0
    overlap_factor: float = 1.0

    def __post_init__(self):
        if self.method not in PARTITION_METHODS:
            raise ValueError(f"unknown partition method {self.method!r}")

    @property
    def n_cells(self) -> int:
        return len(self.members)

    @property
    def spatial(self) -> bool:
        return self.centers is not None


def single_cell(n: int) -> CellPartition:
    return CellPartition(method="none", n=n, cell_of=np.zeros(n, dtype=np.int64),
                         members=[np.arange(n)])


def random_chunks(n: int, max_cell_size: int, seed: int = 0) -> CellPartition:
    """Random permutation dealt into ceil(n / max_cell_size) near-equal chunks."""
    if max_cell_size < 2:
        raise ValueError("max_cell_size must be >= 2")
    m = -(-n // max_cell_size)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base = n // m
    extra = n % m
    members = []
    cell_of = np.empty(n, dtype=np.int64)
    start = 0
    for c in range(m):
        size = base + (1 if c < extra else 0)
        idx = np.sort(perm[start:start + size])
        members.append(idx)
        cell_of[idx] = c
        start += size
    return CellPartition(method="random_chunk", n=n, cell_of=cell_of, members=members,
                         seed=seed, cell_size=max_cell_size)


def _sq_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    x_sq = np.einsum("ij,ij->i", X, X)
    c_sq = np.einsum("ij,ij->i", centers, centers)
    d2 = x_sq[:, None] + c_sq[None, :] - 2.0 * (X @ centers.T)
    return np.maximum(d2, 0.0)


def farthest_first_centers(X: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """Greedy k-center traversal from a seeded random start; ties take the
    lowest index. Returns the chosen center indices (fewer than m when the
    remaining points coincide with a center)."""
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    centers = [first]
    diff = X - X[first]
    dist = np.einsum("ij,ij->i", diff, diff)
    while len(centers) < m:
        nxt = int(np.argmax(dist))
        if dist[nxt] == 0.0:
            break
        centers.append(nxt)
        diff = X - X[nxt]
        d2 = np.einsum("ij,ij->i", diff, diff)
        np.minimum(dist, d2, out=dist)
    return np.asarray(centers, dtype=np.int64)


def voronoi_partition(data: Dataset, target_cell_size: int, seed: int = 0) -> CellPartition:
    """Disjoint Voronoi cells around ceil(n / target) farthest-first centers.

    Membership is computed with the same nearest-center rule and code path as
    test routing, so routing the training points reproduces cell_of exactly.
    """
    if target_cell_size < 2:
        raise ValueError("target_cell_size must be >= 2")
    n = data.n
    m = -(-n // target_cell_size)
    center_idx = farthest_first_centers(data.samples, m, seed)
    centers = data.samples[center_idx]
    m = centers.shape[0]
    assign = np.argmin(_sq_distances(data.samples, centers), axis=1).astype(np.int64)
    members = [np.nonzero(assign == c)[0] for c in range(m)]
    radii = np.zeros(m)
    for c in range(m):
        if members[c].size:
            d2 = _sq_distances(data.samples[members[c]], centers[c:c + 1])[:, 0]
            radii[c] = float(np.sqrt(np.max(d2)))
    return CellPartition(method="voronoi_disjoint", n=n, cell_of=assign,
                         members=members, centers=centers, radii=radii, seed=seed,
                         cell_size=target_cell_size)


def overlap_partition(data: Dataset, target_cell_size: int,
                      overlap_factor: float = 1.5, seed: int = 0) -> CellPartition:
    """Voronoi cores, each enlarged by every point within overlap_factor times
    the core radius of its center. Routing responsibility stays with the core."""
    if overlap_factor < 1.0:
        raise ValueError("overlap_factor must be >= 1")
    part = voronoi_partition(data, target_cell_size, seed)
    members = []
    for c in range(part.n_cells):
        reach = part.radii[c] * overlap_factor
        d2 = _sq_distances(data.samples, part.centers[c:c + 1])[:, 0]
        extra = np.nonzero(d2 <= reach * reach)[0]
        members.append(np.union1d(part.members[c], extra))
    return CellPartition(method="voronoi_overlap", n=part.n, cell_of=part.cell_of,
                         members=members, centers=part.centers, radii=part.radii,
                         seed=seed, cell_size=target_cell_size,
                         overlap_factor=overlap_factor)


def recursive_partition(data: Dataset, max_cell_size: int, seed: int = 0) -> CellPartition:
    """Split cells larger than max_cell_size by nearest-of-two-far-points,
    recursively. Degenerate cells (no geometric split possible) fall back to
    full-size consecutive chunks."""
    if max_cell_size < 2:
        raise ValueError("max_cell_size must be >= 2")
    X = data.samples
    rng = np.random.default_rng(seed)
    final = []

    def split(idx: np.ndarray):
        if idx.size <= max_cell_size:
            final.append(idx)
            return
        pts = X[idx]
        p0 = int(rng.integers(idx.size))
        d0 = np.einsum("ij,ij->i", pts - pts[p0], pts - pts[p0])
        p1 = int(np.argmax(d0))
        d1 = np.einsum("ij,ij->i", pts - pts[p1], pts - pts[p1])
        p2 = int(np.argmax(d1))
        d2 = np.einsum("ij,ij->i", pts - pts[p2], pts - pts[p2])
        side1 = d1 <= d2  # ties join the first point's side
        if side1.all() or (~side1).all():
            for start in range(0, idx.size, max_cell_size):
                final.append(idx[start:start + max_cell_size])
            return
        split(idx[side1])
        split(idx[~side1])

    split(np.arange(data.n))
    cell_of = np.empty(data.n, dtype=np.int64)
    for c, idx in enumerate(final):
        cell_of[idx] = c
    centers = np.stack([X[idx].mean(axis=0) for idx in final])
    return CellPartition(method="recursive", n=data.n, cell_of=cell_of, members=final,
                         centers=centers, seed=seed, cell_size=max_cell_size)


def route_test_point(partition: CellPartition, x: np.ndarray) -> int:
    """Cell id of the nearest center (lowest index on ties). Only spatial
    partitions route; chunk/none partitions are ensembles over all cells."""
    if not partition.spatial:
        raise ValueError(f"partition method {partition.method!r} has no centers to route by")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (partition.centers.shape[1],):
        raise DataError(f"test point has dim {x.shape}, centers have {partition.centers.shape[1]}")
    d2 = _sq_distances(x[None, :], partition.centers)[0]
    return int(np.argmin(d2))


def route_test_points(partition: CellPartition, X: np.ndarray) -> np.ndarray:
    if not partition.spatial:
        raise ValueError(f"partition method {partition.method!r} has no centers to route by")
    d2 = _sq_distances(np.asarray(X, dtype=np.float64), partition.centers)
    return np.argmin(d2, axis=1).astype(np.int64)
