"""Pre-defined end-to-end learning routines: train, predict, evaluate.

A scenario turns training data into tasks (label transformations) crossed
with cells (data partitions), runs hyper-parameter selection on every
(task, cell) working set, and combines per-task decisions at test time.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dataio import Dataset, Scaling, compute_scaling, make_folds
from .errors import DataError
from .kernel import KernelCache, KernelSpec, cross_matrix
from .modelselect import (FINAL_TOLERANCE, FittedSet, SelectedModel, adaptive_cross_validate,
                          build_default_grid, build_libsvm_grid, cross_validate, finalize,
                          select_best)
from .solver import LossSpec, loss_vector
from .workingsets import (CellPartition, Task, create_tasks, overlap_partition,
                          random_chunks, recursive_partition, route_test_points,
                          single_cell, voronoi_partition)

SCENARIO_KINDS = ("binary", "mc_ava", "mc_ova", "ls", "quantile", "expectile",
                  "weighted_binary", "npl")

MODEL_FORMAT = "cellsvm-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    levels: tuple = ()
    weights: tuple = ()
    npl_class: float = 1.0
    npl_alpha: float = 0.05
    loss_override: str | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario {self.kind!r}")
        if self.kind == "npl" and not 0.0 < self.npl_alpha < 1.0:
            raise ValueError("npl_alpha must lie in (0, 1)")
        if self.kind in ("quantile", "expectile") and not self.levels:
            raise ValueError(f"{self.kind} scenario needs at least one level")
        if self.kind in ("weighted_binary", "npl") and not self.weights:
            raise ValueError(f"{self.kind} scenario needs a weight grid")

    def solver_loss_kind(self) -> str:
        if self.loss_override:
            return self.loss_override
        return {"binary": "hinge", "mc_ava": "hinge", "mc_ova": "least_squares",
                "ls": "least_squares", "quantile": "pinball", "expectile": "expectile",
                "weighted_binary": "hinge", "npl": "hinge"}[self.kind]

    def task_kind(self) -> str:
        return {"binary": "binary", "mc_ava": "ava", "mc_ova": "ova",
                "ls": "regression", "quantile": "regression",
                "expectile": "regression", "weighted_binary": "weighted",
                "npl": "npl"}[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": list(self.levels),
                "weights": list(self.weights), "npl_class": self.npl_class,
                "npl_alpha": self.npl_alpha, "loss_override": self.loss_override}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(kind=d["kind"], levels=tuple(d["levels"]), weights=tuple(d["weights"]),
                   npl_class=d["npl_class"], npl_alpha=d["npl_alpha"],
                   loss_override=d.get("loss_override"))


def scenario_from_config(kind: str, config: RunConfig) -> ScenarioSpec:
    if kind == "mc":
        kind = "mc_ava" if config.mc_type == "ava" else "mc_ova"
    levels = tuple(config.levels) if kind in ("quantile", "expectile") else ()
    weights = tuple(config.weights) if kind in ("weighted_binary", "npl") else ()
    return ScenarioSpec(kind=kind, levels=levels, weights=weights,
                        npl_class=config.npl_class, npl_alpha=config.npl_alpha)


@dataclass
class JobModel:
    """Selected model for one (task, cell) working set."""

    task_index: int
    cell_index: int
    sub_indices: np.ndarray        # global training indices of the working set
    selected: SelectedModel | None # None when the working set was unusable


@dataclass
class TrainedModel:
    scenario: ScenarioSpec
    config: RunConfig
    scaling: Scaling
    partition: CellPartition
    tasks: list
    jobs: list                      # JobModel, ordered task-major
    samples: np.ndarray             # scaled training features
    classes: np.ndarray | None
    kernel_family: str
    npl_chosen: int | None = None
    npl_violated: bool = False
    counters: dict = field(default_factory=dict)
    created_at: str = ""

    def job(self, task_index: int, cell_index: int) -> JobModel:
        return self.jobs[task_index * self.partition.n_cells + cell_index]


def _build_partition(scaled: Dataset, config: RunConfig) -> CellPartition:
    method = config.cell_method
    if method == "none":
        return single_cell(scaled.n)
    if method == "random_chunk":
        return random_chunks(scaled.n, config.cell_size, seed=config.seed)
    if method == "voronoi_disjoint":
        return voronoi_partition(scaled, config.cell_size, seed=config.seed)
    if method == "voronoi_overlap":
        return overlap_partition(scaled, config.cell_size, seed=config.seed)
    return recursive_partition(scaled, config.cell_size, seed=config.seed)


def _grid_for(config: RunConfig, n_fold: int, dim: int):
    choice = str(config.grid_choice)
    if choice == "libsvm":
        return build_libsvm_grid(n_fold)
    return build_default_grid(n_fold, dim, {"0": 10, "1": 15, "2": 20}[choice])


def _job_seed(seed: int, cell_index: int) -> int:
    # task-independent so that all tasks of a scenario share fold assignments
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(cell_index,))
               .generate_state(1)[0])


def npl_select(rates, alpha: float):
    """Pick the weight index with maximal detection among those with
    false-alarm rate <= alpha; fall back to the minimal false-alarm rate and
    flag the violation when none qualifies. rates: list of (fa, det)."""
    qualifying = [(det, -i) for i, (fa, det) in enumerate(rates) if fa <= alpha]
    if qualifying:
        det, neg_i = max(qualifying)
        return -neg_i, False
    best = min(range(len(rates)), key=lambda i: (rates[i][0], i))
    return best, True


def train(spec: ScenarioSpec, data: Dataset, config: RunConfig | None = None) -> TrainedModel:
    """Scale, partition, create tasks, and run CV + selection on every
    (task, cell) working set. Deterministic for a fixed config/seed."""
    config = (config or RunConfig()).validate()
    loss_kind = spec.solver_loss_kind()
    tasks = create_tasks(spec.task_kind(), data.labels, loss_kind,
                         levels=spec.levels or None, weights=spec.weights or None,
                         npl_class=spec.npl_class if spec.kind == "npl" else None)
    classes = None
    if spec.kind not in ("ls", "quantile", "expectile"):
        classes = np.unique(data.labels)
    scaling = compute_scaling(data)
    scaled = Dataset(scaling.apply(data.samples), data.labels)
    partition = _build_partition(scaled, config)
    cache = KernelCache(capacity=4)
    workers = config.workers
    track_rates = spec.kind == "npl"
    keep_betas = config.select_mode == "keep_fold_models"
    jobs = []
    counters = {"cv_runs": 0, "gram_computations": 0, "solve_count": 0}
    for ti, task in enumerate(tasks):
        for ci in range(partition.n_cells):
            sub = np.intersect1d(task.indices, partition.members[ci])
            if sub.size < 2:
                jobs.append(JobModel(ti, ci, sub, None))
                continue
            work = Dataset(scaled.samples[sub], task.solver_labels[sub])
            k_eff = min(config.folds, work.n)
            method = "stratified" if task.kind not in ("ls", "quantile", "expectile") else "random"
            if task.kind in ("ls", "quantile", "expectile"):
                fold_labels = work.labels
            else:
                fold_labels = data.labels[sub]  # stratify on the original classes
            folds = make_folds(fold_labels, k_eff, method=method,
                               seed=_job_seed(config.seed, ci))
            n_fold = work.n - (-(-work.n // k_eff))
            grid = _grid_for(config, max(2, n_fold), work.dim)
            cv_kwargs = dict(val_metric=None, workers=workers,
                             keep_betas=keep_betas, track_rates=track_rates,
                             kernel_family=config.kernel)
            if config.adaptivity_control and min(grid.shape) >= 4:
                table = adaptive_cross_validate(work, task.loss, grid, folds,
                                                control_level=config.adaptivity_control,
                                                **cv_kwargs)
            else:
                table = cross_validate(work, task.loss, grid, folds, **cv_kwargs)
            chosen = select_best(table, grid)
            model = finalize(work, task.loss, chosen, config.select_mode, table,
                             folds, tolerance=FINAL_TOLERANCE, cache=cache,
                             workers=workers, kernel_family=config.kernel)
            counters["cv_runs"] += 1
            counters["gram_computations"] += table.gram_computations
            counters["solve_count"] += table.solve_count
            if config.display >= 1:
                print(f"[cellsvm] task={task.id} cell={ci} n={work.n} "
                      f"gamma={chosen.gamma:.6g} lambda={chosen.lam:.6g} "
                      f"val_loss={chosen.loss:.6g}")
            if config.display >= 2:
                G, L = grid.shape
                for gi in range(G):
                    for li in range(L):
                        if table.evaluated[gi, li]:
                            print(f"[cellsvm]   gamma={grid.gammas[gi]:.6g} "
                                  f"lambda={grid.lambdas[li]:.6g} "
                                  f"loss={table.mean_loss[gi, li]:.6g}")
            jobs.append(JobModel(ti, ci, sub, model))
    model = TrainedModel(scenario=spec, config=config, scaling=scaling,
                         partition=partition, tasks=tasks, jobs=jobs,
                         samples=scaled.samples, classes=classes,
                         kernel_family=config.kernel, counters=counters,
                         created_at=datetime.datetime.now(datetime.timezone.utc).isoformat())
    if spec.kind == "npl":
        rates = []
        for ti in range(len(tasks)):
            fa_acc, det_acc, weight_acc = 0.0, 0.0, 0
            for ci in range(partition.n_cells):
                job = model.job(ti, ci)
                if job.selected is not None and job.selected.fa_rate is not None:
                    w = job.sub_indices.size
                    fa_acc += job.selected.fa_rate * w
                    det_acc += job.selected.det_rate * w
                    weight_acc += w
            if weight_acc:
                rates.append((fa_acc / weight_acc, det_acc / weight_acc))
            else:
                rates.append((1.0, 0.0))
        chosen, violated = npl_select(rates, spec.npl_alpha)
        model.npl_chosen = chosen
        model.npl_violated = violated
    return model


def _job_decisions(model: TrainedModel, job: JobModel, test: Dataset,
                   rows: np.ndarray, workers: int) -> np.ndarray:
    """Decision values of one job's model for the given test rows (clipped
    per fitted set for hinge, averaged over the sets)."""
    if job.selected is None or rows.size == 0:
        return np.zeros(rows.size)
    selected = job.selected
    spec = KernelSpec(model.kernel_family, selected.gamma)
    test_rows = test.subset(rows) if rows.size != test.n else test
    acc = np.zeros(rows.size)
    for fit in selected.sets:
        support_global = job.sub_indices[fit.indices]
        support = Dataset(model.samples[support_global], np.zeros(support_global.size))
        dec = cross_matrix(spec, test_rows, support, workers=workers).values @ fit.beta
        if selected.loss.kind == "hinge":
            dec = np.clip(dec, -1.0, 1.0)
        acc += dec
    return acc / len(selected.sets)


def _task_decisions(model: TrainedModel, ti: int, test: Dataset, cell_of_test,
                    workers: int) -> np.ndarray:
    """Per-test-point decision for one task: routed cell for spatial
    partitions, average over all cells otherwise."""
    part = model.partition
    out = np.zeros(test.n)
    if cell_of_test is not None:
        for ci in range(part.n_cells):
            rows = np.nonzero(cell_of_test == ci)[0]
            if rows.size:
                out[rows] = _job_decisions(model, model.job(ti, ci), test, rows, workers)
        return out
    rows = np.arange(test.n)
    for ci in range(part.n_cells):
        out += _job_decisions(model, model.job(ti, ci), test, rows, workers)
    return out / part.n_cells


def predict(model: TrainedModel, test_data: Dataset, workers: int = 1) -> np.ndarray:
    """Predictions, one row per test point. Columns: predicted label for the
    classification scenarios (one column per weight for weighted_binary),
    the fitted value per level/output for the regression scenarios."""
    if test_data.dim != model.samples.shape[1]:
        raise DataError(f"test dim {test_data.dim} != training dim {model.samples.shape[1]}")
    test = Dataset(model.scaling.apply(test_data.samples), test_data.labels)
    part = model.partition
    cell_of_test = route_test_points(part, test.samples) if part.spatial else None
    kind = model.scenario.kind
    tasks = model.tasks
    decisions = np.column_stack([
        _task_decisions(model, ti, test, cell_of_test, workers)
        for ti in range(len(tasks))])
    if kind in ("ls", "quantile", "expectile"):
        return decisions
    if kind == "binary":
        task = tasks[0]
        labels = np.where(decisions[:, 0] > 0, task.positive_class, task.negative_class)
        return labels[:, None]
    if kind == "weighted_binary":
        cols = []
        for ti, task in enumerate(tasks):
            cols.append(np.where(decisions[:, ti] > 0, task.positive_class,
                                 task.negative_class))
        return np.column_stack(cols)
    if kind == "npl":
        task = tasks[model.npl_chosen]
        d = decisions[:, model.npl_chosen]
        return np.where(d > 0, task.positive_class, task.negative_class)[:, None]
    classes = model.classes
    if kind == "mc_ova":
        best = np.argmax(decisions, axis=1)  # ties: first = lowest class index
        return classes[best][:, None]
    # mc_ava: majority vote; ties by summed signed decisions, then lowest class
    n = test.n
    m = classes.size
    votes = np.zeros((n, m))
    scores = np.zeros((n, m))
    index_of = {c: i for i, c in enumerate(classes)}
    for ti, task in enumerate(tasks):
        d = decisions[:, ti]
        hi = index_of[task.positive_class]
        lo = index_of[task.negative_class]
        pos = d > 0
        votes[pos, hi] += 1
        votes[~pos, lo] += 1
        scores[:, hi] += d
        scores[:, lo] -= d
    out = np.empty(n)
    for i in range(n):
        vmax = votes[i].max()
        tied = np.nonzero(votes[i] == vmax)[0]
        if tied.size > 1:
            smax = scores[i, tied].max()
            tied = tied[scores[i, tied] == smax]
        out[i] = classes[tied[0]]
    return out[:, None]


def evaluate(predictions: np.ndarray, true_labels: np.ndarray, spec: ScenarioSpec) -> dict:
    """Scenario metrics: error rate for classification, mean squared error for
    ls, mean pinball / asymmetric squared loss per level, and false-alarm plus
    detection rates for npl."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    y = np.asarray(true_labels, dtype=np.float64)
    if predictions.shape[0] != y.shape[0]:
        raise DataError("predictions and labels have different lengths")
    kind = spec.kind
    if kind == "ls":
        return {"mse": float(np.mean((y - predictions[:, 0]) ** 2))}
    if kind == "quantile":
        return {"pinball": [float(np.mean(loss_vector(LossSpec("pinball", t), y, predictions[:, i])))
                            for i, t in enumerate(spec.levels)]}
    if kind == "expectile":
        return {"expectile": [float(np.mean(loss_vector(LossSpec("expectile", t), y, predictions[:, i])))
                              for i, t in enumerate(spec.levels)]}
    if kind == "weighted_binary":
        return {"error": [float(np.mean(predictions[:, i] != y))
                          for i in range(predictions.shape[1])]}
    if kind == "npl":
        pos = y == spec.npl_class
        alarms = predictions[:, 0] == spec.npl_class
        fa = float(np.sum(alarms & ~pos) / max(1, np.sum(~pos)))
        det = float(np.sum(alarms & pos) / max(1, np.sum(pos)))
        return {"error": float(np.mean(predictions[:, 0] != y)),
                "false_alarm": fa, "detection": det}
    return {"error": float(np.mean(predictions[:, 0] != y))}


def _task_to_dict(task: Task) -> dict:
    return {"id": task.id, "kind": task.kind, "loss_kind": task.loss.kind,
            "loss_weight": task.loss.weight, "positive_class": task.positive_class,
            "negative_class": task.negative_class, "level": task.level,
            "weight": task.weight}


def _task_from_dict(d: dict) -> Task:
    return Task(id=d["id"], kind=d["kind"],
                loss=LossSpec(d["loss_kind"], d["loss_weight"]),
                indices=np.empty(0, dtype=np.int64),
                solver_labels=np.empty(0),
                positive_class=d["positive_class"], negative_class=d["negative_class"],
                level=d["level"], weight=d["weight"])


def model_to_dict(model: TrainedModel) -> dict:
    part = model.partition
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "created_at": model.created_at,
        "scenario": model.scenario.to_dict(),
        "config": model.config.snapshot(),
        "kernel_family": model.kernel_family,
        "scaling": {"offset": model.scaling.offset.tolist(),
                    "factor": model.scaling.factor.tolist()},
        "classes": model.classes.tolist() if model.classes is not None else None,
        "partition": {
            "method": part.method, "n": part.n, "cell_of": part.cell_of.tolist(),
            "members": [m.tolist() for m in part.members],
            "centers": part.centers.tolist() if part.centers is not None else None,
            "radii": part.radii.tolist() if part.radii is not None else None,
            "seed": part.seed, "cell_size": part.cell_size,
            "overlap_factor": part.overlap_factor,
        },
        "samples": model.samples.tolist(),
        "tasks": [_task_to_dict(t) for t in model.tasks],
        "jobs": [
            {
                "task": job.task_index, "cell": job.cell_index,
                "sub_indices": job.sub_indices.tolist(),
                "model": None if job.selected is None else {
                    "gamma": job.selected.gamma, "lambda": job.selected.lam,
                    "mode": job.selected.mode,
                    "validation_loss": job.selected.validation_loss,
                    "converged": job.selected.converged,
                    "loss_kind": job.selected.loss.kind,
                    "loss_weight": job.selected.loss.weight,
                    "fa_rate": job.selected.fa_rate, "det_rate": job.selected.det_rate,
                    "sets": [{"indices": s.indices.tolist(), "beta": s.beta.tolist()}
                             for s in job.selected.sets],
                },
            }
            for job in model.jobs
        ],
        "npl": None if model.npl_chosen is None else {
            "chosen": model.npl_chosen, "violated": model.npl_violated},
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("not a cellsvm model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    part_d = doc["partition"]
    centers = part_d["centers"]
    radii = part_d["radii"]
    partition = CellPartition(
        method=part_d["method"], n=part_d["n"],
        cell_of=np.asarray(part_d["cell_of"], dtype=np.int64),
        members=[np.asarray(m, dtype=np.int64) for m in part_d["members"]],
        centers=np.asarray(centers) if centers is not None else None,
        radii=np.asarray(radii) if radii is not None else None,
        seed=part_d["seed"], cell_size=part_d["cell_size"],
        overlap_factor=part_d["overlap_factor"])
    jobs = []
    for jd in doc["jobs"]:
        selected = None
        md = jd["model"]
        if md is not None:
            selected = SelectedModel(
                gamma=md["gamma"], lam=md["lambda"], mode=md["mode"],
                sets=[FittedSet(indices=np.asarray(s["indices"], dtype=np.int64),
                                beta=np.asarray(s["beta"], dtype=np.float64))
                      for s in md["sets"]],
                validation_loss=md["validation_loss"], converged=md["converged"],
                loss=LossSpec(md["loss_kind"], md["loss_weight"]),
                fa_rate=md["fa_rate"], det_rate=md["det_rate"])
        jobs.append(JobModel(jd["task"], jd["cell"],
                             np.asarray(jd["sub_indices"], dtype=np.int64), selected))
    npl = doc.get("npl")
    classes = doc["classes"]
    return TrainedModel(
        scenario=ScenarioSpec.from_dict(doc["scenario"]),
        config=RunConfig.from_snapshot(doc["config"]),
        scaling=Scaling(offset=np.asarray(doc["scaling"]["offset"]),
                        factor=np.asarray(doc["scaling"]["factor"])),
        partition=partition,
        tasks=[_task_from_dict(t) for t in doc["tasks"]],
        jobs=jobs,
        samples=np.asarray(doc["samples"], dtype=np.float64),
        classes=np.asarray(classes) if classes is not None else None,
        kernel_family=doc["kernel_family"],
        npl_chosen=None if npl is None else npl["chosen"],
        npl_violated=False if npl is None else npl["violated"],
        created_at=doc["created_at"])


def save_model(model: TrainedModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
