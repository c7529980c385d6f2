"""Run configuration shared by the CLI, the bridge, and the library layer.

Keys mirror the command-line flags: display, threads, grid_choice,
adaptivity_control, voronoi, folds, seed, kernel, plus scenario parameters
(levels, weights, npl_class, npl_alpha, mc_type).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ConfigError

GRID_CHOICES = ("0", "1", "2", "libsvm")
VORONOI_CODES = {0: "none", 1: "random_chunk", 4: "voronoi_disjoint",
                 5: "voronoi_overlap", 6: "recursive"}
DEFAULT_CELL_SIZE = 2000
DEFAULT_WEIGHTS = tuple(2.0 ** e for e in range(-4, 5))
DEFAULT_LEVELS = (0.1, 0.5, 0.9)


@dataclass
class RunConfig:
    display: int = 0
    threads: int = 0               # 0 = all physical cores
    grid_choice: str = "0"         # 0/1/2 -> 10x10 / 15x15 / 20x20, or "libsvm"
    adaptivity_control: int = 0    # 0 off, 1/2 coarse-to-fine levels
    voronoi: tuple = (0,)          # (method code[, max cell size])
    folds: int = 5
    seed: int = 0
    kernel: str = "gaussian_rbf"
    levels: tuple = DEFAULT_LEVELS
    weights: tuple = DEFAULT_WEIGHTS
    npl_class: float = 1.0
    npl_alpha: float = 0.05
    mc_type: str = "ava"
    select_mode: str = "retrain_single"

    def validate(self):
        if self.display not in (0, 1, 2):
            raise ConfigError(f"display must be 0, 1, or 2, got {self.display}")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")
        if str(self.grid_choice) not in GRID_CHOICES:
            raise ConfigError(f"grid_choice must be one of {GRID_CHOICES}")
        if self.adaptivity_control not in (0, 1, 2):
            raise ConfigError("adaptivity_control must be 0, 1, or 2")
        code = self.voronoi[0]
        if code not in VORONOI_CODES:
            raise ConfigError(f"voronoi code must be one of {sorted(VORONOI_CODES)}")
        if len(self.voronoi) > 1 and self.voronoi[1] < 2:
            raise ConfigError("voronoi cell size must be >= 2")
        if len(self.voronoi) > 2:
            raise ConfigError("voronoi takes at most two values: code[, cell size]")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.kernel not in ("gaussian_rbf", "laplacian"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if not all(0.0 < t < 1.0 for t in self.levels):
            raise ConfigError("levels must lie in (0, 1)")
        if not self.levels:
            raise ConfigError("levels must be nonempty")
        if not self.weights or not all(w > 0 for w in self.weights):
            raise ConfigError("weights must be nonempty and positive")
        if not 0.0 < self.npl_alpha < 1.0:
            raise ConfigError("npl_alpha must lie in (0, 1)")
        if self.mc_type not in ("ava", "ova"):
            raise ConfigError("mc_type must be 'ava' or 'ova'")
        if self.select_mode not in ("retrain_single", "keep_fold_models"):
            raise ConfigError("select_mode must be retrain_single or keep_fold_models")
        return self

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    @property
    def cell_method(self) -> str:
        return VORONOI_CODES[self.voronoi[0]]

    @property
    def cell_size(self) -> int:
        return int(self.voronoi[1]) if len(self.voronoi) > 1 else DEFAULT_CELL_SIZE

    def set_key(self, key: str, value: str):
        """Apply a string key/value pair (bridge configuration path)."""
        names = {f.name for f in fields(self)}
        if key not in names:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            if key in ("display", "threads", "adaptivity_control", "folds", "seed"):
                setattr(self, key, int(value))
            elif key in ("npl_class", "npl_alpha"):
                setattr(self, key, float(value))
            elif key in ("levels", "weights"):
                parts = [p for p in str(value).replace(",", " ").split() if p]
                setattr(self, key, tuple(float(p) for p in parts))
            elif key == "voronoi":
                parts = [p for p in str(value).replace(",", " ").split() if p]
                setattr(self, key, tuple(int(p) for p in parts))
            else:
                setattr(self, key, str(value))
        except ValueError as exc:
            raise ConfigError(f"invalid value {value!r} for key {key!r}: {exc}")
        return self

    def snapshot(self) -> dict:
        return {
            "display": self.display, "threads": self.threads,
            "grid_choice": str(self.grid_choice),
            "adaptivity_control": self.adaptivity_control,
            "voronoi": list(self.voronoi), "folds": self.folds, "seed": self.seed,
            "kernel": self.kernel, "levels": list(self.levels),
            "weights": list(self.weights), "npl_class": self.npl_class,
            "npl_alpha": self.npl_alpha, "mc_type": self.mc_type,
            "select_mode": self.select_mode,
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "RunConfig":
        cfg = cls()
        for key, value in snap.items():
            if key in ("voronoi", "levels", "weights"):
                value = tuple(value)
            setattr(cfg, key, value)
        return cfg
