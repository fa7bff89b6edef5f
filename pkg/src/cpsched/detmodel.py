"""Statistical detection model for feature-level collaborative perception.

An object ``n`` carries a fixed difficulty ``D_n = mu + Exp(lam)``.  A set of
views detects it when the p-norm of the per-view information amounts
``log N_i`` reaches ``D_n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MISS_FLOOR = 1e-6


@dataclass(frozen=True)
class DetectionModel:
    """Parameters ``(p, lam, mu)`` of the p-norm fusion model."""

    p: float = 2.3
    scale: float = 2.1
    bias: float = 3.9

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"norm order must be >= 1, got {self.p}")
        if not self.scale > 0:
            raise ValueError(f"difficulty scale must be > 0, got {self.scale}")
        if not self.bias >= 0:
            raise ValueError(f"difficulty bias must be >= 0, got {self.bias}")

    def as_dict(self):
        return {"p": self.p, "scale": self.scale, "bias": self.bias}


V2V4REAL = DetectionModel(p=2.3, scale=2.1, bias=3.9)
OPV2V = DetectionModel(p=1.4, scale=1.6, bias=0.9)


def sample_difficulty(model: DetectionModel, rng: np.random.Generator, size=None):
    """Draw object difficulties from the shifted exponential."""
    return model.bias + rng.exponential(1.0 / model.scale, size=size)


def info_norm(log_counts, p: float) -> float:
    """p-norm of the information amounts; empty input has norm 0."""
    x = np.asarray(log_counts, dtype=float)
    if x.size == 0:
        return 0.0
    if math.isinf(p):
        return float(x.max())
    return float(np.sum(x**p) ** (1.0 / p))


def log_counts_of(point_counts) -> np.ndarray:
    """Information amounts of the views that returned at least one point."""
    n = np.asarray(point_counts, dtype=float)
    return np.log(n[n >= 1])


def is_detected(point_counts, model: DetectionModel, difficulty: float) -> bool:
    """Does fusing these per-view point counts detect an object of this difficulty."""
    return info_norm(log_counts_of(point_counts), model.p) >= difficulty


def miss_probability(log_counts, model: DetectionModel) -> float:
    """Closed-form miss probability given the views' information amounts."""
    nu = info_norm(log_counts, model.p)
    if nu < model.bias:
        return 1.0
    return math.exp(-model.scale * (nu - model.bias))


def pair_norms(log_a, log_b, p):
    """Element-wise 2-view norm, broadcasting; zero entries act as absent views."""
    a = np.asarray(log_a, dtype=float)
    b = np.asarray(log_b, dtype=float)
    if math.isinf(p):
        return np.maximum(a, b)
    return (a**p + b**p) ** (1.0 / p)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def default_lattice():
    """Brute-force search lattice ``(p, lam, mu)``."""
    p = np.round(np.arange(10, 31) * 0.1, 10)
    lam = np.round(np.arange(1, 51) * 0.1, 10)
    mu = np.round(np.arange(0, 61) * 0.1, 10)
    return p, lam, mu


def _fit_losses(log_n1, log_n2, miss, p_values, lam_values, mu_values):
    target = np.log(np.maximum(miss, MISS_FLOOR))
    floor = math.log(MISS_FLOOR)
    out = np.empty((len(p_values), len(lam_values), len(mu_values)))
    for a, p in enumerate(p_values):
        nu = pair_norms(log_n1, log_n2, p)
        excess = np.maximum(nu[None, :] - mu_values[:, None], 0.0)  # (mu, cells)
        model = np.maximum(-lam_values[:, None, None] * excess[None], floor)
        out[a] = np.abs(target[None, None, :] - model).sum(axis=-1)
    return out


def fit_model(log_n1, log_n2, miss, lattice=None, tol=1e-9) -> DetectionModel:
    """Fit ``(p, lam, mu)`` by exhaustive search under an L1 loss on log-miss.

    Cells with a miss probability of 0 are floored at ``MISS_FLOOR`` (as is the
    model value) before taking the log.  Among parameter sets whose loss is
    within ``tol`` of the best, the smallest ``mu`` wins, then the smallest
    ``p``, then the smallest ``lam``.
    """
    log_n1 = np.asarray(log_n1, dtype=float).ravel()
    log_n2 = np.asarray(log_n2, dtype=float).ravel()
    miss = np.asarray(miss, dtype=float).ravel()
    if miss.size == 0:
        raise ValueError("empty grid")
    if not (log_n1.shape == log_n2.shape == miss.shape):
        raise ValueError("grid columns differ in length")
    if np.any(miss < 0) or np.any(miss > 1):
        raise ValueError("miss probabilities must lie in [0, 1]")
    p_values, lam_values, mu_values = lattice if lattice is not None else default_lattice()
    p_values, lam_values, mu_values = (np.asarray(v, dtype=float) for v in (p_values, lam_values, mu_values))
    loss = _fit_losses(log_n1, log_n2, miss, p_values, lam_values, mu_values)
    near = np.argwhere(loss <= loss.min() + tol)
    a, b, c = min(near, key=lambda abc: (mu_values[abc[2]], p_values[abc[0]], lam_values[abc[1]]))
    return DetectionModel(p=float(p_values[a]), scale=float(lam_values[b]), bias=float(mu_values[c]))


def read_grid(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load a ``log_n1,log_n2,miss_prob`` CSV."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"log_n1", "log_n2", "miss_prob"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((float(row["log_n1"]), float(row["log_n2"]), float(row["miss_prob"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: empty grid")
    arr = np.asarray(rows)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def write_grid(path, log_n1, log_n2, miss) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["log_n1", "log_n2", "miss_prob"])
        for row in zip(np.ravel(log_n1), np.ravel(log_n2), np.ravel(miss)):
            w.writerow([repr(float(v)) for v in row])


def model_grid(model: DetectionModel, log_values) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form miss grid over every ``(log N1, log N2)`` pair of ``log_values``."""
    a, b = np.meshgrid(np.asarray(log_values, float), np.asarray(log_values, float), indexing="ij")
    a, b = a.ravel(), b.ravel()
    miss = np.array([miss_probability([x, y], model) for x, y in zip(a, b)])
    return a, b, miss


def save_model(model: DetectionModel, path) -> None:
    """Write a fitted model as a YAML config fragment."""
    import yaml

    Path(path).write_text(yaml.safe_dump({"detection": model.as_dict()}, sort_keys=False))
