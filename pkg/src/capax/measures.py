"""Discrete positive measures, potentials, energies and the G-functional."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, NodeSetMismatchError
from .geometry import SubsetMask, as_mask


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weights on the nodes of one node set.

    Parameters
    ----------
    weights : array_like
        One weight per node. Tiny negative round-off (above ``-1e-14``
        times the largest weight) is clipped to zero; anything more negative
        is rejected.
    node_set_id : str, optional
        Identifier of the owning node set; ``None`` matches any node set.
    """

    weights: np.ndarray
    node_set_id: str | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite")
        floor = -1e-14 * max(1.0, float(np.max(np.abs(w), initial=0.0)))
        if np.any(w < floor):
            raise ValueError(f"measure weights must be nonnegative, got min {w.min()}")
        w = np.maximum(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, n: int, node_set_id=None) -> DiscreteMeasure:
        return cls(np.zeros(n), node_set_id)

    @classmethod
    def dirac(cls, n: int, i: int, mass: float = 1.0, node_set_id=None) -> DiscreteMeasure:
        w = np.zeros(n)
        w[i] = mass
        return cls(w, node_set_id)

    def __len__(self):
        return len(self.weights)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def support(self) -> SubsetMask:
        return SubsetMask.from_bool(self.weights > 0)

    def supported_in(self, A) -> bool:
        return self.support <= as_mask(A, len(self))

    def restrict(self, A) -> DiscreteMeasure:
        w = np.zeros_like(self.weights)
        idx = as_mask(A, len(self)).array
        w[idx] = self.weights[idx]
        return DiscreteMeasure(w, self.node_set_id)

    def scaled(self, t: float) -> DiscreteMeasure:
        return DiscreteMeasure(t * self.weights, self.node_set_id)

    def __add__(self, other: DiscreteMeasure) -> DiscreteMeasure:
        _same_owner(self.node_set_id, other.node_set_id)
        return DiscreteMeasure(self.weights + other.weights, self.node_set_id or other.node_set_id)

    def __mul__(self, t: float) -> DiscreteMeasure:
        return self.scaled(t)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {"node_set_id": self.node_set_id, "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj) -> DiscreteMeasure:
        return cls(np.asarray(obj["weights"], dtype=float), obj.get("node_set_id"))

    def write_csv(self, path) -> None:
        write_vector_csv(path, self.weights, "weight")

    @classmethod
    def read_csv(cls, path, n: int | None = None, node_set_id=None) -> DiscreteMeasure:
        return cls(read_vector_csv(path, n), node_set_id)


def write_vector_csv(path, values, column: str) -> None:
    """Write ``index,<column>`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", column])
        for i, v in enumerate(np.asarray(values, dtype=float)):
            writer.writerow([i, f"{v:.17g}"])


def read_vector_csv(path, n: int | None = None) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "index":
                continue
            rows.append((int(row[0]), float(row[1])))
    size = n if n is not None else (max(i for i, _ in rows) + 1 if rows else 0)
    out = np.zeros(size)
    for i, v in rows:
        out[i] = v
    return out


def _same_owner(a, b):
    if a is not None and b is not None and a != b:
        raise NodeSetMismatchError(f"measures live on different node sets ({a} vs {b})")


def _weights(gram, mu) -> np.ndarray:
    if isinstance(mu, DiscreteMeasure):
        _same_owner(gram.node_set_id, mu.node_set_id)
        w = mu.weights
    else:
        w = np.asarray(mu, dtype=float).reshape(-1)
    if len(w) != gram.n:
        raise DimensionError(f"measure has {len(w)} weights, Gram form has {gram.n} nodes")
    return w


def potential(gram, mu) -> np.ndarray:
    """Potential ``K w`` of ``mu`` at every node."""
    return gram.matrix @ _weights(gram, mu)


def mutual_energy(gram, mu, nu) -> float:
    """Mutual energy ``w^T K v``."""
    return float(_weights(gram, mu) @ gram.matrix @ _weights(gram, nu))


def energy(gram, mu) -> float:
    """Energy ``w^T K w``, the squared energy norm."""
    return mutual_energy(gram, mu, mu)


def g_functional(gram, mu) -> float:
    """``2 * mass - energy``."""
    w = _weights(gram, mu)
    return float(2.0 * w.sum() - w @ gram.matrix @ w)


def write_potential_csv(path, values) -> None:
    write_vector_csv(path, values, "value")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def save_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")
