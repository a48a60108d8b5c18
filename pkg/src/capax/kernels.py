"""Kernels, Gram assembly and empirical maximum-principle checks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import pdist, squareform

from .errors import (
    DimensionError,
    IllConditionedDiscretizationError,
    KernelDomainError,
)
from .geometry import NodeSet, SubsetMask, as_mask

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# kernel variants

class Kernel:
    """Symmetric interaction with values in (-inf, +inf]."""

    kind = "abstract"

    def evaluate(self, x, y) -> float:
        raise NotImplementedError

    def to_json(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class RieszKernel(Kernel):
    """``|x - y|^(alpha - dim)`` with ``0 < alpha <= 2`` and ``alpha < dim``."""

    alpha: float
    dim: int
    kind = "riesz"

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise KernelDomainError(f"Riesz order must satisfy 0 < alpha <= 2, got {self.alpha}")
        if not self.alpha < self.dim:
            raise KernelDomainError(f"Riesz order must be below the dimension, got alpha={self.alpha}, dim={self.dim}")

    @property
    def exponent(self) -> float:
        return self.alpha - self.dim

    def profile(self, r):
        with np.errstate(divide="ignore"):
            return np.power(np.asarray(r, dtype=float), self.exponent)

    def evaluate(self, x, y) -> float:
        r = _distance(x, y, self.dim)
        return math.inf if r == 0.0 else float(r**self.exponent)

    def to_json(self):
        return {"kind": "riesz", "alpha": self.alpha, "dim": self.dim}


@dataclass(frozen=True)
class NewtonianKernel(RieszKernel):
    """``|x - y|^(2 - dim)`` on R^dim, dim >= 3."""

    alpha: float = field(default=2.0, init=False)
    dim: int = 3
    kind = "newtonian"

    def __post_init__(self):
        if self.dim < 3:
            raise KernelDomainError("the Newtonian kernel needs dim >= 3")
        super().__post_init__()

    def to_json(self):
        return {"kind": "newtonian", "dim": self.dim}


@dataclass(frozen=True)
class LogKernel(Kernel):
    """``-log |x - y|``, admitted only for distances below 1."""

    dim: int = 2
    kind = "log"

    def profile(self, r):
        with np.errstate(divide="ignore"):
            return -np.log(np.asarray(r, dtype=float))

    def evaluate(self, x, y) -> float:
        r = _distance(x, y, self.dim)
        if r >= 1.0:
            raise KernelDomainError(f"logarithmic kernel evaluated at distance {r} >= 1")
        return math.inf if r == 0.0 else -math.log(r)

    def to_json(self):
        return {"kind": "log", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class MatrixKernel(Kernel):
    """Explicit symmetric kernel on the abstract nodes ``0..n-1``."""

    entries: np.ndarray
    kind = "matrix"

    def __post_init__(self):
        K = np.array(self.entries, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DimensionError("matrix kernel entries must form a square matrix")
        off = K[~np.eye(len(K), dtype=bool)]
        if not np.all(np.isfinite(off)):
            raise KernelDomainError("off-diagonal matrix kernel entries must be finite")
        scale = max(1.0, float(np.max(np.abs(K[np.isfinite(K)]), initial=0.0)))
        if np.max(np.abs(K - K.T)) > 1e-12 * scale:
            raise KernelDomainError("matrix kernel entries must be symmetric")
        K = 0.5 * (K + K.T)
        K.setflags(write=False)
        object.__setattr__(self, "entries", K)

    def __len__(self):
        return len(self.entries)

    def evaluate(self, i, j) -> float:
        return float(self.entries[int(i), int(j)])

    def to_json(self):
        return {"kind": "matrix", "entries": self.entries.tolist()}


def _distance(x, y, dim) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != dim or y.size != dim:
        raise DimensionError(f"kernel expects points in R^{dim}, got {x.size} and {y.size} coordinates")
    return float(np.linalg.norm(x - y))


def eval_kernel(kernel: Kernel, x, y) -> float:
    """Value of ``kernel`` at the pair ``(x, y)``; node indices for matrix kernels."""
    return kernel.evaluate(x, y)


def kernel_from_json(obj: Mapping) -> Kernel:
    try:
        kind = obj["kind"]
        if kind == "riesz":
            return RieszKernel(float(obj["alpha"]), int(obj["dim"]))
        if kind == "newtonian":
            return NewtonianKernel(dim=int(obj.get("dim", 3)))
        if kind == "log":
            return LogKernel(int(obj.get("dim", 2)))
        if kind == "matrix":
            return MatrixKernel(np.asarray(obj["entries"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, KernelDomainError):
            raise
        raise KernelDomainError(f"malformed kernel specification: {exc}") from exc
    raise KernelDomainError(f"unknown kernel kind {kind!r}")


# --------------------------------------------------------------------------
# Gram forms

@dataclass(frozen=True)
class DiagPolicy:
    """How the Gram diagonal was produced.

    ``kind`` is ``"matrix"`` (taken from the kernel) or ``"cell"`` (self
    energy of a uniform unit mass on a cell of diameter ``h_i``: the
    constant times ``h_i**exponent`` for Riesz kernels, ``constant - log
    h_i`` for the logarithmic kernel).
    """

    kind: str
    constant: float | None = None
    stderr: float | None = None
    cell_dim: int | None = None
    exponent: float | None = None
    cell_sizes: tuple[float, ...] = ()

    def to_json(self):
        return {
            "kind": self.kind,
            "constant": self.constant,
            "stderr": self.stderr,
            "cell_dim": self.cell_dim,
            "exponent": self.exponent,
        }


_SAME = object()


@dataclass(frozen=True, eq=False)
class GramForm:
    """Symmetric positive definite node-indexed matrix of a kernel."""

    matrix: np.ndarray
    node_set_id: str
    diag_policy: DiagPolicy
    kernel: Kernel | None = None
    nodes: NodeSet | None = None

    def __post_init__(self):
        K = np.array(self.matrix, dtype=float)
        K.setflags(write=False)
        object.__setattr__(self, "matrix", K)

    @classmethod
    def from_matrix(cls, entries) -> GramForm:
        kernel = MatrixKernel(np.asarray(entries, dtype=float))
        return assemble_gram(kernel, NodeSet.indexed(len(kernel)))

    def __len__(self):
        return len(self.matrix)

    @property
    def n(self) -> int:
        return len(self.matrix)

    def mask(self, A) -> SubsetMask:
        return as_mask(A, self.n)

    def block(self, rows, cols=_SAME) -> np.ndarray:
        """Submatrix ``K[rows, cols]``; ``None`` means every node, ``cols``
        defaults to ``rows``."""
        r = self.mask(rows).array
        c = r if cols is _SAME else self.mask(cols).array
        return self.matrix[np.ix_(r, c)]

    def measure(self, weights):
        from .measures import DiscreteMeasure

        return DiscreteMeasure(weights, self.node_set_id)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def self_energy_diagonal(kernel: Kernel, nodes: NodeSet, samples: int, seed: int):
    from .oracle import self_energy_constant

    est = self_energy_constant(kernel, samples=samples, cell_dim=nodes.cell_dim, seed=seed)
    h = np.asarray(nodes.cell_sizes)
    if isinstance(kernel, LogKernel):
        diag = est.value - np.log(h)
        exponent = None
    else:
        diag = est.value * h**kernel.exponent
        exponent = kernel.exponent
    policy = DiagPolicy("cell", est.value, est.stderr, nodes.cell_dim, exponent, tuple(h.tolist()))
    return diag, policy


def assemble_gram(kernel: Kernel, nodes: NodeSet, samples: int = 1_000_000, seed: int = 0) -> GramForm:
    """Assemble the regularized Gram matrix of ``kernel`` on ``nodes``.

    Off-diagonal entries are kernel values. For analytic kernels the
    diagonal is the self energy of a uniform unit mass on a cell of diameter
    ``h_i`` (the node's cell size), with the reference constant estimated by
    Monte Carlo (see :func:`capax.oracle.self_energy_constant`). Matrix
    kernels keep their own diagonal.

    Raises
    ------
    IllConditionedDiscretizationError
        If the result is not positive definite; the smallest eigenvalue is
        attached to the exception.
    """
    if isinstance(kernel, MatrixKernel):
        if len(kernel) != len(nodes):
            raise DimensionError(f"matrix kernel has size {len(kernel)} but the node set has {len(nodes)} nodes")
        K = np.array(kernel.entries)
        policy = DiagPolicy("matrix")
    else:
        if nodes.dim != kernel.dim:
            raise DimensionError(f"kernel lives in R^{kernel.dim}, node set in R^{nodes.dim}")
        if isinstance(kernel, LogKernel) and nodes.diameter >= 1.0:
            raise KernelDomainError(f"logarithmic kernel needs node-set diameter < 1, got {nodes.diameter}")
        if len(nodes) > 1:
            K = squareform(kernel.profile(pdist(nodes.points)))
        else:
            K = np.zeros((1, 1))
        diag, policy = self_energy_diagonal(kernel, nodes, samples, seed)
        K[np.diag_indices_from(K)] = diag

    try:
        sla.cholesky(K, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        lam = float(np.linalg.eigvalsh(np.where(np.isfinite(K), K, 0.0))[0]) if np.all(np.isfinite(K)) else -math.inf
        raise IllConditionedDiscretizationError(
            f"Gram matrix is not positive definite (smallest eigenvalue {lam:.3e})", lam
        )
    return GramForm(K, nodes.id, policy, kernel, nodes)


# --------------------------------------------------------------------------
# maximum principles

@dataclass
class PrincipleReport:
    name: str
    trials: int
    passes: int
    failures: int
    vacuous: int
    worst_violation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_json(self):
        return {
            "name": self.name,
            "trials": self.trials,
            "passes": self.passes,
            "failures": self.failures,
            "vacuous": self.vacuous,
            "worst_violation": self.worst_violation,
            "tol": self.tol,
            "passed": self.passed,
        }


@dataclass
class Principles:
    frostman: PrincipleReport
    domination: PrincipleReport

    @property
    def both(self) -> bool:
        return self.frostman.passed and self.domination.passed


def frostman_holds(gram: GramForm, w, tol: float = 1e-9):
    """Premise and conclusion of the first maximum principle for one measure.

    Returns ``(premise, conclusion, violation)`` where the premise is
    ``K w <= 1`` on the support of ``w`` and the conclusion ``K w <= 1 + tol``
    everywhere.
    """
    w = np.asarray(w, dtype=float)
    p = gram.matrix @ w
    supp = w > 0
    if not supp.any():
        return True, True, 0.0
    premise = bool(p[supp].max() <= 1.0)
    violation = float(p.max() - 1.0)
    return premise, (not premise) or violation <= tol, violation


def domination_holds(gram: GramForm, mu, nu, tol: float = 1e-9):
    """Premise and conclusion of the domination principle for a pair."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    pm, pn = gram.matrix @ mu, gram.matrix @ nu
    supp = mu > 0
    premise = bool(np.all(pm[supp] <= pn[supp] + tol))
    violation = float(np.max(pm - pn))
    return premise, (not premise) or violation <= tol, violation


def _random_supports(rng, n, trials):
    sizes = rng.integers(1, n + 1, size=trials)
    keys = rng.random((trials, n))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    return (ranks < sizes[:, None]).T  # n x trials


def _equilibrium_trials(gram, rng, count):
    """Excess over 1 of the potentials of equilibrium measures of random subsets.

    These measures meet the premise with equality on their support, so
    they probe the principle where it is tight.
    """
    from .qp import QpProblem, solve_qp

    n = gram.n
    out = []
    for _ in range(count):
        S = np.flatnonzero(rng.random(n) < rng.uniform(0.2, 1.0))
        if S.size == 0:
            S = rng.integers(n, size=1)
        rep = solve_qp(QpProblem(gram.matrix[np.ix_(S, S)], np.ones(S.size), "nonneg"))
        w = np.zeros(n)
        w[S] = rep.x
        p = gram.matrix @ w
        top = float(p[w > 0].max())
        out.append(float(p.max() / top - 1.0) if top > 0 else 0.0)
    return np.asarray(out)


def check_frostman(gram: GramForm, trials: int = 1000, tol: float = 1e-9, seed: int = 0) -> PrincipleReport:
    """Sample the first maximum principle.

    Most trials draw a random support and positive weights on it, rescale so
    that the potential's maximum over the support is exactly 1, and record
    the excess of the global maximum over 1. One trial in twenty (at most 50)
    instead uses the equilibrium measure of a random node subset.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    n = gram.n
    structured = min(trials // 20, 50)
    plain = trials - structured
    supp = _random_supports(rng, n, plain)
    W = rng.exponential(size=(n, plain)) * supp
    P = gram.matrix @ W
    on_supp = np.where(supp, P, -np.inf).max(axis=0)
    ok = on_supp > 0
    scaled = P[:, ok] / on_supp[ok]
    excess = np.concatenate([scaled.max(axis=0) - 1.0, _equilibrium_trials(gram, rng, structured)])
    failures = int(np.sum(excess > tol))
    worst = float(excess.max()) if excess.size else 0.0
    vacuous = int(np.sum(~ok))
    return PrincipleReport("frostman", trials, trials - failures - vacuous, failures, vacuous, worst, tol)


def check_domination(gram: GramForm, trials: int = 1000, tol: float = 1e-9, seed: int = 0) -> PrincipleReport:
    """Sample the domination principle.

    Each trial draws ``mu`` on a random support and ``nu`` on another, scales
    ``mu`` to unit maximal potential and ``nu`` by the smallest factor that
    makes ``K nu >= K mu`` on the support of ``mu``, then records the worst
    excess of ``K mu`` over ``K nu`` anywhere.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    n = gram.n
    smu = _random_supports(rng, n, trials)
    snu = _random_supports(rng, n, trials)
    MU = rng.exponential(size=(n, trials)) * smu
    NU = rng.exponential(size=(n, trials)) * snu
    PM = gram.matrix @ MU
    PN = gram.matrix @ NU
    PM /= np.abs(PM).max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(smu, PM / PN, -np.inf)
    bad = np.any(smu & (PN <= 0) & (PM > 0), axis=0)
    t = np.max(ratio, axis=0)
    ok = ~bad & np.isfinite(t)
    t = np.where(ok, np.maximum(t, 0.0), 0.0)
    excess = (PM - PN * t)[:, ok].max(axis=0)
    failures = int(np.sum(excess > tol))
    worst = float(excess.max()) if excess.size else 0.0
    vacuous = int(np.sum(~ok))
    return PrincipleReport("domination", trials, trials - failures - vacuous, failures, vacuous, worst, tol)


def certify(gram: GramForm, trials: int = 1000, tol: float = 1e-9, seed: int = 0) -> Principles:
    return Principles(check_frostman(gram, trials, tol, seed), check_domination(gram, trials, tol, seed + 1))
