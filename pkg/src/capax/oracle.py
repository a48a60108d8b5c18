"""Exact and reference backends: enumeration, Monte-Carlo calibration and
certified matrix kernels."""
from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from . import cache
from .errors import CertificationError, KernelDomainError, SizeError
from .geometry import as_mask
from .kernels import GramForm, Kernel, LogKernel, MatrixKernel, Principles, RieszKernel, certify
from .qp import ORACLE_MAX_DIM, ORACLE_MAX_TOTAL, QpProblem, brute_force_oracle

log = logging.getLogger(__name__)

MIN_SAMPLES = 100_000
_CHUNK = 200_000


# --------------------------------------------------------------------------
# Monte-Carlo self energy of the reference cell

@dataclass(frozen=True)
class SelfEnergyEstimate:
    value: float
    stderr: float
    samples: int
    cell_dim: int

    def to_json(self):
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples, "cell_dim": self.cell_dim}


def _ball_volume(d: int, r: float = 1.0) -> float:
    return math.pi ** (d / 2) / gamma_fn(d / 2 + 1) * r**d


def _sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / gamma_fn(d / 2)


def _uniform_ball(rng, size, d, radius=1.0):
    g = rng.standard_normal((size, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random(size) ** (1.0 / d))[:, None]


def _directions(rng, size, d):
    g = rng.standard_normal((size, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def self_energy_constant(kernel: Kernel, samples: int = 1_000_000, cell_dim: int | None = None,
                         seed: int = 0) -> SelfEnergyEstimate:
    """Self energy of a uniform unit mass on a ball cell of diameter 1.

    The cell is a ``cell_dim``-dimensional flat ball (``cell_dim`` defaults to
    the kernel's ambient dimension; use ``dim - 1`` for surface nodes). With
    ``x`` uniform on the cell and the offset ``z`` drawn with density
    proportional to ``|z|^(alpha - dim)`` on the unit ball, the energy equals
    ``Z / |cell| * P(x + z in cell)`` where ``Z`` is the normalizer of that
    density; for the logarithmic kernel ``z`` is uniform and weighted by
    ``-log |z|``. Results are cached in memory and on disk.

    Raises
    ------
    KernelDomainError
        If ``alpha - dim + cell_dim <= 0`` (the cell energy diverges) or the
        kernel is a matrix kernel.
    """
    if isinstance(kernel, MatrixKernel):
        raise KernelDomainError("matrix kernels carry their own diagonal")
    if samples < MIN_SAMPLES:
        raise ValueError(f"at least {MIN_SAMPLES} samples are required, got {samples}")
    d = kernel.dim if cell_dim is None else int(cell_dim)
    if not 1 <= d <= kernel.dim:
        raise KernelDomainError(f"cell dimension must lie in 1..{kernel.dim}, got {d}")
    key = json.dumps(kernel.to_json(), sort_keys=True)
    return _self_energy_cached(key, int(samples), d, int(seed))


@functools.lru_cache(maxsize=64)
def _self_energy_cached(key: str, samples: int, d: int, seed: int) -> SelfEnergyEstimate:
    from .kernels import kernel_from_json

    kernel = kernel_from_json(json.loads(key))
    payload = {"kernel": key, "samples": samples, "cell_dim": d, "seed": seed, "v": 1}
    hit = cache.load("self_energy", payload)
    if hit is not None:
        return SelfEnergyEstimate(**hit)
    est = _self_energy_mc(kernel, samples, d, seed)
    cache.store("self_energy", payload, est.to_json())
    return est


def _self_energy_mc(kernel: Kernel, samples: int, d: int, seed: int) -> SelfEnergyEstimate:
    rng = np.random.default_rng(seed)
    radius = 0.5
    cell = _ball_volume(d, radius)
    if isinstance(kernel, LogKernel):
        vol = _ball_volume(d)
        total = total_sq = 0.0
        done = 0
        while done < samples:
            k = min(_CHUNK, samples - done)
            x = _uniform_ball(rng, k, d, radius)
            z = _uniform_ball(rng, k, d)
            w = -np.log(np.linalg.norm(z, axis=1)) * (np.linalg.norm(x + z, axis=1) <= radius)
            total += float(w.sum())
            total_sq += float((w * w).sum())
            done += k
        mean = total / samples
        var = max(total_sq / samples - mean * mean, 0.0)
        factor = vol / cell
        return SelfEnergyEstimate(factor * mean, factor * math.sqrt(var / samples), samples, d)
    assert isinstance(kernel, RieszKernel)
    power = kernel.exponent + d
    if power <= 0:
        raise KernelDomainError(
            f"cell self energy diverges: alpha - dim + cell_dim = {power} <= 0"
        )
    Z = _sphere_area(d) / power
    hits = 0
    done = 0
    while done < samples:
        k = min(_CHUNK, samples - done)
        x = _uniform_ball(rng, k, d, radius)
        z = _directions(rng, k, d) * (rng.random(k) ** (1.0 / power))[:, None]
        hits += int(np.count_nonzero(np.linalg.norm(x + z, axis=1) <= radius))
        done += k
    p = hits / samples
    factor = Z / cell
    return SelfEnergyEstimate(factor * p, factor * math.sqrt(p * (1 - p) / samples), samples, d)


# --------------------------------------------------------------------------
# exact equilibrium by enumeration

def exact_equilibrium(K, A, support=None):
    """Equilibrium measure of ``A`` by exhaustive active-set enumeration.

    Solves ``min |nu|^2`` over ``nu >= 0`` on ``support`` (default: every
    node) with ``(K nu)_i >= 1`` for ``i`` in ``A``, enumerating every
    combination of free variables and tight rows. Results are cached on disk
    keyed by the instance content.

    Raises
    ------
    SizeError
        If ``|support| > 12`` or ``|support| + |A| > 16``.
    """
    from .capacity import EquilibriumResult, result_from_gamma

    gram = K if isinstance(K, GramForm) else GramForm.from_matrix(K)
    n = gram.n
    Am = as_mask(A, n)
    S = as_mask(support, n)
    if len(S) > ORACLE_MAX_DIM or len(S) + len(Am) > ORACLE_MAX_TOTAL:
        raise SizeError(
            f"exact enumeration needs |support| <= {ORACLE_MAX_DIM} and |support| + |A| <= {ORACLE_MAX_TOTAL}"
        )
    payload = {"K": gram.matrix.tolist(), "A": Am.array.tolist(), "S": S.array.tolist(), "v": 1}
    hit = cache.load("exact_equilibrium", payload)
    if hit is not None:
        gamma = np.asarray(hit["gamma"])
        info = hit["info"]
    else:
        if len(Am) == 0:
            gamma = np.zeros(n)
            info = {"candidates": 0, "kkt_residual": 0.0}
        else:
            Ks = gram.block(S)
            problem = QpProblem(Ks, np.zeros(len(S)), "linear_ineq", gram.block(Am, S), np.ones(len(Am)))
            rep = brute_force_oracle(problem)
            gamma = np.zeros(n)
            gamma[S.array] = rep.x
            info = {"candidates": rep.iterations, "kkt_residual": rep.kkt_residual}
        cache.store("exact_equilibrium", payload, {"gamma": gamma.tolist(), "info": info})
    res: EquilibriumResult = result_from_gamma(gram, Am, gamma, "exact")
    res.diagnostics.update(info)
    return res


# --------------------------------------------------------------------------
# certified matrix kernels

def kernel_from_m_matrix(M) -> MatrixKernel:
    """Matrix kernel ``K = M^{-1}``."""
    return MatrixKernel(np.linalg.inv(np.asarray(M, dtype=float)))


def random_m_matrix(n: int, rng: np.random.Generator, density: float = 0.7) -> np.ndarray:
    """Symmetric strictly diagonally dominant matrix with nonpositive off-diagonal."""
    off = -rng.uniform(0.0, 1.0, size=(n, n)) * (rng.random((n, n)) < density)
    off = np.triu(off, 1)
    off = off + off.T
    M = off + np.diag(np.abs(off).sum(axis=1) + rng.uniform(0.1, 1.0, size=n))
    return M


@dataclass(frozen=True)
class CertifiedKernel:
    kernel: MatrixKernel
    gram: GramForm
    principles: Principles
    M: np.ndarray
    attempts: int


def generate_certified_kernel(n: int, seed: int, trials: int = 1000, tol: float = 1e-9,
                              max_attempts: int = 10) -> CertifiedKernel:
    """Inverse of a random symmetric diagonally dominant M-matrix, certified.

    Reproducible from ``(n, seed)``. Each candidate is re-checked against
    both maximum principles and regenerated if a check fails.

    Raises
    ------
    CertificationError
        If ``max_attempts`` candidates in a row fail certification.
    """
    if not 2 <= n <= ORACLE_MAX_DIM:
        raise SizeError(f"certified kernels are generated for 2 <= n <= {ORACLE_MAX_DIM}, got {n}")
    worst = []
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt])
        M = random_m_matrix(n, rng)
        kernel = kernel_from_m_matrix(M)
        gram = GramForm.from_matrix(kernel.entries)
        principles = certify(gram, trials, tol, seed=int(seed))
        if principles.both:
            return CertifiedKernel(kernel, gram, principles, M, attempt + 1)
        worst.append((principles.frostman.worst_violation, principles.domination.worst_violation))
        log.warning("candidate %d for (n=%d, seed=%d) failed certification", attempt, n, seed)
    raise CertificationError(f"no certified kernel after {max_attempts} attempts; worst violations {worst}")
