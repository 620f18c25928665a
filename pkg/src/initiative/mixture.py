"""Grid-based maximum-likelihood mixing distributions for initiative counts.

Two likelihoods share one estimator:

* links: the less-initiating endpoint is unknown, so each link's likelihood
  averages the binomial probability of either count being the minority side,
  with mixing parameter ``mu`` on ``[0, 0.5]``;
* persons: outgoing initiatives out of the total, plain binomial, ``mu`` on
  ``[0, 1]``.

Identical count pairs are collapsed to one weighted row before fitting.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls
from scipy.special import logsumexp

from . import kernels
from .errors import DistributionError, InputError, InsufficientDataError

LINK_DOMAIN = 0.5
PERSON_DOMAIN = 1.0
DEFAULT_GRID_SIZE = 51


def make_grid(size: int = DEFAULT_GRID_SIZE, upper: float = LINK_DOMAIN) -> np.ndarray:
    if size < 2:
        raise ValueError("grid needs at least two points")
    return np.linspace(0.0, upper, size)


def _check_grid(grid, upper=None):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise DistributionError("grid needs at least two points")
    if not np.all(np.diff(grid) > 0):
        raise DistributionError("grid must be strictly increasing")
    if upper is not None and (grid[0] != 0.0 or grid[-1] != upper):
        raise DistributionError(f"grid must span [0, {upper}]")
    return grid


@dataclass(frozen=True, eq=False)
class MixtureDistribution:
    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        grid = _check_grid(self.grid)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != grid.shape:
            raise DistributionError("weights and grid differ in shape")
        if not np.all(np.isfinite(w)) or (w < 0).any() or (w > 1).any():
            raise DistributionError("weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DistributionError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, grid, atoms, masses) -> "MixtureDistribution":
        """Project point masses onto their nearest grid points."""
        grid = _check_grid(grid)
        w = np.zeros(grid.shape)
        for x, m in zip(np.atleast_1d(atoms), np.atleast_1d(masses)):
            w[int(np.argmin(np.abs(grid - x)))] += m
        return cls(grid, w / w.sum())

    @classmethod
    def point_mass(cls, grid, at) -> "MixtureDistribution":
        return cls.from_atoms(grid, [at], [1.0])

    @property
    def mean(self) -> float:
        return float(self.grid @ self.weights)

    def write(self, path, delimiter="\t"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"mu{delimiter}weight\n")
            for mu, w in zip(self.grid, self.weights):
                fh.write(f"{float(mu)!r}{delimiter}{float(w)!r}\n")

    @classmethod
    def read(cls, path, delimiter="\t") -> "MixtureDistribution":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(delimiter)
            if header != ["mu", "weight"]:
                raise InputError(f"unexpected distribution header {header}")
            rows = [line.rstrip("\n").split(delimiter) for line in fh if line.strip()]
        arr = np.array(rows, dtype=np.float64)
        w = arr[:, 1]
        return cls(arr[:, 0], w / w.sum())


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class EstimatorOptions:
    max_iter: int = 10000
    tol: float = 1e-8
    patience: int = 3
    min_total: int = 1
    normal_approx: bool = False
    normal_min_total: int = 100
    init: str = "histogram"
    init_min_total: int = 20
    init_floor: float = 0.01
    polish: bool = True
    em_iter: int = 500
    kkt_tol: float = 1e-6
    support_tol: float = 1e-9

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.init not in ("histogram", "uniform"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if not 0 < self.init_floor <= 1:
            raise ValueError("init_floor must be in (0, 1]")


@dataclass
class MixtureSummary:
    mean: float
    zero_weight: float
    mean_excluding_zero: Optional[float]


def summarize_mixture(dist: MixtureDistribution) -> MixtureSummary:
    """Mean, weight of the smallest grid point, and the mean with that point removed."""
    w = dist.weights
    rest = 1.0 - w[0]
    if rest <= 1e-12:
        excl = None
    else:
        excl = float(dist.grid[1:] @ w[1:] / w[1:].sum())
    return MixtureSummary(dist.mean, float(w[0]), excl)


@dataclass
class EstimatorReport:
    log_likelihood: float
    iterations: int
    em_iterations: int
    trace: np.ndarray
    converged: bool
    kkt_violation: float
    summary: MixtureSummary
    n_units: int
    options: EstimatorOptions = field(default_factory=EstimatorOptions)

    def as_dict(self):
        return {
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "em_iterations": self.em_iterations,
            "converged": self.converged,
            "kkt_violation": self.kkt_violation,
            "n_units": self.n_units,
            "summary": asdict(self.summary),
            "options": asdict(self.options),
        }


class MixtureProblem:
    """Weighted component log-likelihood matrix for one dataset and grid.

    ``log_k[i, j]`` is the log-probability of row ``i``'s counts under grid
    point ``j``; ``weight[i]`` is how many units share that row.
    """

    def __init__(self, log_k, weight, grid, init_points, n_units):
        self.log_k = log_k
        self.weight = np.asarray(weight, dtype=np.float64)
        self.grid = grid
        self.init_points = init_points
        self.n_units = n_units
        with np.errstate(invalid="ignore"):
            self.row_max = log_k.max(axis=1)
        if not np.all(np.isfinite(self.row_max)):
            raise DistributionError("a row has zero likelihood at every grid point")
        self.k_scaled = np.exp(log_k - self.row_max[:, None])
        self.offset = float(self.weight @ self.row_max)

    @classmethod
    def for_links(cls, n_a, n_b, grid=None, opts: EstimatorOptions | None = None) -> "MixtureProblem":
        opts = opts or EstimatorOptions()
        grid = _check_grid(make_grid() if grid is None else grid, LINK_DOMAIN)
        n_a = np.asarray(n_a, dtype=np.int64)
        n_b = np.asarray(n_b, dtype=np.int64)
        total = n_a + n_b
        keep = total >= max(opts.min_total, 1)
        if not keep.any():
            raise InsufficientDataError("no links pass the minimum-initiatives filter")
        lo = np.minimum(n_a, n_b)[keep]
        total = total[keep]
        pairs, counts = np.unique(np.stack([lo, total], axis=1), axis=0, return_counts=True)
        lo_u, tot_u = pairs[:, 0], pairs[:, 1]
        la = kernels.log_binomial_matrix(lo_u, tot_u, grid, opts.normal_approx, opts.normal_min_total)
        lb = kernels.log_binomial_matrix(tot_u - lo_u, tot_u, grid, opts.normal_approx, opts.normal_min_total)
        log_k = np.logaddexp(la, lb) - math.log(2.0)
        big = total > opts.init_min_total
        init_points = lo[big] / total[big]
        return cls(log_k, counts, grid, init_points, int(keep.sum()))

    @classmethod
    def for_persons(cls, out, total, grid=None, opts: EstimatorOptions | None = None) -> "MixtureProblem":
        opts = opts or EstimatorOptions()
        grid = _check_grid(make_grid(upper=PERSON_DOMAIN) if grid is None else grid, PERSON_DOMAIN)
        out = np.asarray(out, dtype=np.int64)
        total = np.asarray(total, dtype=np.int64)
        if ((out < 0) | (out > total)).any():
            raise InputError("outgoing count outside [0, total]")
        keep = total >= max(opts.min_total, 1)
        if not keep.any():
            raise InsufficientDataError("no persons pass the minimum-initiatives filter")
        out, total = out[keep], total[keep]
        pairs, counts = np.unique(np.stack([out, total], axis=1), axis=0, return_counts=True)
        log_k = kernels.log_binomial_matrix(
            pairs[:, 0], pairs[:, 1], grid, opts.normal_approx, opts.normal_min_total
        )
        big = total > opts.init_min_total
        return cls(log_k, counts, grid, out[big] / total[big], int(keep.sum()))

    # -- objective ------------------------------------------------------------

    def log_likelihood(self, weights) -> float:
        """Σ_i weight_i · log Σ_j F_j K_ij; ``weights`` need not be normalized."""
        p = self.k_scaled @ np.asarray(weights, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return self.offset + float(self.weight @ np.log(p))

    def gradient(self, weights) -> np.ndarray:
        p = self.k_scaled @ np.asarray(weights, dtype=np.float64)
        return self.k_scaled.T @ (self.weight / p)

    def kkt_violation(self, weights, support_tol=1e-9) -> float:
        """Largest gap between the top gradient component and any supported one.

        The gradient is divided by the total weight, so at a maximum it equals
        1 on the support and is at most 1 elsewhere.
        """
        r = self.gradient(weights) / self.weight.sum()
        supp = np.asarray(weights) > support_tol
        return float(r.max() - r[supp].min())

    def initial_weights(self, opts: EstimatorOptions) -> np.ndarray:
        J = self.grid.size
        uniform = np.full(J, 1.0 / J)
        if opts.init == "uniform" or self.init_points.size == 0:
            return uniform
        idx = np.abs(self.init_points[:, None] - self.grid[None, :]).argmin(axis=1)
        hist = np.bincount(idx, minlength=J) / idx.size
        f0 = (1.0 - opts.init_floor) * hist + opts.init_floor * uniform
        return f0 / f0.sum()


def _polish(problem: MixtureProblem, f, opts, budget):
    """Constrained-Newton steps on the simplex.

    Each step solves the local quadratic model of the log-likelihood as an
    NNLS problem, with the sum-to-one constraint carried by a heavily weighted
    extra row, then backtracks along the step until the Armijo condition
    holds. Every accepted step increases the log-likelihood.
    """
    kt = problem.k_scaled
    sw = np.sqrt(problem.weight)
    J = kt.shape[1]
    rho = 1e3 * math.sqrt(problem.weight.sum())
    target = np.concatenate([2.0 * sw, [rho]])
    ll = problem.log_likelihood(f)
    trace = []
    small = False
    while len(trace) < budget:
        if small and problem.kkt_violation(f, opts.support_tol) <= opts.kkt_tol:
            break
        s = kt / (kt @ f)[:, None]
        try:
            x, _ = nnls(np.vstack([s * sw[:, None], np.full((1, J), rho)]), target, maxiter=50 * J)
        except RuntimeError:
            break
        if not x.sum() > 0:
            break
        d = x / x.sum() - f
        slope = float(problem.gradient(f) @ d)
        if not slope > 0:
            break
        sigma = 1.0
        while True:
            cand = np.maximum(f + sigma * d, 0.0)
            cand /= cand.sum()
            cand_ll = problem.log_likelihood(cand)
            if cand_ll >= ll + sigma * slope / 3.0:
                break
            sigma *= 0.5
            if sigma < 1e-12:
                return f, trace
        small = abs(cand_ll - ll) < opts.tol
        f, ll = cand, cand_ll
        trace.append(ll)
    return f, trace


def fit_mixture(problem: MixtureProblem, opts: EstimatorOptions | None = None):
    """Maximize the problem's log-likelihood over the simplex on its grid.

    EM runs first (at most ``em_iter`` iterations when polishing, otherwise
    ``max_iter``), then constrained-Newton steps finish the climb until the
    KKT certificate holds. With polishing, ``converged`` is that certificate;
    without it, the EM stopping rule (``patience`` consecutive changes below
    ``tol``).
    """
    opts = opts or EstimatorOptions()
    f0 = problem.initial_weights(opts)
    em_cap = min(opts.em_iter, opts.max_iter) if opts.polish else opts.max_iter
    f, trace, em_it, em_conv = kernels.em_fit(
        problem.k_scaled, problem.weight, f0, opts.tol, em_cap, opts.patience
    )
    trace = list(trace + problem.offset)
    it = int(em_it)
    if opts.polish and it < opts.max_iter:
        f, extra = _polish(problem, f, opts, opts.max_iter - it)
        trace.extend(extra)
        it += len(extra)
    f = np.maximum(f, 0.0)
    f = f / f.sum()
    kkt = problem.kkt_violation(f, opts.support_tol)
    if opts.polish:
        converged = kkt <= opts.kkt_tol
    else:
        converged = bool(em_conv)
    dist = MixtureDistribution(problem.grid, f)
    report = EstimatorReport(
        log_likelihood=problem.log_likelihood(f),
        iterations=it,
        em_iterations=int(em_it),
        trace=np.asarray(trace),
        converged=converged,
        kkt_violation=kkt,
        summary=summarize_mixture(dist),
        n_units=problem.n_units,
        options=opts,
    )
    return dist, report


def estimate_link_mixture(n_a, n_b, grid=None, opts: EstimatorOptions | None = None):
    """ML distribution of the folded asymmetry parameter from per-link counts.

    Returns ``(MixtureDistribution, EstimatorReport)``.
    """
    problem = MixtureProblem.for_links(n_a, n_b, grid, opts)
    return fit_mixture(problem, opts)


def estimate_person_mixture(out, total, grid=None, opts: EstimatorOptions | None = None):
    """ML distribution of the per-person initiative probability on ``[0, 1]``."""
    problem = MixtureProblem.for_persons(out, total, grid, opts)
    return fit_mixture(problem, opts)


def folded_link_likelihood(n_a: int, n_b: int, dist: MixtureDistribution, normal_approx=False) -> float:
    """Probability of one link's counts under ``dist``, both fold branches at prior 1/2."""
    total = n_a + n_b
    if total < 1:
        raise InputError("link has no initiatives")
    if not isinstance(dist, MixtureDistribution):
        dist = MixtureDistribution(*dist)
    k = np.array([n_a, n_b], dtype=np.int64)
    n = np.array([total, total], dtype=np.int64)
    lk = kernels.log_binomial_matrix(k, n, dist.grid, normal_approx, 100)
    with np.errstate(divide="ignore"):
        terms = lk + np.log(dist.weights)[None, :] - math.log(2.0)
    return float(np.exp(logsumexp(terms)))


def person_likelihood(out: int, total: int, dist: MixtureDistribution) -> float:
    lk = kernels.log_binomial_matrix(
        np.array([out]), np.array([total]), dist.grid, False, 100
    )[0]
    with np.errstate(divide="ignore"):
        return float(np.exp(logsumexp(lk + np.log(dist.weights))))
