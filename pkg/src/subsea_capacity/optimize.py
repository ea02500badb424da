"""Particle swarm search followed by saddle-free Newton refinement.

Both stages maximise. Positions are decision vectors
``[P_1 .. P_N (dBm), L_EDF (m)]`` constrained to a box.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capacity import (
    EDF_LENGTH_BOUNDS,
    CapacityReport,
    LinkSpec,
    PowerAllocation,
    capacity_gradient,
    hessian_via_gradient_fd,
    smoothed_capacity,
    w_to_dbm,
)
from .gn import NonlinearTensor

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Optimiser settings or search box are inconsistent."""


@dataclass(frozen=True)
class SwarmConfig:
    particles: int = 50
    mu1: float = 1.49
    mu2: float = 1.49
    inertia: tuple = (0.1, 1.1)
    max_iter: int = 500
    stall: int = 50
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.particles < 2:
            raise ConfigurationError("need at least 2 particles")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ConfigurationError("mu1 and mu2 must be > 0")
        lo, hi = self.inertia
        if not 0 < lo <= hi:
            raise ConfigurationError("inertia range must satisfy 0 < w_lo <= w_hi")
        if self.max_iter < 0 or self.stall < 1:
            raise ConfigurationError("max_iter must be >= 0 and stall >= 1")


@dataclass(frozen=True)
class NewtonConfig:
    step: float = 1.0
    eig_floor: float = 1e-8
    grad_tol: float = 1e-9  # relative to |objective|
    max_iter: int = 20
    fd_step: float = 1e-3
    backtracks: int = 20

    def __post_init__(self):
        if self.step <= 0 or self.eig_floor <= 0:
            raise ConfigurationError("step and eig_floor must be > 0")
        if self.fd_step <= 0:
            raise ConfigurationError("fd_step must be > 0")


@dataclass
class Swarm:
    positions: np.ndarray
    velocities: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rngs: list


@dataclass
class PsoResult:
    best_position: np.ndarray
    best_value: float
    trace: np.ndarray  # swarm-best value per iteration, index 0 = initial swarm
    evaluations: int
    iterations: int


@dataclass
class NewtonResult:
    position: np.ndarray
    value: float
    trace: list  # (iteration, value, grad inf-norm, step scale)
    converged: bool


def _particle_rngs(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def search_box(link: LinkSpec, pump_power: float, expected_channels: float):
    """Lower and upper bounds of the decision vector.

    Powers lie between the energy-conservation bound and 10 dB below it;
    the EDF length between 0 and 20 m.
    """
    if pump_power <= 0:
        raise ConfigurationError("pump power must be > 0 to build the search box")
    hi = w_to_dbm(link.power_bound(pump_power, expected_channels))
    lo = hi - 10.0
    lower = np.concatenate([lo, [EDF_LENGTH_BOUNDS[0]]])
    upper = np.concatenate([hi, [EDF_LENGTH_BOUNDS[1]]])
    if not np.all(upper > lower) or not np.all(np.isfinite(upper)):
        raise ConfigurationError("empty or non-finite search box")
    return lower, upper


def init_swarm_in_box(lower, upper, cfg: SwarmConfig) -> Swarm:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or not np.all(upper >= lower):
        raise ConfigurationError("empty search box")
    rngs = _particle_rngs(cfg.seed, cfg.particles)
    pos = np.array([lower + r.random(lower.size) * (upper - lower) for r in rngs])
    return Swarm(pos, np.zeros_like(pos), lower, upper, rngs)


def init_swarm(link: LinkSpec, pump_power: float, expected_channels: float, cfg: SwarmConfig) -> Swarm:
    """Random swarm, uniform in the energy-conservation search box."""
    lower, upper = search_box(link, pump_power, expected_channels)
    return init_swarm_in_box(lower, upper, cfg)


def _evaluate_all(objective, positions, workers):
    def safe(x):
        try:
            v = float(objective(x))
        except Exception as exc:  # noqa: BLE001 - a failed particle is skipped
            log.warning("objective evaluation failed: %s", exc)
            return np.nan
        return v if np.isfinite(v) else np.nan

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return np.array(list(ex.map(safe, positions)))
    return np.array([safe(x) for x in positions])


def pso_run(objective, swarm: Swarm, cfg: SwarmConfig, observer=None) -> PsoResult:
    """Maximise ``objective`` with a global-best particle swarm.

    ``observer(iteration, best_position, best_value)`` is called after the
    initial evaluation and after every iteration.
    """
    x = swarm.positions.copy()
    v = swarm.velocities.copy()
    lo, hi = swarm.lower, swarm.upper
    r, d = x.shape
    vals = _evaluate_all(objective, x, cfg.workers)
    n_eval = r
    pbest = x.copy()
    pval = np.where(np.isnan(vals), -np.inf, vals)
    k = int(np.argmax(pval))
    sbest, sval = pbest[k].copy(), pval[k]
    trace = [sval]
    if observer is not None:
        observer(0, sbest, sval)
    since = 0
    it = 0
    w_lo, w_hi = cfg.inertia
    for it in range(1, cfg.max_iter + 1):
        for i, rng in enumerate(swarm.rngs):
            w = rng.uniform(w_lo, w_hi)
            a = rng.random(d)
            b = rng.random(d)
            v[i] = w * v[i] + cfg.mu1 * a * (pbest[i] - x[i]) + cfg.mu2 * b * (sbest - x[i])
        x += v
        out = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v[out] = 0.0
        vals = _evaluate_all(objective, x, cfg.workers)
        n_eval += r
        better = ~np.isnan(vals) & (vals > pval)
        pbest[better] = x[better]
        pval[better] = vals[better]
        k = int(np.argmax(pval))
        if pval[k] > sval:
            sbest, sval = pbest[k].copy(), pval[k]
            since = 0
        else:
            since += 1
        trace.append(sval)
        if observer is not None:
            observer(it, sbest, sval)
        if since >= cfg.stall:
            log.info("PSO stalled after %d iterations", it)
            break
    swarm.positions, swarm.velocities = x, v
    return PsoResult(sbest, float(sval), np.asarray(trace), n_eval, it)


def abs_eig_inverse(hessian, floor):
    """``|H|^-1`` with eigenvalues replaced by ``max(|lambda|, floor * max|lambda|)``."""
    lam, vec = np.linalg.eigh(hessian)
    mag = np.abs(lam)
    top = mag.max() if mag.size else 0.0
    if top == 0 or not np.isfinite(top):
        raise np.linalg.LinAlgError("degenerate Hessian")
    mag = np.maximum(mag, floor * top)
    return (vec / mag) @ vec.T


def saddle_free_newton_run(
    objective, gradient, hessian, x0, cfg: NewtonConfig, lower=None, upper=None, observer=None
) -> NewtonResult:
    """Maximise with steps ``mu |H|^-1 grad``, halving ``mu`` until the
    objective improves. Iterates are projected onto ``[lower, upper]``.

    Coordinates sitting on a bound with the gradient pointing outward are
    held fixed; the step and the convergence test use the remaining free
    coordinates and their block of the Hessian. Without this, blocked
    gradient components leak into the free ones through ``|H|^-1``.

    ``observer(iteration, position, value)`` is called for the start point and
    every accepted step.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = -np.inf if lower is None else np.asarray(lower, dtype=float)
    hi = np.inf if upper is None else np.asarray(upper, dtype=float)
    f = float(objective(x))
    trace = [(0, f, np.nan, np.nan)]
    if observer is not None:
        observer(0, x, f)
    converged = False
    for it in range(1, cfg.max_iter + 1):
        g = np.asarray(gradient(x), dtype=float)
        free = ~(((x <= lo) & (g < 0)) | ((x >= hi) & (g > 0)))
        gnorm = float(np.max(np.abs(g[free]))) if free.any() else 0.0
        if gnorm <= cfg.grad_tol * max(abs(f), 1e-300):
            converged = True
            trace.append((it, f, gnorm, 0.0))
            break
        direction = np.zeros_like(x)
        try:
            h = np.asarray(hessian(x), dtype=float)
            direction[free] = abs_eig_inverse(h[np.ix_(free, free)], cfg.eig_floor) @ g[free]
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.warning("Hessian unusable (%s); taking a gradient step", exc)
            direction[free] = g[free] / gnorm
        mu = cfg.step
        accepted = False
        for _ in range(cfg.backtracks + 1):
            xn = np.clip(x + mu * direction, lo, hi)
            try:
                fn = float(objective(xn))
            except Exception as exc:  # noqa: BLE001
                log.warning("objective failed during line search: %s", exc)
                fn = -np.inf
            if np.isfinite(fn) and fn > f:
                accepted = True
                break
            mu *= 0.5
        if not accepted:
            trace.append((it, f, gnorm, 0.0))
            converged = True
            break
        x, f = xn, fn
        trace.append((it, f, gnorm, mu))
        if observer is not None:
            observer(it, x, f)
    return NewtonResult(x, f, trace, converged)


@dataclass
class OptimizationResult:
    allocation: PowerAllocation
    report: CapacityReport
    pso: PsoResult
    newton: NewtonResult | None
    trace_rows: list = field(default_factory=list)  # (stage, iteration, smoothed, hard)


def optimize_allocation(
    link: LinkSpec,
    tensor: NonlinearTensor | None,
    pump_power: float,
    swarm_cfg: SwarmConfig = SwarmConfig(),
    newton_cfg: NewtonConfig | None = NewtonConfig(),
    expected_channels: float | None = None,
) -> OptimizationResult:
    """Swarm search over the energy-conservation box, then Newton refinement.

    ``newton_cfg=None`` skips the refinement. ``expected_channels`` defaults
    to two thirds of the grid.
    """
    nbar = expected_channels if expected_channels is not None else max(1.0, 2.0 * link.n_channels / 3.0)
    lower, upper = search_box(link, pump_power, nbar)
    swarm = init_swarm_in_box(lower, upper, swarm_cfg)

    def objective(x):
        return smoothed_capacity(PowerAllocation.from_vector(x), link, tensor, pump_power).smoothed_capacity

    rows = []

    def recorder(stage):
        last = {"x": None, "hard": np.nan}

        def observer(it, xb, vb):
            if last["x"] is None or not np.array_equal(last["x"], xb):
                last["x"] = np.array(xb, copy=True)
                rep = smoothed_capacity(PowerAllocation.from_vector(xb), link, tensor, pump_power)
                last["hard"] = rep.hard_capacity
            rows.append((stage, it, float(vb), float(last["hard"])))

        return observer

    pso = pso_run(objective, swarm, swarm_cfg, recorder("pso"))
    x = pso.best_position
    newton = None
    if newton_cfg is not None and newton_cfg.max_iter > 0:

        def grad(xv):
            return capacity_gradient(PowerAllocation.from_vector(xv), link, tensor, pump_power)

        def hess(xv):
            return hessian_via_gradient_fd(
                PowerAllocation.from_vector(xv), link, tensor, pump_power, newton_cfg.fd_step
            )

        newton = saddle_free_newton_run(objective, grad, hess, x, newton_cfg, lower, upper, recorder("newton"))
        x = newton.position
    alloc = PowerAllocation.from_vector(x)
    report = smoothed_capacity(alloc, link, tensor, pump_power)
    return OptimizationResult(alloc, report, pso, newton, rows)
