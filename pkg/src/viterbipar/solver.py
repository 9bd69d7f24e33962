"""First-order MAP solvers.

Fixed-step gradient descent is the canonical method (explicit Euler on
the gradient flow of the objective); an Armijo backtracking variant is
the default for user runs since a good fixed step is data-scale
specific. Convergence is declared on the discounted gradient norm.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import GammaWeight, PathVector, gamma_weights
from .errors import DivergenceError, ShapeError
from .models.spec import ModelSpec
from .objective import FullObjective, WindowedObjective

_EPS = float(np.finfo(float).eps)

__all__ = [
    "SolverConfig",
    "SolveReport",
    "solve_map",
    "solve_windowed",
    "estimate_grad_lipschitz",
]


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the gradient solvers.

    ``step_size`` is the fixed step in fixed mode and the initial trial
    step in backtracking mode. ``grad_tol`` stops the iteration once the
    discounted gradient norm (weight ``gamma``) falls below it; the
    default None scales a 1e-8 floor with the square root of the path
    length.
    """

    step_mode: str = "backtracking"
    step_size: float = 1.0
    max_iters: int = 10_000
    grad_tol: float | None = None
    gamma: GammaWeight = field(default_factory=GammaWeight)
    armijo_c: float = 1e-4

    def __post_init__(self):
        if self.step_mode not in ("fixed", "backtracking"):
            raise ValueError(f"step_mode must be 'fixed' or 'backtracking', got {self.step_mode!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol is not None and self.grad_tol < 0:
            raise ValueError("grad_tol must be nonnegative")

    def resolved_tol(self, n_blocks: int) -> float:
        if self.grad_tol is not None:
            return self.grad_tol
        return 1e-8 * math.sqrt(n_blocks)


@dataclass
class SolveReport:
    """Outcome of one solve: the path plus convergence diagnostics."""

    solution: PathVector
    iterations: int
    final_grad_norm: float
    objective_value: float
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_grad_norm": self.final_grad_norm,
            "objective_value": self.objective_value,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def _weighted_norm(arr: np.ndarray, weights: np.ndarray) -> float:
    return math.sqrt(float(np.einsum("md,md->m", arr, arr) @ weights))


def _descend(objective, config: SolverConfig, init: np.ndarray) -> SolveReport:
    """Shared descent loop for full and windowed objectives."""
    t_start = time.perf_counter()
    x = np.array(init, dtype=float)
    weights = gamma_weights(x.shape[0], config.gamma.gamma)
    tol = config.resolved_tol(x.shape[0])

    backtracking = config.step_mode == "backtracking"
    h = config.step_size
    fx = objective.value(x) if backtracking else None
    if backtracking and not math.isfinite(fx):
        raise DivergenceError("objective not finite at the initial point", iteration=0)

    iterations = 0
    gnorm = math.inf
    grow = False  # grow the trial step only after a clean first-trial accept
    coasting = False
    accepted_any = False  # coasting may only trust a step the search accepted
    for it in range(config.max_iters):
        g = objective.grad(x)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"gradient became non-finite at iteration {it} (step too large?)",
                iteration=it,
            )
        gnorm = _weighted_norm(g, weights)
        if gnorm <= tol:
            break
        iterations = it + 1
        if backtracking:
            g_sq = float(np.einsum("md,md->", g, g))
            if accepted_any and config.armijo_c * h * g_sq <= 8.0 * _EPS * max(1.0, abs(fx)):
                # the sufficient-decrease test is below floating resolution
                # and would only measure rounding noise; coast on fixed
                # steps at half the last accepted step, which is strictly
                # inside the stable range that step certified
                if not coasting:
                    h *= 0.5
                    coasting = True
                x = x - h * g
                continue
            coasting = False
            if grow:
                h = min(h * 2.0, config.step_size)
            halvings = 0
            while True:
                x_new = x - h * g
                f_new = objective.value(x_new)
                if math.isfinite(f_new) and f_new <= fx - config.armijo_c * h * g_sq:
                    break
                h *= 0.5
                halvings += 1
                if h < 1e-300:
                    raise DivergenceError(
                        f"backtracking step underflow at iteration {it}", iteration=it
                    )
            grow = halvings == 0
            accepted_any = True
            # objective is nonincreasing by construction of the accepted step
            assert f_new <= fx
            x, fx = x_new, f_new
        else:
            x = x - h * g
    else:
        # max_iters reached; recompute the gradient norm at the final point
        g = objective.grad(x)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(
                f"gradient became non-finite at iteration {config.max_iters}",
                iteration=config.max_iters,
            )
        gnorm = _weighted_norm(g, weights)

    f_final = objective.value(x)
    if not math.isfinite(f_final):
        raise DivergenceError("objective not finite at the final point", iteration=iterations)
    return SolveReport(
        solution=PathVector(x),
        iterations=iterations,
        final_grad_norm=gnorm,
        objective_value=float(f_final),
        wall_clock_seconds=time.perf_counter() - t_start,
    )


def solve_map(model: ModelSpec, config: SolverConfig, init: PathVector | None = None) -> SolveReport:
    """Solve the full-path MAP problem by gradient descent.

    The default start is the all-zero path.
    """
    objective = FullObjective(model)
    if init is None:
        x0 = np.zeros((objective.n_blocks, objective.dim))
    else:
        x0 = init.blocks
        if x0.shape != (objective.n_blocks, objective.dim):
            raise ShapeError(
                f"init has shape {x0.shape}, expected {(objective.n_blocks, objective.dim)}"
            )
    return _descend(objective, config, x0)


def solve_windowed(
    obj: WindowedObjective, config: SolverConfig, init: PathVector | None = None
) -> SolveReport:
    """Solve one windowed subproblem; contract as in :func:`solve_map`."""
    if init is None:
        x0 = np.zeros((obj.n_blocks, obj.dim))
    else:
        x0 = init.blocks
        if x0.shape != (obj.n_blocks, obj.dim):
            raise ShapeError(
                f"init has shape {x0.shape}, expected {(obj.n_blocks, obj.dim)}"
            )
    return _descend(obj, config, x0)


def estimate_grad_lipschitz(objective, seed: int = 0, iters: int = 40) -> float:
    """Estimate the largest curvature of the objective by power iteration
    on gradient differences around the zero path.

    Used to pick safe fixed steps (h of order 1/L). For quadratic
    objectives this converges to the top Hessian eigenvalue.
    """
    rng = np.random.default_rng(seed)
    shape = (objective.n_blocks, objective.dim)
    x0 = np.zeros(shape)
    g0 = objective.grad(x0)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    eps = 1e-4
    lam = 0.0
    for _ in range(iters):
        hv = (objective.grad(x0 + eps * v) - g0) / eps
        lam = float(np.linalg.norm(hv))
        if lam == 0.0:
            return 0.0
        v = hv / lam
    return lam
