"""Negative log posterior assembly: values, block gradients, windowed
variants for segment subproblems, and Hessian quadratic forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GammaWeight, PathVector, gamma_weights
from .errors import ShapeError, UnsupportedModeError
from .models.spec import ModelSpec

__all__ = [
    "eval_U",
    "grad_U",
    "WindowedObjective",
    "FullObjective",
    "grad_U_windowed",
    "hessian_quadratic_form",
]

_LOG_2PI = math.log(2.0 * math.pi)

BOUNDARY_MODES = ("full-prior", "marginal-prior", "flat-start")


def _as_blocks(model: ModelSpec, x) -> np.ndarray:
    xs = x.blocks if isinstance(x, PathVector) else np.asarray(x, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != model.dim:
        raise ShapeError(f"path must be (n+1, {model.dim}), got {xs.shape}")
    return xs


def eval_U(model: ModelSpec, x) -> float:
    """Value of the negative log posterior for the full path.

    Includes every normalization constant of the densities involved, so
    values are comparable across runs of the same family.
    """
    xs = _as_blocks(model, x)
    if xs.shape[0] != model.horizon + 1:
        raise ShapeError(
            f"path has {xs.shape[0]} blocks, observations have {model.horizon + 1}"
        )
    val = model.signal.log_mu(xs[0]) + model.signal.log_f_sum(xs)
    val += float(np.sum(model.log_g_terms(xs, t0=0)))
    return -val


def _grad_U_blocks(model: ModelSpec, xs: np.ndarray) -> np.ndarray:
    return -(model.signal.grad_log_prior(xs) + model.grad_log_g(xs, t0=0))


def grad_U(model: ModelSpec, x) -> PathVector:
    """Block gradient of the negative log posterior.

    Block m is minus the local log-density gradient (boundary blocks use
    the boundary-style local sums).
    """
    xs = _as_blocks(model, x)
    if xs.shape[0] != model.horizon + 1:
        raise ShapeError(
            f"path has {xs.shape[0]} blocks, observations have {model.horizon + 1}"
        )
    return PathVector(_grad_U_blocks(model, xs))


# ---------------------------------------------------------------------------
# Objective adapters used by the solvers
# ---------------------------------------------------------------------------

@dataclass
class FullObjective:
    """Adapter presenting the full-path problem to the solvers."""

    model: ModelSpec

    @property
    def n_blocks(self) -> int:
        return self.model.horizon + 1

    @property
    def dim(self) -> int:
        return self.model.dim

    def value(self, xs: np.ndarray) -> float:
        return eval_U(self.model, xs)

    def grad(self, xs: np.ndarray) -> np.ndarray:
        return _grad_U_blocks(self.model, xs)


class WindowedObjective:
    """Negative log posterior of a contiguous window of time indices.

    ``window`` is the inclusive index pair (a, b). The start-of-window
    prior term is selected by ``boundary_mode``:

    * ``marginal-prior``: the prior marginal of x_a (exact for the
      subproblem; requires closed-form signal marginals);
    * ``flat-start``: no prior term at the window start;
    * ``full-prior``: the initial density, correct only when a = 0.

    Interior and end terms match the full objective restricted to the
    window.
    """

    def __init__(self, model: ModelSpec, window: tuple[int, int], boundary_mode: str = "marginal-prior"):
        a, b = int(window[0]), int(window[1])
        if not (0 <= a <= b <= model.horizon):
            raise ShapeError(f"window ({a}, {b}) must lie inside 0..{model.horizon}")
        if boundary_mode not in BOUNDARY_MODES:
            raise UnsupportedModeError(
                f"boundary mode {boundary_mode!r} not one of {BOUNDARY_MODES}"
            )
        self.model = model
        self.window = (a, b)
        self.boundary_mode = boundary_mode
        self._start_mean = None
        self._start_prec = None
        self._start_logdet = None
        if boundary_mode == "marginal-prior":
            try:
                mean, cov = model.signal.marginal_params(a)
            except UnsupportedModeError:
                raise UnsupportedModeError(
                    "marginal-prior mode requires a signal with computable marginals"
                )
            self._start_mean = mean
            self._start_prec = np.linalg.inv(cov)
            sign, logdet = np.linalg.slogdet(cov)
            self._start_logdet = float(logdet)

    @property
    def n_blocks(self) -> int:
        return self.window[1] - self.window[0] + 1

    @property
    def dim(self) -> int:
        return self.model.dim

    def _start_term(self, x_a: np.ndarray) -> float:
        if self.boundary_mode == "flat-start":
            return 0.0
        if self.boundary_mode == "full-prior":
            return self.model.signal.log_mu(x_a)
        r = x_a - self._start_mean
        d = self.model.dim
        return -0.5 * (float(r @ self._start_prec @ r) + self._start_logdet + d * _LOG_2PI)

    def _start_grad(self, x_a: np.ndarray) -> np.ndarray:
        if self.boundary_mode == "flat-start":
            return np.zeros_like(x_a)
        if self.boundary_mode == "full-prior":
            return self.model.signal.grad_log_mu(x_a)
        return -self._start_prec @ (x_a - self._start_mean)

    def value(self, xs: np.ndarray) -> float:
        a, b = self.window
        if xs.shape[0] != self.n_blocks:
            raise ShapeError(f"window path must have {self.n_blocks} blocks, got {xs.shape[0]}")
        val = self._start_term(xs[0])
        if xs.shape[0] > 1:
            val += self.model.signal.log_f_sum(xs)
        val += float(np.sum(self.model.log_g_terms(xs, t0=a)))
        return -val

    def grad(self, xs: np.ndarray) -> np.ndarray:
        a, b = self.window
        if xs.shape[0] != self.n_blocks:
            raise ShapeError(f"window path must have {self.n_blocks} blocks, got {xs.shape[0]}")
        G = self.model.signal.grad_log_transitions(xs)
        G[0] += self._start_grad(xs[0])
        G += self.model.grad_log_g(xs, t0=a)
        return -G


def grad_U_windowed(obj: WindowedObjective, x_window) -> PathVector:
    """Block gradient of the windowed negative log posterior."""
    xs = x_window.blocks if isinstance(x_window, PathVector) else np.asarray(x_window, dtype=float)
    return PathVector(obj.grad(xs))


# ---------------------------------------------------------------------------
# Hessian quadratic forms
# ---------------------------------------------------------------------------

def hessian_quadratic_form(
    model: ModelSpec,
    x,
    v,
    w: GammaWeight,
    eps0: float = 1e-5,
) -> float:
    """Discounted quadratic form of the objective curvature along v at x.

    Uses the symmetric difference of the gradient with step eps0 scaled by
    the discounted norm of v, paired with the discounted inner product.
    Exact (up to roundoff) for models with quadratic objectives.
    """
    xs = _as_blocks(model, x)
    vs = _as_blocks(model, v)
    if xs.shape != vs.shape:
        raise ShapeError(f"x and v must share shape, got {xs.shape} vs {vs.shape}")
    weights = gamma_weights(vs.shape[0], w.gamma)
    vnorm = math.sqrt(float(np.einsum("md,md->m", vs, vs) @ weights))
    if vnorm == 0.0:
        return 0.0
    eps = eps0 / vnorm
    g_plus = _grad_U_blocks(model, xs + eps * vs)
    g_minus = _grad_U_blocks(model, xs - eps * vs)
    hv = (g_plus - g_minus) / (2.0 * eps)
    return float(np.einsum("md,md->m", vs, hv) @ weights)
