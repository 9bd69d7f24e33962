"""The assembled state-space model and its gradient bookkeeping.

Bundles a signal prior with a likelihood family and the observation
series, and provides the local log-density gradients plus the beta /
alpha / eta quantities that feed the accuracy certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..core import GammaWeight, PathVector
from ..errors import ShapeError, UnsupportedBoundError
from .likelihoods import (
    GaussianEmission,
    NeuralExact,
    NeuralPseudo,
    StochVolFactor,
)
from .signals import LinearGaussianSignal

__all__ = [
    "ModelSpec",
    "grad_phi",
    "grad_phi_tilde",
    "beta_m",
    "alpha_gamma_n",
    "eta_bound",
    "simulate",
]

_NEURAL = (NeuralPseudo, NeuralExact)


def _opnorm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def _chi_linear_gaussian(signal: LinearGaussianSignal, emission: GaussianEmission) -> float:
    """Quadratic-growth constant for the conjugate model.

    The local gradients are affine in the neighbouring blocks; if M bounds
    the operator norms of every block coefficient (built from Sigma^-1, A
    and C'R^-1 C), then the squared local gradient at x is at most
    2 beta + 6 M^2 (|x_{n-1}|^2 + |x_n|^2 + |x_{n+1}|^2). chi = 6 M^2 makes
    beta_n + chi r / gamma a valid eta bound at every radius the
    certificates evaluate (r >= beta_n / lambda^2); no finite constant can
    make it valid for r -> 0 on nonzero data, which the bound evaluators
    document.
    """
    Si = signal.Sigma_inv
    A = signal.A
    CtRC = emission.CtRinvC
    AtSiA = A.T @ Si @ A
    m = max(
        _opnorm(Si @ A),
        _opnorm(Si + AtSiA + CtRC),
        _opnorm(signal.Sigma0_inv + AtSiA + CtRC),
        _opnorm(Si + CtRC),
    )
    return 6.0 * m * m


@dataclass
class ModelSpec:
    """Signal prior + likelihood family + observations.

    ``observations`` is the time-indexed data: an (n+1, p) array for
    vector emissions, (n+1, d) returns for the factor model, and for the
    spiking families it defaults to the spike array the family carries.
    ``chi`` is the quadratic-growth constant enabling the chi-based
    bounds; it is filled in automatically for the conjugate
    linear-Gaussian / Gaussian-emission model and may be supplied by the
    user otherwise.
    """

    signal: object
    likelihood: object
    observations: np.ndarray | None = None
    chi: float | None = None

    def __post_init__(self):
        d = self.signal.dim
        want = self.likelihood.state_dim()
        if want is not None and want != d:
            raise ShapeError(
                f"likelihood expects state dimension {want}, signal has {d}"
            )
        if self.observations is None and isinstance(self.likelihood, _NEURAL):
            self.observations = self.likelihood.spikes
        if self.observations is not None:
            obs = np.asarray(self.observations, dtype=float)
            if not np.all(np.isfinite(obs)):
                raise ShapeError("observations contain non-finite entries")
            self.observations = obs
            if isinstance(self.likelihood, _NEURAL) and obs.shape[0] > self.likelihood.n_times:
                raise ShapeError("observations extend beyond the family's spike storage")
        if self.chi is None and isinstance(self.signal, LinearGaussianSignal) and isinstance(
            self.likelihood, GaussianEmission
        ):
            self.chi = _chi_linear_gaussian(self.signal, self.likelihood)

    # -- shapes -----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.signal.dim

    @property
    def horizon(self) -> int:
        if self.observations is None:
            raise ShapeError("model has no observations attached")
        return self.observations.shape[0] - 1

    def require_horizon(self, n: int):
        if n > self.horizon:
            raise ShapeError(f"index {n} beyond observation horizon {self.horizon}")

    def prefix(self, n: int) -> "ModelSpec":
        """Model restricted to the first n+1 observation indices."""
        self.require_horizon(n)
        lik = self.likelihood
        if isinstance(lik, _NEURAL):
            lik = lik.sliced(n + 1)
            return ModelSpec(self.signal, lik, observations=None, chi=self.chi)
        if isinstance(lik, StochVolFactor):
            lik = lik.sliced(n + 1)
        return ModelSpec(self.signal, lik, observations=self.observations[: n + 1], chi=self.chi)

    def with_observations(self, obs) -> "ModelSpec":
        if isinstance(self.likelihood, _NEURAL):
            lik = type(self.likelihood)(
                self.likelihood.N,
                self.likelihood.R,
                rates_c=self.likelihood.rates_c,
                spikes=obs,
            )
            return ModelSpec(self.signal, lik, observations=None, chi=self.chi)
        return replace(self, observations=np.asarray(obs, dtype=float))

    # -- likelihood plumbing ----------------------------------------------

    def obs_slice(self, t0: int, t1: int) -> np.ndarray:
        if t1 > self.horizon + 1:
            raise ShapeError(f"observation slice [{t0}, {t1}) beyond horizon {self.horizon}")
        return self.observations[t0:t1]

    def log_g_terms(self, xs: np.ndarray, t0: int = 0) -> np.ndarray:
        return self.likelihood.log_terms(xs, self.obs_slice(t0, t0 + xs.shape[0]), t0)

    def grad_log_g(self, xs: np.ndarray, t0: int = 0) -> np.ndarray:
        return self.likelihood.grad(xs, self.obs_slice(t0, t0 + xs.shape[0]), t0)


# ---------------------------------------------------------------------------
# Local gradients of the summed log densities
# ---------------------------------------------------------------------------

def _as_blocks(x) -> np.ndarray:
    return x.blocks if isinstance(x, PathVector) else np.asarray(x, dtype=float)


def grad_phi(model: ModelSpec, x, index_n: int) -> np.ndarray:
    """Gradient, with respect to block n, of the interior local sum
    log f(x_{n-1}, x_n) + log f(x_n, x_{n+1}) + log g(x_n, y_n).

    Valid for 1 <= n <= horizon - 1; the boundary blocks use
    :func:`grad_phi_tilde`.
    """
    xs = _as_blocks(x)
    n = int(index_n)
    if not 1 <= n <= xs.shape[0] - 2:
        raise IndexError(f"interior index must satisfy 1 <= n <= {xs.shape[0] - 2}, got {n}")
    model.require_horizon(n)
    sig = model.signal
    g = sig.grad_log_f_wrt_next(xs[n - 1], xs[n])
    g = g + sig.grad_log_f_wrt_prev(xs[n], xs[n + 1])
    g = g + model.grad_log_g(xs[n : n + 1], t0=n)[0]
    return g


def grad_phi_tilde(model: ModelSpec, x, index_n: int) -> np.ndarray:
    """Gradient, with respect to block n, of the boundary local sum.

    Index 0 bundles the initial density, the forward transition (when a
    next block exists) and the emission; index n >= 1 bundles the backward
    transition and the emission.
    """
    xs = _as_blocks(x)
    n = int(index_n)
    if not 0 <= n <= xs.shape[0] - 1:
        raise IndexError(f"index must satisfy 0 <= n <= {xs.shape[0] - 1}, got {n}")
    model.require_horizon(n)
    sig = model.signal
    if n == 0:
        g = sig.grad_log_mu(xs[0])
        if xs.shape[0] > 1:
            g = g + sig.grad_log_f_wrt_prev(xs[0], xs[1])
    else:
        g = sig.grad_log_f_wrt_next(xs[n - 1], xs[n])
    return g + model.grad_log_g(xs[n : n + 1], t0=n)[0]


# ---------------------------------------------------------------------------
# beta / alpha / eta bookkeeping
# ---------------------------------------------------------------------------

def _beta_array(model: ModelSpec, upto: int) -> np.ndarray:
    """beta_m for m = 0..upto in one vectorized pass.

    beta_m is the larger of the squared boundary- and interior-style local
    gradient norms at the all-zero path. Index 0 and the data horizon keep
    only the boundary branch (matching the finite-horizon gradient
    blocks); every interior index takes the max over both branches.
    """
    model.require_horizon(upto)
    horizon = model.horizon
    d = model.dim
    sig = model.signal
    zeros_d = np.zeros(d)
    zero_path = np.zeros((upto + 1, d))
    gk = model.grad_log_g(zero_path, t0=0)  # likelihood gradients at the zero path

    fwd = sig.grad_log_f_wrt_prev(zeros_d, zeros_d)   # d/dx_n log f(x_n, x_{n+1}) at 0
    bwd = sig.grad_log_f_wrt_next(zeros_d, zeros_d)   # d/dx_n log f(x_{n-1}, x_n) at 0
    mu0 = sig.grad_log_mu(zeros_d)

    beta = np.empty(upto + 1)
    g_tilde0 = mu0 + (fwd if horizon >= 1 else 0.0) + gk[0]
    beta[0] = float(g_tilde0 @ g_tilde0)
    for m in range(1, upto + 1):
        g_tilde = bwd + gk[m]
        val = float(g_tilde @ g_tilde)
        if m < horizon:
            g_int = bwd + fwd + gk[m]
            val = max(val, float(g_int @ g_int))
        beta[m] = val
    return beta


def beta_m(model: ModelSpec, index_m: int) -> float:
    """Worst squared local gradient norm at the zero path for index m."""
    m = int(index_m)
    if m < 0:
        raise IndexError(f"index must be nonnegative, got {m}")
    model.require_horizon(m)
    return float(_beta_array(model, m)[m])


def alpha_gamma_n(model: ModelSpec, w: GammaWeight, horizon: int) -> float:
    """Discounted running sum of beta: sum_{m<=n} gamma^(n-m) beta_m."""
    n = int(horizon)
    beta = _beta_array(model, n)
    acc = 0.0
    for m in range(n + 1):
        acc = acc * w.gamma + beta[m]
    return float(acc)


def eta_bound(model: ModelSpec, index_n: int, radius_r: float, w: GammaWeight) -> float:
    """Certified upper bound on the worst local gradient over a ball.

    The ball is measured in the index-centered discounted norm with radius
    sqrt(r). Two routes exist:

    * the factor-volatility model (with b = b0 = 0) gets its specialized
      crude bound, built from the signal eigen-extremes and an
      exp(sqrt(r))-weighted data term;
    * otherwise the quadratic-growth route beta_n + chi r / gamma is used
      and requires ``model.chi``.
    """
    r = float(radius_r)
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    n = int(index_n)
    model.require_horizon(n)
    lik = model.likelihood
    if isinstance(lik, StochVolFactor) and isinstance(model.signal, LinearGaussianSignal):
        return _eta_bound_stoch_vol(model, n, r, w)
    if model.chi is None:
        raise UnsupportedBoundError(
            "no eta bound available: model.chi is unset and no specialized bound applies"
        )
    return beta_m(model, n) + model.chi * r / w.gamma


def _eta_bound_stoch_vol(model: ModelSpec, n: int, r: float, w: GammaWeight) -> float:
    """Crude certified bound for the factor-volatility model, b = b0 = 0.

    Same shape as the generic derivation: a term linear in the ball radius
    covering the transition/initial gradients (blocks n-1, n+1 enter with
    the 1/sqrt(gamma)-inflated radius), plus the data term, which takes
    the worse of the exp(+-sqrt(r)) endpoints of each squared emission
    gradient coordinate. Deliberately conservative: the two pieces are
    combined with a factor-2 split instead of a sharp sup.
    """
    sig = model.signal
    lik = model.likelihood
    if np.any(sig.b != 0.0) or np.any(sig.b0 != 0.0):
        raise UnsupportedBoundError(
            "factor-volatility eta bound is derived for b = b0 = 0"
        )
    AtA = sig.A.T @ sig.A
    a_norm = math.sqrt(float(np.max(np.linalg.eigvalsh(AtA))))
    rho_min_sigma = float(np.min(np.linalg.eigvalsh(sig.Sigma)))
    rho_min_sigma0 = float(np.min(np.linalg.eigvalsh(sig.Sigma0)))
    inv_g = 1.0 / math.sqrt(w.gamma)
    c_interior = (1.0 + 2.0 * a_norm * inv_g + a_norm ** 2) / rho_min_sigma
    c_start = 1.0 / rho_min_sigma0 + (a_norm * inv_g + a_norm ** 2) / rho_min_sigma
    c_end = (1.0 + a_norm * inv_g) / rho_min_sigma
    c1 = max(c_interior, c_start, c_end)
    linear = 2.0 * r * c1 * c1
    resid_sq = (model.observations[n] - lik.factor_means[n]) ** 2
    lo = (resid_sq * math.exp(-math.sqrt(r)) - 1.0) ** 2
    hi = (resid_sq * math.exp(math.sqrt(r)) - 1.0) ** 2
    data = 2.0 * 0.25 * float(np.sum(np.maximum(lo, hi)))
    return linear + data


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate(model: ModelSpec, horizon: int, seed: int) -> tuple[PathVector, np.ndarray]:
    """Draw a state path and matching observations, deterministic per seed.

    Returns the path and the observation array in the family's native
    layout ((n+1, p) for vector emissions, (n+1, R, N) spikes for the
    coupling families).
    """
    rng = np.random.default_rng(seed)
    xs = model.signal.sample_path(int(horizon), rng)
    ys = model.likelihood.sample(xs, 0, rng)
    return PathVector(xs), ys
