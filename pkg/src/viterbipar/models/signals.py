"""Signal priors: the linear-Gaussian chain and a Huber-noise nonlinear chain.

Both expose the same array-level interface used by the objective assembly:
log densities of the initial block and the transitions, their block
gradients, marginal parameters where available, and exact path sampling.
Paths are handled as (n+1, d) arrays throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import CertificationError, UnsupportedModeError

__all__ = [
    "LinearGaussianSignal",
    "HuberNonlinearSignal",
    "LinearDrift",
    "TanhDrift",
    "huber",
    "huber_grad",
    "stationary_covariance",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _as_spd(name: str, M) -> tuple[np.ndarray, np.ndarray, float]:
    """Validate symmetric positive definiteness by Cholesky.

    Returns (matrix, cholesky factor, log determinant).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise CertificationError(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise CertificationError(f"{name} must be symmetric")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise CertificationError(f"{name} is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return M, L, logdet


def _is_diagonal(M: np.ndarray) -> bool:
    return np.count_nonzero(M - np.diag(np.diag(M))) == 0


def stationary_covariance(A: np.ndarray, Sigma: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Stationary covariance of x' = A x + w, w ~ N(0, Sigma).

    Solved by the fixed-point series Sigma + A Sigma A' + ...; requires the
    spectral radius of A to be below one.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        raise ValueError("stationary covariance requires spectral radius of A below 1")
    P = Sigma.copy()
    term = Sigma.copy()
    Ak = A.copy()
    for _ in range(100_000):
        term = Ak @ Sigma @ Ak.T
        P += term
        if np.max(np.abs(term)) < tol * max(1.0, np.max(np.abs(P))):
            break
        Ak = Ak @ A
    return 0.5 * (P + P.T)


class LinearGaussianSignal:
    """x_0 ~ N(b0, Sigma0), x_m = A x_{m-1} + b + N(0, Sigma) noise.

    Parameters
    ----------
    A : (d, d) array
    b : (d,) array
    Sigma : (d, d) SPD array, transition noise covariance
    b0 : (d,) array
    Sigma0 : (d, d) SPD array, initial covariance
    """

    def __init__(self, A, b, Sigma, b0, Sigma0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        d = self.A.shape[0]
        if self.A.shape != (d, d):
            raise CertificationError(f"A must be square, got {self.A.shape}")
        self.b = np.broadcast_to(np.asarray(b, dtype=float).reshape(-1), (d,)).copy()
        self.b0 = np.broadcast_to(np.asarray(b0, dtype=float).reshape(-1), (d,)).copy()
        self.Sigma, self._chol_S, self._logdet_S = _as_spd("Sigma", Sigma)
        self.Sigma0, self._chol_S0, self._logdet_S0 = _as_spd("Sigma0", Sigma0)
        if self.Sigma.shape != (d, d) or self.Sigma0.shape != (d, d):
            raise CertificationError("Sigma/Sigma0 dimensions do not match A")
        self.Sigma_inv = np.linalg.inv(self.Sigma)
        self.Sigma0_inv = np.linalg.inv(self.Sigma0)
        # cached products used by the vectorized gradient assembly
        self._SiA = self.Sigma_inv @ self.A          # Sigma^-1 A
        self._AtSi = self.A.T @ self.Sigma_inv       # A' Sigma^-1
        self._diag = (
            _is_diagonal(self.A)
            and _is_diagonal(self.Sigma)
            and _is_diagonal(self.Sigma0)
        )
        if self._diag:
            self._a_d = np.diag(self.A).copy()
            self._si_d = np.diag(self.Sigma_inv).copy()
            self._si0_d = np.diag(self.Sigma0_inv).copy()

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self._diag

    # -- log densities ---------------------------------------------------

    def log_mu(self, x0: np.ndarray) -> float:
        r = x0 - self.b0
        q = float(r @ self.Sigma0_inv @ r)
        return -0.5 * (q + self._logdet_S0 + self.dim * _LOG_2PI)

    def residuals(self, xs: np.ndarray) -> np.ndarray:
        """Transition residuals w_m = x_m - A x_{m-1} - b for m = 1..n."""
        if self._diag:
            return xs[1:] - xs[:-1] * self._a_d - self.b
        return xs[1:] - xs[:-1] @ self.A.T - self.b

    def log_f_sum(self, xs: np.ndarray) -> float:
        """Sum over m of log f(x_{m-1}, x_m)."""
        n = xs.shape[0] - 1
        if n == 0:
            return 0.0
        W = self.residuals(xs)
        if self._diag:
            q = float(np.sum(W * W * self._si_d))
        else:
            q = float(np.einsum("md,md->", W @ self.Sigma_inv, W))
        return -0.5 * (q + n * (self._logdet_S + self.dim * _LOG_2PI))

    def grad_log_transitions(self, xs: np.ndarray) -> np.ndarray:
        """Block gradients of sum_m log f(x_{m-1}, x_m) (no initial term)."""
        G = np.zeros_like(xs)
        if xs.shape[0] > 1:
            W = self.residuals(xs)
            if self._diag:
                SiW = W * self._si_d
                G[1:] -= SiW
                G[:-1] += SiW * self._a_d
            else:
                SiW = W @ self.Sigma_inv
                G[1:] -= SiW
                G[:-1] += SiW @ self.A
        return G

    def grad_log_prior(self, xs: np.ndarray) -> np.ndarray:
        """Block gradients of log mu(x_0) + sum_m log f(x_{m-1}, x_m)."""
        G = self.grad_log_transitions(xs)
        if self._diag:
            G[0] += -(xs[0] - self.b0) * self._si0_d
        else:
            G[0] += -self.Sigma0_inv @ (xs[0] - self.b0)
        return G

    # single-block pieces, used by the phi-style local gradients
    def grad_log_mu(self, x0: np.ndarray) -> np.ndarray:
        return -self.Sigma0_inv @ (x0 - self.b0)

    def grad_log_f_wrt_next(self, x_prev: np.ndarray, x_next: np.ndarray) -> np.ndarray:
        return -self.Sigma_inv @ (x_next - self.A @ x_prev - self.b)

    def grad_log_f_wrt_prev(self, x_prev: np.ndarray, x_next: np.ndarray) -> np.ndarray:
        return self._AtSi @ (x_next - self.A @ x_prev - self.b)

    # -- marginals and sampling ------------------------------------------

    def marginal_params(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of x_m under the prior chain."""
        mean = self.b0.copy()
        cov = self.Sigma0.copy()
        for _ in range(m):
            mean = self.A @ mean + self.b
            cov = self.A @ cov @ self.A.T + self.Sigma
        return mean, cov

    def sample_path(self, horizon_n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        xs = np.empty((horizon_n + 1, d))
        xs[0] = self.b0 + self._chol_S0 @ rng.standard_normal(d)
        for m in range(1, horizon_n + 1):
            xs[m] = self.A @ xs[m - 1] + self.b + self._chol_S @ rng.standard_normal(d)
        return xs


# ---------------------------------------------------------------------------
# Huber-noise nonlinear signal
# ---------------------------------------------------------------------------

def huber(t: np.ndarray, c: float) -> np.ndarray:
    """Quadratic core / linear tail penalty: t^2/(2c) inside |t| <= c, |t| - c/2 outside."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    return np.where(a <= c, t * t / (2.0 * c), a - 0.5 * c)


def huber_grad(t: np.ndarray, c: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= c, t / c, np.sign(t))


def _huber_log_partition(c: float) -> float:
    """log integral of exp(-huber(t, c)) over the real line.

    Gaussian core of variance c on [-c, c] plus two exponential tails.
    """
    root_c = math.sqrt(c)
    core = math.sqrt(2.0 * math.pi * c) * (2.0 * ndtr(root_c) - 1.0)
    tails = 2.0 * math.exp(-0.5 * c)
    return math.log(core + tails)


def _sample_huber_noise(c: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the density proportional to exp(-huber(t, c)).

    Composition sampling: pick the Gaussian core or an exponential tail by
    its exact mass, then sample that component without rejection (the core
    via the Gaussian quantile restricted to [-c, c]).
    """
    root_c = math.sqrt(c)
    mass_core = math.sqrt(2.0 * math.pi * c) * (2.0 * ndtr(root_c) - 1.0)
    mass_tails = 2.0 * math.exp(-0.5 * c)
    p_core = mass_core / (mass_core + mass_tails)
    u = rng.random(size)
    take_core = u < p_core
    out = np.empty(size)
    n_core = int(np.count_nonzero(take_core))
    if n_core:
        lo = ndtr(-root_c)
        hi = ndtr(root_c)
        v = lo + (hi - lo) * rng.random(n_core)
        out[take_core] = root_c * ndtri(v)
    n_tail = size - n_core
    if n_tail:
        signs = np.where(rng.random(n_tail) < 0.5, -1.0, 1.0)
        out[~take_core] = signs * (c + rng.exponential(size=n_tail))
    return out


@dataclass(frozen=True)
class LinearDrift:
    """Drift A(x) = M x with constant Jacobian M."""

    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", np.atleast_2d(np.asarray(self.M, dtype=float)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.M.T if x.ndim == 2 else self.M @ x

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.M


@dataclass(frozen=True)
class TanhDrift:
    """Coordinate-wise saturating drift A(x) = scale * tanh(x)."""

    scale: float = 0.5

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * np.tanh(x)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.diag(self.scale / np.cosh(x) ** 2)


@dataclass
class HuberNonlinearSignal:
    """x_m = A(x_{m-1}) + b + w_m with Huber-tailed noise, mu proportional
    to exp(-psi0(x)) with the same Huber penalty.

    ``lipschitz_bounds`` is (L_psi, L_grad_psi, L_A, L_grad_A): a bound on
    the noise-penalty gradient norm, its Lipschitz constant, the drift
    Jacobian operator norm and the Jacobian's Lipschitz constant. The
    constructor spot-checks the drift bounds on sampled points.
    """

    drift_map: object
    b: np.ndarray
    huber_c: float
    lipschitz_bounds: tuple[float, float, float, float]
    dim_d: int = 0
    spot_check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.dim_d == 0:
            self.dim_d = self.b.shape[0]
        self.b = np.broadcast_to(self.b, (self.dim_d,)).copy()
        c = float(self.huber_c)
        if c <= 0:
            raise ValueError(f"huber threshold must be positive, got {c}")
        self.huber_c = c
        self.lipschitz_bounds = tuple(float(v) for v in self.lipschitz_bounds)
        if any(v < 0 or not math.isfinite(v) for v in self.lipschitz_bounds):
            raise ValueError("Lipschitz bounds must be finite and nonnegative")
        self._log_z = self.dim_d * _huber_log_partition(c)
        if self.spot_check:
            self._spot_check_bounds()

    def _spot_check_bounds(self, points: int = 16, tol: float = 1e-8):
        L_psi, L_grad_psi, L_A, L_grad_A = self.lipschitz_bounds
        if L_psi + tol < 1.0 or L_grad_psi + tol < 1.0 / self.huber_c:
            raise ValueError(
                "Huber penalty bounds too small: need L_psi >= 1 and "
                f"L_grad_psi >= 1/c = {1.0 / self.huber_c:g}"
            )
        rng = np.random.default_rng(0)
        xs = rng.standard_normal((points, self.dim_d)) * 3.0
        jacs = [np.atleast_2d(self.drift_map.jacobian(x)) for x in xs]
        for J in jacs:
            if np.linalg.norm(J, 2) > L_A + tol:
                raise ValueError("drift Jacobian exceeds the declared L_A at a sampled point")
        for i in range(len(xs) - 1):
            lhs = np.linalg.norm(jacs[i] - jacs[i + 1], 2)
            rhs = L_grad_A * np.linalg.norm(xs[i] - xs[i + 1]) + tol
            if lhs > rhs:
                raise ValueError("drift Jacobian variation exceeds the declared L_grad_A")

    @property
    def dim(self) -> int:
        return self.dim_d

    @property
    def is_diagonal(self) -> bool:
        return False

    def _drift(self, xs: np.ndarray) -> np.ndarray:
        out = self.drift_map(xs)
        return np.asarray(out, dtype=float)

    def log_mu(self, x0: np.ndarray) -> float:
        return -float(np.sum(huber(x0, self.huber_c))) - self._log_z

    def residuals(self, xs: np.ndarray) -> np.ndarray:
        return xs[1:] - self._drift(xs[:-1]) - self.b

    def log_f_sum(self, xs: np.ndarray) -> float:
        n = xs.shape[0] - 1
        if n == 0:
            return 0.0
        W = self.residuals(xs)
        return -float(np.sum(huber(W, self.huber_c))) - n * self._log_z

    def grad_log_transitions(self, xs: np.ndarray) -> np.ndarray:
        G = np.zeros_like(xs)
        if xs.shape[0] > 1:
            W = self.residuals(xs)
            gpsi = huber_grad(W, self.huber_c)
            G[1:] -= gpsi
            # chain through the drift Jacobian, one block at a time
            for m in range(xs.shape[0] - 1):
                J = np.atleast_2d(self.drift_map.jacobian(xs[m]))
                G[m] += J.T @ gpsi[m]
        return G

    def grad_log_prior(self, xs: np.ndarray) -> np.ndarray:
        G = self.grad_log_transitions(xs)
        G[0] += -huber_grad(xs[0], self.huber_c)
        return G

    def grad_log_mu(self, x0: np.ndarray) -> np.ndarray:
        return -huber_grad(x0, self.huber_c)

    def grad_log_f_wrt_next(self, x_prev: np.ndarray, x_next: np.ndarray) -> np.ndarray:
        w = x_next - np.asarray(self.drift_map(x_prev), dtype=float) - self.b
        return -huber_grad(w, self.huber_c)

    def grad_log_f_wrt_prev(self, x_prev: np.ndarray, x_next: np.ndarray) -> np.ndarray:
        w = x_next - np.asarray(self.drift_map(x_prev), dtype=float) - self.b
        J = np.atleast_2d(self.drift_map.jacobian(x_prev))
        return J.T @ huber_grad(w, self.huber_c)

    def marginal_params(self, m: int):
        raise UnsupportedModeError("Huber-noise signals have no closed-form marginals")

    def sample_path(self, horizon_n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim_d
        xs = np.empty((horizon_n + 1, d))
        xs[0] = _sample_huber_noise(self.huber_c, d, rng)
        for m in range(1, horizon_n + 1):
            w = _sample_huber_noise(self.huber_c, d, rng)
            xs[m] = np.asarray(self.drift_map(xs[m - 1]), dtype=float) + self.b + w
        return xs
