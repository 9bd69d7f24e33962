"""Observation likelihood families.

Each family exposes the same array-level interface:

``log_terms(xs, ys, t0)``
    per-index log g(x_m, y_m) for a contiguous run of time indices
    starting at absolute index ``t0`` (only the factor model cares about
    the offset, through its stored factor series);
``grad(xs, ys, t0)``
    the block gradients of those terms with respect to x_m;
``sample(xs, t0, rng)``
    observation draws given a state path.

``ys`` is the matching observation slice: an (len, p) array for vector
emissions, or an (len, R, N) binary array for the spiking families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import CertificationError, ShapeError

__all__ = [
    "GaussianEmission",
    "StudentTEmission",
    "StochVolFactor",
    "NeuralPseudo",
    "NeuralExact",
    "neural_pseudo_field",
    "pair_index",
    "pair_list",
    "coupling_matrix",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _is_diagonal(M: np.ndarray) -> bool:
    return np.count_nonzero(M - np.diag(np.diag(M))) == 0


class GaussianEmission:
    """y_m = C x_m + N(0, R) noise. The conjugate, oracle-checkable family."""

    def __init__(self, C, R):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        p = self.C.shape[0]
        if self.R.shape != (p, p):
            raise CertificationError(f"R must be {p}x{p}, got {self.R.shape}")
        if not np.allclose(self.R, self.R.T, rtol=1e-10, atol=1e-12):
            raise CertificationError("R must be symmetric")
        try:
            self._chol_R = np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError as exc:
            raise CertificationError("R is not positive definite") from exc
        self._logdet_R = 2.0 * float(np.sum(np.log(np.diag(self._chol_R))))
        self.R_inv = np.linalg.inv(self.R)
        self.RinvC = self.R_inv @ self.C          # used directly by gradients
        self.CtRinvC = self.C.T @ self.RinvC
        self._diag = self.C.shape[0] == self.C.shape[1] and _is_diagonal(self.C) and _is_diagonal(self.R)
        if self._diag:
            self._c_d = np.diag(self.C).copy()
            self._ri_d = np.diag(self.R_inv).copy()

    @property
    def obs_dim(self) -> int:
        return self.C.shape[0]

    def state_dim(self) -> int | None:
        return self.C.shape[1]

    def residuals(self, xs, ys):
        if self._diag:
            return ys - xs * self._c_d
        return ys - xs @ self.C.T

    def log_terms(self, xs, ys, t0=0):
        r = self.residuals(xs, ys)
        if self._diag:
            q = np.sum(r * r * self._ri_d, axis=1)
        else:
            q = np.einsum("mp,mp->m", r @ self.R_inv, r)
        return -0.5 * (q + self._logdet_R + self.obs_dim * _LOG_2PI)

    def grad(self, xs, ys, t0=0):
        r = self.residuals(xs, ys)
        if self._diag:
            return r * self._ri_d * self._c_d
        return r @ self.RinvC

    def sample(self, xs, t0, rng):
        noise = rng.standard_normal((xs.shape[0], self.obs_dim)) @ self._chol_R.T
        return xs @ self.C.T + noise


@dataclass(frozen=True)
class StudentTEmission:
    """Heavy-tailed per-coordinate emission centered at the state.

    Each coordinate of y - x follows a Student t with ``dof`` degrees of
    freedom (dof = 1 is the Cauchy case).
    """

    dof: float = 1.0

    def __post_init__(self):
        if not self.dof > 0:
            raise ValueError(f"dof must be positive, got {self.dof}")

    def _log_const(self, d: int) -> float:
        v = self.dof
        per = math.lgamma((v + 1) / 2) - math.lgamma(v / 2) - 0.5 * math.log(v * math.pi)
        return d * per

    def state_dim(self) -> int | None:
        return None  # matches any d; obs dim equals state dim

    def log_terms(self, xs, ys, t0=0):
        v = self.dof
        r = ys - xs
        return -0.5 * (v + 1) * np.sum(np.log1p(r * r / v), axis=1) + self._log_const(xs.shape[1])

    def grad(self, xs, ys, t0=0):
        v = self.dof
        r = ys - xs
        return (v + 1) * r / (v + r * r)

    def sample(self, xs, t0, rng):
        return xs + rng.standard_t(self.dof, size=xs.shape)


class StochVolFactor:
    """Factor-model likelihood with the state as per-asset log variances.

    Returns y_m = B z_m + exp(x_m/2) * standard normal noise, with observed
    factors z_m. The state dimension equals the asset count d.
    """

    def __init__(self, B, factors):
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.factors = np.atleast_2d(np.asarray(factors, dtype=float))
        if self.factors.shape[1] != self.B.shape[1]:
            raise ShapeError(
                f"factor dim {self.factors.shape[1]} does not match B columns {self.B.shape[1]}"
            )
        self.factor_means = self.factors @ self.B.T  # B z_m, one row per time index

    @property
    def obs_dim(self) -> int:
        return self.B.shape[0]

    def state_dim(self) -> int | None:
        return self.B.shape[0]

    def _check_range(self, t0, length):
        if t0 + length > self.factor_means.shape[0]:
            raise ShapeError(
                f"factors cover {self.factor_means.shape[0]} indices, "
                f"need {t0 + length}"
            )

    def log_terms(self, xs, ys, t0=0):
        self._check_range(t0, xs.shape[0])
        r = ys - self.factor_means[t0 : t0 + xs.shape[0]]
        d = xs.shape[1]
        return -0.5 * (np.sum(xs, axis=1) + np.sum(r * r * np.exp(-xs), axis=1) + d * _LOG_2PI)

    def grad(self, xs, ys, t0=0):
        self._check_range(t0, xs.shape[0])
        r = ys - self.factor_means[t0 : t0 + xs.shape[0]]
        return 0.5 * (r * r * np.exp(-xs) - 1.0)

    def sample(self, xs, t0, rng):
        self._check_range(t0, xs.shape[0])
        eps = rng.standard_normal(xs.shape)
        return self.factor_means[t0 : t0 + xs.shape[0]] + np.exp(0.5 * xs) * eps

    def sliced(self, t1):
        """Copy with the factor series truncated to the first t1 indices."""
        return StochVolFactor(self.B, self.factors[:t1])


# ---------------------------------------------------------------------------
# Pairwise neural coupling families
# ---------------------------------------------------------------------------

def pair_list(N: int) -> np.ndarray:
    """Ordered pairs (i, j), i < j, matching the flat coupling layout."""
    return np.array([(i, j) for i in range(N) for j in range(i + 1, N)], dtype=int)


def pair_index(i: int, j: int, N: int) -> int:
    """Flat index of coupling (i, j) with i < j."""
    if not (0 <= i < j < N):
        raise IndexError(f"need 0 <= i < j < N, got ({i}, {j}) with N={N}")
    return i * N - i * (i + 1) // 2 + (j - i - 1)


def coupling_matrix(x: np.ndarray, N: int) -> np.ndarray:
    """Symmetric zero-diagonal coupling matrix from the flat vector x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != N * (N - 1) // 2:
        raise ShapeError(f"coupling vector must have length N(N-1)/2 = {N * (N - 1) // 2}")
    X = np.zeros((N, N))
    iu = np.triu_indices(N, k=1)
    X[iu] = x
    return X + X.T


def _flat_upper(M: np.ndarray) -> np.ndarray:
    return M[np.triu_indices(M.shape[0], k=1)]


class _NeuralBase:
    """Shared storage/validation for the spiking-coupling families."""

    def __init__(self, N, R, rates_c=None, spikes=None):
        self.N = int(N)
        self.R = int(R)
        if self.N < 2 or self.R < 1:
            raise ShapeError("need at least two neurons and one trial")
        spikes = np.asarray(spikes, dtype=float)
        if spikes.ndim != 3 or spikes.shape[1] != self.R or spikes.shape[2] != self.N:
            raise ShapeError(
                f"spikes must be (time, R={self.R}, N={self.N}), got {spikes.shape}"
            )
        if not np.all((spikes == 0.0) | (spikes == 1.0)):
            raise ShapeError("spikes must be a 0/1 array")
        self.spikes = spikes
        if rates_c is None:
            rates_c = spikes.mean(axis=(0, 1))
        self.rates_c = np.asarray(rates_c, dtype=float).reshape(-1)
        if self.rates_c.shape[0] != self.N:
            raise ShapeError("rates_c must have one entry per neuron")
        if np.any(self.rates_c < 0.0) or np.any(self.rates_c > 1.0):
            raise ShapeError("rates_c entries must lie in [0, 1]")

    @property
    def d(self) -> int:
        return self.N * (self.N - 1) // 2

    def state_dim(self) -> int | None:
        return self.d

    @property
    def n_times(self) -> int:
        return self.spikes.shape[0]

    def centered(self, t0, length):
        if t0 + length > self.n_times:
            raise ShapeError(f"spikes cover {self.n_times} bins, need {t0 + length}")
        return self.spikes[t0 : t0 + length] - self.rates_c

    def sliced(self, t1):
        return type(self)(self.N, self.R, rates_c=self.rates_c, spikes=self.spikes[:t1])


class NeuralPseudo(_NeuralBase):
    """Pseudo-likelihood for pairwise spike coupling.

    Each neuron/trial factor is exp(y z) / (1 + exp(y z)) where z is the
    local field of the neuron given the other neurons' centered spikes.
    """

    def fields(self, x_n, spikes_n):
        """Local fields z, shape (R, N), for one time bin."""
        X = coupling_matrix(x_n, self.N)
        yc = spikes_n - self.rates_c
        return (yc @ X) / self.R

    def log_terms(self, xs, ys, t0=0):
        out = np.empty(xs.shape[0])
        for m in range(xs.shape[0]):
            z = self.fields(xs[m], ys[m])
            yz = ys[m] * z
            out[m] = float(np.sum(yz - np.logaddexp(0.0, yz)))
        return out

    def grad(self, xs, ys, t0=0):
        out = np.empty((xs.shape[0], self.d))
        for m in range(xs.shape[0]):
            z = self.fields(xs[m], ys[m])
            yc = ys[m] - self.rates_c
            D = ys[m] * (1.0 - expit(ys[m] * z))  # (R, N)
            M = D.T @ yc
            out[m] = _flat_upper(M + M.T) / self.R
        return out

    def sample(self, xs, t0, rng):
        return _sample_exact_field(self, xs, rng)


class NeuralExact(_NeuralBase):
    """Exactly normalized pairwise spike-coupling likelihood.

    The per-configuration normalizer is computed by enumerating all 2^N
    spike patterns, so construction is capped at N <= 10.
    """

    MAX_NEURONS = 10

    def __init__(self, N, R, rates_c=None, spikes=None):
        if int(N) > self.MAX_NEURONS:
            raise ShapeError(
                f"exact normalizer is limited to N <= {self.MAX_NEURONS} neurons, got {N}"
            )
        super().__init__(N, R, rates_c=rates_c, spikes=spikes)
        self._configs = _enumerate_configs(self.N)
        self._configs_centered = self._configs - self.rates_c

    def config_energies(self, x_n):
        """Pairwise energy of every spike configuration under coupling x_n."""
        X = coupling_matrix(x_n, self.N)
        Ec = self._configs_centered
        return 0.5 * np.einsum("ci,ci->c", Ec @ X, Ec)

    def log_normalizer(self, x_n) -> float:
        return float(logsumexp(self.config_energies(x_n)))

    def normalizer_grad(self, x_n) -> np.ndarray:
        """Gradient of the log normalizer: the centered pair-product mean
        under the configuration distribution."""
        e = self.config_energies(x_n)
        p = np.exp(e - logsumexp(e))
        Ec = self._configs_centered
        M = Ec.T @ (p[:, None] * Ec)
        return _flat_upper(M)

    def _suff(self, spikes_n):
        yc = spikes_n - self.rates_c
        return _flat_upper(yc.T @ yc) / self.R

    def log_terms(self, xs, ys, t0=0):
        out = np.empty(xs.shape[0])
        for m in range(xs.shape[0]):
            out[m] = float(xs[m] @ self._suff(ys[m])) - self.log_normalizer(xs[m])
        return out

    def grad(self, xs, ys, t0=0):
        out = np.empty((xs.shape[0], self.d))
        for m in range(xs.shape[0]):
            out[m] = self._suff(ys[m]) - self.normalizer_grad(xs[m])
        return out

    def sample(self, xs, t0, rng):
        return _sample_exact_field(self, xs, rng)


def _enumerate_configs(N: int) -> np.ndarray:
    ints = np.arange(2 ** N, dtype=np.int64)
    return ((ints[:, None] >> np.arange(N)) & 1).astype(float)


def _sample_exact_field(family, xs, rng):
    """Draw spikes from the exactly normalized pairwise field, per trial.

    Pseudo-likelihoods are not generative, so both spiking families sample
    from the exact field; this keeps the N <= 10 enumeration cap.
    """
    N = family.N
    if N > NeuralExact.MAX_NEURONS:
        raise ShapeError(
            f"spike simulation enumerates configurations and needs N <= "
            f"{NeuralExact.MAX_NEURONS}, got {N}"
        )
    configs = _enumerate_configs(N)
    centered = configs - family.rates_c
    T = xs.shape[0]
    out = np.empty((T, family.R, N))
    for m in range(T):
        X = coupling_matrix(xs[m], N)
        e = 0.5 * np.einsum("ci,ci->c", centered @ X, centered)
        p = np.exp(e - logsumexp(e))
        p /= p.sum()
        picks = rng.choice(configs.shape[0], size=family.R, p=p)
        out[m] = configs[picks]
    return out


def neural_pseudo_field(model: NeuralPseudo, x_n, index_n: int, trial_k: int) -> np.ndarray:
    """Per-neuron fields z for one time bin and trial of the pseudo-likelihood."""
    if not 0 <= index_n < model.n_times:
        raise IndexError(f"time index {index_n} outside 0..{model.n_times - 1}")
    if not 0 <= trial_k < model.R:
        raise IndexError(f"trial index {trial_k} outside 0..{model.R - 1}")
    z = model.fields(np.asarray(x_n, dtype=float), model.spikes[index_n])
    return z[trial_k]
