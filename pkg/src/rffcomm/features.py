"""Random Fourier feature maps for the real Gaussian kernel.

Two variants share one sampled map:

* classical features ``sqrt(2/n_G) * cos(omega_i . x + b_i)`` whose inner
  products estimate ``exp(-|a-b|^2 / (2 sigma^2))``;
* distribution-dependent (smoothed) features, the classical ones damped
  component-wise by ``exp(-lambda^2 |omega_i|^2 / 2)``.  Their inner products
  estimate the Parzen-smoothed kernel

      (sigma^2 / (sigma^2 + 2 lambda^2))^(n/2)
          * exp(-|a-b|^2 / (2 (sigma^2 + 2 lambda^2)))

  which is what :func:`smoothed_gaussian_kernel` returns.

Inputs may be a single vector of shape ``(n,)`` or a stack ``(N, n)``; the
output keeps the same leading shape.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError, ParameterError

__all__ = [
    "FourierFeatureMap",
    "KernelErrorReport",
    "SmoothingState",
    "damping_factors",
    "ddrff_transform",
    "gaussian_kernel",
    "kernel_approx_error",
    "new_smoothing_state",
    "rff_transform",
    "sample_feature_map",
    "silverman_bandwidth",
    "smoothed_gaussian_kernel",
    "update_smoothed_mean",
]

TWO_PI = 2.0 * math.pi
_HEADER = struct.Struct("<qqd")


@dataclass(frozen=True, eq=False)
class FourierFeatureMap:
    """Frozen frequencies ``omegas`` (n_features x n_input) and phases ``biases``."""

    omegas: np.ndarray
    biases: np.ndarray
    sigma: float

    def __post_init__(self):
        omegas = np.array(self.omegas, dtype=np.float64, order="C")
        biases = np.array(self.biases, dtype=np.float64)
        if omegas.ndim != 2 or omegas.shape[0] < 1 or omegas.shape[1] < 1:
            raise ParameterError(f"omegas must be a nonempty 2-D array, got shape {omegas.shape}")
        if biases.shape != (omegas.shape[0],):
            raise ParameterError(
                f"biases shape {biases.shape} does not match {omegas.shape[0]} features"
            )
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if np.any(biases < 0) or np.any(biases >= TWO_PI):
            raise ParameterError("biases must lie in [0, 2*pi)")
        omegas.setflags(write=False)
        biases.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n_input(self) -> int:
        return self.omegas.shape[1]

    @property
    def n_features(self) -> int:
        return self.omegas.shape[0]

    def to_bytes(self) -> bytes:
        """Flat little-endian record: header, row-major omegas, then biases."""
        header = _HEADER.pack(self.n_input, self.n_features, self.sigma)
        return header + self.omegas.astype("<f8").tobytes() + self.biases.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FourierFeatureMap":
        if len(data) < _HEADER.size:
            raise ParameterError("feature-map record is truncated")
        n_input, n_features, sigma = _HEADER.unpack_from(data)
        n_om = n_input * n_features
        expected = _HEADER.size + 8 * (n_om + n_features)
        if len(data) != expected:
            raise ParameterError(f"feature-map record has {len(data)} bytes, expected {expected}")
        values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        omegas = values[:n_om].reshape(n_features, n_input)
        return cls(omegas=omegas, biases=values[n_om:], sigma=sigma)


def sample_feature_map(n_input: int, n_features: int, sigma: float, seed) -> FourierFeatureMap:
    """Draw omega_i ~ N(0, I / sigma^2) and b_i ~ U[0, 2 pi)."""
    if int(n_input) < 1 or int(n_features) < 1:
        raise ParameterError(f"dimensions must be >= 1, got n_input={n_input}, n_features={n_features}")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    omegas = rng.standard_normal((int(n_features), int(n_input))) / sigma
    biases = rng.uniform(0.0, TWO_PI, int(n_features))
    # uniform() is half-open in theory; guard the rounding edge anyway
    biases[biases >= TWO_PI] = 0.0
    return FourierFeatureMap(omegas=omegas, biases=biases, sigma=sigma)


def _as_inputs(fmap: FourierFeatureMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != fmap.n_input:
        raise ParameterError(f"input shape {x.shape} incompatible with map input dimension {fmap.n_input}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("input contains non-finite values")
    return x


def rff_transform(fmap: FourierFeatureMap, x) -> np.ndarray:
    x = _as_inputs(fmap, x)
    scale = math.sqrt(2.0 / fmap.n_features)
    return scale * np.cos(x @ fmap.omegas.T + fmap.biases)


def damping_factors(fmap: FourierFeatureMap, lam: float) -> np.ndarray:
    """Per-component low-pass weights exp(-lam^2 |omega_i|^2 / 2), all in (0, 1]."""
    if not (lam > 0 and math.isfinite(lam)):
        raise ParameterError(f"lambda must be positive, got {lam}")
    sq = np.einsum("ij,ij->i", fmap.omegas, fmap.omegas)
    return np.exp(-0.5 * lam * lam * sq)


def ddrff_transform(fmap: FourierFeatureMap, lam: float, x, damping=None) -> np.ndarray:
    """Distribution-dependent features; pass a precomputed ``damping`` to skip recomputing it."""
    d = damping_factors(fmap, lam) if damping is None else damping
    return rff_transform(fmap, x) * d


def gaussian_kernel(a, b, sigma: float):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ParameterError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    sq = np.sum((a - b) ** 2, axis=-1)
    return np.exp(-sq / (2.0 * sigma * sigma))


def smoothed_gaussian_kernel(a, b, sigma: float, lam: float):
    """Target kernel of the damped features; reduces to the Gaussian kernel at lam=0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ParameterError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not sigma > 0 or lam < 0:
        raise ParameterError("need sigma > 0 and lambda >= 0")
    n = a.shape[-1]
    width_sq = sigma * sigma + 2.0 * lam * lam
    sq = np.sum((a - b) ** 2, axis=-1)
    return (sigma * sigma / width_sq) ** (n / 2.0) * np.exp(-sq / (2.0 * width_sq))


def silverman_bandwidth(samples) -> float:
    """Multivariate Silverman rule, lam = s * (4 / ((n + 2) N))^(1 / (n + 4)).

    ``s`` is the mean of the per-coordinate sample standard deviations.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ParameterError(f"samples must be a list of vectors, got shape {x.shape}")
    n_samples, dim = x.shape
    if n_samples < 2:
        raise InsufficientDataError(f"Silverman's rule needs at least 2 samples, got {n_samples}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples contain non-finite values")
    spread = float(np.mean(np.std(x, axis=0, ddof=1)))
    if spread <= 0.0:
        raise DegenerateDataError("samples have zero variance")
    return spread * (4.0 / ((dim + 2) * n_samples)) ** (1.0 / (dim + 4))


@dataclass(frozen=True)
class SmoothingState:
    """Running Parzen-smoothed feature statistics.

    ``batch_index`` is the index ``i`` of the next batch to be absorbed, so a
    fresh state starts at 1.
    """

    lam: float
    s_accum: np.ndarray
    mu: np.ndarray
    nu: float = 0.0
    batch_index: int = 1
    batch_size: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.nu <= 1.0:
            raise ParameterError(f"forgetting factor must be in [0, 1], got {self.nu}")
        if self.batch_index < 1 or self.batch_size < 1:
            raise ParameterError("batch_index and batch_size must be >= 1")
        s = np.array(self.s_accum, dtype=np.float64)
        mu = np.array(self.mu, dtype=np.float64)
        if s.ndim != 1 or s.shape != mu.shape:
            raise ParameterError("s_accum and mu must be vectors of equal length")
        s.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "s_accum", s)
        object.__setattr__(self, "mu", mu)


def new_smoothing_state(fmap: FourierFeatureMap, lam: float, batch_size: int, nu: float = 0.0) -> SmoothingState:
    zeros = np.zeros(fmap.n_features)
    return SmoothingState(lam=lam, s_accum=zeros, mu=zeros, nu=nu, batch_index=1, batch_size=batch_size)


def update_smoothed_mean(state: SmoothingState, fmap: FourierFeatureMap, batch) -> SmoothingState:
    """Absorb one batch of M observations into the running statistic.

    S := ((i-1)/i) S + (1/i) d * (sqrt(2 pi lam^2) / M) * sum_j cos(omega . x_j + b),
    mu := nu * mu + S.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ParameterError("batch is empty")
    if x.shape[0] != state.batch_size:
        raise ParameterError(f"batch has {x.shape[0]} samples, state expects {state.batch_size}")
    if state.s_accum.shape[0] != fmap.n_features:
        raise ParameterError("state length does not match the feature map")
    x = _as_inputs(fmap, x)
    i = state.batch_index
    lam = state.lam
    phases = np.cos(x @ fmap.omegas.T + fmap.biases).sum(axis=0)
    contrib = damping_factors(fmap, lam) * math.sqrt(TWO_PI * lam * lam) / x.shape[0] * phases
    s_new = ((i - 1) / i) * state.s_accum + contrib / i
    mu_new = state.nu * state.mu + s_new
    return replace(state, s_accum=s_new, mu=mu_new, batch_index=i + 1)


@dataclass(frozen=True)
class KernelErrorReport:
    n_features: int
    mean_abs_error: float
    max_abs_error: float
    variance_of_estimate: float
    n_pairs: int


def kernel_approx_error(fmap: FourierFeatureMap, pairs, lam: float | None = None) -> KernelErrorReport:
    """Compare feature inner products with their analytical target over ``pairs``.

    ``pairs`` has shape (P, 2, n).  With ``lam=None`` the classical features are
    scored against the Gaussian kernel; otherwise the damped features are
    scored against :func:`smoothed_gaussian_kernel`.  ``variance_of_estimate``
    is the variance of the signed errors across pairs.
    """
    p = np.asarray(pairs, dtype=np.float64)
    if p.ndim != 3 or p.shape[1] != 2 or p.shape[0] == 0:
        raise ParameterError(f"pairs must have shape (P, 2, n) with P >= 1, got {p.shape}")
    a, b = p[:, 0, :], p[:, 1, :]
    if lam is None:
        za, zb = rff_transform(fmap, a), rff_transform(fmap, b)
        target = gaussian_kernel(a, b, fmap.sigma)
    else:
        d = damping_factors(fmap, lam)
        za, zb = ddrff_transform(fmap, lam, a, d), ddrff_transform(fmap, lam, b, d)
        target = smoothed_gaussian_kernel(a, b, fmap.sigma, lam)
    err = np.einsum("ij,ij->i", za, zb) - target
    abs_err = np.abs(err)
    return KernelErrorReport(
        n_features=fmap.n_features,
        mean_abs_error=float(abs_err.mean()),
        max_abs_error=float(abs_err.max()),
        variance_of_estimate=float(err.var()),
        n_pairs=p.shape[0],
    )
