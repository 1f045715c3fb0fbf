"""Nonlinear visible-light link: bipolar OOK, Rapp LED with one-tap memory, AWGN.

Symbol convention used throughout the package: bit b maps to s = 2b - 1, so a
positive LLR (``-2 y / sigma_n^2`` > 0) favours bit 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "LinkGeometry",
    "RappModel",
    "bits_to_symbols",
    "channel_llrs",
    "lambertian_gain",
    "mean_signal_power",
    "noise_std_for_snr",
    "rapp",
    "transmit",
]


@dataclass(frozen=True)
class RappModel:
    v_sat: float = 0.4
    p: float = 2.0
    memory_alpha: float = 0.2

    def __post_init__(self):
        if not self.v_sat > 0:
            raise ParameterError(f"v_sat must be positive, got {self.v_sat}")
        if not self.p > 0:
            raise ParameterError(f"knee p must be positive, got {self.p}")
        if not 0.0 <= self.memory_alpha < 1.0:
            raise ParameterError(f"memory alpha must be in [0, 1), got {self.memory_alpha}")


@dataclass(frozen=True)
class LinkGeometry:
    lambertian_order: float = 1.0
    distance: float = 2.0
    irradiance_angle: float = 0.0
    incidence_angle: float = 0.0
    detector_area: float = 1e-4
    field_of_view: float = math.pi / 2


def rapp(model: RappModel, v):
    """AM-AM Rapp curve f(v) = v / (1 + (|v|/v_sat)^(2p))^(1/(2p))."""
    v = np.asarray(v, dtype=np.float64)
    two_p = 2.0 * model.p
    ratio = np.abs(v) / model.v_sat
    # for huge |v| the power overflows; factor it out of the root instead
    with np.errstate(over="ignore"):
        big = ratio > 1e8
        out = np.where(
            big,
            np.sign(v) * model.v_sat / np.power(1.0 + np.power(np.where(big, ratio, 1.0), -two_p), 1.0 / two_p),
            v / np.power(1.0 + np.power(np.where(big, 1.0, ratio), two_p), 1.0 / two_p),
        )
    return out if out.ndim else float(out)


def lambertian_gain(geom: LinkGeometry) -> float:
    if not geom.distance > 0:
        raise ParameterError(f"distance must be positive, got {geom.distance}")
    if not geom.detector_area > 0 or not geom.lambertian_order > 0:
        raise ParameterError("detector area and Lambertian order must be positive")
    if not 0 < geom.field_of_view <= math.pi / 2:
        raise ParameterError("field of view must be in (0, pi/2]")
    if geom.incidence_angle > geom.field_of_view:
        return 0.0
    m = geom.lambertian_order
    return (
        (m + 1.0) / (2.0 * math.pi * geom.distance**2)
        * geom.detector_area
        * math.cos(geom.irradiance_angle) ** m
        * math.cos(geom.incidence_angle)
    )


def bits_to_symbols(bits) -> np.ndarray:
    b = np.asarray(bits)
    if np.any((b != 0) & (b != 1)):
        raise ParameterError("bits must be 0 or 1")
    return 2.0 * b.astype(np.float64) - 1.0


def _drive(symbols: np.ndarray, alpha: float, backoff: float) -> np.ndarray:
    prev = np.zeros_like(symbols)
    prev[..., 1:] = symbols[..., :-1]
    return backoff * (symbols + alpha * prev)


def transmit(bits, model: RappModel | None, h: float, sigma_n: float, seed=None,
             backoff: float = 1.0, rng=None) -> np.ndarray:
    """Pass codeword bits through the channel; rows of a 2-D input are independent words.

    ``model=None`` bypasses the LED entirely (linear AWGN channel y = h s + n).
    ``sigma_n=0`` gives the noiseless output.
    """
    if not h > 0:
        raise ParameterError(f"channel gain must be positive, got {h}")
    if sigma_n < 0:
        raise ParameterError(f"noise std must be nonnegative, got {sigma_n}")
    s = bits_to_symbols(bits)
    if model is None:
        clean = h * s
    else:
        clean = h * rapp(model, _drive(s, model.memory_alpha, backoff))
    if sigma_n == 0:
        return np.asarray(clean, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(seed)
    return clean + sigma_n * rng.standard_normal(s.shape)


def mean_signal_power(model: RappModel | None, backoff: float = 1.0) -> float:
    """E[f(s_i + alpha s_{i-1})^2] for equiprobable i.i.d. bipolar symbols."""
    if model is None:
        return 1.0
    a = model.memory_alpha
    levels = backoff * np.array([1 + a, 1 - a, -1 + a, -1 - a])
    return float(np.mean(rapp(model, levels) ** 2))


def noise_std_for_snr(snr_db: float, model: RappModel | None, h: float = 1.0, backoff: float = 1.0) -> float:
    """Noise std giving electrical SNR h^2 E[f(s)^2] / sigma_n^2 equal to ``snr_db``."""
    snr = 10.0 ** (snr_db / 10.0)
    return math.sqrt(h * h * mean_signal_power(model, backoff) / snr)


def channel_llrs(y, sigma_n_sq: float, clip: float = 50.0) -> np.ndarray:
    """Matched-filter LLRs -2 y / sigma_n^2 (positive favours bit 0), clipped."""
    return np.clip(-2.0 * np.asarray(y, dtype=np.float64) / sigma_n_sq, -clip, clip)
