"""Synthetic LOS/NLOS channel-estimate sequences.

A stand-in for full WINNER II C1/D1 link simulation: the receiver follows a
2-D random walk around a base station, the LOS/NLOS state is redrawn every
``coherence`` steps with probability ``exp(-d / d0)``, and each step yields
per-subcarrier channel estimates (Rician for LOS, Rayleigh for NLOS) with
log-distance path loss.  Ground truth is known by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "BASE_STATION",
    "LOS_DECAY_DISTANCE",
    "LabeledChannelSequence",
    "MobilityTrace",
    "generate_sequence",
    "los_probability",
    "path_gain",
    "random_walk",
    "write_sequence_csv",
]

BASE_STATION = (50.0, 150.0)
LOS_DECAY_DISTANCE = {"C1": 200.0, "D1": 500.0}
SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class MobilityTrace:
    positions: np.ndarray
    base_station: tuple = BASE_STATION
    step_size: float = 1.0

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions - np.asarray(self.base_station), axis=1)


@dataclass(frozen=True)
class LabeledChannelSequence:
    features: np.ndarray  # (T, 2 * n_sc): real parts then imaginary parts
    labels: np.ndarray  # (T,), 1 = NLOS
    scenario: str

    @property
    def n_subcarriers(self) -> int:
        return self.features.shape[1] // 2


@dataclass(frozen=True)
class LinkParameters:
    """Propagation constants; all have defaults so callers override only what they study."""

    pl_exponent_los: float = 2.0
    pl_exponent_nlos: float = 3.5
    reference_distance: float = 10.0
    carrier_hz: float = 5.0e9
    subcarrier_spacing_hz: float = 78_125.0
    base_station: tuple = field(default=BASE_STATION)


def random_walk(start, steps: int, step_size: float = 1.0, seed=None,
                base_station=BASE_STATION) -> MobilityTrace:
    """Start at ``start`` and take ``steps`` moves of fixed length in uniform random directions."""
    if int(steps) < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if not step_size > 0:
        raise ParameterError(f"step_size must be positive, got {step_size}")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * math.pi, int(steps))
    moves = step_size * np.column_stack([np.cos(angles), np.sin(angles)])
    positions = np.vstack([np.asarray(start, dtype=np.float64)[None, :], moves])
    return MobilityTrace(np.cumsum(positions, axis=0), tuple(base_station), float(step_size))


def los_probability(distance: float, scenario: str = "C1"):
    try:
        d0 = LOS_DECAY_DISTANCE[scenario]
    except KeyError:
        raise ParameterError(f"unknown scenario {scenario!r}; expected one of {sorted(LOS_DECAY_DISTANCE)}") from None
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d <= 0):
        raise ParameterError("distance must be positive")
    p = np.exp(-d / d0)
    return p if p.ndim else float(p)


def path_gain(distance, los, link: LinkParameters = LinkParameters()):
    """Mean received power (linear), 0 dB at the reference distance."""
    d = np.maximum(np.asarray(distance, dtype=np.float64), 1.0)
    exponent = np.where(los, link.pl_exponent_los, link.pl_exponent_nlos)
    return (d / link.reference_distance) ** (-exponent)


def generate_sequence(trace: MobilityTrace, scenario: str = "C1", n_sc: int = 100,
                      rician_k: float = 10 ** 0.6, coherence: int = 10, seed=None,
                      link: LinkParameters = LinkParameters()) -> LabeledChannelSequence:
    """Channel estimates along ``trace``.

    ``rician_k`` is linear (default 6 dB) and may be ``inf`` for a purely
    specular LOS component.  The specular phase follows the path delay, so it
    is deterministic given the trace.
    """
    if int(n_sc) < 1 or int(coherence) < 1:
        raise ParameterError("n_sc and coherence must be >= 1")
    if not rician_k > 0:
        raise ParameterError(f"rician_k must be positive, got {rician_k}")
    rng = np.random.default_rng(seed)
    dist = np.linalg.norm(trace.positions - np.asarray(trace.base_station), axis=1)
    steps = dist.size
    p_los = los_probability(np.maximum(dist, 1e-9), scenario)

    labels = np.empty(steps, dtype=np.int8)
    draws = rng.random(steps)
    for t in range(0, steps, int(coherence)):
        labels[t:t + coherence] = 0 if draws[t] < p_los[t] else 1
    los = labels == 0

    diffuse = (rng.standard_normal((steps, n_sc)) + 1j * rng.standard_normal((steps, n_sc))) / math.sqrt(2.0)
    freqs = link.carrier_hz + link.subcarrier_spacing_hz * np.arange(n_sc)
    specular = np.exp(-2j * math.pi * np.outer(dist, freqs) / SPEED_OF_LIGHT)
    if math.isinf(rician_k):
        los_field = specular
    else:
        los_field = math.sqrt(rician_k / (rician_k + 1)) * specular + math.sqrt(1 / (rician_k + 1)) * diffuse
    h = np.where(los[:, None], los_field, diffuse)
    h *= np.sqrt(path_gain(dist, los, link))[:, None]
    features = np.hstack([h.real, h.imag])
    return LabeledChannelSequence(features, labels, scenario)


def write_sequence_csv(seq: LabeledChannelSequence, path) -> None:
    n_sc = seq.n_subcarriers
    header = ["t", "label"] + [f"re_{k}" for k in range(1, n_sc + 1)] + [f"im_{k}" for k in range(1, n_sc + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, (lab, row) in enumerate(zip(seq.labels, seq.features)):
            w.writerow([t, int(lab)] + [repr(float(v)) for v in row])
