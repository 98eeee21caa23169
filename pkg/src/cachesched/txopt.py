"""Per-segment transmit power / symbol-count optimisation.

Minimises ``w_e*P*N + w_t*N`` subject to ``N*(theta + log2 P) = bits``. The
minimiser is ``P* = w_t / (w_e * W(2**theta * w_t / (e * w_e)))`` with W the
principal Lambert-W branch; :func:`oracle_min_cost` reaches the same point
by direct numerical search and exists only for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .radio import theta_offset

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def lambert_w0(x):
    """Principal branch of the Lambert-W function for ``x >= 0``."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("lambert_w0 is defined here only for x >= 0")
    with np.errstate(divide="ignore"):
        w = kernels.lambert_w0_log(np.log(arr))
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class SegmentCostSolution:
    power: float
    symbols: float
    cost: float
    w_e: float = 1.0
    w_t: float = 1.0

    @property
    def energy_term(self):
        return self.w_e * self.power * self.symbols

    @property
    def time_term(self):
        return self.w_t * self.symbols


def segment_min_cost(theta, w_e, w_t, bits):
    power, symbols, cost = kernels.segment_cost(np.array([float(theta)]), w_e, w_t, bits)
    # theta + log2 P* = (W + 1)/ln 2 > log2 e, so the rate is always feasible
    assert theta + math.log2(power[0]) > math.log2(math.e) * (1 - 1e-12)
    return SegmentCostSolution(float(power[0]), float(symbols[0]), float(cost[0]), w_e, w_t)


def _objective(log_p, theta, w_e, w_t, bits):
    p = math.exp(log_p)
    rate = theta + log_p / math.log(2.0)
    if rate <= 0:
        return math.inf
    return (w_e * p + w_t) * bits / rate


def oracle_min_cost(theta, w_e, w_t, bits, lo=1e-9, hi=1e9, rtol=1e-10):
    """Golden-section search over log P of the same objective."""
    a, b = math.log(lo), math.log(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = _objective(c, theta, w_e, w_t, bits)
    fd = _objective(d, theta, w_e, w_t, bits)
    while (b - a) > rtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = _objective(c, theta, w_e, w_t, bits)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = _objective(d, theta, w_e, w_t, bits)
    power = math.exp(0.5 * (a + b))
    symbols = bits / (theta + math.log2(power))
    return SegmentCostSolution(power, symbols, (w_e * power + w_t) * symbols, w_e, w_t)


def stationarity_residual(theta, power, w_e, w_t):
    """First-order condition of the per-segment objective at ``power``."""
    return w_e * (theta + math.log2(power)) - (w_e * power + w_t) / (power * math.log(2.0))


@dataclass(frozen=True)
class CostModel:
    """Everything needed to price one segment transmission to a given gain."""

    n_antennas: int
    noise_power: float
    w_e: float
    w_t: float
    bits: float

    @classmethod
    def from_config(cls, config):
        return cls(config.antennas, config.noise_power, config.w_e, config.w_t, config.bits_per_segment)

    @property
    def theta_const(self):
        return theta_offset(self.n_antennas, self.noise_power)

    def theta(self, gain):
        return np.log2(gain) + self.theta_const

    def solve(self, gain):
        return segment_min_cost(float(self.theta(gain)), self.w_e, self.w_t, self.bits)

    def cost(self, gain):
        """Minimal segment cost, elementwise over an array of gains."""
        gain = np.asarray(gain, dtype=float)
        return kernels.segment_cost(self.theta(gain), self.w_e, self.w_t, self.bits)[2]

    def params(self):
        return {"n_antennas": self.n_antennas, "noise_power": self.noise_power,
                "w_e": self.w_e, "w_t": self.w_t, "bits": self.bits}
