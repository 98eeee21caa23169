"""Large-scale fading and ergodic-rate model.

Gains are linear (pathloss times lognormal shadowing). Rates use the high-SNR
form ``N * (theta + log2 P)``; :func:`ergodic_rate_mc` evaluates the exact
Rayleigh expectation for checking that approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .scenario import coverage_mask, sample_user_locations

# below this effective SNR the high-SNR rate is more than ~5% off
HIGH_SNR_FLOOR_DB = 10.0


class InfeasibleRateError(ValueError):
    pass


def pathloss(config, distance):
    d0 = config.pathloss_ref_distance
    return (np.maximum(distance, d0) / d0) ** (-config.pathloss_exponent)


def cache_pathloss(config, geometry):
    return pathloss(config, np.linalg.norm(geometry.cache_centers, axis=1))


def shadowing(config, rng, size):
    return 10.0 ** (rng.normal(0.0, config.shadowing_sigma_db, size) / 10.0)


@dataclass(frozen=True)
class RequestDraw:
    """Large-scale realisation seen by one request."""

    user_location: np.ndarray
    user_pathloss: float
    user_shadowing: np.ndarray  # (N_S,)
    cache_pathloss: np.ndarray  # (N_C,)
    cache_shadowing: np.ndarray  # (N_C, N_S)
    covered: np.ndarray  # (N_C,) bool, user inside cache service disc
    remaining_lifetime: float

    @property
    def user_gain(self):
        return self.user_pathloss * self.user_shadowing

    @property
    def cache_gain(self):
        return self.cache_pathloss[:, None] * self.cache_shadowing

    def with_remaining(self, remaining_lifetime):
        return RequestDraw(self.user_location, self.user_pathloss, self.user_shadowing,
                           self.cache_pathloss, self.cache_shadowing, self.covered,
                           remaining_lifetime)


@dataclass(frozen=True)
class ProactiveDraw:
    cache_pathloss: np.ndarray  # (N_C,)
    cache_shadowing: np.ndarray  # (N_C,)
    opportunity_index: int

    @property
    def cache_gain(self):
        return self.cache_pathloss * self.cache_shadowing


def draw_large_scale(config, geometry, user_location, remaining_lifetime, rng):
    user_location = np.asarray(user_location, dtype=float)
    rho = float(pathloss(config, np.hypot(*user_location)))
    return RequestDraw(
        user_location=user_location,
        user_pathloss=rho,
        user_shadowing=shadowing(config, rng, config.segments),
        cache_pathloss=cache_pathloss(config, geometry),
        cache_shadowing=shadowing(config, rng, (geometry.n_caches, config.segments)),
        covered=coverage_mask(user_location, geometry),
        remaining_lifetime=float(remaining_lifetime),
    )


def draw_proactive(config, geometry, index, rng):
    return ProactiveDraw(cache_pathloss(config, geometry),
                         shadowing(config, rng, geometry.n_caches), index)


@dataclass
class GainSample:
    """Vectorised batch of request draws for Monte Carlo expectations."""

    locations: np.ndarray  # (K, 2)
    user_gain: np.ndarray  # (K, N_S)
    cache_gain: np.ndarray  # (K, N_C, S') for the first S' segments
    covered: np.ndarray  # (K, N_C) bool

    @property
    def size(self):
        return len(self.locations)

    def cyclic_symmetrized(self):
        """Stack every cyclic segment shift so the sample is exchangeable in segments."""
        n_seg = self.user_gain.shape[1]
        if self.cache_gain.shape[2] != n_seg:
            raise ValueError("symmetrization needs cache gains for every segment")
        shifts = range(n_seg)
        return GainSample(
            np.concatenate([self.locations] * n_seg),
            np.concatenate([np.roll(self.user_gain, k, axis=1) for k in shifts]),
            np.concatenate([np.roll(self.cache_gain, k, axis=2) for k in shifts]),
            np.concatenate([self.covered] * n_seg),
        )


def sample_gains(config, geometry, size, rng, cache_segments=None):
    """Draw ``size`` request realisations from the config's user distribution.

    Only the first ``cache_segments`` segments get cache shadowing (all by
    default); value tables need just one by segment symmetry.
    """
    n_seg = config.segments
    cache_segments = n_seg if cache_segments is None else cache_segments
    loc = sample_user_locations(config, rng, size)
    rho = pathloss(config, np.hypot(loc[:, 0], loc[:, 1]))
    user_gain = rho[:, None] * shadowing(config, rng, (size, n_seg))
    rho_c = cache_pathloss(config, geometry)
    cache_gain = rho_c[None, :, None] * shadowing(config, rng, (size, geometry.n_caches, cache_segments))
    return GainSample(loc, user_gain, cache_gain, coverage_mask(loc, geometry))


def theta_offset(n_antennas, noise_power):
    """theta(g) = log2(g) + theta_offset(...)."""
    return float(digamma(n_antennas)) / math.log(2.0) - math.log2(n_antennas * noise_power)


def theta_of_gain(gain, n_antennas, noise_power):
    """E[log2(|h|^2 / (N_T sigma^2))] for |h|^2 ~ Gamma(N_T, gain)."""
    gain = np.asarray(gain, dtype=float)
    if np.any(gain <= 0):
        raise ValueError("gain must be positive")
    out = np.log2(gain) + theta_offset(n_antennas, noise_power)
    return float(out) if out.ndim == 0 else out


def high_snr_rate(power, symbols, theta):
    per_symbol = theta + math.log2(power) if power > 0 else -math.inf
    if per_symbol <= 0:
        raise InfeasibleRateError(f"theta + log2(P) = {per_symbol:.4g} is not positive")
    return symbols * per_symbol


def ergodic_rate_mc(power, symbols, gain, n_antennas, noise_power, samples, rng):
    """N * E[log2(1 + |h|^2 P / (N_T sigma^2))] by Monte Carlo."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    h2 = rng.gamma(n_antennas, gain, size=samples)
    return symbols * float(np.mean(np.log2(1.0 + h2 * power / (n_antennas * noise_power))))


def mean_snr_db(power, gain, noise_power):
    # E|h|^2 = N_T * gain cancels the 1/N_T power split
    return 10.0 * math.log10(power * gain / noise_power)


def high_snr_regime(power, gain, noise_power):
    return mean_snr_db(power, gain, noise_power) >= HIGH_SNR_FLOOR_DB
