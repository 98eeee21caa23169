"""Experiment configuration, cell geometry and requesting-user locations.

The config file is line oriented::

    # comment
    cell_radius = 500
    cache_count = 20
    placement = cell-edge-random        # or: (400,0), (-400,0)
    hotzone = 250,0,90,0.125            # repeatable

Keys map onto :class:`ScenarioConfig` fields through ``FILE_KEYS``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration (bad value or violated invariant)."""


class ConfigParseError(ConfigError):
    """A config line could not be parsed."""


class MissingKeyError(ConfigError):
    """A required config key is absent."""

    def __init__(self, key):
        super().__init__(f"missing required key: {key}")
        self.key = key


@dataclass(frozen=True)
class HotZone:
    x: float
    y: float
    radius: float
    probability: float

    @property
    def center(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ScenarioConfig:
    cell_radius: float
    cache_count: int
    cache_service_radius: float
    antennas: int
    pathloss_exponent: float
    shadowing_sigma_db: float
    noise_power: float
    file_bits: float
    segments: int
    request_rate: float
    lifetime: float
    w_e: float
    w_t: float
    seed: int
    pathloss_ref_distance: float = 1.0
    proactive_period: float | None = None
    learning_threshold: float = 0.0
    proactive_threshold: float = 1.05
    tail_epsilon: float = 1e-9
    replications: int = 100
    # "cell-edge-random" or a tuple of (x, y) centers
    cache_placement: str | tuple = "cell-edge-random"
    hot_zones: tuple = field(default_factory=tuple)
    files: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def bits_per_segment(self):
        return self.file_bits / self.segments

    @property
    def expected_requests(self):
        return self.request_rate * self.lifetime

    @property
    def opportunity_period(self):
        """Proactive period; defaults to 500 opportunities per lifetime."""
        if self.proactive_period is None:
            return self.lifetime / 500.0
        return self.proactive_period

    @property
    def distribution(self):
        return "hot-zone" if self.hot_zones else "uniform"

    def validate(self):
        checks = [
            (self.cell_radius > 0, "cell_radius must be positive"),
            (self.cache_count >= 0, "cache_count must be non-negative"),
            (self.cache_service_radius > 0, "cache_service_radius must be positive"),
            (self.segments >= 1, "segments must be at least 1"),
            (self.antennas >= 1, "antennas must be at least 1"),
            (self.file_bits > 0, "file_bits must be positive"),
            (self.lifetime > 0, "lifetime must be positive"),
            (self.request_rate > 0, "lambda must be positive"),
            (self.w_e > 0, "w_e must be positive"),
            (self.w_t > 0, "w_t must be positive"),
            (self.noise_power > 0, "noise_power must be positive"),
            (self.pathloss_ref_distance > 0, "d0 must be positive"),
            (self.shadowing_sigma_db >= 0, "shadowing_sigma_db must be non-negative"),
            (self.proactive_threshold > 1, "proactive_threshold must exceed 1"),
            (0 < self.tail_epsilon < 1, "tail_epsilon must lie in (0, 1)"),
            (self.replications >= 1, "replications must be at least 1"),
            (self.learning_threshold >= 0, "learning_threshold must be non-negative"),
            (self.files >= 1, "files must be at least 1"),
            (self.proactive_period is None or self.proactive_period > 0,
             "proactive_period must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

        if isinstance(self.cache_placement, str):
            if self.cache_placement != "cell-edge-random":
                raise ConfigError(f"unknown placement {self.cache_placement!r}")
            if self.cache_count > 0 and 2 * self.cache_service_radius > self.cell_radius:
                raise ConfigError("cache_service_radius too large for cell-edge placement")
        else:
            if len(self.cache_placement) != self.cache_count:
                raise ConfigError(
                    f"placement lists {len(self.cache_placement)} centers but cache_count = {self.cache_count}"
                )
            for x, y in self.cache_placement:
                if math.hypot(x, y) > self.cell_radius:
                    raise ConfigError(f"cache center ({x}, {y}) lies outside the cell")

        total = 0.0
        for zone in self.hot_zones:
            if not 0 < zone.probability < 1:
                raise ConfigError("hot-zone probability must lie in (0, 1)")
            if zone.radius <= 0:
                raise ConfigError("hot-zone radius must be positive")
            if math.hypot(zone.x, zone.y) > self.cell_radius:
                raise ConfigError("hot-zone center lies outside the cell")
            total += zone.probability
        if total >= 1:
            raise ConfigError("hot-zone probabilities must sum to less than 1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_value(self, key, value):
        """Copy with one file-level key (e.g. ``lambda``) set to ``value``."""
        name = FILE_KEYS.get(key, key)
        if name not in NUMERIC_FIELDS:
            raise ConfigError(f"{key!r} is not a numeric config key")
        return self.replace(**{name: NUMERIC_FIELDS[name](value)})

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hot_zones"] = [dataclasses.astuple(z) for z in self.hot_zones]
        if not isinstance(self.cache_placement, str):
            d["cache_placement"] = [list(p) for p in self.cache_placement]
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


# file key -> dataclass field
FILE_KEYS = {
    "cell_radius": "cell_radius",
    "cache_count": "cache_count",
    "cache_service_radius": "cache_service_radius",
    "antennas": "antennas",
    "pathloss_exponent": "pathloss_exponent",
    "shadowing_sigma_db": "shadowing_sigma_db",
    "noise_power": "noise_power",
    "file_bits": "file_bits",
    "segments": "segments",
    "lambda": "request_rate",
    "lifetime": "lifetime",
    "w_e": "w_e",
    "w_t": "w_t",
    "seed": "seed",
    "d0": "pathloss_ref_distance",
    "T_p": "proactive_period",
    "proactive_period": "proactive_period",
    "tau": "learning_threshold",
    "tau_prime": "proactive_threshold",
    "tail_epsilon": "tail_epsilon",
    "replications": "replications",
    "files": "files",
}

REQUIRED_KEYS = (
    "cell_radius", "cache_count", "cache_service_radius", "antennas", "pathloss_exponent",
    "shadowing_sigma_db", "noise_power", "file_bits", "segments", "lambda", "lifetime",
    "w_e", "w_t", "seed",
)

NUMERIC_FIELDS = {
    "cell_radius": float,
    "cache_count": int,
    "cache_service_radius": float,
    "antennas": int,
    "pathloss_exponent": float,
    "shadowing_sigma_db": float,
    "noise_power": float,
    "file_bits": float,
    "segments": int,
    "request_rate": float,
    "lifetime": float,
    "w_e": float,
    "w_t": float,
    "seed": int,
    "pathloss_ref_distance": float,
    "proactive_period": float,
    "learning_threshold": float,
    "proactive_threshold": float,
    "tail_epsilon": float,
    "replications": int,
    "files": int,
}

_POINT = re.compile(r"\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)")


def _number(text, kind, key, lineno):
    try:
        if kind is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        return float(text)
    except ValueError:
        raise ConfigParseError(f"line {lineno}: {key} expects a number, got {text!r}") from None


def _parse_points(text, lineno):
    points = [(float(x), float(y)) for x, y in _POINT.findall(text)]
    leftover = _POINT.sub("", text).replace(",", "").strip()
    if not points or leftover:
        raise ConfigParseError(f"line {lineno}: cannot parse point list {text!r}")
    return tuple(points)


def parse_scenario(text):
    """Parse config text into a validated :class:`ScenarioConfig`."""
    values = {}
    zones = []
    placement = "cell-edge-random"
    distribution = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigParseError(f"line {lineno}: empty key or value")
        if key == "hotzone":
            parts = value.split(",")
            if len(parts) != 4:
                raise ConfigParseError(f"line {lineno}: hotzone expects x,y,radius,probability")
            x, y, r, p = (_number(v.strip(), float, key, lineno) for v in parts)
            zones.append(HotZone(x, y, r, p))
        elif key == "placement":
            placement = value if value == "cell-edge-random" else _parse_points(value, lineno)
        elif key == "distribution":
            if value not in ("uniform", "hotzone", "hot-zone"):
                raise ConfigParseError(f"line {lineno}: unknown distribution {value!r}")
            distribution = value
        elif key in FILE_KEYS:
            name = FILE_KEYS[key]
            values[name] = _number(value, NUMERIC_FIELDS[name], key, lineno)
        else:
            raise ConfigParseError(f"line {lineno}: unknown key {key!r}")

    for key in REQUIRED_KEYS:
        if FILE_KEYS[key] not in values:
            raise MissingKeyError(key)
    if distribution == "uniform" and zones:
        raise ConfigError("distribution = uniform conflicts with hotzone lines")
    if distribution in ("hotzone", "hot-zone") and not zones:
        raise ConfigError("distribution = hotzone requires at least one hotzone line")
    return ScenarioConfig(cache_placement=placement, hot_zones=tuple(zones), **values)


def load_scenario(path):
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def dump_scenario(config):
    """Inverse of :func:`parse_scenario` (round-trips every field)."""
    inverse = {v: k for k, v in FILE_KEYS.items() if k != "proactive_period"}
    lines = []
    for name in NUMERIC_FIELDS:
        value = getattr(config, name)
        if value is None:
            continue
        lines.append(f"{inverse[name]} = {value!r}")
    if isinstance(config.cache_placement, str):
        lines.append(f"placement = {config.cache_placement}")
    elif config.cache_placement:
        lines.append("placement = " + ", ".join(f"({x!r},{y!r})" for x, y in config.cache_placement))
    for z in config.hot_zones:
        lines.append(f"hotzone = {z.x!r},{z.y!r},{z.radius!r},{z.probability!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Geometry:
    cache_centers: np.ndarray  # (N_C, 2)
    cache_service_radius: float

    @property
    def n_caches(self):
        return len(self.cache_centers)

    @property
    def overlap_detected(self):
        """True when any two service discs intersect."""
        c = self.cache_centers
        if len(c) < 2:
            return False
        d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        iu = np.triu_indices(len(c), 1)
        return bool(np.any(d[iu] < 2 * self.cache_service_radius))


def place_caches(config, rng):
    """Cache centers: uniform on the cell-edge annulus, or the explicit list."""
    r_svc = config.cache_service_radius
    if not isinstance(config.cache_placement, str):
        centers = np.array(config.cache_placement, dtype=float).reshape(-1, 2)
        if np.any(np.hypot(centers[:, 0], centers[:, 1]) > config.cell_radius):
            raise ConfigError("explicit cache center outside the cell")
        return Geometry(centers, r_svc)
    n = config.cache_count
    inner = config.cell_radius - 2 * r_svc
    outer = config.cell_radius - r_svc
    # area-uniform on the annulus
    radius = np.sqrt(rng.uniform(inner**2, outer**2, size=n))
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    centers = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    return Geometry(centers, r_svc)


def _uniform_disc(rng, center, radius, size):
    r = radius * np.sqrt(rng.random(size))
    a = rng.uniform(0.0, 2 * np.pi, size)
    return np.column_stack([center[0] + r * np.cos(a), center[1] + r * np.sin(a)])


def sample_user_locations(config, rng, size):
    """``size`` i.i.d. requesting-user locations, shape (size, 2)."""
    R = config.cell_radius
    origin = (0.0, 0.0)
    if not config.hot_zones:
        return _uniform_disc(rng, origin, R, size)

    probs = np.array([z.probability for z in config.hot_zones])
    edges = np.cumsum(probs)
    choice = np.searchsorted(edges, rng.random(size), side="right")  # len(zones) = background
    out = np.empty((size, 2))
    background = choice == len(probs)
    out[background] = _uniform_disc(rng, origin, R, int(background.sum()))
    for z_idx, zone in enumerate(config.hot_zones):
        sel = np.flatnonzero(choice == z_idx)
        pts = _uniform_disc(rng, (zone.x, zone.y), zone.radius, len(sel))
        # zone parts outside the cell are resampled
        bad = np.hypot(pts[:, 0], pts[:, 1]) > R
        while bad.any():
            pts[bad] = _uniform_disc(rng, (zone.x, zone.y), zone.radius, int(bad.sum()))
            bad = np.hypot(pts[:, 0], pts[:, 1]) > R
        out[sel] = pts
    return out


def sample_user_location(config, rng):
    return sample_user_locations(config, rng, 1)[0]


def coverage_mask(points, geometry):
    """Boolean (..., N_C) matrix: point within (closed) service disc of cache."""
    points = np.asarray(points, dtype=float)
    if geometry.n_caches == 0:
        return np.zeros(points.shape[:-1] + (0,), dtype=bool)
    d = np.linalg.norm(points[..., None, :] - geometry.cache_centers, axis=-1)
    return d <= geometry.cache_service_radius


def coverage_caches(point, geometry):
    return {int(i) for i in np.flatnonzero(coverage_mask(point, geometry))}
