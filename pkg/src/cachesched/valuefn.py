"""Approximated value functions for the per-file random-stage MDP.

Two families of reference values are tabulated per remaining-request count m:

* ``v_star[m]``: every cache holds the whole file.
* ``v_missing[m, i]``: only cache ``i`` lacks one segment (segment index
  dropped, shadowing is i.i.d. across segments).

Any other buffer state is approximated by adding one penalty
``v_missing[m, i] - v_star[m]`` per missing (cache, segment) pair. Tiny
instances can be solved exactly by :func:`exact_value_iteration`, which
enumerates every buffer state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from . import kernels
from .radio import sample_gains
from .scenario import ConfigError
from .txopt import CostModel

TABLE_FORMAT = "cachesched-value-table 1"
MIN_MC_SAMPLES = 100
EXACT_MAX_CACHES = 3
EXACT_MAX_SEGMENTS = 2
EXACT_MAX_STAGES = 6


class InstanceTooLarge(ValueError):
    pass


# --- Poisson helpers -------------------------------------------------------

def poisson_pmf(n_max, mean):
    """pmf(N; mean) for N = 0..n_max."""
    n = np.arange(n_max + 1)
    if mean <= 0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    return np.exp(n * math.log(mean) - mean - gammaln(n + 1))


def poisson_truncation(lam, T, tail_epsilon):
    """Smallest N_max whose neglected first-moment tail sum_{N > N_max} N pmf(N) is below epsilon.

    Table entries grow linearly in N, so this bounds the mixture truncation
    error by epsilon times the per-request cost; the plain pmf tail is smaller
    still.
    """
    if not 0 < tail_epsilon < 1:
        raise ValueError("tail_epsilon must lie in (0, 1)")
    mean = lam * T
    if mean <= 0:
        return 0

    def tail(n):
        # E[N; N > n] = mean * P(N >= n)
        return mean * poisson.sf(n - 1, mean)

    n = int(mean)
    while tail(n) >= tail_epsilon:
        n += 1
    while n > 0 and tail(n - 1) < tail_epsilon:
        n -= 1
    return n


# --- buffer state ----------------------------------------------------------

class ReducedState:
    """Cache-buffer bitmap for one file: ``bits[c, s]`` is True when cache c holds segment s."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        bits = np.array(bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("state bits must be an (N_C, N_S) matrix")
        bits.setflags(write=False)
        self.bits = bits

    @classmethod
    def empty(cls, n_caches, n_segments):
        return cls(np.zeros((n_caches, n_segments), dtype=bool))

    @classmethod
    def full(cls, n_caches, n_segments):
        return cls(np.ones((n_caches, n_segments), dtype=bool))

    @classmethod
    def missing_one(cls, n_caches, n_segments, cache, segment):
        bits = np.ones((n_caches, n_segments), dtype=bool)
        bits[cache, segment] = False
        return cls(bits)

    @classmethod
    def from_index(cls, index, n_caches, n_segments):
        flat = [(index >> k) & 1 for k in range(n_caches * n_segments)]
        return cls(np.array(flat, dtype=bool).reshape(n_caches, n_segments))

    @property
    def shape(self):
        return self.bits.shape

    @property
    def index(self):
        flat = self.bits.ravel()
        return int(np.sum(flat.astype(np.int64) << np.arange(flat.size, dtype=np.int64)))

    @property
    def is_full(self):
        return bool(self.bits.all())

    def missing_pairs(self):
        return [(int(c), int(s)) for c, s in zip(*np.nonzero(~self.bits))]

    def missing_counts(self):
        return (~self.bits).sum(axis=1)

    def with_filled(self, caches, segment):
        bits = self.bits.copy()
        bits[list(caches), segment] = True
        return ReducedState(bits)

    def issuperset(self, other):
        return bool(np.all(self.bits >= other.bits))

    def __eq__(self, other):
        return isinstance(other, ReducedState) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.shape, self.index))

    def __repr__(self):
        rows = ["".join("1" if b else "0" for b in row) for row in self.bits]
        return f"ReducedState({'|'.join(rows)})"

    def label(self):
        return "|".join("".join("1" if b else "0" for b in row) for row in self.bits)


# --- value table -----------------------------------------------------------

@dataclass
class ValueTable:
    v_star: np.ndarray  # (N_max + 1,), v_star[0] = 0
    v_missing: np.ndarray  # (N_max + 1, N_C), row 0 = 0
    unit_cost: float
    model: CostModel
    provenance: str = "analytic-mc"
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self):
        return len(self.v_star) - 1

    @property
    def n_caches(self):
        return self.v_missing.shape[1]

    @property
    def penalty_matrix(self):
        """``v_missing[m, i] - v_star[m]``."""
        return self.v_missing - self.v_star[:, None]

    def penalties(self, lam, remaining):
        """Poisson-mixed penalty of every cache missing one segment."""
        pmf = poisson_pmf(self.n_max, lam * remaining)
        return pmf @ self.penalty_matrix

    def copy(self, **changes):
        fields = dict(v_star=self.v_star.copy(), v_missing=self.v_missing.copy(),
                      unit_cost=self.unit_cost, model=self.model, provenance=self.provenance,
                      config_hash=self.config_hash, meta=dict(self.meta))
        fields.update(changes)
        return ValueTable(**fields)

    def invariant_violations(self, rtol=1e-9):
        out = []
        m = np.arange(self.n_max + 1)
        scale = max(abs(self.unit_cost), 1.0)
        if not np.allclose(self.v_star, m * self.unit_cost, rtol=rtol, atol=rtol * scale):
            out.append("v_star is not linear in m")
        pen = self.penalty_matrix
        if np.any(pen < -rtol * scale * np.maximum(m, 1)[:, None]):
            out.append("v_missing below v_star")
        if np.any(np.diff(self.v_missing, axis=0) < -rtol * scale):
            out.append("v_missing decreases in m")
        return out


def _missing_terms(ugain, ucost, cgain, ccost, covered):
    """Per (draw, cache i, segment s) pieces of the one-missing-pair Bellman target.

    With only cache i lacking segment s, a user served by another cache costs
    nothing and leaves the state alone (``free``). Otherwise the user needs s
    and pays ``a``; a cache at least as strong as the user decodes for free
    (``strong``), else the BS may pay ``delta`` extra to fill it (``weak``).
    """
    Sp = cgain.shape[2]
    n_cov = covered.sum(axis=1)
    outside = n_cov == 0
    need = (n_cov[:, None] - covered) == 0
    other = np.where(outside[:, None], ucost.sum(axis=1)[:, None] - ucost[:, :Sp], 0.0)
    need3 = np.broadcast_to(need[:, :, None], cgain.shape)
    a = need3 * (ucost[:, None, :Sp] + other[:, None, :])
    strong = need3 & (cgain >= ugain[:, None, :Sp])
    weak = need3 & ~strong
    delta = ccost - ucost[:, None, :Sp]
    return a, need3, strong, weak, delta


class _MissingStats:
    """Sufficient statistics of the v_missing recursion, accumulated over chunks."""

    def __init__(self, n_caches):
        self.n = 0
        self.a = np.zeros(n_caches)
        self.free = np.zeros(n_caches)
        self.strong = np.zeros(n_caches)
        self.deltas = [[] for _ in range(n_caches)]
        self.star_sum = 0.0
        self.star_n = 0

    def add(self, sample, model):
        ucost = model.cost(sample.user_gain)
        outside = ~sample.covered.any(axis=1)
        self.star_sum += float(np.sum(outside * ucost.sum(axis=1)))
        self.star_n += sample.size
        if sample.covered.shape[1] == 0:
            return
        ccost = model.cost(sample.cache_gain)
        a, need, strong, weak, delta = _missing_terms(sample.user_gain, ucost, sample.cache_gain,
                                                      ccost, sample.covered)
        self.n += a.shape[0] * a.shape[2]
        self.a += a.sum(axis=(0, 2))
        self.free += (~need).sum(axis=(0, 2))
        self.strong += strong.sum(axis=(0, 2))
        for i in range(a.shape[1]):
            self.deltas[i].append(delta[:, i, :][weak[:, i, :]])

    def recurse(self, n_max):
        c0 = self.star_sum / self.star_n
        v_star = c0 * np.arange(n_max + 1)
        C = len(self.a)
        v_missing = np.zeros((n_max + 1, C))
        for i in range(C):
            ds = np.sort(np.concatenate(self.deltas[i])) if self.deltas[i] else np.zeros(0)
            prefix = np.concatenate([[0.0], np.cumsum(ds)])
            n_w = len(ds)
            for m in range(1, n_max + 1):
                vm, vs = v_missing[m - 1, i], v_star[m - 1]
                gap = vm - vs
                j = int(np.searchsorted(ds, gap))
                weak_sum = n_w * vs + prefix[j] + gap * (n_w - j)
                v_missing[m, i] = (self.a[i] + self.free[i] * vm + self.strong[i] * vs + weak_sum) / self.n
        return c0, v_star, v_missing


def build_value_table(config, geometry, mc_samples, rng, n_max=None, sample=None,
                      model=None, chunk=50_000):
    """Monte Carlo tabulation of v_star and v_missing.

    Draws come from the config's user distribution unless ``sample`` (a
    :class:`~cachesched.radio.GainSample`) is given, in which case it is used
    as-is so exact and approximate tables can share one sample.
    """
    if sample is None and mc_samples < MIN_MC_SAMPLES:
        raise ConfigError(f"mc_samples must be at least {MIN_MC_SAMPLES}")
    if n_max is None:
        n_max = poisson_truncation(config.request_rate, config.lifetime, config.tail_epsilon)
    model = model or CostModel.from_config(config)
    stats = _MissingStats(geometry.n_caches)
    if sample is not None:
        stats.add(sample, model)
    else:
        done = 0
        while done < mc_samples:
            k = min(chunk, mc_samples - done)
            stats.add(sample_gains(config, geometry, k, rng, cache_segments=1), model)
            done += k
    c0, v_star, v_missing = stats.recurse(n_max)
    return ValueTable(v_star, v_missing, c0, model, "analytic-mc", config.config_hash(),
                      {"mc_samples": sample.size if sample is not None else mc_samples})


def _check_stage(m, table):
    if m < 0 or m > table.n_max:
        raise IndexError(f"stage {m} outside table range 0..{table.n_max}")


def approx_value(state, m, table):
    _check_stage(m, table)
    return float(table.v_star[m] + state.missing_counts() @ table.penalty_matrix[m])


def poisson_penalty(i, lam, remaining, table):
    if remaining < 0:
        raise ValueError("remaining lifetime must be non-negative")
    return float(table.penalties(lam, remaining)[i])


def poisson_mixture_cost(state, lam, remaining, table):
    """Expected remaining cost from ``state`` with Poisson(lam*remaining) requests left."""
    pmf = poisson_pmf(table.n_max, lam * remaining)
    values = table.v_star + table.penalty_matrix @ state.missing_counts()
    return float(pmf @ values)


@dataclass(frozen=True)
class ValueBounds:
    lower: float
    upper: float
    certified: bool  # False when service discs overlap


def value_bounds(state, m, table, overlap=False):
    _check_stage(m, table)
    counts = state.missing_counts()
    upper = approx_value(state, m, table)
    lower = float(table.v_star[m] + counts @ table.penalty_matrix[min(m, 1)])
    return ValueBounds(lower, upper, not overlap)


# --- exact oracle ------------------------------------------------------------

@dataclass
class ExactTables:
    """Exact reduced-state values ``values[m, state_index]`` for a tiny instance."""

    values: np.ndarray
    n_caches: int
    n_segments: int
    model: CostModel

    @property
    def n_max(self):
        return self.values.shape[0] - 1

    def value(self, state, m):
        return float(self.values[m, state.index])

    def mixture(self, lam, remaining):
        """Poisson-mixed continuation value for every state index."""
        return poisson_pmf(self.n_max, lam * remaining) @ self.values

    def predicted_cost(self, lam, lifetime):
        """Average per-file cost from an empty buffer under optimal control."""
        return float(self.mixture(lam, lifetime)[0])


def check_tiny(n_caches, n_segments, n_max):
    if n_caches > EXACT_MAX_CACHES or n_segments > EXACT_MAX_SEGMENTS:
        raise InstanceTooLarge(
            f"exact value iteration needs N_C <= {EXACT_MAX_CACHES} and N_S <= {EXACT_MAX_SEGMENTS}"
            f" (got {n_caches}, {n_segments})")
    if n_max > EXACT_MAX_STAGES:
        raise InstanceTooLarge(f"exact value iteration needs N_max <= {EXACT_MAX_STAGES} (got {n_max})")


def exact_value_iteration(config, geometry, mc_samples, rng, n_max=None, sample=None, model=None):
    """Backward induction over every buffer state, expectations over a shared draw sample."""
    if n_max is None:
        n_max = poisson_truncation(config.request_rate, config.lifetime, config.tail_epsilon)
    check_tiny(geometry.n_caches, config.segments, n_max)
    model = model or CostModel.from_config(config)
    if sample is None:
        sample = sample_gains(config, geometry, mc_samples, rng).cyclic_symmetrized()
    ucost = model.cost(sample.user_gain)
    ccost = model.cost(sample.cache_gain)
    n_states = 1 << (geometry.n_caches * config.segments)
    values = np.zeros((n_max + 1, n_states))
    for m in range(1, n_max + 1):
        values[m] = kernels.bellman_values(ucost, ccost, sample.user_gain, sample.cache_gain,
                                           sample.covered, values[m - 1])
    return ExactTables(values, geometry.n_caches, config.segments, model)


def tiny_instance(config, geometry, mc_samples, rng, n_max=None):
    """Exact tables and the approximate table built on one common symmetrized sample."""
    if n_max is None:
        n_max = poisson_truncation(config.request_rate, config.lifetime, config.tail_epsilon)
    check_tiny(geometry.n_caches, config.segments, n_max)
    sample = sample_gains(config, geometry, mc_samples, rng).cyclic_symmetrized()
    exact = exact_value_iteration(config, geometry, mc_samples, rng, n_max, sample=sample)
    table = build_value_table(config, geometry, mc_samples, rng, n_max, sample=sample)
    return exact, table


# --- serialization -----------------------------------------------------------

def table_to_text(table, t=None):
    lines = [
        TABLE_FORMAT,
        f"config_hash {table.config_hash or '-'}",
        f"provenance {table.provenance}",
        f"n_max {table.n_max}",
        f"n_caches {table.n_caches}",
        f"unit_cost {table.unit_cost!r}",
        "model " + " ".join(f"{k}={v!r}" for k, v in table.model.params().items()),
    ]
    if t is not None:
        lines.append(f"t {t}")
    for m in range(1, table.n_max + 1):
        lines.append(f"v_star {m} {float(table.v_star[m])!r}")
    for m in range(1, table.n_max + 1):
        for i in range(table.n_caches):
            lines.append(f"v_missing {m} {i} {float(table.v_missing[m, i])!r}")
    return "\n".join(lines) + "\n"


def table_from_text(text):
    """Inverse of :func:`table_to_text`; returns ``(table, t)``."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TABLE_FORMAT:
        raise ValueError("not a value-table file (bad header)")
    header = {}
    entries = []
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key in ("v_star", "v_missing"):
            entries.append((key, rest.split()))
        else:
            header[key] = rest
    n_max = int(header["n_max"])
    n_caches = int(header["n_caches"])
    params = dict(kv.split("=", 1) for kv in header["model"].split())
    model = CostModel(int(params["n_antennas"]), float(params["noise_power"]), float(params["w_e"]),
                      float(params["w_t"]), float(params["bits"]))
    v_star = np.zeros(n_max + 1)
    v_missing = np.zeros((n_max + 1, n_caches))
    for key, parts in entries:
        if key == "v_star":
            v_star[int(parts[0])] = float(parts[1])
        else:
            v_missing[int(parts[0]), int(parts[1])] = float(parts[2])
    table = ValueTable(v_star, v_missing, float(header["unit_cost"]), model, header["provenance"],
                       "" if header["config_hash"] == "-" else header["config_hash"])
    t = int(header["t"]) if "t" in header else None
    return table, t


def save_table(table, path, t=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table_to_text(table, t))


def load_table(path):
    with open(path, encoding="utf-8") as fh:
        return table_from_text(fh.read())
