"""Lifetime rollouts with common random numbers across policies.

A replication pre-samples everything random (request times and draws for
every file, shadowing at every proactive opportunity) from its own seed, so
every policy, with or without proactive placement, sees the same stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import policy as pol
from .learn import run_learner
from .proactive import apply_placement, proactive_select
from .radio import ProactiveDraw, cache_pathloss, draw_large_scale, shadowing
from .scenario import place_caches, sample_user_locations
from .txopt import CostModel
from .valuefn import ReducedState, build_value_table, exact_value_iteration, poisson_truncation

POLICY_NAMES = ("amdp", "amdp-uniform", "amdp-learned", "amdp-proactive", "b1", "b2", "optimal-tiny")


@dataclass(frozen=True)
class RequestEvent:
    time: float
    draw: object  # RequestDraw
    file: int = 0

    @property
    def remaining(self):
        return self.draw.remaining_lifetime


def generate_requests(lam, T, rng):
    """Sorted arrival times of a Poisson process of rate ``lam`` on [0, T]."""
    if T <= 0 or lam <= 0:
        return np.zeros(0)
    n = rng.poisson(lam * T)
    return np.sort(rng.uniform(0.0, T, n))


def opportunity_times(config):
    period = config.opportunity_period
    k = int(np.ceil(config.lifetime / period))
    times = period * np.arange(k)
    return times[times < config.lifetime]


@dataclass
class Lifetime:
    """All randomness of one replication."""

    requests: list  # per file, list of RequestEvent
    opportunity_times: np.ndarray
    opportunity_shadowing: np.ndarray  # (K, N_C)
    cache_pathloss: np.ndarray

    def proactive_draw(self, k):
        return ProactiveDraw(self.cache_pathloss, self.opportunity_shadowing[k], k)


def replication_streams(seed, replication):
    """Independent (requests, proactive) generators for one replication."""
    ss = np.random.SeedSequence([int(seed), int(replication)])
    req, pro = ss.spawn(2)
    return np.random.default_rng(req), np.random.default_rng(pro)


def sample_lifetime(config, geometry, req_rng, pro_rng):
    T = config.lifetime
    files = []
    for f in range(config.files):
        times = generate_requests(config.request_rate, T, req_rng)
        locs = sample_user_locations(config, req_rng, len(times))
        files.append([RequestEvent(t, draw_large_scale(config, geometry, loc, T - t, req_rng), f)
                      for t, loc in zip(times, locs)])
    opp = opportunity_times(config)
    shad = shadowing(config, pro_rng, (len(opp), geometry.n_caches))
    return Lifetime(files, opp, shad, cache_pathloss(config, geometry))


@dataclass
class CostLedger:
    breakdown: list = field(default_factory=list)  # (time, immediate_cost)
    proactive_spend: float = 0.0
    proactive_count: int = 0
    request_count: int = 0
    energy_term: float = 0.0
    time_term: float = 0.0
    states: list = field(default_factory=list)  # buffer state after every event

    @property
    def total(self):
        return float(sum(c for _, c in self.breakdown)) + self.proactive_spend

    def record(self, time, outcome):
        self.breakdown.append((time, outcome.immediate_cost))
        self.request_count += 1
        self.energy_term += outcome.energy_term
        self.time_term += outcome.time_term

    def record_placement(self, action):
        self.proactive_spend += action.cost
        self.proactive_count += 1
        self.energy_term += action.energy_term
        self.time_term += action.time_term


@dataclass
class Policy:
    """Scheduling rule plus whatever tables it needs.

    ``kind`` is ``amdp``, ``b1``, ``b2`` or ``optimal``. ``table`` also drives
    proactive placement when ``proactive`` is set.
    """

    name: str
    kind: str
    model: CostModel
    table: object = None
    exact: object = None
    proactive: bool = False

    def schedule(self, state, draw, lam, first_request):
        remaining = draw.remaining_lifetime
        if self.kind == "amdp":
            return pol.amdp_schedule(state, draw, lam, remaining, self.table)
        if self.kind in ("b1", "b2"):
            return pol.baseline_schedule(self.kind, state, draw, first_request, self.model)
        if self.kind == "optimal":
            return pol.optimal_schedule_tiny(state, draw, lam, remaining, self.exact)
        raise ValueError(f"unknown policy kind {self.kind!r}")


def run_lifetime(policy, config, geometry, lifetime, enable_proactive=None, keep_states=False):
    """Walk one replication's merged timeline; returns one ledger per file."""
    proactive_on = policy.proactive if enable_proactive is None else enable_proactive
    if proactive_on and policy.table is None:
        raise ValueError("proactive placement needs a value table")
    T, lam, F = config.lifetime, config.request_rate, config.files
    states = [ReducedState.empty(geometry.n_caches, config.segments) for _ in range(F)]
    ledgers = [CostLedger() for _ in range(F)]
    seen = [False] * F

    # (time, 0 = request / 1 = opportunity, file, index); requests win ties
    timeline = [(ev.time, 0, f, j) for f, evs in enumerate(lifetime.requests) for j, ev in enumerate(evs)]
    if proactive_on and geometry.n_caches:
        timeline += [(t, 1, -1, k) for k, t in enumerate(lifetime.opportunity_times)]
    timeline.sort()

    for time, kind, f, j in timeline:
        if kind == 0:
            ev = lifetime.requests[f][j]
            out = policy.schedule(states[f], ev.draw, lam, not seen[f])
            seen[f] = True
            states[f] = out.next_state
            ledgers[f].record(time, out)
            if keep_states:
                ledgers[f].states.append(states[f])
        else:
            remaining = [T - time] * F
            decision = proactive_select(states, remaining, lifetime.proactive_draw(j), [lam] * F,
                                        policy.table, config.proactive_threshold)
            if decision.chosen is not None:
                cf, _, action = decision.chosen
                states[cf] = apply_placement(states[cf], action)
                ledgers[cf].record_placement(action)
                if keep_states:
                    ledgers[cf].states.append(states[cf])
    return ledgers


def run_file(policy, config, geometry, table=None, enable_proactive=False, rng=None, lifetime=None,
             keep_states=False):
    """One file's lifetime under ``policy``; returns its :class:`CostLedger`."""
    if isinstance(policy, str):
        policy = make_policy(policy, config, table=table)
    elif table is not None and policy.table is None:
        policy = Policy(policy.name, policy.kind, policy.model, table, policy.exact, policy.proactive)
    if lifetime is None:
        rng = np.random.default_rng(config.seed) if rng is None else rng
        req_rng, pro_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(2))
        lifetime = sample_lifetime(config.replace(files=1), geometry, req_rng, pro_rng)
    return run_lifetime(policy, config.replace(files=1), geometry, lifetime, enable_proactive,
                        keep_states)[0]


def make_policy(name, config, table=None, exact=None, learned=None, uniform=None):
    model = CostModel.from_config(config)
    if name in ("b1", "b2"):
        return Policy(name, name, model, table)
    if name == "amdp":
        return Policy(name, "amdp", model, table)
    if name == "amdp-proactive":
        return Policy(name, "amdp", model, table, proactive=True)
    if name == "amdp-learned":
        return Policy(name, "amdp", model, learned)
    if name == "amdp-uniform":
        return Policy(name, "amdp", model, uniform)
    if name == "optimal-tiny":
        return Policy(name, "optimal", model, table, exact)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")


def table_rng(seed, purpose):
    tags = {"geometry": 0, "table": 1, "learned": 2, "uniform": 3, "exact": 4}
    return np.random.default_rng([int(seed), 0x7AB1E, tags[purpose]])


def experiment_geometry(config, seed=None):
    return place_caches(config, table_rng(config.seed if seed is None else seed, "geometry"))


def build_policies(config, geometry, names, seed=None, mc_samples=100_000, learn_draws=10_000,
                   n_max=None):
    """Construct named policies, building only the tables they need."""
    seed = config.seed if seed is None else seed
    unknown = [n for n in names if n not in POLICY_NAMES]
    if unknown:
        raise ValueError(f"unknown policy {unknown[0]!r}; choose from {', '.join(POLICY_NAMES)}")
    if n_max is None:
        n_max = poisson_truncation(config.request_rate, config.lifetime, config.tail_epsilon)
    table = learned = uniform = exact = None
    if any(n in ("amdp", "amdp-proactive", "b1", "b2", "optimal-tiny") for n in names):
        table = build_value_table(config, geometry, mc_samples, table_rng(seed, "table"), n_max)
    if "amdp-uniform" in names:
        uniform = build_value_table(config.replace(hot_zones=()), geometry, mc_samples,
                                    table_rng(seed, "uniform"), n_max)
    if "amdp-learned" in names:
        rng = table_rng(seed, "learned")
        learned = run_learner(config, geometry, rng, learn_draws, init_samples=mc_samples,
                              n_max=n_max).state.table
    if "optimal-tiny" in names:
        exact = exact_value_iteration(config, geometry, mc_samples, table_rng(seed, "exact"), n_max)
    return [make_policy(n, config, table, exact, learned, uniform) for n in names]


@dataclass
class PolicySummary:
    name: str
    costs: np.ndarray
    energy: np.ndarray
    time: np.ndarray
    requests: np.ndarray

    @property
    def mean(self):
        return float(self.costs.mean())

    @property
    def ci95(self):
        return ci95_halfwidth(self.costs)


@dataclass(frozen=True)
class PairedDifference:
    mean: float
    halfwidth: float

    @property
    def significant_less(self):
        """True when the first policy is cheaper at 95% confidence."""
        return self.mean + self.halfwidth < 0


def ci95_halfwidth(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float("nan")
    return float(stats.t.ppf(0.975, len(x) - 1) * x.std(ddof=1) / np.sqrt(len(x)))


def paired_difference(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    return PairedDifference(float(d.mean()), ci95_halfwidth(d))


@dataclass
class ExperimentResult:
    summaries: dict  # name -> PolicySummary
    replications: int
    seed: int

    def paired(self, a, b):
        return paired_difference(self.summaries[a].costs, self.summaries[b].costs)


def run_experiment(config, policies, replications, seed=None, geometry=None):
    """Run every policy on the same ``replications`` pre-sampled lifetimes."""
    if replications < 2:
        raise ValueError("replications must be at least 2")
    seed = config.seed if seed is None else seed
    geometry = experiment_geometry(config, seed) if geometry is None else geometry
    acc = {p.name: np.zeros((4, replications)) for p in policies}
    for r in range(replications):
        lifetime = sample_lifetime(config, geometry, *replication_streams(seed, r))
        for p in policies:
            ledgers = run_lifetime(p, config, geometry, lifetime)
            acc[p.name][:, r] = [sum(l.total for l in ledgers), sum(l.energy_term for l in ledgers),
                                 sum(l.time_term for l in ledgers),
                                 sum(l.request_count for l in ledgers)]
    summaries = {name: PolicySummary(name, *a) for name, a in acc.items()}
    return ExperimentResult(summaries, replications, seed)
