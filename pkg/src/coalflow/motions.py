"""n-point coalescing motions on the line.

Samplers for the consistent transition families behind three model classes:
Brownian trajectories that are independent before meeting (Arratia), general
coalescing diffusions dX = a(X)dt + b(X)dw with independent driving noise,
and Harris flows with spatially correlated noise d<w_x,w_y> = Gamma(x-y)dt.
Trajectories that meet are merged and never separate again; between grid
points a Brownian-bridge minimum law resolves coalescence exactly for
constant-coefficient models and to O(dt) for the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (CovarianceNotFactorizable, EmptyStarts, InvalidGap,
                     NegativeDuration, NonPositiveDiffusion)
from .numerics import adaptive_simpson
from .rng import RngStream

HARRIS_JITTER = 1e-12
SCALE_REL_TOL = 1e-10


# ---------------------------------------------------------------------------
# model specifications


@dataclass(frozen=True)
class DiffusionSpec:
    """One-point motion dX = a(X)dt + b(X)dw; n points move independently
    until they meet and coalesce afterwards."""

    kind: str                      # "arratia" | "ou" | "generic"
    rate: float = 0.0              # OU mean-reversion rate (lambda > 0)
    sigma: float = 1.0             # OU volatility
    drift_fn: Optional[Callable] = None
    diffusion_fn: Optional[Callable] = None
    lipschitz_bound: float = 0.0

    @staticmethod
    def arratia() -> "DiffusionSpec":
        return DiffusionSpec(kind="arratia")

    @staticmethod
    def ornstein_uhlenbeck(rate: float, sigma: float) -> "DiffusionSpec":
        if rate <= 0 or sigma <= 0:
            raise ValueError("OU needs rate > 0 and sigma > 0")
        return DiffusionSpec(kind="ou", rate=rate, sigma=sigma)

    @staticmethod
    def generic(drift: Callable, diffusion: Callable,
                lipschitz_bound: float) -> "DiffusionSpec":
        return DiffusionSpec(kind="generic", drift_fn=drift,
                             diffusion_fn=diffusion,
                             lipschitz_bound=lipschitz_bound)

    @property
    def has_drift(self) -> bool:
        return self.kind != "arratia"

    def drift(self, x):
        if self.kind == "arratia":
            return np.zeros_like(np.asarray(x, dtype=float))
        if self.kind == "ou":
            return -self.rate * np.asarray(x, dtype=float)
        return np.asarray(self.drift_fn(x), dtype=float)

    def diffusion(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "arratia":
            return np.ones_like(x)
        if self.kind == "ou":
            return np.full_like(x, self.sigma)
        return np.asarray(self.diffusion_fn(x), dtype=float)

    def check_positive_diffusion(self, lo: float, hi: float, n: int = 257) -> None:
        """Sample b over [lo, hi]; raise if any value is <= 0."""
        xs = np.linspace(lo, hi, n)
        if np.any(self.diffusion(xs) <= 0.0):
            raise NonPositiveDiffusion(f"b(x) <= 0 somewhere in [{lo}, {hi}]")


@dataclass(frozen=True)
class HarrisSpec:
    """Harris flow with exponential correlation Gamma(x) = exp(-gamma|x|).

    beta(x) = (1 - e^-gamma) * x minorizes 1 - Gamma on (0, 1], which is the
    coalescence-forcing condition; merge_gap is the sub-threshold gap at which
    a pair is declared met inside a step.
    """

    gamma: float = 1.0
    merge_gap: float = 1e-9

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def correlation(self, x):
        return np.exp(-self.gamma * np.abs(np.asarray(x, dtype=float)))

    def beta(self, x):
        return (1.0 - math.exp(-self.gamma)) * np.asarray(x, dtype=float)

    def validate(self, n: int = 513) -> None:
        xs = np.linspace(-8.0, 8.0, n)
        g = self.correlation(xs)
        if abs(self.correlation(0.0) - 1.0) > 0:
            raise ValueError("Gamma(0) != 1")
        if np.any(np.abs(g) > 1.0 + 1e-12):
            raise ValueError("|Gamma| > 1")
        if np.max(np.abs(g - g[::-1])) > 1e-12:
            raise ValueError("Gamma is not even")
        pos = np.linspace(1e-6, 1.0, n)
        if np.any(1.0 - self.correlation(pos) < self.beta(pos) - 1e-12):
            raise ValueError("1 - Gamma < beta on (0, 1]")
        # integral of x/beta(x) over (0, eps] must be finite
        val = adaptive_simpson(lambda u: u / max(self.beta(u), 1e-300), 1e-12, 0.5)
        if not math.isfinite(val):
            raise ValueError("x/beta(x) not integrable at 0")


MotionModel = Union[DiffusionSpec, HarrisSpec]


# ---------------------------------------------------------------------------
# scale function and crossing laws


def scale_function(spec: DiffusionSpec, x: float) -> float:
    """Drift-removing transform m(x) = int_0^x exp(-2 int_0^y a/b^2) dy.

    Strictly increasing with m(0) = 0; computed by nested adaptive Simpson
    at relative tolerance 1e-10 because m enters acceptance bounds.
    """
    if x == 0.0:
        return 0.0

    def over_b2(z):
        b = float(spec.diffusion(z))
        if b <= 0.0:
            raise NonPositiveDiffusion(f"b({z}) = {b} <= 0")
        return float(spec.drift(z)) / (b * b)

    def integrand(y):
        if spec.kind == "arratia":
            inner = 0.0
        else:
            inner = adaptive_simpson(over_b2, 0.0, y, rel_tol=SCALE_REL_TOL)
        return math.exp(-2.0 * inner)

    return adaptive_simpson(integrand, 0.0, float(x), rel_tol=SCALE_REL_TOL)


def pair_no_meet_probability_exact(x: float, y: float, t: float) -> float:
    """P(two independent standard Brownian motions from x <= y have not met
    by t) = erf((y-x) / (2 sqrt(t))), by reflection on the gap process."""
    if t < 0:
        raise NegativeDuration(f"t = {t}")
    if x > y:
        raise ValueError("need x <= y")
    if t == 0.0:
        return 0.0 if x == y else 1.0
    return math.erf((y - x) / (2.0 * math.sqrt(t)))


def bridge_cross_probability(d0: float, d1: float, dt: float,
                             variance_rate: float) -> float:
    """P(gap process pinned at d0, d1 over a step of length dt touched zero),
    exp(-2 d0 d1 / (variance_rate dt)): the Brownian bridge minimum law."""
    if d0 <= 0 or d1 <= 0:
        raise InvalidGap(f"gaps must be positive, got {d0}, {d1}")
    if dt <= 0:
        raise NegativeDuration(f"dt = {dt}")
    if variance_rate <= 0:
        raise ValueError("variance_rate must be positive")
    return math.exp(-2.0 * d0 * d1 / (variance_rate * dt))


# ---------------------------------------------------------------------------
# system state


@dataclass
class SystemState:
    """Time-stamped sorted cluster positions plus the particle partition.

    positions holds one strictly increasing entry per live cluster; reps[i]
    is the cluster id (smallest member particle index) of positions[i];
    cluster_of maps each original particle to its cluster id.  merge_log is
    append-only: once merged, clusters never split.
    """

    time: float
    positions: np.ndarray
    reps: np.ndarray
    cluster_of: np.ndarray
    merge_log: list = field(default_factory=list)

    @staticmethod
    def from_starts(starts: Sequence[float], time: float = 0.0) -> "SystemState":
        starts = np.asarray(starts, dtype=float)
        if starts.size == 0:
            raise EmptyStarts("need at least one starting point")
        if np.any(np.diff(starts) < 0):
            raise ValueError("starts must be sorted nondecreasing")
        positions, first_idx, inverse = np.unique(
            starts, return_index=True, return_inverse=True)
        reps = first_idx.astype(np.int64)
        cluster_of = reps[inverse]
        return SystemState(time=float(time), positions=positions,
                           reps=reps, cluster_of=cluster_of)

    @property
    def n_clusters(self) -> int:
        return int(self.positions.size)

    def validate(self) -> None:
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("cluster positions must be strictly increasing")
        if self.positions.size != self.reps.size:
            raise ValueError("positions/reps length mismatch")
        if not np.all(np.isin(self.cluster_of, self.reps)):
            raise ValueError("cluster_of refers to a dead cluster")

    def position_of_particle(self, particle: int) -> float:
        rep = self.cluster_of[particle]
        idx = int(np.nonzero(self.reps == rep)[0][0])
        return float(self.positions[idx])


# ---------------------------------------------------------------------------
# stepping kernel


def collapse_proposals(prop: np.ndarray, merge_next: np.ndarray):
    """Collapse post-step proposals into merged clusters.

    merge_next[i] marks that original adjacent clusters (i, i+1) met inside
    the step.  A merged run adopts the mean of its members' proposals; any
    ordering violation the means introduce cascades into further
    (count-weighted) merges, so output positions are strictly increasing.
    Returns (positions, starts, counts): group g covers original cluster
    indices starts[g] .. starts[g]+counts[g]-1.
    """
    n = prop.size
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return prop.copy(), empty, empty
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    if n > 1:
        np.logical_not(merge_next, out=boundary[1:])
    starts = np.flatnonzero(boundary)
    if starts.size == n:
        return prop.copy(), starts, np.ones(n, dtype=np.int64)
    counts = np.diff(np.append(starts, n))
    pos = np.add.reduceat(prop, starts) / counts
    if np.all(pos[1:] > pos[:-1]):
        return pos, starts, counts
    # rare: a run mean crossed its neighbour; fold with count weights
    ps: list = []
    ss: list = []
    cs: list = []
    for p, s, c in zip(pos.tolist(), starts.tolist(), counts.tolist()):
        while ps and p <= ps[-1]:
            p0, c0 = ps.pop(), cs.pop()
            s = ss.pop()
            p = (p0 * c0 + p * c) / (c0 + c)
            c = c0 + c
        ps.append(p)
        ss.append(s)
        cs.append(c)
    return (np.asarray(ps, dtype=float), np.asarray(ss, dtype=np.int64),
            np.asarray(cs, dtype=np.int64))


def propose_diffusion_step(spec: DiffusionSpec, positions: np.ndarray,
                           time: float, dt: float,
                           gen: np.random.Generator,
                           use_bridge: bool = True,
                           time_drift: Optional[Callable] = None):
    """One Euler-Maruyama step for all clusters plus per-adjacent-pair merge
    decisions (sign change always merges; otherwise the frozen-coefficient
    bridge law with variance rate b(x_i)^2 + b(x_j)^2 decides).

    The named kinds take closed-form fast paths; this is the innermost loop
    of every skeleton build.  time_drift(t) adds a spatially constant,
    time-dependent drift; it exists solely for negative-control fixtures and
    is None in production use.
    """
    x = positions
    n = x.size
    sdt = math.sqrt(dt)
    z = gen.standard_normal(n)
    const_rate = None
    if spec.kind == "arratia":
        prop = x + sdt * z
        const_rate = 2.0
        b = None
    elif spec.kind == "ou":
        prop = x + (-spec.rate * dt) * x + (spec.sigma * sdt) * z
        const_rate = 2.0 * spec.sigma * spec.sigma
        b = None
    else:
        a = spec.drift(x)
        b = spec.diffusion(x)
        if np.any(b <= 0.0):
            raise NonPositiveDiffusion("b(x) <= 0 at a step node")
        prop = x + a * dt + b * sdt * z
    if time_drift is not None:
        prop = prop + time_drift(time) * dt
    if n < 2:
        return prop, np.zeros(0, dtype=bool)
    d1 = prop[1:] - prop[:-1]
    flags = d1 <= 0.0
    if use_bridge and not flags.all():
        open_pair = ~flags
        d0 = x[1:] - x[:-1]
        if const_rate is not None:
            expo = d0[open_pair] * d1[open_pair] * (-2.0 / (const_rate * dt))
        else:
            rate = b[:-1] ** 2 + b[1:] ** 2
            expo = -2.0 * d0[open_pair] * d1[open_pair] / (rate[open_pair] * dt)
        u = gen.random(expo.size)
        hit = u < np.exp(expo)
        if hit.any():
            flags = flags.copy()
            flags[open_pair] = hit
    return prop, flags


def propose_harris_step(spec: HarrisSpec, positions: np.ndarray, dt: float,
                        gen: np.random.Generator):
    """Joint Gaussian step with covariance Gamma(x_i - x_j) dt, factorized by
    Cholesky with one diagonal jitter retry; merges on sign change or a
    sub-threshold gap."""
    x = positions
    n = x.size
    z = gen.standard_normal(n)
    if n == 1:
        prop = x + math.sqrt(dt) * z
        return prop, np.zeros(0, dtype=bool)
    cov = spec.correlation(x[:, None] - x[None, :])
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(cov + HARRIS_JITTER * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise CovarianceNotFactorizable(
                f"n={n} Harris covariance not factorizable") from exc
    prop = x + math.sqrt(dt) * (L @ z)
    d1 = np.diff(prop)
    flags = (d1 <= 0.0) | (d1 < spec.merge_gap)
    return prop, flags


def _apply_groups(state: SystemState, new_pos: np.ndarray, starts: np.ndarray,
                  counts: np.ndarray, new_time: float) -> SystemState:
    reps = state.reps
    if starts.size == reps.size:
        return SystemState(time=new_time, positions=new_pos, reps=reps.copy(),
                           cluster_of=state.cluster_of.copy(),
                           merge_log=list(state.merge_log))
    new_reps = np.empty(starts.size, dtype=np.int64)
    log = list(state.merge_log)
    remap = {}
    for gi in range(starts.size):
        s, c = int(starts[gi]), int(counts[gi])
        members = reps[s:s + c]
        keep = int(members.min())
        new_reps[gi] = keep
        for r in members:
            if int(r) != keep:
                remap[int(r)] = keep
                log.append((keep, int(r), new_time))
    cluster_of = state.cluster_of.copy()
    if remap:
        for old, new in remap.items():
            cluster_of[cluster_of == old] = new
    return SystemState(time=new_time, positions=new_pos, reps=new_reps,
                       cluster_of=cluster_of, merge_log=log)


def step_coalescing_diffusions(spec: DiffusionSpec, state: SystemState,
                               dt: float, rng_or_gen) -> SystemState:
    """Advance every cluster by one Euler step with independent noise and
    resolve within-step coalescence for adjacent pairs."""
    if dt <= 0:
        raise NegativeDuration(f"dt = {dt}")
    gen = rng_or_gen.generator() if isinstance(rng_or_gen, RngStream) else rng_or_gen
    prop, flags = propose_diffusion_step(spec, state.positions, state.time, dt, gen)
    new_pos, starts, counts = collapse_proposals(prop, flags)
    return _apply_groups(state, new_pos, starts, counts, state.time + dt)


def step_harris(spec: HarrisSpec, state: SystemState, dt: float,
                rng_or_gen) -> SystemState:
    if dt <= 0:
        raise NegativeDuration(f"dt = {dt}")
    gen = rng_or_gen.generator() if isinstance(rng_or_gen, RngStream) else rng_or_gen
    prop, flags = propose_harris_step(spec, state.positions, dt, gen)
    new_pos, starts, counts = collapse_proposals(prop, flags)
    return _apply_groups(state, new_pos, starts, counts, state.time + dt)


def step_system(model: MotionModel, state: SystemState, dt: float,
                gen) -> SystemState:
    if isinstance(model, HarrisSpec):
        return step_harris(model, state, dt, gen)
    return step_coalescing_diffusions(model, state, dt, gen)


def sample_npoint_motion(model: MotionModel, starts: Sequence[float],
                         horizon: float, dt: float,
                         rng: RngStream) -> list:
    """Full discrete-time trajectory of the n-point motion from sorted
    starts; duplicates occupy one cluster from time zero."""
    if len(starts) == 0:
        raise EmptyStarts("no starting points")
    if dt <= 0 or horizon < 0:
        raise NegativeDuration("need dt > 0 and horizon >= 0")
    gen = rng.generator()
    state = SystemState.from_starts(starts)
    path = [state]
    n_steps = int(round(horizon / dt))
    for _ in range(n_steps):
        state = step_system(model, state, dt, gen)
        path.append(state)
    return path
