"""Estimators and summaries for simulation runs.

Turns raw step reports into the quantitative checks the rest of the package
promises: distance between the empirical type trajectory and a certified
flow, exponential-tail fits for cascade sizes, epsilon-scaling of the red
fraction, the size-biased neighbor law, and remainder component statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .certify import Certificate
from .dynamics import (
    PaletteConfig,
    TypeDistribution,
    VertexType,
    size_biased_law,
    type_space,
)
from .errors import ConfigurationError, InsufficientDataError
from .listcolor import connected_components
from .process import UNCOLORED, ColoringState, StepReport

__all__ = [
    "RunStats",
    "collect_run_stats",
    "trajectory_distance",
    "mean_trajectory_distance",
    "TailFit",
    "cascade_tail_fit",
    "RedScaling",
    "red_scaling",
    "neighbor_type_law",
    "ComponentStats",
    "component_stats",
    "stats_csv",
    "summary_json",
]


@dataclass
class RunStats:
    """Per-step record of one simulation run plus its final tallies.

    `distributions` has one entry per step boundary (so one more than the
    step lists); index k is the state after k steps at time k * epsilon.
    """

    r: int
    p: int
    epsilon: float
    n: int
    distributions: list[TypeDistribution]
    red_fracs: list[float]
    extra_fracs: list[float]
    active_counts: list[int]
    cascade_sizes: list[list[int]]
    rounds_used: list[int]
    buffer_colored_per_round: list[int] = field(default_factory=list)
    component_histogram: dict[int, int] | None = None
    violations: int | None = None
    failure_counts: dict[str, int] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.active_counts)

    def time(self, k: int) -> float:
        return k * self.epsilon

    def cascade_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for sizes in self.cascade_sizes:
            for s in sizes:
                hist[s] = hist.get(s, 0) + 1
        return hist


def collect_run_stats(
    state: ColoringState,
    epsilon: float,
    reports: list[StepReport],
    distributions: list[TypeDistribution],
) -> RunStats:
    """Assemble a RunStats from a finished phase-1 run on `state`."""
    if len(distributions) != len(reports) + 1:
        raise ConfigurationError(
            f"expected one distribution per step boundary: got {len(distributions)} "
            f"for {len(reports)} steps"
        )
    n = state.graph.n
    red = 0
    extra = 0
    red_fracs = [red / n]
    extra_fracs = [extra / n]
    active_counts: list[int] = []
    cascade_sizes: list[list[int]] = []
    rounds_used: list[int] = []
    buffer_rounds: list[int] = []
    for rep in reports:
        red += rep.rule3 + rep.rule4
        if rep.buffer is not None:
            red += rep.buffer.red_created
            for j, colored in enumerate(rep.buffer.colored_per_round):
                while len(buffer_rounds) <= j:
                    buffer_rounds.append(0)
                buffer_rounds[j] += colored
        red_fracs.append(red / n)
        extra_fracs.append(extra / n)
        active_counts.append(rep.active)
        cascade_sizes.append(sorted(c.total_colored for c in rep.cascades))
        rounds_used.append(rep.rounds)
    for frac, z in zip(red_fracs, distributions):
        if z.mass() + frac > 1.0 + 1e-12:
            raise ConfigurationError("uncolored and red fractions exceed 1")
    return RunStats(
        r=state.cfg.r,
        p=state.cfg.p,
        epsilon=float(epsilon),
        n=n,
        distributions=list(distributions),
        red_fracs=red_fracs,
        extra_fracs=extra_fracs,
        active_counts=active_counts,
        cascade_sizes=cascade_sizes,
        rounds_used=rounds_used,
        buffer_colored_per_round=buffer_rounds,
    )


def trajectory_distance(stats: RunStats, cert: Certificate) -> float:
    """Sup over step boundaries k with k * epsilon <= R of the max-norm
    distance between the empirical distribution and the certified flow,
    linearly interpolated between certificate samples.

    To aggregate over seeds, average per-seed distances (see
    `mean_trajectory_distance`)."""
    if (stats.r, stats.p) != (cert.cfg.r, cert.cfg.p):
        raise ConfigurationError(
            f"run is ({stats.r},{stats.p}) but certificate is "
            f"({cert.cfg.r},{cert.cfg.p})"
        )
    if not np.isfinite(stats.epsilon) or stats.epsilon <= 0.0:
        raise ConfigurationError(
            f"run has no usable step size: epsilon={stats.epsilon!r}"
        )
    if cert.status != "certified" or cert.r is None:
        raise ConfigurationError("certificate has no stopping time to compare through")
    times = np.asarray(cert.samples["times"], dtype=np.float64)
    states = np.asarray(cert.samples["states"], dtype=np.float64)
    worst = 0.0
    for k, z in enumerate(stats.distributions):
        t = k * stats.epsilon
        if t > cert.r:
            break
        i = int(np.searchsorted(times, t))
        if i == 0:
            sigma = states[0]
        elif i >= len(times):
            sigma = states[-1]
        else:
            w = (t - times[i - 1]) / (times[i] - times[i - 1])
            sigma = (1.0 - w) * states[i - 1] + w * states[i]
        worst = max(worst, float(np.max(np.abs(z.vec - sigma))))
    return worst


def mean_trajectory_distance(runs: list[RunStats], cert: Certificate) -> float:
    """Seed-aggregated figure: the mean of per-seed sup distances.  Order of
    `runs` does not matter."""
    if not runs:
        raise InsufficientDataError("no runs to aggregate")
    return float(np.mean([trajectory_distance(s, cert) for s in runs]))


class TailFit(NamedTuple):
    mean: float
    decay_rate: float
    residual: float
    degenerate: bool


def cascade_tail_fit(histogram: dict[int, int]) -> TailFit:
    """Fit log P(size >= k) ~ -decay_rate * k over the observed support.

    A positive decay rate is the exponential-tail signature of subcritical
    cascades.  Histograms supported on a single size cannot be fit and come
    back flagged degenerate.
    """
    sizes = np.array(sorted(histogram), dtype=np.float64)
    counts = np.array([histogram[int(s)] for s in sizes], dtype=np.float64)
    if (counts < 0).any():
        raise ConfigurationError("histogram counts must be nonnegative")
    total = counts.sum()
    if total < 100:
        raise InsufficientDataError(
            f"tail fit needs >= 100 samples, got {int(total)}"
        )
    mean = float((sizes * counts).sum() / total)
    if len(sizes) < 2:
        return TailFit(mean=mean, decay_rate=0.0, residual=0.0, degenerate=True)
    # complementary CDF at each observed size
    ccdf = (total - np.concatenate(([0.0], np.cumsum(counts)[:-1]))) / total
    logc = np.log(ccdf)
    slope, intercept = np.polyfit(sizes, logc, 1)
    fitted = slope * sizes + intercept
    residual = float(np.sqrt(np.mean((logc - fitted) ** 2)))
    return TailFit(mean=mean, decay_rate=float(-slope), residual=residual,
                   degenerate=False)


class RedScaling(NamedTuple):
    slope: float | None
    intercept: float | None
    means: dict[float, float]
    degenerate: bool


def red_scaling(results: list[tuple[float, float]]) -> RedScaling:
    """Log-log regression of final red fraction against epsilon.

    Input is a flat list of (epsilon, red fraction) cells; at least three
    distinct epsilon values with at least three seeds each are required.
    Linear (order-epsilon) behavior shows up as slope ~ 1.
    """
    by_eps: dict[float, list[float]] = {}
    for eps, frac in results:
        if eps <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {eps}")
        if frac < 0.0 or frac > 1.0:
            raise ConfigurationError(f"red fraction out of range: {frac}")
        by_eps.setdefault(float(eps), []).append(float(frac))
    if len(by_eps) < 3:
        raise InsufficientDataError(
            f"red scaling needs >= 3 epsilon values, got {len(by_eps)}"
        )
    for eps, fracs in by_eps.items():
        if len(fracs) < 3:
            raise InsufficientDataError(
                f"epsilon {eps:g} has {len(fracs)} seeds, needs >= 3"
            )
    means = {eps: float(np.mean(fracs)) for eps, fracs in sorted(by_eps.items())}
    if any(m == 0.0 for m in means.values()):
        return RedScaling(slope=None, intercept=None, means=means, degenerate=True)
    x = np.log(np.array(sorted(means)))
    y = np.log(np.array([means[e] for e in sorted(means)]))
    slope, intercept = np.polyfit(x, y, 1)
    return RedScaling(slope=float(slope), intercept=float(intercept),
                      means=means, degenerate=False)


def neighbor_type_law(
    state: ColoringState, samples: int, rng: np.random.Generator
) -> tuple[dict[VertexType, float], float]:
    """Sample the type of a uniform uncolored neighbor of a uniform uncolored
    vertex (among vertices having one), and report the empirical law plus its
    total-variation distance to the size-biased law q at the empirical state.

    Boundary vertices of tree-ball graphs are excluded from both roles, the
    same way the per-step distribution snapshots exclude them.
    """
    if samples <= 0:
        raise ConfigurationError(f"samples must be positive, got {samples}")
    g = state.graph
    okay = state.color == UNCOLORED
    if len(g.boundary):
        okay = okay.copy()
        okay[g.boundary] = False
    nbr_count = np.zeros(g.n, dtype=np.int64)
    np.add.at(nbr_count, g.edges_u, okay[g.edges_v])
    np.add.at(nbr_count, g.edges_v, okay[g.edges_u])
    eligible = np.nonzero(okay & (nbr_count > 0))[0]
    if not len(eligible):
        raise InsufficientDataError("no uncolored vertex has an uncolored neighbor")
    counts: dict[VertexType, int] = {}
    picks = eligible[rng.integers(len(eligible), size=samples)]
    for v in picks:
        nbrs = g.neighbors(int(v))
        nbrs = nbrs[okay[nbrs]]
        u = int(nbrs[rng.integers(len(nbrs))])
        t = state.vertex_type(u)
        counts[t] = counts.get(t, 0) + 1
    law = {t: c / samples for t, c in counts.items()}
    z_hat = state.empirical_distribution(
        exclude=g.boundary if len(g.boundary) else None
    )
    q = size_biased_law(z_hat)
    space = type_space(state.cfg)
    tv = 0.5 * sum(abs(law.get(t, 0.0) - q.get(t, 0.0)) for t in space.types)
    return law, tv


class ComponentStats(NamedTuple):
    count: int
    mean_size: float
    max_size: int
    histogram: dict[int, int]


def component_stats(state: ColoringState) -> ComponentStats:
    """Connected components of the uncolored subgraph."""
    targets = [int(v) for v in np.nonzero(state.color == UNCOLORED)[0]]
    if not targets:
        return ComponentStats(0, 0.0, 0, {})
    hist: dict[int, int] = {}
    count = 0
    total = 0
    biggest = 0
    for comp in connected_components(state.graph, targets):
        size = len(comp)
        hist[size] = hist.get(size, 0) + 1
        count += 1
        total += size
        biggest = max(biggest, size)
    return ComponentStats(count, total / count, biggest, hist)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def stats_csv(stats: RunStats) -> str:
    """Render the per-step table: one row per step boundary, fixed header,
    one z column per type in canonical order."""
    space = type_space(PaletteConfig(stats.r, stats.p))
    header = ["step", "time", "uncolored_frac", "red_frac", "extra_frac",
              "active", "mean_cascade", "max_cascade"]
    header += [f"z_{t.d}_{t.c}" for t in space.types]
    lines = [",".join(header)]
    for k, z in enumerate(stats.distributions):
        if k == 0:
            active, mean_casc, max_casc = 0, 0.0, 0
        else:
            sizes = stats.cascade_sizes[k - 1]
            active = stats.active_counts[k - 1]
            mean_casc = float(np.mean(sizes)) if sizes else 0.0
            max_casc = max(sizes) if sizes else 0
        row = [
            str(k),
            repr(stats.time(k)),
            repr(float(z.mass())),
            repr(stats.red_fracs[k]),
            repr(stats.extra_fracs[k]),
            str(active),
            repr(mean_casc),
            str(max_casc),
        ]
        row += [repr(float(z[t])) for t in space.types]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def summary_json(stats: RunStats, extra_fields: dict | None = None) -> str:
    """Final-run summary as a JSON text block."""
    body: dict = {
        "r": stats.r,
        "p": stats.p,
        "epsilon": stats.epsilon,
        "n": stats.n,
        "steps": stats.steps,
        "final_uncolored_frac": float(stats.distributions[-1].mass()),
        "final_red_frac": stats.red_fracs[-1],
        "final_extra_frac": stats.extra_fracs[-1],
        "total_cascades": sum(len(s) for s in stats.cascade_sizes),
        "buffer_colored_per_round": list(stats.buffer_colored_per_round),
        "component_histogram": (
            {str(k): v for k, v in sorted(stats.component_histogram.items())}
            if stats.component_histogram is not None else None
        ),
        "violations": stats.violations,
        "failure_counts": dict(sorted(stats.failure_counts.items())),
    }
    if extra_fields:
        body.update(extra_fields)
    return json.dumps(body, indent=2, sort_keys=False) + "\n"
