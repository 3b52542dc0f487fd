"""Mean-field dynamics of the local greedy coloring process.

A vertex still uncolored after some steps is described by its type (d, c):
d uncolored neighbors and c palette colors not yet seen on any neighbor.
Red neighbors reduce d but never c.  The functions here compute the
size-biased neighbor law, cascade growth rates, expected per-activation
type changes, and the drift field that the certifier integrates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateDistributionError,
    SupercriticalError,
)


class VertexType(NamedTuple):
    """Type (d, c) of an uncolored vertex: d uncolored neighbors, c colors
    still available out of the palette."""

    d: int
    c: int


@dataclass(frozen=True)
class PaletteConfig:
    """Degree r of the regular graph and palette size p."""

    r: int
    p: int

    def __post_init__(self) -> None:
        if not isinstance(self.r, int) or not isinstance(self.p, int):
            raise ConfigurationError("r and p must be integers")
        if self.r < 3:
            raise ConfigurationError(f"degree r must be >= 3, got {self.r}")
        if not (2 <= self.p <= self.r):
            raise ConfigurationError(
                f"palette size p must satisfy 2 <= p <= r, got p={self.p}, r={self.r}"
            )


class TypeSpace:
    """Canonical ordering of the type space T = {(d, c): 0<=d<=r, 2<=c<=p}
    plus precomputed index arrays used by the vectorized kernels.

    Types are ordered lexicographically: (0,2), (0,3), ..., (r,p).
    """

    def __init__(self, cfg: PaletteConfig) -> None:
        self.cfg = cfg
        r, p = cfg.r, cfg.p
        self.types: tuple[VertexType, ...] = tuple(
            VertexType(d, c) for d in range(r + 1) for c in range(2, p + 1)
        )
        self.size = len(self.types)  # (r+1)(p-1)
        self.index: dict[VertexType, int] = {t: i for i, t in enumerate(self.types)}
        self.deg = np.array([t.d for t in self.types], dtype=np.float64)
        self.colors = np.array([t.c for t in self.types], dtype=np.float64)
        # Mask of types with c == 2 (the only ones that can be forced).
        self.forced_mask = np.array([t.c == 2 for t in self.types], dtype=bool)
        # For a target type (d, c), a branch gains mass from (d+1, c+1) when the
        # parent color was available to the neighbor, and from (d+1, c) when it
        # was not.  Out-of-space sources point at a padding slot holding 0.
        pad = self.size
        gain_avail = np.full(self.size, pad, dtype=np.intp)
        gain_blocked = np.full(self.size, pad, dtype=np.intp)
        for i, (d, c) in enumerate(self.types):
            src1 = VertexType(d + 1, c + 1)
            src2 = VertexType(d + 1, c)
            if src1 in self.index:
                gain_avail[i] = self.index[src1]
            if src2 in self.index:
                gain_blocked[i] = self.index[src2]
        self.gain_avail = gain_avail
        self.gain_blocked = gain_blocked
        self.coef_avail = (self.colors + 1.0) / p
        self.coef_blocked = (p - self.colors) / p

    def vector_from_mapping(self, mapping: Mapping[VertexType, float]) -> np.ndarray:
        vec = np.zeros(self.size, dtype=np.float64)
        for t, v in mapping.items():
            key = VertexType(*t)
            if key not in self.index:
                raise ConfigurationError(f"type {key} outside type space for {self.cfg}")
            vec[self.index[key]] = float(v)
        return vec


@lru_cache(maxsize=None)
def _space_cache(r: int, p: int) -> TypeSpace:
    return TypeSpace(PaletteConfig(r, p))


def type_space(cfg: PaletteConfig) -> TypeSpace:
    """Shared TypeSpace instance for a palette config."""
    return _space_cache(cfg.r, cfg.p)


@dataclass
class TypeDistribution:
    """Sub-probability vector z over the type space: z_t is the fraction of
    all vertices that are uncolored with type t.  Colored mass is 1 - sum(z)."""

    cfg: PaletteConfig
    vec: np.ndarray

    def __post_init__(self) -> None:
        space = type_space(self.cfg)
        vec = np.asarray(self.vec, dtype=np.float64)
        if vec.shape != (space.size,):
            raise ConfigurationError(
                f"distribution vector has shape {vec.shape}, expected ({space.size},)"
            )
        if vec.min(initial=0.0) < -1e-9:
            raise ConfigurationError("distribution entries must be nonnegative")
        if vec.sum() > 1.0 + 1e-9:
            raise ConfigurationError("distribution mass exceeds 1")
        object.__setattr__(self, "vec", np.clip(vec, 0.0, None))

    @property
    def space(self) -> TypeSpace:
        return type_space(self.cfg)

    @classmethod
    def initial(cls, cfg: PaletteConfig) -> "TypeDistribution":
        """All mass on the fresh type (r, p)."""
        space = type_space(cfg)
        vec = np.zeros(space.size)
        vec[space.index[VertexType(cfg.r, cfg.p)]] = 1.0
        return cls(cfg, vec)

    @classmethod
    def from_dict(
        cls, cfg: PaletteConfig, mapping: Mapping[VertexType, float]
    ) -> "TypeDistribution":
        return cls(cfg, type_space(cfg).vector_from_mapping(mapping))

    def as_dict(self, keep_zeros: bool = False) -> dict[VertexType, float]:
        space = self.space
        return {
            t: float(v)
            for t, v in zip(space.types, self.vec)
            if keep_zeros or v != 0.0
        }

    def mass(self) -> float:
        return float(self.vec.sum())

    def __getitem__(self, t: Iterable[int]) -> float:
        return float(self.vec[self.space.index[VertexType(*t)]])


@dataclass(frozen=True)
class TuningParams:
    """Activation weights per type, and optionally the step scale epsilon.

    Weights are arbitrary nonnegative reals; when epsilon is set the
    per-step activation probability epsilon * weight must be a probability,
    so epsilon * max(weight) <= 1 is enforced.
    """

    cfg: PaletteConfig
    weights: Mapping[VertexType, float]
    epsilon: float | None = None

    def __post_init__(self) -> None:
        space = type_space(self.cfg)
        cleaned = {}
        for t in space.types:
            if t not in self.weights:
                raise ConfigurationError(f"tuning weight missing for type {t}")
            w = float(self.weights[t])
            if not np.isfinite(w) or w < 0.0:
                raise ConfigurationError(f"tuning weight for {t} must be >= 0, got {w}")
            cleaned[t] = w
        object.__setattr__(self, "weights", cleaned)
        if self.epsilon is not None:
            eps = float(self.epsilon)
            if not np.isfinite(eps) or eps < 0.0:
                raise ConfigurationError(f"epsilon must be >= 0, got {eps}")
            wmax = max(cleaned.values())
            if eps * wmax > 1.0 + 1e-12:
                raise ConfigurationError(
                    f"epsilon * max weight = {eps * wmax:g} exceeds 1; "
                    "activation probabilities must stay in [0, 1]"
                )
            object.__setattr__(self, "epsilon", eps)

    def vector(self) -> np.ndarray:
        space = type_space(self.cfg)
        return np.array([self.weights[t] for t in space.types], dtype=np.float64)


def default_tuning(cfg: PaletteConfig, epsilon: float | None = None) -> TuningParams:
    """Reference activation scheme: weight 2^(2-2d) for every type of degree
    d != 1, and 2^-10 for degree-1 types (colored last, almost never forced)."""
    weights = {
        t: (2.0 ** (2 - 2 * t.d) if t.d != 1 else 2.0 ** -10)
        for t in type_space(cfg).types
    }
    return TuningParams(cfg, weights, epsilon)


class EulerStep(NamedTuple):
    state: TypeDistribution
    clamped: int


# ---------------------------------------------------------------------------
# Array kernels.  These operate on raw vectors in canonical type order and are
# shared by the public wrappers below and the trajectory integrator.
# ---------------------------------------------------------------------------

def _q_kernel(space: TypeSpace, zvec: np.ndarray) -> np.ndarray:
    """Size-biased law q_t = deg(t) z_t / sum_s deg(s) z_s."""
    weighted = space.deg * zvec
    total = weighted.sum()
    if total <= 0.0:
        raise DegenerateDistributionError(
            "no mass on positive-degree types; neighbor law undefined"
        )
    return weighted / total


def _growth_from_q(space: TypeSpace, q: np.ndarray) -> float:
    # Cascade growth: mean forced offspring per cascade vertex,
    # (2/p) * sum_d (d-1) q_{(d,2)}.
    p = space.cfg.p
    return float((2.0 / p) * ((space.deg - 1.0) * q)[space.forced_mask].sum())


def _forced_fraction_from_q(space: TypeSpace, q: np.ndarray) -> float:
    # Probability a cascade-adjacent neighbor is forced: (2/p) * sum_d q_{(d,2)}.
    return float((2.0 / space.cfg.p) * q[space.forced_mask].sum())


def _remainder_from_q(space: TypeSpace, q: np.ndarray) -> float:
    return float(((space.deg - 1.0) * q).sum())


def _branch_delta_kernel(space: TypeSpace, q: np.ndarray, growth: float) -> np.ndarray:
    """Expected net change per branch of the count of each type, over the whole
    forced cascade spreading down that branch."""
    if growth >= 1.0:
        raise SupercriticalError(f"cascade growth {growth:g} >= 1")
    q_ext = np.append(q, 0.0)  # padding slot for out-of-space sources
    gains = (
        space.coef_avail * q_ext[space.gain_avail]
        + space.coef_blocked * q_ext[space.gain_blocked]
    )
    return (gains - q) / (1.0 - growth)


def _drift_kernel(space: TypeSpace, zvec: np.ndarray, wvec: np.ndarray) -> np.ndarray:
    """Drift F_t(z) = sum_s w_s z_s Delta_{s,t}(z), the epsilon-free rate of
    change of z under the activation weights w."""
    q = _q_kernel(space, zvec)
    growth = _growth_from_q(space, q)
    branch = _branch_delta_kernel(space, q, growth)
    # Delta_{s,t} = -[s==t] + deg(s) * branch_t, so the weighted sum collapses:
    activation_mass = float((wvec * zvec * space.deg).sum())
    return -wvec * zvec + activation_mass * branch


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------

def size_biased_law(z: TypeDistribution) -> dict[VertexType, float]:
    """Law of the type of a uniformly random uncolored neighbor of a random
    uncolored vertex.  Degree-weighted: q_t = deg(t) z_t / sum_s deg(s) z_s."""
    space = z.space
    q = _q_kernel(space, z.vec)
    return dict(zip(space.types, q.tolist()))


def cascade_growth(z: TypeDistribution) -> float:
    """Mean number of forced colorings spawned per forced coloring,
    (2/p) * sum_d (d-1) q_{(d,2)}.  Below 1 means cascades die out."""
    space = z.space
    return _growth_from_q(space, _q_kernel(space, z.vec))


def remainder_growth(z: TypeDistribution) -> float:
    """Mean offspring sum_s (deg(s)-1) q_s of the branching process describing
    connected components of the uncolored remainder."""
    space = z.space
    return _remainder_from_q(space, _q_kernel(space, z.vec))


def branch_type_delta(z: TypeDistribution, t: VertexType) -> float:
    """Expected net change of the type-t vertex count caused by one branch
    hanging off a freshly activated vertex (forced cascade included)."""
    space = z.space
    t = VertexType(*t)
    if t not in space.index:
        raise ConfigurationError(f"type {t} outside type space for {z.cfg}")
    q = _q_kernel(space, z.vec)
    growth = _growth_from_q(space, q)
    return float(_branch_delta_kernel(space, q, growth)[space.index[t]])


def cascade_type_delta(
    z: TypeDistribution,
) -> dict[tuple[VertexType, VertexType], float]:
    """Expected net type changes from activating one vertex of each type:
    entry (s, t) is -[s==t] + deg(s) * branch_type_delta(z, t)."""
    space = z.space
    q = _q_kernel(space, z.vec)
    growth = _growth_from_q(space, q)
    branch = _branch_delta_kernel(space, q, growth)
    out: dict[tuple[VertexType, VertexType], float] = {}
    for i, s in enumerate(space.types):
        row = space.deg[i] * branch
        for j, t in enumerate(space.types):
            val = row[j] - (1.0 if i == j else 0.0)
            out[(s, t)] = float(val)
    return out


def expected_cascade_size(z: TypeDistribution, s: VertexType) -> float:
    """Expected number of vertices colored when a type-s vertex activates:
    1 + deg(s) * forced_fraction / (1 - growth)."""
    space = z.space
    s = VertexType(*s)
    if s not in space.index:
        raise ConfigurationError(f"type {s} outside type space for {z.cfg}")
    q = _q_kernel(space, z.vec)
    growth = _growth_from_q(space, q)
    if growth >= 1.0:
        raise SupercriticalError(f"cascade growth {growth:g} >= 1")
    forced = _forced_fraction_from_q(space, q)
    return float(1.0 + s.d * forced / (1.0 - growth))


def drift(z: TypeDistribution, tuning: TuningParams) -> dict[VertexType, float]:
    """Rate of change of z per unit time: F_t = sum_s w_s z_s Delta_{s,t}."""
    if tuning.cfg != z.cfg:
        raise ConfigurationError("tuning and distribution configs differ")
    space = z.space
    vec = _drift_kernel(space, z.vec, tuning.vector())
    return dict(zip(space.types, vec.tolist()))


def euler_step(z: TypeDistribution, tuning: TuningParams) -> EulerStep:
    """One explicit Euler step z' = z + epsilon * drift(z).  Entries that
    would go below -1e-9 are clamped to 0 and counted in the result."""
    if tuning.epsilon is None:
        raise ConfigurationError("euler_step needs tuning with epsilon set")
    if tuning.cfg != z.cfg:
        raise ConfigurationError("tuning and distribution configs differ")
    space = z.space
    new_vec = z.vec + tuning.epsilon * _drift_kernel(space, z.vec, tuning.vector())
    clamped = int((new_vec < -1e-9).sum())
    return EulerStep(TypeDistribution(z.cfg, np.clip(new_vec, 0.0, None)), clamped)
