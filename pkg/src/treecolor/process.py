"""The staged greedy coloring process on finite graphs.

Each macro-step activates a random vertex set, lets every activation draw a
random available color, and then iterates reaction rounds to a fixpoint:
vertices that saw two step-colorings become red, vertices reduced to a single
available color are forced to take it, and adjacent simultaneous colorings
are both replaced by red.  The modified mode adds buffer rounds that relieve
red neighborhoods, and the final phases complete and tidy the coloring.

All randomness is a pure function of (seed, step, purpose, vertex) through
counter-based streams, so a seed plus the step counter fully determines every
future draw and runs are bit-reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PaletteConfig, TuningParams, TypeDistribution, VertexType, type_space
from .errors import ConfigurationError, InternalConsistencyError
from .graphs import Graph
from .listcolor import BUDGET, COLORED, DEFAULT_BUDGET, color_component, connected_components

UNCOLORED = -1
RED = -2

_PURPOSE_ACTIVATION = 0
_PURPOSE_COLOR = 1


def extra_color(cfg: PaletteConfig) -> int:
    """The repair color sitting just past the palette."""
    return cfg.p


# ---------------------------------------------------------------------------
# Randomness adapters
# ---------------------------------------------------------------------------

class ProcessRandomness:
    """Counter-based per-step randomness keyed by (seed, step, purpose).

    Each step re-derives its uniforms from the key, and a vertex always reads
    slot v of the array, so draws are independent of evaluation order.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ConfigurationError(f"seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self.n_hint = 0
        self._cache_step: int | None = None
        self._cache: dict[int, np.ndarray] = {}

    def _uniforms(self, step: int, purpose: int, n: int) -> np.ndarray:
        if step != self._cache_step:
            self._cache_step = step
            self._cache = {}
        arr = self._cache.get(purpose)
        if arr is None or len(arr) < n:
            key = np.array([self.seed, (step << 2) | purpose], dtype=np.uint64)
            arr = np.random.Generator(np.random.Philox(key=key)).random(
                max(n, self.n_hint)
            )
            self._cache[purpose] = arr
        return arr

    def activation_mask(self, step: int, probs: np.ndarray) -> np.ndarray:
        return self._uniforms(step, _PURPOSE_ACTIVATION, len(probs)) < probs

    def choose_color(self, step: int, v: int, avail: tuple[int, ...]) -> int:
        u = self._uniforms(step, _PURPOSE_COLOR, v + 1)[v]
        idx = min(int(u * len(avail)), len(avail) - 1)
        return avail[idx]


class ScriptedRandomness:
    """Deterministic adapter for hand-traced fixtures: a fixed active set per
    step and a fixed color per (step, vertex)."""

    def __init__(self, activations: dict[int, list[int]],
                 colors: dict[tuple[int, int], int]):
        self.activations = {s: set(vs) for s, vs in activations.items()}
        self.colors = dict(colors)

    def activation_mask(self, step: int, probs: np.ndarray) -> np.ndarray:
        mask = np.zeros(len(probs), dtype=bool)
        for v in self.activations.get(step, ()):
            mask[v] = True
        return mask

    def choose_color(self, step: int, v: int, avail: tuple[int, ...]) -> int:
        c = self.colors[(step, v)]
        if c not in avail:
            raise ConfigurationError(
                f"scripted color {c} for vertex {v} not in available {avail}"
            )
        return c


class RecordingRandomness:
    """Wraps another adapter and logs activations and color choices."""

    def __init__(self, inner):
        self.inner = inner
        self.activations: dict[int, np.ndarray] = {}
        self.choices: dict[tuple[int, int], tuple[tuple[int, ...], int]] = {}

    def activation_mask(self, step: int, probs: np.ndarray) -> np.ndarray:
        mask = self.inner.activation_mask(step, probs)
        self.activations[step] = mask.copy()
        return mask

    def choose_color(self, step: int, v: int, avail: tuple[int, ...]) -> int:
        c = self.inner.choose_color(step, v, avail)
        self.choices[(step, v)] = (avail, c)
        return c


class PermutedRandomness:
    """Replays a recording with every palette color pushed through a
    permutation; used to check color symmetry of the whole process."""

    def __init__(self, recording: RecordingRandomness, perm: dict[int, int]):
        self.recording = recording
        self.perm = dict(perm)

    def activation_mask(self, step: int, probs: np.ndarray) -> np.ndarray:
        return self.recording.activations[step].copy()

    def choose_color(self, step: int, v: int, avail: tuple[int, ...]) -> int:
        base_avail, base_choice = self.recording.choices[(step, v)]
        expected = tuple(sorted(self.perm[c] for c in base_avail))
        if expected != avail:
            raise ConfigurationError(
                f"permuted run diverged at vertex {v}: available {avail}, "
                f"expected {expected}"
            )
        return self.perm[base_choice]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class CascadeRecord:
    root: int
    root_type: VertexType
    generations: list[dict[VertexType, int]] = field(default_factory=list)
    total_colored: int = 0
    reds: int = 0
    collision: bool = False

    def _tally(self, gen: int, t: VertexType) -> None:
        while len(self.generations) <= gen:
            self.generations.append({})
        self.generations[gen][t] = self.generations[gen].get(t, 0) + 1


@dataclass
class StepReport:
    step: int
    active: int = 0
    rule1: int = 0
    rule2: int = 0
    rule3: int = 0
    rule4: int = 0
    rounds: int = 0
    cascades: list[CascadeRecord] = field(default_factory=list)
    buffer: "BufferReport | None" = None

    @property
    def colored(self) -> int:
        return self.rule1 + self.rule2

    @property
    def new_red(self) -> int:
        return self.rule3 + self.rule4


@dataclass
class BufferReport:
    rounds: int = 0
    colored_per_round: list[int] = field(default_factory=list)
    components: int = 0
    failures: int = 0
    red_created: int = 0


@dataclass
class CompletionReport:
    components: int = 0
    colored: int = 0
    failures: int = 0
    red_created: int = 0


@dataclass
class TidyReport:
    red_before: int = 0
    erased: int = 0
    extra_used: int = 0
    failures: int = 0


@dataclass
class ProperReport:
    violations: list[tuple[int, int]]
    red_red: list[tuple[int, int]]

    @property
    def ok(self) -> bool:
        return not self.violations and not self.red_red


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

class ColoringState:
    """Mutable coloring of one graph, with the incremental bookkeeping the
    process rules need: per-vertex uncolored degree, the bitmask of palette
    colors seen among neighbors, and the available-color count."""

    def __init__(self, graph: Graph, cfg: PaletteConfig, seed: int = 0,
                 presets: list[tuple[int, int]] | None = None,
                 rng=None):
        degs = graph.degrees()
        if len(degs) and int(degs.max()) > cfg.r:
            raise ConfigurationError(
                f"graph has a vertex of degree {int(degs.max())} > r={cfg.r}"
            )
        self.graph = graph
        self.cfg = cfg
        self.seed = int(seed)
        self.rng = rng if rng is not None else ProcessRandomness(seed)
        if hasattr(self.rng, "n_hint"):
            self.rng.n_hint = graph.n
        self.step = 0
        n = graph.n
        self.color = np.full(n, UNCOLORED, dtype=np.int16)
        self.uncolored_deg = degs.astype(np.int64)
        self.seen_mask = np.zeros(n, dtype=np.int64)
        self.avail_count = np.full(n, cfg.p, dtype=np.int64)
        # "touched this macro-step" bookkeeping, reset lazily via stamps
        self._stamp = 0
        self._touch_stamp = np.full(n, -1, dtype=np.int64)
        self._touch_count = np.zeros(n, dtype=np.int64)
        self._last_toucher = np.full(n, -1, dtype=np.int64)
        self._last_reducer = np.full(n, -1, dtype=np.int64)
        self._pending_stamp = np.full(n, -1, dtype=np.int64)
        for v, c in presets or []:
            if not (0 <= c < cfg.p):
                raise ConfigurationError(f"preset color {c} for vertex {v} invalid")
            if self.color[v] != UNCOLORED:
                raise ConfigurationError(f"vertex {v} preset twice")
            self._apply_color(v, c)
        bad = self._invariant_violation()
        if bad is not None:
            raise ConfigurationError(f"presets violate an invariant: {bad}")

    # -- low-level commits ---------------------------------------------------

    def _apply_color(self, v: int, c: int) -> None:
        """Set a palette color and update neighbor bookkeeping (no step
        accounting; used for presets)."""
        self.color[v] = c
        bit = 1 << c
        for u in self.graph.neighbors(v):
            u = int(u)
            self.uncolored_deg[u] -= 1
            if self.color[u] == UNCOLORED and not (self.seen_mask[u] & bit):
                self.seen_mask[u] |= bit
                self.avail_count[u] -= 1

    def available_colors(self, v: int) -> tuple[int, ...]:
        mask = int(self.seen_mask[v])
        return tuple(c for c in range(self.cfg.p) if not (mask >> c) & 1)

    def vertex_type(self, v: int) -> VertexType | None:
        if self.color[v] != UNCOLORED:
            return None
        return VertexType(int(self.uncolored_deg[v]), int(self.avail_count[v]))

    def empirical_distribution(self, exclude: np.ndarray | None = None) -> TypeDistribution:
        """Fraction of all vertices sitting at each type.  `exclude` drops the
        given vertices from both numerator and denominator (tree-ball
        boundaries distort the statistics)."""
        space = type_space(self.cfg)
        keep = self.color == UNCOLORED
        denom = self.graph.n
        if exclude is not None and len(exclude):
            keep = keep.copy()
            keep[exclude] = False
            denom -= len(exclude)
        d = self.uncolored_deg[keep]
        c = self.avail_count[keep]
        idx = d * (self.cfg.p - 1) + (c - 2)
        counts = np.bincount(idx, minlength=space.size)
        if len(counts) > space.size:
            raise InternalConsistencyError("vertex type outside the type space")
        return TypeDistribution(self.cfg, counts.astype(np.float64) / denom)

    def counts(self) -> dict[str, int]:
        c = self.color
        return {
            "uncolored": int((c == UNCOLORED).sum()),
            "palette": int(((c >= 0) & (c < self.cfg.p)).sum()),
            "red": int((c == RED).sum()),
            "extra": int((c == self.cfg.p).sum()),
        }

    # -- invariants -----------------------------------------------------------

    def _invariant_violation(self) -> str | None:
        g, p = self.graph, self.cfg.p
        cu = self.color[g.edges_u]
        cv = self.color[g.edges_v]
        palette_clash = (cu == cv) & (cu >= 0) & (cu < p)
        if palette_clash.any():
            i = int(np.nonzero(palette_clash)[0][0])
            return (f"edge ({int(g.edges_u[i])},{int(g.edges_v[i])}) joins two "
                    f"vertices colored {int(cu[i])}")
        uncolored = self.color == UNCOLORED
        if uncolored.any() and int(self.avail_count[uncolored].min()) < 2:
            v = int(np.nonzero(uncolored & (self.avail_count < 2))[0][0])
            return f"vertex {v} has {int(self.avail_count[v])} available colors"
        parts = self.counts()
        if sum(parts.values()) != g.n:
            return f"color counts {parts} do not add up to n={g.n}"
        return None

    def check_invariants(self) -> None:
        bad = self._invariant_violation()
        if bad is not None:
            raise InternalConsistencyError(bad)


def vertex_type_of(state: ColoringState, v: int) -> VertexType | None:
    """Type (uncolored neighbors, available colors) of v, or None if colored.
    Red neighbors reduce the degree but never remove a color."""
    return state.vertex_type(v)


# ---------------------------------------------------------------------------
# The round engine: shared by greedy steps and buffer-round reactions
# ---------------------------------------------------------------------------

class _RoundEngine:
    """Executes reaction rounds on a state: rule 3 (two step-colored
    neighbors -> red, transitively), rule 2 (single available color ->
    forced), rule 4 (adjacent simultaneous colorings -> both red), with
    simultaneous commits per round."""

    def __init__(self, state: ColoringState, report: StepReport,
                 track_cascades: bool = False, undo_log: list | None = None,
                 scoped: bool = False):
        self.state = state
        self.report = report
        self.track = track_cascades
        self.undo = undo_log
        # Scoped mode restricts rules 3/4 to collisions between cascades of
        # different lineages.  Buffer rounds need it: on a tree two cascades
        # serving one red cluster can never meet (the meeting would close a
        # cycle), so any such meeting on a finite graph is a geometry
        # artifact, and crediting it lets red regions feed on themselves.
        self.scoped = scoped
        state._stamp += 1
        self.stamp = state._stamp
        self.dirty: list[int] = []
        self.cascade_of: dict[int, int] = {}
        self.gen_of: dict[int, int] = {}
        self._prov_seen: dict[int, int] = {}
        self._prov_multi: set[int] = set()

    # -- commit primitives ----------------------------------------------------

    def _touch(self, v: int, toucher: int) -> None:
        st = self.state
        if st._touch_stamp[v] != self.stamp:
            st._touch_stamp[v] = self.stamp
            st._touch_count[v] = 0
        st._touch_count[v] += 1
        st._last_toucher[v] = toucher
        self.dirty.append(v)
        if self.scoped:
            prov = self.cascade_of.get(toucher)
            if v not in self._prov_seen:
                self._prov_seen[v] = prov
            elif prov is None or self._prov_seen[v] != prov:
                self._prov_multi.add(v)

    def commit_palette(self, v: int, c: int, touch: bool = True) -> None:
        """Color v with c.  `touch=False` marks a bulk commit (a buffer
        component colored by the solver): neighbors still lose the color and
        may become forced, but the commit earns no rule-3 credit — on a tree
        no outside vertex can border a connected component twice, so bulk
        commits there never collide, and the finite graph must match."""
        st = self.state
        undo = self.undo
        if undo is not None:
            undo.append((st.color, v, UNCOLORED))
        st.color[v] = c
        bit = 1 << c
        for u in st.graph.neighbors(v):
            u = int(u)
            if undo is not None:
                undo.append((st.uncolored_deg, u, int(st.uncolored_deg[u])))
            st.uncolored_deg[u] -= 1
            if st.color[u] == UNCOLORED:
                if touch:
                    self._touch(u, v)
                else:
                    self.dirty.append(u)
                if not (st.seen_mask[u] & bit):
                    if undo is not None:
                        undo.append((st.seen_mask, u, int(st.seen_mask[u])))
                        undo.append((st.avail_count, u, int(st.avail_count[u])))
                    st.seen_mask[u] |= bit
                    st.avail_count[u] -= 1
                    st._last_reducer[u] = v

    def commit_red(self, v: int, touch: bool = True) -> None:
        st = self.state
        undo = self.undo
        if undo is not None:
            undo.append((st.color, v, UNCOLORED))
        st.color[v] = RED
        for u in st.graph.neighbors(v):
            u = int(u)
            if undo is not None:
                undo.append((st.uncolored_deg, u, int(st.uncolored_deg[u])))
            st.uncolored_deg[u] -= 1
            if st.color[u] == UNCOLORED:
                if touch:
                    self._touch(u, v)
                else:
                    self.dirty.append(u)

    # -- cascade bookkeeping ---------------------------------------------------

    def start_cascade(self, v: int) -> int:
        rec = CascadeRecord(root=v, root_type=self.state.vertex_type(v))
        self.report.cascades.append(rec)
        idx = len(self.report.cascades) - 1
        self.cascade_of[v] = idx
        self.gen_of[v] = 0
        return idx

    def _record_colored(self, v: int, pre_type: VertexType) -> None:
        if not self.track or v not in self.cascade_of:
            return
        rec = self.report.cascades[self.cascade_of[v]]
        rec._tally(self.gen_of[v], pre_type)
        rec.total_colored += 1

    def _record_red(self, v: int, cause: int, collision: bool) -> None:
        if not self.track:
            return
        cid = self.cascade_of.get(cause)
        if cid is None:
            return
        rec = self.report.cascades[cid]
        rec.reds += 1
        if collision:
            rec.collision = True

    def _inherit(self, v: int, parent: int) -> None:
        if parent not in self.cascade_of:
            return
        self.cascade_of[v] = self.cascade_of[parent]
        self.gen_of[v] = self.gen_of.get(parent, 0) + 1

    # -- rounds ----------------------------------------------------------------

    def _screen_rule4(self, pending: list[tuple[int, int, VertexType | None]]):
        """Remove adjacent pending pairs; both become red.  In scoped mode an
        adjacent pair of one lineage is a cascade folded onto itself by a
        cycle, not a collision: the lower vertex commits and the other is
        re-queued to react to it."""
        st = self.state
        token = st._stamp = st._stamp + 1  # fresh sub-stamp for this round
        for v, _, _ in pending:
            st._pending_stamp[v] = token
        doomed: set[int] = set()
        deferred: set[int] = set()
        for v, _, _ in pending:
            for u in st.graph.neighbors(v):
                u = int(u)
                if st._pending_stamp[u] != token or u == v:
                    continue
                if (self.scoped
                        and self.cascade_of.get(v) is not None
                        and self.cascade_of.get(v) == self.cascade_of.get(u)):
                    deferred.add(max(v, u))
                else:
                    doomed.add(v)
                    doomed.add(u)
        deferred -= doomed
        survivors = []
        for v, c, pre in pending:
            if v in doomed:
                continue
            if v in deferred:
                self.dirty.append(v)
                continue
            survivors.append((v, c, pre))
        return survivors, sorted(doomed)

    def run_rounds(self, initial_pending: list[tuple[int, int, VertexType | None]]) -> None:
        """Round 0 commits the initial pending set (after rule-4 screening);
        later rounds alternate rule 3, rule 2, rule 4 until nothing moves."""
        st = self.state
        report = self.report
        pending = initial_pending
        first_round = bool(initial_pending)
        while True:
            progressed = False
            if not first_round:
                # rule 3, transitively: reds count as step-colored
                queue = deque(self.dirty)
                self.dirty = []
                scheduled_src: list[int] = []
                while queue:
                    v = queue.popleft()
                    if st.color[v] != UNCOLORED:
                        continue
                    # Starvation only arises from bulk commits (two vertices
                    # of one solver-colored component eating v's last two
                    # colors through a short cycle); treat it like a collision.
                    starved = st.avail_count[v] == 0
                    if self.scoped:
                        collided = v in self._prov_multi
                    else:
                        collided = (st._touch_stamp[v] == self.stamp
                                    and st._touch_count[v] >= 2)
                    if starved or collided:
                        cause = int(st._last_reducer[v] if starved
                                    else st._last_toucher[v])
                        self._inherit(v, cause)
                        self.commit_red(v)
                        report.rule3 += 1
                        self._record_red(v, cause, collision=True)
                        progressed = True
                        for u in st.graph.neighbors(v):
                            u = int(u)
                            if st.color[u] == UNCOLORED:
                                queue.append(u)
                    else:
                        scheduled_src.append(v)
                # rule 2: exactly one available color -> forced
                pending = []
                token = st._stamp = st._stamp + 1
                for v in scheduled_src + self.dirty:
                    if st.color[v] != UNCOLORED or st.avail_count[v] != 1:
                        continue
                    if st._pending_stamp[v] == token:
                        continue
                    st._pending_stamp[v] = token
                    forced = st.available_colors(v)[0]
                    parent = int(st._last_reducer[v])
                    self._inherit(v, parent)
                    pre = VertexType(int(st.uncolored_deg[v]) + 1, 2)
                    pending.append((v, forced, pre))
                self.dirty = []
            if not pending and not progressed:
                break
            if pending:
                survivors, doomed = self._screen_rule4(pending)
                for v in doomed:
                    self.commit_red(v)
                    report.rule4 += 1
                    self._record_red(v, v, collision=True)
                    progressed = True
                for v, c, pre in survivors:
                    self.commit_palette(v, c)
                    if first_round:
                        report.rule1 += 1
                    else:
                        report.rule2 += 1
                    if pre is not None:
                        self._record_colored(v, pre)
                    progressed = True
            if progressed:
                report.rounds += 1
            pending = []
            first_round = False


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _weight_table(cfg: PaletteConfig, tuning: TuningParams) -> np.ndarray:
    table = np.zeros((cfg.r + 1, cfg.p + 1))
    for t, w in tuning.weights.items():
        table[t.d, t.c] = w
    return table


def greedy_step(state: ColoringState, tuning: TuningParams, rng=None) -> StepReport:
    """One macro-step: sample the active set from the step-start types, let
    actives draw random available colors, and run reaction rounds to a
    fixpoint.  Invariants are re-checked on exit."""
    if tuning.cfg != state.cfg:
        raise ConfigurationError("tuning and state configs differ")
    if tuning.epsilon is None:
        raise ConfigurationError("tuning has no activation rate epsilon")
    rng = rng if rng is not None else state.rng
    i = state.step
    report = StepReport(step=i)

    uncolored = state.color == UNCOLORED
    table = _weight_table(state.cfg, tuning)
    probs = np.zeros(state.graph.n)
    probs[uncolored] = tuning.epsilon * table[
        state.uncolored_deg[uncolored], state.avail_count[uncolored]
    ]
    mask = rng.activation_mask(i, probs) & uncolored
    actives = np.nonzero(mask)[0]
    report.active = len(actives)

    engine = _RoundEngine(state, report, track_cascades=True)
    pending = []
    for v in actives:
        v = int(v)
        engine.start_cascade(v)
        avail = state.available_colors(v)
        c = rng.choose_color(i, v, avail)
        if c not in avail:
            raise ConfigurationError(f"adapter chose unavailable color {c} for {v}")
        pending.append((v, c, state.vertex_type(v)))
    engine.run_rounds(pending)

    state.step = i + 1
    state.check_invariants()
    return report


def trace_cascade(state: ColoringState, v: int, rng: np.random.Generator) -> CascadeRecord:
    """Run the cascade from v in isolation — no activation sampling — and
    restore the state afterwards.  Returns the per-generation record."""
    if state.color[v] != UNCOLORED:
        raise ConfigurationError(f"vertex {v} is already colored")
    undo: list = []
    report = StepReport(step=state.step)
    engine = _RoundEngine(state, report, track_cascades=True, undo_log=undo)
    engine.start_cascade(v)
    avail = state.available_colors(v)
    c = avail[int(rng.integers(len(avail)))]
    engine.run_rounds([(v, c, state.vertex_type(v))])
    record = report.cascades[0]
    for arr, idx, old in reversed(undo):
        arr[idx] = old
    return record


def run_phase1(state: ColoringState, tuning: TuningParams, steps: int,
               modified: bool = False) -> tuple[list[StepReport], list[TypeDistribution]]:
    """Apply `steps` greedy steps (each followed by buffer rounds in modified
    mode).  Returns the step reports and the empirical type distribution
    before any step and after each step."""
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    exclude = state.graph.boundary if state.graph.kind == "tree_ball" else None
    reports: list[StepReport] = []
    dists = [state.empirical_distribution(exclude=exclude)]
    for _ in range(steps):
        report = greedy_step(state, tuning)
        if modified:
            report.buffer = buffer_rounds(state)
        reports.append(report)
        dists.append(state.empirical_distribution(exclude=exclude))
    return reports, dists


def _ball3_uncolored(state: ColoringState,
                     reds: np.ndarray) -> tuple[list[int], dict[int, int]]:
    """Uncolored vertices within graph distance 3 of any red vertex, each
    labelled by the red whose breadth-first wave reached it first."""
    g = state.graph
    dist: dict[int, int] = {}
    owner: dict[int, int] = {}
    frontier = sorted(int(v) for v in reds)
    for v in frontier:
        dist[v] = 0
        owner[v] = v
    for depth in range(1, 4):
        nxt = []
        for v in frontier:
            for u in g.neighbors(v):
                u = int(u)
                if u not in dist:
                    dist[u] = depth
                    owner[u] = owner[v]
                    nxt.append(u)
        frontier = nxt
    targets = sorted(u for u, d in dist.items()
                     if d > 0 and state.color[u] == UNCOLORED)
    return targets, owner


def _starvation_guards(state: ColoringState, sub: list[int]) -> list[int]:
    """Uncolored vertices outside `sub` with at least as many neighbors in it
    as they have available colors — a bulk commit could erase their lists."""
    vset = set(sub)
    borders: dict[int, int] = {}
    for v in sub:
        for u in state.graph.neighbors(v):
            u = int(u)
            if u not in vset and state.color[u] == UNCOLORED:
                borders[u] = borders.get(u, 0) + 1
    return sorted(u for u, k in borders.items()
                  if k >= int(state.avail_count[u]))


def buffer_rounds(state: ColoringState, rng=None,
                  budget: int = DEFAULT_BUDGET) -> BufferReport:
    """Modified-mode relief: repeatedly list-color the uncolored vertices
    within distance 3 of red vertices until no red has any.  Components are
    committed in bulk and may force cascades at their boundaries, run as in
    a greedy step but with collisions scoped by lineage: only cascades
    serving different red clusters can meet without closing a cycle on a
    tree, so only those collisions make new reds here.  Infeasible or
    over-budget components turn red wholesale (counted, not fatal)."""
    report = BufferReport()
    while True:
        reds = np.nonzero(state.color == RED)[0]
        if not len(reds):
            break
        targets, owner = _ball3_uncolored(state, reds)
        if not targets:
            break
        pieces = connected_components(state.graph, targets)

        # Reds meeting a common piece form one cluster: every cascade the
        # piece forces traces back to all of them at once.
        parent: dict[int, int] = {}

        def find(a: int) -> int:
            while parent.setdefault(a, a) != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        roots = []
        for piece in pieces:
            owners = sorted({owner[v] for v in piece})
            for o in owners[1:]:
                parent[find(o)] = find(owners[0])
            roots.append(owners[0])

        round_report = StepReport(step=state.step)
        engine = _RoundEngine(state, round_report, track_cascades=False,
                              scoped=True)
        colored_this_round = 0
        for piece, root in zip(pieces, roots):
            prov = find(root)
            live = [v for v in piece if state.color[v] == UNCOLORED]
            if not live:
                continue
            for sub in connected_components(state.graph, live):
                report.components += 1
                # An outside vertex bordering the component as many times as
                # it has colors left could be starved by the commit (on a
                # tree it borders once and can lose only one).  Absorb such
                # vertices so the solver keeps them viable.
                sub = sub + _starvation_guards(state, sub)
                lists = {v: state.available_colors(v) for v in sub}
                status, assignment = color_component(state.graph, sub, lists, budget)
                # Bulk commits are no-credit (touch=False): an outside vertex
                # bordering one component twice is itself a cycle artifact.
                for v in sub:
                    engine.cascade_of[v] = prov
                if status == COLORED:
                    for v in sub:
                        engine.commit_palette(v, assignment[v], touch=False)
                    colored_this_round += len(sub)
                else:
                    report.failures += 1
                    for v in sub:
                        engine.commit_red(v, touch=False)
                    report.red_created += len(sub)
                engine.run_rounds([])
        colored_this_round += round_report.rule1 + round_report.rule2
        report.red_created += round_report.rule3 + round_report.rule4
        report.colored_per_round.append(colored_this_round)
        report.rounds += 1
        state.check_invariants()
    return report


def complete_remainder(state: ColoringState, rng=None,
                       budget: int = DEFAULT_BUDGET) -> CompletionReport:
    """Phase 2: properly color every remaining uncolored component from its
    available lists.  Trees are solved greedily (never blocks with >= 2-color
    lists); cyclic components fall back to backtracking; failures turn the
    component red and are counted."""
    report = CompletionReport()
    targets = np.nonzero(state.color == UNCOLORED)[0]
    if not len(targets):
        return report
    for comp in connected_components(state.graph, [int(v) for v in targets]):
        report.components += 1
        lists = {v: state.available_colors(v) for v in comp}
        status, assignment = color_component(state.graph, comp, lists, budget)
        if status == COLORED:
            for v in comp:
                state._apply_color(v, assignment[v])
            report.colored += len(comp)
        else:
            report.failures += 1
            report.red_created += len(comp)
            for v in comp:
                state.color[v] = RED
                for u in state.graph.neighbors(v):
                    state.uncolored_deg[int(u)] -= 1
    state.check_invariants()
    return report


def tidy_to_proper(state: ColoringState, rng=None,
                   budget: int = DEFAULT_BUDGET) -> TidyReport:
    """Erase the closed neighborhood of every red vertex and recolor it from
    restricted lists: previously non-red vertices may keep their old color or
    take the extra color; previously red vertices choose from the whole
    palette plus extra, minus whatever colored neighbors they still see.
    The result is a total coloring in palette + extra."""
    if (state.color == UNCOLORED).any():
        raise ConfigurationError("tidy-up requires a fully colored state")
    extra = extra_color(state.cfg)
    reds = np.nonzero(state.color == RED)[0]
    report = TidyReport(red_before=len(reds))
    if not len(reds):
        return report

    region: set[int] = set(int(v) for v in reds)
    for v in reds:
        for u in state.graph.neighbors(int(v)):
            region.add(int(u))
    report.erased = len(region)
    was_red = {v: state.color[v] == RED for v in region}
    prev = {v: int(state.color[v]) for v in region}
    for v in region:
        state.color[v] = UNCOLORED

    palette = tuple(range(state.cfg.p))
    lists: dict[int, tuple[int, ...]] = {}
    for v in region:
        if was_red[v]:
            seen = {int(state.color[u]) for u in state.graph.neighbors(v)
                    if state.color[u] != UNCOLORED}
            lists[v] = tuple(c for c in palette if c not in seen) + (extra,)
        else:
            lists[v] = (prev[v], extra)

    for comp in connected_components(state.graph, sorted(region)):
        status, assignment = color_component(state.graph, comp, lists, budget)
        if status == COLORED:
            for v in comp:
                state.color[v] = assignment[v]
        else:
            # fallback: old colors were proper off red, so restoring them and
            # painting the reds extra can only clash where red met red
            report.failures += 1
            for v in comp:
                state.color[v] = extra if was_red[v] else prev[v]
    report.extra_used = int((state.color == extra).sum())
    return report


def verify_proper(state: ColoringState) -> ProperReport:
    """Exhaustive edge scan.  Red and extra count as ordinary colors; a
    red-red edge is reported separately (legal mid-run, a violation in final
    output)."""
    g = state.graph
    cu = state.color[g.edges_u]
    cv = state.color[g.edges_v]
    equal = (cu == cv) & (cu != UNCOLORED)
    red_pair = equal & (cu == RED)
    clash = equal & (cu != RED)
    violations = [(int(g.edges_u[i]), int(g.edges_v[i]))
                  for i in np.nonzero(clash)[0]]
    red_red = [(int(g.edges_u[i]), int(g.edges_v[i]))
               for i in np.nonzero(red_pair)[0]]
    return ProperReport(violations=violations, red_red=red_red)


# ---------------------------------------------------------------------------
# Coloring dumps
# ---------------------------------------------------------------------------

def write_coloring(state: ColoringState, path: str) -> None:
    """Dump a finished coloring: header "n r p", then one "v color" line per
    vertex.  Refuses states that still contain uncolored or red vertices."""
    if (state.color == UNCOLORED).any():
        raise ConfigurationError("refusing to dump: uncolored vertices remain")
    if (state.color == RED).any():
        raise ConfigurationError("refusing to dump: red vertices remain")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{state.graph.n} {state.graph.r} {state.cfg.p}\n")
        for v in range(state.graph.n):
            fh.write(f"{v} {int(state.color[v])}\n")


def read_coloring(path: str) -> tuple[int, int, int, np.ndarray]:
    """Read a coloring dump; returns (n, r, p, colors)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigurationError("coloring dump: empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise ConfigurationError(f"coloring dump: bad header {lines[0]!r}")
    try:
        n, r, p = int(head[0]), int(head[1]), int(head[2])
    except ValueError:
        raise ConfigurationError(
            f"coloring dump: bad header {lines[0]!r}"
        ) from None
    if n < 0 or r < 0 or p < 2:
        raise ConfigurationError(f"coloring dump: bad header {lines[0]!r}")
    colors = np.full(n, UNCOLORED, dtype=np.int16)
    if len(lines) - 1 != n:
        raise ConfigurationError(
            f"coloring dump: expected {n} vertex lines, got {len(lines) - 1}"
        )
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ConfigurationError(f"coloring dump: bad line {ln!r}")
        try:
            v, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigurationError(f"coloring dump: bad line {ln!r}") from None
        if not (0 <= v < n):
            raise ConfigurationError(f"coloring dump: vertex {v} out of range")
        if not (0 <= c <= p):
            raise ConfigurationError(f"coloring dump: color {c} out of range")
        if colors[v] != UNCOLORED:
            raise ConfigurationError(f"coloring dump: vertex {v} listed twice")
        colors[v] = c
    return n, r, p, colors
