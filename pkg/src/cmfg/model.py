"""Finite-state game model with exact-rational and float64 arithmetic.

The model is a finite-horizon anonymous game: a finite state space X, a finite
action space, a transition kernel that is affine in the population measure
(realized through a threshold coupling against uniform noise), and stage costs
that are affine in the population measure.  Every numeric object carries an
arithmetic mode, either ``exact`` (``fractions.Fraction``) or ``float``
(float64); mixing modes inside one operation is an error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Scalar = Union[Fraction, float]

EXACT = "exact"
FLOAT = "float"

FLOAT_TOL = 1e-9        # float-mode tolerance for equality checks
FLOAT_SUM_TOL = 1e-12   # float-mode tolerance for probability mass

DEFAULT_STRATEGY_CAP = 4096
DEFAULT_JOINT_CAP = 4096
DEFAULT_ATOM_CAP = 4096
DEFAULT_LP_CAP = 65536
DEFAULT_OT_CAP = 10_000


class CapacityError(RuntimeError):
    """Raised when an enumeration or state-space bound would be exceeded."""


def check_mode(mode: str) -> str:
    if mode not in (EXACT, FLOAT):
        raise ValueError(f"unknown arithmetic mode {mode!r}")
    return mode


def coerce_scalar(value, mode: str) -> Scalar:
    """Coerce a number into the given mode; cross-mode values are rejected."""
    if mode == EXACT:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, int):
            return Fraction(value)
        raise ValueError(f"exact mode requires Fraction or int, got {type(value).__name__}")
    if isinstance(value, float):
        return value
    if isinstance(value, int):
        return float(value)
    raise ValueError(f"float mode requires float or int, got {type(value).__name__}")


def zero(mode: str) -> Scalar:
    return Fraction(0) if mode == EXACT else 0.0


def one(mode: str) -> Scalar:
    return Fraction(1) if mode == EXACT else 1.0


@dataclass(frozen=True)
class FiniteSpace:
    """Ordered set of distinct labels; the order defines the index bijection."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("a finite space needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be distinct")
        if not all(isinstance(l, str) for l in self.labels):
            raise ValueError("labels must be strings")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} not in space {self.labels}") from None


@dataclass(frozen=True)
class ProbabilityVector:
    """Measure on a FiniteSpace: nonnegative weights with total mass one.

    In exact mode the mass constraint is literal; in float mode the total may
    deviate from 1 by at most ``FLOAT_SUM_TOL``.
    """

    space: FiniteSpace
    weights: tuple[Scalar, ...]
    mode: str

    def __post_init__(self):
        check_mode(self.mode)
        if len(self.weights) != len(self.space):
            raise ValueError("weight count does not match space size")
        object.__setattr__(
            self, "weights", tuple(coerce_scalar(w, self.mode) for w in self.weights)
        )
        for i, w in enumerate(self.weights):
            if w < 0:
                raise ValueError(f"negative weight at index {i}: {w}")
        total = sum(self.weights)
        if self.mode == EXACT:
            if total != 1:
                raise ValueError(f"exact weights sum to {total}, not 1")
        elif abs(total - 1.0) > FLOAT_SUM_TOL:
            raise ValueError(f"float weights sum to {total!r}, |sum-1| > {FLOAT_SUM_TOL}")

    @staticmethod
    def uniform(space: FiniteSpace, mode: str) -> "ProbabilityVector":
        d = len(space)
        if mode == EXACT:
            return ProbabilityVector(space, (Fraction(1, d),) * d, EXACT)
        return ProbabilityVector(space, (1.0 / d,) * d, FLOAT)

    @staticmethod
    def dirac(space: FiniteSpace, index: int, mode: str) -> "ProbabilityVector":
        w = [zero(mode)] * len(space)
        w[index] = one(mode)
        return ProbabilityVector(space, tuple(w), mode)

    def to_float(self) -> "ProbabilityVector":
        return ProbabilityVector(self.space, tuple(float(w) for w in self.weights), FLOAT)

    def __getitem__(self, index: int) -> Scalar:
        return self.weights[index]


def _require_same_frame(m: ProbabilityVector, n: ProbabilityVector) -> None:
    if m.space.labels != n.space.labels:
        raise ValueError("measures live on different spaces")
    if m.mode != n.mode:
        raise ValueError(f"mixing arithmetic modes: {m.mode} vs {n.mode}")


def dist(m: ProbabilityVector, n: ProbabilityVector) -> Scalar:
    """Total-variation style metric: half the L1 distance between weights."""
    _require_same_frame(m, n)
    total = sum(abs(a - b) for a, b in zip(m.weights, n.weights))
    return total / 2 if m.mode == FLOAT else Fraction(total, 2)


def mean_of(m: ProbabilityVector) -> Scalar:
    """m(1) - m(-1) for a measure on the two-point space {-1, 1}."""
    if sorted(m.space.labels) != ["-1", "1"]:
        raise ValueError("mean_of is defined only on the state space {-1, 1}")
    return m.weights[m.space.index("1")] - m.weights[m.space.index("-1")]


@dataclass(frozen=True)
class FlowTrajectory:
    """A time-indexed path of measures m(0), ..., m(T)."""

    measures: tuple[ProbabilityVector, ...]

    def __post_init__(self):
        if not self.measures:
            raise ValueError("empty trajectory")
        first = self.measures[0]
        for m in self.measures[1:]:
            _require_same_frame(first, m)

    @property
    def mode(self) -> str:
        return self.measures[0].mode

    @property
    def space(self) -> FiniteSpace:
        return self.measures[0].space

    def __len__(self) -> int:
        return len(self.measures)

    def __getitem__(self, t: int) -> ProbabilityVector:
        return self.measures[t]

    def to_float(self) -> "FlowTrajectory":
        return FlowTrajectory(tuple(m.to_float() for m in self.measures))


def flow_distance(a: FlowTrajectory, b: FlowTrajectory) -> Scalar:
    """Sum over t of dist(a(t), b(t))."""
    if len(a) != len(b):
        raise ValueError("trajectories have different lengths")
    return sum(dist(x, y) for x, y in zip(a.measures, b.measures))


@dataclass(frozen=True)
class RestrictedStrategy:
    """Feedback rule (t, x) -> action index, the table of a Markov open-loop strategy."""

    actions: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.actions:
            raise ValueError("strategy table must cover at least one period")
        width = len(self.actions[0])
        for row in self.actions:
            if len(row) != width:
                raise ValueError("ragged strategy table")
            for a in row:
                if not isinstance(a, int) or a < 0:
                    raise ValueError("actions must be nonnegative indices")

    def action(self, t: int, x: int) -> int:
        return self.actions[t][x]

    def sort_key(self) -> tuple[int, ...]:
        # row-major flattening; tuple order gives the lexicographic order
        return tuple(a for row in self.actions for a in row)


@dataclass(frozen=True)
class AffineSimplexMap:
    """Row of an affine-in-measure kernel: a_i(m) = base_i + sum_y coef[i][y] m(y)."""

    base: tuple[Scalar, ...]
    coef: tuple[tuple[Scalar, ...], ...]

    def __post_init__(self):
        d = len(self.base)
        if len(self.coef) != d or any(len(row) != d for row in self.coef):
            raise ValueError("coef must be a d x d table matching base")

    def weights_at(self, m: Sequence[Scalar]) -> tuple[Scalar, ...]:
        return tuple(
            b + sum(c * w for c, w in zip(row, m) if c)
            for b, row in zip(self.base, self.coef)
        )

    def violations(self, mode: str) -> list[str]:
        """Messages for each violated simplex-map invariant (empty if valid)."""
        out = []
        tol = 0 if mode == EXACT else FLOAT_SUM_TOL
        total = sum(self.base)
        if abs(total - 1) > tol:
            out.append(f"base weights sum to {total}, not 1")
        for y in range(len(self.base)):
            col = sum(row[y] for row in self.coef)
            if abs(col) > tol:
                out.append(f"coef column y={y} sums to {col}, not 0")
        for i, (b, row) in enumerate(zip(self.base, self.coef)):
            for y, c in enumerate(row):
                if b + c < -tol:
                    out.append(f"negative value {b + c} at vertex y={y}, target i={i}")
        return out


@dataclass(frozen=True)
class ThresholdTransition:
    """Transition kernel rows indexed by (t, x, a)."""

    rows: tuple[tuple[tuple[AffineSimplexMap, ...], ...], ...]

    def row(self, t: int, x: int, a: int) -> AffineSimplexMap:
        return self.rows[t][x][a]


@dataclass(frozen=True)
class AffineCost:
    """Stage costs affine in the measure, plus an affine terminal cost.

    running(t, x, m, a) = running_base[t][x][a] + sum_y running_coef[t][x][a][y] m(y)
    terminal(x, m)      = terminal_base[x] + sum_y terminal_coef[x][y] m(y)
    """

    running_base: tuple[tuple[tuple[Scalar, ...], ...], ...]
    running_coef: tuple[tuple[tuple[tuple[Scalar, ...], ...], ...], ...]
    terminal_base: tuple[Scalar, ...]
    terminal_coef: tuple[tuple[Scalar, ...], ...]


@dataclass(frozen=True)
class GameSpec:
    """Complete description of one anonymous mean-field game instance."""

    horizon: int
    states: FiniteSpace
    actions: FiniteSpace
    transition: ThresholdTransition
    cost: AffineCost
    arithmetic: str

    def __post_init__(self):
        check_mode(self.arithmetic)
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        T, dx, da = self.horizon, len(self.states), len(self.actions)
        tr = self.transition.rows
        if len(tr) != T or any(len(by_x) != dx for by_x in tr) or any(
            len(by_a) != da for by_x in tr for by_a in by_x
        ):
            raise ValueError("transition table shape does not match (T, |X|, |A|)")
        for by_x in tr:
            for by_a in by_x:
                for row in by_a:
                    if len(row.base) != dx:
                        raise ValueError("transition row dimension does not match |X|")
        c = self.cost
        if len(c.running_base) != T or len(c.running_coef) != T:
            raise ValueError("running cost must cover t = 0..T-1")
        for base_x, coef_x in zip(c.running_base, c.running_coef):
            if len(base_x) != dx or len(coef_x) != dx:
                raise ValueError("running cost state dimension mismatch")
            for base_a, coef_a in zip(base_x, coef_x):
                if len(base_a) != da or len(coef_a) != da:
                    raise ValueError("running cost action dimension mismatch")
                if any(len(row) != dx for row in coef_a):
                    raise ValueError("running cost coef dimension mismatch")
        if len(c.terminal_base) != dx or len(c.terminal_coef) != dx or any(
            len(row) != dx for row in c.terminal_coef
        ):
            raise ValueError("terminal cost dimension mismatch")
        self._check_scalar_types()

    def _check_scalar_types(self):
        want = Fraction if self.arithmetic == EXACT else float

        def walk(node):
            if isinstance(node, tuple):
                for item in node:
                    walk(item)
            elif isinstance(node, AffineSimplexMap):
                walk(node.base)
                walk(node.coef)
            elif not isinstance(node, want):
                raise ValueError(
                    f"{self.arithmetic} mode game contains {type(node).__name__} entry {node!r}"
                )

        walk(self.transition.rows)
        walk((self.cost.running_base, self.cost.running_coef,
              self.cost.terminal_base, self.cost.terminal_coef))

    def kernel(self, t: int, x: int, m: ProbabilityVector, a: int) -> ProbabilityVector:
        """Distribution of the next state from (t, x) under action a and measure m."""
        if m.mode != self.arithmetic:
            raise ValueError(f"mixing arithmetic modes: game {self.arithmetic}, measure {m.mode}")
        w = self.transition.row(t, x, a).weights_at(m.weights)
        return ProbabilityVector(self.states, w, self.arithmetic)

    def running_cost(self, t: int, x: int, m: ProbabilityVector, a: int) -> Scalar:
        if m.mode != self.arithmetic:
            raise ValueError(f"mixing arithmetic modes: game {self.arithmetic}, measure {m.mode}")
        base = self.cost.running_base[t][x][a]
        coef = self.cost.running_coef[t][x][a]
        return base + sum(c * w for c, w in zip(coef, m.weights) if c)

    def terminal_cost(self, x: int, m: ProbabilityVector) -> Scalar:
        if m.mode != self.arithmetic:
            raise ValueError(f"mixing arithmetic modes: game {self.arithmetic}, measure {m.mode}")
        return self.cost.terminal_base[x] + sum(
            c * w for c, w in zip(self.cost.terminal_coef[x], m.weights) if c
        )

    def to_float(self) -> "GameSpec":
        """Float64 copy of the game; this is a conversion, not a mode mix."""
        if self.arithmetic == FLOAT:
            return self

        def conv_map(row: AffineSimplexMap) -> AffineSimplexMap:
            return AffineSimplexMap(
                tuple(float(b) for b in row.base),
                tuple(tuple(float(c) for c in r) for r in row.coef),
            )

        tr = ThresholdTransition(
            tuple(tuple(tuple(conv_map(r) for r in by_a) for by_a in by_x)
                  for by_x in self.transition.rows)
        )
        c = self.cost
        cost = AffineCost(
            tuple(tuple(tuple(float(v) for v in ba) for ba in bx) for bx in c.running_base),
            tuple(tuple(tuple(tuple(float(v) for v in row) for row in ca) for ca in cx)
                  for cx in c.running_coef),
            tuple(float(v) for v in c.terminal_base),
            tuple(tuple(float(v) for v in row) for row in c.terminal_coef),
        )
        return GameSpec(self.horizon, self.states, self.actions, tr, cost, FLOAT)


def categorical_pick(weights: Sequence[Scalar], z) -> int:
    """Index whose cumulative-weight interval (cum_{j-1}, cum_j] contains z.

    Zero-weight indices are never returned; the first positive interval also
    contains z = 0, and in float mode a cumulative sum that falls short of z
    by rounding yields the last positive index.
    """
    cum = 0
    last_positive = None
    for j, w in enumerate(weights):
        if w > 0:
            cum = cum + w
            last_positive = j
            if cum >= z:
                return j
    if last_positive is None:
        raise ValueError("no positive weight to sample from")
    return last_positive


def psi_sample(game: GameSpec, t: int, x: int, m: ProbabilityVector, a: int, z) -> int:
    """Threshold realization of the kernel: the state whose cumulative-weight
    interval (cum_{j-1}, cum_j] contains z; the first nonempty interval
    also contains z = 0."""
    if z < 0 or z > 1:
        raise ValueError(f"noise draw {z!r} outside [0, 1]")
    weights = game.transition.row(t, x, a).weights_at(m.weights)
    return categorical_pick(weights, z)


def lipschitz_modulus(game: GameSpec) -> Scalar:
    """Diagnostic bound 2 * max |coef| on the measure-sensitivity of kernel rows."""
    worst = zero(game.arithmetic)
    for by_x in game.transition.rows:
        for by_a in by_x:
            for row in by_a:
                for r in row.coef:
                    for c in r:
                        if abs(c) > worst:
                            worst = abs(c)
    return 2 * worst


def strategy_count(game: GameSpec) -> int:
    return len(game.actions) ** (game.horizon * len(game.states))


def enumerate_strategies(
    game: GameSpec, cap: int = DEFAULT_STRATEGY_CAP
) -> tuple[RestrictedStrategy, ...]:
    """All restricted strategies in lexicographic order of their flattened tables."""
    count = strategy_count(game)
    if count > cap:
        raise CapacityError(
            f"strategy enumeration needs {count} strategies, cap is {cap}"
        )
    T, dx, da = game.horizon, len(game.states), len(game.actions)
    out = []
    for flat in itertools.product(range(da), repeat=T * dx):
        out.append(RestrictedStrategy(
            tuple(tuple(flat[t * dx:(t + 1) * dx]) for t in range(T))
        ))
    return tuple(out)


def strategy_index(game: GameSpec, phi: RestrictedStrategy) -> int:
    """Position of phi in enumerate_strategies order (mixed-radix value)."""
    da = len(game.actions)
    idx = 0
    for a in phi.sort_key():
        if a >= da:
            raise ValueError("action index outside the game's action space")
        idx = idx * da + a
    return idx


def empirical_measure(
    space: FiniteSpace, states: Sequence[int], mode: str = EXACT
) -> ProbabilityVector:
    """Empirical distribution of a list of state indices."""
    if not states:
        raise ValueError("empirical measure of an empty sample")
    counts = [0] * len(space)
    for s in states:
        counts[s] += 1
    n = len(states)
    if mode == EXACT:
        return ProbabilityVector(space, tuple(Fraction(c, n) for c in counts), EXACT)
    return ProbabilityVector(space, tuple(c / n for c in counts), FLOAT)


@dataclass(frozen=True)
class Violation:
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]
    lipschitz: Scalar

    def lines(self) -> list[str]:
        head = "valid" if self.ok else f"invalid ({len(self.violations)} violations)"
        out = [f"game validation: {head}", f"kernel modulus bound: {self.lipschitz}"]
        out.extend(f"  {v.location}: {v.message}" for v in self.violations)
        return out


def validate_game(game: GameSpec) -> ValidationReport:
    """Check every kernel row's simplex-map invariants; never raises."""
    violations = []
    for t, by_x in enumerate(game.transition.rows):
        for x, by_a in enumerate(by_x):
            for a, row in enumerate(by_a):
                for msg in row.violations(game.arithmetic):
                    violations.append(Violation(f"transition[t={t}][x={x}][a={a}]", msg))
    return ValidationReport(not violations, tuple(violations), lipschitz_modulus(game))
