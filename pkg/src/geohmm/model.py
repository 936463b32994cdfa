"""Model containers, coordinate transforms, and geometric consistency.

A model couples an ordinary discrete HMM (transition matrix A, factored
observation matrices B, fixed start state) with a relation matrix R that
holds, for every ordered state pair, the mean and variance of the metric
displacement (dx, dy) and the mean direction and concentration of the
heading change (dtheta) recorded when traversing that pair.

Mean relations are required to be geometrically consistent. In a global
frame this means zero diagonal, anti-symmetry, and additivity of the mean
vectors. In state-relative frames each state i carries its own frame and
the x,y constraints pick up the rotation that carries one frame into
another; the heading component obeys the plain (wrapped) identities in
both modes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .circstats import KAPPA_MAX, vm_log_density, wrap_angle

VAR_FLOOR = 1e-6

# Defaults for diagonal (self-transition) entries: zero mean, small but
# non-degenerate spread.
DIAG_VAR_DEFAULT = 1e-2
DIAG_KAPPA_DEFAULT = 50.0

STOCHASTIC_TOL = 1e-9


class GeoHmmError(Exception):
    """Base class for library errors."""


class ModelFormatError(GeoHmmError):
    """Raised when a model or experience file cannot be parsed."""


class ImpossibleSequenceError(GeoHmmError):
    """Raised when a sequence has zero probability/density under a model."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or
                         "sequence impossible under model at step %d" % step)


class CoordinateMode(enum.Enum):
    GLOBAL = "global"
    RELATIVE = "relative"


class ConstraintLevel(enum.Enum):
    UNCONSTRAINED = "none"
    ANTISYMMETRIC = "antisym"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class RelationEntry:
    """Displacement distribution parameters for one ordered state pair."""

    mu_x: float
    mu_y: float
    mu_theta: float
    var_x: float
    var_y: float
    kappa_theta: float


class RelationMatrix:
    """N x N table of relation parameters, stored as six dense arrays."""

    __slots__ = ("mu_x", "mu_y", "mu_theta", "var_x", "var_y", "kappa_theta")

    def __init__(self, mu_x, mu_y, mu_theta, var_x, var_y, kappa_theta):
        arrays = [np.asarray(a, dtype=float) for a in
                  (mu_x, mu_y, mu_theta, var_x, var_y, kappa_theta)]
        n = arrays[0].shape[0]
        for a in arrays:
            if a.shape != (n, n):
                raise ValueError("relation arrays must all be (N, N)")
        self.mu_x, self.mu_y, self.mu_theta = arrays[0], arrays[1], arrays[2]
        self.var_x, self.var_y, self.kappa_theta = arrays[3], arrays[4], arrays[5]

    @property
    def n_states(self) -> int:
        return self.mu_x.shape[0]

    @classmethod
    def zero(cls, n: int, var: float = 1.0, kappa: float = 1.0,
             diag_var: float = DIAG_VAR_DEFAULT,
             diag_kappa: float = DIAG_KAPPA_DEFAULT) -> "RelationMatrix":
        """All-zero means with uniform off-diagonal spread parameters."""
        zeros = np.zeros((n, n))
        var_m = np.full((n, n), float(var))
        kap_m = np.full((n, n), float(kappa))
        np.fill_diagonal(var_m, diag_var)
        np.fill_diagonal(kap_m, diag_kappa)
        return cls(zeros.copy(), zeros.copy(), zeros.copy(),
                   var_m.copy(), var_m.copy(), kap_m)

    def entry(self, i: int, j: int) -> RelationEntry:
        return RelationEntry(
            float(self.mu_x[i, j]), float(self.mu_y[i, j]),
            float(self.mu_theta[i, j]), float(self.var_x[i, j]),
            float(self.var_y[i, j]), float(self.kappa_theta[i, j]))

    def copy(self) -> "RelationMatrix":
        return RelationMatrix(self.mu_x.copy(), self.mu_y.copy(),
                              self.mu_theta.copy(), self.var_x.copy(),
                              self.var_y.copy(), self.kappa_theta.copy())

    def validate(self):
        n = self.n_states
        diag = np.arange(n)
        for name, arr in (("mu_x", self.mu_x), ("mu_y", self.mu_y),
                          ("mu_theta", self.mu_theta)):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite values in relation %s" % name)
            if np.any(np.abs(arr[diag, diag]) > 0):
                raise ValueError("relation diagonal of %s must be zero" % name)
        if np.any(self.var_x <= 0) or np.any(self.var_y <= 0):
            raise ValueError("relation variances must be positive")
        if np.any(self.kappa_theta < 0) or np.any(self.kappa_theta > KAPPA_MAX):
            raise ValueError("kappa must lie in [0, KAPPA_MAX]")


@dataclass(frozen=True)
class GeoHmm:
    """Hidden Markov model with odometric relations.

    A is row-stochastic (N x N). B is one matrix per observation dimension
    with shape (alphabet size, N); each column is the symbol distribution
    for one state. The start distribution is the indicator at start_state.
    """

    n_states: int
    obs_dims: tuple
    A: np.ndarray
    B: tuple
    start_state: int
    relations: RelationMatrix
    mode: CoordinateMode = CoordinateMode.GLOBAL

    def __post_init__(self):
        object.__setattr__(self, "obs_dims", tuple(int(d) for d in self.obs_dims))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B",
                           tuple(np.asarray(b, dtype=float) for b in self.B))
        self.validate()

    def validate(self):
        n = self.n_states
        if n < 1:
            raise ValueError("n_states must be positive")
        if self.A.shape != (n, n):
            raise ValueError("A must be (N, N), got %r" % (self.A.shape,))
        if np.any(self.A < -STOCHASTIC_TOL):
            raise ValueError("A has negative entries")
        if np.max(np.abs(self.A.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise ValueError("rows of A must sum to 1")
        if len(self.B) != len(self.obs_dims):
            raise ValueError("need one B matrix per observation dimension")
        for i, b in enumerate(self.B):
            if b.shape != (self.obs_dims[i], n):
                raise ValueError("B[%d] must be (%d, %d), got %r"
                                 % (i, self.obs_dims[i], n, b.shape))
            if np.any(b < -STOCHASTIC_TOL):
                raise ValueError("B[%d] has negative entries" % i)
            if np.max(np.abs(b.sum(axis=0) - 1.0)) > STOCHASTIC_TOL:
                raise ValueError("columns of B[%d] must sum to 1" % i)
        if not (0 <= self.start_state < n):
            raise ValueError("start_state out of range")
        if self.relations.n_states != n:
            raise ValueError("relation matrix size mismatch")
        self.relations.validate()

    @property
    def n_obs_dims(self) -> int:
        return len(self.obs_dims)

    def replace(self, **kwargs) -> "GeoHmm":
        fields = dict(n_states=self.n_states, obs_dims=self.obs_dims,
                      A=self.A, B=self.B, start_state=self.start_state,
                      relations=self.relations, mode=self.mode)
        fields.update(kwargs)
        return GeoHmm(**fields)


@dataclass(frozen=True)
class ExperienceSequence:
    """Time-indexed observations plus the readings between them.

    observations has shape (T, l) of small nonnegative ints. readings has
    shape (T-1, 3); readings[t] is the (dx, dy, dtheta) recorded on the
    transition from time t to t+1. Time 0 carries no reading.
    """

    observations: np.ndarray
    readings: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=int)
        if obs.ndim != 2:
            raise ValueError("observations must be (T, l)")
        rd = np.asarray(self.readings, dtype=float)
        if rd.ndim != 2 or rd.shape[1] != 3:
            raise ValueError("readings must be (T-1, 3)")
        if rd.shape[0] != obs.shape[0] - 1:
            raise ValueError("need exactly T-1 readings for T observations")
        if not np.all(np.isfinite(rd)):
            raise ValueError("readings must be finite")
        if np.any(obs < 0):
            raise ValueError("observation symbols must be nonnegative")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "readings", rd)

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def n_dims(self) -> int:
        return self.observations.shape[1]

    def prefix(self, length: int) -> "ExperienceSequence":
        if not 1 <= length <= len(self):
            raise ValueError("prefix length out of range")
        return ExperienceSequence(self.observations[:length],
                                  self.readings[:length - 1])


def transform_point(mu_theta: float, point):
    """Rotate an (x, y) point by the heading change mu_theta."""
    x, y = point
    c, s = np.cos(mu_theta), np.sin(mu_theta)
    return (x * c - y * s, x * s + y * c)


def _rotate_xy(theta, x, y):
    """Vectorized rotation of stacked (x, y) by angles theta."""
    c, s = np.cos(theta), np.sin(theta)
    return x * c - y * s, x * s + y * c


def normal_log_density(x, mu, var):
    return -0.5 * ((np.asarray(x) - mu) ** 2 / var + np.log(2.0 * np.pi * var))


def relation_log_density(reading, entry: RelationEntry) -> float:
    dx, dy, dtheta = reading
    out = normal_log_density(dx, entry.mu_x, entry.var_x)
    out = out + normal_log_density(dy, entry.mu_y, entry.var_y)
    out = out + vm_log_density(dtheta, entry.mu_theta, entry.kappa_theta)
    return float(out)


def relation_density(reading, entry: RelationEntry) -> float:
    """Joint density of a (dx, dy, dtheta) reading for one relation entry.

    The three components are independent: normal in dx and dy, von Mises
    in dtheta.
    """
    return float(np.exp(relation_log_density(reading, entry)))


def embed_relations(x, y, theta, mode: CoordinateMode) -> tuple:
    """Mean relations induced by per-state coordinates (x_i, y_i, theta_i).

    Returns (mu_x, mu_y, mu_theta) as (N, N) arrays. The heading component
    is wrap(theta_j - theta_i) in both modes. In global mode the x,y
    components are the plain coordinate differences; in relative mode the
    global displacement is rotated into the origin state's frame (rotation
    by -theta_i). Output is exactly consistent at the additive level.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    dtheta = wrap_angle(theta[None, :] - theta[:, None])
    if mode is CoordinateMode.RELATIVE:
        dx, dy = _rotate_xy(-theta[:, None], dx, dy)
    return dx, dy, dtheta


@dataclass
class ConsistencyViolation:
    kind: str            # "diagonal" | "antisymmetry" | "additivity"
    component: str       # "xy" | "x" | "y" | "theta"
    indices: tuple
    magnitude: float


@dataclass
class ConsistencyReport:
    level: ConstraintLevel
    tol: float
    violations: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.consistent:
            return "consistent at level %s (tol %g)" % (self.level.value, self.tol)
        lines = ["%d violation(s) at level %s (tol %g):"
                 % (len(self.violations), self.level.value, self.tol)]
        for v in self.violations:
            lines.append("  %s[%s] %s magnitude %.6g"
                         % (v.kind, v.component,
                            ",".join(str(i) for i in v.indices), v.magnitude))
        return "\n".join(lines)


def _transport_to_origin_frame(mu_theta_ij, vx, vy):
    # Moves a frame-j vector into frame i under the relative convention
    # used by embed_relations (frames rotated by -theta).
    return _rotate_xy(mu_theta_ij, vx, vy)


def check_consistency(model: GeoHmm, level: ConstraintLevel,
                      tol: float = 1e-9) -> ConsistencyReport:
    """List every constraint violation beyond tol at the given level.

    Angular residuals are wrapped before comparison. An empty report means
    the model's mean relations are consistent at that level.
    """
    rep = ConsistencyReport(level=level, tol=tol)
    R = model.relations
    n = model.n_states
    diag = np.arange(n)

    def record(kind, component, indices, mag):
        if mag > tol:
            rep.violations.append(
                ConsistencyViolation(kind, component, indices, float(mag)))

    for comp, arr in (("x", R.mu_x), ("y", R.mu_y), ("theta", R.mu_theta)):
        for i in diag:
            record("diagonal", comp, (int(i),), abs(arr[i, i]))
    if level is ConstraintLevel.UNCONSTRAINED:
        return rep

    relative = model.mode is CoordinateMode.RELATIVE
    mu_x, mu_y, mu_t = R.mu_x, R.mu_y, R.mu_theta

    for i in range(n):
        for j in range(i + 1, n):
            t_res = abs(wrap_angle(mu_t[i, j] + mu_t[j, i]))
            record("antisymmetry", "theta", (i, j), t_res)
            if relative:
                bx, by = _transport_to_origin_frame(mu_t[i, j],
                                                    mu_x[j, i], mu_y[j, i])
                xy_res = np.hypot(mu_x[i, j] + bx, mu_y[i, j] + by)
                record("antisymmetry", "xy", (i, j), xy_res)
            else:
                record("antisymmetry", "x", (i, j), abs(mu_x[i, j] + mu_x[j, i]))
                record("antisymmetry", "y", (i, j), abs(mu_y[i, j] + mu_y[j, i]))

    if level is ConstraintLevel.ANTISYMMETRIC:
        return rep

    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                t_res = abs(wrap_angle(mu_t[i, j] + mu_t[j, k] - mu_t[i, k]))
                record("additivity", "theta", (i, j, k), t_res)
                if relative:
                    bx, by = _transport_to_origin_frame(
                        mu_t[i, j], mu_x[j, k], mu_y[j, k])
                    xy_res = np.hypot(mu_x[i, j] + bx - mu_x[i, k],
                                      mu_y[i, j] + by - mu_y[i, k])
                    record("additivity", "xy", (i, j, k), xy_res)
                else:
                    record("additivity", "x", (i, j, k),
                           abs(mu_x[i, j] + mu_x[j, k] - mu_x[i, k]))
                    record("additivity", "y", (i, j, k),
                           abs(mu_y[i, j] + mu_y[j, k] - mu_y[i, k]))
    return rep
