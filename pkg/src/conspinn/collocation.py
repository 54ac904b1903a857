"""Collocation sampling and fixed quadrature grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

AXES = ("t", "x", "v", "vx", "vy")
ROLES = ("interior", "initial", "boundary")


@dataclass(frozen=True)
class AxisSamples:
    axis: str
    values: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidInputError(f"unknown axis {self.axis!r}")
        if self.values.size < 1:
            raise InvalidInputError("an axis needs at least one sample")
        if np.any(self.values < self.lo) or np.any(self.values > self.hi):
            raise InvalidInputError(f"samples on axis {self.axis} leave [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class TensorBatch:
    """Tensor product of per-axis samples.

    A boundary batch carries axes (t, v) with signed velocities; the face is
    implied by the sign (x = 0 for v > 0, x = 1 for v < 0).
    """

    axes: tuple[AxisSamples, ...]
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise InvalidInputError(f"unknown role {self.role!r}")
        names = [a.axis for a in self.axes]
        if self.role == "interior" and "t" not in names:
            raise InvalidInputError("interior batches need a t axis")
        if self.role == "initial" and "t" in names:
            raise InvalidInputError("initial batches have no t axis")
        if self.role == "boundary":
            if names != ["t", "v"] or np.any(self.axes[1].values == 0):
                raise InvalidInputError("boundary batches are (t, signed v) with v != 0")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.values.size for a in self.axes)

    def __len__(self):
        return int(np.prod(self.shape))

    def grid(self) -> np.ndarray:
        """All tensor-product points, shape (len, n_axes), 'ij' ordering."""
        mesh = np.meshgrid(*[a.values for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def points(self) -> np.ndarray:
        """Network input points. Initial batches get t = 0 prepended; boundary
        batches expand to (t, x, v) on the inflow faces."""
        g = self.grid()
        if self.role == "initial":
            return np.concatenate([np.zeros((g.shape[0], 1)), g], axis=1)
        if self.role == "boundary":
            x = np.where(g[:, 1] > 0, 0.0, 1.0)
            return np.stack([g[:, 0], x, g[:, 1]], axis=1)
        return g


@dataclass(frozen=True)
class TimeGrid:
    """Midpoints of M equal cells of [0, T]; fixed for a whole run."""

    values: np.ndarray
    T: float

    @classmethod
    def uniform(cls, M: int, T: float) -> "TimeGrid":
        if M < 1:
            raise InvalidInputError("M must be >= 1")
        return cls((np.arange(M) + 0.5) * T / M, float(T))

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def weight(self) -> float:
        return self.T / self.M


@dataclass(frozen=True)
class QuadGrid:
    nodes: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]

    @classmethod
    def build(cls, sizes, bounds) -> "QuadGrid":
        rules = [gauss_legendre(n, lo, hi) for n, (lo, hi) in zip(sizes, bounds)]
        return cls(tuple(r[0] for r in rules), tuple(r[1] for r in rules))

    @property
    def dimension(self) -> int:
        return len(self.nodes)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_weights(self) -> np.ndarray:
        w = self.weights[0]
        for extra in self.weights[1:]:
            w = np.multiply.outer(w, extra)
        return np.asarray(w).ravel()


def _rng(seed):
    return np.random.default_rng(seed)


def sample_uniform(seed, n: int, lo: float, hi: float, axis: str = "t") -> AxisSamples:
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if not lo < hi:
        raise InvalidInputError("need lo < hi")
    values = np.sort(_rng(seed).uniform(lo, hi, size=n))
    return AxisSamples(axis, values, float(lo), float(hi))


def gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def sample_gamma_minus(seed, n: int, V: float, T: float = 1.0) -> TensorBatch:
    """n inflow-boundary (x, v) points split evenly across the two faces,
    crossed with n uniform times."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    ss = np.random.SeedSequence(seed if isinstance(seed, (list, tuple)) else [seed])
    t_seed, v_seed = ss.spawn(2)
    t_axis = sample_uniform(t_seed, n, 0.0, T, axis="t")
    rng = _rng(v_seed)
    n_pos = (n + 1) // 2
    speeds = rng.uniform(0.0, V, size=n)
    # open interval (0, V): uniform() can return exactly 0
    speeds = np.where(speeds == 0.0, V * 0.5, speeds)
    signed = np.concatenate([speeds[:n_pos], -speeds[n_pos:]])
    v_axis = AxisSamples("v", np.sort(signed), -float(V), float(V))
    return TensorBatch((t_axis, v_axis), "boundary")


def epoch_seed(seed: int, epoch: int, stream: int) -> list[int]:
    """Seed entropy for one sample stream of one epoch."""
    return [int(seed), int(epoch), int(stream)]
