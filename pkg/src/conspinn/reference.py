"""Ground truth for the kinetic tests and error/conservation diagnostics.

The FD oracle for the 1-D kinetic Fokker-Planck problem is a Strang splitting:
half a step of first-order upwind transport (periodic in x), a full explicit
step of the velocity operator d_v(q d_v f + p v f) in flux form, and another
half transport step. The velocity flux is written as q M d_v(f/M) with M the
global Maxwellian, central-differenced at cell faces and closed with zero
flux at v = +-V. Both substeps telescope, so discrete mass is conserved to
round-off, and a sampled Maxwellian is an exact discrete equilibrium.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .collocation import QuadGrid
from .diffnet import ParamVector, eval_batch, read_blob, write_blob
from .errors import ConfigError, InvalidInputError
from .kinetic import FPConfig, fp_initial

log = logging.getLogger(__name__)

SNAP_TOL = 1e-3
FDGRID_FORMAT_VERSION = 1


@dataclass
class FDGrid:
    cfg: FPConfig
    n_x: int
    n_v: int
    n_t: int
    dt: float
    times: np.ndarray          # saved frame times
    values: np.ndarray         # (n_frames, n_x, n_v)

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def dv(self) -> float:
        return 2.0 * self.cfg.V / self.n_v

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def v(self) -> np.ndarray:
        return -self.cfg.V + (np.arange(self.n_v) + 0.5) * self.dv

    def mass(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2)) * self.dx * self.dv

    def frame_index(self, t: float) -> int:
        if t < -1e-12 or t > self.cfg.T + 1e-12:
            raise InvalidInputError(f"time {t} outside the reference range [0, {self.cfg.T}]")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > SNAP_TOL:
            raise InvalidInputError(
                f"nearest stored frame to t={t} is {self.times[k]}; refine the frame spacing"
            )
        return k

    def interp(self, t: float, x, v) -> np.ndarray:
        """Bilinear in (x, v), periodic in x, constant beyond the outer v cells."""
        frame = self.values[self.frame_index(t)]
        x = np.asarray(x, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        sx = x / self.dx - 0.5
        i0 = np.floor(sx).astype(int)
        ax = sx - i0
        i0 %= self.n_x
        i1 = (i0 + 1) % self.n_x
        sv = np.clip((v + self.cfg.V) / self.dv - 0.5, 0.0, self.n_v - 1.0)
        j0 = np.minimum(np.floor(sv).astype(int), self.n_v - 2)
        av = sv - j0
        j1 = j0 + 1
        return ((1 - ax) * (1 - av) * frame[i0, j0] + ax * (1 - av) * frame[i1, j0]
                + (1 - ax) * av * frame[i0, j1] + ax * av * frame[i1, j1])


def fd_stable_dt(cfg: FPConfig, n_x: int, n_v: int) -> float:
    dx = 1.0 / n_x
    dv = 2.0 * cfg.V / n_v
    v = -cfg.V + (np.arange(n_v) + 0.5) * dv
    up, down = _face_ratios(cfg, v)
    # worst diagonal coefficient of the explicit velocity step
    coeff = np.zeros(n_v)
    coeff[:-1] += down
    coeff[1:] += up
    transport = dx / np.max(np.abs(v))
    diffusion = dv**2 / (cfg.q * coeff.max())
    return 0.9 * min(transport, diffusion)


def _face_ratios(cfg: FPConfig, v: np.ndarray):
    """sqrt(M_i / M_{i+1}) and its inverse at the interior faces."""
    up = np.exp(cfg.p * (v[1:] ** 2 - v[:-1] ** 2) / (4.0 * cfg.q))
    return up, 1.0 / up


def fd_solve_fp(cfg: FPConfig, n_x: int = 64, n_v: int = 128, n_t: int | None = None,
                frame_spacing: float | None = 2e-3, initial=None) -> FDGrid:
    """Integrate the 1-D kinetic FP problem up to cfg.T.

    ``frame_spacing`` bounds the time between stored frames (None keeps only
    the first and last). ``initial`` overrides the configured initial data
    with an (n_x, n_v) array.
    """
    if n_x < 32 or n_v < 64:
        raise ConfigError("FD oracle needs n_x >= 32 and n_v >= 64")
    dt_max = fd_stable_dt(cfg, n_x, n_v)
    if n_t is None:
        n_t = int(np.ceil(cfg.T / dt_max))
        if frame_spacing is not None:
            # frames must be dense enough for nearest-frame snapping
            n_t = max(n_t, int(np.ceil(cfg.T / frame_spacing)))
    dt = cfg.T / n_t
    if dt > dt_max * (1 + 1e-12):
        raise ConfigError(f"dt = {dt:.3e} exceeds the stability bound {dt_max:.3e}; use n_t >= {int(np.ceil(cfg.T / dt_max))}")

    dx = 1.0 / n_x
    dv = 2.0 * cfg.V / n_v
    x = (np.arange(n_x) + 0.5) * dx
    v = -cfg.V + (np.arange(n_v) + 0.5) * dv
    if initial is None:
        f = fp_initial(x[:, None], v[None, :], cfg) * np.ones((n_x, n_v))
    else:
        f = np.array(initial, dtype=np.float64)
        if f.shape != (n_x, n_v):
            raise InvalidInputError(f"initial data must have shape {(n_x, n_v)}")

    up, down = _face_ratios(cfg, v)
    kq = cfg.q / dv
    pos = v > 0
    nu = 0.5 * dt * np.abs(v) / dx

    def transport(g):
        # upwind: v > 0 looks left, v < 0 looks right
        left = np.roll(g, 1, axis=0)
        right = np.roll(g, -1, axis=0)
        return np.where(pos, g - nu * (g - left), g - nu * (g - right))

    def velocity(g):
        flux = kq * (up * g[:, 1:] - down * g[:, :-1])
        div = np.zeros_like(g)
        div[:, :-1] += flux
        div[:, 1:] -= flux
        return g + (dt / dv) * div

    save_every = n_t if frame_spacing is None else max(1, int(np.floor(frame_spacing / dt + 1e-9)))
    frames = [f.copy()]
    times = [0.0]
    for step in range(1, n_t + 1):
        f = transport(velocity(transport(f)))
        if step % save_every == 0 or step == n_t:
            frames.append(f.copy())
            times.append(step * dt)
    return FDGrid(cfg, n_x, n_v, n_t, dt, np.array(times), np.stack(frames))


def save_fdgrid(grid: FDGrid, path):
    header = {
        "format_version": FDGRID_FORMAT_VERSION,
        "cfg": asdict(grid.cfg),
        "resolutions": {"n_x": grid.n_x, "n_v": grid.n_v, "n_t": grid.n_t},
        "dt": grid.dt,
        "times": grid.times.tolist(),
    }
    write_blob(path, header, grid.values.ravel())


def load_fdgrid(path) -> FDGrid:
    header, data = read_blob(path)
    try:
        cfg = FPConfig(**header["cfg"])
        res = header["resolutions"]
        times = np.array(header["times"])
        values = data.reshape(times.size, res["n_x"], res["n_v"])
        return FDGrid(cfg, res["n_x"], res["n_v"], res["n_t"], header["dt"], times, values)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: not a valid FD grid") from exc


# ---------------------------------------------------------------- diagnostics

def as_function(f):
    """Wrap a ParamVector (or pass through a callable) as points (N, d) -> values (N,)."""
    if isinstance(f, ParamVector):
        theta = f.tensor()
        spec = f.spec

        def net(points):
            with torch.no_grad():
                return eval_batch(theta, spec, torch.from_numpy(np.ascontiguousarray(points))).numpy()
        return net
    return f


@dataclass
class ErrorReport:
    linf_l2: float
    per_time_l2: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))


class ReferenceSampler:
    """Reference values pre-tabulated at (eval_time, quadrature node) pairs."""

    def __init__(self, reference, eval_times, quad: QuadGrid):
        self.times = np.asarray(eval_times, dtype=np.float64)
        self.nodes = quad.points()
        self.weights = quad.flat_weights()
        rows = []
        for t in self.times:
            if isinstance(reference, FDGrid):
                rows.append(reference.interp(t, self.nodes[:, 0], self.nodes[:, 1]))
            else:
                rows.append(np.asarray(reference(self.points_at(t)), dtype=np.float64))
        self.values = np.stack(rows)
        self.points = np.concatenate([self.points_at(t) for t in self.times])

    def points_at(self, t) -> np.ndarray:
        return np.concatenate([np.full((self.nodes.shape[0], 1), t), self.nodes], axis=1)

    def error(self, f) -> ErrorReport:
        approx = np.asarray(as_function(f)(self.points)).reshape(self.values.shape)
        with np.errstate(over="ignore"):
            per_time = np.sqrt(((approx - self.values) ** 2) @ self.weights)
        return ErrorReport(float(per_time.max()), per_time, self.times)


def eval_error(f, reference, eval_times, quad: QuadGrid) -> ErrorReport:
    """L-infinity in time of the L2 error over the quadrature domain."""
    return ReferenceSampler(reference, eval_times, quad).error(f)


def conservation_traces(f, problem: str, t_grid, quad: QuadGrid) -> dict:
    """Mass (and for Boltzmann momentum and 1/2 |v|^2 energy) at each time."""
    fn = as_function(f)
    nodes = quad.points()
    w = quad.flat_weights()
    t_grid = np.asarray(t_grid, dtype=np.float64)
    pts = np.concatenate([np.concatenate([np.full((nodes.shape[0], 1), t), nodes], axis=1) for t in t_grid])
    vals = np.asarray(fn(pts)).reshape(t_grid.size, nodes.shape[0])
    out = {"t": t_grid, "mass": vals @ w}
    if problem.startswith("boltzmann"):
        vx, vy = nodes[:, 0], nodes[:, 1]
        out["momentum_x"] = vals @ (w * vx)
        out["momentum_y"] = vals @ (w * vy)
        out["energy"] = 0.5 * vals @ (w * (vx**2 + vy**2))
    return out
