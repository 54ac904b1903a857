"""Discretized PINN losses, conservation constraints and the training loop.

Four objectives share one residual loss and differ only in how the
conservation constraints c_l(t_i) enter:

    unconstrained  L
    penalty        L + sum_l beta_l (T/M) sum_i c_l(t_i)^2
    lagrange       L + sum_{l,i} lambda_l(t_i) c_l(t_i)
    augmented      L + mu (T/M) sum_{l,i} c_l(t_i)^2 + sum_{l,i} lambda_l(t_i) c_l(t_i)

Multipliers are updated by dual ascent, lambda += eta_dual * c, once every
``dual_every`` epochs, after the primal Adam step, using the constraint
values of that epoch.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import collocation as col
from .diffnet import (DerivRequest, NetSpec, ParamVector, init_params, jet_batch,
                      loss_gradient, save_params)
from .errors import ContractViolation, InvalidInputError, NonFiniteError
from .kinetic import (FP_TEST1, FP_TEST2, BoltzmannConfig, FPConfig, boltzmann_f0, boltzmann_residual,
                      bkw, collision_Q, fp_initial, fp_residual)
from .reference import FDGrid, ReferenceSampler, conservation_traces, fd_solve_fp

log = logging.getLogger(__name__)

MODES = ("unconstrained", "penalty", "lagrange", "augmented")
PROBLEMS = ("fp_test1", "fp_test2", "boltzmann_bkw")

# independent sample streams per epoch
_T, _X, _V, _IX, _IV, _B = range(6)


@dataclass
class TrainerConfig:
    problem: str = "fp_test1"
    mode: str = "augmented"
    hidden: tuple[int, ...] = (64, 64)
    epochs: int = 3000
    lr: float = 1e-3
    beta: float | tuple[float, ...] = 10.0
    mu: float = 10.0
    eta_dual: float = 1e-2
    dual_every: int = 1
    n_c: int = 16
    n_i: int = 16
    n_b: int = 16
    m_time: int = 16
    n_quad_x: int = 16
    n_quad_v: int = 32
    n_eval_times: int = 11
    n_trace: int = 101
    seed: int = 0
    reproducible: bool = False
    fd_nx: int = 64
    fd_nv: int = 128
    fp: FPConfig | None = None
    boltzmann: BoltzmannConfig | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.problem not in PROBLEMS:
            raise InvalidInputError(f"unknown problem {self.problem!r}")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if isinstance(self.beta, (list, tuple)):
            self.beta = tuple(float(b) for b in self.beta)
            betas = self.beta
        else:
            self.beta = float(self.beta)
            betas = (self.beta,)
        if min(betas) < 0 or self.mu < 0 or self.eta_dual < 0:
            raise InvalidInputError("beta, mu and eta_dual must be >= 0")
        if self.mode == "unconstrained":
            self.beta = 0.0 if not isinstance(self.beta, tuple) else tuple(0.0 for _ in self.beta)
            self.mu = 0.0
        for name in ("n_c", "n_i", "n_b", "m_time", "n_quad_x", "n_quad_v", "dual_every", "n_trace"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.n_eval_times < 2:
            raise InvalidInputError("n_eval_times must be >= 2")
        if self.problem.startswith("fp") and self.fp is None:
            self.fp = FP_TEST1 if self.problem == "fp_test1" else FP_TEST2
        if self.problem == "boltzmann_bkw" and self.boltzmann is None:
            self.boltzmann = BoltzmannConfig()

    @property
    def T(self) -> float:
        return self.fp.T if self.problem.startswith("fp") else self.boltzmann.T

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if isinstance(self.beta, tuple):
            d["beta"] = list(self.beta)
        return d


# ---------------------------------------------------------------- state types

@dataclass
class MultiplierField:
    values: np.ndarray  # (num_constraints, M)

    @classmethod
    def zeros(cls, n_constraints: int, M: int) -> "MultiplierField":
        return cls(np.zeros((n_constraints, M)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_GE: float
    loss_IC: float
    loss_BC: float | None
    constraint_norms: list[float]
    error_vs_reference: float
    time_averaged_mass: float


@dataclass
class RunReport:
    config: dict
    records: list[EpochRecord]
    params: ParamVector
    traces: dict
    multipliers: np.ndarray
    aborted: bool = False
    abort_reason: str = ""
    final_error: dict = field(default_factory=dict)


# ---------------------------------------------------------------- optimisation primitives

def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ContractViolation("gradient and parameters differ in shape")
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise NonFiniteError(f"non-finite gradient in {bad.size} entries (first: {int(bad[0])})")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=step)


def _betas(beta, n: int) -> np.ndarray:
    if isinstance(beta, (tuple, list, np.ndarray)):
        if len(beta) != n:
            raise ContractViolation(f"expected {n} penalty weights, got {len(beta)}")
        return np.asarray(beta, dtype=np.float64)
    return np.full(n, float(beta))


def assemble_loss(base, constraints, mode: str, multipliers: MultiplierField | np.ndarray | None,
                  cfg: TrainerConfig):
    """Combine the residual loss with constraint terms for one training mode.

    ``constraints`` has shape (L, M): constraint l evaluated on the time grid.
    """
    if mode not in MODES:
        raise ContractViolation(f"unknown mode {mode!r}")
    if mode == "unconstrained":
        return base
    L, M = constraints.shape
    lam = multipliers.values if isinstance(multipliers, MultiplierField) else multipliers
    if mode in ("lagrange", "augmented"):
        if lam is None or tuple(np.shape(lam)) != (L, M):
            raise ContractViolation(f"multipliers must have shape {(L, M)}")
        lam = torch.as_tensor(lam, dtype=torch.float64)
    dt_w = cfg.T / M
    sq = (constraints * constraints).sum(dim=1)
    if mode == "penalty":
        return base + (torch.from_numpy(_betas(cfg.beta, L)) * dt_w * sq).sum()
    linear = (lam * constraints).sum()
    if mode == "lagrange":
        return base + linear
    return base + cfg.mu * dt_w * sq.sum() + linear


def dual_ascent(multipliers: MultiplierField, constraint_values, mode: str, cfg: TrainerConfig) -> MultiplierField:
    c = np.asarray(constraint_values, dtype=np.float64)
    if c.shape != multipliers.values.shape:
        raise ContractViolation("constraint values and multipliers differ in shape")
    if mode not in ("lagrange", "augmented"):
        raise ContractViolation(f"dual ascent is undefined in mode {mode!r}")
    # Both modes take the step eta_dual. In augmented mode mu only weights the
    # quadratic term: a mu-sized step per epoch outruns the primal Adam step.
    return MultiplierField(multipliers.values + cfg.eta_dual * c)


# ---------------------------------------------------------------- problems

def net_model(theta, spec: NetSpec):
    """The network as a model: (X, req) -> Jet."""
    return lambda X, req=None: jet_batch(theta, spec, X, req)


def as_model(f):
    return net_model(f.tensor(), f.spec) if isinstance(f, ParamVector) else f


def _check_residual(res: torch.Tensor, points: np.ndarray, what: str):
    finite = torch.isfinite(res)
    if not bool(finite.all()):
        k = int(torch.nonzero(~finite)[0, 0])
        loc = tuple(float(c) for c in points[k])
        raise NonFiniteError(f"non-finite {what} residual at point {loc}", location=loc)


@dataclass
class FPBatches:
    interior: col.TensorBatch
    initial: col.TensorBatch
    boundary: col.TensorBatch

    def __post_init__(self):
        self.interior_pts = self.interior.points()
        self.initial_pts = self.initial.points()
        self.boundary_pts = self.boundary.points()


class FPProblem:
    n_constraints = 1

    def __init__(self, cfg: TrainerConfig):
        self.cfg = cfg
        self.fp = cfg.fp
        self.spec = NetSpec(3, cfg.hidden)
        self.time_grid = col.TimeGrid.uniform(cfg.m_time, self.fp.T)
        self.quad = col.QuadGrid.build((cfg.n_quad_x, cfg.n_quad_v), ((0.0, 1.0), (-self.fp.V, self.fp.V)))
        nodes = self.quad.points()
        self._c_points = torch.from_numpy(np.concatenate(
            [np.concatenate([np.full((nodes.shape[0], 1), t), nodes], axis=1) for t in self.time_grid.values]))
        self._c_weights = torch.from_numpy(self.quad.flat_weights())

    def batches(self, epoch: int) -> FPBatches:
        cfg, fp = self.cfg, self.fp
        s = lambda stream: col.epoch_seed(cfg.seed, epoch, stream)
        interior = col.TensorBatch((
            col.sample_uniform(s(_T), cfg.n_c, 0.0, fp.T, "t"),
            col.sample_uniform(s(_X), cfg.n_c, 0.0, 1.0, "x"),
            col.sample_uniform(s(_V), cfg.n_c, -fp.V, fp.V, "v"),
        ), "interior")
        initial = col.TensorBatch((
            col.sample_uniform(s(_IX), cfg.n_i, 0.0, 1.0, "x"),
            col.sample_uniform(s(_IV), cfg.n_i, -fp.V, fp.V, "v"),
        ), "initial")
        boundary = col.sample_gamma_minus(s(_B), cfg.n_b, fp.V, fp.T)
        return FPBatches(interior, initial, boundary)

    def base_loss(self, theta, b: FPBatches):
        return loss_fp_hat(net_model(theta, self.spec), b, self.fp)

    def constraints(self, theta, model=None):
        """(1, M) constraint values and the (M,) quadrature masses."""
        model = model or net_model(theta, self.spec)
        jet = model(self._c_points, DerivRequest([0]))
        M = self.time_grid.M
        dt = jet.d1[0].reshape(M, -1) @ self._c_weights
        mass = jet.value.reshape(M, -1) @ self._c_weights
        return dt.reshape(1, M), mass

    def reference(self, fd: FDGrid | None = None):
        return fd if fd is not None else fd_solve_fp(self.fp, self.cfg.fd_nx, self.cfg.fd_nv)


def loss_fp_hat(model, b: FPBatches, fp: FPConfig):
    """Discretized Fokker-Planck loss; returns (total, {"GE", "IC", "BC"}).

    ``model(X, req) -> Jet`` is a network (see :func:`net_model`) or any
    function that supplies exact jets.
    """
    T, V = fp.T, fp.V
    X = torch.from_numpy(b.interior_pts)
    jet = model(X, DerivRequest([0, 1, 2], [(2, 2)]))
    res = fp_residual(jet, X[:, 2], fp)
    _check_residual(res, b.interior_pts, "interior")
    ge = 2 * T * V / len(b.interior) * (res * res).sum()

    f_ic = model(torch.from_numpy(b.initial_pts), None).value
    target = torch.from_numpy(fp_initial(b.initial_pts[:, 1], b.initial_pts[:, 2], fp))
    r_ic = f_ic - target
    _check_residual(r_ic, b.initial_pts, "initial")
    ic = 2 * V / len(b.initial) * (r_ic * r_ic).sum()

    pts = b.boundary_pts
    mirrored = pts.copy()
    mirrored[:, 1] = 1.0 - mirrored[:, 1]
    both = model(torch.from_numpy(np.concatenate([pts, mirrored])), None).value
    n = pts.shape[0]
    r_bc = both[:n] - both[n:]
    _check_residual(r_bc, pts, "boundary")
    gamma = 2 * T * V
    bc = gamma / (2 * len(b.boundary)) * (r_bc * r_bc).sum()
    return ge + ic + bc, {"GE": ge, "IC": ic, "BC": bc}


def constraint_fp(params, t_i: float, quad: col.QuadGrid) -> float:
    """Quadrature of d/dt f over [0,1] x [-V,V] at time t_i (the rate of change of mass)."""
    nodes = quad.points()
    pts = np.concatenate([np.full((nodes.shape[0], 1), t_i), nodes], axis=1)
    with torch.no_grad():
        jet = as_model(params)(torch.from_numpy(pts), DerivRequest([0]))
    return float(jet.d1[0].numpy() @ quad.flat_weights())


@dataclass
class BoltzmannBatches:
    interior: col.TensorBatch
    initial: col.TensorBatch

    def __post_init__(self):
        self.initial_pts = self.initial.points()


class BoltzmannProblem:
    n_constraints = 4

    def __init__(self, cfg: TrainerConfig):
        self.cfg = cfg
        self.bz = cfg.boltzmann
        self.spec = NetSpec(3, cfg.hidden)
        self.cquad = self.bz.quad()
        V = self.bz.V
        self.time_grid = col.TimeGrid.uniform(cfg.m_time, self.bz.T)
        self.quad = col.QuadGrid.build((cfg.n_quad_v, cfg.n_quad_v), ((-V, V), (-V, V)))
        nodes = self.quad.points()
        self._c_points = torch.from_numpy(np.concatenate(
            [np.concatenate([np.full((nodes.shape[0], 1), t), nodes], axis=1) for t in self.time_grid.values]))
        w = self.quad.flat_weights()
        vx, vy = nodes[:, 0], nodes[:, 1]
        self._moment_weights = torch.from_numpy(np.stack([w, w * vx, w * vy, w * (vx**2 + vy**2)], axis=1))

    def batches(self, epoch: int) -> BoltzmannBatches:
        cfg, V = self.cfg, self.bz.V
        s = lambda stream: col.epoch_seed(cfg.seed, epoch, stream)
        interior = col.TensorBatch((
            col.sample_uniform(s(_T), cfg.n_c, 0.0, self.bz.T, "t"),
            col.sample_uniform(s(_X), cfg.n_c, -V, V, "vx"),
            col.sample_uniform(s(_V), cfg.n_c, -V, V, "vy"),
        ), "interior")
        initial = col.TensorBatch((
            col.sample_uniform(s(_IX), cfg.n_i, -V, V, "vx"),
            col.sample_uniform(s(_IV), cfg.n_i, -V, V, "vy"),
        ), "initial")
        return BoltzmannBatches(interior, initial)

    def base_loss(self, theta, b: BoltzmannBatches):
        return loss_boltzmann_hat(net_model(theta, self.spec), b, self.bz, self.cquad)

    def constraints(self, theta, model=None):
        model = model or net_model(theta, self.spec)
        jet = model(self._c_points, DerivRequest([0]))
        M = self.time_grid.M
        c = (jet.d1[0].reshape(M, -1) @ self._moment_weights).T
        mass = jet.value.reshape(M, -1) @ self._moment_weights[:, 0]
        return c, mass

    def reference(self, fd=None):
        return lambda pts: bkw(pts[:, 0], pts[:, 1], pts[:, 2])


def time_slice(model, t: float):
    """f(t, vx, vy) as a function of velocity arrays of any common shape."""
    def f(vx, vy):
        shape = np.shape(vx)
        pts = np.stack([np.full(vx.size, t), np.ravel(vx), np.ravel(vy)], axis=1)
        return model(torch.from_numpy(pts), None).value.reshape(shape)
    return f


def loss_boltzmann_hat(model, b: BoltzmannBatches, bz: BoltzmannConfig, cquad):
    T, V = bz.T, bz.V
    t_axis, vx_axis, vy_axis = b.interior.axes
    gx, gy = np.meshgrid(vx_axis.values, vy_axis.values, indexing="ij")
    vel = np.stack([gx.ravel(), gy.ravel()], axis=1)
    sq = []
    for t in t_axis.values:
        pts = np.concatenate([np.full((vel.shape[0], 1), t), vel], axis=1)
        jet = model(torch.from_numpy(pts), DerivRequest([0]))
        Q = collision_Q(time_slice(model, t), vel, cquad)
        res = boltzmann_residual(jet.d1[0], Q, bz)
        _check_residual(res, pts, "interior")
        sq.append((res * res).sum())
    ge = 4 * T * V**2 / len(b.interior) * torch.stack(sq).sum()
    f_ic = model(torch.from_numpy(b.initial_pts), None).value
    r_ic = f_ic - torch.from_numpy(boltzmann_f0(b.initial_pts[:, 1], b.initial_pts[:, 2]))
    _check_residual(r_ic, b.initial_pts, "initial")
    ic = 4 * V**2 / len(b.initial) * (r_ic * r_ic).sum()
    return ge + ic, {"GE": ge, "IC": ic, "BC": None}


def constraints_boltzmann(params, t_i: float, quad: col.QuadGrid):
    """(c1, c2, c3, c4): d/dt of the moments {1, vx, vy, |v|^2} at t_i."""
    nodes = quad.points()
    pts = np.concatenate([np.full((nodes.shape[0], 1), t_i), nodes], axis=1)
    with torch.no_grad():
        jet = as_model(params)(torch.from_numpy(pts), DerivRequest([0]))
    ft = jet.d1[0].numpy()
    w = quad.flat_weights()
    vx, vy = nodes[:, 0], nodes[:, 1]
    return tuple(float(ft @ (w * m)) for m in (np.ones_like(vx), vx, vy, vx**2 + vy**2))


def make_problem(cfg: TrainerConfig):
    return FPProblem(cfg) if cfg.problem.startswith("fp") else BoltzmannProblem(cfg)


# ---------------------------------------------------------------- training loop

def _configure_torch(reproducible: bool):
    if reproducible:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def train(cfg: TrainerConfig, reference=None, checkpoint_dir=None, checkpoint_every: int = 0,
          progress=None) -> RunReport:
    """Run one training and return every epoch record plus final traces.

    Record ``e`` holds the objective, its components and diagnostics at the
    parameters reached after ``e`` optimizer steps, evaluated on the batch of
    epoch ``e``; ``epochs=0`` yields only the initial record.
    """
    _configure_torch(cfg.reproducible)
    problem = make_problem(cfg)
    ref = problem.reference(reference)
    sampler = ReferenceSampler(ref, np.linspace(0.0, cfg.T, cfg.n_eval_times), problem.quad)
    L, M = problem.n_constraints, problem.time_grid.M

    params = init_params(problem.spec, cfg.seed)
    lam = MultiplierField.zeros(L, M)
    adam = AdamState.zeros(params.values.size)
    records: list[EpochRecord] = []
    aborted, reason = False, ""
    dual = cfg.mode in ("lagrange", "augmented")
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.epochs + 1):
        batches = problem.batches(epoch)
        side = {}

        def objective(theta):
            base, comps = problem.base_loss(theta, batches)
            C, mass = problem.constraints(theta)
            side.update(comps=comps, C=C, mass=mass, base=base)
            return assemble_loss(base, C, cfg.mode, lam, cfg)

        try:
            if epoch < cfg.epochs:
                grad = loss_gradient(params, lambda th: _capture(objective, th, side))
            else:
                with torch.no_grad():
                    _capture(objective, params.tensor(), side)
                    if not torch.isfinite(side["total"]):
                        raise NonFiniteError(f"loss evaluated to {float(side['total'])}")
        except NonFiniteError as exc:
            aborted, reason = True, f"epoch {epoch}: {exc}"
            log.error("aborting: %s", reason)
            break

        C = side["C"].detach().numpy()
        comps = side["comps"]
        records.append(EpochRecord(
            epoch=epoch,
            loss_total=float(side["total"]),
            loss_GE=float(comps["GE"].detach()),
            loss_IC=float(comps["IC"].detach()),
            loss_BC=None if comps["BC"] is None else float(comps["BC"].detach()),
            constraint_norms=[float(x) for x in np.sqrt(cfg.T / M * (C * C).sum(axis=1))],
            error_vs_reference=sampler.error(params).linf_l2,
            time_averaged_mass=float(side["mass"].detach().mean()),
        ))
        if progress is not None:
            progress(records[-1])
        if epoch == cfg.epochs:
            break

        new_values, adam = adam_step(params.values, grad, adam, cfg.lr)
        candidate = ParamVector(new_values, params.spec, params.seed)
        try:
            candidate.check_finite()
        except NonFiniteError as exc:
            aborted, reason = True, f"epoch {epoch}: {exc}"
            break
        params = candidate
        if dual and (epoch + 1) % cfg.dual_every == 0:
            lam = dual_ascent(lam, C, cfg.mode, cfg)
        if checkpoint_dir is not None and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            save_params(params, Path(checkpoint_dir) / f"checkpoint_{epoch + 1:06d}.bin")

    t_dense = np.linspace(0.0, cfg.T, cfg.n_trace)
    traces = conservation_traces(params, cfg.problem, t_dense, problem.quad)
    final = sampler.error(params)
    return RunReport(
        config=cfg.to_dict(),
        records=records,
        params=params,
        traces=traces,
        multipliers=lam.values,
        aborted=aborted,
        abort_reason=reason,
        final_error={"linf_l2": final.linf_l2, "per_time_l2": final.per_time_l2.tolist(),
                     "times": final.times.tolist()},
    )


def _capture(objective, theta, side):
    total = objective(theta)
    side["total"] = total.detach()
    return total
