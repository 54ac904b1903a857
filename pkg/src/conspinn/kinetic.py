"""Kinetic Fokker-Planck and homogeneous Boltzmann physics.

Fokker-Planck inputs are ordered (t, x, v); Boltzmann inputs (t, vx, vy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .collocation import gauss_legendre
from .diffnet import Jet
from .errors import ContractViolation, InvalidInputError

T_IDX, X_IDX, V_IDX = 0, 1, 2
VX_IDX, VY_IDX = 1, 2


@dataclass(frozen=True)
class FPConfig:
    q: float = 1.0
    p: float = 1.0
    V: float = 5.0
    T: float = 1.0
    initial: str = "test1"

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidInputError("q must be > 0")
        if self.p < 0:
            raise InvalidInputError("p must be >= 0")
        if not (self.V > 0 and self.T > 0):
            raise InvalidInputError("V and T must be > 0")
        if self.initial not in ("test1", "test2"):
            raise InvalidInputError(f"unknown initial condition {self.initial!r}")

    @cached_property
    def z1(self) -> float:
        """Normaliser of exp(-v^2) over [-V, V]."""
        nodes, weights = gauss_legendre(128, -self.V, self.V)
        return float(np.sum(weights * np.exp(-nodes**2)))

    @cached_property
    def maxwellian_norm(self) -> float:
        nodes, weights = gauss_legendre(128, -self.V, self.V)
        return float(np.sum(weights * np.exp(-self.p * nodes**2 / (2 * self.q))))


FP_TEST1 = FPConfig(q=1.0, p=1.0, V=5.0, T=1.0, initial="test1")
FP_TEST2 = FPConfig(q=0.1, p=0.1, V=5.0, T=3.0, initial="test2")


@dataclass(frozen=True)
class BoltzmannConfig:
    V: float = 5.0
    T: float = 3.0
    eps: float = 1.0
    n_vstar: int = 12
    n_angle: int = 8
    # kernel constant; 1/(2 pi) makes the BKW formula with S = 1 - exp(-t/8)/2 exact
    sigma: float = 1.0 / (2.0 * math.pi)

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInputError("eps must be > 0")
        if self.n_vstar < 4:
            raise InvalidInputError("n_vstar must be >= 4")
        if self.n_angle < 4 or self.n_angle % 2:
            raise InvalidInputError("n_angle must be even and >= 4")
        if not (self.V > 0 and self.T > 0 and self.sigma > 0):
            raise InvalidInputError("V, T and sigma must be > 0")

    def quad(self) -> "CollisionQuad":
        return CollisionQuad.build(self.V, self.n_vstar, self.n_angle, self.sigma)


@dataclass(frozen=True)
class CollisionQuad:
    """Gauss-Legendre grid for v_* on [-V,V]^2 and a uniform angle grid on [0, 2 pi)."""

    vstar: np.ndarray          # (n_vstar**2, 2)
    vstar_weights: np.ndarray  # (n_vstar**2,)
    angles: np.ndarray         # (n_angle,)
    angle_weights: np.ndarray  # (n_angle,)
    sigma: float = 1.0 / (2.0 * math.pi)

    @classmethod
    def build(cls, V: float, n_vstar: int, n_angle: int, sigma: float = 1.0 / (2.0 * math.pi)):
        if n_angle % 2:
            raise InvalidInputError("n_angle must be even")
        nodes, weights = gauss_legendre(n_vstar, -V, V)
        gx, gy = np.meshgrid(nodes, nodes, indexing="ij")
        vstar = np.stack([gx.ravel(), gy.ravel()], axis=1)
        vw = np.outer(weights, weights).ravel()
        angles = 2.0 * np.pi * np.arange(n_angle) / n_angle
        aw = np.full(n_angle, 2.0 * np.pi / n_angle)
        return cls(vstar, vw, angles, aw, sigma)


# ---------------------------------------------------------------- Fokker-Planck

def fp_residual(jet: Jet, v, cfg: FPConfig):
    """dt f + v dx f - q dvv f - p f - p v dv f."""
    try:
        ft, fx, fv = jet.d1[T_IDX], jet.d1[X_IDX], jet.d1[V_IDX]
        fvv = jet.d2[(V_IDX, V_IDX)]
    except KeyError as exc:
        raise ContractViolation(f"jet lacks derivative {exc.args[0]} needed by the FP residual") from exc
    return ft + v * fx - cfg.q * fvv - cfg.p * jet.value - cfg.p * v * fv


def fp_initial(x, v, cfg: FPConfig):
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any((x < 0) | (x > 1)) or np.any(np.abs(v) > cfg.V):
        raise InvalidInputError("initial condition evaluated outside [0,1] x [-V,V]")
    base = np.exp(-v**2) / cfg.z1
    if cfg.initial == "test1":
        out = base * np.ones_like(x)
    else:
        # int_0^1 (1 + cos 2 pi x) dx = 1, so the normaliser is z1 again
        out = (1.0 + np.cos(2.0 * np.pi * x)) * base
    return out if out.ndim else float(out)


def in_gamma_minus(x, v, V: float) -> bool:
    return (x == 0 and 0 < v < V) or (x == 1 and -V < v < 0)


def fp_boundary_pair(t, x, v, V: float = 5.0):
    if not in_gamma_minus(x, v, V):
        raise InvalidInputError(f"({t}, {x}, {v}) is not on the inflow boundary")
    return (t, 1.0 - x, v)


def maxwellian(v, cfg: FPConfig):
    return np.exp(-cfg.p * np.asarray(v, dtype=np.float64) ** 2 / (2 * cfg.q)) / cfg.maxwellian_norm


# ---------------------------------------------------------------- Boltzmann

def boltzmann_f0(vx, vy):
    r2 = np.asarray(vx) ** 2 + np.asarray(vy) ** 2
    return r2 / np.pi * np.exp(-r2)


def _bkw_s(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise InvalidInputError("BKW solution needs t >= 0")
    return 1.0 - np.exp(-t / 8.0) / 2.0


def bkw(t, vx, vy):
    s = _bkw_s(t)
    r2 = np.asarray(vx) ** 2 + np.asarray(vy) ** 2
    return np.exp(-r2 / (2 * s)) / (2 * np.pi * s**2) * (2 * s - 1 + (1 - s) / (2 * s) * r2)


def bkw_dt(t, vx, vy):
    """Closed-form time derivative of :func:`bkw` (ds/dt = (1 - s)/8)."""
    s = _bkw_s(t)
    r2 = np.asarray(vx) ** 2 + np.asarray(vy) ** 2
    A = 1.0 / (2 * np.pi * s**2)
    E = np.exp(-r2 / (2 * s))
    P = 2 * s - 1 + (1 - s) / (2 * s) * r2
    df_ds = A * E * (-2 * P / s + P * r2 / (2 * s**2) + 2 - r2 / (2 * s**2))
    return df_ds * (1 - s) / 8.0


def post_collision(v: np.ndarray, vstar: np.ndarray, angles: np.ndarray):
    """Post-collision velocities for every (v, v_*, angle) triple.

    v: (P, 2), vstar: (S, 2). Returns arrays of shape (P, S, A, 2).
    """
    centre = 0.5 * (v[:, None, :] + vstar[None, :, :])
    g = np.linalg.norm(v[:, None, :] - vstar[None, :, :], axis=-1)
    w = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    half = 0.5 * g[:, :, None, None] * w[None, None, :, :]
    return centre[:, :, None, :] + half, centre[:, :, None, :] - half


def _xp_sum(arr, axis):
    return arr.sum(axis) if isinstance(arr, np.ndarray) else arr.sum(dim=axis)


def collision_Q(f, v, quad: CollisionQuad):
    """Quadrature of the Maxwell-molecule collision operator Q(f, f).

    ``f`` maps arrays ``(vx, vy)`` of any common shape to values of that shape
    (numpy arrays or torch tensors). ``v`` is a single velocity or an array
    of shape (P, 2). Angle pairs phi, phi + pi swap v' and v'_*, so the gain
    term needs f only at v'(phi) for all phi.
    """
    v_arr = np.atleast_2d(np.asarray(v, dtype=np.float64))
    scalar = np.ndim(v) == 1
    n_a = quad.angles.size
    vp, _ = post_collision(v_arr, quad.vstar, quad.angles)
    fp = f(vp[..., 0], vp[..., 1])                        # (P, S, A)
    half = n_a // 2
    gain_integrand = fp[..., :half] * fp[..., half:]     # f(v') f(v'_*) for phi in [0, pi)
    aw = quad.angle_weights[:half] * 2.0
    vw = quad.vstar_weights
    if not isinstance(fp, np.ndarray):
        import torch
        aw = torch.from_numpy(aw)
        vw = torch.from_numpy(vw)
    gain = _xp_sum(_xp_sum(gain_integrand * aw, 2) * vw, 1)
    f_star = f(quad.vstar[:, 0], quad.vstar[:, 1])
    f_v = f(v_arr[:, 0], v_arr[:, 1])
    loss = f_v * _xp_sum(f_star * vw, 0) * float(quad.angle_weights.sum())
    out = quad.sigma * (gain - loss)
    return out[0] if scalar else out


def boltzmann_residual(jet_t, Qval, cfg: BoltzmannConfig):
    return jet_t - Qval / cfg.eps
