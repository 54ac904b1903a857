"""Small tanh MLPs with exact input jets and exact parameter gradients.

Input derivatives (first order and diagonal second order) are pushed forward
through the layers as truncated Taylor data. The resulting computation is
built from torch ops on a flat float64 parameter tensor, so reverse mode over
it yields the exact gradient of any loss that contains input derivatives.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidInputError, NonFiniteError, UnsupportedRequestError

torch.set_default_dtype(torch.float64)

FORMAT_VERSION = 1
_MAGIC = b"CPNN"


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be >= 1")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise InvalidInputError("hidden_widths must be non-empty with widths >= 1")
        if self.output_dim != 1:
            raise InvalidInputError("only scalar-output networks are supported")
        if self.activation != "tanh":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, self.output_dim]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(d["input_dim"], tuple(d["hidden_widths"]), d.get("output_dim", 1), d.get("activation", "tanh"))


@dataclass
class ParamVector:
    """Flat parameter vector: per layer, W (fan_in x fan_out, row-major) then b."""

    values: np.ndarray
    spec: NetSpec
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_params,):
            raise InvalidInputError(
                f"expected {self.spec.n_params} parameters, got shape {self.values.shape}"
            )

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise NonFiniteError(f"parameter {bad} is not finite")

    def tensor(self, requires_grad: bool = False) -> torch.Tensor:
        return torch.tensor(self.values, dtype=torch.float64, requires_grad=requires_grad)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.spec, self.seed)


@dataclass(frozen=True)
class DerivRequest:
    first_order: frozenset = frozenset()
    second_order: frozenset = frozenset()

    def __init__(self, first_order=(), second_order=()):
        object.__setattr__(self, "first_order", frozenset(int(i) for i in first_order))
        object.__setattr__(self, "second_order", frozenset(tuple(map(int, p)) for p in second_order))

    def validate(self, input_dim: int):
        for i in self.first_order:
            if not 0 <= i < input_dim:
                raise InvalidInputError(f"derivative index {i} out of range for input_dim {input_dim}")
        for i, j in self.second_order:
            if i != j:
                raise UnsupportedRequestError(f"off-diagonal second derivative ({i},{j}) not supported")
            if i not in self.first_order:
                raise InvalidInputError(f"second derivative ({i},{i}) requires first derivative {i}")


@dataclass
class Jet:
    """Value plus requested input derivatives; entries are floats or arrays/tensors."""

    value: object
    d1: dict = field(default_factory=dict)
    d2: dict = field(default_factory=dict)


def init_params(spec: NetSpec, seed: int) -> ParamVector:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    chunks = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks), spec, seed)


def unpack(theta, spec: NetSpec):
    """Split a flat parameter tensor/array into [(W, b), ...] views."""
    layers = []
    offset = 0
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta[offset:offset + fan_out]
        offset += fan_out
        layers.append((W, b))
    return layers


def jet_batch(theta: torch.Tensor, spec: NetSpec, X: torch.Tensor, req: DerivRequest | None = None) -> Jet:
    """Evaluate the network and requested input derivatives at the rows of X.

    Returns a Jet whose entries are 1-D tensors of length ``X.shape[0]``.
    """
    req = req or DerivRequest()
    req.validate(spec.input_dim)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise InvalidInputError(f"points must have shape (N, {spec.input_dim}), got {tuple(X.shape)}")
    firsts = sorted(req.first_order)
    seconds = sorted(i for i, _ in req.second_order)
    slot = {i: k for k, i in enumerate(firsts)}
    diag = [slot[i] for i in seconds]
    layers = unpack(theta, spec)

    # D: stacked first derivatives (C, N, width); S: diagonal second derivatives
    W, b = layers[0]
    z = X @ W + b
    D = W[firsts].unsqueeze(1) if firsts else None  # constant over points in layer one
    S = None
    for W, b in layers[1:]:
        a = torch.tanh(z)
        s = 1.0 - a * a
        if firsts:
            if seconds:
                dz = D[diag]
                term = -2.0 * a * dz * dz
                S = s * (term if S is None else term + S)
            D = s * D
        z = a @ W + b
        if firsts:
            D = D @ W
            if seconds:
                S = S @ W

    return Jet(
        value=z[:, 0],
        d1={i: D[k, :, 0].expand(z.shape[0]) for k, i in enumerate(firsts)},
        d2={(i, i): S[k, :, 0] for k, i in enumerate(seconds)},
    )


def eval_batch(theta: torch.Tensor, spec: NetSpec, X: torch.Tensor) -> torch.Tensor:
    return jet_batch(theta, spec, X).value


def _as_point(params: ParamVector, x) -> torch.Tensor:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (params.spec.input_dim,):
        raise InvalidInputError(f"point must have {params.spec.input_dim} coordinates, got shape {x.shape}")
    return torch.from_numpy(x.copy()).reshape(1, -1)


def forward(params: ParamVector, x) -> float:
    with torch.no_grad():
        return float(jet_batch(params.tensor(), params.spec, _as_point(params, x)).value[0])


def forward_jet(params: ParamVector, x, req: DerivRequest) -> Jet:
    with torch.no_grad():
        jet = jet_batch(params.tensor(), params.spec, _as_point(params, x), req)
    return Jet(
        value=float(jet.value[0]),
        d1={k: float(v[0]) for k, v in jet.d1.items()},
        d2={k: float(v[0]) for k, v in jet.d2.items()},
    )


def loss_gradient(params: ParamVector, loss) -> np.ndarray:
    """Exact gradient of ``loss(theta_tensor) -> scalar tensor`` by reverse mode."""
    theta = params.tensor(requires_grad=True)
    value = loss(theta)
    if not torch.isfinite(value):
        raise NonFiniteError(f"loss evaluated to {float(value.detach())}")
    (grad,) = torch.autograd.grad(value, theta, allow_unused=True)
    if grad is None:
        return np.zeros_like(params.values)
    grad = grad.detach().numpy().copy()
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("gradient contains non-finite entries")
    return grad


# --- binary container: magic, u32 header length, JSON header, float64 LE payload ---

def write_blob(path, header: dict, array: np.ndarray):
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def read_blob(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC or len(raw) < 8:
        raise InvalidInputError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{path}: corrupted header") from exc
    body = raw[8 + n:]
    if len(body) % 8:
        raise InvalidInputError(f"{path}: truncated payload")
    return header, np.frombuffer(body, dtype="<f8").astype(np.float64)


def save_params(params: ParamVector, path):
    header = {"spec": params.spec.to_dict(), "seed": params.seed, "format_version": FORMAT_VERSION}
    write_blob(path, header, params.values)


def load_params(path) -> ParamVector:
    header, values = read_blob(path)
    try:
        if header["format_version"] != FORMAT_VERSION:
            raise InvalidInputError(f"{path}: unsupported format_version {header['format_version']}")
        spec = NetSpec.from_dict(header["spec"])
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"{path}: corrupted header") from exc
    return ParamVector(values, spec, header.get("seed"))
