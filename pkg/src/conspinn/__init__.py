"""Conservative physics-informed networks for kinetic equations."""

from .diffnet import DerivRequest, Jet, NetSpec, ParamVector, forward, forward_jet, init_params, loss_gradient
from .trainer import TrainerConfig, train

__all__ = [
    "DerivRequest", "Jet", "NetSpec", "ParamVector", "TrainerConfig",
    "forward", "forward_jet", "init_params", "loss_gradient", "train",
]
