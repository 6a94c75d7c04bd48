from .arch import (
    ArchSpec,
    AvgPool2,
    Conv3,
    Dense,
    Flatten,
    Relu,
    TIERS,
    make_arch,
    param_layout,
    parse_arch_id,
    zoo,
)
from .network import Network, forward, get_network, init_network, loss_grad
from .unroll import GradTape, MetaGrads, meta_backward, unroll_record

__all__ = [
    "ArchSpec",
    "AvgPool2",
    "Conv3",
    "Dense",
    "Flatten",
    "Relu",
    "TIERS",
    "make_arch",
    "param_layout",
    "parse_arch_id",
    "zoo",
    "Network",
    "forward",
    "get_network",
    "init_network",
    "loss_grad",
    "GradTape",
    "MetaGrads",
    "meta_backward",
    "unroll_record",
]
