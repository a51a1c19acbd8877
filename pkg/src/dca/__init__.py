"""Differentiable cellular automata on rings: simulation, forward gradients and rule search."""

__version__ = "0.1.0"

from .binary import BinaryRule, binary_grad_run, binary_grad_step, binary_run, binary_step, pair
from .core import (
    Alphabet,
    DiscreteRule,
    RuleTable,
    SimplexError,
    Topology,
    dca_local,
    dca_run,
    dca_step,
    decode_pattern,
    delta_configuration,
    discrete_run,
    discrete_step,
    encode_pattern,
    pca_sample,
    wolfram_to_rule,
)
from .grad import grad_run, grad_step, softmax_jacobian
from .optim import (
    TargetSpec,
    TrainState,
    cross_entropy,
    loss_gradient,
    majority_target,
    train,
)
