"""Plain, highway and residual LSTM stacks with exact truncated BPTT."""

from .cells import (
    CellState, HighwayExtras, LayerParams, LstmCoreParams, ResidualExtras, StepCache,
    highway_step, plain_step, residual_step, step_backward,
)
from .network import (
    NetworkConfig, StackedNetwork, build_network, forward_sequence, load_checkpoint,
    loss_and_grads, save_checkpoint,
)
from .training import TrainConfig, cross_entropy, evaluate, sgd_step, train

__version__ = "0.1.0"
