from . import checkpoint
from .functional import (
    avg_pool2d,
    conv1d,
    conv2d,
    conv_output_length,
    cross_entropy,
    global_avg_pool,
    linear,
    log_softmax,
    relu,
    softmax,
)
from .init import fan_in_uniform, zeros
from .loss import ClassWeights, class_weights, weighted_cross_entropy
from .optim import sgd_step, zero_grad
from .tensor import Parameter, Tensor, no_grad, params_digest, payload_bytes

__all__ = [
    "ClassWeights",
    "Parameter",
    "Tensor",
    "avg_pool2d",
    "checkpoint",
    "class_weights",
    "conv1d",
    "conv2d",
    "conv_output_length",
    "cross_entropy",
    "fan_in_uniform",
    "global_avg_pool",
    "linear",
    "log_softmax",
    "no_grad",
    "params_digest",
    "payload_bytes",
    "relu",
    "sgd_step",
    "softmax",
    "weighted_cross_entropy",
    "zero_grad",
    "zeros",
]
