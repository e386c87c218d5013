"""Minimal reverse-mode differentiable compute engine on numpy."""
from .checkpoint import load_into, read_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import init_bilinear, init_conv, init_dense, init_lstm, lstm_cell
from .optim import AdamConfig, ParamStore, adam_step, xavier_uniform
from .tensor import (
    LEAKY_SLOPE, Tensor, as_tensor, bilinear, concat, conv1d, cos, dense, exp, gram,
    leaky_relu, log, matmul, mean, mse_loss, no_grad, norm, normalize, reshape, sigmoid,
    sin, sqrt, stack, tanh, transpose, tsum, where,
)

__all__ = [
    "AdamConfig", "LEAKY_SLOPE", "ParamStore", "Tensor", "adam_step", "as_tensor", "bilinear",
    "concat", "conv1d", "cos", "dense", "exp", "grad_check", "gram", "init_bilinear",
    "init_conv", "init_dense", "init_lstm", "leaky_relu", "load_into", "log", "lstm_cell",
    "matmul", "mean", "mse_loss", "no_grad", "norm", "normalize", "read_checkpoint", "reshape",
    "save_checkpoint", "sigmoid", "sin", "sqrt", "stack", "tanh", "transpose", "tsum", "where",
    "xavier_uniform",
]
