"""Small reverse-mode differentiation engine on float64 numpy arrays."""

from .layers import ACTIVATIONS, MLP, Dense, LSTMCell, Module, glorot_uniform, recurrent_forward
from .optim import Adam, AdamState, adam_step
from .serialize import load_params, params_from_bytes, params_to_bytes, save_params
from .tensor import (
    LEAKY_SLOPE,
    Tape,
    Tensor,
    active_tape,
    add,
    clip,
    concat,
    div,
    exp,
    getitem,
    leaky_relu,
    log,
    matmul,
    mean,
    minimum,
    mse,
    mul,
    neg,
    reshape,
    sigmoid,
    square,
    stack,
    sub,
    sum,
    tanh,
)

__all__ = [
    "ACTIVATIONS", "LEAKY_SLOPE", "MLP", "Adam", "AdamState", "Dense", "LSTMCell", "Module", "Tape",
    "Tensor", "active_tape", "adam_step", "add", "clip", "concat", "div", "exp", "getitem",
    "glorot_uniform", "leaky_relu", "load_params", "log", "matmul", "mean", "minimum", "mse", "mul",
    "neg", "params_from_bytes", "params_to_bytes", "recurrent_forward", "reshape", "save_params",
    "sigmoid", "square", "stack", "sub", "sum", "tanh",
]
