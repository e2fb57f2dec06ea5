"""Numeric substrate: tape autodiff, LSTM kernels, dropout, clipping and Adam."""

from .optim import AdamState, adam_step, clip_gradients, global_norm
from .recurrent import BACKEND, lstm, lstm_cell
from .tape import (
    DTYPE,
    Tape,
    TapeError,
    Var,
    add,
    add_n,
    concat,
    const_matmul,
    cross_entropy,
    dot,
    dropout,
    exp,
    log,
    masked_softmax,
    matmul,
    mul,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_,
    take,
    take_along,
    tanh,
    tape_backward,
    transpose,
)

__all__ = [
    "AdamState", "BACKEND", "DTYPE", "Tape", "TapeError", "Var", "adam_step", "add",
    "add_n", "clip_gradients", "concat", "const_matmul", "cross_entropy", "dot", "dropout", "exp",
    "global_norm", "log", "lstm", "lstm_cell", "masked_softmax", "matmul", "mul",
    "reshape", "scale", "sigmoid", "softmax", "sub", "sum_", "take", "take_along",
    "tanh", "tape_backward", "transpose",
]
