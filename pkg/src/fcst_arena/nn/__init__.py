from .adam import AdamState, adam_init, adam_step, zero_grads
from .layers import (
    dense,
    glorot_uniform,
    init_conv_params,
    init_dense_params,
    init_lstm_params,
    lstm_layer,
    lstm_sequence,
    lstm_step,
)
from .tensor import (
    lstm_cell,
    Tensor,
    add,
    concat,
    dilated_causal_conv1d,
    dropout,
    getitem,
    matmul,
    mse_loss,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    sub,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "AdamState", "adam_init", "adam_step", "zero_grads",
    "dense", "glorot_uniform", "init_conv_params", "init_dense_params",
    "init_lstm_params", "lstm_layer", "lstm_sequence", "lstm_step",
    "lstm_cell", "Tensor", "add", "concat", "dilated_causal_conv1d", "dropout", "getitem",
    "matmul", "mse_loss", "mul", "no_grad", "relu", "reshape", "sigmoid",
    "sub", "tanh", "tmean", "tsum",
]
