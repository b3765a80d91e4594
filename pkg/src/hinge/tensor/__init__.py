from .core import (
    NONLINEARITIES,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    div,
    elu,
    embed,
    exp,
    get_tape,
    getitem,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    set_debug,
    sigmoid,
    softmax_t,
    stack,
    sub,
    sum_,
    take_rows,
    tanh,
    transpose,
    zeros,
)
from .batched import rowdot, rowmix
from .fft import conv_fft, conv_rows, irfft, rfft
from .nn import Parameter, ParamStore
from .optim import Adam
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
