from .tensor import (
    AutodiffError,
    MAX_GRAD_DEPTH,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    concat,
    div,
    embedding,
    exp,
    gather_windows,
    grad,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    pad_axis,
    pow_scalar,
    reduce_to,
    relu,
    reshape,
    scatter_rows,
    scatter_windows,
    slice_axis,
    sub,
    swap_last,
    tanh,
    tmean,
    transpose,
    tsum,
)
from .ops import (
    EVAL_CTX,
    DropoutCtx,
    conv1d,
    cross_entropy_nll,
    dropout,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    sigmoid,
    softmax,
)
from .params import ParameterSet, grad_params, uniform_init
from .optim import AdamW, sgd_step
from .checkpoint import (
    CheckpointError,
    FORMAT_VERSION,
    load_arrays,
    load_params,
    save_arrays,
    save_params,
)
