from .tensor import (
    Tensor, TapeError, no_grad, add, sub, mul, div, neg, matmul, relu,
    sigmoid, exp, log, sqrt, absval, clamp, tsum, tmean, concat, crop,
    reshape, scale, gather_rows, weighted_corner_sum, normalize_rows,
    conv2d_separable,
)
from .mlp import Mlp
from .adam import Adam, NumericFailure
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError
