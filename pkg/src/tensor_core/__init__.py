from .tensor import BackwardError, ShapeError, Tape, Tensor, TensorError, backward, is_grad_enabled, no_grad
from .losses import TargetRangeError, cross_entropy_label_smoothed
from .gradcheck import NonDeterministicFunctionError, finite_diff_check
from . import ops
