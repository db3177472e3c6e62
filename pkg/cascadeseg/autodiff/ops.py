"""Differentiable ops on 4-D tensors.

Only the ops the cascade network needs are provided: 1x1 / 3x3
cross-correlation, global max pooling, half-pixel bilinear upsampling,
sigmoid / relu, add / mul with a per-channel gate broadcast and a full sum.
"""

import numpy as np

from cascadeseg.autodiff.tensor import Tensor
from cascadeseg.errors import ShapeError

KERNEL_SIZES = (1, 3)


def conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    """floor((size + 2p - k) / stride) + 1; must be positive."""
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(
            f"kernel {kernel} with padding {padding} does not fit input extent {size}"
        )
    return span // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Direct cross-correlation.

    ``weight`` is (Cout, Cin, k, k) with k in {1, 3}; ``bias`` is (1, Cout, 1, 1).
    """
    c_out, c_in, k, k_w = weight.shape
    if k != k_w or k not in KERNEL_SIZES:
        raise ShapeError(f"conv2d supports square kernels of size 1 or 3, got {k}x{k_w}")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d input has {x.shape[1]} channels, weight expects {c_in}")
    if bias.shape != (1, c_out, 1, 1):
        raise ShapeError(f"conv2d bias must have shape (1, {c_out}, 1, 1), got {bias.shape}")
    if int(stride) != stride or stride < 1:
        raise ShapeError(f"conv2d stride must be a positive integer, got {stride}")
    if int(padding) != padding or padding < 0:
        raise ShapeError(f"conv2d padding must be a non-negative integer, got {padding}")

    n, _, h, w = x.shape
    out_h = conv_output_extent(h, k, stride, padding)
    out_w = conv_output_extent(w, k, stride, padding)
    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad) if padding else x.data
    kernel = weight.data

    def window(u: int, v: int) -> tuple[slice, slice, slice, slice]:
        return (
            slice(None),
            slice(None),
            slice(u, u + stride * (out_h - 1) + 1, stride),
            slice(v, v + stride * (out_w - 1) + 1, stride),
        )

    out = np.zeros((n, c_out, out_h, out_w), dtype=np.float64)
    for u in range(k):
        for v in range(k):
            # (n, h, w, o) -> (n, o, h, w)
            out += np.tensordot(xp[window(u, v)], kernel[:, :, u, v], axes=([1], [1])).transpose(0, 3, 1, 2)
    out += bias.data

    def backward_fn(grad: np.ndarray):
        grad_x = grad_w = grad_b = None
        if x.requires_grad:
            grad_xp = np.zeros(xp.shape, dtype=np.float64)
            for u in range(k):
                for v in range(k):
                    grad_xp[window(u, v)] += np.tensordot(
                        grad, kernel[:, :, u, v], axes=([1], [0])
                    ).transpose(0, 3, 1, 2)
            grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w]
        if weight.requires_grad:
            grad_w = np.empty(kernel.shape, dtype=np.float64)
            for u in range(k):
                for v in range(k):
                    grad_w[:, :, u, v] = np.tensordot(
                        grad, xp[window(u, v)], axes=([0, 2, 3], [0, 2, 3])
                    )
        if bias.requires_grad:
            grad_b = grad.sum(axis=(0, 2, 3)).reshape(bias.shape)
        return grad_x, grad_w, grad_b

    return Tensor._from_op(out, f"conv2d{k}x{k}", (x, weight, bias), backward_fn)


def global_max_pool(x: Tensor) -> Tensor:
    """Per-(n, c) spatial maximum; ties go to the first row-major position."""
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    argmax = flat.argmax(axis=2)[..., None]
    out = np.take_along_axis(flat, argmax, axis=2).reshape(n, c, 1, 1)

    def backward_fn(grad: np.ndarray):
        grad_x = np.zeros((n, c, h * w), dtype=np.float64)
        np.put_along_axis(grad_x, argmax, grad.reshape(n, c, 1), axis=2)
        return (grad_x.reshape(n, c, h, w),)

    return Tensor._from_op(
        out, "global_max_pool", (x,), backward_fn, argmax.astype(np.int64).tobytes()
    )


def bilinear_matrix(in_size: int, out_size: int) -> np.ndarray:
    """(out_size, in_size) half-pixel bilinear interpolation weights.

    Source coordinate is (dst + 0.5) * in/out - 0.5, clamped to [0, in - 1].
    """
    if in_size < 1 or out_size < 1:
        raise ShapeError(f"bilinear extents must be positive, got {in_size} -> {out_size}")
    scale = in_size / out_size
    src = np.clip((np.arange(out_size) + 0.5) * scale - 0.5, 0.0, in_size - 1)
    lower = np.floor(src).astype(np.int64)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower
    rows = np.arange(out_size)
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix


def resize_bilinear(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D array with the same interpolation matrices (non-differentiable)."""
    rows = bilinear_matrix(array.shape[0], out_h)
    cols = bilinear_matrix(array.shape[1], out_w)
    return rows @ np.asarray(array, dtype=np.float64) @ cols.T


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    n, c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"upsample target extent must be positive, got {out_h}x{out_w}")
    if out_h < h or out_w < w:
        raise ShapeError(f"upsample target {out_h}x{out_w} is smaller than input {h}x{w}")
    rows = bilinear_matrix(h, out_h)
    cols = bilinear_matrix(w, out_w)
    out = np.einsum("ncow,pw->ncop", np.einsum("oh,nchw->ncow", rows, x.data), cols)

    def backward_fn(grad: np.ndarray):
        partial = np.einsum("ncop,pw->ncow", grad, cols)
        return (np.einsum("ncow,oh->nchw", partial, rows),)

    return Tensor._from_op(out, "upsample_bilinear", (x,), backward_fn)


def pointwise(x: Tensor, mode: str) -> Tensor:
    """Elementwise ``sigmoid`` or ``relu``."""
    a = x.data
    if mode == "sigmoid":
        # split on sign so exp never overflows
        z = np.exp(-np.abs(a))
        out = np.where(a >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

        def sigmoid_backward(grad: np.ndarray):
            return (grad * out * (1.0 - out),)

        return Tensor._from_op(out, "sigmoid", (x,), sigmoid_backward)

    if mode == "relu":
        mask = a > 0
        out = np.where(mask, a, 0.0)

        def relu_backward(grad: np.ndarray):
            return (np.where(mask, grad, 0.0),)

        return Tensor._from_op(out, "relu", (x,), relu_backward, np.packbits(mask).tobytes())

    raise ValueError(f"unknown pointwise mode {mode!r} (expected 'sigmoid' or 'relu')")


def sigmoid(x: Tensor) -> Tensor:
    return pointwise(x, "sigmoid")


def relu(x: Tensor) -> Tensor:
    return pointwise(x, "relu")


def elementwise(a: Tensor, b: Tensor, mode: str) -> Tensor:
    """``add`` or ``mul``; ``b`` may be an (N, C, 1, 1) gate broadcast over a."""
    if a.shape == b.shape:
        broadcast = False
    elif b.shape == (a.shape[0], a.shape[1], 1, 1):
        broadcast = True
    else:
        raise ShapeError(f"elementwise {mode}: incompatible shapes {a.shape} and {b.shape}")

    def reduce_to_b(grad: np.ndarray) -> np.ndarray:
        return grad.sum(axis=(2, 3), keepdims=True) if broadcast else grad

    if mode == "add":
        out = a.data + b.data

        def add_backward(grad: np.ndarray):
            return grad, reduce_to_b(grad)

        return Tensor._from_op(out, "add", (a, b), add_backward)

    if mode == "mul":
        a_data, b_data = a.data, b.data
        out = a_data * b_data

        def mul_backward(grad: np.ndarray):
            return grad * b_data, reduce_to_b(grad * a_data)

        return Tensor._from_op(out, "mul", (a, b), mul_backward)

    raise ValueError(f"unknown elementwise mode {mode!r} (expected 'add' or 'mul')")


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all entries as a (1, 1, 1, 1) tensor."""
    shape = x.shape
    out = np.array(x.data.sum(), dtype=np.float64).reshape(1, 1, 1, 1)

    def backward_fn(grad: np.ndarray):
        return (np.full(shape, grad.reshape(()), dtype=np.float64),)

    return Tensor._from_op(out, "reduce_sum", (x,), backward_fn)
