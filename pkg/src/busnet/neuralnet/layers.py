"""Forward/backward pairs for the fixed layer set.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(dout, cache)``. Activations are laid out ``(N, C, H, W)``; dense
inputs are ``(N, D)``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def pad_amount(kernel: int, padding: str) -> int:
    if padding == "valid":
        return 0
    if padding == "same":
        if kernel % 2 == 0:
            raise ValueError(f"'same' padding needs an odd kernel, got {kernel}")
        return (kernel - 1) // 2
    raise ValueError(f"unknown padding {padding!r}")


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv_forward(x, w, b, stride=1, pad=0):
    """2-D cross-correlation.

    x: (N, C, H, W), w: (F, C, KH, KW), b: (F,) -> out: (N, F, OH, OW)
    """
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ValueError(f"conv expects {cw} input channels, got {c}")
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(wd, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv kernel {kh}x{kw} larger than padded input {h}x{wd}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    # receptive fields as columns: (N, C*KH*KW, OH*OW)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    out = w.reshape(f, -1) @ cols + b[:, None]
    cache = (x.shape, cols, w, stride, pad, oh, ow)
    return out.reshape(n, f, oh, ow), cache


def conv_backward(dout, cache):
    x_shape, cols, w, stride, pad, oh, ow = cache
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    d3 = dout.reshape(n, f, oh * ow)
    db = d3.sum(axis=(0, 2))
    dw = np.matmul(d3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    dcols = (w.reshape(f, -1).T @ d3).reshape(n, c, kh, kw, oh, ow)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=dout.dtype)
    span_h = stride * (oh - 1) + 1
    span_w = stride * (ow - 1) + 1
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + span_h:stride, j:j + span_w:stride] += dcols[:, :, i, j]
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw, db


def relu_forward(x):
    out = np.maximum(x, 0.0)
    return out, x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def maxpool_forward(x, size=2, stride=2):
    """Max pooling without padding; trailing rows/columns that do not fill a window are dropped."""
    n, c, h, w = x.shape
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"maxpool window {size} larger than input {h}x{w}")
    win = sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    flat = win.reshape(n, c, oh, ow, size * size)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx, size, stride)


def maxpool_backward(dout, cache):
    x_shape, idx, size, stride = cache
    n, c, oh, ow = dout.shape
    dx = np.zeros(x_shape, dtype=dout.dtype)
    span_h = stride * (oh - 1) + 1
    span_w = stride * (ow - 1) + 1
    for t in range(size * size):
        i, j = divmod(t, size)
        # windows may overlap when stride < size, hence accumulate
        dx[:, :, i:i + span_h:stride, j:j + span_w:stride] += dout * (idx == t)
    return dx


def global_avgpool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avgpool_backward(dout, cache):
    n, c, h, w = cache
    return np.broadcast_to(dout[:, :, None, None] / (h * w), cache).copy()


def dense_forward(x, w, b):
    """x: (N, D), w: (D, M), b: (M,)."""
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"dense expects {w.shape[0]} features, got {x.shape[1]}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def concat_forward(xs):
    sizes = [x.shape[1] for x in xs]
    return np.concatenate(xs, axis=1), sizes


def concat_backward(dout, sizes):
    return np.split(dout, np.cumsum(sizes)[:-1], axis=1)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def add_forward(a, b):
    if a.shape != b.shape:
        raise ValueError(f"residual add shape mismatch {a.shape} vs {b.shape}")
    return a + b, None


def add_backward(dout, cache):
    return dout, dout
