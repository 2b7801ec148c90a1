"""Complex-valued tensors with reverse-mode automatic differentiation.

Gradient convention
-------------------
For a real scalar loss L and a complex parameter w = u + iv, ``w.grad``
holds the conjugate cogradient

    dL/dw* = (dL/du + i dL/dv) / 2,

so that ``w -= mu * w.grad`` is steepest descent on L.  Backward rules
propagate cogradients g_y = dL/dy* through every operation via

    g_x += conj(g_y) * (dy/dx*) + g_y * conj(dy/dx),

which reduces to the familiar rules for holomorphic ops (dy/dx* = 0) and
stays correct for conj/abs/split-activation style ops.  The seed on the
loss node is 1/2 because only the real part of the final scalar is the
loss.

Everything is stored as complex128 by default; real-valued intermediate
results simply carry a zero imaginary part.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = [
    "CTensor", "Tape", "Adam", "backward", "finite_diff_check",
    "ctensor", "parameter", "add", "sub", "mul", "matmul", "conj", "creal",
    "cimag", "cabs", "abs_sq", "csum", "cmean", "concat", "stack0",
    "reshape", "swapaxes", "flip", "clog", "pow_const", "split_sigmoid",
    "split_tanh", "split_leaky_relu", "bounded_mask", "conv1d",
    "zero_stuff", "ifft_last", "overlap_add", "zero_grads",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Records operations in execution order (inputs always precede use).

    The backward pass walks the node list exactly once, in reverse.  One
    tape per training step; independent tapes share no mutable state.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class CTensor:
    """A complex ndarray plus an optional cogradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.complex128)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data.copy()

    def item(self):
        return self.data.reshape(-1)[0]

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"CTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars and ndarrays are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __truediv__(self, other):
        return mul(self, pow_const(_lift(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __getitem__(self, key):
        return getitem(self, key)

    def conj(self):
        return conj(self)

    def real(self):
        return creal(self)

    def imag(self):
        return cimag(self)

    def abs(self):
        return cabs(self)


def ctensor(data):
    """Wrap a value as a constant (no gradient) tensor."""
    if isinstance(data, CTensor):
        return data
    return CTensor(data)


def parameter(data):
    """Wrap a value as a trainable tensor."""
    return CTensor(data, requires_grad=True)


def _lift(x):
    return x if isinstance(x, CTensor) else CTensor(x)


class _Node:
    __slots__ = ("backward_fn",)

    def __init__(self, backward_fn):
        self.backward_fn = backward_fn


def _record(out, inputs, backward_fn):
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append((out, _Node(backward_fn)))
    return out


def _unbroadcast(g, shape):
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive operations


def add(a, b):
    a, b = _lift(a), _lift(b)
    out = CTensor(a.data + b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _record(out, (a, b), bwd)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    out = CTensor(a.data - b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _record(out, (a, b), bwd)


def mul(a, b):
    """Hadamard product (with numpy broadcasting)."""
    a, b = _lift(a), _lift(b)
    out = CTensor(a.data * b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * np.conj(b.data), a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * np.conj(a.data), b.shape))

    return _record(out, (a, b), bwd)


def matmul(a, b):
    """Complex matrix product; a may be 1-D or 2-D, b 1-D or 2-D."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim > 2 or b.data.ndim > 2:
        raise ValueError("matmul supports 1-D and 2-D operands only")
    A = a.data if a.data.ndim == 2 else a.data[None, :]
    B = b.data if b.data.ndim == 2 else b.data[:, None]
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out2 = A @ B
    out_shape = out2.shape
    if a.data.ndim == 1:
        out_shape = out_shape[1:]
    if b.data.ndim == 1:
        out_shape = out_shape[:-1]
    out = CTensor(out2.reshape(out_shape))

    def bwd(g):
        g2 = g.reshape(A.shape[0], B.shape[1])
        if a.requires_grad:
            ga = g2 @ B.conj().T
            a.accumulate_grad(ga.reshape(a.shape))
        if b.requires_grad:
            gb = A.conj().T @ g2
            b.accumulate_grad(gb.reshape(b.shape))

    return _record(out, (a, b), bwd)


def conj(x):
    x = _lift(x)
    out = CTensor(np.conj(x.data))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.conj(g))

    return _record(out, (x,), bwd)


def creal(x):
    """Real part, kept in complex storage with zero imaginary part."""
    x = _lift(x)
    out = CTensor(x.data.real)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g.real.astype(np.complex128))

    return _record(out, (x,), bwd)


def cimag(x):
    x = _lift(x)
    out = CTensor(x.data.imag)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(1j * g.real)

    return _record(out, (x,), bwd)


def cabs(x):
    """Elementwise magnitude; gradient is 0 at the origin."""
    x = _lift(x)
    r = np.abs(x.data)
    out = CTensor(r)

    def bwd(g):
        if x.requires_grad:
            safe = np.where(r > 0.0, r, 1.0)
            phase = np.where(r > 0.0, x.data / safe, 0.0)
            x.accumulate_grad(g.real * phase)

    return _record(out, (x,), bwd)


def abs_sq(x):
    """Elementwise squared magnitude |x|^2 (real-valued output)."""
    x = _lift(x)
    out = CTensor(x.data.real ** 2 + x.data.imag ** 2)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(2.0 * g.real * x.data)

    return _record(out, (x,), bwd)


def csum(x, axis=None, keepdims=False):
    x = _lift(x)
    out = CTensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if not x.requires_grad:
            return
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            x.accumulate_grad(np.broadcast_to(ge, x.shape).copy())

    return _record(out, (x,), bwd)


def cmean(x, axis=None, keepdims=False):
    x = _lift(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(csum(x, axis=axis, keepdims=keepdims), _lift(1.0 / n))


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    out = CTensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    return _record(out, tuple(tensors), bwd)


def stack0(tensors):
    """Stack equal-shape tensors along a new leading axis."""
    tensors = [_lift(t) for t in tensors]
    out = CTensor(np.stack([t.data for t in tensors], axis=0))

    def bwd(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(g[i])

    return _record(out, tuple(tensors), bwd)


def getitem(x, key):
    """Basic (slice/int) indexing."""
    x = _lift(x)
    out = CTensor(x.data[key])

    def bwd(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            buf[key] += g
            x.accumulate_grad(buf)

    return _record(out, (x,), bwd)


def reshape(x, shape):
    x = _lift(x)
    out = CTensor(x.data.reshape(shape))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    return _record(out, (x,), bwd)


def swapaxes(x, a, b):
    x = _lift(x)
    out = CTensor(np.swapaxes(x.data, a, b))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.swapaxes(g, a, b))

    return _record(out, (x,), bwd)


def flip(x, axis):
    x = _lift(x)
    out = CTensor(np.flip(x.data, axis=axis))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.flip(g, axis=axis))

    return _record(out, (x,), bwd)


def clog(x):
    """Holomorphic natural log (used on positive real scalars)."""
    x = _lift(x)
    out = CTensor(np.log(x.data))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * np.conj(1.0 / x.data))

    return _record(out, (x,), bwd)


def pow_const(x, p):
    """x ** p for a constant real exponent (holomorphic away from 0)."""
    x = _lift(x)
    out = CTensor(x.data ** p)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * np.conj(p * x.data ** (p - 1.0)))

    return _record(out, (x,), bwd)


def _split_op(x, f, fprime):
    x = _lift(x)
    re, im = x.data.real, x.data.imag
    out = CTensor(f(re) + 1j * f(im))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(fprime(re) * g.real + 1j * (fprime(im) * g.imag))

    return _record(out, (x,), bwd)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def split_sigmoid(x):
    """Sigmoid applied to real and imaginary parts independently."""
    return _split_op(x, _sigmoid, lambda v: _sigmoid(v) * (1.0 - _sigmoid(v)))


def split_tanh(x):
    return _split_op(x, np.tanh, lambda v: 1.0 - np.tanh(v) ** 2)


def split_leaky_relu(x, slope=0.2):
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky slope must be in (0, 1), got {slope}")

    def f(v):
        return np.where(v >= 0.0, v, slope * v)

    def fp(v):
        return np.where(v >= 0.0, 1.0, slope)

    return _split_op(x, f, fp)


_MASK_FLOOR = 1e-12


def bounded_mask(x):
    """Compress magnitudes through tanh while preserving phase.

    y = tanh(|x|) * x / |x|, with y = 0 where |x| < 1e-12.  The output
    magnitude is strictly <= 1 (a final rescale guards against the last-ulp
    overshoot of the division when tanh has saturated to exactly 1.0).
    """
    x = _lift(x)
    r = np.abs(x.data)
    small = r < _MASK_FLOOR
    rs = np.where(small, 1.0, r)
    t = np.tanh(rs)
    # h(r) = tanh(r)/r and its derivative, with series fallback near 0
    tiny = rs < 1e-6
    h = np.where(tiny, 1.0 - rs * rs / 3.0, t / rs)
    y = np.where(small, 0.0, x.data * h)
    mag = np.abs(y)
    over = mag > 1.0
    if np.any(over):
        y = np.where(over, y * ((1.0 - 1e-15) / np.where(over, mag, 1.0)), y)
    out = CTensor(y)

    def bwd(g):
        if not x.requires_grad:
            return
        hp = np.where(tiny, -2.0 * rs / 3.0, ((1.0 - t * t) * rs - t) / (rs * rs))
        gx = np.conj(g) * (hp * x.data * x.data / (2.0 * rs)) \
            + g * (h + hp * rs / 2.0)
        x.accumulate_grad(np.where(small, 0.0, gx))

    return _record(out, (x,), bwd)


def conv1d(x, kernels, bias=None, stride=1, padding=0):
    """Complex 1-D cross-correlation.

    x: (C_in, L) or (B, C_in, L); kernels: (C_out, C_in, k); bias: (C_out,).
    Output length is (L + 2*padding - k) // stride + 1, which must be >= 1.
    """
    x, kernels = _lift(x), _lift(kernels)
    if bias is not None:
        bias = _lift(bias)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.data.ndim != 3:
        raise ValueError("conv1d expects x (B, C_in, L) and kernels (C_out, C_in, k)")
    B, c_in, L = xd.shape
    c_out, c_in_k, k = kernels.data.shape
    if c_in_k != c_in:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, kernels {c_in_k}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    l_out = (L + 2 * padding - k) // stride + 1
    if l_out < 1:
        raise ValueError("conv1d output length would be < 1")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[:, :, ::stride, :]
    # (B, C_in, L_out, k) -> (C_in*k, B*L_out)
    cols = win.transpose(1, 3, 0, 2).reshape(c_in * k, B * l_out)
    K2 = kernels.data.reshape(c_out, c_in * k)
    out2 = K2 @ cols
    if bias is not None:
        out2 = out2 + bias.data[:, None]
    outd = out2.reshape(c_out, B, l_out).transpose(1, 0, 2)
    out = CTensor(outd[0] if squeeze else outd)

    def bwd(g):
        g3 = g[None] if squeeze else g
        g2 = g3.transpose(1, 0, 2).reshape(c_out, B * l_out)
        if kernels.requires_grad:
            gk = g2 @ cols.conj().T
            kernels.accumulate_grad(gk.reshape(c_out, c_in, k))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g2.sum(axis=1))
        if x.requires_grad:
            gcols = (K2.conj().T @ g2).reshape(c_in, k, B, l_out)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, :, j:j + stride * l_out:stride] += gcols[:, j].transpose(1, 0, 2)
            gx = gxp[:, :, padding:padding + L] if padding else gxp
            x.accumulate_grad(gx[0] if squeeze else gx)

    inputs = (x, kernels) if bias is None else (x, kernels, bias)
    return _record(out, inputs, bwd)


def zero_stuff(x, stride):
    """Insert stride-1 zeros between samples along the last axis."""
    x = _lift(x)
    if stride == 1:
        return x
    L = x.shape[-1]
    outd = np.zeros(x.shape[:-1] + ((L - 1) * stride + 1,), dtype=np.complex128)
    outd[..., ::stride] = x.data
    out = CTensor(outd)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g[..., ::stride])

    return _record(out, (x,), bwd)


def ifft_last(x):
    """Inverse DFT along the last axis (holomorphic linear map)."""
    x = _lift(x)
    n = x.shape[-1]
    out = CTensor(np.fft.ifft(x.data, axis=-1))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.fft.fft(g, axis=-1) / n)

    return _record(out, (x,), bwd)


def overlap_add(x, hop, total_len):
    """Overlap-add frames x (T, L) at the given hop into a 1-D stream."""
    x = _lift(x)
    T, L = x.shape
    outd = np.zeros(total_len, dtype=np.complex128)
    for t in range(T):
        lo = t * hop
        outd[lo:lo + L] += x.data[t, :max(0, min(L, total_len - lo))]
    out = CTensor(outd)

    def bwd(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        for t in range(T):
            lo = t * hop
            n = max(0, min(L, total_len - lo))
            gx[t, :n] = g[lo:lo + n]
        x.accumulate_grad(gx)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# backward pass, gradient checking, optimizer


def backward(tape, loss, imag_tol=1e-9):
    """Run reverse-mode accumulation from a real scalar loss.

    Writes dL/dw* into ``grad`` of every tensor that requires gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    val = loss.data.reshape(-1)[0]
    scale = max(abs(val), 1.0)
    if abs(val.imag) > imag_tol * scale:
        raise ValueError(f"loss must be real, got imaginary part {val.imag}")
    if not np.isfinite(val):
        raise ValueError(f"loss is not finite: {val}")
    # seed: loss = Re(node), so dL/dnode* = 1/2
    loss.accumulate_grad(np.array(0.5, dtype=np.complex128).reshape(loss.shape))
    for out, node in reversed(tape.nodes):
        if out.grad is not None:
            node.backward_fn(out.grad)


def zero_grads(params):
    for p in params:
        p.grad = None


def finite_diff_check(f, params, h=1e-5, max_entries=None, seed=0):
    """Max relative error between tape gradients and central differences.

    ``f`` builds a real scalar loss from the given parameter tensors.  The
    numerical gradient is assembled from independent real/imaginary central
    differences: g_fd = (dL/du + i dL/dv) / 2.  When ``max_entries`` is set,
    a seeded random subset of each tensor's entries is checked.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"finite-difference step must be in [1e-7, 1e-3], got {h}")
    params = list(params)

    def value():
        out = f()
        v = out.data.reshape(-1)[0]
        if not np.isfinite(v):
            raise ValueError("objective returned a non-finite value")
        return float(v.real)

    zero_grads(params)
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    tape_grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                  for p in params]
    zero_grads(params)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, gt in zip(params, tape_grads):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_pr = value()
            flat[i] = orig - h
            f_mr = value()
            flat[i] = orig + 1j * h
            f_pi = value()
            flat[i] = orig - 1j * h
            f_mi = value()
            flat[i] = orig
            g_fd = ((f_pr - f_mr) + 1j * (f_pi - f_mi)) / (4.0 * h)
            err = abs(gt.reshape(-1)[i] - g_fd) / max(abs(g_fd), 1e-12)
            worst = max(worst, err)
    return worst


class Adam:
    """Adam over complex parameters.

    The first moment is complex; the second moment tracks |grad|^2 per
    complex entry, so with a constant gradient the update direction is
    exactly -grad and the step magnitude approaches the learning rate.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros(p.shape, dtype=np.float64) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError("adam_step: parameter has no gradient; run backward first")
            g = p.grad
            self.first_moment[i] = b1 * self.first_moment[i] + (1.0 - b1) * g
            self.second_moment[i] = b2 * self.second_moment[i] \
                + (1.0 - b2) * (g.real ** 2 + g.imag ** 2)
            mhat = self.first_moment[i] / (1.0 - b1 ** t)
            vhat = self.second_moment[i] / (1.0 - b2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = None

    def state_arrays(self):
        """Optimizer state as named buffers (for checkpoint resume)."""
        out = {"adam.step_count": np.array([self.step_count], dtype=np.complex128)}
        for i, m in enumerate(self.first_moment):
            out[f"adam.m.{i}"] = m
        for i, v in enumerate(self.second_moment):
            out[f"adam.v.{i}"] = v.astype(np.complex128)
        return out

    def load_state_arrays(self, buffers):
        self.step_count = int(buffers["adam.step_count"].reshape(-1)[0].real)
        for i in range(len(self.params)):
            self.first_moment[i] = buffers[f"adam.m.{i}"].copy()
            self.second_moment[i] = buffers[f"adam.v.{i}"].real.copy()


# ---------------------------------------------------------------------------
# checkpoint file format
#
# magic "CSPK", uint32 version, uint64 header length, JSON header, then each
# tensor's complex128 entries as little-endian interleaved re/im float64.

_CKPT_MAGIC = b"CSPK"
_CKPT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params, buffers=None, config=None):
    """Write named tensors to a versioned binary checkpoint.

    ``params`` and ``buffers`` map names to CTensors or arrays; buffers are
    excluded from parameter counting but restored on load.
    """
    buffers = buffers or {}
    entries = []
    blobs = []
    offset = 0
    for kind, table in (("param", params), ("buffer", buffers)):
        for name in sorted(table):
            arr = table[name]
            data = arr.data if isinstance(arr, CTensor) else np.asarray(arr)
            data = np.ascontiguousarray(data, dtype="<c16")
            entries.append({"name": name, "shape": list(data.shape),
                            "kind": kind, "offset": offset, "count": int(data.size)})
            blobs.append(data.tobytes())
            offset += data.size
    header = json.dumps(
        {"format_version": _CKPT_VERSION, "config": config, "tensors": entries},
        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IQ", _CKPT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, buffers, config) dicts/arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[4:16])
    if version != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    base = 16 + hlen
    params, buffers = {}, {}
    for ent in header["tensors"]:
        start = base + 16 * ent["offset"]
        stop = start + 16 * ent["count"]
        if stop > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data for {ent['name']}")
        arr = np.frombuffer(raw[start:stop], dtype="<c16").reshape(ent["shape"]).copy()
        (params if ent["kind"] == "param" else buffers)[ent["name"]] = arr
    return params, buffers, header.get("config")
