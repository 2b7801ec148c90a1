"""Complex-valued neural layers: fully connected, 1-D convolutions, GRU,
batch normalization, split leaky-ReLU, and the magnitude-bounded mask
activation.

All nonlinearities are "split": the real function is applied to the real
and imaginary parts independently.  Layers are pure functions of (input,
parameters, state); parameters only change between optimizer steps.
"""

from __future__ import annotations

import numpy as np

from . import ctensor as ct
from .ctensor import CTensor, parameter

__all__ = [
    "CFC", "CConv1d", "CConvT1d", "CGRU", "CBatchNorm",
    "cleaky_relu", "bounded_mask", "conv1d_out_len",
]

cleaky_relu = ct.split_leaky_relu
bounded_mask = ct.bounded_mask


def _glorot(rng, *shape):
    fan_in = shape[-1] if len(shape) == 2 else int(np.prod(shape[1:]))
    s = 1.0 / np.sqrt(2.0 * max(fan_in, 1))
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * s


def conv1d_out_len(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


class _Module:
    """Minimal parameter-container base."""

    def params(self):
        return [p for _, p in self.named_params()]

    def named_params(self, prefix=""):
        raise NotImplementedError

    def named_buffers(self, prefix=""):
        return []

    def load_named(self, table, prefix=""):
        """Copy values from a name -> ndarray table into params/buffers."""
        for name, p in self.named_params(prefix):
            p.data = np.asarray(table[name], dtype=np.complex128).reshape(p.shape)
        for name, b in self.named_buffers(prefix):
            if name in table:
                b[...] = np.asarray(table[name]).reshape(b.shape).real \
                    if b.dtype != np.complex128 else table[name].reshape(b.shape)


class CFC(_Module):
    """Complex fully connected layer: y = W x + b."""

    def __init__(self, in_features, out_features, rng, bias=True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(_glorot(rng, out_features, in_features))
        self.bias = parameter(np.zeros(out_features, dtype=complex)) if bias else None

    def forward(self, x):
        """x: (in,) or (B, in) -> (out,) or (B, out)."""
        if x.shape[-1] != self.in_features:
            raise ValueError(
                f"CFC expects input size {self.in_features}, got {x.shape}")
        if x.data.ndim == 1:
            y = ct.matmul(self.weight, x)
        else:
            y = ct.matmul(x, ct.swapaxes(self.weight, 0, 1))
        return y if self.bias is None else y + self.bias

    def named_params(self, prefix=""):
        out = [(prefix + "weight", self.weight)]
        if self.bias is not None:
            out.append((prefix + "bias", self.bias))
        return out


class CConv1d(_Module):
    """Complex 1-D convolution (cross-correlation) along the last axis."""

    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, bias=True):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.padding = padding
        self.kernel_size = kernel_size
        self.kernels = parameter(_glorot(rng, out_channels, in_channels, kernel_size))
        self.bias = parameter(np.zeros(out_channels, dtype=complex)) if bias else None

    def forward(self, x):
        """x: (C_in, L) or (B, C_in, L)."""
        return ct.conv1d(x, self.kernels, self.bias, self.stride, self.padding)

    def named_params(self, prefix=""):
        out = [(prefix + "kernels", self.kernels)]
        if self.bias is not None:
            out.append((prefix + "bias", self.bias))
        return out


class CConvT1d(_Module):
    """Complex transposed 1-D convolution.

    Realized as zero-stuffing by the stride followed by a unit-stride
    convolution with the flipped kernel; output length is
    (L - 1) * stride + k - 2 * padding.
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, bias=True):
        self.stride = stride
        self.padding = padding
        self.kernel_size = kernel_size
        self.kernels = parameter(_glorot(rng, in_channels, out_channels, kernel_size))
        self.bias = parameter(np.zeros(out_channels, dtype=complex)) if bias else None

    def forward(self, x):
        k = self.kernel_size
        kmat = ct.flip(ct.swapaxes(self.kernels, 0, 1), axis=-1)
        stuffed = ct.zero_stuff(x, self.stride)
        return ct.conv1d(stuffed, kmat, self.bias, 1, k - 1 - self.padding)

    def named_params(self, prefix=""):
        out = [(prefix + "kernels", self.kernels)]
        if self.bias is not None:
            out.append((prefix + "bias", self.bias))
        return out


class CGRU(_Module):
    """Complex gated recurrent unit.

    Update/reset gates use split sigmoids, the candidate a split tanh;
    gating is the complex Hadamard product:

        h' = (1 - z) (*) h + z (*) c.
    """

    def __init__(self, input_size, hidden_size, rng):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_update = parameter(_glorot(rng, hidden_size, input_size))
        self.w_reset = parameter(_glorot(rng, hidden_size, input_size))
        self.w_cand = parameter(_glorot(rng, hidden_size, input_size))
        self.u_update = parameter(_glorot(rng, hidden_size, hidden_size))
        self.u_reset = parameter(_glorot(rng, hidden_size, hidden_size))
        self.u_cand = parameter(_glorot(rng, hidden_size, hidden_size))
        self.b_update = parameter(np.zeros(hidden_size, dtype=complex))
        self.b_reset = parameter(np.zeros(hidden_size, dtype=complex))
        self.b_cand = parameter(np.zeros(hidden_size, dtype=complex))

    def init_state(self):
        return CTensor(np.zeros(self.hidden_size, dtype=complex))

    def project_inputs(self, x_seq):
        """Batch the input-to-hidden products for a whole (T, in) sequence."""
        wt = lambda w: ct.swapaxes(w, 0, 1)
        return (ct.matmul(x_seq, wt(self.w_update)),
                ct.matmul(x_seq, wt(self.w_reset)),
                ct.matmul(x_seq, wt(self.w_cand)))

    def step_projected(self, xz, xr, xc, h):
        z = ct.split_sigmoid(xz + ct.matmul(self.u_update, h) + self.b_update)
        r = ct.split_sigmoid(xr + ct.matmul(self.u_reset, h) + self.b_reset)
        c = ct.split_tanh(xc + ct.matmul(self.u_cand, h) + self.b_cand)
        return (1.0 - z) * h + z * c

    def step(self, x, h):
        """One recursion step: x (in,), h (hidden,) -> h' (hidden,)."""
        if h.shape[-1] != self.hidden_size:
            raise ValueError(
                f"CGRU state size {h.shape} != hidden_size {self.hidden_size}")
        if x.shape[-1] != self.input_size:
            raise ValueError(
                f"CGRU input size {x.shape} != input_size {self.input_size}")
        xz = ct.matmul(self.w_update, x)
        xr = ct.matmul(self.w_reset, x)
        xc = ct.matmul(self.w_cand, x)
        return self.step_projected(xz, xr, xc, h)

    def run_sequence(self, x_seq, h0=None):
        """Run over (T, in); returns stacked states (T, hidden) and final h."""
        h = h0 if h0 is not None else self.init_state()
        xz, xr, xc = self.project_inputs(x_seq)
        states = []
        for t in range(x_seq.shape[0]):
            h = self.step_projected(xz[t], xr[t], xc[t], h)
            states.append(h)
        return ct.stack0(states), h

    def named_params(self, prefix=""):
        return [(prefix + n, getattr(self, n)) for n in
                ("w_update", "w_reset", "w_cand",
                 "u_update", "u_reset", "u_cand",
                 "b_update", "b_reset", "b_cand")]


class CBatchNorm(_Module):
    """Complex batch normalization, real/imaginary parts treated separately.

    Trainable complex scale and shift; running statistics follow an
    exponential moving average in training mode and are frozen otherwise.
    """

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must be in (0, 1)")
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.scale = parameter(np.ones(num_features, dtype=complex))
        self.shift = parameter(np.zeros(num_features, dtype=complex))
        self.running_mean = np.zeros(num_features, dtype=complex)
        self.running_var_re = np.ones(num_features)
        self.running_var_im = np.ones(num_features)

    def forward(self, x, training=False):
        """x: (B, n); normalizes over the batch axis."""
        xr, xi = ct.creal(x), ct.cimag(x)
        if training:
            mr = ct.cmean(xr, axis=0)
            mi = ct.cmean(xi, axis=0)
            vr = ct.cmean(ct.abs_sq(xr - mr), axis=0)
            vi = ct.cmean(ct.abs_sq(xi - mi), axis=0)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean \
                + m * (mr.data.real + 1j * mi.data.real)
            self.running_var_re = (1 - m) * self.running_var_re + m * vr.data.real
            self.running_var_im = (1 - m) * self.running_var_im + m * vi.data.real
        else:
            mr = CTensor(self.running_mean.real)
            mi = CTensor(self.running_mean.imag)
            vr = CTensor(self.running_var_re)
            vi = CTensor(self.running_var_im)
        nr = (xr - mr) * ct.pow_const(vr + self.eps, -0.5)
        ni = (xi - mi) * ct.pow_const(vi + self.eps, -0.5)
        return self.scale * (nr + 1j * ni) + self.shift

    def named_params(self, prefix=""):
        return [(prefix + "scale", self.scale), (prefix + "shift", self.shift)]

    def named_buffers(self, prefix=""):
        return [(prefix + "running_mean", self.running_mean),
                (prefix + "running_var_re", self.running_var_re),
                (prefix + "running_var_im", self.running_var_im)]

    def load_named(self, table, prefix=""):
        self.scale.data = table[prefix + "scale"].reshape(self.scale.shape)
        self.shift.data = table[prefix + "shift"].reshape(self.shift.shape)
        self.running_mean = table[prefix + "running_mean"].reshape(-1).copy()
        self.running_var_re = table[prefix + "running_var_re"].reshape(-1).real.copy()
        self.running_var_im = table[prefix + "running_var_im"].reshape(-1).real.copy()
