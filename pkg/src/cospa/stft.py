"""Frame-wise STFT analysis and overlap-add synthesis.

Defaults: 1024-sample frames, 512-sample hop, 16 kHz, square-root Hann
analysis and synthesis windows (exact constant overlap-add at 50%).
Interior samples of a round trip reconstruct exactly; the first and last
half frame lack an overlap partner and are attenuated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FrameSpec", "stft_frame", "stft_frames", "stft_multichannel",
           "istft", "OverlapAdder", "num_frames"]


def sqrt_hann(n):
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n))


@dataclass
class FrameSpec:
    frame_len: int = 1024
    hop: int = 512
    window: np.ndarray = None
    sample_rate: int = 16000

    def __post_init__(self):
        if self.window is None:
            self.window = sqrt_hann(self.frame_len)
        self.window = np.asarray(self.window, dtype=float)
        if len(self.window) != self.frame_len:
            raise ValueError("window length must equal frame_len")
        if self.hop > self.frame_len:
            raise ValueError("hop must not exceed frame_len")
        if self.frame_len % self.hop:
            raise ValueError("frame_len must be a multiple of hop")
        # analysis*synthesis windows must overlap-add to a constant
        acc = np.zeros(self.hop)
        w2 = self.window ** 2
        for k in range(self.frame_len // self.hop):
            acc += w2[k * self.hop:(k + 1) * self.hop]
        if np.max(np.abs(acc - acc[0])) > 1e-10 or acc[0] <= 0:
            raise ValueError("window^2 does not satisfy constant overlap-add "
                             "at the configured hop")
        self.ola_gain = float(acc[0])

    @property
    def num_bins(self):
        return self.frame_len // 2 + 1


def stft_frame(x, spec):
    """Windowed real FFT of one frame; returns the non-redundant half."""
    x = np.asarray(x)
    if x.shape[-1] != spec.frame_len:
        raise ValueError(f"frame length {x.shape[-1]} != {spec.frame_len}")
    return np.fft.rfft(x * spec.window, axis=-1)


def num_frames(n_samples, spec):
    """Frames needed so every sample falls inside at least one frame."""
    return max(1, int(np.ceil(n_samples / spec.hop)))


def _padded(x, spec):
    T = num_frames(x.shape[-1], spec)
    total = (T - 1) * spec.hop + spec.frame_len
    pad = total - x.shape[-1]
    if pad:
        x = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, pad)])
    return x, T


def stft_frames(x, spec):
    """Analyze a 1-D signal into (T, F) with zero-padding at the tail."""
    x, T = _padded(np.asarray(x, dtype=float), spec)
    idx = np.arange(spec.frame_len)[None, :] + spec.hop * np.arange(T)[:, None]
    return np.fft.rfft(x[idx] * spec.window, axis=-1)


def stft_multichannel(x, spec):
    """x: (M, N) -> (T, M, F)."""
    return np.stack([stft_frames(ch, spec) for ch in np.asarray(x)], axis=1)


def istft(frames, spec, length=None):
    """Inverse STFT by synthesis windowing and overlap-add.

    frames: (T, F).  Returns a real signal of `length` samples (default:
    the full (T-1)*hop + frame_len span).
    """
    frames = np.atleast_2d(np.asarray(frames))
    T = frames.shape[0]
    if frames.shape[1] != spec.num_bins:
        raise ValueError(f"expected {spec.num_bins} bins, got {frames.shape[1]}")
    total = (T - 1) * spec.hop + spec.frame_len
    chunks = np.fft.irfft(frames, n=spec.frame_len, axis=-1) * spec.window
    out = np.zeros(total)
    for t in range(T):
        out[t * spec.hop:t * spec.hop + spec.frame_len] += chunks[t]
    out /= spec.ola_gain
    if length is not None:
        out = out[:length]
    return out


class OverlapAdder:
    """Streaming overlap-add: one frame in, one hop of samples out.

    The first emitted hop corresponds to the first frame's leading samples,
    i.e. the stream has one frame of algorithmic latency.
    """

    def __init__(self, spec):
        self.spec = spec
        self.buf = np.zeros(spec.frame_len)

    def push(self, frame_bins):
        chunk = np.fft.irfft(frame_bins, n=self.spec.frame_len) * self.spec.window
        self.buf += chunk
        out = self.buf[:self.spec.hop] / self.spec.ola_gain
        self.buf = np.concatenate([self.buf[self.spec.hop:],
                                   np.zeros(self.spec.hop)])
        return out

    def tail(self):
        """Remaining buffered samples after the last frame."""
        return self.buf / self.spec.ola_gain
