"""Classical spatial filtering: free-field steering vectors, recursive
noise spatial covariance estimation, MVDR/GMVDR weights, ideal complex
ratio masks, and the MVDR-filtered clean-speech training target.

Frame arrays are (T, M, F): frames x microphones x frequency bins.
Per-frequency weights are (F, M).  A beamformer output frame is
sum_m conj(w_m) * X_m, which is the filter-and-sum form with mask
M_m = conj(w_m).
"""

from __future__ import annotations

import numpy as np

from .scenes import SPEED_OF_SOUND, scene_doa
from .stft import FrameSpec, istft, stft_multichannel

__all__ = [
    "freefield_steering", "rtf_steering", "NoiseCovTracker", "mvdr_weights",
    "ideal_crm", "online_mvdr_enhance", "dnn_mvdr_enhance", "make_target",
    "apply_weights", "bin_frequencies",
]


def bin_frequencies(frame_spec):
    return np.fft.rfftfreq(frame_spec.frame_len, 1.0 / frame_spec.sample_rate)


def freefield_steering(doa_deg, num_mics, spacing, freqs, c=SPEED_OF_SOUND):
    """Plane-wave steering vectors for a uniform linear array.

    a_m(f) = exp(-j 2 pi f tau_m), tau_m = (m-1) * spacing * cos(doa) / c,
    relative to mic 1.  doa is the propagation direction measured from the
    array axis: 0 deg travels from mic 1 toward mic M (endfire), 90 deg is
    broadside.  Returns (F, M).
    """
    if not 0.0 <= doa_deg <= 180.0:
        raise ValueError(f"doa must be in [0, 180] degrees, got {doa_deg}")
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    tau = np.arange(num_mics) * spacing * np.cos(np.radians(doa_deg)) / c
    return np.exp(-2j * np.pi * freqs[:, None] * tau[None, :])


def rtf_steering(rirs, frame_spec):
    """Relative transfer functions from true impulse responses.

    Each RIR is time-aliased to the frame length (sampling its transfer
    function at the STFT bin frequencies) and normalized by mic 1.  Bins
    where the reference response vanishes fall back to an all-ones
    (delay-and-sum) vector.  Returns (F, M) with column 0 identically 1.
    """
    L = frame_spec.frame_len
    H = []
    for rir in rirs:
        taps = np.asarray(rir.taps, dtype=float)
        pad = (-len(taps)) % L
        folded = np.pad(taps, (0, pad)).reshape(-1, L).sum(axis=0)
        H.append(np.fft.rfft(folded))
    H = np.stack(H, axis=1)  # (F, M)
    ref = H[:, :1]
    bad = np.abs(ref[:, 0]) < 1e-12
    out = np.where(bad[:, None], np.ones_like(H), H / np.where(bad[:, None], 1.0, ref))
    return out


class NoiseCovTracker:
    """Recursive per-bin noise spatial covariance: R <- lw R + (1-lw) n n^H.

    Initialized to init_load * I so early frames behave like delay-and-sum.
    Hermitian symmetry is enforced after every update.
    """

    def __init__(self, num_mics, num_bins, smoothing=0.95, init_load=1e-6):
        if not 0.0 < smoothing < 1.0:
            raise ValueError("smoothing must be in (0, 1)")
        self.smoothing = smoothing
        self.R = np.tile(init_load * np.eye(num_mics, dtype=complex),
                         (num_bins, 1, 1))

    def update(self, noise_frame):
        """noise_frame: (M, F) complex."""
        n = noise_frame.T  # (F, M)
        outer = n[:, :, None] * np.conj(n[:, None, :])
        self.R = self.smoothing * self.R + (1.0 - self.smoothing) * outer
        self.R = 0.5 * (self.R + np.conj(np.swapaxes(self.R, -1, -2)))
        return self.R


def mvdr_weights(R, a, rel_load=1e-6):
    """Distortionless minimum-variance weights w = R'^-1 a / (a^H R'^-1 a).

    R: (..., M, M) Hermitian, a: (..., M).  Diagonal loading is relative:
    R' = R + (rel_load * trace(R) / M + tiny) * I, keeping the weights
    invariant under positive rescaling of R.
    """
    R = np.asarray(R)
    a = np.asarray(a)
    m = R.shape[-1]
    tr = np.real(np.trace(R, axis1=-2, axis2=-1))[..., None, None]
    load = rel_load * tr / m + 1e-300
    Rl = R + load * np.eye(m)
    x = np.linalg.solve(Rl, a[..., None])[..., 0]
    denom = np.einsum("...m,...m->...", np.conj(a), x)
    if np.any(np.abs(denom) < 1e-15):
        raise ValueError("degenerate steering: a^H R^-1 a vanished")
    return x / denom[..., None]


def ideal_crm(D, X, eps=1e-10):
    """Ideal complex ratio mask: D X* / (|X|^2 + eps)."""
    X = np.asarray(X)
    return np.asarray(D) * np.conj(X) / (np.abs(X) ** 2 + eps)


def apply_weights(frames, weights):
    """Filter-and-sum: frames (T, M, F), weights (T, F, M) -> (T, F)."""
    return np.einsum("tfm,tmf->tf", np.conj(weights), frames)


def online_mvdr_enhance(mix_frames, noise_frames, steering, smoothing=0.95,
                        init_load=1e-6, rel_load=1e-6):
    """Frame-recursive MVDR: update the noise covariance, solve, filter.

    mix_frames/noise_frames: (T, M, F); steering: (F, M).
    Returns (output frames (T, F), weights (T, F, M)).
    """
    T, M, F = mix_frames.shape
    tracker = NoiseCovTracker(M, F, smoothing, init_load)
    out = np.empty((T, F), dtype=complex)
    weights = np.empty((T, F, M), dtype=complex)
    for t in range(T):
        tracker.update(noise_frames[t])
        w = mvdr_weights(tracker.R, steering, rel_load)
        weights[t] = w
        out[t] = np.einsum("fm,mf->f", np.conj(w), mix_frames[t])
    return out, weights


def dnn_mvdr_enhance(mix_frames, channel_masks, steering, **kw):
    """MVDR driven by mask-based noise estimates N_m = (1 - G_m) (*) X_m.

    channel_masks: (T, M, F) complex masks per channel (from a trained
    single-channel network, or ideal ratios for the oracle check).
    """
    noise_frames = (1.0 - channel_masks) * mix_frames
    return online_mvdr_enhance(mix_frames, noise_frames, steering, **kw)


def make_target(rendered, frame_spec=None, smoothing=0.95, init_load=1e-6,
                rel_load=1e-6):
    """MVDR-filtered clean reverberant speech, the training target.

    Per frame, the noise covariance is recursively estimated from the true
    interference (noise + music + sensor), weights are solved with a
    free-field steering vector at the true speech direction, and the
    isolated reverberant speech frames are filtered and resynthesized.

    Returns (time-domain target, target STFT frames (T, F)).
    """
    frame_spec = frame_spec or FrameSpec(sample_rate=rendered.sample_rate)
    D = stft_multichannel(rendered.speech, frame_spec)
    N = stft_multichannel(rendered.interference, frame_spec)
    M = rendered.spec.array.num_mics
    if M == 1:
        steering = np.ones((frame_spec.num_bins, 1), dtype=complex)
    else:
        doa = scene_doa(rendered.spec, "speech")
        steering = freefield_steering(doa, M, rendered.spec.array.spacing,
                                      bin_frequencies(frame_spec))
    target_frames, _ = online_mvdr_enhance(D, N, steering, smoothing,
                                           init_load, rel_load)
    n = rendered.mixture.shape[1]
    return istft(target_frames, frame_spec, length=n), target_frames
