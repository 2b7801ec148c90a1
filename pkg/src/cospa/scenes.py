"""Acoustic scene simulation: random shoebox scenarios, image-source room
impulse responses, and mixing of speech/noise/music sources at target
SNRs with microphone self-noise.

Conventions: positions are metres, channel-major signals (M, N), scene
ground truth is additive: mixture == speech + noise + music + sensor,
exactly, which downstream metrics and training targets rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter

__all__ = [
    "RoomSpec", "ArraySpec", "SceneSpec", "Rir", "SceneRanges",
    "RenderedScene", "sample_scene", "image_source_rir", "render_scene",
    "measure_rt60", "reflection_for_rt60", "make_dry_sources", "scene_doa",
    "write_manifest", "read_manifest",
]

SPEED_OF_SOUND = 343.0
_SINC_TAPS = 16  # windowed-sinc support for fractional delays


@dataclass
class RoomSpec:
    dimensions: np.ndarray
    rt60: float
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        self.dimensions = np.asarray(self.dimensions, dtype=float)
        if self.dimensions.shape != (3,) or np.any(self.dimensions <= 0):
            raise ValueError(f"degenerate room dimensions {self.dimensions}")
        if self.rt60 <= 0:
            raise ValueError("rt60 must be positive")

    def contains(self, p):
        p = np.asarray(p)
        return bool(np.all(p > 0) and np.all(p < self.dimensions))


@dataclass
class ArraySpec:
    mic_positions: np.ndarray
    spacing: float = 0.04

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=float)
        if self.mic_positions.ndim != 2 or self.mic_positions.shape[1] != 3:
            raise ValueError("mic_positions must be (M, 3)")

    @property
    def num_mics(self):
        return self.mic_positions.shape[0]

    @property
    def axis(self):
        """Unit vector from mic 1 toward the last mic."""
        d = self.mic_positions[-1] - self.mic_positions[0]
        return d / np.linalg.norm(d)

    @property
    def center(self):
        return self.mic_positions.mean(axis=0)

    @staticmethod
    def linear(center, azimuth_rad, num_mics=5, spacing=0.04):
        """Uniform linear array in the horizontal plane."""
        direction = np.array([np.cos(azimuth_rad), np.sin(azimuth_rad), 0.0])
        offsets = (np.arange(num_mics) - (num_mics - 1) / 2.0) * spacing
        return ArraySpec(np.asarray(center) + offsets[:, None] * direction,
                         spacing=spacing)


@dataclass
class SceneSpec:
    room: RoomSpec
    array: ArraySpec
    source_positions: dict  # keys: speech, noise, music -> (3,) position
    snr_db: float
    smr_db: float
    duration: float
    seed: int

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "room_dimensions_m": [float(v) for v in self.room.dimensions],
            "rt60_s": float(self.room.rt60),
            "mic_positions_m": self.array.mic_positions.tolist(),
            "mic_spacing_m": float(self.array.spacing),
            "source_positions_m": {k: [float(v) for v in p]
                                   for k, p in self.source_positions.items()},
            "snr_db": float(self.snr_db),
            "smr_db": float(self.smr_db),
            "duration_s": float(self.duration),
        }

    @staticmethod
    def from_dict(d):
        return SceneSpec(
            room=RoomSpec(np.array(d["room_dimensions_m"]), d["rt60_s"]),
            array=ArraySpec(np.array(d["mic_positions_m"]), d["mic_spacing_m"]),
            source_positions={k: np.array(v)
                              for k, v in d["source_positions_m"].items()},
            snr_db=d["snr_db"], smr_db=d["smr_db"],
            duration=d["duration_s"], seed=d["seed"])


@dataclass
class Rir:
    taps: np.ndarray
    sample_rate: int

    def peak_delay(self):
        """Sample index of the strongest tap (direct path for short RIRs)."""
        return int(np.argmax(np.abs(self.taps)))


@dataclass
class SceneRanges:
    """Sampling ranges for random scenarios (min <= max everywhere)."""
    room_min: tuple = (3.0, 3.0, 1.0)
    room_max: tuple = (8.0, 8.0, 4.0)
    rt60: tuple = (0.3, 0.7)
    snr_db: tuple = (-7.0, 0.0)
    smr_db: tuple = (-7.0, 0.0)
    duration: float = 7.0
    num_mics: int = 5
    mic_spacing: float = 0.04
    wall_clearance: float = 0.1
    source_array_min_dist: float = 0.5

    def validate(self):
        for lo, hi in (self.rt60, self.snr_db, self.smr_db):
            if lo > hi:
                raise ValueError("range minimum exceeds maximum")
        if np.any(np.asarray(self.room_min) > np.asarray(self.room_max)):
            raise ValueError("room_min exceeds room_max")


def sample_scene(seed, ranges=None):
    """Draw a random scenario; a deterministic function of the seed."""
    ranges = ranges or SceneRanges()
    ranges.validate()
    rng = np.random.default_rng(seed)
    dims = rng.uniform(ranges.room_min, ranges.room_max)
    rt60 = rng.uniform(*ranges.rt60)
    snr = rng.uniform(*ranges.snr_db)
    smr = rng.uniform(*ranges.smr_db)
    room = RoomSpec(dims, rt60)

    cl = ranges.wall_clearance
    half_len = (ranges.num_mics - 1) / 2.0 * ranges.mic_spacing
    for _ in range(200):
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
        margin = cl + half_len * np.abs(direction)
        if np.any(dims - margin <= margin):
            continue
        center = rng.uniform(margin, dims - margin)
        array = ArraySpec.linear(center, azimuth, ranges.num_mics,
                                 ranges.mic_spacing)
        positions = {}
        for name in ("speech", "noise", "music"):
            for _ in range(200):
                p = rng.uniform(cl, dims - cl)
                if np.linalg.norm(p - center) >= ranges.source_array_min_dist:
                    positions[name] = p
                    break
            else:
                break
        if len(positions) == 3:
            return SceneSpec(room=room, array=array,
                             source_positions=positions, snr_db=snr,
                             smr_db=smr, duration=ranges.duration, seed=seed)
    raise RuntimeError("could not place array/sources after bounded retries")


def _eyring_reflection(room):
    """Uniform wall reflection coefficient from Eyring's formula."""
    lx, ly, lz = room.dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    return np.exp(-0.0815 * volume / (surface * room.rt60))


def _rir_geometry(room, src, mic, sample_rate, max_order):
    src = np.asarray(src, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if not (room.contains(src) and room.contains(mic)):
        raise ValueError("source and microphone must lie inside the room")
    d_direct = np.linalg.norm(src - mic)
    if d_direct == 0.0:
        raise ValueError("source and microphone coincide")
    half = _SINC_TAPS // 2
    n_taps = int(np.ceil(d_direct / room.speed_of_sound * sample_rate)) \
        + int(np.ceil(room.rt60 * sample_rate)) + half + 1
    d_max = (n_taps + half) / sample_rate * room.speed_of_sound
    return src, mic, n_taps, d_max


def _image_chunks(room, src, mic, d_max, max_order):
    """Yield (distance, reflection-count) arrays over all image sources.

    Image positions are (1 - 2p) * src + 2 r L; the bounce count per axis
    is |r - p| off one wall plus |r| off the other.
    """
    dims = room.dimensions
    orders = np.ceil(d_max / (2.0 * dims)).astype(int)
    if max_order is not None:
        orders = np.minimum(orders, (max_order + 1) // 2 + 1)
    ry, rz = np.meshgrid(np.arange(-orders[1], orders[1] + 1),
                         np.arange(-orders[2], orders[2] + 1), indexing="ij")
    ry, rz = ry.ravel(), rz.ravel()
    for rx in range(-orders[0], orders[0] + 1):
        r = np.stack([np.full_like(ry, rx), ry, rz], axis=1)
        for px in (0, 1):
            for py in (0, 1):
                for pz in (0, 1):
                    p = np.array([px, py, pz])
                    img = (1 - 2 * p) * src + 2.0 * r * dims
                    refl = np.abs(r - p).sum(axis=1) + np.abs(r).sum(axis=1)
                    if max_order is not None:
                        keep = refl <= max_order
                        if not np.any(keep):
                            continue
                        img, refl = img[keep], refl[keep]
                    d = np.linalg.norm(img - mic, axis=1)
                    keep = (d > 0) & (d <= d_max)
                    if np.any(keep):
                        yield d[keep], refl[keep]


def _schroeder_t60(energy, sample_rate):
    """T60 from an energy-per-sample envelope: backward integration, line
    fit on the -5..-25 dB span, extrapolated to -60 dB."""
    edc = np.cumsum(energy[::-1])[::-1]
    if edc[0] <= 0:
        raise ValueError("impulse response has no energy")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.where(edc > 0, edc / edc[0], np.nan))
    db = np.where(np.isnan(db), -np.inf, db)
    i5 = int(np.argmax(db <= -5.0))
    i25 = int(np.argmax(db <= -25.0))
    if db[i5] > -5.0 or db[i25] > -25.0 or i25 - i5 < 8:
        raise ValueError("energy decay curve has no usable -5..-25 dB span")
    span = slice(i5, i25 + 1)
    t = np.arange(len(energy))[span] / sample_rate
    slope = np.polyfit(t, db[span], 1)[0]
    if slope >= 0:
        raise ValueError("energy decay curve is not decaying")
    return -60.0 / slope


def measure_rt60(rir):
    """Reverberation time of an impulse response (Schroeder method)."""
    h = np.asarray(rir.taps, dtype=float)
    return _schroeder_t60(h ** 2, rir.sample_rate)


def reflection_for_rt60(room, src, mic, sample_rate=16000):
    """Wall coefficient whose rendered RIR measures the requested rt60.

    The analytic Eyring coefficient systematically under-damps a shoebox
    image-source model (slow axial image families stretch the Schroeder
    decay), so this calibrates beta numerically: the image set is reduced
    once to an energy histogram over (arrival sample, bounce count), on
    which candidate coefficients are evaluated cheaply, and the coefficient
    is found by bisection against the same -5..-25 dB measurement used by
    measure_rt60.
    """
    src, mic, n_taps, d_max = _rir_geometry(room, src, mic, sample_rate, None)
    c = room.speed_of_sound
    max_refl = int(np.ceil(d_max * np.sum(1.0 / room.dimensions))) + 8
    hist = np.zeros((n_taps, max_refl + 1))
    for d, refl in _image_chunks(room, src, mic, d_max, None):
        bins = np.minimum(np.round(d / c * sample_rate).astype(int), n_taps - 1)
        np.add.at(hist, (bins, np.minimum(refl, max_refl)),
                  1.0 / (4.0 * np.pi * d) ** 2)

    refl_axis = np.arange(max_refl + 1)

    def measured(beta):
        energy = hist @ beta ** (2.0 * refl_axis)
        return _schroeder_t60(energy, sample_rate)

    hi = _eyring_reflection(room)
    lo = hi ** 4
    for _ in range(20):
        if measured(lo) < room.rt60:
            break
        lo = lo ** 2
    else:
        raise RuntimeError("reflection calibration failed to bracket rt60")
    for _ in range(40):
        mid = np.sqrt(lo * hi)
        if measured(mid) > room.rt60:
            hi = mid
        else:
            lo = mid
    return float(np.sqrt(lo * hi))


def image_source_rir(room, src, mic, sample_rate=16000, max_order=None,
                     reflection_coeff=None):
    """Shoebox image-source impulse response for one source/mic pair.

    Fractional delays use a 16-tap Hann-windowed full-band sinc, so
    integer-sample delays place a single exact tap.  The tail extends at
    least rt60 * fs samples beyond the direct path.  ``max_order`` limits
    the bounce count (0 = anechoic direct path only).  Unless a wall
    coefficient is supplied, it is calibrated per room so the rendered
    response measures the requested rt60 (see reflection_for_rt60).

    Reverberant responses (max_order None) are AC-coupled with a causal
    20 Hz highpass: image amplitudes are all positive, and their coherent
    pileup at DC otherwise stretches the broadband Schroeder decay.  The
    filter is identical for every source/mic pair, so transfer-function
    ratios between microphones are unaffected.
    """
    src, mic, n_taps, d_max = _rir_geometry(room, src, mic, sample_rate,
                                            max_order)
    if reflection_coeff is None:
        if max_order is not None:
            reflection_coeff = _eyring_reflection(room)
        else:
            reflection_coeff = reflection_for_rt60(room, src, mic, sample_rate)
    beta = reflection_coeff
    fs = sample_rate
    c = room.speed_of_sound
    half = _SINC_TAPS // 2
    offs = np.arange(_SINC_TAPS)
    h = np.zeros(n_taps)
    for d, refl in _image_chunks(room, src, mic, d_max, max_order):
        amp = beta ** refl / (4.0 * np.pi * d)
        delay = d / c * fs
        n_start = np.floor(delay).astype(int) - (half - 1)
        t = n_start[:, None] + offs[None, :] - delay[:, None]
        taps = amp[:, None] * (0.5 + 0.5 * np.cos(np.pi * t / half)) * np.sinc(t)
        idx = n_start[:, None] + offs[None, :]
        valid = (idx >= 0) & (idx < n_taps)
        h += np.bincount(idx[valid], weights=taps[valid], minlength=n_taps)
    if max_order is None:
        b, a = butter(2, 20.0 / (fs / 2.0), "highpass")
        h = lfilter(b, a, h)
    return Rir(taps=h, sample_rate=fs)


# ---------------------------------------------------------------------------
# dry source synthesis (used when no WAV corpus is supplied)


def _speech_like(rng, n, fs):
    """Amplitude-modulated harmonic complex with pauses and vibrato."""
    t = np.arange(n) / fs
    f0 = rng.uniform(110.0, 200.0)
    vibrato = 1.0 + 0.02 * np.sin(2.0 * np.pi * rng.uniform(4.0, 6.0) * t)
    phase = 2.0 * np.pi * f0 * np.cumsum(vibrato) / fs
    x = np.zeros(n)
    for k in range(1, 16):
        x += np.cos(k * phase + rng.uniform(0, 2 * np.pi)) / k
    # syllabic on/off envelope: smoothed random gate at a few Hz
    gate_hz = rng.uniform(2.5, 4.0)
    n_gate = max(2, int(np.ceil(n / fs * gate_hz)))
    gates = (rng.uniform(size=n_gate) > 0.3).astype(float) * \
        rng.uniform(0.4, 1.0, size=n_gate)
    if not np.any(gates):  # guarantee voiced content in short clips
        gates[int(rng.integers(n_gate))] = 1.0
    env = np.interp(np.linspace(0, n_gate - 1, n), np.arange(n_gate), gates)
    win = int(0.02 * fs)
    env = np.convolve(env, np.ones(win) / win, mode="same")
    return x * env


def _pink_noise(rng, n):
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.arange(spec.size)
    spec[1:] /= np.sqrt(f[1:])
    return np.fft.irfft(spec, n=n)


def _music_like(rng, n, fs):
    """Sustained tone chord with slow tremolo."""
    t = np.arange(n) / fs
    root = rng.uniform(200.0, 330.0)
    x = np.zeros(n)
    for semitones in (0, 4, 7, 12):
        f = root * 2.0 ** (semitones / 12.0)
        trem = 1.0 + 0.3 * np.sin(2.0 * np.pi * rng.uniform(1.0, 3.0) * t
                                  + rng.uniform(0, 2 * np.pi))
        x += trem * np.sin(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x


def make_dry_sources(seed, duration, sample_rate=16000):
    """Synthesize unit-RMS dry speech/noise/music signals."""
    n = int(round(duration * sample_rate))
    out = {}
    for i, (name, gen) in enumerate([("speech", _speech_like),
                                     ("noise", lambda r, m, f: _pink_noise(r, m)),
                                     ("music", _music_like)]):
        rng = np.random.default_rng([seed, 1000 + i])
        x = gen(rng, n, sample_rate)
        rms = np.sqrt(np.mean(x ** 2))
        if rms == 0:
            raise ValueError(f"synthesized {name} source is silent")
        out[name] = x / rms
    return out


@dataclass
class RenderedScene:
    spec: SceneSpec
    mixture: np.ndarray      # (M, N)
    speech: np.ndarray       # reverberant desired component, (M, N)
    noise: np.ndarray        # scaled reverberant noise, (M, N)
    music: np.ndarray        # scaled reverberant music, (M, N)
    sensor: np.ndarray       # per-mic white noise, (M, N)
    sample_rate: int
    rirs: dict = field(default_factory=dict)  # source -> list of Rir per mic

    @property
    def interference(self):
        """Everything the desired-source estimate should reject."""
        return self.noise + self.music + self.sensor


def render_scene(spec, dry=None, sample_rate=16000, max_order=None,
                 sensor_snr_db=30.0):
    """Convolve dry sources with their RIRs and mix at the scene's SNRs.

    SNR and SMR are energy ratios of the reverberant components at mic 1.
    Per-mic white sensor noise is added 30 dB below that mic's signal.
    Returns the mixture along with every isolated component.
    """
    fs = sample_rate
    n = int(round(spec.duration * fs))
    if dry is None:
        dry = make_dry_sources(spec.seed, spec.duration, fs)
    # one wall-coefficient calibration serves every source/mic pair
    beta = None
    if max_order is None:
        mid_mic = spec.array.mic_positions[spec.array.num_mics // 2]
        beta = reflection_for_rt60(spec.room, spec.source_positions["speech"],
                                   mid_mic, fs)
    comps = {}
    rirs = {}
    for name in ("speech", "noise", "music"):
        x = np.asarray(dry[name], dtype=float)
        if x.size < n:
            raise ValueError(f"dry {name} source shorter than scene duration")
        x = x[:n]
        if np.sum(x ** 2) == 0:
            raise ValueError(f"dry {name} source is silent")
        rirs[name] = [image_source_rir(spec.room, spec.source_positions[name],
                                       mic, fs, max_order=max_order,
                                       reflection_coeff=beta)
                      for mic in spec.array.mic_positions]
        comps[name] = np.stack([fftconvolve(x, r.taps)[:n] for r in rirs[name]])

    e_speech = np.sum(comps["speech"][0] ** 2)
    gains = {}
    for name, target_db in (("noise", spec.snr_db), ("music", spec.smr_db)):
        e = np.sum(comps[name][0] ** 2)
        gains[name] = np.sqrt(e_speech / (e * 10.0 ** (target_db / 10.0)))
        comps[name] = comps[name] * gains[name]

    pre = comps["speech"] + comps["noise"] + comps["music"]
    rng = np.random.default_rng([int(spec.seed), 77])
    sensor = rng.standard_normal(pre.shape)
    mic_power = np.mean(pre ** 2, axis=1, keepdims=True)
    sensor *= np.sqrt(mic_power * 10.0 ** (-sensor_snr_db / 10.0))
    mixture = pre + sensor
    return RenderedScene(spec=spec, mixture=mixture, speech=comps["speech"],
                         noise=comps["noise"], music=comps["music"],
                         sensor=sensor, sample_rate=fs, rirs=rirs)


def scene_doa(spec, source="speech"):
    """Direction of arrival in degrees, measured from the array axis.

    0 deg means the wavefront travels along mic 1 -> mic M (endfire),
    90 deg is broadside; matches the steering convention in beamforming.
    """
    u_prop = spec.array.center - spec.source_positions[source]
    u_prop = u_prop / np.linalg.norm(u_prop)
    cosang = np.clip(np.dot(u_prop, spec.array.axis), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosang)))


def write_manifest(path, entries):
    """JSON-lines manifest; one dict per scene."""
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
