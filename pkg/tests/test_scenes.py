import numpy as np
import pytest

from cospa.scenes import (
    ArraySpec, Rir, RoomSpec, SceneRanges, SceneSpec, image_source_rir,
    make_dry_sources, measure_rt60, read_manifest, render_scene, sample_scene,
    scene_doa, write_manifest,
)

FS = 16000


def small_ranges(duration=0.4):
    # compact scenes keep image-source rendering fast in unit tests
    return SceneRanges(room_min=(4.0, 4.0, 2.5), room_max=(5.0, 5.0, 3.0),
                       rt60=(0.3, 0.35), duration=duration)


class TestSampleScene:
    def test_deterministic(self):
        a, b = sample_scene(42), sample_scene(42)
        assert a.to_dict() == b.to_dict()

    def test_different_seeds_differ(self):
        assert sample_scene(1).to_dict() != sample_scene(2).to_dict()

    def test_ranges_of_1000_samples(self):
        rt60s, snrs, smrs = [], [], []
        for seed in range(1000):
            s = sample_scene(seed)
            rt60s.append(s.room.rt60)
            snrs.append(s.snr_db)
            smrs.append(s.smr_db)
            assert np.all(np.asarray(s.room.dimensions) >= [3, 3, 1])
            assert np.all(np.asarray(s.room.dimensions) <= [8, 8, 4])
        rt60s = np.array(rt60s)
        assert rt60s.min() >= 0.3 and rt60s.max() <= 0.7
        # uniform [-7, 0] has mean -3.5, sem ~ 0.064 for n=1000
        assert abs(np.mean(snrs) + 3.5) < 0.3
        assert abs(np.mean(smrs) + 3.5) < 0.3

    def test_positions_clear_of_walls(self):
        for seed in range(50):
            s = sample_scene(seed)
            dims = s.room.dimensions
            for p in list(s.source_positions.values()) + list(s.array.mic_positions):
                assert np.all(p >= 0.1 - 1e-9) and np.all(p <= dims - 0.1 + 1e-9)

    def test_impossible_placement_raises(self):
        bad = SceneRanges(room_min=(3, 3, 1), room_max=(3, 3, 1),
                          wall_clearance=2.0)
        with pytest.raises(RuntimeError, match="retries"):
            sample_scene(0, bad)

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError, match="range"):
            sample_scene(0, SceneRanges(rt60=(0.7, 0.3)))


class TestImageSourceRir:
    def test_anechoic_single_impulse(self):
        room = RoomSpec([8.0, 8.0, 4.0], 0.5)
        src = np.array([1.0, 1.0, 1.5])
        mic = src + np.array([343.0 * 100 / FS, 0.0, 0.0])  # exactly 100 samples
        rir = image_source_rir(room, src, mic, FS, max_order=0)
        d = np.linalg.norm(mic - src)
        assert rir.peak_delay() == 100
        assert abs(rir.taps[100] - 1.0 / (4 * np.pi * d)) < 1e-12
        rest = np.delete(rir.taps, 100)
        assert np.max(np.abs(rest)) < 1e-14  # sinc zeros up to float dust

    def test_direct_path_delay_within_one_sample(self):
        room = RoomSpec([6.0, 5.0, 3.0], 0.4)
        rng = np.random.default_rng(3)
        for _ in range(10):
            src = rng.uniform(0.4, np.array([5.6, 4.6, 2.6]))
            mic = rng.uniform(0.4, np.array([5.6, 4.6, 2.6]))
            d = np.linalg.norm(mic - src)
            if d < 0.3:
                continue
            rir = image_source_rir(room, src, mic, FS, max_order=0)
            assert abs(rir.peak_delay() - d / 343.0 * FS) <= 1.0

    def test_inverse_distance_law(self):
        room = RoomSpec([8.0, 8.0, 4.0], 0.5)
        src = np.array([1.0, 1.0, 1.5])
        m1 = src + np.array([343.0 * 50 / FS, 0, 0])
        m2 = src + np.array([343.0 * 100 / FS, 0, 0])
        r1 = image_source_rir(room, src, m1, FS, max_order=0)
        r2 = image_source_rir(room, src, m2, FS, max_order=0)
        assert abs(r1.taps.max() / r2.taps.max() - 2.0) < 1e-9

    def test_rt60_within_twenty_percent(self):
        room = RoomSpec([5.0, 4.0, 3.0], 0.4)
        rir = image_source_rir(room, [1.0, 1.0, 1.5], [3.0, 2.5, 1.5], FS)
        measured = measure_rt60(rir)
        assert abs(measured - 0.4) / 0.4 < 0.2

    def test_degenerate_room(self):
        with pytest.raises(ValueError, match="degenerate"):
            RoomSpec([5.0, 0.0, 3.0], 0.4)

    def test_coincident_src_mic(self):
        room = RoomSpec([5.0, 4.0, 3.0], 0.4)
        with pytest.raises(ValueError, match="coincide"):
            image_source_rir(room, [1, 1, 1], [1, 1, 1], FS)

    def test_outside_room(self):
        room = RoomSpec([5.0, 4.0, 3.0], 0.4)
        with pytest.raises(ValueError, match="inside"):
            image_source_rir(room, [9, 1, 1], [1, 1, 1], FS)


class TestMeasureRt60:
    def test_ideal_exponential_decay(self):
        t = np.arange(int(1.0 * FS)) / FS
        for T in (0.3, 0.5):
            rir = Rir(np.exp(-6.91 * t / T), FS)
            assert abs(measure_rt60(rir) - T) < 0.02

    def test_pure_impulse_raises(self):
        taps = np.zeros(1000)
        taps[0] = 1.0
        with pytest.raises(ValueError):
            measure_rt60(Rir(taps, FS))

    def test_scale_invariance(self):
        t = np.arange(int(0.8 * FS)) / FS
        rir = Rir(np.exp(-6.91 * t / 0.4), FS)
        scaled = Rir(10.0 * rir.taps, FS)
        assert abs(measure_rt60(rir) - measure_rt60(scaled)) < 1e-9


class TestRenderScene:
    @pytest.fixture(scope="class")
    def rendered(self):
        spec = sample_scene(7, small_ranges())
        return render_scene(spec)

    def test_mixture_is_exact_component_sum(self, rendered):
        total = rendered.speech + rendered.noise + rendered.music + rendered.sensor
        assert np.max(np.abs(rendered.mixture - total)) < 1e-12

    def test_snr_and_smr_match_spec_at_mic1(self, rendered):
        e_sp = np.sum(rendered.speech[0] ** 2)
        e_no = np.sum(rendered.noise[0] ** 2)
        e_mu = np.sum(rendered.music[0] ** 2)
        snr = 10 * np.log10(e_sp / e_no)
        smr = 10 * np.log10(e_sp / e_mu)
        assert abs(snr - rendered.spec.snr_db) < 0.01
        assert abs(smr - rendered.spec.smr_db) < 0.01

    def test_sensor_noise_30db_below_mix(self, rendered):
        pre = rendered.speech + rendered.noise + rendered.music
        for m in range(pre.shape[0]):
            ratio = 10 * np.log10(np.mean(pre[m] ** 2)
                                  / np.mean(rendered.sensor[m] ** 2))
            assert abs(ratio - 30.0) < 0.3

    def test_shapes_and_duration(self, rendered):
        n = int(round(rendered.spec.duration * FS))
        m = rendered.spec.array.num_mics
        assert rendered.mixture.shape == (m, n)

    def test_deterministic(self):
        spec = sample_scene(8, small_ranges(duration=0.3))
        a = render_scene(spec)
        b = render_scene(spec)
        assert np.array_equal(a.mixture, b.mixture)

    def test_anechoic_render_is_delayed_dry(self):
        spec = sample_scene(9, small_ranges(duration=0.3))
        dry = make_dry_sources(spec.seed, spec.duration, FS)
        out = render_scene(spec, dry, max_order=0)
        rir = out.rirs["speech"][0]
        k = rir.peak_delay()
        n = out.speech.shape[1]
        want = np.zeros(n)
        want[k:] = dry["speech"][:n - k] * rir.taps[k]
        # fractional-delay sinc spreads a little energy around the peak
        err = np.linalg.norm(out.speech[0] - want) / np.linalg.norm(want)
        assert err < 0.35
        assert np.argmax(np.correlate(out.speech[0], dry["speech"][:n - k],
                                      "valid")) == k

    def test_silent_source_rejected(self):
        spec = sample_scene(10, small_ranges(duration=0.25))
        dry = make_dry_sources(spec.seed, spec.duration, FS)
        dry["noise"] = np.zeros_like(dry["noise"])
        with pytest.raises(ValueError, match="silent"):
            render_scene(spec, dry)

    def test_short_dry_source_rejected(self):
        spec = sample_scene(11, small_ranges(duration=0.25))
        dry = make_dry_sources(spec.seed, spec.duration, FS)
        dry["music"] = dry["music"][:100]
        with pytest.raises(ValueError, match="shorter"):
            render_scene(spec, dry)


class TestSceneDoa:
    def make_spec(self, src_pos):
        room = RoomSpec([8.0, 8.0, 4.0], 0.4)
        array = ArraySpec.linear([4.0, 4.0, 1.5], azimuth_rad=0.0)
        return SceneSpec(room=room, array=array,
                         source_positions={"speech": np.asarray(src_pos),
                                           "noise": np.array([1, 1, 1.0]),
                                           "music": np.array([7, 7, 3.0])},
                         snr_db=0.0, smr_db=0.0, duration=1.0, seed=0)

    def test_broadside_is_90(self):
        spec = self.make_spec([4.0, 6.0, 1.5])
        assert abs(scene_doa(spec) - 90.0) < 1e-9

    def test_wave_toward_last_mic_is_0(self):
        # source on the mic-1 side: propagation runs along mic1 -> micM
        spec = self.make_spec([1.0, 4.0, 1.5])
        assert abs(scene_doa(spec) - 0.0) < 1e-9

    def test_wave_toward_mic1_is_180(self):
        spec = self.make_spec([7.0, 4.0, 1.5])
        assert abs(scene_doa(spec) - 180.0) < 1e-9


class TestManifest:
    def test_roundtrip(self, tmp_path):
        specs = [sample_scene(s, small_ranges()) for s in (0, 1)]
        entries = [dict(s.to_dict(), mixture_wav=f"scene_{i}.wav")
                   for i, s in enumerate(specs)]
        path = tmp_path / "scenes.jsonl"
        write_manifest(path, entries)
        back = read_manifest(path)
        assert back == entries
        rebuilt = SceneSpec.from_dict(back[0])
        assert rebuilt.to_dict() == specs[0].to_dict()
