import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noiseguide.audio import (
    StftConfig, Wave, WavError, harmonic_tone, log_spectral_distance, mix_at_snr, read_pgm,
    read_wav, si_sdr, snr_db, spectrogram_export, stft, synth_corpus, to_pcm16, write_wav,
)


def test_wav_round_trip_within_one_lsb(tmp_path):
    x = np.random.default_rng(0).uniform(-0.9, 0.9, 1000)
    write_wav(Wave(x), tmp_path / "a.wav")
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - x)) <= 0.5 / 32768 + 1e-15


def test_pcm_saturation():
    np.testing.assert_array_equal(to_pcm16([1.0, -1.0, 2.0, -3.0, 0.0]), [32767, -32768, 32767, -32768, 0])


def test_header_is_canonical(tmp_path):
    write_wav(Wave(np.zeros(3)), tmp_path / "z.wav")
    blob = (tmp_path / "z.wav").read_bytes()
    assert len(blob) == 44 + 6
    assert blob[:4] == b"RIFF" and blob[8:16] == b"WAVEfmt "
    assert struct.unpack_from("<HHIIHH", blob, 20) == (1, 1, 16000, 32000, 2, 16)


def _wav(tag=1, ch=1, bits=16, data=b"\x00\x00", extra=b""):
    fmt = struct.pack("<HHIIHH", tag, ch, 16000, 16000 * ch * bits // 8, ch * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + extra + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_hand_built_file_with_extra_chunk(tmp_path):
    p = tmp_path / "h.wav"
    p.write_bytes(_wav(data=struct.pack("<3h", 16384, -16384, 1), extra=b"LIST" + struct.pack("<I", 3) + b"abc\x00"))
    np.testing.assert_array_equal(read_wav(p).samples, [0.5, -0.5, 1 / 32768])


@pytest.mark.parametrize("kw", [dict(tag=3), dict(ch=2, data=b"\x00" * 4), dict(bits=24, data=b"\x00" * 3)])
def test_unsupported_formats_rejected(tmp_path, kw):
    p = tmp_path / "bad.wav"
    p.write_bytes(_wav(**kw))
    with pytest.raises(WavError):
        read_wav(p)


def test_garbage_rejected(tmp_path):
    p = tmp_path / "g.wav"
    p.write_bytes(b"not a wave file at all")
    with pytest.raises(WavError):
        read_wav(p)


def test_wave_rejects_nan():
    with pytest.raises(ValueError):
        Wave([0.0, np.nan])


@pytest.mark.parametrize("snr", [10.0, 5.0, 0.0, -5.0, 60.0])
def test_mix_hits_requested_snr(snr):
    rng = np.random.default_rng(1)
    clean, noise = Wave(rng.standard_normal(4000)), Wave(rng.standard_normal(5000))
    y, w = mix_at_snr(clean, noise, snr)
    assert abs(snr_db(clean.samples, w.samples) - snr) < 1e-9
    np.testing.assert_allclose(y.samples - clean.samples, w.samples, atol=1e-15)


def test_mix_rejects_short_noise():
    with pytest.raises(ValueError):
        mix_at_snr(Wave(np.ones(10)), Wave(np.ones(5)), 0.0)


def test_si_sdr_orthogonal_equal_power_is_zero():
    ref = np.array([1.0, 0.0, 1.0, 0.0])
    est = ref + np.array([0.0, 1.0, 0.0, 1.0])
    assert abs(si_sdr(est, ref)) < 1e-9


def test_si_sdr_identity_hits_cap():
    x = np.random.default_rng(2).standard_normal(100)
    assert si_sdr(x, x) == 100.0
    with pytest.raises(ValueError):
        si_sdr(x, np.zeros(100))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_si_sdr_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal(256)
    est = ref + 0.3 * rng.standard_normal(256)
    assert abs(si_sdr(c * est, ref) - si_sdr(est, ref)) < 1e-9


def test_lsd_of_half_amplitude():
    x = np.random.default_rng(3).standard_normal(4096)
    # 20 log10(2) = 6.0206 dB at every bin, up to the eps guard
    assert log_spectral_distance(x, 0.5 * x) == pytest.approx(6.0206, abs=1e-3)
    assert log_spectral_distance(x, x) == 0.0


def test_stft_parseval_per_frame():
    cfg = StftConfig(256, 64)
    x = np.random.default_rng(4).standard_normal(1024)
    S = stft(x, cfg)
    win = np.hanning(257)[:-1]
    frame = x[:256] * win
    full = np.fft.fft(frame)
    assert np.sum(np.abs(full) ** 2) / 256 == pytest.approx(np.sum(frame ** 2), rel=1e-12)
    np.testing.assert_allclose(S[0], full[:129], atol=1e-10)


def test_power_of_two_frames():
    with pytest.raises(ValueError):
        StftConfig(500, 128)
    with pytest.raises(ValueError):
        stft(np.zeros(100))


def test_tone_peaks_at_expected_bin():
    t = np.arange(8000) / 16000
    S = np.abs(stft(np.sin(2 * np.pi * 1000 * t)))
    # 1000 Hz * 512 / 16000 = bin 32
    assert np.all(np.argmax(S, axis=1) == 32)


def test_spectrogram_export_silence_is_uniform(tmp_path):
    db = spectrogram_export(Wave(np.zeros(2048)), tmp_path / "s")
    img = read_pgm(tmp_path / "s.pgm")
    assert img.shape == (257, db.shape[0])
    assert np.all(img == 0)
    rows = (tmp_path / "s.csv").read_text().strip().splitlines()
    assert len(rows) == db.shape[0]


def test_spectrogram_chirp_ridge_rises(tmp_path):
    t = np.arange(16000) / 16000
    chirp = np.sin(2 * np.pi * (200 * t + 3000 * t ** 2))
    spectrogram_export(Wave(chirp), tmp_path / "c.pgm")
    img = read_pgm(tmp_path / "c.pgm")
    rows = np.argmax(img, axis=0)
    # low frequencies at the bottom, so the ridge row index falls over time
    assert rows[-1] < rows[0]
    assert np.corrcoef(np.arange(rows.size), rows)[0, 1] < -0.9


def test_harmonic_tone_spectrum():
    rng = np.random.Generator(np.random.Philox(0))
    x, f0 = harmonic_tone(16000, rng)
    mag = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(16000, 1 / 16000)
    peak = freqs[np.argmax(mag)]
    ratio = peak / f0
    assert abs(ratio - round(ratio)) < 0.1


def test_synth_corpus_deterministic():
    a = synth_corpus("harmonic", 3, 1000, seed=5)
    b = synth_corpus("harmonic", 3, 1000, seed=5)
    assert all(x.samples.tobytes() == y.samples.tobytes() for x, y in zip(a, b))
    assert max(np.max(np.abs(w.samples)) for w in a) == pytest.approx(0.5)
    for kind in ("am-noise", "silence-mixed"):
        assert len(synth_corpus(kind, 2, 500, seed=1)[0]) == 500
    with pytest.raises(ValueError):
        synth_corpus("speech", 1, 10, seed=0)
