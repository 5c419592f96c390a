"""WAV codec, synthetic corpora, SNR mixing, metrics and spectrogram export."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
SI_SDR_CAP = 100.0


class WavError(ValueError):
    pass


@dataclass
class Wave:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("wave contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


# --- WAV -------------------------------------------------------------------

def to_pcm16(samples) -> np.ndarray:
    """float -> int16 with ``round(x * 32768)`` saturated to [-32768, 32767]."""
    x = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def from_pcm16(pcm) -> np.ndarray:
    return np.asarray(pcm, dtype=np.float64) / 32768.0


def write_wav(wave: Wave, path) -> None:
    pcm = to_pcm16(wave.samples)
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, 1, int(wave.sample_rate), int(wave.sample_rate) * 2, 2, 16,
        b"data", len(data),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def parse_wav_header(blob: bytes) -> dict:
    """Walk the RIFF chunks; return fmt fields plus the data chunk offset/size."""
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        body = pos + 8
        if body + size > len(blob):
            raise WavError(f"chunk {cid!r} runs past end of file")
        if cid == b"fmt ":
            if size < 16:
                raise WavError("fmt chunk too short")
            tag, ch, rate, byte_rate, align, bits = struct.unpack_from("<HHIIHH", blob, body)
            fmt = dict(format_tag=tag, channels=ch, sample_rate=rate, byte_rate=byte_rate,
                       block_align=align, bits_per_sample=bits)
        elif cid == b"data":
            data = (body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavError("missing fmt chunk")
    if data is None:
        raise WavError("missing data chunk")
    fmt["data_offset"], fmt["data_size"] = data
    return fmt


def read_wav(path) -> Wave:
    blob = Path(path).read_bytes()
    h = parse_wav_header(blob)
    if h["format_tag"] != 1:
        raise WavError(f"unsupported encoding (format tag {h['format_tag']}); only PCM is read")
    if h["channels"] != 1:
        raise WavError(f"{h['channels']} channels; only mono is supported")
    if h["bits_per_sample"] != 16:
        raise WavError(f"{h['bits_per_sample']}-bit samples; only 16-bit is supported")
    if h["data_size"] % 2:
        raise WavError("data chunk has an odd byte count")
    off, size = h["data_offset"], h["data_size"]
    pcm = np.frombuffer(blob[off:off + size], dtype="<i2")
    return Wave(from_pcm16(pcm), h["sample_rate"])


def require_rate(*waves: Wave, rate: int = SAMPLE_RATE):
    for w in waves:
        if w.sample_rate != rate:
            raise WavError(f"sample rate {w.sample_rate} Hz; resample to {rate} Hz first")


# --- mixing and metrics ----------------------------------------------------

def snr_db(clean, noise) -> float:
    c, n = np.asarray(clean, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    return float(10.0 * np.log10(np.dot(c, c) / np.dot(n, n)))


def mix_at_snr(clean: Wave, noise: Wave, snr: float) -> tuple[Wave, Wave]:
    """Scale ``noise`` so the clean-to-noise energy ratio is ``snr`` dB and add it.

    Noise longer than the clean signal is cropped to its start.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("clean and noise sample rates differ")
    if len(noise) < len(clean):
        raise ValueError(f"noise has {len(noise)} samples, clean needs {len(clean)}")
    x = clean.samples
    w = noise.samples[: x.size]
    ex, ew = np.dot(x, x), np.dot(w, w)
    if ex == 0 or ew == 0:
        raise ValueError("cannot mix a zero-energy signal")
    gain = np.sqrt(ex / ew) * 10.0 ** (-snr / 20.0)
    w2 = gain * w
    return Wave(x + w2, clean.sample_rate), Wave(w2, clean.sample_rate)


def si_sdr(estimate, reference, cap: float = SI_SDR_CAP) -> float:
    """Scale-invariant SDR in dB, capped when the residual vanishes."""
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch {est.size} vs {ref.size}")
    eref = np.dot(ref, ref)
    if eref == 0:
        raise ValueError("reference has zero energy")
    target = (np.dot(est, ref) / eref) * ref
    resid = est - target
    et, er = np.dot(target, target), np.dot(resid, resid)
    if er < 1e-12 * et:
        return cap
    if et == 0:
        return -cap
    return float(10.0 * np.log10(et / er))


# --- STFT ------------------------------------------------------------------

@dataclass(frozen=True)
class StftConfig:
    frame: int = 512
    hop: int = 128

    def __post_init__(self):
        if self.frame < 2 or self.frame & (self.frame - 1):
            raise ValueError(f"frame length must be a power of two, got {self.frame}")
        if self.hop < 1:
            raise ValueError("hop must be positive")


def stft(x, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Hann-windowed frames -> complex spectra, shape (frames, frame // 2 + 1)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < cfg.frame:
        raise ValueError(f"signal of {x.size} samples is shorter than one frame ({cfg.frame})")
    n_frames = 1 + (x.size - cfg.frame) // cfg.hop
    idx = np.arange(cfg.frame)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    win = np.hanning(cfg.frame + 1)[:-1]
    return np.fft.rfft(x[idx] * win, axis=1)


def log_spectral_distance(a, b, cfg: StftConfig = StftConfig(), eps: float = 1e-8) -> float:
    """RMS over frames and bins of ``20 |log10(|A| + eps) - log10(|B| + eps)|``."""
    a = a.samples if isinstance(a, Wave) else a
    b = b.samples if isinstance(b, Wave) else b
    if np.size(a) != np.size(b):
        raise ValueError("signals differ in length")
    A, B = np.abs(stft(a, cfg)), np.abs(stft(b, cfg))
    d = 20.0 * (np.log10(A + eps) - np.log10(B + eps))
    return float(np.sqrt(np.mean(d * d)))


def spectrogram_db(x, cfg: StftConfig = StftConfig(), eps: float = 1e-8) -> np.ndarray:
    return 20.0 * np.log10(np.abs(stft(x, cfg)) + eps)


def spectrogram_export(wave, path, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Write ``<path>.pgm`` (8-bit, low frequencies at the bottom) and ``<path>.csv``.

    The image is the dB magnitude min/max-normalized per file; the CSV holds
    the dB values, one row per frame.  Returns the dB array.
    """
    x = wave.samples if isinstance(wave, Wave) else np.asarray(wave, dtype=np.float64)
    db = spectrogram_db(x, cfg)
    lo, hi = float(db.min()), float(db.max())
    norm = np.zeros_like(db) if hi == lo else (db - lo) / (hi - lo)
    img = np.round(norm * 255.0).astype(np.uint8).T[::-1]
    base = Path(path)
    base = base.with_suffix("") if base.suffix in (".pgm", ".csv") else base
    with open(base.with_suffix(".pgm"), "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(np.ascontiguousarray(img).tobytes())
    with open(base.with_suffix(".csv"), "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in db])
    return db


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# --- synthetic corpora -----------------------------------------------------

CORPUS_KINDS = ("harmonic", "am-noise", "silence-mixed")


def harmonic_tone(n: int, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE,
                  f0_range=(100.0, 300.0)) -> tuple[np.ndarray, float]:
    """Sum of 3-8 harmonics with sinusoidal vibrato and a smooth envelope; returns (signal, f0)."""
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(*f0_range)
    n_harm = int(rng.integers(3, 9))
    depth = rng.uniform(0.005, 0.02)
    rate = rng.uniform(4.0, 7.0)
    inst = f0 * (1.0 + depth * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(inst) / sample_rate
    x = np.zeros(n)
    for k in range(1, n_harm + 1):
        if k * f0 * (1 + depth) >= sample_rate / 2:
            break
        x += rng.uniform(0.3, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    env_rate = rng.uniform(0.5, 2.0)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * env_rate * t + rng.uniform(0, 2 * np.pi))
    ramp = min(n // 8, int(0.01 * sample_rate))
    if ramp > 0:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] *= fade
        env[-ramp:] *= fade[::-1]
    return x * env, f0


def _am_noise(n, rng, sample_rate):
    t = np.arange(n) / sample_rate
    base = np.convolve(rng.standard_normal(n + 15), np.hanning(16) / 8.0, mode="valid")
    return base * (0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(1.0, 8.0) * t))


def _silence_mixed(n, rng, sample_rate):
    x, _ = harmonic_tone(n, rng, sample_rate)
    mask = np.ones(n)
    seg = max(n // 6, 1)
    for start in range(0, n, 2 * seg):
        if rng.random() < 0.6:
            mask[start:start + seg] = 0.0
    smooth = np.hanning(min(seg, 161) | 1)
    mask = np.convolve(mask, smooth / smooth.sum(), mode="same")
    return x * mask


def peak_normalize(x, peak: float = 0.5) -> np.ndarray:
    m = float(np.max(np.abs(x))) if np.size(x) else 0.0
    return x if m == 0 else x * (peak / m)


def synth_corpus(kind: str, n: int, length: int, seed: int, sample_rate: int = SAMPLE_RATE) -> list[Wave]:
    """Deterministic list of ``n`` peak-normalized (0.5) synthetic clips of ``length`` samples."""
    if kind not in CORPUS_KINDS:
        raise ValueError(f"unknown corpus kind {kind!r}; choose from {CORPUS_KINDS}")
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for _ in range(n):
        if kind == "harmonic":
            x, _ = harmonic_tone(length, rng, sample_rate)
        elif kind == "am-noise":
            x = _am_noise(length, rng, sample_rate)
        else:
            x = _silence_mixed(length, rng, sample_rate)
        out.append(Wave(peak_normalize(x), sample_rate))
    return out
