"""Audio front-end: WAV -> three-channel image (log-Mel dB, delta,
delta-delta), each channel resized to 224 x 224.

The whole pipeline is deterministic; the same file always produces
bit-identical tensors.
"""

from __future__ import annotations

import hashlib
import json
import wave
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.samples.size == 0:
            raise ValueError("empty audio clip")
        if self.sample_rate <= 0:
            raise ValueError(f"bad sample rate {self.sample_rate}")


@dataclass
class FrontendConfig:
    n_mels: int = 224
    hop_length: int = 1024
    n_fft: int = 2048
    fmin: float = 0.0
    fmax: float | None = None  # default: Nyquist
    delta_width: int = 9
    target_size: tuple = (224, 224)
    top_db: float = 80.0

    def __post_init__(self):
        if self.n_fft < self.hop_length:
            raise ValueError("n_fft must be >= hop_length")
        if self.delta_width < 3 or self.delta_width % 2 == 0:
            raise ValueError("delta_width must be odd and >= 3")

    def hash(self) -> str:
        d = asdict(self)
        d["target_size"] = list(d["target_size"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SpectrogramImage:
    channels: np.ndarray  # 3 x 224 x 224 float32
    metadata: dict = field(default_factory=dict)


def load_wav(path) -> AudioClip:
    """Decode 16-bit PCM RIFF/WAVE; stereo is downmixed by averaging."""
    with wave.open(str(path), "rb") as w:
        if w.getcomptype() != "NONE":
            raise ValueError(f"unsupported WAV encoding {w.getcomptype()!r} in {path}")
        if w.getsampwidth() != 2:
            raise ValueError(f"only 16-bit PCM supported, got {8 * w.getsampwidth()}-bit in {path}")
        n = w.getnframes()
        raw = w.readframes(n)
        sr = w.getframerate()
        ch = w.getnchannels()
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if ch > 1:
        data = data.reshape(-1, ch).mean(axis=1)
    return AudioClip(samples=data, sample_rate=sr)


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _hz_to_mel(f):
    # Slaney scale: linear below 1 kHz, logarithmic above
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3.0)
    log_region = f >= 1000.0
    logstep = np.log(6.4) / 27.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-10) / 1000.0) / logstep, mel)
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3.0)
    logstep = np.log(6.4) / 27.0
    return np.where(m >= 15.0, 1000.0 * np.exp(logstep * (m - 15.0)), f)


def mel_filterbank(sr: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular Slaney-normalized filters, n_mels x (1 + n_fft/2)."""
    fft_freqs = np.linspace(0.0, sr / 2.0, 1 + n_fft // 2)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    enorm = 2.0 / (hz_pts[2:] - hz_pts[:-2])
    return weights * enorm[:, None]


def mel_center_freqs(sr: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    return _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))[1:-1]


def power_to_db(s: np.ndarray, top_db: float) -> np.ndarray:
    """10 log10(S / max S), floored at -top_db; zero energy hits the floor."""
    ref = max(s.max(), 1e-10)
    db = 10.0 * (np.log10(np.maximum(s, 1e-30)) - np.log10(ref))
    return np.maximum(db, -top_db)


def stft_log_mel(clip: AudioClip, cfg: FrontendConfig) -> np.ndarray:
    """Centered Hann STFT -> power -> Mel filterbank -> dB. Output is
    n_mels x frames with frames = 1 + len // hop."""
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size < cfg.n_fft:
        raise ValueError(f"clip of {x.size} samples is shorter than one {cfg.n_fft}-sample window")
    fmax = cfg.fmax if cfg.fmax is not None else clip.sample_rate / 2.0
    if fmax > clip.sample_rate / 2.0:
        raise ValueError(f"fmax {fmax} above Nyquist {clip.sample_rate / 2.0}")
    pad = cfg.n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + x.size // cfg.hop_length
    window = _hann_periodic(cfg.n_fft)
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop_length * np.arange(n_frames)[:, None]
    frames = xp[idx] * window[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2  # frames x bins
    fb = mel_filterbank(clip.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, fmax)
    mel = fb @ power.T  # n_mels x frames
    return power_to_db(mel, cfg.top_db)


def delta(m: np.ndarray, width: int) -> np.ndarray:
    """Local least-squares slope along frames (order-1 Savitzky-Golay),
    edge frames handled by edge replication."""
    if width % 2 == 0 or width < 3:
        raise ValueError(f"delta width must be odd and >= 3, got {width}")
    half = width // 2
    k = np.arange(-half, half + 1, dtype=np.float64)
    weights = k / np.sum(k ** 2)
    padded = np.pad(m, ((0, 0), (half, half)), mode="edge")
    out = np.zeros_like(m, dtype=np.float64)
    for off, w in zip(range(width), weights):
        if w != 0.0:
            out += w * padded[:, off:off + m.shape[1]]
    return out


def resize_bilinear(ch: np.ndarray, target: tuple) -> np.ndarray:
    """Bilinear resize with half-pixel center alignment."""
    h, w = ch.shape
    if h < 1 or w < 1:
        raise ValueError("cannot resize an empty image")
    th, tw = target
    if (h, w) == (th, tw):
        return ch.copy()
    sy = (np.arange(th, dtype=np.float64) + 0.5) * h / th - 0.5
    sx = (np.arange(tw, dtype=np.float64) + 0.5) * w / tw - 0.5
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]
    tl = ch[np.ix_(y0, x0)]
    tr = ch[np.ix_(y0, x1)]
    bl = ch[np.ix_(y1, x0)]
    br = ch[np.ix_(y1, x1)]
    return (tl * (1 - wy) * (1 - wx) + tr * (1 - wy) * wx
            + bl * wy * (1 - wx) + br * wy * wx)


def build_spectrogram_image(path, cfg: FrontendConfig) -> SpectrogramImage:
    """decode -> log-Mel -> delta x2 -> per-channel resize -> 3-channel stack."""
    clip = load_wav(path)
    logmel = stft_log_mel(clip, cfg)
    d1 = delta(logmel, cfg.delta_width)
    d2 = delta(d1, cfg.delta_width)
    chans = np.stack([resize_bilinear(c, cfg.target_size) for c in (logmel, d1, d2)])
    meta = {
        "source": str(path),
        "sample_rate": clip.sample_rate,
        "frames": int(logmel.shape[1]),
        "config_hash": cfg.hash(),
    }
    return SpectrogramImage(channels=chans.astype(np.float32), metadata=meta)


def normalize_for_backbone(img: SpectrogramImage) -> np.ndarray:
    """Per-channel min-max to [0, 1], then standardize with mean/std 0.5.
    Applied by image-backbone consumers, not stored in the image file."""
    out = np.empty_like(img.channels, dtype=np.float32)
    for i, c in enumerate(img.channels):
        lo, hi = float(c.min()), float(c.max())
        unit = (c - lo) / (hi - lo) if hi > lo else np.zeros_like(c)
        out[i] = (unit - 0.5) / 0.5
    return out
