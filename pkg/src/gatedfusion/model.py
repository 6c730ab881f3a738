"""Full architecture: per-modality branches (positional encoding + gated
self-attention + pooling + projection for text/image, a single dense
projection for acoustics), tensor fusion, and the two-layer output head.

Backbones are external: the model consumes embedding sequences, not raw
text or images.  A deterministic toy backbone stands in at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from io import BytesIO

import numpy as np

from . import dataio
from . import nn
from . import tensor as T
from .attention import GatedAttentionParams, gated_self_attention_forward
from .fusion import BranchVectors, FusedTensor, tensor_fusion
from .nn import DenseLayer
from .tensor import Tensor

CHECKPOINT_MAGIC = b"TFM1"

MODALITIES = ("text", "image", "acoustic")


@dataclass
class ModelConfig:
    modalities: tuple = MODALITIES
    d_text: int = 768
    d_image: int = 768
    text_proj: int = 128
    image_proj: int = 32
    acoustic_in: int = 88
    acoustic_proj: int = 32
    d_g: int = 64
    head_hidden: int = 128
    dropout1: float = 0.6
    dropout2: float = 0.2
    n_classes: int = 2

    def __post_init__(self):
        self.modalities = tuple(self.modalities)
        if "text" not in self.modalities or len(self.modalities) < 2:
            raise ValueError("modalities must include text plus at least one other")
        for m in self.modalities:
            if m not in MODALITIES:
                raise ValueError(f"unknown modality {m!r}")

    def fused_shape(self) -> tuple:
        dims = [self.text_proj + 1]
        if "image" in self.modalities:
            dims.append(self.image_proj + 1)
        if "acoustic" in self.modalities:
            dims.append(self.acoustic_proj + 1)
        return tuple(dims)

    def fused_size(self) -> int:
        return int(np.prod(self.fused_shape()))


def toy_config() -> ModelConfig:
    """Desk-scale dims used for gradient checks and synthetic training."""
    return ModelConfig(d_text=6, d_image=5, text_proj=4, image_proj=3,
                       acoustic_proj=3, d_g=4, head_hidden=8)


@dataclass
class SubjectSample:
    subject_id: str
    label: int  # AD=1, nonAD=0
    text_embeddings: np.ndarray          # N x d_text
    image_embeddings: np.ndarray | None  # T x d_image
    acoustic_features: np.ndarray | None  # 88


class Model:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self._params = {}

        self.text_attention = GatedAttentionParams(cfg.d_text, rng, cfg.d_g, dtype)
        self.text_proj = DenseLayer(cfg.d_text, cfg.text_proj, rng, dtype)
        self._register("text_attention", self.text_attention.parameters())
        self._register("text_proj", self.text_proj.parameters())

        if "image" in cfg.modalities:
            self.image_attention = GatedAttentionParams(cfg.d_image, rng, cfg.d_g, dtype)
            self.image_proj = DenseLayer(cfg.d_image, cfg.image_proj, rng, dtype)
            self._register("image_attention", self.image_attention.parameters())
            self._register("image_proj", self.image_proj.parameters())

        if "acoustic" in cfg.modalities:
            self.acoustic_proj = DenseLayer(cfg.acoustic_in, cfg.acoustic_proj, rng, dtype)
            self._register("acoustic_proj", self.acoustic_proj.parameters())

        self.head_dense1 = DenseLayer(cfg.fused_size(), cfg.head_hidden, rng, dtype)
        self.head_dense2 = DenseLayer(cfg.head_hidden, cfg.n_classes, rng, dtype)
        self._register("head_dense1", self.head_dense1.parameters())
        self._register("head_dense2", self.head_dense2.parameters())

    def _register(self, prefix: str, params) -> None:
        names = ["weight", "bias"] * (len(params) // 2)
        if prefix.endswith("attention"):
            layers = ["fc_q", "fc_k", "fc_g"]
            for layer, i in zip(np.repeat(layers, 2), range(len(params))):
                self._params[f"{prefix}.{layer}.{names[i]}"] = params[i]
        else:
            for i, p in enumerate(params):
                self._params[f"{prefix}.{names[i]}"] = p

    def parameters(self) -> list:
        return list(self._params.values())

    def named_parameters(self) -> dict:
        return dict(self._params)

    # --- branches -------------------------------------------------------

    def text_branch(self, e: Tensor) -> Tensor:
        return self._sequence_branch(e, self.text_attention, self.text_proj, self.cfg.d_text)

    def image_branch(self, e: Tensor) -> Tensor:
        return self._sequence_branch(e, self.image_attention, self.image_proj, self.cfg.d_image)

    def _sequence_branch(self, e: Tensor, attention, proj, d: int) -> Tensor:
        if e.data.ndim != 2 or e.data.shape[1] != d:
            raise ValueError(f"branch expects N x {d} embeddings, got {e.data.shape}")
        pe = nn.positional_encoding(e.data.shape[0], d, dtype=e.data.dtype)
        z = T.add(e, pe)
        h, _ = gated_self_attention_forward(attention, z)
        return proj(nn.average_pool(h))

    def acoustic_branch(self, f: Tensor) -> Tensor:
        if f.data.shape != (self.cfg.acoustic_in,):
            raise ValueError(f"acoustic branch expects length {self.cfg.acoustic_in}, got {f.data.shape}")
        return self.acoustic_proj(f)

    # --- head and full forward -----------------------------------------

    def head_forward(self, fused: FusedTensor, training: bool, rng=None) -> Tensor:
        x = nn.dropout_apply(fused.flat, self.cfg.dropout1, training, rng)
        x = T.relu(self.head_dense1(x))
        x = nn.dropout_apply(x, self.cfg.dropout2, training, rng)
        return self.head_dense2(x)

    def fuse(self, sample: SubjectSample) -> FusedTensor:
        z_t = self.text_branch(Tensor(np.asarray(sample.text_embeddings, dtype=self.dtype)))
        z_v = z_a = None
        if "image" in self.cfg.modalities:
            if sample.image_embeddings is None:
                raise ValueError(f"sample {sample.subject_id}: image embeddings missing")
            z_v = self.image_branch(Tensor(np.asarray(sample.image_embeddings, dtype=self.dtype)))
        if "acoustic" in self.cfg.modalities:
            if sample.acoustic_features is None:
                raise ValueError(f"sample {sample.subject_id}: acoustic features missing")
            z_a = self.acoustic_branch(Tensor(np.asarray(sample.acoustic_features, dtype=self.dtype)))
        return tensor_fusion(BranchVectors(z_t=z_t, z_v=z_v, z_a=z_a))

    def forward(self, sample: SubjectSample, training: bool = False, rng=None) -> Tensor:
        return self.head_forward(self.fuse(sample), training, rng)

    def predict(self, sample: SubjectSample) -> int:
        logits = self.forward(sample, training=False).data
        # tie broken toward non-AD (class 0)
        return int(logits[1] > logits[0])

    # --- checkpoints ----------------------------------------------------

    def save(self, path) -> None:
        cfg_blob = json.dumps(
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self.cfg).items()},
            sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", len(cfg_blob)))
            f.write(cfg_blob)
            f.write(struct.pack("<I", len(self._params)))
            for name, p in self._params.items():
                nb = name.encode()
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                buf = BytesIO()
                _write_tensor_stream(buf, p.data)
                f.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != CHECKPOINT_MAGIC:
            raise dataio.FormatError(f"{path}: bad checkpoint magic {blob[:4]!r}")
        off = 4
        (clen,) = struct.unpack_from("<I", blob, off)
        off += 4
        cfg_dict = json.loads(blob[off:off + clen])
        off += clen
        cfg_dict["modalities"] = tuple(cfg_dict["modalities"])
        cfg = ModelConfig(**cfg_dict)
        model = cls(cfg, np.random.default_rng(0))
        (nparams,) = struct.unpack_from("<I", blob, off)
        off += 4
        for _ in range(nparams):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode()
            off += nlen
            arr, off = _read_tensor_stream(blob, off)
            if name not in model._params:
                raise dataio.FormatError(f"{path}: unknown parameter {name!r}")
            if model._params[name].data.shape != arr.shape:
                raise dataio.FormatError(f"{path}: shape mismatch for {name!r}")
            model._params[name].data = arr.astype(model.dtype)
        return model


def _write_tensor_stream(f, x: np.ndarray) -> None:
    f.write(dataio.MAGIC)
    f.write(struct.pack("<BB", dataio._CODE_FOR_KIND[x.dtype], x.ndim))
    f.write(struct.pack(f"<{x.ndim}I", *x.shape))
    f.write(np.ascontiguousarray(x, dtype=x.dtype.newbyteorder("<")).tobytes())


def _read_tensor_stream(blob: bytes, off: int):
    if blob[off:off + 4] != dataio.MAGIC:
        raise dataio.FormatError("bad tensor magic in checkpoint")
    code, ndim = struct.unpack_from("<BB", blob, off + 4)
    dtype = dataio._DTYPE_CODES[code]
    dims = struct.unpack_from(f"<{ndim}I", blob, off + 6)
    start = off + 6 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    end = start + count * dtype.itemsize
    if end > len(blob):
        raise dataio.FormatError("truncated tensor in checkpoint")
    arr = np.frombuffer(blob[start:end], dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("=")), end


def toy_backbone(kind: str, raw, seed: int, n: int, d: int) -> np.ndarray:
    """Deterministic stand-in for a pretrained encoder: hash the input,
    then project hashed chunks through a seeded random matrix."""
    if kind not in ("text", "image"):
        raise ValueError(f"unknown backbone kind {kind!r}")
    if isinstance(raw, str):
        raw = raw.encode()
    elif isinstance(raw, np.ndarray):
        raw = raw.tobytes()
    digest = hashlib.sha256(bytes(raw)).digest()
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((32, d))
    rows = np.empty((n, d), dtype=np.float64)
    for i in range(n):
        h = hashlib.sha256(digest + i.to_bytes(4, "little")).digest()
        feats = np.frombuffer(h, dtype=np.uint8).astype(np.float64) / 255.0 - 0.5
        rows[i] = feats @ proj
    return rows.astype(np.float32)


def load_samples(manifest: dataio.Manifest, modalities) -> list:
    """Materialize SubjectSamples for the manifest records, honoring the
    configured modality set."""
    acoustic_cache = {}
    samples = []
    base = manifest.base_dir
    for r in manifest.records:
        text = dataio.read_tensor(base / r.text_emb)
        image = None
        acoustic = None
        if "image" in modalities:
            if not r.image_emb:
                raise dataio.FormatError(f"{r.subject_id}: manifest has no image embedding")
            image = dataio.read_tensor(base / r.image_emb)
        if "acoustic" in modalities:
            if not r.acoustic_row:
                raise dataio.FormatError(f"{r.subject_id}: manifest has no acoustic reference")
            csv_path, _, row_id = r.acoustic_row.partition("#")
            if csv_path not in acoustic_cache:
                acoustic_cache[csv_path] = dataio.read_acoustic_csv(base / csv_path)
            table = acoustic_cache[csv_path]
            if row_id not in table:
                raise dataio.FormatError(f"{r.subject_id}: row {row_id!r} not in {csv_path}")
            acoustic = table[row_id]
        samples.append(SubjectSample(subject_id=r.subject_id, label=r.label,
                                     text_embeddings=text, image_embeddings=image,
                                     acoustic_features=acoustic))
    return samples
