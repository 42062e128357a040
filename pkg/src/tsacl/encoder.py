"""Frozen multi-scale 1D-convolution encoder and precomputed-feature loading."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import (
    DatasetFormatError,
    TimeSeriesDataset,
    _read_exact,
    _read_manifest,
    _require,
    write_manifest,
)

NORMALIZATIONS = ("none", "sample", "channel")


@dataclass(frozen=True)
class Block:
    out_channels: int
    kernel_size: int
    pool: int = 2


@dataclass(frozen=True)
class EncoderSpec:
    blocks: tuple[Block, ...] = (Block(32, 7), Block(64, 5), Block(128, 3), Block(256, 3))
    in_channels: int = 3
    seed: int = 0
    # None means every block
    include_layers: tuple[int, ...] | None = None

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(**b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("encoder needs at least one block")
        for b in blocks:
            if b.kernel_size < 1 or b.kernel_size % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and >= 1, got {b.kernel_size}")
            if b.pool < 1:
                raise ValueError(f"pool factors must be >= 1, got {b.pool}")
            if b.out_channels < 1:
                raise ValueError("out_channels must be positive")
        if self.in_channels < 1:
            raise ValueError("in_channels must be positive")
        if self.include_layers is not None:
            layers = tuple(sorted(set(int(k) for k in self.include_layers)))
            if not layers or layers[0] < 0 or layers[-1] >= len(blocks):
                raise ValueError(f"include_layers must be a non-empty subset of 0..{len(blocks) - 1}")
            object.__setattr__(self, "include_layers", layers)

    @property
    def layers(self) -> tuple[int, ...]:
        return self.include_layers if self.include_layers is not None else tuple(range(len(self.blocks)))

    @property
    def feature_dim(self) -> int:
        return sum(self.blocks[k].out_channels for k in self.layers)

    def to_dict(self) -> dict:
        return {
            "blocks": [vars(b).copy() for b in self.blocks],
            "in_channels": self.in_channels,
            "seed": self.seed,
            "include_layers": None if self.include_layers is None else list(self.include_layers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        d = dict(d)
        if "blocks" in d:
            d["blocks"] = tuple(Block(**b) for b in d["blocks"])
        if d.get("include_layers") is not None:
            d["include_layers"] = tuple(d["include_layers"])
        return cls(**d)


@dataclass(frozen=True)
class FeatureStack:
    matrix: np.ndarray  # [N, d_stack]
    provenance: str

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.isfinite(self.matrix).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class Encoder:
    spec: EncoderSpec
    # per block, [out, in * kernel] so a conv is one matmul over unfolded windows
    weights: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim


def build_random_encoder(spec: EncoderSpec) -> Encoder:
    rng = np.random.default_rng(spec.seed)
    weights = []
    c_in = spec.in_channels
    for b in spec.blocks:
        fan_in = c_in * b.kernel_size
        w = (rng.standard_normal((b.out_channels, fan_in)) / np.sqrt(fan_in)).astype(np.float32)
        w.flags.writeable = False
        weights.append(w)
        c_in = b.out_channels
    return Encoder(spec, tuple(weights))


def normalize(x: np.ndarray, mode: str) -> np.ndarray:
    """Per-sample standardization over all values (``sample``) or per channel (``channel``)."""
    if mode == "none":
        return x
    if mode not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    axes = (1, 2) if mode == "sample" else (2,)
    mean = x.mean(axis=axes, keepdims=True)
    std = x.std(axis=axes, keepdims=True)
    return (x - mean) / np.where(std > 0, std, 1.0)


def _conv_same(x: np.ndarray, w: np.ndarray, kernel: int) -> np.ndarray:
    # x [N, C, L] -> [N, out, L]
    pad = kernel // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, kernel, axis=2)  # [N, C, L, k]
    n, c, length, _ = win.shape
    cols = win.transpose(0, 2, 1, 3).reshape(n, length, c * kernel)
    return (cols @ w.T).transpose(0, 2, 1)


def _max_pool(x: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return x
    n, c, length = x.shape
    out = length // p
    return x[:, :, : out * p].reshape(n, c, out, p).max(axis=3)


def _encode_batch(encoder: Encoder, x: np.ndarray) -> np.ndarray:
    spec = encoder.spec
    last = max(spec.layers)
    parts = []
    h = x
    for k, (b, w) in enumerate(zip(spec.blocks, encoder.weights)):
        if k > last:
            break
        h = np.maximum(_conv_same(h, w, b.kernel_size), 0)
        if h.shape[2] // b.pool == 0:
            raise ValueError(f"series too short: block {k} pools length {h.shape[2]} by {b.pool}")
        h = _max_pool(h, b.pool)
        if k in spec.layers:
            parts.append(h.mean(axis=2))
    return np.concatenate(parts, axis=1)


def encode(
    encoder: Encoder,
    data: TimeSeriesDataset | np.ndarray,
    normalization: str = "none",
    batch_size: int = 256,
) -> FeatureStack:
    """Pooled features of every included block, concatenated in block order."""
    x = data.samples if isinstance(data, TimeSeriesDataset) else np.asarray(data)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected [N, C, L] input, got shape {x.shape}")
    if x.shape[1] != encoder.spec.in_channels:
        raise ValueError(
            f"channel mismatch: encoder expects {encoder.spec.in_channels}, batch has {x.shape[1]}"
        )
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    x = normalize(x.astype(np.float32), normalization).astype(np.float32)
    out = np.empty((x.shape[0], encoder.feature_dim), dtype=np.float32)
    for s in range(0, x.shape[0], batch_size):
        out[s : s + batch_size] = _encode_batch(encoder, x[s : s + batch_size])
    return FeatureStack(out, f"random-encoder({encoder.spec.seed})")


def load_precomputed_features(root, split: str) -> FeatureStack:
    root = Path(root)
    manifest = _read_manifest(root)
    dim = int(_require(manifest, "feature_dim"))
    n = int(_require(manifest, f"{split}_n"))
    fname = f"{split}_feat.bin"
    matrix = _read_exact(root / fname, "<f4", n * dim, fname).reshape(n, dim)
    if not np.isfinite(matrix).all():
        raise DatasetFormatError(fname, "non-finite feature value")
    return FeatureStack(matrix, "precomputed")


def write_precomputed_features(root, split: str, features: FeatureStack | np.ndarray) -> None:
    """Write ``<split>_feat.bin``; the manifest must already exist (``feature_dim`` is added)."""
    root = Path(root)
    matrix = features.matrix if isinstance(features, FeatureStack) else np.asarray(features)
    manifest = _read_manifest(root)
    if manifest.get(f"{split}_n") != matrix.shape[0]:
        raise DatasetFormatError(f"{split}_n", "row count disagrees with manifest")
    if manifest.get("feature_dim", matrix.shape[1]) != matrix.shape[1]:
        raise DatasetFormatError("feature_dim", "column count disagrees with manifest")
    manifest["feature_dim"] = int(matrix.shape[1])
    write_manifest(root, manifest)
    matrix.astype("<f4").tofile(root / f"{split}_feat.bin")
