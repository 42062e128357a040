"""Random hidden layer: fixed Gaussian projection followed by ReLU."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import FeatureStack


@dataclass(frozen=True, eq=False)
class RhlProjection:
    d_stack: int
    d_e: int
    seed: int
    scale: float
    matrix: np.ndarray = field(repr=False)  # [d_stack, d_e] float64

    def params(self) -> dict:
        """The tuple that regenerates the matrix; checkpoints store this instead of the weights."""
        return {"d_stack": self.d_stack, "d_e": self.d_e, "seed": self.seed, "scale": self.scale}


def init_rhl(d_stack: int, d_e: int, seed: int, scale: float | None = None) -> RhlProjection:
    """Draw a ``d_stack x d_e`` projection with i.i.d. N(0, scale^2) entries.

    ``scale`` defaults to ``1/sqrt(d_stack)``, which gives unit-variance
    pre-activations for standardized inputs.
    """
    if d_stack < 1 or d_e < 1:
        raise ValueError("d_stack and d_e must be >= 1")
    if scale is None:
        scale = 1.0 / np.sqrt(d_stack)
    scale = float(scale)
    if not scale > 0:
        raise ValueError("scale must be positive")
    matrix = np.random.default_rng(seed).standard_normal((d_stack, d_e)) * scale
    matrix.flags.writeable = False
    return RhlProjection(int(d_stack), int(d_e), int(seed), scale, matrix)


def standardize_rows(u: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance per row; constant rows map to zero."""
    mean = u.mean(axis=1, keepdims=True)
    std = u.std(axis=1, keepdims=True)
    return (u - mean) / np.where(std > 0, std, 1.0)


def expand(features: FeatureStack | np.ndarray, rhl: RhlProjection, standardize: bool = False) -> np.ndarray:
    u = features.matrix if isinstance(features, FeatureStack) else np.asarray(features)
    if u.ndim != 2 or u.shape[1] != rhl.d_stack:
        raise ValueError(f"feature width {u.shape[-1]} does not match projection rows {rhl.d_stack}")
    u = u.astype(np.float64)
    if standardize:
        u = standardize_rows(u)
    return np.maximum(u @ rhl.matrix, 0.0)
