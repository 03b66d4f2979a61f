"""Random Fourier features for the Gaussian kernel.

A :class:`FeatureSet` holds M sampled pairs (w_i, b_i). The learned model is

    h_hat(z) = (1/M) * sum_i cos(w_i . z + b_i) * alpha_i

with one coefficient row per output dimension, all rows sharing the same
features.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "KernelSpec",
    "FeatureSet",
    "ParamEstimate",
    "sample_features",
    "evaluate_features",
    "predict",
    "feature_jacobian",
    "kernel_value",
]

DEFAULT_RADIUS = 10.0


@dataclass(frozen=True)
class KernelSpec:
    input_dim: int
    bandwidth_sigma: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel kind {self.kind!r}")
        if not self.bandwidth_sigma > 0:
            raise ValueError("bandwidth_sigma must be positive")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    frequencies: np.ndarray  # (M, d_z)
    phases: np.ndarray  # (M,)
    kernel: KernelSpec
    seed: int

    def __post_init__(self):
        for arr in (self.frequencies, self.phases):
            arr.setflags(write=False)

    @property
    def count(self):
        return self.phases.shape[0]

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.kernel.input_dim:
            raise ValueError(
                f"feature input has dim {z.shape[-1]}, expected {self.kernel.input_dim}"
            )
        return z


@dataclass(frozen=True, eq=False)
class ParamEstimate:
    """Coefficient blocks, one row per output dimension, one column per feature."""

    blocks: np.ndarray  # (d_h, M)
    radius_bh: float = DEFAULT_RADIUS

    @property
    def output_dim(self):
        return self.blocks.shape[0]

    @classmethod
    def zeros(cls, output_dim, count, radius_bh=DEFAULT_RADIUS):
        return cls(np.zeros((output_dim, count)), float(radius_bh))

    def max_abs(self):
        return float(np.max(np.abs(self.blocks))) if self.blocks.size else 0.0


def sample_features(kernel, count, seed):
    """Draw ``count`` features for ``kernel`` from a seeded generator.

    Frequencies are i.i.d. N(0, I / sigma^2) and phases uniform on [0, 2pi).
    """
    if count < 1:
        raise ValueError("feature count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    W = rng.standard_normal((count, kernel.input_dim)) / kernel.bandwidth_sigma
    b = rng.uniform(0.0, 2.0 * np.pi, size=count)
    # uniform() is half-open in theory; guard the rounding edge
    b[b >= 2.0 * np.pi] = 0.0
    return FeatureSet(np.ascontiguousarray(W), np.ascontiguousarray(b), kernel, int(seed))


def evaluate_features(fs, z):
    """Feature vector cos(W z + b); ``z`` may also be a (n, d_z) batch."""
    z = fs._check(z)
    if z.ndim == 1:
        return kernels.rff_eval(fs.frequencies, fs.phases, z[None, :])[0]
    return kernels.rff_eval(fs.frequencies, fs.phases, z)


def predict(fs, params, z):
    if params.blocks.shape[1] != fs.count:
        raise ValueError(
            f"params have {params.blocks.shape[1]} columns, feature set has {fs.count}"
        )
    phi = evaluate_features(fs, z)
    return phi @ params.blocks.T / fs.count


def feature_jacobian(fs, z):
    """d phi / d z, shape (M, d_z): row i is -sin(w_i . z + b_i) w_i."""
    z = fs._check(z)
    if z.ndim != 1:
        raise ValueError("feature_jacobian takes a single input vector")
    _, dphi = kernels.rff_eval_grad(fs.frequencies, fs.phases, z[None, :])
    return dphi[0][:, None] * fs.frequencies


def kernel_value(kernel, z1, z2):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape or z1.shape[-1] != kernel.input_dim:
        raise ValueError("kernel inputs must both have dim input_dim")
    d2 = np.sum((z1 - z2) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * kernel.bandwidth_sigma**2))
