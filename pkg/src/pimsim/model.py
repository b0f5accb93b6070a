"""Decoder-stack model description used by layout, cost, and runtime code.

Only the linear (weight-streaming) layers are described: the seven
projection matrices of each decoder layer plus the output head.  The
embedding table shares storage with the output head (tied weights) and is
not counted separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError


@dataclass(frozen=True)
class MatrixShape:
    """One weight matrix: ``out_dim`` output rows by ``in_dim`` input columns."""

    name: str
    out_dim: int
    in_dim: int

    def params(self) -> int:
        return self.out_dim * self.in_dim


@dataclass(frozen=True)
class ModelSpec:
    hidden: int
    intermediate: int
    layers: int
    kv_ratio: Fraction = Fraction(1, 4)
    vocab: int = 0
    element_bytes: int = 2

    def __post_init__(self):
        if self.hidden < 1 or self.intermediate < 1 or self.layers < 0:
            raise ConfigError("model dimensions must be positive")
        kv = Fraction(self.kv_ratio)
        object.__setattr__(self, "kv_ratio", kv)
        if (self.hidden * kv).denominator != 1:
            raise ConfigError("hidden * kv_ratio must be an integer")

    @property
    def kv_dim(self) -> int:
        return int(self.hidden * self.kv_ratio)

    def layer_matrices(self) -> list[MatrixShape]:
        """Projection matrices of one decoder layer, in execution order."""
        h, i = self.hidden, self.intermediate
        return [
            MatrixShape("q", h, h),
            MatrixShape("k", self.kv_dim, h),
            MatrixShape("v", self.kv_dim, h),
            MatrixShape("o", h, h),
            MatrixShape("ff0", i, h),
            MatrixShape("ff1", i, h),
            MatrixShape("ff2", h, i),
        ]

    def head_matrix(self) -> MatrixShape | None:
        if self.vocab <= 0:
            return None
        return MatrixShape("lm_head", self.vocab, self.hidden)

    def all_matrices(self) -> list[MatrixShape]:
        """Every distinct weight matrix, layer-by-layer plus the head."""
        mats = []
        for layer in range(self.layers):
            for m in self.layer_matrices():
                mats.append(MatrixShape(f"layer{layer}.{m.name}", m.out_dim, m.in_dim))
        head = self.head_matrix()
        if head is not None:
            mats.append(head)
        return mats

    def layer_params(self) -> int:
        return sum(m.params() for m in self.layer_matrices())

    def total_params(self) -> int:
        head = self.head_matrix()
        return self.layers * self.layer_params() + (head.params() if head else 0)

    def host_bytes(self) -> int:
        """Host-friendly (unpadded) weight footprint in bytes."""
        return self.total_params() * self.element_bytes

    @property
    def ff_bytes(self) -> int:
        """Bytes of one feed-forward matrix, the largest layer weight."""
        return self.hidden * self.intermediate * self.element_bytes
