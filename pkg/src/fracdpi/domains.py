from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DomainSpec:
    """Unit ball centred at the origin, or an axis-aligned open box."""

    kind: str
    d: int
    lo: np.ndarray = field(default=None, compare=False)
    hi: np.ndarray = field(default=None, compare=False)

    @classmethod
    def unit_ball(cls, d: int) -> "DomainSpec":
        if d < 1:
            raise ValueError("dimension must be >= 1")
        return cls("ball", int(d))

    @classmethod
    def box(cls, lo, hi) -> "DomainSpec":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1 or not np.all(lo < hi):
            raise ValueError("box needs matching 1-D corners with lo < hi")
        return cls("box", lo.size, lo, hi)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Open-set membership for an (n, d) array."""
        x = np.atleast_2d(x)
        if self.kind == "ball":
            return np.einsum("ij,ij->i", x, x) < 1.0
        return np.all((x > self.lo) & (x < self.hi), axis=1)

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "d": self.d}
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}
