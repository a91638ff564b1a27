"""Fixed-point (Qm.n) emulation of the tracker's hardware arithmetic."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class FixedFormat:
    integer_bits: int
    fraction_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.integer_bits < 0 or self.fraction_bits < 0:
            raise ValueError("bit counts must be non-negative")
        if self.integer_bits + self.fraction_bits > 32:
            raise ValueError(f"Q{self.integer_bits}.{self.fraction_bits} exceeds 32 bits")
        if self.signed and self.integer_bits < 1:
            raise ValueError("signed format needs a sign bit")

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.fraction_bits

    @property
    def min_value(self) -> float:
        return -(2.0 ** (self.integer_bits - 1)) if self.signed else 0.0

    @property
    def max_value(self) -> float:
        top = 2.0 ** (self.integer_bits - 1) if self.signed else 2.0 ** self.integer_bits
        return top - self.lsb


def _round_away(v: float) -> float:
    return math.copysign(math.floor(abs(v) + 0.5), v)


def quantize(value: float, fmt: FixedFormat) -> float:
    """Round to the nearest step (ties away from zero), then saturate."""
    scale = 2.0 ** fmt.fraction_bits
    q = _round_away(value * scale) / scale
    return min(max(q, fmt.min_value), fmt.max_value) + 0.0


@dataclass(frozen=True)
class FixedConfig:
    enabled: bool = False
    pos_bits: int = 9
    pos_frac_bits: int = 0
    vel_int_bits: int = 8
    vel_frac_bits: int = 4

    @property
    def pos_format(self) -> FixedFormat:
        return FixedFormat(self.pos_bits, self.pos_frac_bits, signed=False)

    @property
    def vel_format(self) -> FixedFormat:
        return FixedFormat(self.vel_int_bits, self.vel_frac_bits, signed=True)

    def with_fraction_bits(self, n: int) -> "FixedConfig":
        """Widen both fractional parts to ``n`` bits, capped by the 32-bit word."""
        return dataclasses.replace(
            self,
            pos_frac_bits=min(n, 32 - self.pos_bits),
            vel_frac_bits=min(n, 32 - self.vel_int_bits),
        )


class Arithmetic:
    """Float-mode arithmetic: every rounding hook is the identity."""

    fixed = False

    def pos(self, v: float) -> float:
        return v

    def vel(self, v: float) -> float:
        return v


class FixedArithmetic(Arithmetic):
    fixed = True

    def __init__(self, cfg: FixedConfig):
        self._pos = cfg.pos_format
        self._vel = cfg.vel_format

    def pos(self, v: float) -> float:
        return quantize(v, self._pos)

    def vel(self, v: float) -> float:
        return quantize(v, self._vel)


def arithmetic_for(cfg: FixedConfig | None) -> Arithmetic:
    if cfg is not None and cfg.enabled:
        return FixedArithmetic(cfg)
    return Arithmetic()


def snap_alpha(alpha: float) -> float:
    return min(ALPHA_GRID, key=lambda a: (abs(a - alpha), a))


def fixed_mode(tracker_config, fx: FixedConfig | None = None):
    """Return a copy of ``tracker_config`` that runs through fixed-point arithmetic.

    The weighting coefficient is snapped to the nearest of 0, 1/4, 1/2, 3/4, 1,
    which the hardware can apply with shifts and one add.
    """
    fx = dataclasses.replace(fx or tracker_config.fx, enabled=True)
    return dataclasses.replace(tracker_config, fx=fx, alpha=snap_alpha(tracker_config.alpha))
