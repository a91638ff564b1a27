"""Arithmetic-operation and state-memory tallies for tracker comparisons."""

from __future__ import annotations

from dataclasses import dataclass

# bytes per stored scalar; the hardware keeps every field in a 32-bit register
WORD = 4


@dataclass
class OpCounter:
    adds: int = 0
    muls: int = 0
    cmps: int = 0

    def tally(self, adds: int = 0, muls: int = 0, cmps: int = 0) -> None:
        self.adds += adds
        self.muls += muls
        self.cmps += cmps

    @property
    def total(self) -> int:
        return self.adds + self.muls + self.cmps


class NullCounter(OpCounter):
    def tally(self, adds: int = 0, muls: int = 0, cmps: int = 0) -> None:
        pass
