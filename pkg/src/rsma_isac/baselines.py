"""Comparison schemes run through the same WMMSE-PDD machinery.

* ``RsmaHybrid``: the full design (common + private streams, hybrid precoder);
* ``SdmaHybrid``: private streams only; the common column and the common
  rates are pinned to zero and the common-rate blocks are skipped;
* ``RsmaFullyDigital``: ``F_RF`` fixed to the ``N_t x N_t`` identity, no
  unit-modulus constraint.  An upper reference for the hybrid design.
"""
from __future__ import annotations

import enum

from .scene import RadarScene, SystemConfig
from .solver import SolveResult, SolverOptions, solve

__all__ = ["SchemeKind", "solve_rsma", "solve_sdma", "solve_fully_digital", "solve_scheme"]


class SchemeKind(str, enum.Enum):
    RSMA_HYBRID = "RsmaHybrid"
    SDMA_HYBRID = "SdmaHybrid"
    RSMA_FULLY_DIGITAL = "RsmaFullyDigital"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).strip().lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValueError(f"unknown scheme {value!r}; expected one of {[m.value for m in cls]}")


def solve_rsma(channels, scene: RadarScene, cfg: SystemConfig, opts: SolverOptions | None = None,
               seed: int = 0) -> SolveResult:
    """RSMA with the hybrid precoder of ``cfg``."""
    return solve(channels, scene, cfg, opts, seed=seed, common=True, fully_digital=False)


def solve_sdma(channels, scene: RadarScene, cfg: SystemConfig, opts: SolverOptions | None = None,
               seed: int = 0) -> SolveResult:
    """SDMA: every stream private, interference treated as noise.

    The returned solution still has ``K+1`` digital columns; column 0 and the
    common rates are exactly zero, so the WSR reduces to the private rates.
    """
    return solve(channels, scene, cfg, opts, seed=seed, common=False, fully_digital=False)


def solve_fully_digital(channels, scene: RadarScene, cfg: SystemConfig,
                        opts: SolverOptions | None = None, seed: int = 0) -> SolveResult:
    """RSMA with ``F_RF = I`` (``N_RF = N_t``) and the analog update skipped."""
    return solve(channels, scene, cfg, opts, seed=seed, common=True, fully_digital=True)


_DISPATCH = {
    SchemeKind.RSMA_HYBRID: solve_rsma,
    SchemeKind.SDMA_HYBRID: solve_sdma,
    SchemeKind.RSMA_FULLY_DIGITAL: solve_fully_digital,
}


def solve_scheme(kind, channels, scene: RadarScene, cfg: SystemConfig,
                 opts: SolverOptions | None = None, seed: int = 0) -> SolveResult:
    """Dispatch to the solve path of ``kind`` (a :class:`SchemeKind` or its name)."""
    return _DISPATCH[SchemeKind.parse(kind)](channels, scene, cfg, opts, seed=seed)
