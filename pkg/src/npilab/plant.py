"""Scalar plants with sector-bounded nonlinearities and first-order actuator lag.

The nonlinearity always has the sector form f(y) = alpha(y) * y with the
pointwise slope alpha(y) confined to a declared interval [alpha1, alpha2].
Two analytic families are built in (a linear slope and the oscillatory
a*(1 + b_amp*sin(exp(y)))*y form), plus tabulated data.

Two loop topologies exist: the nominal one, where the commanded input acts
directly (dy = f(y) + b*u_nom), and the actuator-perturbed one, where the
applied input lags the command through a first-order stage with time
constant epsilon (eps * du = u_nom - u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DomainError, InvalidSectorError, NonFiniteInputError

_EXP_ARG_MAX = math.log(1.7976931348623157e308)

# |y| below this uses the analytic alpha(0) instead of the ratio f(y)/y
RATIO_GUARD = 1e-9


def _sin_of_exp(y: float) -> float:
    """sin(exp(y)), valid for any finite y.

    Past the double overflow knee the argument is reduced in arbitrary
    precision; the result is still a plain bounded float, so the sector
    property |f(y)| <= a*(1+b_amp)*|y| survives arbitrarily large states.
    """
    if y <= _EXP_ARG_MAX:
        return math.sin(math.exp(y))
    import mpmath

    dps = int(y / math.log(10.0)) + 25
    with mpmath.workdps(dps):
        return float(mpmath.sin(mpmath.exp(y)))


class SectorFamily(Enum):
    LINEAR = "linear"
    SIN_EXP = "sinexp"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class SectorFn:
    """Sector nonlinearity f(y) = alpha(y)*y with declared slope bounds."""

    family: SectorFamily
    declared_alpha1: float
    declared_alpha2: float
    alpha: float = 0.0
    a: float = 0.0
    b_amp: float = 0.0
    table_y: tuple[float, ...] = ()
    table_f: tuple[float, ...] = ()
    alpha_at_zero: float | None = None

    def __post_init__(self):
        if self.declared_alpha1 > self.declared_alpha2:
            raise InvalidSectorError(
                f"declared bounds out of order: {self.declared_alpha1} > {self.declared_alpha2}"
            )
        if self.family is SectorFamily.TABULATED:
            if len(self.table_y) != len(self.table_f) or len(self.table_y) < 2:
                raise InvalidSectorError("tabulated sector needs >= 2 matching samples")
            if any(b <= a for a, b in zip(self.table_y, self.table_y[1:])):
                raise InvalidSectorError("tabulated sector abscissae must be strictly increasing")
            for yv, fv in zip(self.table_y, self.table_f):
                if abs(yv) < RATIO_GUARD and fv != 0.0:
                    raise InvalidSectorError(
                        f"sector form forces f(0) = 0, but sample ({yv}, {fv}) violates it"
                    )

    @classmethod
    def linear(cls, alpha: float, bounds: tuple[float, float] | None = None) -> "SectorFn":
        lo, hi = bounds if bounds is not None else (alpha, alpha)
        return cls(SectorFamily.LINEAR, lo, hi, alpha=float(alpha))

    @classmethod
    def sin_exp(
        cls, a: float, b_amp: float, bounds: tuple[float, float] | None = None
    ) -> "SectorFn":
        # natural slope range of a*(1 + b_amp*sin(.)) is [a*(1-b_amp), a*(1+b_amp)]
        lo, hi = bounds if bounds is not None else (a * (1 - b_amp), a * (1 + b_amp))
        return cls(SectorFamily.SIN_EXP, lo, hi, a=float(a), b_amp=float(b_amp))

    @classmethod
    def tabulated(
        cls,
        y: Sequence[float],
        f: Sequence[float],
        bounds: tuple[float, float],
        alpha_at_zero: float | None = None,
    ) -> "SectorFn":
        return cls(
            SectorFamily.TABULATED,
            bounds[0],
            bounds[1],
            table_y=tuple(float(v) for v in y),
            table_f=tuple(float(v) for v in f),
            alpha_at_zero=alpha_at_zero,
        )


def eval_f(sector: SectorFn, y: float) -> float:
    """Evaluate the sector nonlinearity at a finite y."""
    if not math.isfinite(y):
        raise NonFiniteInputError(f"sector argument must be finite, got {y!r}")
    if sector.family is SectorFamily.LINEAR:
        return sector.alpha * y
    if sector.family is SectorFamily.SIN_EXP:
        return sector.a * (1.0 + sector.b_amp * _sin_of_exp(y)) * y
    if y < sector.table_y[0] or y > sector.table_y[-1]:
        raise DomainError(
            f"tabulated sector covers [{sector.table_y[0]}, {sector.table_y[-1]}], got y={y}"
        )
    return float(np.interp(y, sector.table_y, sector.table_f))


def alpha_of(sector: SectorFn, y: float) -> float:
    """Pointwise slope alpha(y) = f(y)/y, with the analytic limit near y = 0."""
    if abs(y) < RATIO_GUARD:
        if sector.family is SectorFamily.LINEAR:
            return sector.alpha
        if sector.family is SectorFamily.SIN_EXP:
            return sector.a * (1.0 + sector.b_amp * math.sin(1.0))
        if sector.alpha_at_zero is None:
            raise InvalidSectorError(
                "tabulated sector needs an explicit alpha_at_zero to evaluate the slope at 0"
            )
        return sector.alpha_at_zero
    return eval_f(sector, y) / y


@dataclass(frozen=True)
class SectorViolation:
    y: float
    alpha: float
    bound: float
    side: str  # "low" or "high"


@dataclass(frozen=True)
class SectorCheck:
    ok: bool
    violations: tuple[SectorViolation, ...]


def verify_sector_bounds(
    sector: SectorFn, y_min: float, y_max: float, n: int, tol: float = 1e-12
) -> SectorCheck:
    """Sample alpha(y) on [y_min, y_max] and compare with the declared bounds."""
    if not y_min < y_max:
        raise ValueError(f"need y_min < y_max, got [{y_min}, {y_max}]")
    if n < 2:
        raise ValueError(f"need n >= 2 grid points, got {n}")
    lo, hi = sector.declared_alpha1, sector.declared_alpha2
    violations = []
    for y in np.linspace(y_min, y_max, int(n)):
        a = alpha_of(sector, float(y))
        if a < lo - tol:
            violations.append(SectorViolation(float(y), a, lo, "low"))
        elif a > hi + tol:
            violations.append(SectorViolation(float(y), a, hi, "high"))
    return SectorCheck(ok=not violations, violations=tuple(violations))


class Topology(Enum):
    NOMINAL = "nominal"
    ACTUATOR_PERTURBED = "actuator"


@dataclass(frozen=True)
class PlantSpec:
    """Scalar plant: sector nonlinearity, input gain, actuator time constant."""

    sector: SectorFn
    b: float
    epsilon: float
    topology: Topology = Topology.ACTUATOR_PERTURBED

    def __post_init__(self):
        if self.b == 0:
            raise ValueError("input gain b must be nonzero for controllability")
        if not self.epsilon > 0:
            raise ValueError(f"actuator time constant must be positive, got {self.epsilon}")


def plant_rhs(
    plant: PlantSpec, y: float, u: float, u_nom: float
) -> tuple[float, float | None]:
    """Right-hand side of the plant dynamics.

    Actuator-perturbed topology: dy = f(y) + b*u, du = (u_nom - u)/epsilon.
    Nominal topology: dy = f(y) + b*u_nom; du is absent (returned as None).
    """
    if not (math.isfinite(y) and math.isfinite(u) and math.isfinite(u_nom)):
        raise NonFiniteInputError(
            f"plant_rhs needs finite inputs, got y={y!r}, u={u!r}, u_nom={u_nom!r}"
        )
    if plant.topology is Topology.NOMINAL:
        return eval_f(plant.sector, y) + plant.b * u_nom, None
    return (
        eval_f(plant.sector, y) + plant.b * u,
        (u_nom - u) / plant.epsilon,
    )
