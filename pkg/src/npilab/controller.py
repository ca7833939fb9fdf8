"""Output-feedback controllers with a proportional-plus-integral gain argument.

Both controllers integrate the same scalar state q with dq = lam*y**2 and
differ only in the output map:

* nonlinear PI (NPI): z = y**2/2 + q, command u_nom = kappa(z)*y, where
  kappa comes from a ``GainSpec``;
* adaptive gain (NG): command u_nom = q**2*cos(q)*y, i.e. the classical
  sign-seeking law with the fixed quadratic-cosine gain, where q plays the
  role of the adapted variable (initial value q0).

The decomposition of z into the algebraic part y**2/2 plus the integrated
part q keeps the integrator state at (y, u, q) and makes the identity
dz = b*y*u + (alpha(y) + lam)*y**2 checkable rather than baked in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .errors import NonFiniteInputError
from .gains import GainSpec, eval_kappa
from .plant import PlantSpec, Topology, alpha_of, eval_f


class ControllerKind(Enum):
    NPI = "npi"
    NG = "ng"


@dataclass(frozen=True)
class ControllerSpec:
    kind: ControllerKind
    lam: float
    gain: GainSpec | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"integral rate lam must be positive, got {self.lam}")
        if self.kind is ControllerKind.NPI and self.gain is None:
            raise ValueError("NPI controller needs a GainSpec")

    @classmethod
    def npi(cls, lam: float, gain: GainSpec) -> "ControllerSpec":
        return cls(ControllerKind.NPI, float(lam), gain)

    @classmethod
    def ng(cls, lam: float) -> "ControllerSpec":
        return cls(ControllerKind.NG, float(lam))


@dataclass(frozen=True)
class ControllerState:
    """Integrated controller state; q is nondecreasing along trajectories."""

    q: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q >= 0):
            raise ValueError(f"controller state q must be finite and >= 0, got {self.q}")


StateLike = Union[ControllerState, float]


def _q_of(state: StateLike) -> float:
    return state.q if isinstance(state, ControllerState) else float(state)


def controller_output(spec: ControllerSpec, state: StateLike, y: float) -> tuple[float, float]:
    """Commanded input and reported gain argument for the current (state, y).

    NPI returns (kappa(z)*y, z) with z = y**2/2 + q; NG returns
    (q**2*cos(q)*y, q).
    """
    if not math.isfinite(y):
        raise NonFiniteInputError(f"controller output needs finite y, got {y!r}")
    q = _q_of(state)
    if spec.kind is ControllerKind.NPI:
        z = 0.5 * y * y + q
        return eval_kappa(spec.gain, z) * y, z
    return q * q * math.cos(q) * y, q


def controller_rhs(spec: ControllerSpec, y: float) -> float:
    """dq = lam * y**2, identical for both controller kinds."""
    return spec.lam * y * y


def z_dot_identity_check(plant: PlantSpec, spec: ControllerSpec, y: float, u: float) -> float:
    """Residual of the gain-argument rate identity for the NPI loop.

    Compares y*dy + lam*y**2 (the chain-rule rate of z) against
    b*y*u + (alpha(y) + lam)*y**2; the two are algebraically equal, so the
    residual is pure floating-point noise.
    """
    if spec.kind is not ControllerKind.NPI:
        raise ValueError("identity check applies to the NPI controller")
    if plant.topology is not Topology.ACTUATOR_PERTURBED:
        raise ValueError("identity check applies to the actuator-perturbed topology")
    ydot = eval_f(plant.sector, y) + plant.b * u
    lhs = y * ydot + spec.lam * y * y
    rhs = plant.b * y * u + (alpha_of(plant.sector, y) + spec.lam) * y * y
    return abs(lhs - rhs)
