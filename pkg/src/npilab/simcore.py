"""Closed-loop integration, trajectory recording, and terminal classification.

The integrator advances the joint plant-controller state:

* actuator-perturbed topology: (y, u, q);
* nominal topology: (y, q), with the applied input equal to the command.

The reference method is fixed-step classical RK4; an embedded 4(5)
adaptive pair is available for cross-checks and for loops whose gain slope
creates fast local modes that a fixed step cannot resolve.  Runs stop
early when |y| crosses the divergence threshold (verdict data stays
finite) or when any evaluation leaves double range (Overflow), so CSV
output is never poisoned by infinities.

Everything here is deterministic: no randomness, fixed evaluation order,
pure functions of the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from .controller import ControllerKind, ControllerSpec, controller_output, controller_rhs
from .errors import ConfigError, DomainError, GainOverflowError, NonFiniteInputError, NpilabError
from .gains import EXP_ARG_MAX, BetaFamily, GainKind, eval_kappa
from .plant import PlantSpec, SectorFamily, Topology, _sin_of_exp, eval_f


class StageOverflowError(NpilabError, OverflowError):
    """A Runge-Kutta stage produced a non-finite value."""


@dataclass(frozen=True)
class RK4Method:
    """Classical fixed-step fourth-order method (the reference integrator)."""


@dataclass(frozen=True)
class RKF45Method:
    """Embedded 4(5) pair with proportional step control."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    dt_min: float = 1e-10
    dt_max: float = 1e-2

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.dt_min < self.dt_max):
            raise ValueError(f"need 0 < dt_min < dt_max, got [{self.dt_min}, {self.dt_max}]")


Method = Union[RK4Method, RKF45Method]


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 30.0
    method: Method = field(default_factory=RK4Method)
    divergence_threshold: float = 1e3
    sample_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not self.divergence_threshold > 0:
            raise ConfigError(
                f"divergence threshold must be positive, got {self.divergence_threshold}"
            )
        if self.sample_stride < 1:
            raise ConfigError(f"sample_stride must be >= 1, got {self.sample_stride}")


class TerminationKind(Enum):
    COMPLETED = "Completed"
    DIVERGED = "Diverged"
    OVERFLOW = "Overflow"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    t: float | None = None
    detail: str = ""


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled closed-loop run: columns t, y, u, u_nom, z plus the outcome."""

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    u_nom: np.ndarray
    z: np.ndarray
    termination: Termination
    config: SimConfig

    @property
    def n_samples(self) -> int:
        return len(self.t)


class VerdictClass(Enum):
    CONVERGED = "Converged"
    BOUNDED_NON_CONVERGED = "BoundedNonConverged"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class Verdict:
    klass: VerdictClass
    tail_max_abs_y: float
    final_abs: tuple[float, float, float]  # (|y|, |u|, |u_nom|) at the last sample


# --------------------------------------------------------------------------
# Generic Runge-Kutta steps over small state tuples
# --------------------------------------------------------------------------

StateTuple = tuple
Rhs = Callable[[StateTuple], StateTuple]


def _check_finite(values: Sequence[float]) -> None:
    for v in values:
        if not math.isfinite(v):
            raise StageOverflowError("non-finite Runge-Kutta stage")


def step_rk4(rhs: Rhs, state: StateTuple, dt: float) -> StateTuple:
    """One classical RK4 step; aborts with StageOverflowError on non-finite stages."""
    k1 = rhs(state)
    _check_finite(k1)
    s2 = tuple(x + 0.5 * dt * k for x, k in zip(state, k1))
    k2 = rhs(s2)
    _check_finite(k2)
    s3 = tuple(x + 0.5 * dt * k for x, k in zip(state, k2))
    k3 = rhs(s3)
    _check_finite(k3)
    s4 = tuple(x + dt * k for x, k in zip(state, k3))
    k4 = rhs(s4)
    _check_finite(k4)
    new = tuple(
        x + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for x, a, b, c, d in zip(state, k1, k2, k3, k4)
    )
    _check_finite(new)
    return new


# Fehlberg 4(5) tableau
_B21 = 1 / 4
_B31, _B32 = 3 / 32, 9 / 32
_B41, _B42, _B43 = 1932 / 2197, -7200 / 2197, 7296 / 2197
_B51, _B52, _B53, _B54 = 439 / 216, -8.0, 3680 / 513, -845 / 4104
_B61, _B62, _B63, _B64, _B65 = -8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40
_C4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_C5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
# scalar aliases for the unrolled 3-state driver (k2 and, for the 4th order
# solution, k6 carry zero weight)
_C40, _C42, _C43, _C44 = _C4[0], _C4[2], _C4[3], _C4[4]
_C50, _C52, _C53, _C54, _C55 = _C5[0], _C5[2], _C5[3], _C5[4], _C5[5]


def _rkf45_step(rhs: Rhs, state: StateTuple, dt: float) -> tuple[StateTuple, StateTuple]:
    """One embedded Fehlberg step; returns the 4th and 5th order solutions."""
    k1 = rhs(state)
    _check_finite(k1)
    k2 = rhs(tuple(x + dt * _B21 * a for x, a in zip(state, k1)))
    _check_finite(k2)
    k3 = rhs(tuple(x + dt * (_B31 * a + _B32 * b) for x, a, b in zip(state, k1, k2)))
    _check_finite(k3)
    k4 = rhs(
        tuple(
            x + dt * (_B41 * a + _B42 * b + _B43 * c)
            for x, a, b, c in zip(state, k1, k2, k3)
        )
    )
    _check_finite(k4)
    k5 = rhs(
        tuple(
            x + dt * (_B51 * a + _B52 * b + _B53 * c + _B54 * d)
            for x, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
    )
    _check_finite(k5)
    k6 = rhs(
        tuple(
            x + dt * (_B61 * a + _B62 * b + _B63 * c + _B64 * d + _B65 * e)
            for x, a, b, c, d, e in zip(state, k1, k2, k3, k4, k5)
        )
    )
    _check_finite(k6)
    stages = (k1, k2, k3, k4, k5, k6)
    x4 = tuple(
        x + dt * sum(c * k[i] for c, k in zip(_C4, stages))
        for i, x in enumerate(state)
    )
    x5 = tuple(
        x + dt * sum(c * k[i] for c, k in zip(_C5, stages))
        for i, x in enumerate(state)
    )
    _check_finite(x4)
    _check_finite(x5)
    return x4, x5


# --------------------------------------------------------------------------
# Fused closed-loop right-hand sides
# --------------------------------------------------------------------------


def _sector_fn(plant: PlantSpec) -> Callable[[float], float]:
    sector = plant.sector
    if sector.family is SectorFamily.LINEAR:
        alpha = sector.alpha
        return lambda y: alpha * y
    if sector.family is SectorFamily.SIN_EXP:
        a, bb = sector.a, sector.b_amp
        sin_of_exp = _sin_of_exp

        def f(y: float) -> float:
            return a * (1.0 + bb * sin_of_exp(y)) * y

        return f
    return lambda y: eval_f(sector, y)


def _kappa_fn(ctrl: ControllerSpec) -> Callable[[float], float]:
    gain = ctrl.gain
    if gain.kind is GainKind.BETA_COS:
        beta = gain.beta
        cos = math.cos
        if beta.family is BetaFamily.IDENTITY:
            return lambda z: z * cos(z)
        if beta.family is BetaFamily.POWER:
            p = beta.p
            return lambda z: (z**p) * cos(z)
        c1, c2 = beta.c1, beta.c2
        expm1 = math.expm1

        def kappa(z: float) -> float:
            arg = c2 * z * z
            if arg > EXP_ARG_MAX:
                raise GainOverflowError(
                    f"exp-quadratic envelope overflows at z={z!r} (exponent {arg:.6g})"
                )
            return c1 * expm1(arg) * cos(z)

        return kappa
    return lambda z: eval_kappa(gain, z)


def closed_loop_rhs(plant: PlantSpec, ctrl: ControllerSpec) -> Rhs:
    """Joint state derivative: (y, u, q) for the lagged loop, (y, q) nominal.

    Built as a fused closure so the hot integration loop avoids repeated
    dispatch; semantics match composing ``controller_output``, ``plant_rhs``
    and ``controller_rhs`` (asserted by the test suite).
    """
    f = _sector_fn(plant)
    b, lam = plant.b, ctrl.lam
    npi = ctrl.kind is ControllerKind.NPI
    kappa = _kappa_fn(ctrl) if npi else None
    cos = math.cos

    if plant.topology is Topology.ACTUATOR_PERTURBED:
        eps = plant.epsilon
        if npi:

            def rhs(x: StateTuple) -> StateTuple:
                y, u, q = x
                z = 0.5 * y * y + q
                u_nom = kappa(z) * y
                return (f(y) + b * u, (u_nom - u) / eps, lam * y * y)

        else:

            def rhs(x: StateTuple) -> StateTuple:
                y, u, q = x
                u_nom = q * q * cos(q) * y
                return (f(y) + b * u, (u_nom - u) / eps, lam * y * y)

        return rhs

    if npi:

        def rhs(x: StateTuple) -> StateTuple:
            y, q = x
            z = 0.5 * y * y + q
            return (f(y) + b * (kappa(z) * y), lam * y * y)

    else:

        def rhs(x: StateTuple) -> StateTuple:
            y, q = x
            return (f(y) + b * (q * q * cos(q) * y), lam * y * y)

    return rhs


# --------------------------------------------------------------------------
# Integration driver
# --------------------------------------------------------------------------

_ABORTS = (
    StageOverflowError,
    GainOverflowError,
    NonFiniteInputError,
    DomainError,
    OverflowError,
)


class _Recorder:
    def __init__(self, ctrl: ControllerSpec, perturbed: bool):
        self.ctrl = ctrl
        self.perturbed = perturbed
        self.t: list[float] = []
        self.y: list[float] = []
        self.u: list[float] = []
        self.u_nom: list[float] = []
        self.z: list[float] = []

    def record(self, t: float, x: StateTuple) -> None:
        y = x[0]
        q = x[-1]
        u_nom, z = controller_output(self.ctrl, q, y)
        if not (math.isfinite(u_nom) and math.isfinite(z)):
            raise StageOverflowError("non-finite value at sample recording")
        u = x[1] if self.perturbed else u_nom
        self.t.append(t)
        self.y.append(y)
        self.u.append(u)
        self.u_nom.append(u_nom)
        self.z.append(z)

    @property
    def last_t(self) -> float:
        return self.t[-1] if self.t else math.nan


def integrate(
    plant: PlantSpec,
    ctrl: ControllerSpec,
    y0: float,
    u0: float,
    q0: float,
    cfg: SimConfig,
) -> Trajectory:
    """Integrate the closed loop from (y0, u0, q0) and record a trajectory.

    Samples are kept every ``sample_stride``-th accepted step plus the final
    one.  Early termination: Diverged once |y| reaches the divergence
    threshold (that crossing sample is recorded), Overflow if any evaluation
    leaves double range (nothing non-finite is ever recorded).
    """
    for name, v in (("y0", y0), ("u0", u0), ("q0", q0)):
        if not math.isfinite(v):
            raise ConfigError(f"initial condition {name} must be finite, got {v!r}")
    if q0 < 0:
        raise ConfigError(f"initial controller state q0 must be >= 0, got {q0}")

    perturbed = plant.topology is Topology.ACTUATOR_PERTURBED
    if perturbed and isinstance(cfg.method, RK4Method) and cfg.dt > plant.epsilon / 5:
        raise ConfigError(
            f"fixed-step dt={cfg.dt} too coarse for actuator time constant "
            f"epsilon={plant.epsilon}; need dt <= epsilon/5"
        )

    rhs = closed_loop_rhs(plant, ctrl)
    rec = _Recorder(ctrl, perturbed)
    x: StateTuple = (y0, u0, q0) if perturbed else (y0, q0)

    try:
        rec.record(0.0, x)
    except _ABORTS as e:
        raise ConfigError(f"initial state is not evaluable: {e}") from e

    if isinstance(cfg.method, RK4Method):
        termination = _run_fixed(rhs, rec, x, cfg)
    else:
        termination = _run_adaptive(rhs, rec, x, cfg)

    return Trajectory(
        t=np.asarray(rec.t),
        y=np.asarray(rec.y),
        u=np.asarray(rec.u),
        u_nom=np.asarray(rec.u_nom),
        z=np.asarray(rec.z),
        termination=termination,
        config=cfg,
    )


def _post_step(
    rec: _Recorder, x: StateTuple, t: float, cfg: SimConfig, step_index: int, is_final: bool
) -> Termination | None:
    """Shared bookkeeping after an accepted step; returns a termination or None."""
    for v in x:
        if not math.isfinite(v):
            return Termination(TerminationKind.OVERFLOW, t, "non-finite state")
    diverged = abs(x[0]) >= cfg.divergence_threshold
    if diverged or is_final or step_index % cfg.sample_stride == 0:
        try:
            rec.record(t, x)
        except _ABORTS as e:
            return Termination(TerminationKind.OVERFLOW, t, str(e))
    if diverged:
        return Termination(TerminationKind.DIVERGED, t, f"|y| >= {cfg.divergence_threshold}")
    return None


def _run_fixed(rhs: Rhs, rec: _Recorder, x: StateTuple, cfg: SimConfig) -> Termination:
    n = max(1, int(math.ceil(cfg.t_end / cfg.dt - 1e-12)))
    for i in range(1, n + 1):
        t = cfg.t_end if i == n else i * cfg.dt
        dt_i = t - (i - 1) * cfg.dt
        try:
            x = step_rk4(rhs, x, dt_i)
        except _ABORTS as e:
            return Termination(TerminationKind.OVERFLOW, t, str(e))
        term = _post_step(rec, x, t, cfg, i, is_final=(i == n))
        if term is not None:
            return term
    return Termination(TerminationKind.COMPLETED, cfg.t_end)


def _run_adaptive(rhs: Rhs, rec: _Recorder, x: StateTuple, cfg: SimConfig) -> Termination:
    if len(x) == 3:
        return _run_adaptive3(rhs, rec, x, cfg)
    m: RKF45Method = cfg.method
    t = 0.0
    dt = min(max(cfg.dt, m.dt_min), m.dt_max)
    accepted = 0
    while t < cfg.t_end * (1.0 - 1e-15):
        dt = min(dt, cfg.t_end - t)
        try:
            x4, x5 = _rkf45_step(rhs, x, dt)
        except _ABORTS as e:
            if dt > m.dt_min * (1.0 + 1e-9):
                dt = max(m.dt_min, 0.25 * dt)
                continue
            return Termination(TerminationKind.OVERFLOW, t, str(e))
        err_ratio = 0.0
        for a, b, xi in zip(x4, x5, x):
            scale = m.abs_tol + m.rel_tol * max(abs(xi), abs(a))
            e = abs(a - b) / scale
            if not math.isfinite(e):
                err_ratio = math.inf
                break
            err_ratio = max(err_ratio, e)
        if err_ratio <= 1.0 or dt <= m.dt_min * (1.0 + 1e-9):
            t_new = t + dt
            x = x4
            accepted += 1
            is_final = t_new >= cfg.t_end * (1.0 - 1e-15)
            term = _post_step(rec, x, t_new, cfg, accepted, is_final=is_final)
            if term is not None:
                return term
            t = t_new
            if err_ratio > 0:
                factor = min(5.0, max(0.2, 0.9 * err_ratio**-0.2))
            else:
                factor = 5.0
            dt = min(m.dt_max, max(m.dt_min, dt * factor))
        else:
            dt = max(m.dt_min, dt * max(0.2, 0.9 * err_ratio**-0.2))
    return Termination(TerminationKind.COMPLETED, cfg.t_end)


def _run_adaptive3(rhs: Rhs, rec: _Recorder, x: StateTuple, cfg: SimConfig) -> Termination:
    """Scalar-unrolled twin of the generic adaptive driver for 3-state loops.

    The loops whose gain slope creates sub-millisecond transients take
    millions of accepted steps, so the hot path avoids tuple comprehensions.
    Semantics are identical to the generic path (same tableau, same error
    control); the test suite pins the two against each other.
    """
    m: RKF45Method = cfg.method
    isfinite = math.isfinite
    t = 0.0
    dt = min(max(cfg.dt, m.dt_min), m.dt_max)
    accepted = 0
    y, u, q = x
    t_gate = cfg.t_end * (1.0 - 1e-15)
    while t < t_gate:
        dt = min(dt, cfg.t_end - t)
        try:
            k1y, k1u, k1q = rhs((y, u, q))
            k2y, k2u, k2q = rhs((y + dt * _B21 * k1y, u + dt * _B21 * k1u, q + dt * _B21 * k1q))
            k3y, k3u, k3q = rhs(
                (
                    y + dt * (_B31 * k1y + _B32 * k2y),
                    u + dt * (_B31 * k1u + _B32 * k2u),
                    q + dt * (_B31 * k1q + _B32 * k2q),
                )
            )
            k4y, k4u, k4q = rhs(
                (
                    y + dt * (_B41 * k1y + _B42 * k2y + _B43 * k3y),
                    u + dt * (_B41 * k1u + _B42 * k2u + _B43 * k3u),
                    q + dt * (_B41 * k1q + _B42 * k2q + _B43 * k3q),
                )
            )
            k5y, k5u, k5q = rhs(
                (
                    y + dt * (_B51 * k1y + _B52 * k2y + _B53 * k3y + _B54 * k4y),
                    u + dt * (_B51 * k1u + _B52 * k2u + _B53 * k3u + _B54 * k4u),
                    q + dt * (_B51 * k1q + _B52 * k2q + _B53 * k3q + _B54 * k4q),
                )
            )
            k6y, k6u, k6q = rhs(
                (
                    y + dt * (_B61 * k1y + _B62 * k2y + _B63 * k3y + _B64 * k4y + _B65 * k5y),
                    u + dt * (_B61 * k1u + _B62 * k2u + _B63 * k3u + _B64 * k4u + _B65 * k5u),
                    q + dt * (_B61 * k1q + _B62 * k2q + _B63 * k3q + _B64 * k4q + _B65 * k5q),
                )
            )
        except _ABORTS as e:
            if dt > m.dt_min * (1.0 + 1e-9):
                dt = max(m.dt_min, 0.25 * dt)
                continue
            return Termination(TerminationKind.OVERFLOW, t, str(e))

        y4 = y + dt * (_C40 * k1y + _C42 * k3y + _C43 * k4y + _C44 * k5y)
        u4 = u + dt * (_C40 * k1u + _C42 * k3u + _C43 * k4u + _C44 * k5u)
        q4 = q + dt * (_C40 * k1q + _C42 * k3q + _C43 * k4q + _C44 * k5q)
        y5 = y + dt * (_C50 * k1y + _C52 * k3y + _C53 * k4y + _C54 * k5y + _C55 * k6y)
        u5 = u + dt * (_C50 * k1u + _C52 * k3u + _C53 * k4u + _C54 * k5u + _C55 * k6u)
        q5 = q + dt * (_C50 * k1q + _C52 * k3q + _C53 * k4q + _C54 * k5q + _C55 * k6q)

        if not (isfinite(y4) and isfinite(u4) and isfinite(q4) and isfinite(y5) and isfinite(u5) and isfinite(q5)):
            if dt > m.dt_min * (1.0 + 1e-9):
                dt = max(m.dt_min, 0.25 * dt)
                continue
            return Termination(TerminationKind.OVERFLOW, t, "non-finite Runge-Kutta stage")

        ay = abs(y) if abs(y) > abs(y4) else abs(y4)
        au = abs(u) if abs(u) > abs(u4) else abs(u4)
        aq = abs(q) if abs(q) > abs(q4) else abs(q4)
        e1 = abs(y4 - y5) / (m.abs_tol + m.rel_tol * ay)
        e2 = abs(u4 - u5) / (m.abs_tol + m.rel_tol * au)
        e3 = abs(q4 - q5) / (m.abs_tol + m.rel_tol * aq)
        err_ratio = e1 if e1 > e2 else e2
        if e3 > err_ratio:
            err_ratio = e3
        if not isfinite(err_ratio):
            err_ratio = math.inf

        if err_ratio <= 1.0 or dt <= m.dt_min * (1.0 + 1e-9):
            t_new = t + dt
            y, u, q = y4, u4, q4
            accepted += 1
            is_final = t_new >= t_gate
            if is_final or abs(y) >= cfg.divergence_threshold or accepted % cfg.sample_stride == 0:
                term = _post_step(rec, (y, u, q), t_new, cfg, accepted, is_final=is_final)
                if term is not None:
                    return term
            t = t_new
            if err_ratio > 0:
                factor = 0.9 * err_ratio**-0.2
                if factor > 5.0:
                    factor = 5.0
                elif factor < 0.2:
                    factor = 0.2
            else:
                factor = 5.0
            dt = min(m.dt_max, max(m.dt_min, dt * factor))
        else:
            factor = 0.9 * err_ratio**-0.2
            if factor < 0.2:
                factor = 0.2
            dt = max(m.dt_min, dt * factor)
    return Termination(TerminationKind.COMPLETED, cfg.t_end)


# --------------------------------------------------------------------------
# Terminal classification
# --------------------------------------------------------------------------


def classify(traj: Trajectory, tol: float, tail_fraction: float) -> Verdict:
    """Classify a trajectory's terminal behaviour.

    Diverged when the run terminated with Diverged or Overflow.  Otherwise
    Converged iff max(|y|, |u|, |u_nom|) stays below tol over the trailing
    ``tail_fraction`` of the run (by time, which for fixed-step sampling is
    the same as the trailing fraction of samples); else BoundedNonConverged.
    """
    if traj.n_samples == 0:
        raise ValueError("cannot classify an empty trajectory")
    if not 0 < tail_fraction < 1:
        raise ValueError(f"tail_fraction must sit in (0, 1), got {tail_fraction}")

    t = traj.t
    t_lo = t[-1] - tail_fraction * (t[-1] - t[0])
    mask = t >= t_lo
    if not mask.any():
        mask[-1] = True
    tail_max_abs_y = float(np.max(np.abs(traj.y[mask])))
    final_abs = (
        float(abs(traj.y[-1])),
        float(abs(traj.u[-1])),
        float(abs(traj.u_nom[-1])),
    )
    if traj.termination.kind is not TerminationKind.COMPLETED:
        return Verdict(VerdictClass.DIVERGED, tail_max_abs_y, final_abs)
    tail_max = max(
        tail_max_abs_y,
        float(np.max(np.abs(traj.u[mask]))),
        float(np.max(np.abs(traj.u_nom[mask]))),
    )
    if tail_max < tol:
        return Verdict(VerdictClass.CONVERGED, tail_max_abs_y, final_abs)
    return Verdict(VerdictClass.BOUNDED_NON_CONVERGED, tail_max_abs_y, final_abs)
