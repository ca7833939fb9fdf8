"""Sign-indefinite control gains and finite-horizon Nussbaum-property checks.

The gains used by the PI controller have the product form

    kappa(z) = beta(z) * cos(z)

where beta is a class-Kinf envelope (continuous, strictly increasing,
beta(0) = 0, unbounded).  Three envelope families are provided:

* power:          beta(z) = z**p                     (p > 0, z >= 0)
* exp-quadratic:  beta(z) = c1 * (exp(c2*z**2) - 1)  (c1, c2 > 0)
* identity:       beta(z) = z

``nussbaum_index`` probes, over a finite horizon, whether a gain N behaves
like a Nussbaum function: the running mean (1/w) * int_0^w N(s) ds must
reach arbitrarily large positive and negative values as w -> +inf and as
w -> -inf.  At a finite horizon this is semi-decidable at best.  The
verdict is therefore a heuristic classification driven by a growth gate
applied to the running integral int_0^w N (whose envelope grows like
beta(w), unlike the mean whose envelope only grows like beta(w)/w), plus a
saturation test on the running mean extrema.  It is never a proof, and the
gate value is echoed in the verdict so downstream reports can flag the
convention.

``check_beta_growth`` tests the stronger envelope-growth property

    beta(z + delta)/z - c*beta(z)  ->  +inf   as z -> +inf,

required to hold for every c, delta > 0.  The exp-quadratic family
satisfies it for all parameter values; every pure power (including the
identity) fails it, even though e.g. z**2 * cos(z) is itself a Nussbaum
function.  Evaluation is done in log space so that the check remains
meaningful far past the point where exp(c2*z**2) overflows a double.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError, GainOverflowError

# exp() overflow knee for IEEE doubles, about 709.78
EXP_ARG_MAX = math.log(sys.float_info.max)


class BetaFamily(Enum):
    POWER = "power"
    EXP_QUADRATIC = "expquad"
    IDENTITY = "identity"


@dataclass(frozen=True)
class BetaSpec:
    """Class-Kinf gain envelope.

    The power family is restricted to z >= 0 (the controller's gain
    argument is provably nonnegative); evaluating it at negative z raises
    ``DomainError``.  The identity extends to negative z as-is and the
    exp-quadratic family is even, so both are usable on the whole line.
    """

    family: BetaFamily
    p: float = 1.0
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.family is BetaFamily.POWER and not self.p > 0:
            raise ValueError(f"power envelope needs p > 0, got p={self.p}")
        if self.family is BetaFamily.EXP_QUADRATIC and not (self.c1 > 0 and self.c2 > 0):
            raise ValueError(
                f"exp-quadratic envelope needs c1, c2 > 0, got ({self.c1}, {self.c2})"
            )

    @classmethod
    def power(cls, p: float) -> "BetaSpec":
        return cls(BetaFamily.POWER, p=float(p))

    @classmethod
    def exp_quadratic(cls, c1: float, c2: float) -> "BetaSpec":
        return cls(BetaFamily.EXP_QUADRATIC, c1=float(c1), c2=float(c2))

    @classmethod
    def identity(cls) -> "BetaSpec":
        return cls(BetaFamily.IDENTITY)

    def value(self, z: float) -> float:
        if self.family is BetaFamily.IDENTITY:
            return float(z)
        if self.family is BetaFamily.POWER:
            if z < 0:
                raise DomainError(f"power envelope is defined for z >= 0, got z={z}")
            return float(z) ** self.p
        arg = self.c2 * z * z
        if arg > EXP_ARG_MAX:
            raise GainOverflowError(
                f"exp-quadratic envelope overflows at z={z!r} "
                f"(exponent {arg:.6g}, log-magnitude ~{self.log_value(abs(z)):.6g})"
            )
        out = self.c1 * math.expm1(arg)
        if math.isinf(out):
            raise GainOverflowError(f"exp-quadratic envelope overflows at z={z!r}")
        return out

    def log_value(self, z: float) -> float:
        """Natural log of beta(z) for z > 0, stable past the exp overflow knee.

        Returns -inf at z = 0.
        """
        if z < 0:
            raise DomainError(f"log_value needs z >= 0, got z={z}")
        if z == 0.0:
            return -math.inf
        if self.family is BetaFamily.IDENTITY:
            return math.log(z)
        if self.family is BetaFamily.POWER:
            return self.p * math.log(z)
        arg = self.c2 * z * z
        if arg > 1.0:
            # log(exp(a) - 1) = a + log1p(-exp(-a))
            return math.log(self.c1) + arg + math.log1p(-math.exp(-arg))
        return math.log(self.c1) + math.log(math.expm1(arg))


class GainKind(Enum):
    BETA_COS = "betacos"
    RAW_TABULATED = "tabulated"


@dataclass(frozen=True)
class GainSpec:
    """A PI gain: either beta(z)*cos(z) or a tabulated sample set."""

    kind: GainKind
    beta: BetaSpec | None = None
    table_z: tuple[float, ...] = ()
    table_n: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind is GainKind.BETA_COS:
            if self.beta is None:
                raise ValueError("beta_cos gain needs a BetaSpec")
        else:
            if len(self.table_z) != len(self.table_n) or len(self.table_z) < 2:
                raise ValueError("tabulated gain needs >= 2 matching (z, value) samples")
            if any(b <= a for a, b in zip(self.table_z, self.table_z[1:])):
                raise ValueError("tabulated gain abscissae must be strictly increasing")

    @classmethod
    def beta_cos(cls, beta: BetaSpec) -> "GainSpec":
        return cls(GainKind.BETA_COS, beta=beta)

    @classmethod
    def tabulated(cls, z: Sequence[float], values: Sequence[float]) -> "GainSpec":
        return cls(
            GainKind.RAW_TABULATED,
            table_z=tuple(float(x) for x in z),
            table_n=tuple(float(x) for x in values),
        )


def eval_kappa(gain: GainSpec, z: float) -> float:
    """Evaluate the gain at z, exactly as composed: beta(z)*cos(z).

    The envelope is applied to z as given (no implicit even or odd
    extension); power envelopes therefore reject negative z.  Overflow of
    the exp-quadratic envelope raises ``GainOverflowError`` rather than
    returning an infinity.
    """
    if not math.isfinite(z):
        raise ValueError(f"gain argument must be finite, got {z!r}")
    if gain.kind is GainKind.BETA_COS:
        return gain.beta.value(z) * math.cos(z)
    if z < gain.table_z[0] or z > gain.table_z[-1]:
        raise DomainError(
            f"tabulated gain covers [{gain.table_z[0]}, {gain.table_z[-1]}], got z={z}"
        )
    return float(np.interp(z, gain.table_z, gain.table_n))


# --------------------------------------------------------------------------
# Nussbaum-property index
# --------------------------------------------------------------------------

GainLike = Union[GainSpec, Callable[[float], float]]


class NussbaumClass(Enum):
    LIKELY_NUSSBAUM = "LikelyNussbaum"
    NOT_NUSSBAUM_WITNESS = "NotNussbaumWitness"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class DirectionStats:
    """Finite-horizon extrema of one sweep direction (w -> +inf or -inf)."""

    sign: int
    mean_sup: float
    mean_inf: float
    integral_sup: float
    integral_inf: float
    gate_met: bool
    mean_saturated: bool


@dataclass(frozen=True)
class NussbaumVerdict:
    """Windowed running extrema and heuristic classification of a gain.

    ``windowed_sup``/``windowed_inf`` hold, per window end ``w``, the running
    sup/inf over both sweep directions of the mean (1/w) * int_0^w N(s) ds;
    the integral counterparts hold the same for int_0^w N(s) ds.  Entries are
    running extrema, so the sup list is nondecreasing and the inf list
    nonincreasing by construction.
    """

    windowed_sup: tuple[tuple[float, float], ...]
    windowed_inf: tuple[tuple[float, float], ...]
    integral_windowed_sup: tuple[tuple[float, float], ...]
    integral_windowed_inf: tuple[tuple[float, float], ...]
    classification: NussbaumClass
    witness_bound: float | None
    growth_gate: float
    forward: DirectionStats | None
    backward: DirectionStats | None
    diagnostic: str = ""


def _gain_values_on_grid(gain: GainLike, s: np.ndarray) -> np.ndarray:
    """Evaluate a gain on a signed grid without raising on overflow.

    For beta*cos specs the envelope is applied to |s| (even extension), which
    matches how such gains are conventionally continued to the whole line for
    the two-sided Nussbaum test; tabulated gains must cover the grid range.
    Overflow shows up as non-finite entries, handled by the caller.
    """
    if isinstance(gain, GainSpec):
        if gain.kind is GainKind.BETA_COS:
            beta = gain.beta
            a = np.abs(s)
            with np.errstate(over="ignore", invalid="ignore"):
                if beta.family is BetaFamily.IDENTITY:
                    env = a
                elif beta.family is BetaFamily.POWER:
                    env = a**beta.p
                else:
                    env = beta.c1 * np.expm1(beta.c2 * a * a)
                return env * np.cos(s)
        if s.min() < gain.table_z[0] or s.max() > gain.table_z[-1]:
            raise DomainError("tabulated gain does not cover the requested sweep range")
        return np.interp(s, gain.table_z, gain.table_n)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.asarray(gain(s), dtype=float)
        if out.shape != s.shape:
            raise TypeError
        return out
    except (TypeError, ValueError):
        vals = np.empty_like(s)
        for i, si in enumerate(s):
            try:
                vals[i] = float(gain(float(si)))
            except OverflowError:
                vals[i] = math.inf
        return vals


def _running_mean_and_integral(values: np.ndarray, grid: np.ndarray):
    dx = np.diff(grid)
    integral = np.concatenate(([0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * dx)))
    mean = np.empty_like(integral)
    mean[0] = values[0]
    mean[1:] = integral[1:] / grid[1:]
    return mean, integral


def nussbaum_index(
    gain: GainLike,
    zeta_max: float,
    n_grid: int,
    *,
    growth_gate: float = 1e3,
    n_windows: int = 20,
    saturation_rtol: float = 0.05,
) -> NussbaumVerdict:
    """Classify a gain's Nussbaum behaviour on [-zeta_max, zeta_max].

    Running means and integrals are computed by composite trapezoid
    quadrature on a uniform grid of ``n_grid`` points per direction.
    Classification:

    * ``LikelyNussbaum`` when, in both directions, the running integral's
      sup exceeds +gate and its inf falls below -gate by the final window;
    * ``NotNussbaumWitness`` when, instead, the running mean extrema have
      saturated (final vs half-horizon change below ``saturation_rtol``) in
      both directions; ``witness_bound`` then bounds |running mean|;
    * ``Inconclusive`` otherwise, or when the quadrature overflows.
    """
    if not (zeta_max > 0):
        raise ValueError(f"zeta_max must be positive, got {zeta_max}")
    if n_grid < 100:
        raise ValueError(f"n_grid must be >= 100, got {n_grid}")
    if n_windows < 2:
        raise ValueError(f"n_windows must be >= 2, got {n_windows}")

    s = np.linspace(0.0, float(zeta_max), int(n_grid))
    window_ends = float(zeta_max) * np.arange(1, n_windows + 1) / n_windows
    idx = np.minimum(np.searchsorted(s, window_ends, side="right") - 1, len(s) - 1)
    half_idx = idx[n_windows // 2 - 1]

    stats: dict[int, DirectionStats] = {}
    run: dict[int, tuple] = {}
    for sign in (1, -1):
        grid = sign * s
        values = _gain_values_on_grid(gain, grid)
        if not np.all(np.isfinite(values)):
            return NussbaumVerdict(
                (),
                (),
                (),
                (),
                NussbaumClass.INCONCLUSIVE,
                None,
                growth_gate,
                None,
                None,
                diagnostic=f"gain evaluation overflowed on the sweep (direction {sign:+d})",
            )
        mean, integral = _running_mean_and_integral(values, grid)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(integral))):
            return NussbaumVerdict(
                (),
                (),
                (),
                (),
                NussbaumClass.INCONCLUSIVE,
                None,
                growth_gate,
                None,
                None,
                diagnostic=f"quadrature overflowed on the sweep (direction {sign:+d})",
            )
        run_max_m = np.maximum.accumulate(mean)
        run_min_m = np.minimum.accumulate(mean)
        run_max_i = np.maximum.accumulate(integral)
        run_min_i = np.minimum.accumulate(integral)
        run[sign] = (run_max_m, run_min_m, run_max_i, run_min_i)

        gate_met = run_max_i[-1] > growth_gate and run_min_i[-1] < -growth_gate
        sup_growth = run_max_m[-1] - run_max_m[half_idx]
        inf_growth = run_min_m[half_idx] - run_min_m[-1]
        saturated = sup_growth <= saturation_rtol * max(1.0, abs(run_max_m[-1])) and (
            inf_growth <= saturation_rtol * max(1.0, abs(run_min_m[-1]))
        )
        stats[sign] = DirectionStats(
            sign=sign,
            mean_sup=float(run_max_m[-1]),
            mean_inf=float(run_min_m[-1]),
            integral_sup=float(run_max_i[-1]),
            integral_inf=float(run_min_i[-1]),
            gate_met=bool(gate_met),
            mean_saturated=bool(saturated),
        )

    def combined(which: int, op) -> tuple[tuple[float, float], ...]:
        a, b = run[1][which], run[-1][which]
        return tuple(
            (float(window_ends[k]), float(op(a[idx[k]], b[idx[k]])))
            for k in range(n_windows)
        )

    windowed_sup = combined(0, max)
    windowed_inf = combined(1, min)
    integral_windowed_sup = combined(2, max)
    integral_windowed_inf = combined(3, min)

    fwd, bwd = stats[1], stats[-1]
    witness = None
    if fwd.gate_met and bwd.gate_met:
        cls = NussbaumClass.LIKELY_NUSSBAUM
        diag = ""
    elif fwd.mean_saturated and bwd.mean_saturated:
        cls = NussbaumClass.NOT_NUSSBAUM_WITNESS
        witness = max(
            abs(fwd.mean_sup), abs(fwd.mean_inf), abs(bwd.mean_sup), abs(bwd.mean_inf)
        )
        diag = ""
    else:
        cls = NussbaumClass.INCONCLUSIVE
        diag = "growth gate not reached and running mean extrema still advancing"

    return NussbaumVerdict(
        windowed_sup,
        windowed_inf,
        integral_windowed_sup,
        integral_windowed_inf,
        cls,
        witness,
        growth_gate,
        fwd,
        bwd,
        diagnostic=diag,
    )


# --------------------------------------------------------------------------
# Envelope growth check
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GrowthCheck:
    """Result of the envelope growth test g(z) = beta(z+delta)/z - c*beta(z).

    ``values`` holds g on the grid, with overflowed magnitudes saturated to
    +/-inf; the pass decision itself is taken on the exact log-space
    representation, so huge envelopes do not produce false negatives.
    """

    passes: bool
    values: np.ndarray
    gate: float
    tail_increasing: bool
    final_sign: int
    final_log_magnitude: float


def _log_beta_grid(beta: BetaSpec, z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if beta.family is BetaFamily.IDENTITY:
            return np.log(z)
        if beta.family is BetaFamily.POWER:
            return beta.p * np.log(z)
        arg = beta.c2 * z * z
        big = math.log(beta.c1) + arg + np.log1p(-np.exp(-arg))
        small = math.log(beta.c1) + np.log(np.expm1(arg))
        return np.where(arg > 1.0, big, small)


def _signed_log_greater(s2: int, l2: float, s1: int, l1: float) -> bool:
    """Strict comparison of two reals held as (sign, log|x|) pairs."""
    if s2 != s1:
        return s2 > s1
    if s2 > 0:
        return l2 > l1
    if s2 < 0:
        return l2 < l1
    return False


def check_beta_growth(
    beta: BetaSpec,
    c: float,
    delta: float,
    z_grid: Sequence[float],
    *,
    gate: float = 1e3,
    tail_fraction: float = 0.25,
    min_final: float = 50.0,
) -> GrowthCheck:
    """Check the envelope growth property on a grid.

    Passes iff g(z) = beta(z+delta)/z - c*beta(z) is strictly increasing over
    the trailing ``tail_fraction`` of the grid and its final value is positive
    with magnitude above ``gate``.  The grid must be strictly increasing,
    positive, and reach at least ``min_final`` so the trend is resolved; for
    slowly-growing exp-quadratic envelopes with small c2*delta the turnaround
    can sit at z of a few thousand, so generous grids are cheap insurance.
    """
    if not (c > 0 and delta > 0):
        raise ValueError(f"c and delta must be positive, got c={c}, delta={delta}")
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or len(z) < 8:
        raise ValueError("z_grid must be a 1-d sequence with at least 8 points")
    if not np.all(np.diff(z) > 0):
        raise ValueError("z_grid must be strictly increasing")
    if z[0] <= 0:
        raise ValueError("z_grid must be positive")
    if z[-1] < min_final:
        raise ValueError(
            f"z_grid must reach at least {min_final} to resolve the trend, got {z[-1]}"
        )

    log_t1 = _log_beta_grid(beta, z + delta) - np.log(z)
    log_t2 = math.log(c) + _log_beta_grid(beta, z)
    d = log_t1 - log_t2
    signs = np.sign(d).astype(int)
    hi = np.maximum(log_t1, log_t2)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = hi + np.log1p(-np.exp(-np.abs(d)))
    logmag = np.where(signs == 0, -np.inf, logmag)

    with np.errstate(over="ignore"):
        mags = np.where(logmag > EXP_ARG_MAX, np.inf, np.exp(np.minimum(logmag, EXP_ARG_MAX)))
    values = signs * mags

    m = max(2, int(math.ceil(tail_fraction * len(z))))
    tail_increasing = all(
        _signed_log_greater(signs[i + 1], logmag[i + 1], signs[i], logmag[i])
        for i in range(len(z) - m, len(z) - 1)
    )
    final_ok = signs[-1] > 0 and logmag[-1] > math.log(gate)
    return GrowthCheck(
        passes=bool(tail_increasing and final_ok),
        values=values,
        gate=float(gate),
        tail_increasing=bool(tail_increasing),
        final_sign=int(signs[-1]),
        final_log_magnitude=float(logmag[-1]),
    )


def default_growth_grid(z_max: float = 2.0e4, n: int = 4000) -> np.ndarray:
    """Default grid for ``check_beta_growth``: dense near 0, reaching z_max."""
    return np.linspace(0.5, float(z_max), int(n))
