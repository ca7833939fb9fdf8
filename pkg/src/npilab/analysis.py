"""Numerical certificate checks for the lagged nonlinear-PI closed loop.

The boundedness argument for the actuator-perturbed loop rests on four
verifiable ingredients, all expressed in the plant/controller constants
(eps, lam, alpha1, alpha2, b) and one free storage weight ell:

* small-lag condition: eps*(lam + alpha2) < 1, with margin
  1 - eps*(lam + alpha2);
* a threshold ell* = ((alpha2 + lam)/b)**2 * max(eps,
  (1 - eps*alpha1)**2 / (4*lam*(1 - eps*(lam + alpha2)))) such that any
  ell > ell* makes the next two objects definite;
* the quadratic storage S(u, y) = (eps/2)*u**2
  + (eps*(alpha2+lam)/b)*u*y + (ell/2)*y**2, which must be nonnegative
  everywhere;
* the 2x2 dissipation matrix
  [[1 - eps*(lam+alpha2), (lam+alpha2)*(1 - eps*a)/(2b)], [sym, lam*ell]],
  which must stay positive definite for every slope value a in
  [alpha1, alpha2].

Definiteness is checked two ways: exactly, through the 2x2 discriminant
evaluated at the slope interval endpoints (the quadratic (1 - eps*a)**2 is
convex in a, so endpoints realize the worst case), and by brute-force grid
sweeps as a belt-and-braces cross-check.

For a linear plant (alpha1 == alpha2) the envelope growth requirement can
be dropped: a plain Nussbaum gain suffices, which is checked numerically
via ``nussbaum_index``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .controller import ControllerKind, ControllerSpec
from .errors import UndefinedThresholdError
from .gains import (
    BetaSpec,
    GainKind,
    GainSpec,
    NussbaumClass,
    check_beta_growth,
    default_growth_grid,
    nussbaum_index,
)
from .plant import PlantSpec, SectorFamily


@dataclass(frozen=True)
class ConditionI:
    holds: bool
    margin: float  # 1 - eps*(lam + alpha2); positive iff the condition holds
    epsilon_bound: float  # largest admissible eps, 1/(lam + alpha2)


def check_condition_i(epsilon: float, lam: float, alpha2: float) -> ConditionI:
    """Small-lag condition eps*(lam + alpha2) < 1."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    margin = 1.0 - epsilon * (lam + alpha2)
    return ConditionI(holds=margin > 0, margin=margin, epsilon_bound=1.0 / (lam + alpha2))


def ell_threshold(epsilon: float, lam: float, alpha1: float, alpha2: float, b: float) -> float:
    """Storage weight threshold; defined only while the small-lag condition holds."""
    cond = check_condition_i(epsilon, lam, alpha2)
    if not cond.holds:
        raise UndefinedThresholdError(
            f"threshold undefined: small-lag margin is {cond.margin:.6g} <= 0"
        )
    prefactor = ((alpha2 + lam) / b) ** 2
    return prefactor * max(
        epsilon, (1.0 - epsilon * alpha1) ** 2 / (4.0 * lam * cond.margin)
    )


@dataclass(frozen=True)
class CertificateParams:
    epsilon: float
    lam: float
    alpha1: float
    alpha2: float
    b: float
    ell: float

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError(f"storage weight ell must be positive, got {self.ell}")
        if self.alpha1 > self.alpha2:
            raise ValueError("slope bounds out of order")

    @classmethod
    def from_specs(cls, plant: PlantSpec, ctrl: ControllerSpec, ell: float) -> "CertificateParams":
        return cls(
            epsilon=plant.epsilon,
            lam=ctrl.lam,
            alpha1=plant.sector.declared_alpha1,
            alpha2=plant.sector.declared_alpha2,
            b=plant.b,
            ell=ell,
        )


def s_value(u: float, y: float, params: CertificateParams) -> float:
    """The quadratic storage S(u, y)."""
    p = params
    return (
        0.5 * p.epsilon * u * u
        + (p.epsilon * (p.alpha2 + p.lam) / p.b) * u * y
        + 0.5 * p.ell * y * y
    )


def lambda_matrix(y_alpha: float, params: CertificateParams) -> np.ndarray:
    """The symmetric 2x2 dissipation matrix at slope value y_alpha."""
    p = params
    off = (p.lam + p.alpha2) * (1.0 - p.epsilon * y_alpha) / (2.0 * p.b)
    return np.array(
        [[1.0 - p.epsilon * (p.lam + p.alpha2), off], [off, p.lam * p.ell]]
    )


def lambda_matrix_min_eig(y_alpha: float, params: CertificateParams) -> float:
    """Minimum eigenvalue of the dissipation matrix, by the closed 2x2 formula."""
    p = params
    a = 1.0 - p.epsilon * (p.lam + p.alpha2)
    d = p.lam * p.ell
    off = (p.lam + p.alpha2) * (1.0 - p.epsilon * y_alpha) / (2.0 * p.b)
    half_gap = 0.5 * (a - d)
    return 0.5 * (a + d) - math.hypot(half_gap, off)


@dataclass(frozen=True)
class SNonNegCheck:
    ok: bool
    min_value: float
    worst_u: float
    worst_y: float


def s_nonneg_sweep(
    params: CertificateParams,
    u_range: tuple[float, float] = (-100.0, 100.0),
    y_range: tuple[float, float] = (-100.0, 100.0),
    n: int = 201,
    tol: float = 1e-9,
) -> SNonNegCheck:
    """Grid sweep of S over a (u, y) box; ok iff nothing sinks below -tol*scale."""
    p = params
    u = np.linspace(u_range[0], u_range[1], n)
    y = np.linspace(y_range[0], y_range[1], n)
    uu, yy = np.meshgrid(u, y, indexing="ij")
    s = (
        0.5 * p.epsilon * uu * uu
        + (p.epsilon * (p.alpha2 + p.lam) / p.b) * uu * yy
        + 0.5 * p.ell * yy * yy
    )
    i, j = np.unravel_index(np.argmin(s), s.shape)
    min_value = float(s[i, j])
    scale = max(1.0, abs(p.ell))
    return SNonNegCheck(
        ok=min_value >= -tol * scale,
        min_value=min_value,
        worst_u=float(u[i]),
        worst_y=float(y[j]),
    )


@dataclass(frozen=True)
class LambdaPDCheck:
    ok: bool
    min_eig: float
    worst_alpha: float
    discriminant_ok: bool  # exact endpoint check of det > 0 with positive trace


def lambda_pd_sweep(params: CertificateParams, n: int = 1001) -> LambdaPDCheck:
    """Positive definiteness of the dissipation matrix across the slope interval.

    The grid sweep uses the closed-form minimum eigenvalue; the exact check
    evaluates the determinant at the interval endpoints (worst case of the
    convex quadratic (1 - eps*a)**2) and, when 1/eps lies inside the
    interval, also at that interior vertex.
    """
    p = params
    a11 = 1.0 - p.epsilon * (p.lam + p.alpha2)
    d22 = p.lam * p.ell
    alphas = np.linspace(p.alpha1, p.alpha2, n)
    off = (p.lam + p.alpha2) * (1.0 - p.epsilon * alphas) / (2.0 * p.b)
    half_gap = 0.5 * (a11 - d22)
    eigs = 0.5 * (a11 + d22) - np.hypot(half_gap, off)
    k = int(np.argmin(eigs))

    probes = [p.alpha1, p.alpha2]
    vertex = 1.0 / p.epsilon if p.epsilon != 0 else math.inf
    if p.alpha1 < vertex < p.alpha2:
        probes.append(vertex)
    disc_ok = a11 > 0 and all(
        a11 * d22 - ((p.lam + p.alpha2) * (1.0 - p.epsilon * a) / (2.0 * p.b)) ** 2 > 0
        for a in probes
    )
    return LambdaPDCheck(
        ok=bool(eigs[k] > 0) and disc_ok,
        min_eig=float(eigs[k]),
        worst_alpha=float(alphas[k]),
        discriminant_ok=bool(disc_ok),
    )


@dataclass(frozen=True)
class GrowthSummary:
    passes: bool
    n_checked: int
    failing: tuple[tuple[float, float], ...]  # (c, delta) pairs that failed


# representative probe points for the "every c, delta > 0" quantifier
GROWTH_C_PROBES = (0.1, 1.0, 10.0)
GROWTH_DELTA_PROBES = (0.01, 0.1, 1.0, 5.0)


def growth_summary(
    beta: BetaSpec,
    c_probes: Sequence[float] = GROWTH_C_PROBES,
    delta_probes: Sequence[float] = GROWTH_DELTA_PROBES,
) -> GrowthSummary:
    grid = default_growth_grid()
    failing = []
    n = 0
    for c in c_probes:
        for delta in delta_probes:
            n += 1
            if not check_beta_growth(beta, c, delta, grid).passes:
                failing.append((c, delta))
    return GrowthSummary(passes=not failing, n_checked=n, failing=tuple(failing))


@dataclass(frozen=True)
class CorollaryCheck:
    applicable: bool  # linear plant (alpha1 == alpha2)
    condition_holds: bool
    nf_classification: NussbaumClass | None
    ok: bool


@dataclass(frozen=True)
class CertificateReport:
    condition_i: ConditionI
    ell_threshold_value: float | None
    ell: float | None
    s_nonneg: SNonNegCheck | None
    lambda_pd: LambdaPDCheck | None
    beta_growth: GrowthSummary | None
    corollary: CorollaryCheck | None
    theorem_ok: bool
    certified: bool
    short_circuited: bool = False

    def to_kv(self) -> str:
        """Flat machine-readable key=value rendering."""
        lines = [
            f"condition_i.holds = {self.condition_i.holds}",
            f"condition_i.margin = {self.condition_i.margin!r}",
            f"condition_i.epsilon_bound = {self.condition_i.epsilon_bound!r}",
            f"short_circuited = {self.short_circuited}",
        ]
        if self.ell_threshold_value is not None:
            lines.append(f"ell.threshold = {self.ell_threshold_value!r}")
            lines.append(f"ell.used = {self.ell!r}")
        if self.s_nonneg is not None:
            lines.append(f"s_nonneg.ok = {self.s_nonneg.ok}")
            lines.append(f"s_nonneg.min = {self.s_nonneg.min_value!r}")
            lines.append(
                f"s_nonneg.worst = ({self.s_nonneg.worst_u!r}, {self.s_nonneg.worst_y!r})"
            )
        if self.lambda_pd is not None:
            lines.append(f"lambda_pd.ok = {self.lambda_pd.ok}")
            lines.append(f"lambda_pd.min_eig = {self.lambda_pd.min_eig!r}")
            lines.append(f"lambda_pd.worst_alpha = {self.lambda_pd.worst_alpha!r}")
        if self.beta_growth is not None:
            lines.append(f"beta_growth.passes = {self.beta_growth.passes}")
            lines.append(f"beta_growth.n_checked = {self.beta_growth.n_checked}")
            for c, d in self.beta_growth.failing:
                lines.append(f"beta_growth.failing = ({c!r}, {d!r})")
        if self.corollary is not None:
            lines.append(f"corollary.applicable = {self.corollary.applicable}")
            lines.append(f"corollary.condition_holds = {self.corollary.condition_holds}")
            cls = self.corollary.nf_classification
            lines.append(f"corollary.nf = {cls.value if cls else 'n/a'}")
            lines.append(f"corollary.ok = {self.corollary.ok}")
        lines.append(f"theorem_ok = {self.theorem_ok}")
        lines.append(f"certified = {self.certified}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Human-readable rendering."""
        out = ["certificate report", "==================="]
        ci = self.condition_i
        out.append(
            f"small-lag condition: {'holds' if ci.holds else 'FAILS'} "
            f"(margin {ci.margin:.6g}, admissible eps < {ci.epsilon_bound:.6g})"
        )
        if self.short_circuited:
            out.append("remaining checks skipped: threshold undefined without the margin")
        if self.ell_threshold_value is not None:
            out.append(
                f"storage weight: threshold {self.ell_threshold_value:.6g}, "
                f"using ell = {self.ell:.6g}"
            )
        if self.s_nonneg is not None:
            s = self.s_nonneg
            out.append(
                f"storage nonnegativity: {'ok' if s.ok else 'FAILS'} "
                f"(min {s.min_value:.6g} at u={s.worst_u:.6g}, y={s.worst_y:.6g})"
            )
        if self.lambda_pd is not None:
            lp = self.lambda_pd
            out.append(
                f"dissipation matrix: {'positive definite' if lp.ok else 'NOT definite'} "
                f"(min eig {lp.min_eig:.6g} at slope {lp.worst_alpha:.6g}; "
                f"exact endpoint check {'ok' if lp.discriminant_ok else 'FAILS'})"
            )
        if self.beta_growth is not None:
            bg = self.beta_growth
            if bg.passes:
                out.append(f"envelope growth: ok ({bg.n_checked} (c, delta) probes)")
            else:
                fails = ", ".join(f"(c={c:g}, delta={d:g})" for c, d in bg.failing)
                out.append(f"envelope growth: FAILS at {fails}")
        if self.corollary is not None and self.corollary.applicable:
            co = self.corollary
            cls = co.nf_classification.value if co.nf_classification else "n/a"
            out.append(
                f"linear-plant fallback: {'ok' if co.ok else 'not satisfied'} "
                f"(condition {'holds' if co.condition_holds else 'fails'}, gain index {cls})"
            )
        out.append(f"certified: {'YES' if self.certified else 'NO'}")
        return "\n".join(out) + "\n"


def certify(
    plant: PlantSpec,
    ctrl: ControllerSpec,
    ell_factor: float = 1.01,
    *,
    nf_zeta_max: float = 200.0,
    nf_n_grid: int = 20001,
) -> CertificateReport:
    """Aggregate certificate for an NPI loop on an actuator-perturbed plant.

    Runs the small-lag check, sizes the storage weight as
    ell = ell_factor * threshold, sweeps storage nonnegativity and
    dissipation definiteness, and checks the gain envelope growth property.
    For linear plants, a plain Nussbaum gain classification provides a
    fallback certification path when the envelope growth test fails.
    """
    if ctrl.kind is not ControllerKind.NPI:
        raise ValueError("certification applies to the NPI controller")
    if not ell_factor > 1:
        raise ValueError(f"ell_factor must exceed 1, got {ell_factor}")

    sector = plant.sector
    alpha1, alpha2 = sector.declared_alpha1, sector.declared_alpha2
    cond = check_condition_i(plant.epsilon, ctrl.lam, alpha2)

    corollary = None
    linear = sector.family is SectorFamily.LINEAR or alpha1 == alpha2
    if linear:
        nf = nussbaum_index(ctrl.gain, nf_zeta_max, nf_n_grid)
        corollary = CorollaryCheck(
            applicable=True,
            condition_holds=cond.holds,
            nf_classification=nf.classification,
            ok=cond.holds and nf.classification is NussbaumClass.LIKELY_NUSSBAUM,
        )

    if not cond.holds:
        return CertificateReport(
            condition_i=cond,
            ell_threshold_value=None,
            ell=None,
            s_nonneg=None,
            lambda_pd=None,
            beta_growth=None,
            corollary=corollary,
            theorem_ok=False,
            certified=False,
            short_circuited=True,
        )

    threshold = ell_threshold(plant.epsilon, ctrl.lam, alpha1, alpha2, plant.b)
    ell = ell_factor * threshold
    params = CertificateParams.from_specs(plant, ctrl, ell)
    s_check = s_nonneg_sweep(params)
    pd_check = lambda_pd_sweep(params)

    if ctrl.gain.kind is GainKind.BETA_COS:
        growth = growth_summary(ctrl.gain.beta)
    else:
        growth = GrowthSummary(passes=False, n_checked=0, failing=())

    theorem_ok = cond.holds and s_check.ok and pd_check.ok and growth.passes
    certified = theorem_ok or (corollary is not None and corollary.ok)
    return CertificateReport(
        condition_i=cond,
        ell_threshold_value=threshold,
        ell=ell,
        s_nonneg=s_check,
        lambda_pd=pd_check,
        beta_growth=growth,
        corollary=corollary,
        theorem_ok=theorem_ok,
        certified=certified,
    )
