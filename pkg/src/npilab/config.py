"""Flat key-value experiment configuration files.

Format: one ``section.key = value`` per line, ``#`` starts a comment,
blank lines ignored.  Unknown keys, malformed lines, and bad values fail
with a line-numbered diagnostic.  The recognized keys are listed in the
README.
"""

from __future__ import annotations

from dataclasses import dataclass

from .controller import ControllerSpec
from .errors import ConfigError
from .gains import BetaSpec, GainSpec
from .plant import PlantSpec, SectorFn, Topology
from .simcore import RK4Method, RKF45Method, SimConfig


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantSpec
    controller: ControllerSpec
    sim: SimConfig
    y0: float
    u0: float
    q0: float
    csv_path: str | None
    plot_path: str | None


_FLOAT_KEYS = {
    "plant.alpha",
    "plant.a",
    "plant.b_amp",
    "plant.alpha1",
    "plant.alpha2",
    "plant.b",
    "plant.epsilon",
    "controller.lambda",
    "controller.p",
    "controller.c1",
    "controller.c2",
    "sim.dt",
    "sim.t_end",
    "sim.divergence_threshold",
    "sim.rel_tol",
    "sim.abs_tol",
    "sim.dt_min",
    "sim.dt_max",
    "init.y0",
    "init.u0",
    "init.q0",
}
_INT_KEYS = {"sim.sample_stride"}
_STR_KEYS = {
    "plant.family",
    "plant.topology",
    "controller.kind",
    "controller.beta",
    "sim.method",
    "output.csv",
    "output.plot",
}
_ALL_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS


def parse_config_text(text: str) -> dict[str, tuple[object, int]]:
    """Parse into {key: (typed value, line number)}."""
    out: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        if key in _FLOAT_KEYS:
            try:
                typed: object = float(value)
            except ValueError:
                raise ConfigError(f"{key} needs a number, got {value!r}", lineno) from None
        elif key in _INT_KEYS:
            try:
                typed = int(value)
            except ValueError:
                raise ConfigError(f"{key} needs an integer, got {value!r}", lineno) from None
        else:
            typed = value
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first set on line {out[key][1]})", lineno)
        out[key] = (typed, lineno)
    return out


class _View:
    def __init__(self, entries: dict[str, tuple[object, int]]):
        self.entries = entries
        self.used: set[str] = set()

    def get(self, key: str, default=None):
        self.used.add(key)
        if key in self.entries:
            return self.entries[key][0]
        return default

    def require(self, key: str):
        self.used.add(key)
        if key not in self.entries:
            raise ConfigError(f"missing required key {key!r}")
        return self.entries[key][0]

    def line(self, key: str) -> int | None:
        return self.entries[key][1] if key in self.entries else None


def build_experiment(text: str) -> ExperimentConfig:
    view = _View(parse_config_text(text))

    family = str(view.require("plant.family")).lower()
    bounds = None
    if view.get("plant.alpha1") is not None or view.get("plant.alpha2") is not None:
        if view.get("plant.alpha1") is None or view.get("plant.alpha2") is None:
            raise ConfigError("plant.alpha1 and plant.alpha2 must be given together")
        bounds = (float(view.get("plant.alpha1")), float(view.get("plant.alpha2")))
    try:
        if family == "linear":
            sector = SectorFn.linear(float(view.require("plant.alpha")), bounds)
        elif family == "sinexp":
            sector = SectorFn.sin_exp(
                float(view.require("plant.a")), float(view.require("plant.b_amp")), bounds
            )
        else:
            raise ConfigError(
                f"unknown plant.family {family!r} (expected linear or sinexp)",
                view.line("plant.family"),
            )
        topology_name = str(view.get("plant.topology", "actuator")).lower()
        try:
            topology = {
                "actuator": Topology.ACTUATOR_PERTURBED,
                "nominal": Topology.NOMINAL,
            }[topology_name]
        except KeyError:
            raise ConfigError(
                f"unknown plant.topology {topology_name!r}", view.line("plant.topology")
            ) from None
        plant = PlantSpec(
            sector,
            b=float(view.require("plant.b")),
            epsilon=float(view.get("plant.epsilon", 0.1)),
            topology=topology,
        )

        kind = str(view.require("controller.kind")).lower()
        lam = float(view.require("controller.lambda"))
        if kind == "ng":
            controller = ControllerSpec.ng(lam)
        elif kind == "npi":
            beta_name = str(view.require("controller.beta")).lower()
            if beta_name == "power":
                beta = BetaSpec.power(float(view.require("controller.p")))
            elif beta_name == "expquad":
                beta = BetaSpec.exp_quadratic(
                    float(view.require("controller.c1")), float(view.require("controller.c2"))
                )
            elif beta_name == "identity":
                beta = BetaSpec.identity()
            else:
                raise ConfigError(
                    f"unknown controller.beta {beta_name!r}", view.line("controller.beta")
                )
            controller = ControllerSpec.npi(lam, GainSpec.beta_cos(beta))
        else:
            raise ConfigError(
                f"unknown controller.kind {kind!r} (expected npi or ng)",
                view.line("controller.kind"),
            )

        method_name = str(view.get("sim.method", "rk4")).lower()
        if method_name == "rk4":
            method = RK4Method()
        elif method_name == "rkf45":
            method = RKF45Method(
                rel_tol=float(view.get("sim.rel_tol", 1e-6)),
                abs_tol=float(view.get("sim.abs_tol", 1e-9)),
                dt_min=float(view.get("sim.dt_min", 1e-10)),
                dt_max=float(view.get("sim.dt_max", 1e-2)),
            )
        else:
            raise ConfigError(f"unknown sim.method {method_name!r}", view.line("sim.method"))
        sim = SimConfig(
            dt=float(view.get("sim.dt", 1e-3)),
            t_end=float(view.get("sim.t_end", 30.0)),
            method=method,
            divergence_threshold=float(view.get("sim.divergence_threshold", 1e3)),
            sample_stride=int(view.get("sim.sample_stride", 1)),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e

    return ExperimentConfig(
        plant=plant,
        controller=controller,
        sim=sim,
        y0=float(view.get("init.y0", 0.0)),
        u0=float(view.get("init.u0", 0.0)),
        q0=float(view.get("init.q0", 0.0)),
        csv_path=view.get("output.csv"),
        plot_path=view.get("output.plot"),
    )


def load_experiment(path: str) -> ExperimentConfig:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    return build_experiment(text)
