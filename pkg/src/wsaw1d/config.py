"""Run configuration: one YAML file as the single source of truth.

A RunConfig captures everything a CLI invocation depends on (interaction,
grid, tolerances, sweep points, MC settings, seed), so a run can be
reproduced from the config file alone.  parse -> serialize -> parse is
the identity.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml

from .discretize import QuadGrid, QuadratureRule, build_grid, figure1_grid
from .model import PhiSpec

GRID_PRESETS = ("default", "figure1")
_QUAD_NAMES = {
    "gauss-legendre": QuadratureRule.GAUSS_LEGENDRE,
    "trapezoid": QuadratureRule.TRAPEZOID,
}


@dataclass(frozen=True)
class RunConfig:
    # interaction: list of (power, coefficient) pairs
    phi_terms: tuple[tuple[int, float], ...] = ((2, 1.0),)
    # grid
    grid_preset: str = "default"
    s_max: float = 100.0
    n_panels: int = 100
    nodes_per_panel: int = 10
    quadrature: str = "gauss-legendre"
    # tolerances
    eigen_residual_tol: float = 1e-10
    newton_tol: float = 1e-12
    fixed_point_tol: float = 1e-10
    # sweep
    g_values: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0, 10.0)
    cn_terms: int = 50
    # Monte Carlo
    mc_T: tuple[float, ...] = (25.0, 50.0, 100.0)
    mc_samples: int = 100000
    seed: int = 0
    # output
    out: str | None = None

    def __post_init__(self):
        PhiSpec.from_pairs(self.phi_terms)  # validates
        if self.grid_preset not in GRID_PRESETS:
            raise ValueError(f"grid_preset must be one of {GRID_PRESETS}")
        if self.quadrature not in _QUAD_NAMES:
            raise ValueError(f"quadrature must be one of {sorted(_QUAD_NAMES)}")
        for name in ("eigen_residual_tol", "newton_tol", "fixed_point_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.s_max <= 0 or self.n_panels < 1 or self.nodes_per_panel < 1:
            raise ValueError("grid settings must be positive")
        if any(g <= 0 for g in self.g_values):
            raise ValueError("g_values must be positive")
        if self.cn_terms < 1 or self.mc_samples < 1:
            raise ValueError("cn_terms and mc_samples must be positive")
        if any(T <= 0 for T in self.mc_T):
            raise ValueError("mc_T entries must be positive")

    def phi(self) -> PhiSpec:
        return PhiSpec.from_pairs(self.phi_terms)

    def grid(self) -> QuadGrid:
        if self.grid_preset == "figure1":
            return figure1_grid(self.s_max)
        rule = _QUAD_NAMES[self.quadrature]
        if rule is QuadratureRule.TRAPEZOID:
            return build_grid(self.s_max, self.n_panels, rule=rule)
        return build_grid(self.s_max, self.n_panels, self.nodes_per_panel, rule=rule)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["phi_terms"] = [list(pair) for pair in self.phi_terms]
        d["g_values"] = list(self.g_values)
        d["mc_T"] = list(self.mc_T)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValueError("config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "phi_terms" in kwargs:
            kwargs["phi_terms"] = tuple(
                (int(p), float(c)) for p, c in kwargs["phi_terms"]
            )
        for key in ("g_values", "mc_T"):
            if key in kwargs:
                kwargs[key] = tuple(float(v) for v in kwargs[key])
        return cls(**kwargs)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), default_flow_style=False, sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(text) or {})

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml())
