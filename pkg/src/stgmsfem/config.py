"""Run configuration: TOML files and named presets.

Schema (every key optional; defaults shown by the dataclasses below)::

    [mesh]       nx_coarse, ny_coarse, refine_space, n_slabs, refine_time, t_final,
                 oversample_layers, oversample_fine_layers, oversample_time
    [velocity]   source = "darcy" | "analytic"
                 darcy:    kappa_file | seed, contrast, n_channels, n_inclusions
                 analytic: kind = "uniform" | "rotation" | "shear", vx, vy, omega
    [problem]    u0, g   (expressions in x, y, t)
    [method]     mode = "cg" | "dg", oversampling, L = [...], poly_degrees = [...],
                 compare_L = [...], lambda_L_max, pod_tol, eig_cut
    [output]     dir, cache, cache_dir, threads, dump_levels = [...]
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .expr import parse_expression
from .fe_core import check_mode
from .mesh import MeshConfig


@dataclass(frozen=True)
class VelocityConfig:
    source: str = "darcy"
    kappa_file: str = ""
    seed: int = 0
    contrast: float = 1e4
    n_channels: int = 4
    n_inclusions: int = 12
    kind: str = "uniform"
    vx: float = 1.0
    vy: float = 0.0
    omega: float = 1.0


@dataclass(frozen=True)
class ProblemConfig:
    u0: str = "sin(2*x+2*y)"
    g: str = "sin(2*x+2*y-4*t)"


@dataclass(frozen=True)
class MethodConfig:
    mode: str = "cg"
    oversampling: bool = True
    L: tuple[int, ...] = (1, 3, 5, 7, 10)
    poly_degrees: tuple[int, ...] = (1, 2)
    compare_L: tuple[int, ...] = (8, 27)
    lambda_L_max: int = 20
    pod_tol: float = 1e-8
    eig_cut: float = 1e-10


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    cache: bool = True
    cache_dir: str = ""
    threads: int = 1
    dump_levels: tuple[int, ...] = (-1,)  # fine time levels; negative counts from the end


@dataclass(frozen=True)
class RunConfig:
    name: str = "custom"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    velocity: VelocityConfig = field(default_factory=VelocityConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self, base: Path | None = None) -> "RunConfig":
        check_mode(self.method.mode)
        if self.velocity.source not in ("darcy", "analytic"):
            raise ValueError(f"velocity.source must be 'darcy' or 'analytic', not {self.velocity.source!r}")
        if self.velocity.kappa_file:
            p = Path(self.velocity.kappa_file)
            if base is not None and not p.is_absolute():
                p = base / p
            if not p.exists():
                raise FileNotFoundError(f"kappa file {p} does not exist")
        for key in ("u0", "g"):
            parse_expression(getattr(self.problem, key))
        if "t" in parse_expression(self.problem.u0).variables:
            raise ValueError("u0 must not depend on t")
        if any(L < 1 for L in self.method.L + self.method.compare_L):
            raise ValueError("L values must be >= 1")
        if any(s < 1 for s in self.method.poly_degrees):
            raise ValueError("polynomial degrees must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "RunConfig":
        """``cfg.replace(method={"mode": "dg"})`` updates individual keys of sections."""
        updates = {}
        for name, values in sections.items():
            if isinstance(values, dict):
                updates[name] = _update(getattr(self, name), values)
            else:
                updates[name] = values
        return dataclasses.replace(self, **updates)


def _coerce(cls, key: str, value):
    ftypes = {f.name: f.type for f in fields(cls)}
    if key not in ftypes:
        raise ValueError(f"unknown key {key!r} in [{cls.__name__}]")
    if isinstance(value, list):
        value = tuple(value)
    return value


def _update(obj, values: dict):
    return dataclasses.replace(obj, **{k: _coerce(type(obj), k, v) for k, v in values.items()})


PRESETS: dict[str, dict] = {
    "example1-desk": {},
    "example2-desk": {"problem": {"u0": "1-x*y", "g": "1"}},
    "constant-sanity": {
        "mesh": {"nx_coarse": 4, "ny_coarse": 4, "refine_space": 5, "n_slabs": 4, "t_final": 0.04},
        "problem": {"u0": "1", "g": "1"},
        "method": {"L": (1, 3), "compare_L": (), "poly_degrees": (1,), "lambda_L_max": 5},
    },
    "example1-full": {
        "mesh": {"nx_coarse": 10, "ny_coarse": 10, "refine_space": 10, "n_slabs": 80},
        "method": {"L": (1, 3, 5, 7, 10, 15, 20, 25)},
    },
    "example2-full": {
        "mesh": {"nx_coarse": 10, "ny_coarse": 10, "refine_space": 10, "n_slabs": 80},
        "problem": {"u0": "1-x*y", "g": "1"},
        "method": {"L": (1, 3, 5, 7, 10, 15, 20, 25)},
    },
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return RunConfig(name=name).replace(**PRESETS[name]).validate()


def from_dict(data: dict, base: Path | None = None) -> RunConfig:
    data = dict(data)
    cfg = preset(data.pop("preset")) if "preset" in data else RunConfig()
    name = data.pop("name", cfg.name)
    sections = {}
    for key, values in data.items():
        if key not in ("mesh", "velocity", "problem", "method", "output"):
            raise ValueError(f"unknown section [{key}]")
        if not isinstance(values, dict):
            raise ValueError(f"[{key}] must be a table")
        sections[key] = values
    return dataclasses.replace(cfg.replace(**sections), name=name).validate(base)


def load_config(source: str | Path) -> RunConfig:
    """A TOML file path or a preset name."""
    if str(source) in PRESETS:
        return preset(str(source))
    path = Path(source)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    data.setdefault("name", path.stem)
    return from_dict(data, path.parent)
