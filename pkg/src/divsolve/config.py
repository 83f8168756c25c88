"""Run configuration: an INI-style ``key = value`` file with flat sections.

::

    [grid]     nx, ny, lx, ly
    [fields]   a_x, a_y, f   (expressions)  or  a = <preset>;  potential = <expr>;
               compatibilize = true  (gradient case: shift f by c e^{-A} so int e^A f = 0)
    [solver]   backend, coupling, svd_tol, grad_tol, compat_tol, seed, bump_margin, gradient
    [output]   directory, formats
    [sweep]    t_min, t_max, steps
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .divinverse import BACKENDS
from .errors import ConfigError, ExprSyntaxError
from .fieldexpr import parse_field_expr
from .fredholm import SolverOptions
from .perturbation import COUPLINGS

# named coefficient fields (a_x, a_y)
PRESETS = {
    "rotation": ("-y", "x"),
    "centered_rotation": ("-(y - 0.5)", "x - 0.5"),
    "zero": ("0", "0"),
    "grad_x": ("1", "0"),
    "shear": ("sin(3*y) + x", "cos(2*x)*y"),
    # odd about the center: has real singular scalings (t* ~ 10.4 on 12x12)
    "odd_shear": ("2*sin(2*pi*y) + 2*x - 1", "2*cos(pi*x)"),
}

KNOWN = {
    "grid": {"nx", "ny", "lx", "ly"},
    "fields": {"a", "a_x", "a_y", "f", "potential", "compatibilize"},
    "solver": {"backend", "coupling", "svd_tol", "grad_tol", "compat_tol", "seed",
               "bump_margin", "gradient", "method"},
    "output": {"directory", "formats"},
    "sweep": {"t_min", "t_max", "steps"},
}
FORMATS = ("csv", "svg")


@dataclass(frozen=True)
class GridConfig:
    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0


@dataclass(frozen=True)
class FieldConfig:
    a_x: str = "-y"
    a_y: str = "x"
    f: str = "1"
    potential: str | None = None
    compatibilize: bool = False


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    formats: tuple = ("csv",)


@dataclass(frozen=True)
class SweepConfig:
    t_min: float = 0.0
    t_max: float = 20.0
    steps: int = 200


@dataclass(frozen=True)
class SolveConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    fields: FieldConfig = field(default_factory=FieldConfig)
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(delegate_gradient=True))
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_text(self, include_directory: bool = True) -> str:
        s = self.solver
        lines = [
            "[grid]", f"nx = {self.grid.nx}", f"ny = {self.grid.ny}",
            f"lx = {self.grid.lx!r}", f"ly = {self.grid.ly!r}", "",
            "[fields]", f"f = {self.fields.f}",
        ]
        if self.fields.potential is not None:
            lines.append(f"potential = {self.fields.potential}")
        else:
            lines += [f"a_x = {self.fields.a_x}", f"a_y = {self.fields.a_y}"]
        if self.fields.compatibilize:
            lines.append("compatibilize = true")
        lines += [
            "", "[solver]", f"backend = {s.backend}", f"coupling = {s.coupling}",
            f"svd_tol = {s.svd_tol!r}", f"grad_tol = {s.grad_tol!r}",
            f"compat_tol = {s.compat_tol!r}", f"seed = {s.seed}",
            f"bump_margin = {s.bump_margin}",
            f"gradient = {'delegate' if s.delegate_gradient else 'reject'}",
            f"method = {s.method}", "",
            "[output]",
            *([f"directory = {self.output.directory}"] if include_directory else []),
            f"formats = {', '.join(self.output.formats)}", "",
            "[sweep]", f"t_min = {self.sweep.t_min!r}", f"t_max = {self.sweep.t_max!r}",
            f"steps = {self.sweep.steps}",
        ]
        return "\n".join(lines) + "\n"


def _get(sec, name, key, conv):
    raw = sec[key]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot read {raw!r} ({exc})", f"{name}.{key}") from None


def _tol(sec, name, key, default):
    if key not in sec:
        return default
    v = _get(sec, name, key, float)
    if not 0.0 < v < 1.0:
        raise ConfigError(f"tolerance must lie in (0, 1), got {v!r}", f"{name}.{key}")
    return v


def _choice(sec, name, key, options, default):
    if key not in sec:
        return default
    v = sec[key].strip()
    if v not in options:
        raise ConfigError(f"{v!r} is not one of {', '.join(options)}", f"{name}.{key}")
    return v


def parse_config_text(text: str, base: Path | None = None) -> SolveConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}".splitlines()[0]) from None
    for name in cp.sections():
        if name not in KNOWN:
            raise ConfigError(f"unknown section [{name}]", name)
        extra = set(cp[name]) - KNOWN[name]
        if extra:
            raise ConfigError("unknown key", f"{name}.{sorted(extra)[0]}")

    grid = GridConfig()
    if cp.has_section("grid"):
        sec = cp["grid"]
        vals = {}
        for k in ("nx", "ny"):
            if k in sec:
                vals[k] = _get(sec, "grid", k, int)
                if vals[k] < 2:
                    raise ConfigError("need at least 2 cells", f"grid.{k}")
        for k in ("lx", "ly"):
            if k in sec:
                vals[k] = _get(sec, "grid", k, float)
                if not vals[k] > 0:
                    raise ConfigError("length must be positive", f"grid.{k}")
        grid = replace(grid, **vals)

    fields = FieldConfig()
    if cp.has_section("fields"):
        sec = cp["fields"]
        vals = {}
        if "a" in sec:
            preset = sec["a"].strip()
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}",
                                  "fields.a")
            if "a_x" in sec or "a_y" in sec:
                raise ConfigError("give either a preset or a_x/a_y, not both", "fields.a")
            vals["a_x"], vals["a_y"] = PRESETS[preset]
        for k in ("a_x", "a_y", "f", "potential"):
            if k in sec:
                vals[k] = sec[k].strip()
        if "compatibilize" in sec:
            try:
                vals["compatibilize"] = sec.getboolean("compatibilize")
            except ValueError:
                raise ConfigError("expected true or false", "fields.compatibilize") from None
        if "potential" in vals and ("a" in sec or "a_x" in sec or "a_y" in sec):
            raise ConfigError("potential defines a = grad(potential); drop a/a_x/a_y",
                              "fields.potential")
        fields = replace(fields, **vals)
    for key, src in (("a_x", fields.a_x), ("a_y", fields.a_y), ("f", fields.f),
                     ("potential", fields.potential)):
        if src is None:
            continue
        try:
            parse_field_expr(src)
        except ExprSyntaxError as exc:
            raise ConfigError(str(exc), f"fields.{key}") from None

    solver = SolverOptions(delegate_gradient=True)
    if cp.has_section("solver"):
        sec = cp["solver"]
        vals = {
            "svd_tol": _tol(sec, "solver", "svd_tol", solver.svd_tol),
            "grad_tol": _tol(sec, "solver", "grad_tol", solver.grad_tol),
            "compat_tol": _tol(sec, "solver", "compat_tol", solver.compat_tol),
            "backend": _choice(sec, "solver", "backend", BACKENDS, solver.backend),
            "coupling": _choice(sec, "solver", "coupling", COUPLINGS, solver.coupling),
            "method": _choice(sec, "solver", "method", ("auto", "svd"), solver.method),
        }
        if "seed" in sec:
            seed = _get(sec, "solver", "seed", int)
            if not 0 <= seed < 2**64:
                raise ConfigError("seed must be a 64-bit unsigned integer", "solver.seed")
            vals["seed"] = seed
        if "bump_margin" in sec:
            vals["bump_margin"] = _get(sec, "solver", "bump_margin", int)
            if vals["bump_margin"] < 0:
                raise ConfigError("must be >= 0", "solver.bump_margin")
        mode = _choice(sec, "solver", "gradient", ("delegate", "reject"), "delegate")
        vals["delegate_gradient"] = mode == "delegate"
        solver = replace(solver, **vals)

    output = OutputConfig()
    if cp.has_section("output"):
        sec = cp["output"]
        vals = {}
        if "directory" in sec:
            vals["directory"] = sec["directory"].strip()
        if "formats" in sec:
            fm = tuple(x.strip() for x in sec["formats"].split(",") if x.strip())
            bad = [x for x in fm if x not in FORMATS]
            if bad or not fm:
                raise ConfigError(f"formats must be drawn from {', '.join(FORMATS)}",
                                  "output.formats")
            vals["formats"] = fm
        output = replace(output, **vals)
    if base is not None and not Path(output.directory).is_absolute():
        output = replace(output, directory=str(base / output.directory))

    sweep = SweepConfig()
    if cp.has_section("sweep"):
        sec = cp["sweep"]
        vals = {}
        for k in ("t_min", "t_max"):
            if k in sec:
                vals[k] = _get(sec, "sweep", k, float)
        if "steps" in sec:
            vals["steps"] = _get(sec, "sweep", "steps", int)
        sweep = replace(sweep, **vals)
    validate_sweep(sweep)
    return SolveConfig(grid, fields, solver, output, sweep)


def validate_sweep(sweep: SweepConfig):
    if sweep.steps < 1:
        raise ConfigError(f"steps must be >= 1, got {sweep.steps}", "sweep.steps")
    if not (0.0 <= sweep.t_min < sweep.t_max):
        raise ConfigError(f"need 0 <= t_min < t_max, got [{sweep.t_min}, {sweep.t_max}]",
                          "sweep.t_max")


def load_config(path) -> SolveConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_config_text(text, p.parent)
