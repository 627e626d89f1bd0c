"""Run configuration: a line-based ``key = value`` format with dotted sections.

Example::

    # comments start with '#'
    surface.kind = unit-sphere
    surface.level = 3
    surface.velocity = rotation
    potential.kind = smooth-quartic
    model = CH1
    initial.kind = expression
    initial.expression = 0.2 * sin(3 * x) * cos(2 * z)
    scheme.dt = 1e-3
    scheme.t_end = 0.1

Unknown keys and duplicated keys are errors.  Vector values are written as
whitespace-separated numbers.  Initial-condition expressions use the
variables ``x, y, z``, the constants ``pi, e``, numbers, ``+ - * / **``,
parentheses and the functions in :data:`EXPR_FUNCTIONS`; smooth-custom
potentials use the same grammar with the variable ``r``.
"""
import ast
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .geometry import (AnisotropicScaling, EvolvingSurface, RadialScaling, Stationary,
                       TangentialRotation, make_surface)
from .potentials import LogPotential, ObstaclePenalty, Potential, SmoothPotential
from .solver import MODELS, SPLITTINGS, SchemeConfig

SURFACE_KINDS = ("unit-sphere", "sphere", "off")
VELOCITY_KINDS = ("stationary", "rotation", "radial-linear", "radial-exponential", "anisotropic-linear")
POTENTIAL_KINDS = ("smooth-quartic", "smooth-custom", "log", "obstacle")
INITIAL_KINDS = ("constant", "expression", "file")

EXPR_FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "sign": np.sign,
}
EXPR_CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


# ------------------------------------------------------------ expressions

def compile_expression(text, variables=("x", "y", "z")):
    """Parse ``text`` into a callable of the named variables.

    Only the arithmetic grammar described in the module docstring is
    accepted; anything else (attributes, subscripts, keywords, unknown
    names) raises :class:`ConfigError`.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    _check_node(tree.body, set(variables), text)

    def evaluate(*args):
        env = dict(zip(variables, args))
        with np.errstate(all="ignore"):
            return _eval(tree.body, env)

    evaluate.source = text.strip()
    return evaluate


def _check_node(node, names, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id not in names and node.id not in EXPR_CONSTANTS:
            raise ConfigError(f"unknown name {node.id!r} in expression {text!r}")
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check_node(node.left, names, text)
        _check_node(node.right, names, text)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check_node(node.operand, names, text)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in EXPR_FUNCTIONS and len(node.args) == 1 and not node.keywords:
        _check_node(node.args[0], names, text)
        return
    raise ConfigError(f"unsupported construct {type(node).__name__} in expression {text!r}")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else EXPR_CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    return EXPR_FUNCTIONS[node.func.id](_eval(node.args[0], env))


# ---------------------------------------------------------------- schema

@dataclass(frozen=True)
class SurfaceConfig:
    kind: str = "unit-sphere"
    level: int = 3
    radius: float = 1.0
    mesh_path: Optional[str] = None
    velocity: str = "stationary"
    omega: float = 1.0
    axis: Tuple[float, ...] = (0.0, 0.0, 1.0)
    end_radius: float = 0.5
    rate: float = 1.0
    end_scales: Tuple[float, ...] = (1.0, 1.0, 1.0)
    ramp_time: Optional[float] = None       # defaults to scheme.t_end
    t_final: Optional[float] = None         # defaults to scheme.t_end


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "smooth-quartic"
    theta: float = 0.5
    delta: float = 0.0
    reference_delta: float = 1e-3           # obstacle reference for theta sweeps
    alpha: Tuple[float, ...] = (0.25, 3.0, 0.25, 1.0)
    beta: Tuple[float, ...] = (0.0, 0.0, 0.25, 0.0, 0.0)
    q: float = 4.0
    f1: Optional[str] = None
    df1: Optional[str] = None
    d2f1: Optional[str] = None
    f2: Optional[str] = None
    df2: Optional[str] = None
    d2f2: Optional[str] = None


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "constant"
    value: float = 0.0
    expression: Optional[str] = None
    path: Optional[str] = None
    noise: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SchemeSection:
    dt: float = 1e-3
    t_end: float = 0.1
    splitting: str = "convex-concave"
    newton_tol: float = 1e-12
    newton_max: int = 50
    flow_step: float = 1e-3


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "output"
    every: int = 1
    snapshots: bool = False
    vtk: bool = False


@dataclass(frozen=True)
class RunConfig:
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    model: str = "CH1"
    initial: InitialConfig = field(default_factory=InitialConfig)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", compare=False)

    # ---- builders
    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def scheme_config(self) -> SchemeConfig:
        s = self.scheme
        return SchemeConfig(dt=s.dt, t_end=s.t_end, model=self.model, splitting=s.splitting,
                            newton_tol=s.newton_tol, newton_max=s.newton_max,
                            flow_step=s.flow_step, output_every=self.output.every)

    def build_velocity(self):
        s = self.surface
        ramp = s.ramp_time if s.ramp_time is not None else self.scheme.t_end
        r0 = s.radius if s.kind == "sphere" else 1.0
        if s.velocity == "stationary":
            return Stationary()
        if s.velocity == "rotation":
            return TangentialRotation(s.axis, s.omega)
        if s.velocity == "radial-linear":
            return RadialScaling.linear(r0, s.end_radius, ramp)
        if s.velocity == "radial-exponential":
            return RadialScaling.exponential(s.rate, r0)
        return AnisotropicScaling.linear(s.end_scales, ramp)

    def build_surface(self) -> EvolvingSurface:
        s = self.surface
        t_final = s.t_final if s.t_final is not None else self.scheme.t_end
        path = self.resolve(s.mesh_path) if s.mesh_path else None
        return make_surface(s.kind, s.level, self.build_velocity(), t_final, s.radius, path)

    def build_potential(self) -> Potential:
        p = self.potential
        if p.kind == "smooth-quartic":
            return SmoothPotential.quartic(p.alpha, p.beta, p.q)
        if p.kind == "smooth-custom":
            funcs = [compile_expression(getattr(p, k), ("r",))
                     for k in ("f1", "df1", "d2f1", "f2", "df2", "d2f2")]
            return SmoothPotential(*funcs, alpha=tuple(p.alpha), beta=tuple(p.beta), q=p.q,
                                   name="smooth-custom")
        if p.kind == "log":
            return LogPotential(p.theta, p.delta)
        return ObstaclePenalty(p.delta)

    def initial_values(self, vertices):
        """Vertex samples of the initial order parameter on the reference mesh."""
        ini = self.initial
        if ini.kind == "constant":
            u = np.full(len(vertices), float(ini.value))
        elif ini.kind == "expression":
            f = compile_expression(ini.expression)
            x, y, z = np.asarray(vertices, dtype=float).T
            u = np.broadcast_to(np.asarray(f(x, y, z), dtype=float), (len(vertices),)).copy()
        else:
            u = np.loadtxt(self.resolve(ini.path), dtype=float, ndmin=1)
            if u.shape != (len(vertices),):
                raise ConfigError(f"initial.path: expected {len(vertices)} values, found {u.size}")
        if ini.noise:
            u = u + ini.noise * np.random.default_rng(ini.seed).uniform(-1.0, 1.0, len(u))
        if not np.all(np.isfinite(u)):
            raise ConfigError("initial condition evaluates to non-finite values")
        return u

    def with_value(self, key, value):
        """Copy with one dotted key replaced (value already typed)."""
        section, _, name = key.partition(".")
        if not name:
            return replace(self, **{section: value})
        return replace(self, **{section: replace(getattr(self, section), **{name: value})})


_SECTIONS = {"surface": SurfaceConfig, "potential": PotentialConfig, "initial": InitialConfig,
             "scheme": SchemeSection, "output": OutputConfig}
_TOP_LEVEL = ("model",)


def _field_types():
    out = {}
    for sec, cls in _SECTIONS.items():
        for f in fields(cls):
            out[f"{sec}.{f.name}"] = f.type
    out["model"] = str
    return out


_TYPES = _field_types()
KNOWN_KEYS = tuple(_TYPES)


def _convert(key, raw):
    typ = _TYPES[key]
    text = raw.strip()
    optional = "Optional" in str(typ)
    if optional and text.lower() in ("none", ""):
        return None
    base = typ.__args__[0] if optional else typ
    try:
        if base is bool:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is str:
            return text
        # Tuple[float, ...]
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {getattr(base, '__name__', 'a number list')}") from None


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def parse_text(text, base_dir=".", source="<config>") -> RunConfig:
    """Parse configuration text; errors carry ``source:line``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    sections = {sec: {} for sec in _SECTIONS}
    top = {}
    for key, v in values.items():
        sec, _, name = key.partition(".")
        if name:
            sections[sec][name] = v
        else:
            top[sec] = v
    cfg = RunConfig(**{sec: _SECTIONS[sec](**kw) for sec, kw in sections.items()}, **top,
                    base_dir=base_dir)
    validate(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate the configuration file at ``path``.

    Relative file references inside it are resolved against its directory.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, os.path.dirname(os.path.abspath(path)), str(path))


def serialize(cfg: RunConfig) -> str:
    """Emit every key (defaults included); :func:`parse_text` reads it back to an equal config."""
    lines = [f"model = {cfg.model}"]
    for sec in _SECTIONS:
        obj = getattr(cfg, sec)
        for f in fields(obj):
            lines.append(f"{sec}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: RunConfig):
    """Check ranges and cross-field consistency; raises :class:`ConfigError` naming the key."""
    s, p, ini, sch, out = cfg.surface, cfg.potential, cfg.initial, cfg.scheme, cfg.output
    _require(s.kind in SURFACE_KINDS, "surface.kind", f"expected one of {SURFACE_KINDS}, got {s.kind!r}")
    _require(0 <= s.level <= 7, "surface.level", "must lie in [0, 7]")
    _require(s.radius > 0, "surface.radius", "must be positive")
    if s.kind == "off":
        _require(s.mesh_path is not None, "surface.mesh_path", "required for surface.kind = off")
        _require(os.path.isfile(cfg.resolve(s.mesh_path)), "surface.mesh_path",
                 f"file not found: {s.mesh_path}")
    _require(s.velocity in VELOCITY_KINDS, "surface.velocity",
             f"expected one of {VELOCITY_KINDS}, got {s.velocity!r}")
    _require(len(s.axis) == 3 and any(s.axis), "surface.axis", "needs three numbers, not all zero")
    _require(len(s.end_scales) == 3 and min(s.end_scales) > 0, "surface.end_scales",
             "needs three positive numbers")
    _require(s.end_radius > 0, "surface.end_radius", "must be positive")
    _require(s.ramp_time is None or s.ramp_time > 0, "surface.ramp_time", "must be positive")
    _require(s.t_final is None or s.t_final > 0, "surface.t_final", "must be positive")

    _require(p.kind in POTENTIAL_KINDS, "potential.kind", f"expected one of {POTENTIAL_KINDS}, got {p.kind!r}")
    if p.kind == "log":
        _require(0 < p.theta < 1, "potential.theta", "must lie in (0, 1)")
        _require(0 <= p.delta < 1, "potential.delta", "log regularisation must lie in [0, 1)")
    if p.kind == "obstacle":
        _require(0 < p.delta < 1, "potential.delta", "penalty parameter must lie in (0, 1)")
    _require(0 < p.reference_delta < 1, "potential.reference_delta", "must lie in (0, 1)")
    _require(len(p.alpha) == 4, "potential.alpha", "needs four constants")
    _require(len(p.beta) == 5, "potential.beta", "needs five constants")
    _require(p.q >= 1, "potential.q", "must be >= 1")
    if p.kind == "smooth-custom":
        for k in ("f1", "df1", "d2f1", "f2", "df2", "d2f2"):
            expr = getattr(p, k)
            _require(expr is not None, f"potential.{k}", "required for smooth-custom")
            try:
                compile_expression(expr, ("r",))
            except ConfigError as exc:
                raise ConfigError(f"potential.{k}: {exc}") from None

    _require(cfg.model in MODELS, "model", f"expected one of {MODELS}, got {cfg.model!r}")
    _require((cfg.model == "CH1_obstacle") == (p.kind == "obstacle"), "model",
             "CH1_obstacle goes with potential.kind = obstacle and vice versa")

    _require(ini.kind in INITIAL_KINDS, "initial.kind", f"expected one of {INITIAL_KINDS}, got {ini.kind!r}")
    if ini.kind == "expression":
        _require(ini.expression is not None, "initial.expression", "required for initial.kind = expression")
        try:
            compile_expression(ini.expression)
        except ConfigError as exc:
            raise ConfigError(f"initial.expression: {exc}") from None
    if ini.kind == "file":
        _require(ini.path is not None, "initial.path", "required for initial.kind = file")
        _require(os.path.isfile(cfg.resolve(ini.path)), "initial.path", f"file not found: {ini.path}")
    _require(ini.noise >= 0, "initial.noise", "must be >= 0")

    _require(sch.dt > 0, "scheme.dt", "must be positive")
    _require(sch.t_end > 0, "scheme.t_end", "must be positive")
    _require(sch.t_end >= sch.dt, "scheme.t_end", "must be at least one time step")
    _require(sch.splitting in SPLITTINGS, "scheme.splitting", f"expected one of {SPLITTINGS}")
    _require(sch.newton_tol > 0, "scheme.newton_tol", "must be positive")
    _require(sch.newton_max >= 1, "scheme.newton_max", "must be >= 1")
    _require(sch.flow_step > 0, "scheme.flow_step", "must be positive")
    _require(out.every >= 1, "output.every", "must be >= 1")
    return cfg
