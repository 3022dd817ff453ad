"""Experiment configuration read from a YAML file.

Every section and key is checked against a fixed schema; unknown keys and
bad values raise :class:`ConfigError` with the offending line.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np
import yaml

from . import checkpoint, qtensor
from .grid import Grid
from .qtensor import PotentialParams, derive_constants
from .timestepper import SolverConfig, State


class ConfigError(ValueError):
    pass


def _float(v):
    if isinstance(v, bool):
        raise TypeError("expected a number")
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", ".inf"):
        return math.inf
    return float(v)


def _int(v):
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise TypeError("expected an integer")
    return int(float(v))


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true/false")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _list_of(conv):
    def f(v):
        if not isinstance(v, list):
            raise TypeError("expected a list")
        return [conv(x) for x in v]
    return f


def _opt(conv):
    return lambda v: None if v is None else conv(v)


SCHEMA = {
    "grid": {"dim": _int, "n": _int},
    "solver": {"dt": _float, "t_end": _float, "scheme": _str, "dealias": _bool,
               "record_every": _int, "viscosity": _float, "relaxation": _float,
               "cfl": _float, "checkpoint_every": _int},
    "potential": {"a": _float, "b": _float, "c": _float, "r": _opt(_float),
                  "c1": _opt(_float), "lam": _opt(_float)},
    "initial": {"family": _str, "seed": _int, "band": _int, "amplitude": _float,
                "amplitude_fraction": _float, "u_amplitude": _float,
                "wavevector": _list_of(_int), "path": _str},
    "diagnostics": {"q_list": _list_of(_float), "balance": _bool},
    "output": {"dir": _str},
    "depend": {"sizes": _list_of(_float), "c_abs": _float, "seed": _int,
               "snapshot_every": _int},
    "criterion": {"centers": _list_of(_list_of(_float)), "t0": _opt(_float),
                  "rho": _float, "levels": _int, "theta": _float, "eps1": _float,
                  "eps0": _float, "snapshot_every": _int, "besov_every": _int},
    "convergence": {"dt0": _float, "t_end": _float, "ns": _list_of(_int)},
}

FAMILIES = ("uniaxial_mode", "random_bandlimited", "from_checkpoint")


@dataclass
class InitialSpec:
    family: str = "uniaxial_mode"
    seed: int = 0
    band: int = 4
    amplitude: float = None
    amplitude_fraction: float = None
    u_amplitude: float = 0.0
    wavevector: list = None
    path: str = None


@dataclass
class ExperimentConfig:
    dim: int = 2
    n: int = 64
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "IMEX2"
    dealias: bool = True
    record_every: int = 10
    viscosity: float = 1.0
    relaxation: float = 1.0
    cfl: float = 0.5
    checkpoint_every: int = 0
    potential: PotentialParams = None
    initial: InitialSpec = field(default_factory=InitialSpec)
    q_list: tuple = (1.0, 2.0, 4.0, math.inf)
    balance: bool = True
    out_dir: str = "out"
    depend: dict = field(default_factory=lambda: {
        "sizes": [1e-3, 1e-4], "c_abs": 1.0, "seed": 1, "snapshot_every": 20})
    criterion: dict = field(default_factory=lambda: {
        "centers": None, "t0": None, "rho": 0.5, "levels": 4, "theta": 0.5,
        "eps1": 0.1, "eps0": 0.1, "snapshot_every": 5, "besov_every": 50})
    convergence: dict = field(default_factory=lambda: {
        "dt0": 1e-3, "t_end": 1.0, "ns": [32, 64]})

    def solver(self, **over):
        kw = dict(dt=self.dt, t_end=self.t_end, potential=self.potential,
                  scheme=self.scheme, dealias=self.dealias,
                  record_every=self.record_every, viscosity=self.viscosity,
                  relaxation=self.relaxation, cfl=self.cfl)
        kw.update(over)
        return SolverConfig(**kw)

    def grid(self, workers=1):
        return Grid(self.dim, self.n, workers=workers)

    def q0_amplitude(self):
        """Requested ``||Q0||_inf``; ``None`` for checkpoint data."""
        ini = self.initial
        if ini.amplitude_fraction is not None:
            return ini.amplitude_fraction * self.potential.r
        return ini.amplitude


def build_potential(a, b, c, r=None, c1=None, lam=None):
    """Potential with safe-ball constants; explicit values override.

    ``c = 0`` is allowed for linear test problems: the constants do not
    depend on ``c``.
    """
    if a > 0 and c >= 0:
        p = replace(derive_constants(a, b, 1.0), c=float(c))
    else:
        p = PotentialParams(float(a), float(b), float(c))
    over = {k: float(v) for k, v in (("r", r), ("c1", c1), ("lam", lam)) if v is not None}
    return replace(p, **over)


def _where(node):
    return f"line {node.start_mark.line + 1}"


def _walk(root, path):
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{path}: top level must be a mapping")
    out = {}
    for knode, vnode in root.value:
        sec = knode.value
        if sec not in SCHEMA:
            raise ConfigError(f"{path}:{_where(knode)}: unknown section '{sec}'"
                              f" (allowed: {', '.join(SCHEMA)})")
        if sec in out:
            raise ConfigError(f"{path}:{_where(knode)}: duplicate section '{sec}'")
        if not isinstance(vnode, yaml.MappingNode):
            raise ConfigError(f"{path}:{_where(vnode)}: section '{sec}' must be a mapping")
        keys = {}
        for kn, vn in vnode.value:
            key = kn.value
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{path}:{_where(kn)}: unknown key '{sec}.{key}'"
                                  f" (allowed: {', '.join(SCHEMA[sec])})")
            if key in keys:
                raise ConfigError(f"{path}:{_where(kn)}: duplicate key '{sec}.{key}'")
            raw = yaml.safe_load(yaml.serialize(vn))
            try:
                keys[key] = SCHEMA[sec][key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{_where(vn)}: bad value for '{sec}.{key}':"
                                  f" {raw!r} ({exc})") from None
        out[sec] = keys
    return out


def parse_config(text, path="<config>"):
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML syntax error: {exc}") from None
    data = _walk(root, path) if root is not None else {}
    cfg = ExperimentConfig()
    g = data.get("grid", {})
    s = data.get("solver", {})
    for k, v in {**g, **s}.items():
        setattr(cfg, k, v)
    pot = data.get("potential", {})
    try:
        cfg.potential = build_potential(pot.get("a", 1.0), pot.get("b", 1.0),
                                        pot.get("c", 1.0), pot.get("r"),
                                        pot.get("c1"), pot.get("lam"))
        if "initial" in data:
            cfg.initial = InitialSpec(**data["initial"])
        d = data.get("diagnostics", {})
        if "q_list" in d:
            cfg.q_list = tuple(d["q_list"])
        cfg.balance = d.get("balance", cfg.balance)
        cfg.out_dir = data.get("output", {}).get("dir", cfg.out_dir)
        for sec in ("depend", "criterion", "convergence"):
            getattr(cfg, sec).update(data.get(sec, {}))
        validate(cfg)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def validate(cfg):
    Grid(cfg.dim, cfg.n)
    cfg.solver().n_steps
    ini = cfg.initial
    if ini.family not in FAMILIES:
        raise ConfigError(f"initial.family must be one of {FAMILIES}, got {ini.family!r}")
    if ini.amplitude is not None and ini.amplitude_fraction is not None:
        raise ConfigError("give initial.amplitude or initial.amplitude_fraction, not both")
    if ini.family == "from_checkpoint" and not ini.path:
        raise ConfigError("initial.path is required for from_checkpoint")
    if ini.family != "from_checkpoint" and cfg.q0_amplitude() is None:
        raise ConfigError("initial.amplitude (or amplitude_fraction) is required")
    if ini.wavevector is not None and len(ini.wavevector) != cfg.dim:
        raise ConfigError(f"initial.wavevector needs {cfg.dim} entries")
    if ini.band < 1:
        raise ConfigError("initial.band must be >= 1")
    if any(q < 1 for q in cfg.q_list):
        raise ConfigError("diagnostics.q_list entries must be >= 1")
    if cfg.checkpoint_every < 0:
        raise ConfigError("solver.checkpoint_every must be >= 0")
    if not cfg.depend["sizes"]:
        raise ConfigError("depend.sizes must be nonempty")
    if cfg.depend["snapshot_every"] < 1 or cfg.criterion["snapshot_every"] < 1:
        raise ConfigError("snapshot_every must be >= 1")


# -- initial conditions -----------------------------------------------------

def _sup_scale(grid, f, target):
    m = float(np.max(grid.magnitude(f)))
    return f * (target / m) if m > 0 else f


def _l2_scale(grid, f, target):
    m = grid.l2_norm(f)
    return f * (target / m) if m > 0 else f


def random_tensor_field(grid, rng, band, sup):
    q = grid.band_limit(rng.standard_normal((5,) + grid.shape), band)
    return _sup_scale(grid, q, sup)


def random_velocity_field(grid, rng, band, l2):
    u = grid.band_limit(rng.standard_normal((grid.dim,) + grid.shape), band)
    u = grid.leray_project(u)
    u = u - grid.mean(u).reshape((grid.dim,) + (1,) * grid.dim)
    return _l2_scale(grid, u, l2)


def initial_state(cfg, grid, seed=None):
    ini = cfg.initial
    if ini.family == "from_checkpoint":
        state, _ = checkpoint.load(ini.path)
        if state.q.shape[1:] != grid.shape or state.u.shape[0] != grid.dim:
            raise ConfigError(f"checkpoint {ini.path} does not match grid {grid}")
        return State(0.0, state.u, state.q)
    amp = cfg.q0_amplitude()
    if ini.family == "uniaxial_mode":
        kv = ini.wavevector or [1] + [0] * (grid.dim - 1)
        phase = sum(k * x for k, x in zip(kv, grid.x))
        q = np.multiply.outer(qtensor.UNIAXIAL, amp * np.sin(phase))
        u = np.zeros((grid.dim,) + grid.shape)
        if ini.u_amplitude:
            u[1] = ini.u_amplitude * np.sin(grid.x[0])
        return State(0.0, u, q)
    rng = np.random.default_rng(ini.seed if seed is None else seed)
    q = random_tensor_field(grid, rng, ini.band, amp)
    u = random_velocity_field(grid, rng, ini.band, ini.u_amplitude)
    return State(0.0, u, q)
