"""Run configuration: a TOML document, validated key by key.

The grammar is described in docs/config_grammar.md.  Every table has a fixed
key set; anything else is rejected with the dotted path of the offending key.
"""

from dataclasses import asdict, dataclass, field, fields, replace
import math
import re

import tomli
import tomli_w

from cbdi.errors import CbdiError, ParseError, ValidationError
from cbdi.mechanisms.jumps import measure_from_description
from cbdi.mechanisms.mechanism import Mechanism, power_mechanism

SMALL_JUMP_MODES = ("Drop", "GaussianCorrection")
METHODS = ("auto", "grid", "closed")


@dataclass(frozen=True)
class MechanismSpec:
    """Either form = "power" with terms, or form = "lk" with the quadruplet."""

    form: str = "power"
    terms: tuple = ()
    diffusion: float = 0.0
    drift: float = 0.0
    killing: float = 0.0
    jumps: dict = field(default_factory=lambda: {"family": "null"})

    def build(self):
        if self.form == "power":
            return power_mechanism(self.terms)
        return Mechanism(measure_from_description(self.jumps), self.diffusion, self.drift, self.killing)

    def as_dict(self):
        if self.form == "power":
            return {"form": "power", "terms": [list(t) for t in self.terms]}
        return {
            "form": "lk",
            "diffusion": self.diffusion,
            "drift": self.drift,
            "killing": self.killing,
            "jumps": self.jumps,
        }


@dataclass(frozen=True)
class ClassifyBlock:
    tau: float = 0.05
    method: str = "auto"
    points_per_decade: int = 64
    decades: int = 8
    tolerance: float = 0.02


@dataclass(frozen=True)
class PhaseBlock:
    alpha: tuple = (0.5,)
    ratio_start: float = 0.3
    ratio_stop: float = 1.2
    ratio_count: int = 64
    c_hat: float = 1.0
    tau: float = None  # falls back to classify.tau


@dataclass(frozen=True)
class SimBlock:
    dt: float = 1e-3
    paths: int = 10_000
    epsilon: float = 1e-2
    small_jump_mode: str = "GaussianCorrection"
    jump_cap: float = math.inf
    x_floor: float = 1e-8
    x_ceil: float = 1e12


@dataclass(frozen=True)
class SimulateBlock:
    x0: float = 1.0
    times: tuple = (1.0,)
    y: tuple = (1.0,)
    k: float = 3.0
    abs_tol: float = 1e-3  # discretisation allowance added to k standard errors


@dataclass(frozen=True)
class DualityBlock:
    x: tuple = (0.5, 1.0, 2.0)
    y: tuple = (0.5, 1.0, 2.0)
    times: tuple = (0.5, 1.0)
    k: float = 3.0
    min_pass_fraction: float = 17 / 18


@dataclass(frozen=True)
class RunConfig:
    psi: MechanismSpec = None
    psi_hat: MechanismSpec = None
    seed: int = 0
    out: str = None
    classify: ClassifyBlock = field(default_factory=ClassifyBlock)
    phase: PhaseBlock = field(default_factory=PhaseBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    duality: DualityBlock = field(default_factory=DualityBlock)

    def with_overrides(self, seed=None, paths=None, dt=None, out=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if paths is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, paths=int(paths)))
        if dt is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, dt=float(dt)))
        if out is not None:
            cfg = replace(cfg, out=str(out))
        validate(cfg)
        return cfg

    def mechanisms(self):
        for name in ("psi", "psi_hat"):
            if getattr(self, name) is None:
                raise ValidationError(f"missing [{name}] table", name)
        try:
            return self.psi.build(), self.psi_hat.build()
        except CbdiError as exc:
            raise ValidationError(f"invalid mechanism: {exc}") from exc


# -- parsing ----------------------------------------------------------------------------

_LOCATION = re.compile(r"at line (\d+), column (\d+)")


def parse_config(text):
    """RunConfig from a TOML document; ParseError with line/column or ValidationError."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        match = _LOCATION.search(str(exc))
        if match:
            line, column = int(match.group(1)), int(match.group(2))
        else:
            # tomli reports errors at the end of input without a position
            lines = text.split("\n")
            line, column = len(lines), len(lines[-1]) + 1
        message = re.sub(r"\s*\((at line \d+, column \d+|at end of document)\)", "", str(exc))
        raise ParseError(message, line, column) from exc
    cfg = from_dict(doc)
    validate(cfg)
    return cfg


def load_config(path):
    with open(path, "rb") as handle:
        raw = handle.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"configuration is not UTF-8: {exc}") from exc
    return parse_config(text)


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ValidationError(f"{where or 'document'} must be a table", where)
    for key in table:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise ValidationError(f"unknown key {path!r}", path)


def _block(cls, table, where, tuples=()):
    names = {f.name for f in fields(cls)}
    _check_keys(table, names, where)
    values = {}
    for key, value in table.items():
        values[key] = tuple(value) if key in tuples else value
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(f"bad value in [{where}]: {exc}", where) from exc


_MECHANISM_KEYS = {"form", "terms", "diffusion", "drift", "killing", "jumps"}


def _mechanism(table, where):
    _check_keys(table, _MECHANISM_KEYS, where)
    form = table.get("form", "power")
    if form == "power":
        extra = set(table) - {"form", "terms"}
        if extra:
            key = f"{where}.{sorted(extra)[0]}"
            raise ValidationError(f"key {key!r} does not belong to the power form", key)
        terms = table.get("terms", [])
        if not all(isinstance(t, list) and len(t) == 2 for t in terms):
            raise ValidationError(f"{where}.terms must be a list of [coef, exponent] pairs", f"{where}.terms")
        return MechanismSpec("power", tuple((float(c), float(e)) for c, e in terms))
    if form == "lk":
        if "terms" in table:
            raise ValidationError(f"key '{where}.terms' does not belong to the lk form", f"{where}.terms")
        return MechanismSpec(
            "lk",
            (),
            float(table.get("diffusion", 0.0)),
            float(table.get("drift", 0.0)),
            float(table.get("killing", 0.0)),
            table.get("jumps", {"family": "null"}),
        )
    raise ValidationError(f"{where}.form must be 'power' or 'lk'", f"{where}.form")


def from_dict(doc):
    top = {f.name for f in fields(RunConfig)}
    _check_keys(doc, top, "")
    kwargs = {}
    for name in ("psi", "psi_hat"):
        if name in doc:
            kwargs[name] = _mechanism(doc[name], name)
    if "seed" in doc:
        kwargs["seed"] = doc["seed"]
    if "out" in doc:
        kwargs["out"] = doc["out"]
    kwargs["classify"] = _block(ClassifyBlock, doc.get("classify", {}), "classify")
    kwargs["phase"] = _block(PhaseBlock, doc.get("phase", {}), "phase", tuples=("alpha",))
    kwargs["sim"] = _block(SimBlock, doc.get("sim", {}), "sim")
    kwargs["simulate"] = _block(SimulateBlock, doc.get("simulate", {}), "simulate", tuples=("times", "y"))
    kwargs["duality"] = _block(DualityBlock, doc.get("duality", {}), "duality", tuples=("x", "y", "times"))
    return RunConfig(**kwargs)


# -- validation ---------------------------------------------------------------------------


def _require(condition, message, key):
    if not condition:
        raise ValidationError(message, key)


def _number(value, key, positive=False, nonnegative=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    _require(ok, f"{key} must be a number", key)
    if positive:
        _require(value > 0, f"{key} must be positive", key)
    if nonnegative:
        _require(value >= 0, f"{key} must be nonnegative", key)


_FAMILY_KEYS = {
    "null": set(),
    "stable": {"intensity", "index"},
    "atoms": {"positions", "masses"},
    "tabulated": {"grid", "tail", "index_at_zero", "index_at_infinity"},
    "truncated": {"inner", "cap", "extra_mass"},
    "sum": {"parts"},
}


def _check_family_keys(desc, key):
    _require(isinstance(desc, dict), f"{key} must be a table", key)
    family = desc.get("family")
    _require(family in _FAMILY_KEYS, f"{key}.family must be one of {sorted(_FAMILY_KEYS)}", f"{key}.family")
    _check_keys(desc, _FAMILY_KEYS[family] | {"family"}, key)
    if family == "truncated":
        _check_family_keys(desc.get("inner"), f"{key}.inner")
    if family == "sum":
        for i, part in enumerate(desc.get("parts", [])):
            _check_family_keys(part, f"{key}.parts[{i}]")


def _validate_jumps(spec, key):
    _check_family_keys(spec.jumps, key)
    try:
        spec.build()
    except KeyError as exc:
        raise ValidationError(f"{key}: missing entry {exc}", key) from exc
    except (CbdiError, TypeError, ValueError) as exc:
        raise ValidationError(f"{key}: {exc}", key) from exc


def validate(cfg):
    """Raise ValidationError naming the first invalid key."""
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed must be a nonnegative integer", "seed")
    _require(cfg.out is None or isinstance(cfg.out, str), "out must be a path string", "out")
    for name in ("psi", "psi_hat"):
        spec = getattr(cfg, name)
        if spec is None:
            continue
        if spec.form == "lk":
            _number(spec.diffusion, f"{name}.diffusion", nonnegative=True)
            _number(spec.drift, f"{name}.drift")
            _number(spec.killing, f"{name}.killing", nonnegative=True)
            _validate_jumps(spec, f"{name}.jumps")
        else:
            try:
                power_mechanism(spec.terms)
            except CbdiError as exc:
                raise ValidationError(f"{name}.terms: {exc}", f"{name}.terms") from exc
    c = cfg.classify
    _number(c.tau, "classify.tau", positive=True)
    _require(c.method in METHODS, f"classify.method must be one of {METHODS}", "classify.method")
    _require(isinstance(c.points_per_decade, int) and c.points_per_decade >= 4, "classify.points_per_decade >= 4",
             "classify.points_per_decade")
    _require(isinstance(c.decades, int) and c.decades >= 3, "classify.decades >= 3", "classify.decades")
    _number(c.tolerance, "classify.tolerance", positive=True)
    p = cfg.phase
    _require(all(isinstance(a, (int, float)) and 0 < a < 1 for a in p.alpha), "phase.alpha values lie in (0, 1)",
             "phase.alpha")
    _number(p.ratio_start, "phase.ratio_start", positive=True)
    _number(p.ratio_stop, "phase.ratio_stop", positive=True)
    _require(isinstance(p.ratio_count, int) and p.ratio_count >= 0, "phase.ratio_count >= 0", "phase.ratio_count")
    _number(p.c_hat, "phase.c_hat", positive=True)
    if p.tau is not None:
        _number(p.tau, "phase.tau", positive=True)
    s = cfg.sim
    _number(s.dt, "sim.dt", positive=True)
    _require(isinstance(s.paths, int) and s.paths >= 0, "sim.paths must be a nonnegative integer", "sim.paths")
    _number(s.epsilon, "sim.epsilon", positive=True)
    _require(s.small_jump_mode in SMALL_JUMP_MODES, f"sim.small_jump_mode must be one of {SMALL_JUMP_MODES}",
             "sim.small_jump_mode")
    _number(s.jump_cap, "sim.jump_cap", positive=True)
    _number(s.x_floor, "sim.x_floor", positive=True)
    _require(s.x_ceil > s.x_floor, "sim.x_ceil must exceed sim.x_floor", "sim.x_ceil")
    m = cfg.simulate
    _number(m.x0, "simulate.x0", nonnegative=True)
    _require(len(m.times) > 0 and all(t >= 0 for t in m.times), "simulate.times must be nonnegative",
             "simulate.times")
    _require(all(y >= 0 for y in m.y), "simulate.y must be nonnegative", "simulate.y")
    _number(m.k, "simulate.k", positive=True)
    _number(m.abs_tol, "simulate.abs_tol", nonnegative=True)
    d = cfg.duality
    for key in ("x", "y"):
        _require(all(v >= 0 for v in getattr(d, key)), f"duality.{key} must be nonnegative", f"duality.{key}")
    _require(len(d.times) > 0 and all(t >= 0 for t in d.times), "duality.times must be nonnegative",
             "duality.times")
    _number(d.k, "duality.k", positive=True)
    _require(0 <= d.min_pass_fraction <= 1, "duality.min_pass_fraction lies in [0, 1]", "duality.min_pass_fraction")
    return cfg


# -- serialisation ---------------------------------------------------------------------------


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return value  # TOML spells it inf
    return value


def to_dict(cfg):
    doc = {"seed": cfg.seed}
    if cfg.out is not None:
        doc["out"] = cfg.out
    for name in ("psi", "psi_hat"):
        spec = getattr(cfg, name)
        if spec is not None:
            doc[name] = spec.as_dict()
    for name in ("classify", "phase", "sim", "simulate", "duality"):
        block = asdict(getattr(cfg, name))
        doc[name] = {k: _plain(v) for k, v in block.items() if v is not None}
    return doc


def dump_config(cfg):
    """TOML text that parses back to an equal RunConfig."""
    return tomli_w.dumps(to_dict(cfg))
