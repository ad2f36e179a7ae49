"""Sectioned key-value run configuration.

Grammar (an INI dialect read with :mod:`configparser`; ``#`` and ``;`` start comments)::

    [run]                      seed (required), total_steps, output_dir, log_interval,
                               checkpoint_interval
    [model]                    vocab, d_model, d_ff, experts, topk, seq_len, batch,
                               zipf_exponent, bigram_strength, lb_weight, z_weight
    [solver]                   kind = exact | iterative, steps, eps,
                               coeffs = baseline | polar_express | "a, b, c; a, b, c; ..."
                               lower (design lower bound for polar_express)
    [optim.<class>]            class in embedding, gate_up, down, head, router, vectors
                               optimizer = matrix | adamw
                               matrix:  update (class name), lr0, momentum, momentum_kind,
                                        alpha, eps, weight_decay, spectral, spectral_eps,
                                        spectral_p, rowscale, row_eps, row_lo, row_hi
                               adamw:   lr0, beta1, beta2, eps, weight_decay
                               either:  schedule = none | StableDecay | WarmupCosine,
                                        warmup_steps, stable_frac
    [converge]                 loss, m, n, L, mu, rank, family, gamma (float or auto),
                               gamma_scale, steps, eps, lo, hi, expect = pass | violations
    [verify]                   seed, trials, polar_samples, inv_sqrt_samples
"""

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidConfig, SymoptError
from .optim import AdamWConfig, OptimConfig, ScheduleSpec
from .polariter import CoeffTable, polar_express_table
from .updates import RowScaleSpec, Solver, SpectralMapSpec, UpdateSpec


class ConfigError(InvalidConfig):
    """Configuration problem, carrying the offending line when one is known."""

    def __init__(self, message, line=None, path=None):
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")
        self.line = line


def _line_index(text):
    """Map ``(section, key)`` and ``section`` to 1-based line numbers."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            index[section] = no
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.split("=" if "=" in s else ":", 1)[0].strip()
            index[(section, key)] = no
    return index


@dataclass
class Section:
    name: str
    values: dict
    lines: dict
    path: Optional[str] = None
    used: set = field(default_factory=set)

    def _err(self, key, msg):
        return ConfigError(f"[{self.name}] {key}: {msg}", self.lines.get((self.name, key)),
                           self.path)

    def get(self, key, conv=str, default=None, required=False):
        self.used.add(key)
        if key not in self.values:
            if required:
                raise ConfigError(f"[{self.name}] missing required key {key!r}",
                                  self.lines.get(self.name), self.path)
            return default
        raw = self.values[key]
        try:
            return conv(raw)
        except (ValueError, SymoptError) as exc:
            raise self._err(key, f"bad value {raw!r} ({exc})") from exc

    def build(self, key, fn):
        """Call ``fn()`` and attribute any validation error to ``key``'s line."""
        try:
            return fn()
        except (ValueError, SymoptError) as exc:
            raise self._err(key, str(exc)) from exc

    def check_unused(self):
        extra = sorted(set(self.values) - self.used)
        if extra:
            raise self._err(extra[0], "unknown key")


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _bool_or_none(s):
    return None if s.strip().lower() in ("", "none") else s.strip()


@dataclass
class ParsedConfig:
    path: Optional[str]
    sections: dict

    def has(self, name):
        return name in self.sections

    def section(self, name, required=False):
        if name not in self.sections:
            if required:
                raise ConfigError(f"missing required section [{name}]", None, self.path)
            return Section(name, {}, {}, self.path)
        return self.sections[name]


def parse_config_text(text, path=None):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (``L`` and ``l`` differ)
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
        raise ConfigError(msg, line, path) from exc
    lines = _line_index(text)
    sections = {name: Section(name, dict(cp[name]), lines, path) for name in cp.sections()}
    return ParsedConfig(path, sections)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from exc
    return parse_config_text(text, path)


# --------------------------------------------------------------- builders

def build_solver(cfg):
    sec = cfg.section("solver")
    coeffs_raw = sec.get("coeffs", str, "baseline").strip()
    steps = sec.get("steps", _int, 5)
    lower = sec.get("lower", float, 1e-3)
    kind = sec.get("kind", str, "exact").strip()
    eps = sec.get("eps", float, 1e-7)
    if coeffs_raw == "baseline":
        coeffs = CoeffTable.baseline()
    elif coeffs_raw == "polar_express":
        coeffs = sec.build("coeffs", lambda: polar_express_table(steps, lower))
    else:
        coeffs = sec.get("coeffs", CoeffTable.parse)
    solver = sec.build("kind", lambda: Solver(kind=kind, coeffs=coeffs, steps=steps, eps=eps))
    sec.check_unused()
    return solver


def _schedule(sec):
    kind = sec.get("schedule", _bool_or_none, None)
    if kind is None:
        return None
    return sec.build("schedule", lambda: ScheduleSpec(
        kind=kind, total_steps=1_000_000_000,
        warmup_steps=sec.get("warmup_steps", _int, 0),
        stable_frac=sec.get("stable_frac", float, 0.6)))


def _spectral(sec):
    kind = sec.get("spectral", str, "damped").strip()
    eps = sec.get("spectral_eps", float, 1e-8)
    p = sec.get("spectral_p", float, 1.0)
    makers = {"damped": lambda: SpectralMapSpec.damped(eps), "polar": SpectralMapSpec.polar,
              "identity": SpectralMapSpec.identity, "power": lambda: SpectralMapSpec.power(p)}
    if kind not in makers:
        raise sec._err("spectral", f"unknown spectral kind {kind!r}")
    return sec.build("spectral", makers[kind])


def _rowscale(sec):
    kind = sec.get("rowscale", str, "smoothed").strip()
    if kind == "smoothed":
        eps = sec.get("row_eps", float, 1e-8)
        return sec.build("rowscale", lambda: RowScaleSpec.smoothed(eps))
    if kind == "bounded":
        lo, hi = sec.get("row_lo", float, 0.5), sec.get("row_hi", float, 1.0)
        return sec.build("rowscale", lambda: RowScaleSpec.bounded(lo, hi))
    raise sec._err("rowscale", f"unknown row scale kind {kind!r}")


def build_optimizer(sec, solver):
    kind = sec.get("optimizer", str, "matrix").strip()
    schedule = _schedule(sec)
    if kind == "adamw":
        kw = dict(lr0=sec.get("lr0", float, 1e-3), beta1=sec.get("beta1", float, 0.9),
                  beta2=sec.get("beta2", float, 0.95), eps=sec.get("eps", float, 1e-8),
                  weight_decay=sec.get("weight_decay", float, 0.0), schedule=schedule)
        return sec.build("optimizer", lambda: AdamWConfig(**kw))
    if kind != "matrix":
        raise sec._err("optimizer", f"unknown optimizer {kind!r}")
    spectral, rowscale = _spectral(sec), _rowscale(sec)
    cls = sec.get("update", str, "RowNorm").strip()
    # geometry is implied by the parameter class and attached when the model is built
    geometry = {"down": "TransposedLPRO", "head": "LMHeadQuotient",
                "router": "RouterQuotient"}.get(sec.name.split(".", 1)[1], "LPRO")
    update = sec.build("update", lambda: UpdateSpec(
        cls=cls, spectral=spectral, rowscale=rowscale, solver=solver).with_geometry(geometry))
    kw = dict(lr0=sec.get("lr0", float, 0.02), momentum_beta=sec.get("momentum", float, 0.9),
              momentum_kind=sec.get("momentum_kind", str, "EMA").strip(),
              alpha=sec.get("alpha", float, 0.0), eps=sec.get("eps", float, 1e-8),
              weight_decay=sec.get("weight_decay", float, 0.0), update=update, schedule=schedule)
    return sec.build("optimizer", lambda: OptimConfig(**kw))


def build_train(cfg, seed=None, output_dir=None, resume=None):
    """Return ``(ToyModelConfig, RunConfig)`` from a parsed config; CLI flags win over the file."""
    from .bench.toy import PARAM_CLASSES, RunConfig, ToyModelConfig
    run = cfg.section("run", required=True)
    cfg_seed = run.get("seed", _int, required=seed is None)
    solver = build_solver(cfg)
    optimizers = {}
    for name, sec in cfg.sections.items():
        if name.startswith("optim."):
            cls = name.split(".", 1)[1]
            if cls not in PARAM_CLASSES:
                raise ConfigError(f"unknown parameter class in section [{name}]",
                                  sec.lines.get(name), cfg.path)
            optimizers[cls] = build_optimizer(sec, solver)
            sec.check_unused()
    m = cfg.section("model")
    ints = ("vocab", "d_model", "d_ff", "experts", "topk", "seq_len", "batch")
    floats = ("zipf_exponent", "bigram_strength", "lb_weight", "z_weight")
    kwargs = {k: m.get(k, _int) for k in ints if k in m.values}
    kwargs.update({k: m.get(k, float) for k in floats if k in m.values})
    m.check_unused()
    try:
        model = ToyModelConfig(optimizers=optimizers, **kwargs)
    except InvalidConfig as exc:
        raise ConfigError(str(exc), m.lines.get("model"), cfg.path) from exc
    cfg_out = run.get("output_dir", str, "out")
    rc = RunConfig(total_steps=run.get("total_steps", _int, 200),
                   seed=seed if seed is not None else cfg_seed,
                   output_dir=output_dir or cfg_out,
                   log_interval=run.get("log_interval", _int, 10),
                   checkpoint_interval=run.get("checkpoint_interval", _int, 0),
                   resume=resume)
    run.check_unused()
    return model, rc
