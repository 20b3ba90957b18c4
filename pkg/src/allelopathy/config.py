"""Experiment configuration: a dataclass stored as an INI file.

Layout::

    [experiment]
    kind = simulate            ; one of KINDS
    seed = 1
    replicates = 1
    horizon = 10.0
    sample_times = 0, 1, 2     ; optional, comma separated
    out = runs/example

    [model]
    beta1 = 2.0
    beta2 = 3.0
    gamma = 1.0
    M = 1.0
    d = 2
    L = 100

    [initial]
    p1 = 0.5
    p2 = 0.5

    [options]                  ; kind specific, see OPTION_DEFAULTS
    resolution = 200

Floats are written with repr, so writing and re-reading gives an equal object.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .lattice import ConfigError, ModelParams

KINDS = ("simulate", "meanfield", "basin", "sweep-gamma", "sweep-beta", "gbt-couple",
         "mono-couple", "duality-check", "ancestor-check", "percolation")

# kind -> option -> (parser, default); a default of None means "required"
_FLOAT_LIST = "floats"
OPTION_DEFAULTS: dict[str, dict[str, tuple]] = {
    "simulate": {},
    "meanfield": {"u0": (_FLOAT_LIST, ""), "T": (float, 500.0), "n_samples": (int, 501)},
    "basin": {"resolution": (int, 200), "t_max": (float, 2000.0)},
    "sweep-gamma": {"beta1_values": (_FLOAT_LIST, None), "gamma_values": (_FLOAT_LIST, None)},
    "sweep-beta": {"beta1_values": (_FLOAT_LIST, None), "beta2_values": (_FLOAT_LIST, None)},
    "gbt-couple": {},
    "mono-couple": {"parameter": (str, "gamma"), "lo": (float, None), "hi": (float, None)},
    "duality-check": {},
    "ancestor-check": {"lookahead": (float, 0.0)},
    "percolation": {"p_values": (_FLOAT_LIST, None), "n_max": (int, 100)},
}


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from exc


def _fmt_floats(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: ModelParams
    p1: float = 0.5
    p2: float = 0.5
    horizon: float = 10.0
    replicates: int = 1
    seed: int = 0
    sample_times: tuple | None = None
    out_dir: str = "out"
    options: dict = field(default_factory=dict)

    def option(self, name: str):
        """Typed value of a kind-specific option (default applied)."""
        table = OPTION_DEFAULTS[self.kind]
        if name not in table:
            raise ConfigError(f"option {name!r} is not defined for kind {self.kind!r}")
        parser, default = table[name]
        raw = self.options.get(name)
        if raw is None:
            if default is None:
                raise ConfigError(f"kind {self.kind!r} requires option {name!r}")
            return default if parser != _FLOAT_LIST else _floats(default)
        if parser == _FLOAT_LIST:
            return _floats(raw)
        try:
            return parser(raw)
        except ValueError as exc:
            raise ConfigError(f"option {name!r}: cannot parse {raw!r}") from exc

    def validate(self) -> "ExperimentConfig":
        """Check every precondition the chosen kind relies on; raises ConfigError."""
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.horizon > 0:
            raise ConfigError("horizon must be > 0")
        if not (0 <= self.p1 and 0 <= self.p2 and self.p1 + self.p2 <= 1 + 1e-12):
            raise ConfigError("initial densities need p1, p2 >= 0 and p1 + p2 <= 1")
        if self.sample_times is not None and any(not 0 <= t <= self.horizon for t in self.sample_times):
            raise ConfigError("sample times must lie in [0, horizon]")
        unknown = set(self.options) - set(OPTION_DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown options for kind {self.kind!r}: {', '.join(sorted(unknown))}")
        for name in OPTION_DEFAULTS[self.kind]:
            self.option(name)
        getattr(self, f"_check_{self.kind.replace('-', '_')}", lambda: None)()
        return self

    def _check_meanfield(self):
        u0 = self.option("u0")
        if u0 and (len(u0) != 2 or min(u0) < 0 or sum(u0) > 1):
            raise ConfigError("meanfield u0 must be two nonnegative numbers with sum <= 1")

    def _check_sweep_gamma(self):
        if not self.option("beta1_values") or not self.option("gamma_values"):
            raise ConfigError("sweep grid must be nonempty")
        if min(self.option("gamma_values")) < 0 or min(self.option("beta1_values")) < 0:
            raise ConfigError("sweep rates must be nonnegative")

    def _check_sweep_beta(self):
        if not self.option("beta1_values") or not self.option("beta2_values"):
            raise ConfigError("sweep grid must be nonempty")
        if min(self.option("beta2_values")) < 0 or min(self.option("beta1_values")) < 0:
            raise ConfigError("sweep rates must be nonnegative")

    def _check_gbt_couple(self):
        if self.params.gamma > self.params.beta1:
            raise ConfigError("gbt-couple needs gamma <= beta1")

    def _check_mono_couple(self):
        if self.option("parameter") not in ("gamma", "beta2"):
            raise ConfigError("mono-couple parameter must be 'gamma' or 'beta2'")
        if not 0 <= self.option("lo") <= self.option("hi"):
            raise ConfigError("mono-couple needs 0 <= lo <= hi")

    def _check_duality_check(self):
        if self.params.gamma != 0:
            raise ConfigError("duality checks need gamma = 0")

    _check_ancestor_check = _check_duality_check

    def _check_percolation(self):
        ps = self.option("p_values")
        if not ps or min(ps) < 0 or max(ps) > 1:
            raise ConfigError("percolation p_values must be a nonempty list in [0, 1]")
        if self.option("n_max") < 0:
            raise ConfigError("n_max must be >= 0")

    # serialization

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        exp = {"kind": self.kind, "seed": str(self.seed), "replicates": str(self.replicates),
               "horizon": repr(float(self.horizon)), "out": self.out_dir}
        if self.sample_times is not None:
            exp["sample_times"] = _fmt_floats(self.sample_times)
        cp["experiment"] = exp
        p = self.params
        cp["model"] = {"beta1": repr(float(p.beta1)), "beta2": repr(float(p.beta2)),
                       "gamma": repr(float(p.gamma)), "M": repr(float(p.M)),
                       "d": str(p.d), "L": str(p.L)}
        cp["initial"] = {"p1": repr(float(self.p1)), "p2": repr(float(self.p2))}
        if self.options:
            cp["options"] = {k: self.options[k] for k in sorted(self.options)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        for section in ("experiment", "model"):
            if section not in cp:
                raise ConfigError(f"config lacks the [{section}] section")
        exp, mod = cp["experiment"], cp["model"]
        ini = cp["initial"] if "initial" in cp else {}

        def num(section, key, conv, default=None):
            if key not in section:
                if default is None:
                    raise ConfigError(f"missing key {key!r}")
                return default
            try:
                return conv(section[key])
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: cannot parse {section[key]!r}") from exc

        params = ModelParams(beta1=num(mod, "beta1", float), beta2=num(mod, "beta2", float),
                             gamma=num(mod, "gamma", float), M=num(mod, "M", float, 1.0),
                             d=num(mod, "d", int, 1), L=num(mod, "L", int, 50))
        st = exp.get("sample_times")
        return cls(kind=exp.get("kind", "").strip(), params=params,
                   p1=num(ini, "p1", float, 0.5), p2=num(ini, "p2", float, 0.5),
                   horizon=num(exp, "horizon", float, 10.0),
                   replicates=num(exp, "replicates", int, 1), seed=num(exp, "seed", int, 0),
                   sample_times=None if st is None else _floats(st),
                   out_dir=exp.get("out", "out"),
                   options=dict(cp["options"]) if "options" in cp else {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ini())

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **changes)
