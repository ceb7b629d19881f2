"""Run configuration parsing and JSON serialisation helpers.

Complex numbers travel as ``[re, im]`` pairs and matrices as row-major
nested lists.  Python's float repr gives 17 significant digits, so values
round-trip exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import numpy as np

from .core import DensityMatrix, PureState, bell_state, check_dim, random_density_matrix
from .errors import ConfigError
from .markov import MarkovNoiseSpec
from .zoo import BUILTIN_MEMORY_CHANNELS, MPParams, correlated_dephasing_spec, mp_channel

TASKS = ("simulate", "capacity", "fano", "verify-appendix", "sweep")
CHANNEL_NAMES = tuple(BUILTIN_MEMORY_CHANNELS) + ("mp", "dephasing-markov")


# -- serialisation ----------------------------------------------------------

def encode_complex_matrix(mat):
    mat = np.asarray(mat)
    return [[[float(z.real), float(z.imag)] for z in row] for row in mat]


def decode_complex_matrix(obj, where):
    try:
        rows = []
        for row in obj:
            out = []
            for z in row:
                if isinstance(z, (list, tuple)):
                    if len(z) != 2:
                        raise ValueError("complex entries must be [re, im] pairs")
                    out.append(complex(float(z[0]), float(z[1])))
                else:
                    out.append(complex(float(z)))
            rows.append(out)
        arr = np.array(rows, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix: {exc}", field=where) from None
    if arr.ndim != 2:
        raise ConfigError("matrix must be a nested list of rows", field=where)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("matrix has non-finite entries", field=where)
    return arr


def to_jsonable(obj):
    """Convert numpy scalars/arrays (and Fractions) into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            if obj.ndim == 2:
                return encode_complex_matrix(obj)
            return [[float(z.real), float(z.imag)] for z in obj.ravel()]
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        if not np.isfinite(val):
            raise ValueError(f"non-finite number {val} in report")
        return val
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


# -- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    task: str
    channel: dict
    n: int = 1
    input: Any = None
    route: str = "unitary"
    optimizer: dict = field(default_factory=dict)
    ce_trend: list = field(default_factory=list)
    product_search: bool = False
    sweep: Optional[dict] = None
    trials: int = 100
    seed: int = 0
    output: Optional[str] = None
    csv: Optional[str] = None
    fault_injection: Optional[str] = None

    def resolved(self):
        return to_jsonable(dict(self.__dict__))


_KNOWN_KEYS = set(RunConfig.__dataclass_fields__)
_OPTIMIZER_KEYS = {"restarts", "ensemble_size", "max_iters", "convergence_tol"}


def _positive_int(value, where):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"expected a positive integer, got {value!r}", field=where)
    return value


def parse_config(text: str, task: Optional[str] = None) -> RunConfig:
    """Parse JSON config text; ``task`` (from the subcommand) fills a missing task."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=sorted(unknown)[0])
    if task is not None:
        if "task" in raw and raw["task"] != task and not (task == "sweep" and raw["task"] == "capacity"):
            raise ConfigError(f"config task {raw['task']!r} does not match subcommand {task!r}",
                              field="task")
        raw["task"] = task
    if raw.get("task") not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}", field="task")
    if "channel" not in raw or not isinstance(raw["channel"], dict):
        raise ConfigError("a channel object is required", field="channel")
    cfg = RunConfig(**raw)
    cfg.n = _positive_int(cfg.n, "n")
    cfg.trials = _positive_int(cfg.trials, "trials")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer", field="seed")
    ch = cfg.channel
    if ("name" in ch) == ("spec" in ch):
        raise ConfigError("give exactly one of channel.name or channel.spec", field="channel")
    if "name" in ch and ch["name"] not in CHANNEL_NAMES:
        raise ConfigError(f"unknown channel {ch['name']!r}; known: {CHANNEL_NAMES}",
                          field="channel.name")
    if cfg.route not in ("unitary", "direct"):
        raise ConfigError("route must be 'unitary' or 'direct'", field="route")
    bad = set(cfg.optimizer) - _OPTIMIZER_KEYS
    if bad:
        raise ConfigError(f"unknown optimizer keys {sorted(bad)}", field="optimizer")
    for n in cfg.ce_trend:
        _positive_int(n, "ce_trend")
    if cfg.task == "sweep" and cfg.sweep is None:
        raise ConfigError("the sweep task needs a sweep object", field="sweep")
    if cfg.sweep is not None:
        if cfg.sweep.get("param") != "mu":
            raise ConfigError("only the 'mu' parameter can be swept", field="sweep.param")
        vals = cfg.sweep.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values must be a nonempty list", field="sweep.values")
        if ch.get("name") != "mp":
            raise ConfigError("mu sweeps need channel.name = 'mp'", field="channel.name")
    if cfg.fault_injection not in (None, "transpose-gamma-direct"):
        raise ConfigError("unknown fault injection", field="fault_injection")
    # build once so channel errors surface as config errors
    build_channel(cfg.channel)
    return cfg


def build_channel(ch: dict, mu=None):
    """MemoryChannel or MarkovNoiseSpec described by a config channel object."""
    if "spec" in ch:
        spec = ch["spec"]
        if not isinstance(spec, dict):
            raise ConfigError("channel.spec must be an object", field="channel.spec")
        for key in ("kraus", "gamma", "p0"):
            if key not in spec:
                raise ConfigError(f"missing {key}", field=f"channel.spec.{key}")
        kraus = [decode_complex_matrix(m, f"channel.spec.kraus[{i}]")
                 for i, m in enumerate(spec["kraus"])]
        try:
            gamma = np.array(spec["gamma"], dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("gamma must be a numeric matrix", field="channel.spec.gamma") from None
        try:
            return MarkovNoiseSpec(tuple(kraus), gamma, np.array(spec["p0"], dtype=float))
        except ValueError as exc:
            msg = str(exc)
            where = ("channel.spec.gamma" if "transition" in msg else
                     "channel.spec.p0" if "p0" in msg else "channel.spec.kraus")
            raise ConfigError(msg, field=where) from None
    name = ch["name"]
    extra = set(ch) - {"name", "mu", "p"}
    if extra:
        raise ConfigError(f"unknown channel keys {sorted(extra)}", field="channel")
    if name == "mp":
        mu = ch.get("mu", 0.0) if mu is None else mu
        try:
            return mp_channel(MPParams(float(mu), tuple(ch.get("p", (0.25,) * 4))))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="channel.mu" if "mu" in str(exc) else "channel.p") from None
    if name == "dephasing-markov":
        return correlated_dephasing_spec()
    return BUILTIN_MEMORY_CHANNELS[name]()


_SINGLE = {
    "0": np.array([1, 0]), "1": np.array([0, 1]),
    "+": np.array([1, 1]) / np.sqrt(2), "-": np.array([1, -1]) / np.sqrt(2),
    "r": np.array([1, 1j]) / np.sqrt(2), "l": np.array([1, -1j]) / np.sqrt(2),
}


def build_input(spec, d: int, n: int, rng) -> tuple[DensityMatrix, Optional[PureState]]:
    """Input state from a config entry; returns (rho, psi or None if mixed)."""
    dims = [d] * n
    check_dim(d ** n, "input")
    if spec is None:
        spec = "|" + "0" * n + ">"
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("|") and s.endswith(">"):
            labels = s[1:-1]
            if d != 2:
                raise ConfigError("ket labels need qubit channels", field="input")
            if len(labels) != n or any(c not in _SINGLE for c in labels):
                raise ConfigError(f"ket label must have {n} symbols from 01+-rl", field="input")
            vec = np.array([1.0 + 0j])
            for c in labels:
                vec = np.kron(vec, _SINGLE[c])
            psi = PureState(vec, dims, normalize=True)
            return psi.density(), psi
        if s == "bell":
            if d != 2 or n != 2:
                raise ConfigError("'bell' needs two qubit uses", field="input")
            psi = bell_state()
            return psi.density(), psi
        if s == "maximally-mixed":
            return DensityMatrix.maximally_mixed(dims), None
        if s == "random":
            return random_density_matrix(d ** n, rng, dims=dims), None
        raise ConfigError(f"unknown input label {spec!r}", field="input")
    mat = decode_complex_matrix(spec, "input")
    try:
        rho = DensityMatrix(mat, dims)
    except ValueError as exc:
        raise ConfigError(str(exc), field="input") from None
    return rho, None
