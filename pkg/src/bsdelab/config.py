"""Flat ``key = value`` experiment configs with dotted section keys.

    # comment
    experiment.kind = representation
    grid.T = 1.0
    grid.N = 40
    generator.kind = linear
    generator.b = 1
    probe.z = 1

Values are numbers, comma-separated number lists or bare words.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .forward import brownian_model, linear_model
from .generators import (
    Generator,
    builtin,
    terminal_affine_w,
    terminal_const,
    terminal_enlarged,
    terminal_of_w,
)

KINDS = (
    "solve",
    "transposition-check",
    "g-expectation",
    "axiom-suite",
    "representation",
    "converse-comparison",
    "characterization",
)

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class ConfigError(InvalidArgument):
    def __init__(self, message, line=None, column=None, key=None):
        self.line, self.column, self.key = line, column, key
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


@dataclass
class RawConfig:
    values: dict  # key -> (raw string, line, column of value)
    text: str = ""

    def has(self, key):
        return key in self.values

    def get_str(self, key, default=None, required=False):
        if key not in self.values:
            if required:
                raise ConfigError(f"missing required key '{key}'", key=key)
            return default
        return self.values[key][0]

    def get_float(self, key, default=None, required=False):
        raw = self.get_str(key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            _, line, col = self.values[key]
            raise ConfigError(f"'{key}' expects a number, got {raw!r}", line, col, key) from None

    def get_int(self, key, default=None, required=False):
        v = self.get_float(key, None, required)
        if v is None:
            return default
        if v != int(v):
            _, line, col = self.values[key]
            raise ConfigError(f"'{key}' expects an integer, got {v!r}", line, col, key)
        return int(v)

    def get_list(self, key, default=None):
        raw = self.get_str(key)
        if raw is None:
            return default
        out = []
        for item in raw.split(","):
            item = item.strip()
            try:
                out.append(float(item))
            except ValueError:
                _, line, col = self.values[key]
                raise ConfigError(f"'{key}' expects a list of numbers, got {raw!r}", line, col, key) from None
        return out

    def section(self, prefix):
        p = prefix + "."
        return {k[len(p) :]: v[0] for k, v in self.values.items() if k.startswith(p)}

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def parse_config_text(text: str) -> RawConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, val_part = body.split("=", 1)
        key = key_part.strip()
        kcol = len(key_part) - len(key_part.lstrip()) + 1
        if not _KEY.match(key):
            raise ConfigError(f"invalid key {key!r}", lineno, kcol)
        val = val_part.strip()
        vcol = len(key_part) + 2 + (len(val_part) - len(val_part.lstrip()))
        if not val:
            raise ConfigError(f"empty value for '{key}'", lineno, vcol, key)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {values[key][1]})", lineno, kcol, key)
        values[key] = (val, lineno, vcol)
    return RawConfig(values, text)


def load_config(path) -> RawConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# --- resolution into objects -------------------------------------------------------


_GEN_PARAMS = {"zero": (), "linear": ("a", "b", "c"), "kappa_abs_z": ("kappa",), "discount": ("beta",)}


def make_generator(raw: RawConfig, prefix: str = "generator") -> Generator:
    kind = raw.get_str(f"{prefix}.kind", required=True)
    if kind not in _GEN_PARAMS:
        _, line, col = raw.values[f"{prefix}.kind"]
        raise ConfigError(f"unknown generator {kind!r}; known: {sorted(_GEN_PARAMS)}", line, col, f"{prefix}.kind")
    extra = set(raw.section(prefix)) - {"kind", *_GEN_PARAMS[kind]}
    if extra:
        k = f"{prefix}.{sorted(extra)[0]}"
        _, line, col = raw.values[k]
        raise ConfigError(f"'{k}' is not a parameter of {kind}", line, 1, k)
    params = {p: raw.get_float(f"{prefix}.{p}") for p in _GEN_PARAMS[kind] if raw.has(f"{prefix}.{p}")}
    return builtin(kind, **params)


TERMINALS = ("affine_w", "const", "w_squared", "cos_w", "u_times_w")


def make_terminal(raw: RawConfig, prefix: str = "terminal"):
    kind = raw.get_str(f"{prefix}.kind", "affine_w")
    if kind == "affine_w":
        return terminal_affine_w(raw.get_float(f"{prefix}.scale", 1.0), raw.get_float(f"{prefix}.shift", 0.0))
    if kind == "const":
        return terminal_const(raw.get_float(f"{prefix}.value", required=True))
    if kind == "w_squared":
        return terminal_of_w(lambda w: w * w, "W_T^2")
    if kind == "cos_w":
        return terminal_of_w(np.cos, "cos(W_T)")
    if kind == "u_times_w":
        return terminal_enlarged(lambda w, u: u * w, "U*W_T")
    _, line, col = raw.values[f"{prefix}.kind"]
    raise ConfigError(f"unknown terminal {kind!r}; known: {list(TERMINALS)}", line, col, f"{prefix}.kind")


FORWARD_MODELS = ("brownian", "linear")


def make_forward(raw: RawConfig):
    kind = raw.get_str("forward.kind")
    if kind is None:
        return None
    if kind == "brownian":
        return brownian_model()
    if kind == "linear":
        return linear_model(raw.get_float("forward.a", 0.0), raw.get_float("forward.a0", 0.0), raw.get_float("forward.c", 1.0))
    _, line, col = raw.values["forward.kind"]
    raise ConfigError(f"unknown forward model {kind!r}; known: {list(FORWARD_MODELS)}", line, col, "forward.kind")


@dataclass
class ExperimentConfig:
    kind: str
    raw: RawConfig
    solver: object  # SolverConfig
    tolerances: dict = field(default_factory=dict)
    out_dir: str | None = None
    jobs: int = 1

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default)) * float(self.tolerances.get("scale", 1.0))


def validate(raw: RawConfig, seed: int | None = None, tolerance_scale: float | None = None) -> ExperimentConfig:
    from .gexpectation import SolverConfig

    kind = raw.get_str("experiment.kind", required=True)
    if kind not in KINDS:
        _, line, col = raw.values["experiment.kind"]
        raise ConfigError(f"unknown experiment kind {kind!r}; known: {list(KINDS)}", line, col, "experiment.kind")
    T = raw.get_float("grid.T", required=True)
    N = raw.get_int("grid.N", required=True)
    if T <= 0:
        raise ConfigError("'grid.T' must be positive", *raw.values["grid.T"][1:], "grid.T")
    if N < 1:
        raise ConfigError("'grid.N' must be >= 1", *raw.values["grid.N"][1:], "grid.N")
    M = raw.get_int("paths.M", 2**14)
    d = raw.get_int("paths.d", 1)
    if M < 2 or d < 1:
        raise ConfigError("'paths.M' must be >= 2 and 'paths.d' >= 1", key="paths.M")
    s = raw.get_int("paths.seed", 7) if seed is None else int(seed)
    atoms = raw.get_list("enlargement.atoms")
    probs = raw.get_list("enlargement.probs")
    if (atoms is None) != (probs is None):
        raise ConfigError("'enlargement.atoms' and 'enlargement.probs' go together", key="enlargement.probs")
    cfg = SolverConfig(
        T=T,
        N=N,
        M=M,
        d=d,
        seed=s,
        degree=raw.get_int("solver.degree", 2),
        picard_iters=raw.get_int("solver.picard_iters", 3),
        atoms=tuple(atoms) if atoms else None,
        probs=tuple(probs) if probs else None,
    )
    tols = {k: float(v) for k, v in ((k, raw.get_float(f"tolerance.{k}")) for k in raw.section("tolerance"))}
    for k, v in tols.items():
        if not v > 0:
            raise ConfigError(f"tolerance '{k}' must be positive", *raw.values[f"tolerance.{k}"][1:], f"tolerance.{k}")
    if tolerance_scale is not None:
        if not tolerance_scale > 0:
            raise InvalidArgument("--tolerance-scale must be positive")
        tols["scale"] = tols.get("scale", 1.0) * tolerance_scale
    # resolve eagerly so that bad catalog references fail before any work
    if kind != "characterization" or raw.has("generator.kind"):
        make_generator(raw)
    if raw.has("generator2.kind"):
        make_generator(raw, "generator2")
    if kind == "converse-comparison" and not raw.has("generator2.kind"):
        raise ConfigError("missing required key 'generator2.kind'", key="generator2.kind")
    xi = make_terminal(raw)
    if xi.kind == "enlarged" and atoms is None:
        raise ConfigError("terminal 'u_times_w' needs 'enlargement.atoms'", key="enlargement.atoms")
    make_forward(raw)
    return ExperimentConfig(kind, raw, cfg, tols, raw.get_str("output.dir"))
