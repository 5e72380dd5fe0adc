"""Experiment configuration: JSON text, defaults, and full validation.

Every violation is collected before anything runs; unknown keys are named
together with the closest valid key.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
from dataclasses import dataclass

from ..errors import ChaosLabError, ConfigError
from ..kernels import BUILTIN_NAMES, make_kernel
from ..meanfield import PdeConfig, cfl_limit, cosine_density, uniform_density
from ..particles import SimConfig

KINDS = ("simulate", "solve_pde", "chaos_study", "lde_audit", "enumerate")

# block -> key -> (default, type tag)
SCHEMA = {
    "kernel": {
        "dim": (1, "int"),
        "drift": ("trig_drift", "str"),
        "drift_params": ([0.5, 1], "floats"),
        "diffusion": ("trig_sigma", "str"),
        "diffusion_params": ([0.3, 0.05, 1], "floats"),
    },
    "initial": {
        "name": ("cosine", "str"),
        "amplitudes": ([0.5], "floats"),
    },
    "discretization": {
        "n": (64, "int"),
        "dt": (1e-3, "float"),
        "t_end": (0.25, "float"),
        "stepper": ("explicit_rk2", "str"),
        "mode": ("direct_march", "str"),
        "pde_dt": (None, "opt_float"),
        "picard_tol": (1e-8, "float"),
        "max_iters": (50, "int"),
        "checkpoints": (None, "opt_floats"),
    },
    "particles": {
        "N_list": ([16, 32, 64, 128, 256, 512], "ints"),
        "replicas": (64, "int"),
        "seed": (0, "int"),
        "interaction": ("spectral", "str"),
        "include_self": (True, "bool"),
        "binary_twin": (True, "bool"),
    },
    "metrics": {
        "bins": (None, "opt_int"),
        "bins2": (None, "opt_int"),
        "bootstrap": (200, "int"),
        "universal_C": (1.0, "float"),
        "workers": (1, "int"),
    },
    "lde": {
        "probes": (64, "int"),
        "eta_mode": ("paper_formula", "str"),
        "eta": (None, "opt_float"),
        "N_list": ([8, 32, 128], "ints"),
        "n_mc": (10_000, "int"),
        "background_time": (0.0, "float"),
        "enumeration": ([[2, 1], [3, 1]], "pairs"),
        "oracle": (True, "bool"),
        "quad_n": (32, "int"),
    },
    "enumerate": {
        "N": (3, "int"),
        "m": (1, "int"),
        "oracle": (True, "bool"),
        "quad_n": (32, "int"),
    },
}
TOP = ("kind", "output") + tuple(SCHEMA)


def _suggest(key, valid):
    near = difflib.get_close_matches(key, list(valid), n=1, cutoff=0.5)
    return f" (did you mean {near[0]!r}?)" if near else ""


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _check_type(v, tag):
    if tag == "int":
        return _is_int(v)
    if tag == "float":
        return _is_num(v)
    if tag == "str":
        return isinstance(v, str)
    if tag == "bool":
        return isinstance(v, bool)
    if tag == "opt_float":
        return v is None or _is_num(v)
    if tag == "opt_int":
        return v is None or _is_int(v)
    if tag == "floats":
        return isinstance(v, list) and all(_is_num(x) for x in v)
    if tag == "opt_floats":
        return v is None or (isinstance(v, list) and all(_is_num(x) for x in v))
    if tag == "ints":
        return isinstance(v, list) and all(_is_int(x) for x in v)
    if tag == "pairs":
        return isinstance(v, list) and all(
            isinstance(p, list) and len(p) == 2 and all(_is_int(x) for x in p) for p in v)
    raise AssertionError(tag)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment; blocks are plain dicts with every default filled in."""

    kind: str
    output: str
    blocks: dict

    def __getitem__(self, block):
        return self.blocks[block]

    def to_dict(self):
        return {"kind": self.kind, "output": self.output, **copy.deepcopy(self.blocks)}

    def serialize(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def sha256(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    @property
    def seed(self):
        return self.blocks["particles"]["seed"]

    def with_overrides(self, seed=None, output=None, kind=None):
        d = self.to_dict()
        if seed is not None:
            d["particles"]["seed"] = seed
        if output is not None:
            d["output"] = output
        if kind is not None:
            d["kind"] = kind
        return from_dict(d)

    # -- module objects ----------------------------------------------------
    def kernel(self):
        k = self.blocks["kernel"]
        return make_kernel(k["dim"], drift=(k["drift"], k["drift_params"]),
                           diffusion=(k["diffusion"], k["diffusion_params"]))

    def initial_density(self):
        b = self.blocks["initial"]
        n, d = self.blocks["discretization"]["n"], self.blocks["kernel"]["dim"]
        if b["name"] == "uniform":
            return uniform_density(n, d)
        return cosine_density(n, b["amplitudes"], dim=d)

    def checkpoints(self):
        disc = self.blocks["discretization"]
        return tuple(disc["checkpoints"] or [disc["t_end"]])

    def pde_config(self, spec=None, t_end=None, checkpoints=None):
        disc = self.blocks["discretization"]
        dt = disc["pde_dt"]
        if dt is None:
            dt = (cfl_limit(spec, disc["n"]) if disc["stepper"] == "explicit_rk2"
                  else disc["dt"])
        return PdeConfig(dt=dt, t_end=disc["t_end"] if t_end is None else t_end,
                         stepper=disc["stepper"], mode=disc["mode"],
                         max_iters=disc["max_iters"], tol=disc["picard_tol"],
                         checkpoints=tuple(checkpoints if checkpoints is not None
                                           else self.checkpoints()))

    def sim_config(self):
        disc, part = self.blocks["discretization"], self.blocks["particles"]
        return SimConfig(dt=disc["dt"], t_end=disc["t_end"], seed=part["seed"],
                         interaction=part["interaction"], include_self=part["include_self"])


def parse_config(text, kind=None):
    """Parse JSON text into a validated ExperimentConfig.

    ``kind`` fills in a missing "kind" key (the CLI subcommand); a conflicting
    value is a violation.
    """
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    if kind is not None:
        if raw.get("kind", kind) != kind:
            raise ConfigError([f"config kind {raw['kind']!r} does not match subcommand "
                               f"{kind!r}"])
        raw = {**raw, "kind": kind}
    return from_dict(raw)


def from_dict(raw):
    errs = []
    for k in raw:
        if k not in TOP:
            errs.append(f"unknown key {k!r}{_suggest(k, TOP)}")
    kind = raw.get("kind")
    if kind not in KINDS:
        errs.append(f"kind must be one of {', '.join(KINDS)}; got {kind!r}"
                    + (_suggest(kind, KINDS) if isinstance(kind, str) else ""))
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        errs.append("output must be a non-empty path string")
    blocks = {}
    for name, schema in SCHEMA.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            errs.append(f"{name} must be an object")
            given = {}
        block = {}
        for k, v in given.items():
            if k not in schema:
                errs.append(f"unknown key {name}.{k}{_suggest(k, schema)}")
        for k, (default, tag) in schema.items():
            v = given.get(k, copy.deepcopy(default))
            if not _check_type(v, tag):
                errs.append(f"{name}.{k} has the wrong type ({tag} expected, got {v!r})")
                v = copy.deepcopy(default)
            block[k] = v
        blocks[name] = block
    cfg = ExperimentConfig(kind, output if isinstance(output, str) else "out", blocks)
    if kind in KINDS:
        # checked on the default-filled config so every violation is listed at once
        errs += validate(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    return cfg.serialize()


def _collect(errs, fn):
    try:
        return fn()
    except ConfigError as exc:
        errs.extend(exc.violations)
    except (ChaosLabError, ValueError) as exc:
        errs.append(str(exc))
    return None


def validate(cfg: ExperimentConfig):
    """Every module precondition the config touches, as a list of messages."""
    errs = []
    kind = cfg.kind
    k, disc, part = cfg["kernel"], cfg["discretization"], cfg["particles"]
    met, lde, enum = cfg["metrics"], cfg["lde"], cfg["enumerate"]

    if kind != "enumerate":
        if k["dim"] not in (1, 2):
            errs.append("kernels: dim must be 1 or 2")
        for key in ("drift", "diffusion"):
            if k[key] not in BUILTIN_NAMES:
                errs.append(f"kernels: unknown family {k[key]!r}{_suggest(k[key], BUILTIN_NAMES)}")
        spec = None
        if not errs:
            spec = _collect(errs, lambda: cfg.kernel())
        n = disc["n"]
        if n < 8 or n & (n - 1):
            errs.append("meanfield: n must be a power of two >= 8")
        if cfg["initial"]["name"] not in ("cosine", "uniform"):
            errs.append(f"initial.name must be cosine or uniform, got {cfg['initial']['name']!r}")
        elif not errs:
            _collect(errs, lambda: cfg.initial_density())
        sim_needed = kind in ("simulate", "chaos_study")
        if sim_needed or kind == "solve_pde":
            if not disc["t_end"] > 0:
                errs.append("meanfield: t_end must be positive")
        if sim_needed:
            _collect(errs, lambda: cfg.sim_config().validate(spec))
            for t in cfg.checkpoints():
                if not 0 <= t <= disc["t_end"] + 1e-12:
                    errs.append(f"particles: checkpoint {t} outside [0, t_end]")
                elif disc["dt"] > 0 and abs(t / disc["dt"] - round(t / disc["dt"])) > 1e-6:
                    errs.append(f"particles: checkpoint {t} is not a multiple of dt")
            if not part["replicas"] >= 1:
                errs.append("particles: replicas must be >= 1")
            if any(N < 1 for N in part["N_list"]) or not part["N_list"]:
                errs.append("particles: N_list entries must be >= 1")
        if kind == "chaos_study":
            Ns = part["N_list"]
            if len(Ns) < 2:
                errs.append("chaos: N_list needs at least two values for a slope fit")
            elif any(b <= a for a, b in zip(Ns, Ns[1:])):
                errs.append("chaos: N_list must be strictly increasing")
            if part["replicas"] < 2:
                errs.append("chaos: bootstrap over replicas needs replicas >= 2")
            if met["bootstrap"] < 1:
                errs.append("chaos: bootstrap count must be >= 1")
            if not met["universal_C"] > 0:
                errs.append("chaos: universal_C must be positive")
            if met["workers"] < 1:
                errs.append("chaos: workers must be >= 1")
            for key in ("bins", "bins2"):
                if met[key] is not None and met[key] < 2:
                    errs.append(f"chaos: {key} must be >= 2")
        pde_needed = kind in ("solve_pde", "chaos_study") or (
            kind == "lde_audit" and lde["background_time"] > 0)
        if pde_needed and spec is not None:
            t_end = disc["t_end"] if kind != "lde_audit" else lde["background_time"]
            _collect(errs, lambda: cfg.pde_config(spec, t_end, (t_end,)).validate(spec, n)
                     if n >= 8 and not n & (n - 1) else None)
        if not 0 <= part["seed"] < 2**64:
            errs.append("particles: seed must be an unsigned 64-bit integer")
        if kind == "lde_audit":
            if lde["probes"] < 1:
                errs.append("lde: probes must be >= 1")
            if lde["eta_mode"] not in ("paper_formula", "given"):
                errs.append("lde: eta_mode must be paper_formula or given")
            elif lde["eta_mode"] == "given" and not (lde["eta"] or 0) > 0:
                errs.append("lde: eta_mode given needs a positive eta")
            if any(N < 2 for N in lde["N_list"]):
                errs.append("lde: Monte Carlo needs N >= 2")
            if lde["n_mc"] < 1000:
                errs.append("lde: n_mc must be >= 1000")
            if lde["background_time"] < 0:
                errs.append("lde: background_time must be >= 0")
            if lde["quad_n"] < 32:
                errs.append("lde: quad_n must be >= 32")
            if any(N < 1 or m < 1 for N, m in lde["enumeration"]):
                errs.append("lde: enumeration pairs need N >= 1 and m >= 1")
            if lde["oracle"] and k["dim"] != 1 and lde["enumeration"]:
                errs.append("lde: the integral oracle needs dim = 1")
    else:
        if enum["N"] < 1 or enum["m"] < 1:
            errs.append("lde: enumeration needs N >= 1 and m >= 1")
        if enum["quad_n"] < 32:
            errs.append("lde: quad_n must be >= 32")
        if not 0 <= part["seed"] < 2**64:
            errs.append("particles: seed must be an unsigned 64-bit integer")
    return errs


def default_config(kind="chaos_study", **overrides):
    d = {"kind": kind}
    d.update(overrides)
    return from_dict(d)


def config_keys():
    """Flat documented key list: (dotted key, default, type tag)."""
    out = [("kind", None, "str"), ("output", "out", "str")]
    for name, schema in SCHEMA.items():
        out += [(f"{name}.{k}", d, t) for k, (d, t) in schema.items()]
    return out
