"""Experiment configuration, validation, dispatch, and file outputs.

Configs are UTF-8 JSON with one command block; validation errors name the
offending field and constraint.  Outputs are written atomically (temp file
plus rename) with a manifest of content digests written last, so repeated
runs of one config produce byte-identical data files regardless of the
worker count (timestamps live only in the manifest and are excluded from
the digests).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .bases import SpectralBasis, SpectralField
from .errors import ParseError, RangeError, SchemaError
from .models import DriftSpec, ModelSpec, NoiseSpec
from .paths import ControlPath, TimeGrid

SCHEMA_VERSION = "1"
COMMANDS = ("simulate", "skeleton", "action", "quasipotential", "ldp-lower",
            "ldp-upper", "sweep", "exit-scaling", "exit-place", "verify")

PLOT_KINDS = ("ldp", "exit-scaling", "exit-place", "sweep", "quasipotential")


class UnknownKind(ValueError):
    """export_plotdata got a report kind it does not understand."""


# -- validation helpers -------------------------------------------------------

_SENTINEL = object()


def _require(block, key, path, types, default=_SENTINEL):
    if key not in block:
        if default is _SENTINEL:
            raise SchemaError(f"{path}.{key}", "required field is missing")
        return default
    val = block[key]
    if types is bool:
        if not isinstance(val, bool):
            raise SchemaError(f"{path}.{key}", "must be of type bool")
        return val
    if not isinstance(val, types) or isinstance(val, bool):
        names = getattr(types, "__name__", str(types))
        raise SchemaError(f"{path}.{key}", f"must be of type {names}")
    return val


def _number(block, key, path, default=_SENTINEL, minimum=None, maximum=None,
            strict_min=False):
    if key not in block and default is not _SENTINEL:
        return default
    val = _require(block, key, path, (int, float))
    if minimum is not None:
        if strict_min and not val > minimum:
            raise RangeError(f"{path}.{key}", f"must be > {minimum}")
        if not strict_min and not val >= minimum:
            raise RangeError(f"{path}.{key}", f"must be >= {minimum}")
    if maximum is not None and not val <= maximum:
        raise RangeError(f"{path}.{key}", f"must be <= {maximum}")
    return float(val)


def _integer(block, key, path, default=_SENTINEL, minimum=None):
    if key not in block and default is not _SENTINEL:
        return default
    val = _require(block, key, path, int)
    if minimum is not None and val < minimum:
        raise RangeError(f"{path}.{key}", f"must be >= {minimum}")
    return int(val)


def _string(block, key, path, choices=None, default=_SENTINEL):
    if key not in block and default is not _SENTINEL:
        return default
    val = _require(block, key, path, str)
    if choices is not None and val not in choices:
        raise SchemaError(f"{path}.{key}",
                          f"must be one of {sorted(choices)}")
    return val


def _float_list(block, key, path, default=_SENTINEL, minimum=None):
    if key not in block and default is not _SENTINEL:
        return default
    val = _require(block, key, path, list)
    out = []
    for i, x in enumerate(val):
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise SchemaError(f"{path}.{key}[{i}]", "must be a number")
        if minimum is not None and x < minimum:
            raise RangeError(f"{path}.{key}[{i}]", f"must be >= {minimum}")
        out.append(float(x))
    return out


def _no_unknown(block, path, known):
    for key in block:
        if key not in known:
            raise SchemaError(f"{path}.{key}", "unknown field")


# -- model block --------------------------------------------------------------

_MODEL_KEYS = ("basis", "drift", "noise", "horizon", "state_norm",
               "grid_points", "blowup_factor")


def build_model(block, path="model") -> ModelSpec:
    _no_unknown(block, path, _MODEL_KEYS)
    basis_block = _require(block, "basis", path, dict)
    _no_unknown(basis_block, f"{path}.basis",
                ("kind", "n_modes", "k_max", "domain_length"))
    kind = _string(basis_block, "kind", f"{path}.basis",
                   choices=("dirichlet_interval", "fourier_torus_2d_divfree"))
    if kind == "dirichlet_interval":
        n_modes = _integer(basis_block, "n_modes", f"{path}.basis", minimum=1)
        length = _number(basis_block, "domain_length", f"{path}.basis",
                         default=float(np.pi), minimum=0.0, strict_min=True)
        basis = SpectralBasis.dirichlet_interval(n_modes, length)
    else:
        k_max = _integer(basis_block, "k_max", f"{path}.basis", minimum=1)
        basis = SpectralBasis.torus_2d_divfree(k_max)

    drift_block = _require(block, "drift", path, dict, default={"kind": "none"})
    _no_unknown(drift_block, f"{path}.drift", ("kind", "poly_coeffs"))
    dkind = _string(drift_block, "kind", f"{path}.drift",
                    choices=("none", "reaction_polynomial", "navier_stokes"))
    poly = tuple(_float_list(drift_block, "poly_coeffs", f"{path}.drift",
                             default=[]))
    try:
        drift = DriftSpec(dkind, poly)
    except ValueError as exc:
        raise RangeError(f"{path}.drift.poly_coeffs", str(exc)) from None

    noise_block = _require(block, "noise", path, dict)
    _no_unknown(noise_block, f"{path}.noise",
                ("g_kind", "g_params", "n_noise_modes", "lambda1", "decay",
                 "q_eigenvalues"))
    g_kind = _string(noise_block, "g_kind", f"{path}.noise",
                     choices=("constant", "bounded_rational"),
                     default="constant")
    g_params = tuple(_float_list(noise_block, "g_params", f"{path}.noise",
                                 default=[1.0]))
    try:
        if "q_eigenvalues" in noise_block:
            lam = _float_list(noise_block, "q_eigenvalues", f"{path}.noise",
                              minimum=0.0)
            noise = NoiseSpec(tuple(lam), g_kind, g_params)
        else:
            n_noise = _integer(noise_block, "n_noise_modes", f"{path}.noise",
                               default=basis.n_modes, minimum=1)
            lam1 = _number(noise_block, "lambda1", f"{path}.noise",
                           default=1.0, minimum=0.0)
            default_decay = 2.0 if kind == "fourier_torus_2d_divfree" else 1.5
            decay = _number(noise_block, "decay", f"{path}.noise",
                            default=default_decay, minimum=0.0)
            noise = NoiseSpec.power_decay(lam1, decay, n_noise, g_kind, g_params)
    except ValueError as exc:
        raise RangeError(f"{path}.noise", str(exc)) from None

    horizon = _require(block, "horizon", path, dict)
    _no_unknown(horizon, f"{path}.horizon", ("t_end", "n_steps"))
    t_end = _number(horizon, "t_end", f"{path}.horizon", minimum=0.0,
                    strict_min=True)
    n_steps = _integer(horizon, "n_steps", f"{path}.horizon", minimum=1)

    state_norm = _string(block, "state_norm", path,
                         choices=("auto", "sup", "l2"), default="auto")
    grid_points = _integer(block, "grid_points", path, default=0, minimum=0)
    blowup = _number(block, "blowup_factor", path, default=1e3, minimum=1.0)
    try:
        return ModelSpec(basis, drift, noise, t_end, n_steps, state_norm,
                         grid_points, blowup)
    except ValueError as exc:
        raise RangeError(path, str(exc)) from None


def _field(model: ModelSpec, coeffs, path) -> SpectralField:
    arr = np.zeros(model.basis.n_modes)
    if coeffs is not None:
        if len(coeffs) != model.basis.n_modes:
            raise RangeError(path, f"needs {model.basis.n_modes} coefficients")
        arr = np.asarray([float(c) for c in coeffs])
    return SpectralField(model.basis, arr)


def build_control(block, model: ModelSpec, grid: TimeGrid, x0: SpectralField,
                  path: str) -> ControlPath:
    """Reference/driving control from its config block.

    kinds: ``zero``; ``constant`` (value per noise mode); ``values``
    (explicit node table); ``reach`` (least-norm control to a target for
    diagonal linear models, optionally rescaled to an exact action).
    """
    _no_unknown(block, path, ("kind", "value", "values", "target",
                              "normalize_action"))
    kind = _string(block, "kind", path,
                   choices=("zero", "constant", "values", "reach"))
    k = model.noise.n_noise_modes
    if kind == "zero":
        return ControlPath.zero(grid, k)
    if kind == "constant":
        value = _float_list(block, "value", path)
        if len(value) != k:
            raise RangeError(f"{path}.value", f"needs {k} entries")
        return ControlPath.constant(grid, value)
    if kind == "values":
        rows = _require(block, "values", path, list)
        arr = np.asarray(rows, dtype=float)
        if arr.shape != (grid.n_steps + 1, k):
            raise RangeError(f"{path}.values",
                             f"needs shape ({grid.n_steps + 1}, {k})")
        return ControlPath(grid, arr)
    if not model.is_diagonal_linear:
        raise RangeError(f"{path}.kind",
                         "reach requires a diagonal linear additive model")
    target = _float_list(block, "target", path)
    y = _field(model, target, f"{path}.target")
    from .action import lq_reach_control
    u = lq_reach_control(model, grid, x0, y)
    norm_to = _number(block, "normalize_action", path, default=0.0,
                      minimum=0.0)
    if norm_to > 0.0:
        energy = u.energy
        if energy <= 0:
            raise RangeError(f"{path}.normalize_action",
                             "cannot normalize a zero control")
        u = ControlPath(grid, u.values * np.sqrt(norm_to / energy))
    return u


# -- config object ------------------------------------------------------------

_TOP_KEYS = ("schema_version", "model", "command", "output_dir",
             "master_seed") + COMMANDS


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    schema_version: str
    model: ModelSpec
    command: str
    params: dict
    output_dir: str
    master_seed: int
    raw: dict

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise SchemaError("", "top level must be a JSON object")
    _no_unknown(doc, "config", _TOP_KEYS)
    version = _string(doc, "schema_version", "config", default=SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError("config.schema_version",
                          f"unrecognized version {version!r} "
                          f"(supported: {SCHEMA_VERSION})")
    command = _string(doc, "command", "config", choices=COMMANDS)
    blocks = [c for c in COMMANDS if c in doc]
    if blocks != [command]:
        raise SchemaError("config",
                          f"exactly one command block matching {command!r} "
                          f"must be present (found {blocks})")
    model = build_model(_require(doc, "model", "config", dict))
    params = _require(doc, command, "config", dict)
    from .runner import validate_params
    validate_params(model, command, params)
    output_dir = _string(doc, "output_dir", "config", default="out")
    master_seed = _integer(doc, "master_seed", "config", default=0, minimum=0)
    return ExperimentConfig(version, model, command, dict(params),
                            output_dir, master_seed, doc)


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a config file; errors carry the field path."""
    with open(path, "rb") as fh:
        payload = fh.read()
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError("", f"not valid UTF-8 JSON: {exc}") from None
    return parse_config(doc)


def emit(config: ExperimentConfig) -> dict:
    """Canonical dict form; load_config(emit(c)) round-trips."""
    return json.loads(json.dumps(config.raw, sort_keys=True))


# -- file output --------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_atomic(path: str, data: bytes):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> bytes:
    data = (json.dumps(obj, sort_keys=True, indent=1,
                       allow_nan=True, default=_json_default) + "\n").encode()
    write_atomic(path, data)
    return data


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_csv(path: str, header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    data = ("\n".join(lines) + "\n").encode()
    write_atomic(path, data)
    return data


def write_csv_gz(path: str, header, rows) -> bytes:
    """Gzipped CSV with a zeroed mtime so outputs stay byte-reproducible."""
    import gzip
    import io
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        gz.write(("\n".join(lines) + "\n").encode())
    data = buf.getvalue()
    write_atomic(path, data)
    return data


def export_plotdata(report: dict, kind: str, out_path: str) -> bytes:
    """Tidy plot-ready CSV for a known report kind (one observation/row)."""
    if kind == "ldp":
        header = ["eps", "p_hat", "ci_lo", "ci_hi", "eps_log_p", "margin"]
        rows = [[r["eps"], r["p_hat"], r["ci_low"], r["ci_high"],
                 r["eps_log_p"], r["margin"]] for r in report.get("rows", [])]
    elif kind == "exit-scaling":
        header = ["eps", "mean_tau", "mean_tau_se", "eps_log_mean_tau",
                  "window_prob", "n_censored", "v_ref"]
        rows = [[r["eps"], r["mean_tau"], r["mean_tau_se"],
                 r["eps_log_mean"], r["window_prob"], r["n_censored"],
                 report["v_ref"]] for r in report.get("rows", [])]
    elif kind == "exit-place":
        header = ["cell", "count", "freq", "ci_lo", "ci_hi"]
        rows = [[name, c["count"], c["freq"], c["ci"][0], c["ci"][1]]
                for name, c in report.get("cells", {}).items()]
    elif kind == "sweep":
        header = ["point", "x0", "margin", "passed"]
        rows = [[i, "|".join(_fmt(v) for v in p["x0"]), p["margin"],
                 int(p["passed"])] for i, p in enumerate(report.get("points", []))]
    elif kind == "quasipotential":
        header = ["horizon", "action"]
        rows = [[t, v] for t, v in report.get("per_horizon", [])]
    else:
        raise UnknownKind(f"unknown plot kind {kind!r} "
                          f"(known: {', '.join(PLOT_KINDS)})")
    return write_csv(out_path, header, rows)


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    code_version: str
    created_utc: float
    master_seed: int
    files: dict

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "created_utc": self.created_utc,
            "master_seed": self.master_seed,
            "files": self.files,
        }


def finalize_run(config: ExperimentConfig, out_dir: str,
                 written: dict) -> RunManifest:
    files = {name: hashlib.sha256(data).hexdigest()
             for name, data in sorted(written.items())}
    manifest = RunManifest(config.config_hash(), __version__, time.time(),
                           config.master_seed, files)
    write_json(os.path.join(out_dir, "manifest.json"), manifest.to_dict())
    return manifest
