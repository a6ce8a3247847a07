"""Report serialization and data-file input.

Reports are JSON documents written with 17-significant-digit floats, so
re-parsing a report recovers every number bit-exactly.  Non-finite values
serialize as null.  Input data files hold one observation per line, with
``#`` comments and an optional single non-numeric header line.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .em import FitResult
from .engine import MSCSResult, TestRecord
from .errors import DataFormatError
from .gmm import MixtureParams, Sample
from .sim import SimConfig, SimResult


# ---------------------------------------------------------------------------
# JSON with bit-exact floats
# ---------------------------------------------------------------------------

def _format_float(x: float) -> str:
    if not np.isfinite(x):
        return "null"
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(pad_in + s for s in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(pad_in + s for s in items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj, indent: int = 2) -> str:
    """Serialize a report tree to JSON text."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj))


# ---------------------------------------------------------------------------
# Input data files
# ---------------------------------------------------------------------------

def parse_observations(text: str) -> tuple[Sample, list[str]]:
    """Parse observation text; returns the sample and any reader notices."""
    values = []
    notices = []
    saw_value = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
            saw_value = True
        except ValueError:
            if not saw_value and not values:
                notices.append(f"skipped header line {lineno}: {line!r}")
                saw_value = True
                continue
            raise DataFormatError(f"not a number: {line!r}", line=lineno) from None
    if not values:
        raise DataFormatError("no observations found")
    return Sample(np.asarray(values)), notices


def read_observations(path) -> tuple[Sample, list[str]]:
    """Read a one-observation-per-line data file."""
    return parse_observations(Path(path).read_text())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Report trees
# ---------------------------------------------------------------------------

def build_manifest(command: str, options: dict, input_path=None) -> dict:
    """Everything needed to re-run a command and reproduce its outputs."""
    return {
        "command": command,
        "options": dict(options),
        "artifact_version": __version__,
        "input_sha256": sha256_file(input_path) if input_path else None,
    }


def params_to_dict(params: MixtureParams) -> dict:
    return {
        "k": params.k,
        "weights": list(params.weights),
        "means": list(params.means),
        "variances": list(params.variances),
    }


def params_from_dict(tree: dict) -> MixtureParams:
    return MixtureParams(
        np.asarray(tree["weights"], dtype=float),
        np.asarray(tree["means"], dtype=float),
        np.asarray(tree["variances"], dtype=float),
    )


def fit_to_dict(result: FitResult) -> dict:
    return {
        "k": result.k,
        "params": params_to_dict(result.params),
        "loglik": result.loglik,
        "n_iter": result.n_iter,
        "converged": result.converged,
        "n_restarts_used": result.n_restarts_used,
        "degenerate_restarts": result.degenerate_restarts,
    }


def record_to_dict(record: TestRecord) -> dict:
    return {
        "k": record.k,
        "side": record.side,
        "lrt": record.lrt,
        "delta": record.delta,
        "lrt_star": record.lrt_star,
        "q_alpha": record.q_alpha,
        "pass": record.passed,
        "lambdas": list(record.lambdas),
        "diagnostic": record.diagnostic,
    }


def mscs_to_dict(result: MSCSResult) -> dict:
    return {
        "k_hat": result.k_hat,
        "k_lower": result.k_lower,
        "k_upper": result.k_upper,
        "gamma": list(result.gamma),
        "alpha": result.alpha,
        "penalty": result.penalty.value,
        "ref_kind": result.ref_kind.value,
        "criterion_values": list(result.criterion_values),
        "records": [record_to_dict(r) for r in result.records],
        "fits": [fit_to_dict(f) for f in result.fits],
    }


def sim_config_to_dict(config: SimConfig) -> dict:
    return {
        "scenario": config.scenario,
        "n": config.n,
        "B": config.B,
        "alpha": config.alpha,
        "penalty": config.penalty.value,
        "ref_kind": config.ref_kind.value,
        "k_max": config.k_max,
        "master_seed": config.master_seed,
        "mc_draws": config.mc_draws,
        "em": {
            "max_iter": config.em.max_iter,
            "rel_tol": config.em.rel_tol,
            "n_restarts": config.em.n_restarts,
            "variance_floor_factor": config.em.variance_floor_factor,
        },
    }


def sim_to_dict(result: SimResult, config: SimConfig) -> dict:
    return {
        "config": sim_config_to_dict(config),
        "coverage": result.coverage,
        "mean_size": result.mean_size,
        "pct_khat_correct": result.pct_khat_correct,
        "n_failed": result.n_failed,
        "failures": list(result.failures),
        "per_replicate": [
            {"covered": c, "size": s, "k_hat": k} for c, s, k in result.per_replicate
        ],
    }
