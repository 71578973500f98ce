"""Versioned JSON model artifacts.

Arrays are stored exactly as base64-encoded little-endian float64 so that
reloading reproduces every bit and repeated runs write identical files.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .exceptions import DataError
from .funreg.design import TensorBases
from .funreg.fit import FunFit
from .glm import FitConfig, LogisticFit
from .gridcells import GridSpec, ScreenReport
from .ingest import subject_sort_key

FORMAT = "gaitprint-model"
VERSION = 1


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "f8le": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["f8le"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing model file {path}")
    d = json.loads(path.read_text())
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise DataError(f"{path}: not a version-{VERSION} {FORMAT} artifact")
    return d


def _file_name(subject: str) -> str:
    return f"subject_{subject}.json"


def save_logistic_models(model_dir, fits: Mapping[str, LogisticFit], grid: GridSpec, screen: ScreenReport,
                         cfg: FitConfig, config_hash: str, failures: Mapping[str, str] | None = None) -> None:
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    subjects = sorted(fits, key=subject_sort_key)
    dump_json(model_dir / "manifest.json", {
        "format": FORMAT, "version": VERSION, "method": "gridcell-logistic", "config_hash": config_hash,
        "subjects": subjects, "grid": grid.to_dict(), "fit": cfg.to_dict(),
        "screen": json.loads(screen.to_json()), "failures": dict(failures or {}),
    })
    for s in subjects:
        f = fits[s]
        dump_json(model_dir / _file_name(s), {
            "format": FORMAT, "version": VERSION, "method": "gridcell-logistic", "config_hash": config_hash,
            "target": f.target, "converged": f.converged, "n_iter": f.n_iter, "deviance": f.deviance,
            "column_names": f.column_names, "beta": encode_array(f.beta), "cov": encode_array(f.cov),
            "center": encode_array(f.center), "scale": encode_array(f.scale),
            "penalty_diag": encode_array(f.penalty_diag),
        })


def load_manifest(model_dir) -> dict:
    return _load_json(Path(model_dir) / "manifest.json")


def load_logistic_models(model_dir) -> tuple[dict[str, LogisticFit], dict]:
    man = load_manifest(model_dir)
    if man["method"] != "gridcell-logistic":
        raise DataError(f"{model_dir} holds {man['method']} models")
    fits = {}
    for s in man["subjects"]:
        d = _load_json(Path(model_dir) / _file_name(s))
        fits[s] = LogisticFit(d["target"], decode_array(d["beta"]), decode_array(d["cov"]), d["converged"],
                              d["n_iter"], d["deviance"], d["column_names"], decode_array(d["center"]),
                              decode_array(d["scale"]), decode_array(d["penalty_diag"]))
    return fits, man


def save_funreg_models(model_dir, fits: Mapping[str, FunFit], bases: TensorBases, lag_stride: int,
                       cfg: FitConfig, config_hash: str, lambda_grid=None,
                       failures: Mapping[str, str] | None = None) -> None:
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    subjects = sorted(fits, key=subject_sort_key)
    dump_json(model_dir / "manifest.json", {
        "format": FORMAT, "version": VERSION, "method": "funreg", "config_hash": config_hash,
        "subjects": subjects, "bases": bases.to_dict(), "lag_stride": lag_stride, "fit": cfg.to_dict(),
        "lambda_grid": [list(l) for l in (lambda_grid or [])], "failures": dict(failures or {}),
    })
    for s in subjects:
        f = fits[s]
        dump_json(model_dir / _file_name(s), {
            "format": FORMAT, "version": VERSION, "method": "funreg", "config_hash": config_hash,
            "target": f.target, "intercept": f.intercept, "beta": encode_array(f.beta), "lambda": list(f.lam),
            "deviance": f.deviance, "converged": f.converged, "n_iter": f.n_iter,
        })


def load_funreg_models(model_dir) -> tuple[dict[str, FunFit], TensorBases, dict]:
    man = load_manifest(model_dir)
    if man["method"] != "funreg":
        raise DataError(f"{model_dir} holds {man['method']} models")
    fits = {}
    for s in man["subjects"]:
        d = _load_json(Path(model_dir) / _file_name(s))
        fits[s] = FunFit(d["target"], d["intercept"], decode_array(d["beta"]), tuple(d["lambda"]),
                         d["deviance"], d["converged"], d["n_iter"])
    return fits, TensorBases.from_dict(man["bases"]), man
