"""JSON round-trips for plants, controllers and certificates."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, LftError, NonFiniteResult
from .lft_model import (ClosedLoopLft, LftController, LftPlant, UncertaintyStructure, _PLANT_BLOCKS,
                        validate_plant)

DIM_KEYS = ("n", "np", "nd", "ne", "nu", "ny")
CONTROLLER_BLOCKS = ("Ak", "Bk1", "Bk0", "Ck1", "Ck0", "Dk10", "Dk00")


class InvalidDocument(LftError, ValueError):
    """Malformed or inconsistent JSON input."""


def _mat(a) -> list:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NonFiniteResult("refusing to serialize non-finite matrix")
    return [[float(v) for v in row] for row in a]


def _read_mat(raw, shape, name):
    if raw is None:
        return np.zeros(shape)
    a = np.asarray(raw, dtype=float)
    if a.size == 0:
        a = a.reshape(shape)
    if a.shape != tuple(shape):
        raise InvalidDocument(f"matrix {name!r} has shape {a.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(a)):
        raise InvalidDocument(f"matrix {name!r} has non-finite entries")
    return a


def plant_to_dict(p: LftPlant) -> dict:
    d = {k: int(getattr(p, k)) for k in DIM_KEYS}
    d["ts"] = float(p.ts)
    for b in _PLANT_BLOCKS:
        d[b] = _mat(getattr(p, b))
    d["structure"] = p.structure.to_dict()
    return d


def _block_shape(name, dims):
    rows = {"A": "n", "B": "n", "C0": "np", "C1": "ne", "C2": "ny",
            "D0": "np", "D1": "ne", "D2": "ny"}
    cols = {"0": "np", "1": "nd", "2": "nu"}
    if name == "A":
        return dims["n"], dims["n"]
    r = rows[name[0]] if name[0] == "B" else rows[name[:2]]
    c = "n" if name[0] == "C" else cols[name[-1]]
    return dims[r], dims[c]


def plant_from_dict(d: dict) -> LftPlant:
    if not isinstance(d, dict):
        raise InvalidDocument("plant document must be a JSON object")
    try:
        dims = {k: int(d[k]) for k in DIM_KEYS}
        ts = float(d["ts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDocument(f"missing or invalid dimension field: {exc}") from None
    if any(v < 0 for v in dims.values()) or not math.isfinite(ts) or ts < 0:
        raise InvalidDocument("dimensions must be non-negative and ts finite and >= 0")
    structure = UncertaintyStructure.from_dict(d.get("structure", {}))
    if structure.n_p != dims["np"]:
        raise InvalidDocument(f"structure size {structure.n_p} does not match np = {dims['np']}")
    blocks = {b: _read_mat(d.get(b), _block_shape(b, dims), b) for b in _PLANT_BLOCKS}
    try:
        p = LftPlant(n=dims["n"], np=dims["np"], nd=dims["nd"], ne=dims["ne"], nu=dims["nu"], ny=dims["ny"],
                     structure=structure, ts=ts, **blocks)
        validate_plant(p)
    except (DimensionMismatch, ValueError) as exc:
        raise InvalidDocument(str(exc)) from None
    return p


def plant_as_closed_loop(p: LftPlant) -> ClosedLoopLft:
    """View a plant without control channels (nu = ny = 0) as a closed loop."""
    if p.nu or p.ny:
        raise InvalidDocument("plant has control channels; supply a controller")
    return ClosedLoopLft.create(A=p.A, B0=p.B0, B1=p.B1, C0=p.C0, C1=p.C1, D00=p.D00, D01=p.D01,
                                D10=p.D10, D11=p.D11, structure=p.structure, ts=p.ts)


def controller_to_dict(K) -> dict:
    if isinstance(K, LftController):
        d = {"kind": "lft", "nk": K.nk, "np": K.np, "nu": K.Ck1.shape[0], "ny": K.Bk1.shape[1]}
        d.update({b: _mat(getattr(K, b)) for b in CONTROLLER_BLOCKS})
        return d
    F = np.asarray(K, dtype=float)
    return {"kind": "state_feedback", "F": _mat(F)}


def controller_from_dict(d: dict):
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "state_feedback":
        F = np.asarray(d["F"], dtype=float)
        if F.ndim != 2 or not np.all(np.isfinite(F)):
            raise InvalidDocument("state-feedback gain must be a finite matrix")
        return F
    if kind == "lft":
        try:
            nk, npp, nu, ny = (int(d[k]) for k in ("nk", "np", "nu", "ny"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDocument(f"controller missing dimension {exc}") from None
        shapes = {"Ak": (nk, nk), "Bk1": (nk, ny), "Bk0": (nk, npp), "Ck1": (nu, nk),
                  "Ck0": (npp, nk), "Dk10": (nu, npp), "Dk00": (npp, npp)}
        mats = {b: _read_mat(d.get(b), shapes[b], b) for b in CONTROLLER_BLOCKS}
        return LftController(**mats)
    raise InvalidDocument(f"unknown controller kind {kind!r}")


def certificate_to_dict(cert) -> dict:
    return {"status": cert.status, "gamma": float(cert.gamma),
            "P_minus": _mat(cert.P_minus), "P_plus": _mat(cert.P_plus),
            "X": _mat(cert.X), "Q": _mat(cert.Q),
            "margins": {k: float(v) for k, v in cert.margins.items()},
            "structure": cert.structure.to_dict()}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=False)


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidDocument(f"cannot read {path}: {exc}") from None


def save_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc) + "\n", encoding="utf-8")


def load_plant(path) -> LftPlant:
    return plant_from_dict(load_json(path))


def save_plant(p: LftPlant, path) -> None:
    save_json(plant_to_dict(p), path)
