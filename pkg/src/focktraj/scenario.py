"""Scenario files (JSON) and the built-in presets.

A scenario file looks like::

    {
      "system": {"type": "two_level_atom", "decay_rate": 1.0},
      "packet": {"type": "gaussian", "bandwidth_ratio": 1.0, "center": 0.0},
      "field": {"type": "fock", "n": 1},
      "initial_state": "ground",
      "detection": {"scheme": "counting", "efficiency": 1.0},
      "grid": {"t_start": -4, "t_end": 12, "dt": 0.001},
      "observables": ["excited_population", "purity"],
      "seed": 0
    }

Matrices are nested lists; a complex entry is written ``[re, im]``.  A
general system is ``{"S": ..., "L": ..., "H": ...}``.  Fields can be
``fock``, ``coherent`` (``mean_photons`` or ``alpha``, plus ``truncation``)
or ``coefficients`` (an explicit density matrix).  Baths are a list of
``{"coupling": matrix, "mean_occupation": n}``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .errors import ValidationError
from .integrator import Detection, Scenario, TimeGrid
from .system_model import (PROJ_E, PROJ_G, BathChannel, FieldState, SystemOperators,
                           coherent_coefficients, make_gaussian_wavepacket, two_level_atom)


def parse_matrix(value, name="matrix") -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 3 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    if a.ndim == 2:
        return a.astype(complex)
    raise ValidationError(f"{name}: expected a square matrix of numbers or [re, im] pairs")


def encode_matrix(m) -> list:
    m = np.asarray(m, complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _need(d: Dict, key: str, where: str):
    if key not in d:
        raise ValidationError(f"{where}: missing key {key!r}")
    return d[key]


def _system(spec: Dict) -> SystemOperators:
    kind = spec.get("type", "general")
    if kind == "two_level_atom":
        return two_level_atom(float(spec.get("decay_rate", 1.0)), float(spec.get("detuning", 0.0)))
    if kind == "general":
        L = parse_matrix(_need(spec, "L", "system"), "L")
        d = L.shape[0]
        S = parse_matrix(spec["S"], "S") if "S" in spec else np.eye(d, dtype=complex)
        H = parse_matrix(spec["H"], "H") if "H" in spec else np.zeros((d, d), complex)
        return SystemOperators(S, L, H)
    raise ValidationError(f"unknown system type {kind!r}")


def _packet(spec: Dict):
    kind = spec.get("type", "gaussian")
    if kind != "gaussian":
        raise ValidationError(f"unknown packet type {kind!r}")
    return make_gaussian_wavepacket(float(spec.get("bandwidth_ratio", 1.0)),
                                    float(spec.get("center", 0.0)))


def _field(spec: Dict) -> FieldState:
    kind = _need(spec, "type", "field")
    if kind == "fock":
        return FieldState.fock(int(_need(spec, "n", "field")))
    if kind == "coherent":
        if "alpha" in spec:
            a = spec["alpha"]
            alpha = complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)
        else:
            alpha = math.sqrt(float(_need(spec, "mean_photons", "field")))
        return coherent_coefficients(alpha, int(_need(spec, "truncation", "field")))
    if kind == "coefficients":
        c = parse_matrix(_need(spec, "coeffs", "field"), "field coeffs")
        return FieldState(c.shape[0] - 1, c)
    raise ValidationError(f"unknown field type {kind!r}")


def _initial(value, dim: int) -> np.ndarray:
    if isinstance(value, str):
        if dim != 2:
            raise ValidationError("named initial states need a two-level system")
        named = {"ground": PROJ_G, "excited": PROJ_E}
        if value not in named:
            raise ValidationError(f"unknown initial state {value!r}")
        return named[value].astype(complex)
    return parse_matrix(value, "initial_state")


def scenario_from_dict(spec: Dict[str, Any]) -> Scenario:
    if not isinstance(spec, dict):
        raise ValidationError("scenario must be a JSON object")
    system = _system(_need(spec, "system", "scenario"))
    grid_spec = _need(spec, "grid", "scenario")
    grid = TimeGrid(float(_need(grid_spec, "t_start", "grid")), float(_need(grid_spec, "t_end", "grid")),
                    float(_need(grid_spec, "dt", "grid")))
    det = spec.get("detection", {})
    detection = Detection(det.get("scheme", "counting"), float(det.get("phase", 0.0)),
                          float(det.get("efficiency", 1.0)), det.get("outcomes", "gaussian"),
                          det.get("method", "kraus"))
    baths = tuple(BathChannel(parse_matrix(_need(b, "coupling", "bath"), "bath coupling"),
                              float(b.get("mean_occupation", 0.0)))
                  for b in spec.get("baths", []))
    matrices = tuple((k, parse_matrix(v, k)) for k, v in spec.get("observable_matrices", {}).items())
    observables = tuple(spec.get("observables", ["excited_population"])) + \
        tuple(k for k, _ in matrices if k not in spec.get("observables", []))
    return Scenario(system=system, packet=_packet(spec.get("packet", {})),
                    field=_field(_need(spec, "field", "scenario")),
                    initial_state=_initial(spec.get("initial_state", "ground"), system.dim),
                    grid=grid, detection=detection, baths=baths, n_max=spec.get("n_max"),
                    observables=observables, observable_matrices=matrices,
                    seed=spec.get("seed"))


def _atom(field: Dict, detection: Dict, observables) -> Dict[str, Any]:
    return {"system": {"type": "two_level_atom", "decay_rate": 1.0},
            "packet": {"type": "gaussian", "bandwidth_ratio": 1.0, "center": 0.0},
            "field": field, "initial_state": "ground", "detection": detection,
            "grid": {"t_start": -4.0, "t_end": 12.0, "dt": 1e-3},
            "observables": list(observables), "seed": 0}


_COUNTING_OBS = ("excited_population", "purity", "photon_flux", "cumulative_counts")
_HOMODYNE_OBS = ("bloch_x", "bloch_y", "bloch_z", "excited_population", "purity",
                 "quadrature_current")

PRESETS: Dict[str, Dict[str, Any]] = {}
for _n in (0, 1, 2, 4):
    PRESETS[f"atom-fock{_n}-counting"] = _atom({"type": "fock", "n": _n},
                                               {"scheme": "counting"}, _COUNTING_OBS)
    PRESETS[f"atom-fock{_n}-homodyne"] = _atom({"type": "fock", "n": _n},
                                               {"scheme": "homodyne", "phase": 0.0}, _HOMODYNE_OBS)
for _t in (2, 6, 10):
    PRESETS[f"atom-coherent5-trunc{_t}-homodyne"] = _atom(
        {"type": "coherent", "mean_photons": 5.0, "truncation": _t},
        {"scheme": "homodyne", "phase": 0.0}, _HOMODYNE_OBS)
PRESETS["atom-coherent1-trunc8-homodyne"] = _atom(
    {"type": "coherent", "mean_photons": 1.0, "truncation": 8},
    {"scheme": "homodyne", "phase": 0.0}, _HOMODYNE_OBS)


def preset(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return json.loads(json.dumps(PRESETS[name]))


def load_scenario_dict(source: Union[str, Path]) -> Dict[str, Any]:
    """Read ``preset:NAME`` or a JSON file into a plain dict."""
    src = str(source)
    if src.startswith("preset:"):
        return preset(src[len("preset:"):])
    try:
        with open(src) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {src}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario {src} is not valid JSON: {exc}") from exc


def load_scenario(source: Union[str, Path]) -> Scenario:
    return scenario_from_dict(load_scenario_dict(source))
