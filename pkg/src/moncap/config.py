"""Strict experiment-config parsing: schema-valid, unknown keys rejected."""

from __future__ import annotations

import json
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .flux import (Flux, adversarial_fixture, anisotropic_p, combine,
                   flat_core_p, linear_matrix, p_laplacian, s_transform,
                   weighted_p_laplacian)
from .mesh import ShapeExpr, shape_from_json
from .solver import SolverOptions

_TOP_KEYS = {"mesh", "flux", "E", "F", "s", "solver", "suite", "s_grid",
             "N_list", "oracle", "check", "chain", "output_dir", "seed",
             "clip_E_to_F"}
_MESH_KEYS = {"N", "L"}
_FLUX_KEYS = {"kind", "p", "params"}
_SOLVER_KEYS = {"tol_res", "max_newton", "eps_schedule", "inner_tol", "init",
                "init_seed", "picard_fallback", "jacobian_floor"}
_SUITE_KEYS = {"name", "instances", "fluxes", "s_grid", "n_refine"}
_CHECK_KEYS = {"n_samples", "xi_radius"}
_CHAIN_KEYS = {"mode", "shapes", "fixed"}
_ORACLE_KEYS = {"value", "radial", "strip", "reference_flux", "tol"}

_FLUX_PARAM_KEYS = {
    "p_laplacian": set(),
    "weighted_p_laplacian": {"w_min", "w_max", "kx", "ky"},
    "anisotropic_p": {"alpha", "beta"},
    "linear_matrix": {"M"},
    "flat_core_p": {"rho0"},
    "s_transformed": {"inner", "s"},
    "weighted_sum": {"parts"},
    "adversarial_fixture": set(),
}


def _reject_unknown(obj: dict, allowed: set, path: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path)


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"missing required key {key!r}", path)
    return obj[key]


def _number(value, path: str, integer=False) -> float:
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok or (integer and int(value) != value):
        kind = "integer" if integer else "number"
        raise ConfigError(f"expected a {kind}, got {value!r}", path)
    return int(value) if integer else float(value)


def parse_flux(spec, path: str = "flux") -> Flux:
    if not isinstance(spec, dict):
        raise ConfigError("flux spec must be an object", path)
    _reject_unknown(spec, _FLUX_KEYS, path)
    kind = _need(spec, "kind", path)
    if kind not in _FLUX_PARAM_KEYS:
        raise ConfigError(f"unknown flux kind {kind!r}", path)
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object", f"{path}.params")
    _reject_unknown(params, _FLUX_PARAM_KEYS[kind], f"{path}.params")

    if kind == "adversarial_fixture":
        return adversarial_fixture()
    if kind == "linear_matrix":
        m = _need(params, "M", f"{path}.params")
        return linear_matrix(np.asarray(m, dtype=float))
    if kind == "s_transformed":
        inner = parse_flux(_need(params, "inner", f"{path}.params"),
                           f"{path}.params.inner")
        s = _number(_need(params, "s", f"{path}.params"), f"{path}.params.s")
        return s_transform(inner, s)
    if kind == "weighted_sum":
        parts = _need(params, "parts", f"{path}.params")
        if not isinstance(parts, list) or len(parts) != 2:
            raise ConfigError("parts must be a list of two [weight, flux] "
                              "pairs", f"{path}.params.parts")
        (w1, f1), (w2, f2) = parts
        return combine(parse_flux(f1, f"{path}.params.parts[0]"),
                       parse_flux(f2, f"{path}.params.parts[1]"),
                       _number(w1, f"{path}.params.parts[0]"),
                       _number(w2, f"{path}.params.parts[1]"))

    p = _number(_need(spec, "p", path), f"{path}.p")
    if kind == "p_laplacian":
        return p_laplacian(p)
    if kind == "weighted_p_laplacian":
        return weighted_p_laplacian(
            p,
            _number(_need(params, "w_min", f"{path}.params"),
                    f"{path}.params.w_min"),
            _number(_need(params, "w_max", f"{path}.params"),
                    f"{path}.params.w_max"),
            _number(params.get("kx", 1.0), f"{path}.params.kx"),
            _number(params.get("ky", 1.0), f"{path}.params.ky"))
    if kind == "anisotropic_p":
        return anisotropic_p(
            p,
            _number(_need(params, "alpha", f"{path}.params"),
                    f"{path}.params.alpha"),
            _number(_need(params, "beta", f"{path}.params"),
                    f"{path}.params.beta"))
    if kind == "flat_core_p":
        return flat_core_p(
            p, _number(_need(params, "rho0", f"{path}.params"),
                       f"{path}.params.rho0"))
    raise ConfigError(f"unhandled flux kind {kind!r}", path)


def parse_shape(spec, path: str) -> ShapeExpr:
    try:
        return shape_from_json(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad shape: {exc}", path) from exc


def parse_solver(spec, path: str = "solver") -> SolverOptions:
    if not isinstance(spec, dict):
        raise ConfigError("solver options must be an object", path)
    _reject_unknown(spec, _SOLVER_KEYS, path)
    kwargs: dict[str, Any] = {}
    if "tol_res" in spec and spec["tol_res"] is not None:
        kwargs["tol_res"] = _number(spec["tol_res"], f"{path}.tol_res")
    if "max_newton" in spec:
        kwargs["max_newton"] = _number(spec["max_newton"],
                                       f"{path}.max_newton", integer=True)
    if "eps_schedule" in spec:
        sched = spec["eps_schedule"]
        if not isinstance(sched, list) or not sched:
            raise ConfigError("eps_schedule must be a nonempty list",
                              f"{path}.eps_schedule")
        kwargs["eps_schedule"] = tuple(
            _number(v, f"{path}.eps_schedule[{k}]")
            for k, v in enumerate(sched))
    if "inner_tol" in spec:
        kwargs["inner_tol"] = _number(spec["inner_tol"], f"{path}.inner_tol")
    if "init" in spec:
        if spec["init"] not in ("zero", "linear_blend", "random"):
            raise ConfigError("init must be zero|linear_blend|random",
                              f"{path}.init")
        kwargs["init"] = spec["init"]
    if "init_seed" in spec:
        kwargs["init_seed"] = _number(spec["init_seed"], f"{path}.init_seed",
                                      integer=True)
    if "picard_fallback" in spec:
        if not isinstance(spec["picard_fallback"], bool):
            raise ConfigError("picard_fallback must be a boolean",
                              f"{path}.picard_fallback")
        kwargs["picard_fallback"] = spec["picard_fallback"]
    if "jacobian_floor" in spec:
        kwargs["jacobian_floor"] = _number(spec["jacobian_floor"],
                                           f"{path}.jacobian_floor")
    try:
        return SolverOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc


class ExperimentConfig:
    """Validated experiment configuration; raw dict kept for hashing."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(raw, _TOP_KEYS, "config")
        self.raw = raw

        mesh = raw.get("mesh")
        self.mesh_n: Optional[int] = None
        self.mesh_l: float = 1.0
        if mesh is not None:
            if not isinstance(mesh, dict):
                raise ConfigError("mesh must be an object", "mesh")
            _reject_unknown(mesh, _MESH_KEYS, "mesh")
            self.mesh_n = _number(_need(mesh, "N", "mesh"), "mesh.N",
                                  integer=True)
            if self.mesh_n < 2:
                raise ConfigError("N must be >= 2", "mesh.N")
            self.mesh_l = _number(mesh.get("L", 1.0), "mesh.L")
            if self.mesh_l <= 0:
                raise ConfigError("L must be positive", "mesh.L")

        self.flux = parse_flux(raw["flux"]) if "flux" in raw else None
        self.e_shape = parse_shape(raw["E"], "E") if "E" in raw else None
        self.f_shape = parse_shape(raw["F"], "F") if "F" in raw else None
        self.s = _number(raw.get("s", 1.0), "s")
        self.solver = parse_solver(raw["solver"]) if "solver" in raw \
            else SolverOptions()
        self.seed = int(_number(raw.get("seed", 0), "seed", integer=True))
        self.output_dir = raw.get("output_dir", "out")
        if not isinstance(self.output_dir, str):
            raise ConfigError("output_dir must be a string", "output_dir")
        self.clip_e_to_f = raw.get("clip_E_to_F", False)
        if not isinstance(self.clip_e_to_f, bool):
            raise ConfigError("clip_E_to_F must be a boolean", "clip_E_to_F")

        self.s_grid = None
        if "s_grid" in raw:
            grid = raw["s_grid"]
            if not isinstance(grid, list) or len(grid) < 2:
                raise ConfigError("s_grid must be a list of at least two "
                                  "numbers", "s_grid")
            self.s_grid = [_number(v, f"s_grid[{k}]")
                           for k, v in enumerate(grid)]

        self.n_list = None
        if "N_list" in raw:
            lst = raw["N_list"]
            if not isinstance(lst, list) or not lst:
                raise ConfigError("N_list must be a nonempty list", "N_list")
            self.n_list = [int(_number(v, f"N_list[{k}]", integer=True))
                           for k, v in enumerate(lst)]

        self.suite = None
        if "suite" in raw:
            suite = raw["suite"]
            if not isinstance(suite, dict):
                raise ConfigError("suite must be an object", "suite")
            _reject_unknown(suite, _SUITE_KEYS, "suite")
            name = _need(suite, "name", "suite")
            if name not in ("order", "subadditivity", "bounds", "s",
                            "invariance", "sequence"):
                raise ConfigError(f"unknown suite {name!r}", "suite.name")
            self.suite = {
                "name": name,
                "instances": int(_number(suite.get("instances", 25),
                                         "suite.instances", integer=True)),
                "fluxes": [parse_flux(fs, f"suite.fluxes[{k}]")
                           for k, fs in enumerate(suite.get("fluxes", []))],
                "s_grid": suite.get("s_grid"),
                "n_refine": suite.get("n_refine"),
            }

        self.check = {"n_samples": 10_000, "xi_radius": 10.0}
        if "check" in raw:
            chk = raw["check"]
            if not isinstance(chk, dict):
                raise ConfigError("check must be an object", "check")
            _reject_unknown(chk, _CHECK_KEYS, "check")
            if "n_samples" in chk:
                self.check["n_samples"] = int(
                    _number(chk["n_samples"], "check.n_samples", integer=True))
            if "xi_radius" in chk:
                self.check["xi_radius"] = _number(chk["xi_radius"],
                                                  "check.xi_radius")

        self.chain = None
        if "chain" in raw:
            chain = raw["chain"]
            if not isinstance(chain, dict):
                raise ConfigError("chain must be an object", "chain")
            _reject_unknown(chain, _CHAIN_KEYS, "chain")
            mode = _need(chain, "mode", "chain")
            if mode not in ("E", "F"):
                raise ConfigError("chain.mode must be 'E' or 'F'",
                                  "chain.mode")
            shapes = _need(chain, "shapes", "chain")
            if not isinstance(shapes, list) or len(shapes) < 2:
                raise ConfigError("chain.shapes needs at least two entries",
                                  "chain.shapes")
            self.chain = {
                "mode": mode,
                "shapes": [parse_shape(sh, f"chain.shapes[{k}]")
                           for k, sh in enumerate(shapes)],
                "fixed": parse_shape(_need(chain, "fixed", "chain"),
                                     "chain.fixed"),
            }

        self.oracle = None
        if "oracle" in raw:
            orc = raw["oracle"]
            if not isinstance(orc, dict):
                raise ConfigError("oracle must be an object", "oracle")
            _reject_unknown(orc, _ORACLE_KEYS, "oracle")
            self.oracle = dict(orc)
            if "reference_flux" in orc:
                self.oracle["reference_flux"] = parse_flux(
                    orc["reference_flux"], "oracle.reference_flux")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return ExperimentConfig(raw)
