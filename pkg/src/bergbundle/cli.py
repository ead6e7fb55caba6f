"""Config-driven experiment runner for the verification campaigns.

Configs are single JSON documents validated against the published schema
(see README): unknown keys are errors, not warnings, so a typo in a
tolerance key cannot silently fake a pass.  Campaigns that sample
(curvature, fibration, validate) must carry a seed.  Reports are written
atomically and replay byte-identically apart from the wall-time field.

Exit codes: 0 all checks pass, 1 check failure, 2 config error,
3 numerical abort (conditioning or decay guards).
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backend import ENV_OUTDIR, backend_info, set_threads
from .bergman import Basis, GramError, gram
from .curvature import (
    blocks_text,
    curvature_direct,
    curvature_subbundle,
    dual_curvature_check,
    griffiths_delta,
    hermiticity_residual,
    hormander_check,
    nakano_delta,
    route_deviation,
    sample_tuples,
    schur_lower_bound_check,
)
from .fibration import (
    DecayError,
    builtin_fibration,
    det_transform_check,
    fibration_nakano,
    rank_check,
)
from .numerics import (
    ConditioningError,
    DomainSpec,
    GridError,
    NotPositiveDefiniteError,
    build_grid,
    truncation_decay_bound,
)
from .pshcheck import (
    GridFunction,
    fd_complex_hessian,
    grid_function_from_callable,
    kernel_along_map,
    poly_map,
    psh_report,
)
from .weights import (
    DegenerateHessianError,
    builtin,
    check_psh,
    default_probes,
    schur_D,
    validate_derivatives,
)

COMMANDS = ("curvature", "kernel-psh", "fibration", "validate")

_TOLERANCE_DEFAULTS = {
    "curvature": {
        "hermiticity_residual": 1e-10,
        "route_final_rel": 1e-3,
        "route_monotone_noise": 1e-9,
        "dual_residual": 1e-10,
        "hormander_slack": 1e-8,
        "schur_bound_slack": 1e-6,
        "order_slack": 1e-10,
    },
    "kernel-psh": {
        "psh_tol_factor": 1.0,
    },
    "fibration": {
        "det_residual": 1e-10,
        "route_deviation": 1e-3,
    },
    "validate": {
        "derivative_deviation": 1e-4,
        "congruence_residual": 1e-8,
    },
}


class ConfigError(ValueError):
    """Invalid configuration document."""


# ---------------------------------------------------------------------------
# schema validation
# ---------------------------------------------------------------------------

def _fail(path: str, message: str):
    raise ConfigError(f"config key {path!r}: {message}")


def _take(cfg: dict, path: str, required: dict, optional: dict) -> dict:
    if not isinstance(cfg, dict):
        _fail(path or "<root>", "expected an object")
    out = {}
    known = set(required) | set(optional)
    for key in cfg:
        if key not in known:
            _fail(f"{path}{key}", "unknown key")
    for key, check in required.items():
        if key not in cfg:
            _fail(f"{path}{key}", "missing required key")
        out[key] = check(cfg[key], f"{path}{key}")
    for key, (check, default) in optional.items():
        out[key] = check(cfg[key], f"{path}{key}") if key in cfg else default
    return out


def _an_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {v!r}")
    return v


def _a_number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    return float(v)


def _a_bool(v, path):
    if not isinstance(v, bool):
        _fail(path, f"expected a boolean, got {v!r}")
    return v


def _a_string(v, path):
    if not isinstance(v, str):
        _fail(path, f"expected a string, got {v!r}")
    return v


def _a_pair(v, path):
    if not isinstance(v, list) or len(v) != 2:
        _fail(path, f"expected a [re, im] pair, got {v!r}")
    return [_a_number(v[0], path), _a_number(v[1], path)]


def _number_list(v, path):
    if not isinstance(v, list):
        _fail(path, "expected a list of numbers")
    return [_a_number(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _nonempty_number_list(v, path):
    out = _number_list(v, path)
    if not out:
        _fail(path, "list must not be empty")
    return out


def _int_list(v, path):
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of integers")
    return [_an_int(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _pair_list(v, path):
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of [re, im] pairs")
    return [_a_pair(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _t_points(v, path):
    if not isinstance(v, list) or not v:
        _fail(path, "expected a non-empty list of parameter points")
    return [_pair_list(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _weight_spec(v, path):
    return _take(v, f"{path}.", {"name": _a_string},
                 {"params": (_number_list, [])})


def _domain_spec(v, path):
    return _take(
        v, f"{path}.",
        {"kind": _a_string, "radii": _nonempty_number_list, "quad_order": _int_list},
        {"gaussian_decay": (_a_bool, False)},
    )


def _map_spec(v, path):
    return _take(v, f"{path}.", {"coeffs": _pair_list}, {})


def _tgrid_spec(v, path):
    return _take(
        v, f"{path}.",
        {"center": _a_pair, "halfwidth": _a_number, "points": _an_int},
        {},
    )


def _expect_value(v, path):
    return _take(v, f"{path}.", {"value": _a_number},
                 {"rtol": (_a_number, 0.02), "atol": (_a_number, 1e-3)})


def _tolerances_for(command):
    defaults = _TOLERANCE_DEFAULTS[command]

    def check(v, path):
        return _take(v, f"{path}.", {},
                     {k: (_a_number, dv) for k, dv in defaults.items()})

    return check, dict(defaults)


def validate_config(cfg: dict) -> dict:
    """Validate a raw config dict and return it with all defaults applied."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigError(
            f"config key 'command': expected one of {COMMANDS}, got {command!r}"
        )
    tol_check, tol_default = _tolerances_for(command)
    common_opt = {
        "output": (_a_string, None),
        "tolerances": (tol_check, tol_default),
    }
    if command == "curvature":
        out = _take(
            cfg, "",
            {
                "command": _a_string,
                "weight": _weight_spec,
                "domain": _domain_spec,
                "basis_degree": _an_int,
                "t_points": _t_points,
                "seed": _an_int,
            },
            {
                **common_opt,
                "convergence_degrees": (_int_list, [4, 6, 8, 10]),
                "samples": (_an_int, 100),
                "expect_flat_rel": (_a_number, None),
                "expect_nakano": (_expect_value, None),
                "export_blocks": (_a_bool, False),
            },
        )
    elif command == "kernel-psh":
        out = _take(
            cfg, "",
            {
                "command": _a_string,
                "weight": _weight_spec,
                "domain": _domain_spec,
                "basis_degree": _an_int,
                "map": _map_spec,
                "t_grid": _tgrid_spec,
            },
            {
                **common_opt,
                "negative_control": (_a_bool, False),
                "expect_log_hessian": (_expect_value, None),
                "expect_constant": (_expect_value, None),
                "expect_center_value": (_expect_value, None),
            },
        )
    elif command == "fibration":
        out = _take(
            cfg, "",
            {
                "command": _a_string,
                "twist": _an_int,
                "fiber_weight": _weight_spec,
                "t_grid": _tgrid_spec,
                "seed": _an_int,
            },
            {
                **common_opt,
                "quad_order": (_an_int, 40),
                "samples": (_an_int, 100),
                "crosscheck": (_a_bool, True),
                "expect_nakano_min": (_a_number, None),
            },
        )
    else:
        out = _take(
            cfg, "",
            {"command": _a_string, "weight": _weight_spec, "seed": _an_int},
            {
                **common_opt,
                "probes": (_an_int, 50),
                "t_radius": (_a_number, 0.8),
                "z_radius": (_a_number, 1.5),
            },
        )
    return out


def _materialize_domain(spec: dict) -> DomainSpec:
    try:
        return DomainSpec(
            kind=spec["kind"],
            radii=tuple(spec["radii"]),
            quad_order=tuple(spec["quad_order"]),
            gaussian_decay=spec["gaussian_decay"],
        )
    except GridError as exc:
        raise ConfigError(f"config key 'domain': {exc}") from exc


def _materialize_weight(spec: dict):
    try:
        return builtin(spec["name"], spec["params"])
    except ValueError as exc:
        raise ConfigError(f"config key 'weight': {exc}") from exc


def _complex_of(pair) -> complex:
    return complex(pair[0], pair[1])


def _decay_warnings(domain_spec: dict, degree: int) -> list:
    warnings_list = []
    if domain_spec["kind"] == "plane-truncation":
        diag = truncation_decay_bound(domain_spec["radii"][0], degree)
        if not diag["crude_bound_ok"]:
            warnings_list.append(
                "plane-truncation decay bound exp(-R^2) R^(2N+2) = "
                f"{diag['crude_bound']:.3e} exceeds 1e-12 (advisory); "
                f"exact relative moment tail {diag['relative_tail']:.3e}"
            )
        warnings_list.append(
            f"decay diagnostic: crude={diag['crude_bound']:.6e} "
            f"relative_tail={diag['relative_tail']:.6e}"
        )
    return warnings_list


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------

def _campaign_curvature(cfg: dict) -> dict:
    weight = _materialize_weight(cfg["weight"])
    domain = _materialize_domain(cfg["domain"])
    grid = build_grid(domain)
    tol = cfg["tolerances"]
    t_points = []
    for raw in cfg["t_points"]:
        if len(raw) != weight.m:
            raise ConfigError(
                f"config key 't_points': weight {weight.name} has {weight.m} "
                f"parameter(s), got a point with {len(raw)}"
            )
        t_points.append(np.array([_complex_of(p) for p in raw]))
    degrees = sorted(set(cfg["convergence_degrees"]) | {cfg["basis_degree"]})
    bases = {N: Basis.total_degree(weight.n, N) for N in degrees}
    main_n = cfg["basis_degree"]
    checks, values = [], {}
    sidecars = {}
    conv_rows, delta_rows, point_rows = [], [], []
    for ti, t in enumerate(t_points):
        per_degree = {}
        for N in degrees:
            gf = gram(weight, bases[N], grid, t)
            ca_a = curvature_direct(gf)
            ca_b = curvature_subbundle(weight, bases[N], grid, t)
            per_degree[N] = (ca_a, ca_b)
            dev = route_deviation(ca_a, ca_b)
            conv_rows.append([ti, N, dev])
            delta_rows.append([ti, N, nakano_delta(ca_a)])
        ca_a, ca_b = per_degree[main_n]
        herm = max(hermiticity_residual(ca_a), hermiticity_residual(ca_b))
        checks.append({
            "name": f"hermitian_block_symmetry[t{ti}]",
            "passed": herm <= tol["hermiticity_residual"],
            "residual": herm,
            "tolerance": tol["hermiticity_residual"],
        })
        devs = [row[2] for row in conv_rows if row[0] == ti]
        conv_degrees = [row[1] for row in conv_rows if row[0] == ti]
        monotone = all(
            devs[i + 1] <= devs[i] + tol["route_monotone_noise"]
            for i in range(len(devs) - 1)
        )
        final_dev = dict(zip(conv_degrees, devs))[max(conv_degrees)]
        checks.append({
            "name": f"route_agreement[t{ti}]",
            "passed": monotone and final_dev <= tol["route_final_rel"],
            "deviations": devs,
            "degrees": conv_degrees,
            "final_deviation": final_dev,
            "tolerance": tol["route_final_rel"],
        })
        nd = nakano_delta(ca_a)
        gd = griffiths_delta(ca_a)
        point_rows.append(
            [x for c in t for x in (c.real, c.imag)] + [nd, gd]
        )
        checks.append({
            "name": f"nakano_griffiths_order[t{ti}]",
            "passed": nd <= gd + tol["order_slack"],
            "nakano_delta": nd,
            "griffiths_delta": gd,
        })
        if weight.margin > 0:
            checks.append({
                "name": f"strict_nakano_positivity[t{ti}]",
                "passed": nd > 0,
                "nakano_delta": nd,
                "declared_margin": weight.margin,
            })
        if cfg["expect_nakano"] is not None:
            exp = cfg["expect_nakano"]
            rel = abs(nd - exp["value"]) / max(abs(exp["value"]), 1e-300)
            checks.append({
                "name": f"expected_nakano_delta[t{ti}]",
                "passed": rel <= exp["rtol"],
                "nakano_delta": nd,
                "expected": exp["value"],
                "relative_error": rel,
            })
        if cfg["expect_flat_rel"] is not None:
            scale = float(np.max(np.abs(ca_a.M)))
            worst = max(
                float(np.max(np.abs(ca.blocks))) / scale for ca in (ca_a, ca_b)
            )
            checks.append({
                "name": f"flatness[t{ti}]",
                "passed": worst <= cfg["expect_flat_rel"],
                "max_block_rel": worst,
                "tolerance": cfg["expect_flat_rel"],
            })
        n_samples = cfg["samples"]
        dim = bases[main_n].dim
        dual = dual_curvature_check(
            ca_a, sample_tuples(weight.m, dim, n_samples, cfg["seed"]),
            tolerance=tol["dual_residual"],
        )
        checks.append({
            "name": f"dual_curvature_identity[t{ti}]",
            "passed": dual.passed,
            "max_residual": dual.max_residual,
            "tolerance": dual.tolerance,
            "seed": cfg["seed"],
        })
        horm = hormander_check(
            weight, bases[main_n], grid, t,
            sample_tuples(weight.m, dim, n_samples, cfg["seed"] + 1),
            tolerance=tol["hormander_slack"],
        )
        checks.append({
            "name": f"hormander_bound[t{ti}]",
            "passed": horm.passed,
            "violations": list(horm.violations),
            "min_slack": float(np.min(horm.slack)),
            "tolerance": horm.tolerance,
            "seed": cfg["seed"] + 1,
        })
        schur = schur_lower_bound_check(
            ca_a, weight, grid,
            sample_tuples(weight.m, dim, n_samples, cfg["seed"] + 2),
            tolerance=tol["schur_bound_slack"],
        )
        checks.append({
            "name": f"schur_lower_bound[t{ti}]",
            "passed": schur.passed,
            "violations": list(schur.violations),
            "min_slack": float(np.min(schur.slack)),
            "tolerance": schur.tolerance,
            "seed": cfg["seed"] + 2,
        })
        if cfg["export_blocks"]:
            for ca in (ca_a, ca_b):
                sidecars[f"curvature_blocks_t{ti}_{ca.route}.txt"] = blocks_text(ca)
        values[f"t{ti}"] = {
            "t": [[c.real, c.imag] for c in t],
            "nakano_delta": nd,
            "griffiths_delta": gd,
            "gram_condition": per_degree[main_n][0].gram.cond,
        }
    t_header = []
    for c in range(weight.m):
        t_header += [f"t{c}_re", f"t{c}_im"]
    return {
        "checks": checks,
        "values": values,
        "warnings": _decay_warnings(cfg["domain"], max(degrees)),
        "sidecar_texts": sidecars,
        "csv_tables": {
            "route_convergence": {
                "header": ["t_index", "degree", "deviation"],
                "rows": conv_rows,
            },
            "delta_convergence": {
                "header": ["t_index", "degree", "nakano_delta"],
                "rows": delta_rows,
            },
            "deltas": {
                "header": t_header + ["nakano_delta", "griffiths_delta"],
                "rows": point_rows,
            },
        },
    }


def _grid_rows(g: GridFunction, interior: bool = False):
    rows = []
    vals = g.values
    if interior:
        vals = vals[1:-1, 1:-1]
        re_axis, im_axis = g.axes[0][1:-1], g.axes[1][1:-1]
    else:
        re_axis, im_axis = g.axes[0], g.axes[1]
    for i, re in enumerate(re_axis):
        for j, im in enumerate(im_axis):
            rows.append([float(re), float(im), float(vals[i, j])])
    return rows


def _campaign_kernel_psh(cfg: dict) -> dict:
    weight = _materialize_weight(cfg["weight"])
    if weight.m != 1:
        raise ConfigError("kernel-psh campaign drives one-parameter weights")
    domain = _materialize_domain(cfg["domain"])
    basis = Basis.total_degree(weight.n, cfg["basis_degree"])
    holo = poly_map([_complex_of(p) for p in cfg["map"]["coeffs"]])
    tg = cfg["t_grid"]
    center = _complex_of(tg["center"])
    if tg["points"] < 3:
        raise ConfigError("config key 't_grid.points': need at least 3")
    probes = [
        np.array([center + tg["halfwidth"] * (dx + 1j * dy)])
        for dx in (-1.0, 0.0, 1.0) for dy in (-1.0, 0.0, 1.0)
    ]
    cr_residual = holo.validate(probes)
    checks = [{
        "name": "map_holomorphy",
        "passed": True,
        "cr_residual": cr_residual,
        "tolerance": 1e-6,
    }]
    csv_tables = {}
    tol_factor = cfg["tolerances"]["psh_tol_factor"]
    if cfg["negative_control"]:
        g_neg = grid_function_from_callable(
            lambda t: -float(np.abs(t[0]) ** 2),
            center, tg["halfwidth"], tg["points"],
        )
        rep = psh_report(g_neg, tol_factor=tol_factor)
        checks.append({
            "name": "psh_certification(negative_control)",
            "passed": rep.passed,
            "hessian_min": rep.hessian_min,
            "submean_min": rep.submean_min,
            "tolerance": rep.tolerance,
            "violation_count": len(rep.violations),
            "violation_nodes": [
                {"t": [tv[0].real, tv[0].imag], "hessian": he, "submean": sm}
                for (_, tv, he, sm) in rep.violations
            ],
        })
        csv_tables["negative_control_grid"] = {
            "header": ["t_re", "t_im", "value"],
            "rows": _grid_rows(g_neg),
        }
    else:
        g_kernel = kernel_along_map(
            weight, basis, domain, holo, center, tg["halfwidth"], tg["points"]
        )
        g_log = GridFunction(
            m=1, axes=g_kernel.axes, values=np.log(g_kernel.values),
            spacing=g_kernel.spacing,
        )
        rep_k = psh_report(g_kernel, tol_factor=tol_factor)
        rep_log = psh_report(g_log, tol_factor=tol_factor)
        for label, rep in (("kernel", rep_k), ("log_kernel", rep_log)):
            checks.append({
                "name": f"psh_certification({label})",
                "passed": rep.passed,
                "hessian_min": rep.hessian_min,
                "submean_min": rep.submean_min,
                "tolerance": rep.tolerance,
                "violation_count": len(rep.violations),
                "violation_nodes": [
                    {"t": [tv[0].real, tv[0].imag], "hessian": he, "submean": sm}
                    for (_, tv, he, sm) in rep.violations
                ],
            })
        if cfg["expect_log_hessian"] is not None:
            exp = cfg["expect_log_hessian"]
            hess = fd_complex_hessian(g_log)[..., 0, 0].real
            worst = float(np.max(np.abs(hess - exp["value"])))
            checks.append({
                "name": "expected_log_kernel_hessian",
                "passed": worst <= exp["atol"],
                "max_abs_error": worst,
                "expected": exp["value"],
                "tolerance": exp["atol"],
            })
        if cfg["expect_constant"] is not None:
            exp = cfg["expect_constant"]
            worst = float(np.max(np.abs(g_kernel.values - exp["value"])))
            checks.append({
                "name": "expected_constant_kernel",
                "passed": worst <= exp["atol"],
                "max_abs_error": worst,
                "expected": exp["value"],
                "tolerance": exp["atol"],
            })
        if cfg["expect_center_value"] is not None:
            exp = cfg["expect_center_value"]
            mid = tuple(s // 2 for s in g_kernel.values.shape)
            err = float(abs(g_kernel.values[mid] - exp["value"]))
            checks.append({
                "name": "expected_center_kernel_value",
                "passed": err <= exp["atol"],
                "abs_error": err,
                "expected": exp["value"],
                "tolerance": exp["atol"],
            })
        hess_k = fd_complex_hessian(g_kernel)[..., 0, 0].real
        hess_log = fd_complex_hessian(g_log)[..., 0, 0].real
        csv_tables = {
            "kernel_grid": {
                "header": ["t_re", "t_im", "value"],
                "rows": _grid_rows(g_kernel),
            },
            "log_kernel_grid": {
                "header": ["t_re", "t_im", "value"],
                "rows": _grid_rows(g_log),
            },
            "kernel_hessian_grid": {
                "header": ["t_re", "t_im", "value"],
                "rows": _grid_rows(
                    GridFunction(m=1, axes=g_kernel.axes, values=_pad_interior(hess_k),
                                 spacing=g_kernel.spacing),
                    interior=True,
                ),
            },
            "log_kernel_hessian_grid": {
                "header": ["t_re", "t_im", "value"],
                "rows": _grid_rows(
                    GridFunction(m=1, axes=g_kernel.axes, values=_pad_interior(hess_log),
                                 spacing=g_kernel.spacing),
                    interior=True,
                ),
            },
        }
    return {
        "checks": checks,
        "values": {"map_cr_residual": cr_residual},
        "warnings": _decay_warnings(cfg["domain"], cfg["basis_degree"]),
        "csv_tables": csv_tables,
    }


def _pad_interior(interior_values: np.ndarray) -> np.ndarray:
    """Embed interior-node values in a full-size array (borders zeroed)."""
    padded = np.zeros(
        (interior_values.shape[0] + 2, interior_values.shape[1] + 2)
    )
    padded[1:-1, 1:-1] = interior_values
    return padded


def _campaign_fibration(cfg: dict) -> dict:
    try:
        fm = builtin_fibration(cfg["fiber_weight"]["name"], cfg["twist"])
    except ValueError as exc:
        raise ConfigError(f"config key 'fiber_weight': {exc}") from exc
    tol = cfg["tolerances"]
    rank = rank_check(fm)
    checks = [{
        "name": "section_rank",
        "passed": rank.passed,
        "twist": rank.twist,
        "section_dim": rank.section_dim,
        "symmetric_rank": rank.symmetric_rank,
    }]
    rng = np.random.default_rng(cfg["seed"])
    worst_det = 0.0
    for _ in range(cfg["samples"]):
        while True:
            A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            if abs(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]) > 1e-2:
                break
        worst_det = max(worst_det, det_transform_check(A).residual)
    checks.append({
        "name": "determinant_transformation",
        "passed": worst_det <= tol["det_residual"],
        "max_residual": worst_det,
        "tolerance": tol["det_residual"],
        "samples": cfg["samples"],
        "seed": cfg["seed"],
    })
    if cfg["fiber_weight"]["name"] == "fubini_study" and fm.twist >= 2:
        from .fibration import fiber_gram, fubini_study_gram_oracle

        gf0 = fiber_gram(fm, [0.0], quad_order=cfg["quad_order"])
        residual = float(np.max(np.abs(gf0.M - fubini_study_gram_oracle(fm.twist))))
        checks.append({
            "name": "fubini_study_gram_oracle",
            "passed": residual <= 1e-6,
            "max_residual": residual,
            "tolerance": 1e-6,
        })
    tg = cfg["t_grid"]
    center = _complex_of(tg["center"])
    re_axis = np.linspace(center.real - tg["halfwidth"], center.real + tg["halfwidth"], tg["points"])
    im_axis = np.linspace(center.imag - tg["halfwidth"], center.imag + tg["halfwidth"], tg["points"])
    t_values = [np.array([re + 1j * im]) for re in re_axis for im in im_axis]
    report = fibration_nakano(
        fm, t_values, quad_order=cfg["quad_order"], crosscheck=cfg["crosscheck"]
    )
    if cfg["crosscheck"]:
        checks.append({
            "name": "route_crosscheck",
            "passed": report.route_deviation_max <= tol["route_deviation"],
            "max_deviation": report.route_deviation_max,
            "tolerance": tol["route_deviation"],
        })
    if cfg["expect_nakano_min"] is not None:
        checks.append({
            "name": "nakano_lower_bound",
            "passed": report.min_delta > cfg["expect_nakano_min"],
            "min_delta": report.min_delta,
            "bound": cfg["expect_nakano_min"],
        })
    rows = [
        [float(t[0].real), float(t[0].imag), float(d)]
        for t, d in zip(report.t_values, report.deltas)
    ]
    return {
        "checks": checks,
        "values": {
            "min_delta": report.min_delta,
            "route_deviation_max": report.route_deviation_max,
        },
        "warnings": [],
        "csv_tables": {
            "delta_grid": {"header": ["t_re", "t_im", "value"], "rows": rows},
        },
    }


def _campaign_validate(cfg: dict) -> dict:
    weight = _materialize_weight(cfg["weight"])
    tol = cfg["tolerances"]
    probes = default_probes(
        weight, count=cfg["probes"], seed=cfg["seed"],
        t_radius=cfg["t_radius"], z_radius=cfg["z_radius"],
    )
    deriv = validate_derivatives(weight, probes)
    checks = [{
        "name": "derivative_validation",
        "passed": deriv.max_deviation <= tol["derivative_deviation"],
        "deviations": deriv.deviations,
        "max_deviation": deriv.max_deviation,
        "tolerance": tol["derivative_deviation"],
        "failing_partials": list(deriv.failures),
    }]
    psh = check_psh(weight, probes)
    checks.append({
        "name": "pointwise_psh",
        "passed": psh.passed,
        "violations": list(psh.hessian_violations),
        "degenerate_probes": int(np.sum(psh.degenerate)),
        "min_full_hessian_eig": float(np.min(psh.full_min)),
    })
    worst_congruence = 0.0
    schur_samples = []
    for t, z in probes:
        T, B, Z = weight.point_blocks(t, z)
        full = np.block([[T, B], [B.conj().T, Z]])
        try:
            D = schur_D(weight, t, z)
        except DegenerateHessianError:
            continue
        det_full = np.linalg.det(full)
        det_split = np.linalg.det(Z) * np.linalg.det(D)
        scale = max(abs(det_full), abs(det_split), 1e-300)
        worst_congruence = max(worst_congruence, abs(det_full - det_split) / scale)
        if len(schur_samples) < 5:
            schur_samples.append({
                "t": [float(np.asarray(t).reshape(-1)[0].real),
                      float(np.asarray(t).reshape(-1)[0].imag)],
                "schur_matrix": [[v.real, v.imag] for v in np.asarray(D).ravel()],
            })
    checks.append({
        "name": "determinant_congruence",
        "passed": worst_congruence <= tol["congruence_residual"],
        "max_residual": worst_congruence,
        "tolerance": tol["congruence_residual"],
    })
    return {
        "checks": checks,
        "values": {
            "derivative_deviations": deriv.deviations,
            "schur_samples": schur_samples,
            "declared_margin": weight.margin,
        },
        "warnings": [],
        "csv_tables": {},
    }


_CAMPAIGNS = {
    "curvature": _campaign_curvature,
    "kernel-psh": _campaign_kernel_psh,
    "fibration": _campaign_fibration,
    "validate": _campaign_validate,
}


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def run_config(cfg: dict) -> dict:
    """Execute a validated config; returns the report dict (not yet written)."""
    start = time.perf_counter()
    body = _CAMPAIGNS[cfg["command"]](cfg)
    passed = all(c["passed"] for c in body["checks"])
    report = {
        "tool": {"name": "bergbundle", "version": __version__, **backend_info()},
        "config": cfg,
        "checks": body["checks"],
        "values": body["values"],
        "warnings": body["warnings"],
        "csv_tables": body["csv_tables"],
        "sidecar_texts": body.get("sidecar_texts", {}),
        "passed": passed,
        "wall_time_s": time.perf_counter() - start,
    }
    return _jsonable(report)


def write_report(report: dict, path: Path) -> None:
    """Atomic report write: serialize, dump to a sibling, rename over."""
    payload = json.dumps(report, sort_keys=True, indent=1) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="ascii")
    os.replace(tmp, path)


def emit_csv(report: dict, out_dir) -> list:
    """Write every CSV table of the report; header-only files for empty data."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in report.get("csv_tables", {}).items():
        path = out_dir / f"{name}.csv"
        lines = [",".join(table["header"])]
        for row in table["rows"]:
            lines.append(",".join(
                repr(float(v)) if isinstance(v, float) else str(v) for v in row
            ))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
        written.append(path)
    return written


def _resolve_out_dir(arg_out) -> Path:
    if arg_out:
        return Path(arg_out)
    env = os.environ.get(ENV_OUTDIR)
    return Path(env) if env else Path.cwd()


def _load_config(path: str) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bergbundle",
        description="Curvature and positivity certification of weighted "
                    "Bergman-space bundles",
    )
    sub = parser.add_subparsers(dest="action", required=True)
    p_run = sub.add_parser("run", help="run a campaign config")
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads for node-parallel kernels")
    p_val = sub.add_parser("validate", help="schema-check a config and exit")
    p_val.add_argument("config", help="path to the JSON config")
    args = parser.parse_args(argv)

    try:
        cfg = validate_config(_load_config(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.action == "validate":
        print(f"config OK: {cfg['command']} campaign")
        return 0
    if args.threads is not None:
        set_threads(args.threads)
    try:
        report = run_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GridError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConditioningError, DecayError, GramError,
            NotPositiveDefiniteError, DegenerateHessianError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    out_dir = _resolve_out_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfg["output"] or f"{cfg['command'].replace('-', '_')}_report.json"
    report_path = out_dir / name
    sidecars = report.pop("sidecar_texts", {})
    for sidecar_name, text in sidecars.items():
        (out_dir / sidecar_name).write_text(text, encoding="ascii")
    write_report(report, report_path)
    emit_csv(report, out_dir)
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}")
    print(f"report: {report_path}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
