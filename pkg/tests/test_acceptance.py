"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Every tolerance below is pinned from the criterion it implements; shared
closed-form oracles (factorial moments, truncated exponential series,
conformal shifts, beta-function fiber moments) are computed inline.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import bergbundle as bb
from bergbundle import cli
from bergbundle.pshcheck import GridFunction, grid_function_from_callable

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

ALL_WEIGHTS = [
    ("fock_shift", [0.0], [0.4 + 0.1j]),
    ("fock_shift", [0.25], [0.3 + 0.0j]),
    ("product", [], [0.2 - 0.5j]),
    ("coupled", [], [0.6 + 0.1j]),
    ("product2", [], [0.2 + 0.1j, -0.4j]),
    ("rank_one", [], [0.3 + 0.0j, 0.2 - 0.2j]),
]

PSH_MAPS = {
    "const": [0.2],
    "affine": [0.1, 0.5],
    "quadratic": [0.1, 0.3, 0.2],
}


def _verdict(num, description, ok):
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} - {description}")
    assert ok, f"criterion {num} failed: {description}"


@pytest.fixture(scope="module")
def grid80():
    dom = bb.DomainSpec(kind="plane-truncation", radii=(6.0,), quad_order=(80,),
                        gaussian_decay=True)
    return bb.build_grid(dom)


def test_criterion_01_flatness(grid80):
    # warm the compiled kernels so the timed section measures the math
    basis = bb.Basis.total_degree(1, 8)
    w = bb.builtin("fock_shift", [0.0])
    bb.pair_integrals(np.ones((1, 8), complex), np.ones((1, 8), complex),
                      np.ones(8, complex))
    bb.set_threads(1)
    start = time.perf_counter()
    gf = bb.gram(w, basis, grid80, [0.3 + 0.2j])
    ca_direct = bb.curvature_direct(gf)
    ca_sub = bb.curvature_subbundle(w, basis, grid80, [0.3 + 0.2j])
    elapsed = time.perf_counter() - start
    bb.set_threads(2)
    scale = float(np.max(np.abs(gf.M)))
    worst = max(float(np.max(np.abs(ca.blocks))) for ca in (ca_direct, ca_sub))
    _verdict(
        1,
        f"flat-family blocks {worst / scale:.2e} of |M| (tol 1e-3), "
        f"{elapsed:.1f} s single-threaded (limit 30 s)",
        worst <= 1e-3 * scale and elapsed <= 30.0,
    )


def test_criterion_02_conformal_margin(grid80):
    basis = bb.Basis.total_degree(1, 8)
    results = []
    for eps in (0.1, 0.25):
        w = bb.builtin("fock_shift", [eps])
        ca = bb.curvature_direct(bb.gram(w, basis, grid80, [0.4 + 0.2j]))
        delta = bb.nakano_delta(ca)
        results.append((eps, delta, abs(delta - eps) / eps))
    ok = all(rel <= 0.02 for (_, _, rel) in results)
    detail = ", ".join(f"eps={e:g}: delta={d:.6f}" for (e, d, _) in results)
    _verdict(2, f"conformal bound within 2% ({detail})", ok)


def test_criterion_03_route_agreement(grid80):
    worst_final = 0.0
    monotone = True
    for name, params, t in ALL_WEIGHTS:
        w = bb.builtin(name, params)
        devs = []
        for degree in (4, 6, 8, 10):
            basis = bb.Basis.total_degree(1, degree)
            ca_a = bb.curvature_direct(bb.gram(w, basis, grid80, t))
            ca_b = bb.curvature_subbundle(w, basis, grid80, t)
            devs.append(bb.route_deviation(ca_a, ca_b))
        monotone &= all(devs[i + 1] <= devs[i] + 1e-9 for i in range(3))
        worst_final = max(worst_final, devs[-1])
    _verdict(
        3,
        f"route deviation monotone over degrees 4-10, final max {worst_final:.2e} "
        "(tol 1e-3)",
        monotone and worst_final <= 1e-3,
    )


def test_criterion_04_hormander_bound(grid80):
    basis = bb.Basis.total_degree(1, 8)
    violations = 0
    fock_gap = 0.0
    for name, params, t in ALL_WEIGHTS:
        w = bb.builtin(name, params)
        tuples = bb.sample_tuples(w.m, basis.dim, 100, seed=20260808)
        report = bb.hormander_check(w, basis, grid80, t, tuples, tolerance=1e-8)
        violations += len(report.violations)
        if name == "fock_shift" and params == [0.0]:
            gaps = np.abs(report.lhs - report.rhs) / np.maximum(
                np.maximum(np.abs(report.lhs), np.abs(report.rhs)), 1e-300
            )
            fock_gap = float(np.max(gaps))
    _verdict(
        4,
        f"minimal-solution bound: 0 violations in 600 seeded tuples, "
        f"flat-case equality gap {fock_gap:.2e} (tol 1e-4)",
        violations == 0 and fock_gap <= 1e-4,
    )


def test_criterion_05_schur_lower_bound(grid80):
    basis = bb.Basis.total_degree(1, 8)
    violations = 0
    eq_gap = 0.0
    for name, params, t in ALL_WEIGHTS:
        w = bb.builtin(name, params)
        ca = bb.curvature_direct(bb.gram(w, basis, grid80, t))
        tuples = bb.sample_tuples(w.m, basis.dim, 100, seed=20260809)
        report = bb.schur_lower_bound_check(ca, w, grid80, tuples, tolerance=1e-6)
        violations += len(report.violations)
        if name == "fock_shift" and params == [0.25]:
            gaps = np.abs(report.lhs - report.rhs) / np.maximum(
                np.maximum(np.abs(report.lhs), np.abs(report.rhs)), 1e-300
            )
            eq_gap = float(np.max(gaps))
    _verdict(
        5,
        f"curvature >= Schur energy: 0 violations in 600 tuples, conformal "
        f"equality gap {eq_gap:.2e} (tol 1e-3)",
        violations == 0 and eq_gap <= 1e-3,
    )


def test_criterion_06_schur_matrix():
    flat = bb.builtin("fock_shift", [0.0])
    exact_zero = bb.schur_D(flat, [0.7 - 0.1j], [1.2 + 0.5j])[0, 0] == 0.0
    margin_ok = True
    for eps in (0.1, 0.25):
        w = bb.builtin("fock_shift", [eps])
        D = bb.schur_D(w, [0.5 + 0.2j], [0.3])[0, 0]
        margin_ok &= abs(D - eps) < 1e-12
    coupled = bb.builtin("coupled")
    worst = 0.0
    rng = np.random.default_rng(6)
    for _ in range(25):
        t = 0.8 * (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2)
        z = 1.2 * (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2)
        D = bb.schur_D(coupled, [t], [z])[0, 0]
        worst = max(worst, abs(D - abs(z) ** 2 / (1 + abs(t) ** 2)))
    _verdict(
        6,
        f"Schur matrix: flat case exactly 0, margin shift exact, coupled "
        f"closed form within {worst:.2e} (tol 1e-8)",
        exact_zero and margin_ok and worst <= 1e-8,
    )


def test_criterion_07_kernel_values(grid80):
    basis = bb.Basis.total_degree(1, 12)
    w = bb.builtin("fock_shift", [0.0])
    worst_diag = 0.0
    worst_origin = 0.0
    for t in (0.0, 0.5 + 0.2j, 0.8 - 0.6j, 1.0):
        gf = bb.gram(w, basis, grid80, [t], derivatives=False)
        worst_diag = max(worst_diag, abs(bb.kernel_diag(gf, t) - 1 / math.pi))
        series = sum(abs(t) ** (2 * k) / math.factorial(k) for k in range(13)) / math.pi
        worst_origin = max(worst_origin, abs(bb.kernel_diag(gf, 0.0) - series),
                           abs(bb.kernel_diag(gf, 0.0) - math.exp(abs(t) ** 2) / math.pi))
    _verdict(
        7,
        f"kernel values at degree 12: diagonal error {worst_diag:.2e}, growth "
        f"error {worst_origin:.2e} (tol 1e-4)",
        worst_diag <= 1e-4 and worst_origin <= 1e-4,
    )


def test_criterion_08_psh_certification(grid80):
    dom = bb.DomainSpec(kind="plane-truncation", radii=(6.0,), quad_order=(80,),
                        gaussian_decay=True)
    basis = bb.Basis.total_degree(1, 12)
    all_pass = True
    log_hessian_err = None
    for name, params, _ in ALL_WEIGHTS[:1] + ALL_WEIGHTS[2:4]:
        w = bb.builtin(name, params)
        for map_tag, coeffs in PSH_MAPS.items():
            g = bb.kernel_along_map(w, basis, dom, bb.poly_map(coeffs),
                                    0.0, 1.0, 21, grid=grid80)
            g_log = GridFunction(m=1, axes=g.axes, values=np.log(g.values),
                                 spacing=g.spacing)
            all_pass &= bb.psh_report(g).passed and bb.psh_report(g_log).passed
            if name == "fock_shift" and map_tag == "const":
                hess = bb.fd_complex_hessian(g_log)[..., 0, 0].real
                log_hessian_err = float(np.max(np.abs(hess - 1.0)))
    control = grid_function_from_callable(lambda t: -abs(t[0]) ** 2, 0.0, 1.0, 21)
    control_report = bb.psh_report(control)
    control_ok = (not control_report.passed) and len(control_report.violations) == 19 * 19
    _verdict(
        8,
        "21x21 psh certification for three weights x three maps (kernel and "
        f"log kernel), flat log-Hessian error {log_hessian_err:.2e} (tol 1e-3), "
        "negative control flagged at every interior node",
        all_pass and log_hessian_err <= 1e-3 and control_ok,
    )


def test_criterion_09_duality(grid80):
    worst = 0.0
    rng_seeds = range(10)
    for seed in rng_seeds:
        rng = np.random.default_rng(seed)
        dim = 5
        A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        M = A @ A.conj().T + dim * np.eye(dim)
        blocks = np.zeros((2, 2, dim, dim), dtype=complex)
        for j in range(2):
            for k in range(j, 2):
                B = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
                if k == j:
                    B = 0.5 * (B + B.conj().T)
                blocks[j, k] = B
                blocks[k, j] = B.conj().T
        gf = bb.GramFamily(weight_name="synthetic", t=np.zeros(2, complex),
                           basis=bb.Basis.total_degree(1, dim - 1), M=M,
                           M_t=None, M_tt=None, cond=1.0)
        ca = bb.CurvatureAssembly(gram=gf, blocks=blocks, route="synthetic")
        report = bb.dual_curvature_check(ca, bb.sample_tuples(2, dim, 5, seed=seed + 50))
        worst = max(worst, report.max_residual)
    basis = bb.Basis.total_degree(1, 6)
    w = bb.builtin("fock_shift", [0.25])
    ca_q = bb.curvature_direct(bb.gram(w, basis, grid80, [0.4 + 0.2j]))
    rep_q = bb.dual_curvature_check(ca_q, bb.sample_tuples(1, basis.dim, 10, seed=123))
    worst = max(worst, rep_q.max_residual)
    _verdict(
        9,
        f"dual curvature identity residual {worst:.2e} over 60 seeded samples "
        "(tol 1e-10)",
        worst <= 1e-10,
    )


def test_criterion_10_fibration():
    fs = bb.builtin_fibration("fubini_study", 3)
    gram_residual = float(np.max(np.abs(
        bb.fiber_gram(fs, [0.0]).M - bb.fubini_study_gram_oracle(3)
    )))
    rng = np.random.default_rng(10)
    det_residual = 0.0
    for _ in range(100):
        while True:
            A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            if abs(np.linalg.det(A)) > 1e-2:
                break
        det_residual = max(det_residual, bb.det_transform_check(A).residual)
    ranks_ok = all(
        bb.rank_check(bb.builtin_fibration("fubini_study", twist)).section_dim == expect
        for twist, expect in ((1, 0), (2, 1), (3, 2), (5, 4))
    )
    twisted = bb.builtin_fibration("fs_twisted", 3)
    ts = [np.array([re + 1j * im]) for re in (-0.5, 0.0, 0.5) for im in (-0.5, 0.0, 0.5)]
    report = bb.fibration_nakano(twisted, ts, crosscheck=True)
    _verdict(
        10,
        f"fiber Gram residual {gram_residual:.2e} (tol 1e-6), determinant law "
        f"{det_residual:.2e} (tol 1e-10), ranks match, twisted bound positive "
        f"everywhere with route deviation {report.route_deviation_max:.2e} (tol 1e-3)",
        gram_residual <= 1e-6 and det_residual <= 1e-10 and ranks_ok
        and report.all_positive and report.route_deviation_max <= 1e-3,
    )


def test_criterion_11_determinism(tmp_path):
    replays = [
        "criterion_11_replay_curvature.json",
        "criterion_11_replay_kernel.json",
        "criterion_11_replay_fibration.json",
        "criterion_11_replay_validate.json",
    ]
    identical = True
    for config_name in replays:
        config = CONFIG_DIR / config_name
        canon = []
        for run, threads in (("a", "1"), ("b", "2")):
            out = tmp_path / f"{config_name}.{run}"
            code = cli.main(["run", str(config), "--out", str(out), "--threads", threads])
            assert code == 0, f"{config_name} exited {code}"
            report_name = json.loads(config.read_text())["output"]
            data = json.loads((out / report_name).read_text())
            del data["wall_time_s"]
            csv_blob = b"".join(
                p.read_bytes() for p in sorted(out.glob("*.csv"))
            )
            canon.append((json.dumps(data, sort_keys=True), csv_blob))
        identical &= canon[0] == canon[1]
    _verdict(
        11,
        "reports and CSV sidecars byte-identical across runs and thread counts "
        "for all four campaign types",
        identical,
    )


def test_all_shipped_configs_validate():
    names = sorted(CONFIG_DIR.glob("*.json"))
    assert names, "no shipped configs found"
    for path in names:
        cli.validate_config(json.loads(path.read_text()))
