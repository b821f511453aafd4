"""One test per acceptance criterion; each records a PASS/FAIL line."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from hetcap import integrand as I
from hetcap.asymptotic import CenterFamily, MuResolution, c_lambda, homogenized_far_field, law_sweep, scalar_two_well_min
from hetcap.capacity import (
    PolarResolution,
    analytic_capacity,
    chom_estimate,
    frozen_annulus_minimum,
    phi_estimate,
    sigma,
)
from hetcap.cell import quadratic_homogenized_matrix, tabulate_fhom
from hetcap.cli import main
from hetcap.grid import AnnulusSpec, Box, build_annulus_grid
from hetcap.modification import (
    ModificationParams,
    analytic_constant,
    modify_to_constant_trace,
    poincare_wirtinger_lower_estimate,
    smooth_annulus_field,
)
from hetcap.perforated import constant_field, strange_term_experiment


def test_criterion_1_analytic_capacity(acceptance):
    t0 = time.perf_counter()
    res = PolarResolution()
    errors = []
    for R in (math.e, math.e**2, math.e**4):
        m = frozen_annulus_minimum(I.constant(), R, res)
        errors.append(abs(m / analytic_capacity(2, 1.0, R) - 1))
    coarse = errors[1]
    fine = abs(frozen_annulus_minimum(I.constant(), math.e**2, res.refined()) / analytic_capacity(2, 1.0, math.e**2) - 1)
    order = math.log2(coarse / fine)
    elapsed = time.perf_counter() - t0
    ok = max(errors) <= 0.01 and order >= 1.5 and elapsed <= 30
    acceptance.record(1, ok, f"max rel err {max(errors):.2e}, order {order:.2f}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_phi_extrapolation(acceptance):
    est_c = phi_estimate(I.constant(), (0.3, 0.7)).estimate
    z = (0.25, 0.0)
    model = I.sinusoidal()
    a_z = float(model.coefficient(np.array([z]))[0])
    est_s = phi_estimate(model, z).estimate
    err_c = abs(est_c / (2 * math.pi) - 1)
    err_s = abs(est_s / (a_z * 2 * math.pi) - 1)
    ok = err_c <= 0.02 and err_s <= 0.02
    acceptance.record(2, ok, f"constant rel err {err_c:.2e}, frozen scalar rel err {err_s:.2e}")
    assert ok


def test_criterion_3_homogenization_oracles(acceptance):
    t0 = time.perf_counter()
    A, sd = quadratic_homogenized_matrix(I.laminate(), n=64)
    target = np.diag([8 / 5, 5 / 2])
    err_A = float(np.max(np.abs(A - target) / np.diag(target)[:, None]))
    err_sd = abs(sd / 2 - 1)
    _, sd_cb = quadratic_homogenized_matrix(I.checkerboard(), n=128)
    err_cb = abs(sd_cb / 2 - 1)
    elapsed = time.perf_counter() - t0
    ok = err_A <= 5e-3 and err_sd <= 5e-3 and err_cb <= 0.03 and elapsed <= 120
    acceptance.record(3, ok, f"laminate A err {err_A:.1e}, sqrt det err {err_sd:.1e}, checkerboard err {err_cb:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_chom_consistency(acceptance):
    table = tabulate_fhom(I.laminate(), 64, 64)
    est = chom_estimate(table).estimate
    err = abs(est / (4 * math.pi) - 1)
    ok = err <= 0.03
    acceptance.record(4, ok, f"C_hom {est:.6f} vs 4 pi, rel err {err:.2e}")
    assert ok


def test_criterion_5_closed_forms(acceptance):
    rng = np.random.default_rng(5)
    n = 10_000
    phi = np.exp(rng.uniform(-4, 4, n))
    chom = np.exp(rng.uniform(-4, 4, n))
    lam = rng.random(n)
    dims = rng.integers(2, 7, n)
    t = np.exp(rng.uniform(-3, 3, n))
    end0 = max(abs(c_lambda(p, c, 0.0, int(k)) - p) / p for p, c, k in zip(phi, chom, dims))
    end1 = max(abs(c_lambda(p, c, 1.0, int(k)) - c) / c for p, c, k in zip(phi, chom, dims))
    hom = max(
        abs(c_lambda(s * p, s * c, l, int(k)) - s * c_lambda(p, c, l, int(k))) / (s * c_lambda(p, c, l, int(k)))
        for p, c, l, k, s in zip(phi, chom, lam, dims, t)
    )
    # brute-force oracle on the 1e-6 grid of [0, 1]
    x = np.linspace(0.0, 1.0, 1_000_001)
    worst = 0.0
    a_s = np.exp(rng.uniform(-2, 2, 300))
    b_s = np.exp(rng.uniform(-2, 2, 300))
    d_s = rng.integers(2, 6, 300)
    for a, b, k in zip(a_s, b_s, d_s):
        brute = float(np.min(a * np.abs(1 - x) ** k + b * np.abs(x) ** k))
        worst = max(worst, abs(scalar_two_well_min(a, b, int(k))[1] - brute))
    ok = end0 <= 4e-16 and end1 <= 4e-16 and hom <= 1e-13 and worst <= 1e-9
    acceptance.record(5, ok, f"endpoints {max(end0, end1):.1e}, homogeneity {hom:.1e}, brute-force {worst:.1e}")
    assert ok


def test_criterion_6_asymptotic_law(acceptance):
    t0 = time.perf_counter()
    model = I.laminate()
    omega = Box.unit(2)
    family = CenterFamily((0.25, 0.5))
    far = homogenized_far_field(model)
    phi_hat = phi_estimate(model, family.z).estimate
    chom_hat = chom_estimate(far).estimate
    schedule = [math.exp(-4), math.exp(-6), math.exp(-8)]
    summary, ok = [], True
    for lam in (0.0, 0.5, 1.0):
        rep = law_sweep(model, omega, family, lam, schedule, MuResolution("polar"), phi_hat, chom_hat, far)
        ok &= rep.sandwiched and rep.approaching
        summary.append(f"lambda={lam}: " + ",".join(f"{r.rescaled:.3f}" for r in rep.rows) + f" -> {rep.prediction:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 600
    acceptance.record(6, ok, "; ".join(summary) + f"; {elapsed:.0f}s")
    assert ok


def test_criterion_7_modification_suite(acceptance):
    model = I.sinusoidal()
    g = build_annulus_grid(AnnulusSpec((0.0, 0.0), 1.0, 64.0), 73, 64)
    rho = g.radius((0.0, 0.0))
    pw = poincare_wirtinger_lower_estimate(2, 64, seed=0)
    C_hat = analytic_constant(model.alpha, model.beta, 2, pw) * 1.2
    worst = {3: 0.0, 4: 0.0, 5: 0.0}
    local = trace = pigeon = True
    for s in range(200):
        u = smooth_annulus_field(g, np.random.default_rng([7, s]))
        for N in (3, 4, 5):
            p = ModificationParams(1.0, 64.0, N, 1.0)
            res = modify_to_constant_trace(g, u, model, 4.0, p)
            lo, _, hi = p.shell(res.chosen_j)
            outside = (rho <= lo) | (rho >= hi)
            local &= bool(np.array_equal(res.field[outside], u[outside]))
            trace &= bool(np.all(res.field[res.ring] == res.trace_value))
            inc = [Fraction(x) for x in res.increments]
            pigeon &= min(inc) * (N - 1) <= sum(inc)
            worst[N] = max(worst[N], res.energy_ratio)
    bound_ok = all(worst[N] <= 1 + C_hat / (N - 1) for N in worst)
    ok = local and trace and pigeon and bound_ok
    acceptance.record(
        7, ok,
        f"P^d >= {pw:.3f}, C_hat {C_hat:.2f}, worst ratios "
        + ", ".join(f"N={N}: {worst[N]:.4f} (<= {1 + C_hat / (N - 1):.2f})" for N in worst)
    )
    assert ok


def test_criterion_8_strange_term(acceptance):
    t0 = time.perf_counter()
    rep = strange_term_experiment(constant_field(1.0), I.constant(), 0.5,
                                  [math.exp(-3), math.exp(-4), math.exp(-5)], Box.unit(2))
    per_area = rep.rows[-1].recovery_energy / Box.unit(2).measure
    within = abs(per_area / sigma(2) - 1) <= 0.2
    elapsed = time.perf_counter() - t0
    ok = within and rep.gap_decreasing and rep.vanishes_on_perforations and elapsed <= 600
    acceptance.record(
        8, ok,
        "energy/sigma " + ", ".join(f"{r.recovery_energy / sigma(2):.3f}" for r in rep.rows)
        + f"; gaps " + ", ".join(f"{r.gap:.3f}" for r in rep.rows)
        + f"; vanish={rep.vanishes_on_perforations}; {elapsed:.1f}s",
    )
    assert ok


@pytest.mark.parametrize("tokens", [
    ["capacity", "d=2", "r=1", "R=e^2"],
    ["claw", "d=2", "integrand=laminate", "lambda=0.5", "eps=e^-3,e^-4", "method=polar", "n_angular=128"],
    ["perforate", "d=2", "lambda=0.5", "eps=e^-3,e^-4"],
    ["verify", "d=2", "integrand=sinusoidal"],
])
def test_criterion_9_determinism(tokens, tmp_path, acceptance):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(tokens + ["--out", str(d), "--seed", "3"]) == 0
        outs.append((d / f"{tokens[0]}.csv").read_bytes())
    ok = outs[0] == outs[1]
    acceptance.record(9, ok, f"byte-identical CSV for {tokens[0]}")
    assert ok
