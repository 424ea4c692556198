"""Quality measures, error norms and observed convergence orders."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from hmmvi import (DiagnosticsError, TimeGrid, assemble_forms, bound_SD, build_gd,
                   builtin_case, eoc, error_norms, estimate_CD, estimate_WD,
                   gd_quality_report, generate_mesh, initial_interp_error,
                   interpolate_obstacle, run_transient, standard_probes)
from hmmvi.diagnostics import _cell_quad_flat, _subcell_quad_flat
from hmmvi.discretisation import DofVector, reconstruct_gradient_flat


def test_unit_square_poincare_constant(unit_square_gd):
    forms = assemble_forms(unit_square_gd)
    cd = estimate_CD(unit_square_gd, forms)
    assert cd == pytest.approx(1.0 / np.sqrt(8.0), abs=1e-12)


def test_constant_field_has_zero_dual_norm(unit_square_gd):
    wd = estimate_WD(unit_square_gd,
                     lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]),
                     lambda p: np.zeros(len(p)))
    assert wd == pytest.approx(0.0, abs=1e-13)


def test_poincare_constant_stays_bounded_under_refinement():
    values = []
    for n in (2, 3, 4, 5):
        gd = build_gd(generate_mesh("cartesian", n))
        values.append(estimate_CD(gd))
    assert max(values) < 1.0
    # refinement changes the constant less and less
    diffs = np.abs(np.diff(values))
    assert diffs[-1] < diffs[0]


def test_dual_norm_dominates_sampled_ratios_and_is_attained():
    m = generate_mesh("hexagonal", 2)
    gd = build_gd(m)
    forms = assemble_forms(gd)
    omega, div_omega = standard_probes(m.bbox)["sinusoidal_field"]
    wd = estimate_WD(gd, omega, div_omega, forms)

    # rebuild the linear functional v -> int(omega . grad v + div omega v)
    spts, sw, sidx = _subcell_quad_flat(gd, "fan3")
    om = omega(spts)
    cpts, cw, cidx = _cell_quad_flat(m, "fan3")
    dv = div_omega(cpts)

    def functional(values):
        v = DofVector(values, m.n_cells)
        g = reconstruct_gradient_flat(gd, v)
        return ((sw[:, None] * om * g[sidx]).sum()
                + (cw * dv * v.cells[cidx]).sum())

    A0 = forms.plain_stiffness
    free = gd.free_dofs
    rng = np.random.default_rng(17)
    for _ in range(300):
        v = np.zeros(gd.n_dofs)
        v[free] = rng.standard_normal(free.size)
        ratio = abs(functional(v)) / np.sqrt(v @ (A0 @ v))
        assert ratio <= wd * (1.0 + 1e-10)

    # the Riesz representer attains the supremum
    ell = np.zeros(gd.n_dofs)
    for i in free:
        e = np.zeros(gd.n_dofs)
        e[i] = 1.0
        ell[i] = functional(e)
    A0ff = A0.tocsc()[free][:, free]
    vstar = np.zeros(gd.n_dofs)
    vstar[free] = spla.spsolve(A0ff, ell[free])
    best = abs(functional(vstar)) / np.sqrt(vstar @ (A0 @ vstar))
    assert best == pytest.approx(wd, rel=1e-8)


def test_quality_measures_decay_first_order():
    h, wd, sd, id0 = [], [], [], []
    for n in (8, 16, 32):
        gd = build_gd(generate_mesh("triangular", n))
        rep = gd_quality_report(gd)
        h.append(rep.h)
        wd.append(rep.w_d["sinusoidal_field"])
        sd.append(rep.s_d["polynomial_bump"])
        id0.append(rep.i_d0["polynomial_bump"])
    for series in (wd, sd, id0):
        orders = eoc(series, h)
        assert np.all(orders > 0.8) and np.all(orders < 1.2)


def test_sd_bound_splits_into_parts(unit_square_gd):
    probe, grad = standard_probes(unit_square_gd.mesh.bbox)["polynomial_bump"]
    psi = interpolate_obstacle(unit_square_gd, lambda p: np.zeros(len(p)))
    sd = bound_SD(unit_square_gd, probe, grad, psi)
    assert sd.total == pytest.approx(sd.function_part + sd.gradient_part)
    assert sd.total > 0


def test_initial_interp_error_decays():
    case = builtin_case("test2")
    errs, hs = [], []
    for n in (2, 3, 4):
        m = generate_mesh("cartesian", n)
        gd = build_gd(m)
        psi = interpolate_obstacle(gd, case.spec.obstacle)
        errs.append(initial_interp_error(gd, case.spec.initial, psi))
        hs.append(2.0 * np.sqrt(2.0) / 2 ** n)
    orders = eoc(errs, hs)
    assert np.all(orders > 0.7)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.25, max_value=3.5),
       st.floats(min_value=0.05, max_value=10.0))
def test_eoc_recovers_synthetic_order(p, c):
    sizes = [0.4, 0.2, 0.1, 0.05]
    errors = [c * h ** p for h in sizes]
    assert eoc(errors, sizes) == pytest.approx([p, p, p], abs=1e-10)


def test_eoc_rejects_bad_input():
    with pytest.raises(DiagnosticsError):
        eoc([1.0], [0.5])
    with pytest.raises(DiagnosticsError):
        eoc([1.0, -0.5], [0.5, 0.25])
    with pytest.raises(DiagnosticsError):
        eoc([1.0, 0.5], [0.25, 0.5])


def test_error_norms_on_known_fields():
    # measure the interpolant of the exact solution itself: value errors at
    # the cell points vanish and the report keeps the exact norms positive
    case = builtin_case("smooth_baseline")
    m = generate_mesh("triangular", 8)
    gd = build_gd(m)
    grid = TimeGrid.uniform(case.spec.final_time, 2)
    sol = run_transient(gd, case.spec, grid)
    rep = error_norms(gd, sol, case.u_exact, case.grad_exact)
    assert rep.quadrature == "centroid"
    assert len(rep.l2_per_node) == grid.n_steps + 1
    assert len(rep.grad_per_step) == grid.n_steps
    assert rep.exact_l2_final > 0.5
    assert rep.exact_grad_final > 1.0
    assert rep.linf_l2 >= rep.l2_per_node[-1] - 1e-15
    assert rep.rel_l2_final == pytest.approx(rep.l2_final / rep.exact_l2_final)
    # interpolation error of the values is tiny compared to the solver error
    assert rep.interp_per_node[-1] < 0.2 * rep.l2_per_node[-1]


def test_error_norms_reject_zero_exact_solution():
    case = builtin_case("smooth_baseline")
    m = generate_mesh("cartesian", 2)
    gd = build_gd(m)
    sol = run_transient(gd, case.spec, TimeGrid.uniform(case.spec.final_time, 1))
    with pytest.raises(DiagnosticsError, match="vanishes"):
        error_norms(gd, sol,
                    lambda p, t: np.zeros(len(p)),
                    lambda p, t: np.zeros((len(p), 2)))


def test_spacetime_norms_accumulate_steps():
    case = builtin_case("smooth_baseline")
    m = generate_mesh("triangular", 6)
    gd = build_gd(m)
    grid = TimeGrid.uniform(case.spec.final_time, 4)
    sol = run_transient(gd, case.spec, grid)
    rep = error_norms(gd, sol, case.u_exact, case.grad_exact)
    by_hand = np.sqrt(np.sum(grid.steps * np.asarray(rep.grad_per_step) ** 2))
    assert rep.spacetime_grad == pytest.approx(by_hand)


def test_quality_report_serializes():
    gd = build_gd(generate_mesh("cartesian", 3))
    rep = gd_quality_report(gd)
    d = rep.to_dict()
    assert set(d) >= {"h", "n_cells", "n_edges", "c_d", "w_d", "s_d", "i_d0"}
    assert d["n_cells"] == 64
    assert d["c_d"] == pytest.approx(rep.c_d)
