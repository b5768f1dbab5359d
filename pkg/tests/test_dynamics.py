import numpy as np
import pytest
import sympy as sp

from ernwave.dynamics import (
    Bump,
    Coupling,
    EvolutionConfig,
    InitialData,
    Problem,
    Thresholds,
    _RhsKernel,
    breakdown_check,
    constraint_violation,
    default_thresholds,
    evolve,
    null_form,
    rhs,
    step,
    wave_coefficients,
    wave_operator,
)
from ernwave.fields import FieldState, GridSpec, make_grid
from ernwave.geometry import SpacetimeParams

M = 1.0
SPECS = {
    "tstar": GridSpec(201, 30.0, n_theta=8),
    "adapted": GridSpec(201, 60.0, n_theta=8, stretching="horizon_refined", slicing="horizon_adapted",
                        horizon_spacing=0.01, growth=0.1),
}


# ---------------------------------------------------------------------------
# symbolic oracle: Box_g in (tau, r, theta) from the ingoing EF metric
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def symbolic_box():
    tau, r, th = sp.symbols("tau r theta", real=True)
    h = sp.Function("h")(r)
    D = ((r - M) / r) ** 2
    # v = tau + h(r);  g = -D dv^2 + 2 dv dr + r^2 (dth^2 + sin^2 th dph^2), axisymmetric block
    dv = sp.Matrix([1, sp.diff(h, r), 0])
    dr = sp.Matrix([0, 1, 0])
    g3 = -D * dv * dv.T + dv * dr.T + dr * dv.T + sp.diag(0, 0, r**2)
    # sqrt(-det g) with the phi-phi entry r^2 sin^2 th included
    sqrt_det = sp.sqrt(sp.simplify(-g3.det() / r**2)) * r**2 * sp.sin(th)
    ginv = sp.simplify(g3.inv())
    psi = sp.Function("psi")(tau, r, th)
    X = (tau, r, th)
    box = sum(
        sp.diff(sqrt_det * ginv[a, b] * sp.diff(psi, X[b]), X[a]) for a in range(3) for b in range(3)
    ) / sqrt_det
    box = sp.expand(sp.simplify(box))
    return dict(tau=tau, r=r, th=th, h=h, psi=psi, box=box, ginv=ginv, D=D)


def _coeff(expr, term):
    # replace the derivative by a symbol and differentiate: robust against
    # the way sympy groups products of derivatives
    x = sp.Dummy("x")
    return sp.simplify(sp.diff(expr.subs(term, x), x))


def test_metric_determinant_is_slice_independent(symbolic_box):
    # -det of the (tau, r) block is 1 for any height function
    s = symbolic_box
    g2 = s["ginv"][:2, :2].inv()
    assert sp.simplify(-g2.det() - 1) == 0


@pytest.mark.parametrize("name", list(SPECS))
def test_wave_coefficients_match_symbolic_oracle(symbolic_box, name):
    s = symbolic_box
    tau, r, th, h, psi, box = s["tau"], s["r"], s["th"], s["h"], s["psi"], s["box"]
    terms = {
        "tt": sp.diff(psi, tau, 2),
        "tr": sp.diff(psi, tau, r),
        "rr": sp.diff(psi, r, 2),
        "t": sp.diff(psi, tau),
        "r": sp.diff(psi, r),
    }
    grid = make_grid(SPECS[name])
    c = wave_coefficients(grid)
    h1, h2 = sp.symbols("h1 h2")
    for key in ("tt", "tr", "rr", "t", "r"):
        expr = _coeff(box, terms[key]).subs(sp.diff(h, r, 2), h2).subs(sp.diff(h, r), h1)
        fun = sp.lambdify((r, h1, h2), expr, "numpy")
        expected = np.broadcast_to(fun(grid.r, grid.h_prime, grid.h_second), grid.r.shape)
        np.testing.assert_allclose(getattr(c, key)[:, 0], expected, rtol=1e-12, atol=1e-12, err_msg=key)
    # angular part: (1/r^2)(psi_thth + cot th psi_th)
    ang = _coeff(box, sp.diff(psi, th, 2))
    assert sp.simplify(ang - 1 / r**2) == 0
    assert sp.simplify(_coeff(box, sp.diff(psi, th)) - sp.cos(th) / (sp.sin(th) * r**2)) == 0


@pytest.mark.parametrize("name", list(SPECS))
def test_principal_coefficient_and_horizon_speed(name):
    g = make_grid(SPECS[name])
    tt = wave_coefficients(g).tt[:, 0]
    assert np.all(tt < 0)
    if name == "tstar":
        np.testing.assert_allclose(tt, g.D - 2.0)
        assert np.all(tt <= -1.0)
    cin, cout = g.char_speeds
    assert abs(cout[0]) < 1e-14
    assert np.all(cin < 0)


def test_wave_operator_of_constant_is_zero(small_grid):
    g = small_grid
    st = FieldState(g, 0.0, np.full(g.shape, 3.0), np.zeros(g.shape), np.zeros(g.shape))
    np.testing.assert_allclose(wave_operator(st), 0.0, atol=1e-12)


def test_wave_operator_manufactured_fourth_order(symbolic_box):
    s = symbolic_box
    tau, r = s["tau"], s["r"]
    exact = sp.sin(tau) * sp.exp(-((r - 3) ** 2))
    boxed = s["box"].subs(s["h"], r).doit()
    boxed = boxed.subs(s["psi"], exact).doit()
    box_fun = sp.lambdify((tau, r), sp.simplify(boxed), "numpy")
    f = sp.lambdify((tau, r), exact, "numpy")
    ft = sp.lambdify((tau, r), sp.diff(exact, tau), "numpy")
    ftt = sp.lambdify((tau, r), sp.diff(exact, tau, 2), "numpy")
    fr = sp.lambdify((tau, r), sp.diff(exact, r), "numpy")
    errs = []
    t0 = 0.4
    for n in (101, 201, 401):
        g = make_grid(GridSpec(n, 25.0))
        x = g.r[:, None]
        st = FieldState(g, t0, f(t0, x), ft(t0, x), fr(t0, x))
        errs.append(np.max(np.abs(wave_operator(st, ftt(t0, x)) - box_fun(t0, x))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.5), orders


def test_wave_operator_on_functions_of_v():
    # psi = F(v) on t* slices: Box psi = (2/r) F'(v), in particular (2/M) F' at r = M
    g = make_grid(GridSpec(401, 20.0))
    v = 0.3 + g.r[:, None]
    F1, F2 = np.cos(v), -np.sin(v)
    st = FieldState(g, 0.3, np.sin(v), F1, F1)
    out = wave_operator(st, F2)
    np.testing.assert_allclose(out, 2.0 * F1 / g.r[:, None], atol=1e-5)
    assert out[0, 0] == pytest.approx(2.0 * F1[0, 0] / M, abs=1e-5)


# ---------------------------------------------------------------------------
# null form
# ---------------------------------------------------------------------------

def _state(grid, rng, amplitude=1.0):
    """Random smooth state with l <= 1 content so the theta derivative is exact."""
    a = rng.standard_normal(3)
    b = rng.standard_normal(3)
    x = grid.r[:, None] / grid.r[-1]
    mu = grid.angular.mu[None, :]
    psi = amplitude * (np.sin(a[0] + 3 * x) + b[0] * np.cos(2 * x) * mu)
    pi = amplitude * (np.cos(a[1] + 5 * x) + b[1] * x * mu)
    phi = amplitude * (np.sin(a[2] + 4 * x) * (1 + mu) + b[2])
    return FieldState(grid, 0.0, psi, pi, phi)


def test_null_form_vanishes_on_horizon(small_grid, rng):
    st = _state(small_grid, rng)
    F = null_form(st)
    np.testing.assert_array_equal(F[0], 0.0)


def test_null_form_null_structure(small_grid, rng):
    # Y psi = 0 and no angular dependence: F = 0 whatever T psi is
    g = small_grid
    pi = rng.standard_normal(g.n_r)[:, None] * np.ones(g.shape)
    st = FieldState(g, 0.0, np.ones(g.shape), pi, pi * g.h_prime[:, None])
    np.testing.assert_allclose(null_form(st), 0.0, atol=1e-14)


@pytest.mark.parametrize("name", list(SPECS))
def test_null_form_matches_tensor_contraction(symbolic_box, name, rng):
    s = symbolic_box
    r, h = s["r"], s["h"]
    h1 = sp.Symbol("h1")
    ginv = s["ginv"].subs(sp.diff(h, r), h1)
    fun = sp.lambdify((r, h1), ginv, "numpy")
    g = make_grid(SPECS[name])
    st = _state(g, rng)
    psi_th = -np.sin(g.theta)[None, :] * (st.psi @ g.angular.proj.T)[:, 1:2]
    out = np.zeros(g.shape)
    for i, (ri, hi) in enumerate(zip(g.r, g.h_prime)):
        G = np.array(fun(ri, hi), dtype=float)
        dpsi = np.stack([st.pi[i], st.phi[i], psi_th[i]])
        out[i] = np.einsum("a...,ab,b...->...", dpsi, G, dpsi)
    expected = g.sqrtD[:, None] * out
    np.testing.assert_allclose(null_form(st), expected, rtol=1e-12, atol=1e-12)


def test_coupling_kinds():
    psi = np.linspace(-3, 3, 7)
    assert Coupling("constant", 2.0)(psi) == 2.0
    np.testing.assert_allclose(Coupling("tanh", 1.0)(psi), 0.5 * (1 + np.tanh(psi)))
    tab = Coupling("table", 1.0, ((-1.0, 0.0), (1.0, 1.0)))
    np.testing.assert_allclose(tab(np.array([-2.0, 0.0, 2.0])), [0.0, 0.5, 1.0])
    assert Coupling("table", 0.5, ((-1.0, 0.0), (1.0, 1.0))).validate()
    assert Coupling("nope").validate()


# ---------------------------------------------------------------------------
# right-hand side and time stepping
# ---------------------------------------------------------------------------

def test_rhs_of_zero_state(small_grid):
    d = rhs(FieldState.zeros(small_grid))
    for name in ("psi", "pi", "phi"):
        np.testing.assert_array_equal(getattr(d, name), 0.0)


def test_rhs_nonlinear_part_is_quadratic(rng):
    g = make_grid(SPECS["adapted"])
    base = _state(g, rng)
    diffs = []
    for eps in (1e-2, 5e-3):
        st = base.scaled(eps)
        d = rhs(st, nonlinear=True).pi - rhs(st, nonlinear=False).pi
        diffs.append(np.max(np.abs(d)))
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=1e-9)


def test_rhs_rejects_non_finite(small_grid):
    st = FieldState.zeros(small_grid)
    st.psi[3, 0] = np.nan
    with pytest.raises(RuntimeError):
        rhs(st)


def _bump_state(grid, eps=1e-2):
    from ernwave.dynamics import initial_state

    return initial_state(grid, InitialData(Bump(2.0, 1.5, modes=((0, 1.0), (2, 0.5)))), eps)


def test_zero_data_stays_zero(small_grid):
    k = _RhsKernel(small_grid, 0.3, Coupling(), True)
    u = np.zeros((3,) + small_grid.shape)
    for _ in range(5):
        u = step(u, 0.0, 0.1, k)
    np.testing.assert_array_equal(u, 0.0)


def test_rk4_local_error_is_fifth_order():
    g = make_grid(SPECS["adapted"])
    k = _RhsKernel(g, 0.3, Coupling(), True)
    u0 = _bump_state(g).stacked()
    diffs = []
    for dt in (0.04, 0.02):
        one = step(u0, 0.0, dt, k)
        two = step(step(u0, 0.0, dt / 2, k), dt / 2, dt / 2, k)
        diffs.append(np.max(np.abs(one - two)))
    assert np.log2(diffs[0] / diffs[1]) > 4.5


def test_backward_integration_returns_initial_data():
    # the chart is not invariant under tau -> -tau, so reversibility is
    # checked by integrating the same system backwards in time
    g = make_grid(SPECS["adapted"])
    k = _RhsKernel(g, 0.0, Coupling(), False)
    u0 = _bump_state(g).stacked()
    errs = []
    for n in (20, 40):
        dt = 1.0 / n
        u = u0
        for i in range(n):
            u = step(u, i * dt, dt, k)
        for i in range(n):
            u = step(u, 1.0 - i * dt, -dt, k)
        errs.append(np.max(np.abs(u - u0)))
    assert errs[1] < 1e-6 * np.max(np.abs(u0))
    assert np.log2(errs[0] / errs[1]) > 3.5


# ---------------------------------------------------------------------------
# evolution and breakdown monitor
# ---------------------------------------------------------------------------

def _problem(t_end=20.0, eps=1e-2, n_theta=1, **evo):
    spec = GridSpec(201, 410.0, n_theta=n_theta, stretching="horizon_refined", slicing="horizon_adapted",
                    horizon_spacing=8e-4, growth=0.2, slice_offset=4e-3)
    data = InitialData(Bump(2.0, 1.5, modes=((0, 1.0), (2, 0.5))))
    return Problem(SpacetimeParams(), spec, data, EvolutionConfig(t_star_end=t_end, amplitude=eps, **evo))


def test_zero_amplitude_run_is_identically_zero():
    res = evolve(_problem(eps=0.0))
    assert res.status == "completed"
    for s in res.snapshots:
        assert not np.any(s.psi) and not np.any(s.pi) and not np.any(s.phi)


def test_problem_validation():
    p = _problem()
    assert p.validate() == []
    bad = Problem(p.params, p.grid, InitialData(Bump(409.0, 5.0)), p.evolution)
    assert any("outer boundary" in e for e in bad.validate())
    assert EvolutionConfig(cfl=0.7).validate()
    assert EvolutionConfig(amplitude=-0.1).validate()
    with pytest.raises(ValueError):
        evolve(bad)


def test_evolution_is_deterministic():
    a = evolve(_problem(t_end=5.0)).final
    b = evolve(_problem(t_end=5.0)).final
    np.testing.assert_array_equal(a.psi, b.psi)


def test_long_small_data_run_completes():
    res = evolve(_problem(t_end=500.0, keep_snapshots=False))
    assert res.status == "completed" and res.breakdown is None


def test_breakdown_check_examples(small_grid):
    zero = FieldState.zeros(small_grid)
    assert breakdown_check(zero, default_thresholds(zero)) is None
    th = Thresholds(1.0, 1.0, 1.0)
    st = FieldState.zeros(small_grid)
    st.pi[40, 2] = 10.0
    rep = breakdown_check(st, th)
    assert rep.norm == "T_psi" and rep.value == 10.0 and rep.threshold == 1.0


def test_breakdown_monitor_uses_weighted_transversal_derivative(small_grid):
    # a huge Y psi at the horizon node alone is invisible to sqrt(D) Y psi
    st = FieldState.zeros(small_grid)
    st.phi[0, :] = 1e6
    assert breakdown_check(st, Thresholds(1.0, 1.0, 1.0)) is None


def test_fault_injection_paths():
    nan = evolve(_problem(t_end=5.0), fault=("nan", 2.0))
    assert nan.status == "numerical_failure"
    spike = evolve(_problem(t_end=5.0), fault=("spike", 2.0))
    assert spike.status == "breakdown" and spike.breakdown.norm == "T_psi"


def test_norms_stay_below_thresholds_and_decay():
    res = evolve(_problem(t_end=100.0, n_theta=8))
    assert res.status == "completed"
    from ernwave.dynamics import sup_norms

    first = sup_norms(res.snapshots[5])
    last = sup_norms(res.snapshots[-1])
    for k in first:
        assert last[k] < first[k]


def test_constraint_violation_converges():
    # the violation is truncation error of the data plus the dissipation
    # acting on phi only; nested levels in the asymptotic range
    base = GridSpec(401, 100.0, stretching="horizon_refined", slicing="horizon_adapted", horizon_spacing=2e-3,
                    growth=0.05, slice_offset=0.04)
    data = InitialData(Bump(2.0, 1.5))
    errs = []
    for k in (2, 4, 8):
        p = Problem(SpacetimeParams(), base.refine(k), data, EvolutionConfig(t_star_end=20.0))
        errs.append(constraint_violation(evolve(p).final))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[0] > errs[1] > errs[2]
    assert orders[-1] > 3.5, (errs, orders)


def test_quadratic_smallness():
    # max |psi_eps - 2 psi_{eps/2}| / eps^2 is independent of eps
    vals = []
    for eps in (2e-2, 1e-2):
        a = evolve(_problem(t_end=20.0, eps=eps, n_theta=8)).final.psi
        b = evolve(_problem(t_end=20.0, eps=eps / 2, n_theta=8)).final.psi
        vals.append(np.max(np.abs(a - 2 * b)) / eps**2)
    assert vals[0] == pytest.approx(vals[1], rel=0.05)
