import numpy as np
import pytest
import scipy.sparse as sp

from wiedlab.assembly import (ForcingSpec, assemble_linear_system,
                              build_operators, exp_time_weights,
                              functional_gradient, functional_value,
                              spectral_preconditioner, weighted_trace_flux)
from wiedlab.combustion import CombustionModel, phi_eval, validate_model
from wiedlab.grid import GridSpec, build_grid

BUMP = validate_model(CombustionModel())


def small_grid(nx=4, ny=4, nt=4, a=0.5, T=1.0):
    return build_grid(GridSpec(d=1, a=a, L=1.0, Y=1.0, T=T,
                               nx=nx, ny=ny, nt=nt))


def test_operator_invariants():
    g = small_grid(6, 5, 3)
    ops = build_operators(g)
    K = ops.Ka
    assert (K - K.T).nnz == 0 or np.max(np.abs((K - K.T).data)) == 0.0
    const = np.ones(g.n_spatial)
    assert np.max(np.abs(K @ const)) <= 1e-14 * np.max(np.abs(K.data))
    assert np.all(ops.mass > 0)
    eigs = np.linalg.eigvalsh(K.toarray())
    assert eigs.min() > -1e-12


def test_exp_weights_telescope():
    g = small_grid()
    for eps in (0.5, 0.05):
        w = exp_time_weights(g.t, eps)
        assert abs(w.sum() - (1.0 - np.exp(-g.spec.T / eps))) < 1e-15


def test_functional_zero_for_constants_without_reaction():
    g = small_grid()
    U = np.full(g.spacetime_shape, 0.8)
    assert abs(functional_value(g, None, 0.2, U)) < 1e-14


def test_functional_constant_with_reaction_closed_form():
    g = small_grid()
    c, eps = 0.6, 0.17
    U = np.full(g.spacetime_shape, c)
    expected = phi_eval(BUMP, c) * 2.0 * g.spec.L * (
        1.0 - np.exp(-g.spec.T / eps))
    assert abs(functional_value(g, BUMP, eps, U) - expected) < 1e-14


def brute_force_functional(grid, model, eps, U):
    """Independent dense re-evaluation by plain loops over cells."""
    spec = grid.spec
    Ul = U.reshape(spec.nt + 1, spec.ny + 1, spec.nx + 1)
    total = 0.0
    for n in range(spec.nt):
        w = np.exp(-grid.t[n] / eps) - np.exp(-grid.t[n + 1] / eps)
        inert = 0.0
        for j in range(spec.ny + 1):
            for i in range(spec.nx + 1):
                dudt = (Ul[n + 1, j, i] - Ul[n, j, i]) / grid.dt
                inert += grid.yvol[j] * grid.xvol[i] * dudt**2
        spat = 0.0
        for m in (n, n + 1):
            e = 0.0
            for j in range(spec.ny):
                for i in range(spec.nx + 1):
                    e += grid.xvol[i] * grid.face_trans_y[j] * (
                        Ul[m, j + 1, i] - Ul[m, j, i])**2
            for j in range(spec.ny + 1):
                for i in range(spec.nx):
                    e += grid.yvol[j] / grid.hx * (
                        Ul[m, j, i + 1] - Ul[m, j, i])**2
            tr = 0.0
            for i in range(spec.nx + 1):
                tr += grid.xvol[i] * float(phi_eval(model, Ul[m, 0, i]))
            spat += 0.5 * (e + tr)
        total += w * (eps * inert + spat)
    return total


def test_functional_matches_brute_force():
    g = small_grid(4, 4, 4)
    rng = np.random.default_rng(7)
    U = 0.5 + 0.3 * rng.standard_normal(g.spacetime_shape)
    val = functional_value(g, BUMP, 0.3, U)
    ref = brute_force_functional(g, BUMP, 0.3, U)
    assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))


def test_gradient_matches_central_differences():
    g = small_grid(5, 4, 5)
    rng = np.random.default_rng(1)
    U = 0.5 + 0.3 * rng.standard_normal(g.spacetime_shape)
    G = functional_gradient(g, BUMP, 0.25, U)
    h = 1e-5
    for trial in range(3):
        eta = rng.standard_normal(g.spacetime_shape)
        eta.reshape(g.spec.nt + 1, -1)[0] = 0.0
        fp = functional_value(g, BUMP, 0.25, U + h * eta)
        fm = functional_value(g, BUMP, 0.25, U - h * eta)
        fd = (fp - fm) / (2 * h)
        an = float(np.sum(G * eta.reshape(G.shape[0], -1).reshape(G.shape)))
        assert abs(fd - an) <= 1e-6 * max(1.0, abs(fd))


def test_gradient_zero_on_initial_layer():
    g = small_grid()
    rng = np.random.default_rng(2)
    U = rng.standard_normal(g.spacetime_shape)
    G = functional_gradient(g, None, 0.2, U)
    assert np.all(G[0] == 0.0)


def test_gradient_linear_in_time_reduction():
    # beta = 0, U = alpha t, no spatial variation: only the inertia term
    # survives and the exact per-layer gradient is
    #   2 eps alpha / dt * mass * (w_{m-1} - w_m)
    g = small_grid(4, 4, 6)
    eps, alpha = 0.3, 0.7
    U = np.broadcast_to((alpha * g.t)[:, None, None],
                        g.spacetime_shape).copy()
    G = functional_gradient(g, None, eps, U)
    w = exp_time_weights(g.t, eps)
    wpad = np.append(w, 0.0)
    ops = build_operators(g)
    for m in range(1, g.spec.nt + 1):
        expect = (2.0 * eps * alpha / g.dt) * ops.mass * (w[m - 1] - wpad[m])
        assert np.max(np.abs(G[m] - expect)) < 1e-14


def test_adjoint_consistency_gradient_vs_system():
    # beta = 0: gradient row m equals 2 w_{m-1} times the assembled
    # residual row, to roundoff
    g = small_grid(4, 4, 5, T=0.8)
    eps = 0.15
    system = assemble_linear_system(g, eps)
    rng = np.random.default_rng(3)
    U = rng.standard_normal(g.spacetime_shape)
    G = functional_gradient(g, None, eps, U)
    w = exp_time_weights(g.t, eps)
    rG = G.reshape(g.spec.nt + 1, -1)[1:] / (2.0 * w[:, None])
    rA = system.residual(None, U)
    scale = np.max(np.abs(rA))
    assert np.max(np.abs(rG - rA)) <= 1e-12 * scale


def test_constants_solve_homogeneous_system():
    from wiedlab.wied import solve_linear_wied
    g = small_grid()
    c = 1.3
    U = solve_linear_wied(g, 0.2, None, np.full(g.n_spatial, c))
    assert np.max(np.abs(U - c)) < 1e-10


def test_assembled_residual_at_dense_solution():
    g = small_grid(4, 4, 4, T=0.5)
    rng = np.random.default_rng(4)
    F = rng.standard_normal(g.spacetime_shape)
    system = assemble_linear_system(g, 0.2, forcing=ForcingSpec(F=F))
    U0 = rng.standard_normal(g.n_spatial)
    b = system.rhs(U0)
    x = np.linalg.solve(system.A.toarray(), b)  # dense LU oracle
    resid = system.A @ x - b
    assert np.max(np.abs(resid)) < 1e-10 * max(1.0, np.max(np.abs(b)))


def test_drift_is_the_only_skew_part():
    g = small_grid(3, 3, 5, T=0.5)
    eps = 0.2
    system = assemble_linear_system(g, eps)
    skew = (system.A - system.A.T) * 0.5
    # expected: +- (eps/dt^2) (1 - rho)/2 M on the time off-diagonals
    nt, S = g.spec.nt, g.n_spatial
    coef = (eps / g.dt**2) * (1.0 - system.rho) / 2.0
    shift = sp.diags([np.ones(nt - 1)], [1], shape=(nt, nt))
    ops = build_operators(g)
    expected = coef * (sp.kron(shift, sp.diags(ops.mass))
                       - sp.kron(shift.T, sp.diags(ops.mass)))
    assert abs(sp.csr_matrix(skew - expected)).max() < 1e-14


def test_manufactured_weighted_flux_is_exact():
    for a in (-0.5, 0.0, 0.5):
        g = small_grid(4, 6, 4, a=a)
        prof = g.eval_spatial(lambda x, y: 1.0 + y**(1 - a) / (1 - a))
        flux = weighted_trace_flux(g, prof)
        assert np.max(np.abs(flux - 1.0)) < 1e-10


def test_spectral_preconditioner_inverts_base_system():
    g = small_grid(4, 4, 6, T=0.5)
    for eps in (0.3, 0.02):
        system = assemble_linear_system(g, eps)
        prec = spectral_preconditioner(system)
        rng = np.random.default_rng(5)
        r = rng.standard_normal(system.n_unknowns)
        z = prec(r)
        assert np.max(np.abs(system.A @ z - r)) < 1e-10 * np.max(np.abs(r))


def test_eps_must_be_positive():
    g = small_grid()
    U = np.zeros(g.spacetime_shape)
    with pytest.raises(ValueError):
        functional_value(g, None, 0.0, U)
    with pytest.raises(ValueError):
        assemble_linear_system(g, -0.5)


def test_forcing_exponent_validation():
    g = small_grid()
    spec = ForcingSpec(p=1.0, q=4.0)
    with pytest.raises(ValueError):
        spec.validate_exponents(g)
    ForcingSpec(p=3.0, q=4.0).validate_exponents(g)
