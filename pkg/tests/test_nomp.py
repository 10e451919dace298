import math
from types import SimpleNamespace

import numpy as np
import pytest

from risce.nomp import (
    EstimateSet,
    GridDictionary,
    GridSpec,
    PathEstimate,
    correlation_score,
    cyclic_refine,
    gain_ls_single,
    greedy_search,
    newton_derivatives,
    newton_objective,
    precise_search,
    run_nomp,
    run_omp_baseline,
    single_refine,
    stopping_threshold,
    update_gains_ls,
)
from risce.signal_model import PilotModel, sample_training_profile

from conftest import complex_noise, make_channel


@pytest.fixture
def setup(tiny_cfg, geometry):
    profile = sample_training_profile(tiny_cfg, 7)
    model = PilotModel(tiny_cfg, geometry, profile)
    grid = GridSpec.coarse(tiny_cfg)
    return SimpleNamespace(
        cfg=tiny_cfg, geometry=geometry, profile=profile, model=model, grid=grid
    )


@pytest.fixture
def mid_setup(mid_cfg, geometry):
    profile = sample_training_profile(mid_cfg, 7)
    model = PilotModel(mid_cfg, geometry, profile)
    grid = GridSpec.coarse(mid_cfg)
    return SimpleNamespace(
        cfg=mid_cfg, geometry=geometry, profile=profile, model=model, grid=grid
    )


# -- grids ---------------------------------------------------------------------


def test_grid_sizes_and_coverage(desk_cfg):
    grid = GridSpec.coarse(desk_cfg)
    nx, ny = desk_cfg.ris_dims
    assert len(grid.phi_points) == 2 * nx
    assert len(grid.psi_points) == 2 * ny
    expected_tau = math.ceil(
        2 * desk_cfg.num_subcarriers * desk_cfg.max_delay_s * desk_cfg.subcarrier_spacing_hz
    )
    assert len(grid.tau_points) == expected_tau
    for pts, lo, hi in [
        (grid.phi_points, -math.pi / 2, math.pi / 2),
        (grid.psi_points, -math.pi / 2, math.pi / 2),
        (grid.tau_points, 0.0, desk_cfg.max_delay_s),
    ]:
        assert pts[0] == lo and pts[-1] < hi
        steps = np.diff(pts)
        np.testing.assert_allclose(steps, steps[0])


# -- stopping threshold -----------------------------------------------------------


def test_threshold_collapses_for_single_sample():
    cfg = SimpleNamespace(
        false_alarm_rate=math.exp(-1), noise_variance=1.0, observation_length=1
    )
    assert stopping_threshold(cfg) == pytest.approx(1.0)
    cfg.false_alarm_rate = 1 - math.exp(-1)
    # N = 1 reduces the closed form to -ln(P_fa)
    assert stopping_threshold(cfg) == pytest.approx(-math.log(1 - math.exp(-1)))


def test_threshold_reference_value():
    cfg = SimpleNamespace(false_alarm_rate=0.01, noise_variance=1.0, observation_length=100)
    # high-precision evaluation of -ln(1 - 0.99^(1/100))
    assert stopping_threshold(cfg) == pytest.approx(9.205369664023157, rel=1e-12)


def test_threshold_scalings(tiny_cfg):
    base = stopping_threshold(tiny_cfg)
    doubled = stopping_threshold(tiny_cfg.replace(noise_variance=2 * tiny_cfg.noise_variance))
    assert doubled == pytest.approx(2 * base)
    bigger = tiny_cfg.replace(num_pilot_symbols=8)  # larger L*M*N_b
    assert stopping_threshold(bigger) > base


def test_threshold_domain_error():
    cfg = SimpleNamespace(false_alarm_rate=0.0, noise_variance=1.0, observation_length=4)
    with pytest.raises(ValueError, match="false_alarm_rate"):
        stopping_threshold(cfg)


# -- correlation & single-atom gain ------------------------------------------------


def test_correlation_score_cases(setup):
    f = setup.model.atom(0.3, -0.4, 0.2 * setup.cfg.max_delay_s)
    norm_sq = np.vdot(f, f).real
    assert correlation_score(f, 1e-3 * f) == pytest.approx(1e-6 * norm_sq)
    # orthogonal residual scores zero
    rng = np.random.default_rng(0)
    r = complex_noise(rng, f.size)
    r -= f * (np.vdot(f, r) / norm_sq)
    assert correlation_score(f, r) < 1e-20 * norm_sq
    assert correlation_score(f, (2 - 1j) * f) == pytest.approx(5 * norm_sq)


def test_correlation_score_naive_formula(setup):
    rng = np.random.default_rng(1)
    f = setup.model.atom(0.9, 0.1, 0.7 * setup.cfg.max_delay_s)
    y = complex_noise(rng, f.size)
    naive = abs(sum(np.conj(a) * b for a, b in zip(f, y))) ** 2 / sum(
        abs(a) ** 2 for a in f
    )
    assert correlation_score(f, y) == pytest.approx(naive)


def test_correlation_score_zero_atom():
    with pytest.raises(ValueError, match="zero norm"):
        correlation_score(np.zeros(4, dtype=complex), np.ones(4, dtype=complex))


def test_gain_ls_single_cases(setup):
    f = setup.model.atom(-0.8, 0.5, 0.1 * setup.cfg.max_delay_s)
    assert gain_ls_single(3j * f, f) == pytest.approx(3j)
    rng = np.random.default_rng(2)
    r = complex_noise(rng, f.size)
    r -= f * (np.vdot(f, r) / np.vdot(f, f))
    assert abs(gain_ls_single(r, f)) < 1e-12
    with pytest.raises(ValueError, match="zero norm"):
        gain_ls_single(r, np.zeros_like(f))


def test_gain_ls_minimizes_residual(setup):
    rng = np.random.default_rng(3)
    f = setup.model.atom(0.2, 0.9, 0.5 * setup.cfg.max_delay_s)
    y = 0.6 * f + complex_noise(rng, f.size, 0.3)
    g_hat = gain_ls_single(y, f)
    best = np.linalg.norm(y - g_hat * f)
    # dense scan over the complex plane cannot beat the closed form
    for re in np.linspace(-1.5, 1.5, 41):
        for im in np.linspace(-1.5, 1.5, 41):
            assert np.linalg.norm(y - complex(re, im) * f) >= best - 1e-9


# -- greedy and precise searches -----------------------------------------------------


def brute_force_argmax(residual, grid, model):
    """Exhaustive grid scan with lowest-flat-index tie-break."""
    best = None
    idx = 0
    for phi in grid.phi_points:
        for psi in grid.psi_points:
            for tau in grid.tau_points:
                f = model.atom(phi, psi, tau)
                score = correlation_score(f, residual)
                if best is None or score > best[3] + 1e-15 * abs(best[3]):
                    best = (phi, psi, tau, score, idx)
                idx += 1
    return best


def test_greedy_exact_on_grid_path(setup):
    grid = setup.grid
    # nonzero elevation so the azimuth is observable
    phi = float(grid.phi_points[3])
    psi = float(grid.psi_points[3])
    tau = float(grid.tau_points[5])
    y = (1.3 - 0.2j) * setup.model.atom(phi, psi, tau)
    got = greedy_search(y, grid, setup.profile, setup.geometry, setup.cfg)
    assert (got[0], got[1], got[2]) == (phi, psi, tau)


def test_greedy_zero_residual_tie_breaks_low(setup):
    got = greedy_search(
        np.zeros(setup.cfg.observation_length, dtype=complex),
        setup.grid, setup.profile, setup.geometry, setup.cfg,
    )
    assert got[3] == 0.0
    assert got[0] == setup.grid.phi_points[0]
    assert got[1] == setup.grid.psi_points[0]
    assert got[2] == setup.grid.tau_points[0]


def test_greedy_finds_remaining_path(setup):
    grid = setup.grid
    f1 = setup.model.atom(grid.phi_points[1], grid.psi_points[0], grid.tau_points[2])
    f2 = setup.model.atom(grid.phi_points[3], grid.psi_points[2], grid.tau_points[6])
    residual = (f1 + f2) - f1
    got = greedy_search(residual, grid, setup.profile, setup.geometry, setup.cfg)
    assert (got[0], got[1], got[2]) == (
        grid.phi_points[3], grid.psi_points[2], grid.tau_points[6],
    )


def test_greedy_matches_brute_force_oracle(setup):
    rng = np.random.default_rng(4)
    dictionary = GridDictionary(setup.model, setup.grid)
    for _ in range(5):
        y = complex_noise(rng, setup.cfg.observation_length)
        got = greedy_search(
            y, setup.grid, setup.profile, setup.geometry, setup.cfg,
            dictionary=dictionary,
        )
        want = brute_force_argmax(y, setup.grid, setup.model)
        assert (got[0], got[1], got[2]) == (want[0], want[1], want[2])
        assert got[3] == pytest.approx(want[3], rel=1e-10)


def test_precise_search_keeps_exact_grid_point(setup):
    grid = setup.grid
    # nonzero elevation so the azimuth actually matters (no score ties)
    point = (
        float(grid.phi_points[3]), float(grid.psi_points[1]), float(grid.tau_points[4])
    )
    y = setup.model.atom(*point)
    got = precise_search(y, point, grid, model=setup.model)
    assert got == pytest.approx(point, abs=1e-15)


def test_precise_search_halves_quantization(setup):
    grid = setup.grid
    cfg = setup.cfg
    tau_step = cfg.max_delay_s / len(grid.tau_points)
    truth = (
        float(grid.phi_points[2]),
        float(grid.psi_points[1]),
        float(grid.tau_points[4]) + 0.5 * tau_step,
    )
    y = setup.model.atom(*truth)
    coarse = greedy_search(y, grid, setup.profile, setup.geometry, cfg)[:3]
    got = precise_search(y, coarse, grid, model=setup.model)
    ratio = cfg.precise_grid_rates[2] / cfg.coarse_grid_rates[2]
    assert abs(got[2] - truth[2]) <= 0.5 * tau_step / ratio + 1e-18


def test_precise_search_never_scores_worse(setup):
    rng = np.random.default_rng(5)
    for _ in range(10):
        y = complex_noise(rng, setup.cfg.observation_length)
        coarse = greedy_search(y, setup.grid, setup.profile, setup.geometry, setup.cfg)
        refined = precise_search(y, coarse[:3], setup.grid, model=setup.model)
        score_refined = correlation_score(setup.model.atom(*refined), y)
        assert score_refined >= coarse[3] - 1e-12 * coarse[3]


# -- Newton objective and derivatives ---------------------------------------------


def test_newton_objective_trivials(setup):
    cfg = setup.cfg
    point = (0.3, -0.4, 0.6 * cfg.max_delay_s)
    rng = np.random.default_rng(6)
    y = complex_noise(rng, cfg.observation_length)
    assert newton_objective(0.0, *point, y, model=setup.model) == 0.0
    f = setup.model.atom(*point)
    g = 0.7 - 0.4j
    assert newton_objective(g, *point, g * f, model=setup.model) == pytest.approx(
        float(np.vdot(g * f, g * f).real)
    )


def test_newton_objective_identity(setup):
    rng = np.random.default_rng(7)
    cfg = setup.cfg
    for _ in range(10):
        point = (
            rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4),
            rng.uniform(0, cfg.max_delay_s),
        )
        g = complex(*rng.standard_normal(2))
        y = complex_noise(rng, cfg.observation_length, 2.0)
        f = setup.model.atom(*point)
        direct = newton_objective(g, *point, y, model=setup.model)
        identity = float(np.vdot(y, y).real - np.vdot(y - g * f, y - g * f).real)
        assert direct == pytest.approx(identity, rel=1e-10)


def test_newton_gradient_zero_at_truth(setup):
    cfg = setup.cfg
    point = (0.5, -0.8, 0.3 * cfg.max_delay_s)
    g = 1.1 + 0.3j
    y = g * setup.model.atom(*point)
    grad, _ = newton_derivatives(g, *point, y, model=setup.model)
    scale = np.array([1.0, 1.0, cfg.bandwidth_hz])
    # gradient in range-scaled units vanishes at the global optimum
    assert np.max(np.abs(grad / scale)) < 1e-6 * float(np.vdot(y, y).real)


def test_newton_derivatives_match_finite_differences(setup):
    rng = np.random.default_rng(8)
    cfg = setup.cfg
    steps = np.array([1e-6, 1e-6, 1e-6 / cfg.subcarrier_spacing_hz])
    for _ in range(5):
        point = np.array([
            rng.uniform(-1.3, 1.3), rng.uniform(-1.3, 1.3),
            rng.uniform(0.1, 0.9) * cfg.max_delay_s,
        ])
        g = complex(*rng.standard_normal(2))
        y = complex_noise(rng, cfg.observation_length, 4.0)
        grad, hess = newton_derivatives(g, *point, y, model=setup.model)
        fd_grad = np.zeros(3)
        for a in range(3):
            hi, lo = point.copy(), point.copy()
            hi[a] += steps[a]
            lo[a] -= steps[a]
            fd_grad[a] = (
                newton_objective(g, *hi, y, model=setup.model)
                - newton_objective(g, *lo, y, model=setup.model)
            ) / (2 * steps[a])
        assert np.max(np.abs(grad - fd_grad)) <= 1e-5 * np.max(np.abs(fd_grad))
        fd_hess = np.zeros((3, 3))
        for b in range(3):
            hi, lo = point.copy(), point.copy()
            hi[b] += steps[b]
            lo[b] -= steps[b]
            gh, _ = newton_derivatives(g, *hi, y, model=setup.model)
            gl, _ = newton_derivatives(g, *lo, y, model=setup.model)
            fd_hess[:, b] = (gh - gl) / (2 * steps[b])
        assert np.max(np.abs(hess - fd_hess)) <= 1e-4 * np.max(np.abs(fd_hess))
        np.testing.assert_allclose(hess, hess.T)


# -- refinement ---------------------------------------------------------------------


def test_single_refine_noop_at_truth(setup):
    cfg = setup.cfg
    truth = (0.5, -0.8, 0.3 * cfg.max_delay_s)
    g = 1.1 + 0.3j
    y = g * setup.model.atom(*truth)
    start = PathEstimate(gain=g, elevation=truth[0], azimuth=truth[1], delay=truth[2])
    out = single_refine(start, y, model=setup.model)
    assert out == start


def test_single_refine_contracts_error(mid_setup):
    cfg = mid_setup.cfg
    grid = mid_setup.grid
    truth = np.array([0.52, -0.77, 0.31 * cfg.max_delay_s])
    g = 1.0 + 0.5j
    y = g * mid_setup.model.atom(*truth)
    # start within one precise cell of the truth
    steps = np.array(grid.spacings(cfg)) / 2.0
    start_params = truth + np.array([0.9, -0.8, 0.7]) * steps / 2.0
    start = PathEstimate(
        gain=gain_ls_single(y, mid_setup.model.atom(*start_params)),
        elevation=start_params[0], azimuth=start_params[1], delay=start_params[2],
    )
    out = single_refine(start, y, model=mid_setup.model)  # R_s = 5 from the config
    err0 = np.abs(start_params - truth)
    err1 = np.abs(np.array([out.elevation, out.azimuth, out.delay]) - truth)
    assert np.all(err1 <= err0 / 10.0)


def test_single_refine_objective_never_decreases(setup):
    rng = np.random.default_rng(9)
    cfg = setup.cfg
    for _ in range(10):
        truth = (
            rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4),
            rng.uniform(0, cfg.max_delay_s),
        )
        y = complex(*rng.standard_normal(2)) * setup.model.atom(*truth)
        y += complex_noise(rng, cfg.observation_length, 0.5)
        # adversarial far-away start
        start_params = (
            rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4),
            rng.uniform(0, cfg.max_delay_s),
        )
        g0 = gain_ls_single(y, setup.model.atom(*start_params))
        start = PathEstimate(gain=g0, elevation=start_params[0],
                             azimuth=start_params[1], delay=start_params[2])
        out = single_refine(start, y, model=setup.model)
        obj0 = newton_objective(g0, *start_params, y, model=setup.model)
        obj1 = newton_objective(
            out.gain, out.elevation, out.azimuth, out.delay, y, model=setup.model
        )
        assert obj1 >= obj0 - 1e-9 * abs(obj0)


def test_cyclic_refine_single_path_equals_chained_single(setup):
    cfg = setup.cfg
    truth = np.array([0.52, -0.77, 0.31 * cfg.max_delay_s])
    y = (1.0 + 0.5j) * setup.model.atom(*truth)
    start = PathEstimate(
        gain=gain_ls_single(y, setup.model.atom(0.45, -0.70, 0.28 * cfg.max_delay_s)),
        elevation=0.45, azimuth=-0.70, delay=0.28 * cfg.max_delay_s,
    )
    estimates = EstimateSet(paths=(start,), residual_power=float(np.vdot(y, y).real),
                            iterations_used=1, stop_reason="threshold")
    refined = cyclic_refine(estimates, y, model=setup.model)
    # R_c rounds of R_s iterations on a lone path == chained single refinement
    chained = start
    for _ in range(cfg.cyclic_refine_rounds):
        chained = single_refine(chained, y, model=setup.model)
    assert refined.paths[0] == chained


def test_cyclic_refine_two_paths_converges(mid_setup):
    cfg = mid_setup.cfg
    t1 = np.array([0.85, 0.40, 0.15 * cfg.max_delay_s])
    t2 = np.array([-0.75, -0.95, 0.65 * cfg.max_delay_s])
    g1, g2 = 1.2 - 0.3j, 0.8 + 0.9j
    y = g1 * mid_setup.model.atom(*t1) + g2 * mid_setup.model.atom(*t2)
    perturb = np.array([0.02, -0.02, 0.01 * cfg.max_delay_s])
    paths = []
    for truth, gain in ((t1, g1), (t2, g2)):
        p = truth + perturb
        paths.append(PathEstimate(gain=gain, elevation=p[0], azimuth=p[1], delay=p[2]))
    estimates = EstimateSet(paths=tuple(paths), residual_power=0.0,
                            iterations_used=2, stop_reason="threshold")
    refined = cyclic_refine(estimates, y, model=mid_setup.model)
    for out, (truth, gain) in zip(refined.paths, ((t1, g1), (t2, g2))):
        assert abs(out.elevation - truth[0]) < 1e-4 * math.pi
        assert abs(out.azimuth - truth[1]) < 1e-4 * math.pi
        assert abs(out.delay - truth[2]) < 1e-4 * cfg.max_delay_s
        assert abs(out.gain - gain) < 1e-4
    assert refined.residual_power <= 1e-8 * float(np.vdot(y, y).real)


def test_cyclic_refine_residual_non_increasing(setup):
    rng = np.random.default_rng(10)
    cfg = setup.cfg
    for trial in range(5):
        t1 = rng.uniform(-1.2, 1.2, 2)
        t2 = rng.uniform(-1.2, 1.2, 2)
        taus = rng.uniform(0, cfg.max_delay_s, 2)
        y = setup.model.atom(t1[0], t1[1], taus[0]) - 0.7j * setup.model.atom(
            t2[0], t2[1], taus[1]
        )
        y += complex_noise(rng, cfg.observation_length, 0.05)
        paths = (
            PathEstimate(gain=0.9, elevation=t1[0], azimuth=t1[1], delay=taus[0]),
            PathEstimate(gain=-0.6j, elevation=t2[0], azimuth=t2[1], delay=taus[1]),
        )
        power = [float(np.vdot(y - sum(
            p.gain * setup.model.atom(p.elevation, p.azimuth, p.delay) for p in paths
        ), y - sum(
            p.gain * setup.model.atom(p.elevation, p.azimuth, p.delay) for p in paths
        )).real)]
        est = EstimateSet(paths=paths, residual_power=power[0],
                          iterations_used=2, stop_reason="threshold")
        for _ in range(3):  # each call runs R_c rounds; power must keep shrinking
            est = cyclic_refine(est, y, model=setup.model)
            power.append(est.residual_power)
        assert all(b <= a + 1e-9 * abs(a) for a, b in zip(power, power[1:]))


# -- joint gain update ----------------------------------------------------------------


def test_update_gains_single_path_reduces_to_projection(setup):
    cfg = setup.cfg
    f = setup.model.atom(0.3, 0.3, 0.4 * cfg.max_delay_s)
    rng = np.random.default_rng(11)
    y = (2 + 1j) * f + complex_noise(rng, cfg.observation_length, 0.1)
    paths = (PathEstimate(gain=0.0, elevation=0.3, azimuth=0.3,
                          delay=0.4 * cfg.max_delay_s),)
    update = update_gains_ls(paths, y, model=setup.model)
    assert not update.ill_conditioned
    assert update.gains[0] == pytest.approx(gain_ls_single(y, f))


def test_update_gains_matches_normal_equations_oracle(setup):
    cfg = setup.cfg
    rng = np.random.default_rng(12)
    triples = [
        (0.9, 0.2, 0.1 * cfg.max_delay_s),
        (-0.5, -0.9, 0.5 * cfg.max_delay_s),
        (0.1, 1.2, 0.85 * cfg.max_delay_s),
    ]
    atoms = [setup.model.atom(*t) for t in triples]
    gains_true = np.array([1.0 + 0.2j, -0.7j, 0.4 - 0.4j])
    y = sum(g * f for g, f in zip(gains_true, atoms))
    y += complex_noise(rng, cfg.observation_length, 0.01)
    paths = tuple(
        PathEstimate(gain=0.0, elevation=t[0], azimuth=t[1], delay=t[2])
        for t in triples
    )
    update = update_gains_ls(paths, y, model=setup.model)
    # independent oracle: gram assembled entrywise, solved by explicit inverse
    n = len(atoms)
    gram = np.zeros((n, n), dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    for i in range(n):
        rhs[i] = np.sum(np.conj(atoms[i]) * y)
        for j in range(n):
            gram[i, j] = np.sum(np.conj(atoms[i]) * atoms[j])
    expected = np.linalg.inv(gram) @ rhs
    np.testing.assert_allclose(update.gains, expected, rtol=1e-10, atol=1e-12)


def test_update_gains_flags_collinear_atoms(setup):
    cfg = setup.cfg
    t = (0.9, 0.2, 0.1 * cfg.max_delay_s)
    paths = (
        PathEstimate(gain=0.0, elevation=t[0], azimuth=t[1], delay=t[2]),
        PathEstimate(gain=0.0, elevation=t[0], azimuth=t[1], delay=t[2]),
    )
    y = setup.model.atom(*t)
    update = update_gains_ls(paths, y, model=setup.model)
    assert update.ill_conditioned
    assert np.all(np.isfinite(update.gains))


# -- full pipelines --------------------------------------------------------------------


def test_run_nomp_exact_on_grid(setup):
    cfg = setup.cfg.replace(noise_variance=1e-8)
    grid = setup.grid
    truth = (
        float(grid.phi_points[3]), float(grid.psi_points[1]), float(grid.tau_points[7])
    )
    g = 0.9 - 0.4j
    channel = make_channel(setup.geometry, (g,) + truth)
    y = g * setup.model.atom(*truth)
    est = run_nomp(y, setup.profile, setup.geometry, cfg, max_paths=4)
    assert est.num_paths == 1
    assert est.stop_reason == "threshold"
    p = est.paths[0]
    assert abs(p.elevation - truth[0]) <= 1e-10 * math.pi
    assert abs(p.azimuth - truth[1]) <= 1e-10 * math.pi
    assert abs(p.delay - truth[2]) <= 1e-10 * cfg.max_delay_s
    assert abs(p.gain - g) <= 1e-10


def test_run_nomp_residual_monotone_in_path_budget(setup):
    rng = np.random.default_rng(13)
    cfg = setup.cfg.replace(noise_variance=0.05)
    y = setup.model.atom(0.7, -0.3, 0.42 * cfg.max_delay_s)
    y = y - 0.8j * setup.model.atom(-0.9, 0.8, 0.81 * cfg.max_delay_s)
    y += complex_noise(rng, cfg.observation_length, cfg.noise_variance)
    powers = [
        run_nomp(y, setup.profile, setup.geometry, cfg, max_paths=k).residual_power
        for k in range(1, 5)
    ]
    assert all(b <= a + 1e-12 * a for a, b in zip(powers, powers[1:]))


def test_omp_equals_nomp_with_zero_refinement(setup):
    rng = np.random.default_rng(14)
    cfg = setup.cfg.replace(noise_variance=0.02)
    y = 1.1 * setup.model.atom(0.33, -0.21, 0.29 * cfg.max_delay_s)
    y += complex_noise(rng, cfg.observation_length, cfg.noise_variance)
    omp = run_omp_baseline(y, setup.profile, setup.geometry, cfg, max_paths=4)
    zero_cfg = cfg.replace(single_refine_iters=0, cyclic_refine_rounds=0)
    nomp_zero = run_nomp(y, setup.profile, setup.geometry, zero_cfg, max_paths=4)
    assert omp == nomp_zero


def test_omp_matches_nomp_on_grid_truth(mid_setup):
    cfg = mid_setup.cfg.replace(noise_variance=1e-8)
    grid = mid_setup.grid
    truth = (
        float(grid.phi_points[2]), float(grid.psi_points[3]), float(grid.tau_points[5])
    )
    y = (0.5 + 0.5j) * mid_setup.model.atom(*truth)
    omp = run_omp_baseline(y, mid_setup.profile, mid_setup.geometry, cfg, max_paths=4)
    nomp = run_nomp(y, mid_setup.profile, mid_setup.geometry, cfg, max_paths=4)
    assert omp.num_paths == nomp.num_paths == 1
    for a, b in zip(omp.paths, nomp.paths):
        assert a.elevation == b.elevation
        assert a.azimuth == b.azimuth
        assert a.delay == b.delay
        assert a.gain == pytest.approx(b.gain, abs=1e-12)


def test_omp_error_floor_is_grid_quantization(mid_setup):
    cfg = mid_setup.cfg.replace(noise_variance=1e-8)
    grid = mid_setup.grid
    steps = np.array(grid.spacings(cfg))
    ratio = cfg.precise_grid_rates[0] / cfg.coarse_grid_rates[0]
    # truth placed mid-way between precise-grid points in every dimension
    truth = (
        float(grid.phi_points[3]) + 0.5 * steps[0] / ratio,
        float(grid.psi_points[1]) + 0.5 * steps[1] / ratio,
        float(grid.tau_points[6]) + 0.5 * steps[2] / ratio,
    )
    y = mid_setup.model.atom(*truth)
    omp = run_omp_baseline(y, mid_setup.profile, mid_setup.geometry, cfg, max_paths=4)
    p = omp.paths[0]
    # grid-limited: the error cannot be much below half a precise cell
    assert abs(p.delay - truth[2]) >= 0.4 * steps[2] / ratio
    # while NOMP refines beyond the grid on the same input
    nomp = run_nomp(y, mid_setup.profile, mid_setup.geometry, cfg, max_paths=4)
    assert abs(nomp.paths[0].delay - truth[2]) < 0.01 * steps[2] / ratio


def test_run_nomp_validates_length(setup):
    with pytest.raises(ValueError, match="shape"):
        run_nomp(np.zeros(5, dtype=complex), setup.profile, setup.geometry, setup.cfg)


def test_run_nomp_max_paths_stop(setup):
    rng = np.random.default_rng(15)
    cfg = setup.cfg.replace(noise_variance=1e-6)
    y = setup.model.atom(0.6, -0.6, 0.33 * cfg.max_delay_s)
    y += complex_noise(rng, cfg.observation_length, 0.01)  # misdeclared noise level
    est = run_nomp(y, setup.profile, setup.geometry, cfg, max_paths=2)
    assert est.stop_reason == "max-paths"
    assert est.num_paths == 2
    assert est.iterations_used == 2
