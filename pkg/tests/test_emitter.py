"""Emitter model: rate mapping, decay wavepackets, dephasing walks."""

import math

import numpy as np
import pytest

from photonmod import (
    GridSnapWarning,
    apply_phase,
    coherence_params,
    exponential_wavepacket,
    make_time_grid,
    norm,
    phase_trajectories,
    sample_phase_trajectory,
)


def test_coherence_params_rate_mapping():
    m = coherence_params(1.4, 0.28)
    assert abs(m.gamma - 1.0 / 1.4) < 1e-15
    # 1/T2 - 1/(2 T1)
    assert abs(m.gamma_star - (1.0 / 0.28 - 0.5 / 1.4)) < 1e-12
    assert abs(m.gamma_star - 3.2142857142857144) < 1e-12


def test_coherence_params_transform_limit():
    m = coherence_params(1.0, 2.0)
    assert m.gamma_star == 0.0
    with pytest.raises(ValueError, match="transform limit"):
        coherence_params(1.0, 2.01)
    with pytest.raises(ValueError):
        coherence_params(-1.0, 0.5)
    with pytest.raises(ValueError):
        coherence_params(1.0, 0.0)


def test_unmodulated_overlap_closed_form():
    for tau_sp, tau_coh in [(1.4, 0.28), (1.0, 0.5), (2.0, 3.0)]:
        m = coherence_params(tau_sp, tau_coh)
        expect = m.gamma / (m.gamma + 2.0 * m.gamma_star)
        assert abs(m.unmodulated_indistinguishability() - expect) < 1e-15


def test_exponential_wavepacket_profile_and_norm():
    m = coherence_params(1.4, 0.28)
    g = make_time_grid(0.0, 20.0, 0.001)
    wp = exponential_wavepacket(m, g)
    t = g.times()
    rho = np.abs(wp.amplitude) ** 2
    expect = m.gamma * np.exp(-m.gamma * t)
    assert np.max(np.abs(rho - expect)) < 1e-4 * m.gamma
    # norm matches the truncated analytic mass, not 1
    mass = 1.0 - math.exp(-m.gamma * 20.0)
    assert abs(norm(wp) - mass) < 1e-12


def test_exponential_wavepacket_emission_offset():
    m = coherence_params(1.0, 1.0)
    g = make_time_grid(0.0, 12.0, 0.001)
    wp = exponential_wavepacket(m, g, t_emit=2.0)
    rho = np.abs(wp.amplitude) ** 2
    t = g.times()
    assert np.all(rho[t < 2.0] == 0.0)
    k = int(np.argmax(t >= 2.0))
    assert abs(rho[k] - m.gamma) < 1e-3 * m.gamma


def test_exponential_wavepacket_snaps_offgrid_emission():
    m = coherence_params(1.0, 1.0)
    g = make_time_grid(0.0, 12.0, 0.001)
    with pytest.warns(GridSnapWarning):
        wp = exponential_wavepacket(m, g, t_emit=1.00037)
    # snapped onset sits exactly on a sample
    rho = np.abs(wp.amplitude) ** 2
    onset = g.times()[int(np.argmax(rho > 0.0))]
    assert abs(onset - 1.0) < 0.001 + 1e-9


def test_exponential_wavepacket_needs_room():
    m = coherence_params(1.0, 1.0)
    g = make_time_grid(0.0, 5.0, 0.01)
    with pytest.raises(ValueError):
        exponential_wavepacket(m, g, t_emit=5.0)


def test_phase_trajectory_seeded_and_reproducible():
    m = coherence_params(1.4, 0.28)
    g = make_time_grid(0.0, 5.0, 0.001)
    a = sample_phase_trajectory(m, g, seed=7)
    b = sample_phase_trajectory(m, g, seed=7)
    c = sample_phase_trajectory(m, g, seed=8)
    assert np.array_equal(a.phase, b.phase)
    assert not np.array_equal(a.phase, c.phase)
    assert a.phase[0] == 0.0


def test_phase_trajectory_zero_dephasing_is_flat():
    m = coherence_params(1.0, 2.0)
    g = make_time_grid(0.0, 5.0, 0.01)
    traj = sample_phase_trajectory(m, g, seed=0)
    assert np.all(traj.phase == 0.0)


def test_phase_increment_statistics():
    # Wiener walk: increments over dt are N(0, 2 gamma_star dt)
    m = coherence_params(1.4, 0.28)
    g = make_time_grid(0.0, 2.0, 0.001)
    var_target = 2.0 * m.gamma_star * g.dt
    acc = 0.0
    count = 0
    for traj in phase_trajectories(m, g, count=50, seed=100):
        steps = np.diff(traj.phase)
        acc += float((steps**2).sum())
        count += steps.shape[0]
    var_hat = acc / count
    # 50 * 2000 samples: relative sd of the variance estimate ~ 0.45%
    assert abs(var_hat / var_target - 1.0) < 0.02


def test_ensemble_coherence_decays_at_gamma_star():
    # mean of exp(i phi(t)) over walks estimates exp(-gamma_star t)
    m = coherence_params(1.4, 0.28)
    g = make_time_grid(0.0, 0.6, 0.001)
    acc = np.zeros(g.n, dtype=complex)
    n_traj = 400
    for traj in phase_trajectories(m, g, count=n_traj, seed=500):
        acc += np.exp(1j * traj.phase)
    coh = np.abs(acc) / n_traj
    expect = np.exp(-m.gamma_star * g.times())
    # sampled mean has sd <= 1/sqrt(2 n); allow 4 sigma plus bias room
    assert np.max(np.abs(coh - expect)) < 0.1


def test_apply_phase_preserves_intensity():
    m = coherence_params(1.4, 0.28)
    g = make_time_grid(0.0, 10.0, 0.001)
    wp = exponential_wavepacket(m, g)
    traj = sample_phase_trajectory(m, g, seed=3)
    out = apply_phase(wp, traj)
    assert np.max(np.abs(np.abs(out.amplitude) - np.abs(wp.amplitude))) < 1e-12
    assert abs(norm(out) - norm(wp)) < 1e-12


def test_apply_phase_grid_mismatch():
    m = coherence_params(1.4, 0.28)
    g1 = make_time_grid(0.0, 10.0, 0.001)
    g2 = make_time_grid(0.0, 10.0, 0.002)
    wp = exponential_wavepacket(m, g1)
    traj = sample_phase_trajectory(m, g2, seed=0)
    with pytest.raises(ValueError):
        apply_phase(wp, traj)
