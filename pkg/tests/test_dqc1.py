import numpy as np
import pytest

from dqc1lab.dqc1 import (
    Dqc1Config, SweepRecord, controlled_phase, default_phi_grid, hadamard_equiv, ideal_state,
    normalized_trace, ordered_map, pre_gate_state, run_circuit, sweep, trace_estimate, worker_count,
)
from dqc1lab.matqm import DensityMatrix, HilbertSpec, partial_trace
from dqc1lab.resources import DiscordConfig


def test_default_grid_hits_special_points():
    grid = default_phi_grid()
    assert len(grid) == 65
    for k in range(5):
        assert grid[16 * k] == pytest.approx(k * np.pi / 2, abs=1e-15)


def test_gates():
    h = hadamard_equiv().elements
    assert np.allclose(h @ [1, 0], np.array([1, 1]) / np.sqrt(2))
    cp = controlled_phase(np.pi / 2, 4).elements
    assert np.allclose(np.diag(cp), [1, 1, 1, 1, 1, 1j, -1, -1j])
    with pytest.raises(ValueError):
        controlled_phase(0.1, 1)


def test_pre_gate_state_is_maximally_coherent_ancilla():
    anc = partial_trace(pre_gate_state(Dqc1Config()), ["ancilla"])
    assert np.allclose(anc.elements, 0.5 * np.ones((2, 2)))


@pytest.mark.parametrize("phi", [0.0, np.pi / 4, 1.234, np.pi, 5.5])
def test_trace_estimate_matches_geometric_sum(phi):
    re, im = trace_estimate(ideal_state(phi))
    t = normalized_trace(phi, 8)
    assert abs(re - t.real) < 1e-12 and abs(im - t.imag) < 1e-12


def test_trace_at_quarter_turn_is_zero():
    re, im = trace_estimate(ideal_state(np.pi / 4))
    assert abs(re) < 1e-12 and abs(im) < 1e-12
    assert trace_estimate(ideal_state(0.0)) == pytest.approx((1.0, 0.0), abs=1e-12)


def test_output_block_structure_and_purity():
    purities = []
    for phi in np.linspace(0, 2 * np.pi, 13):
        rho = ideal_state(phi).elements
        off = rho[:8, 8:]
        assert np.abs(off - np.diag(np.diag(off))).max() < 1e-12
        purities.append(np.real(np.trace(rho @ rho)))
    assert np.ptp(purities) < 1e-12


def test_register_dimension_two():
    rho = ideal_state(np.pi / 2, d=2)
    assert rho.dim == 4
    assert trace_estimate(rho) == pytest.approx(((1 + 0) / 2, 0.5), abs=1e-12)


def test_noiseless_sweep_records():
    cfg = Dqc1Config(phi_grid=default_phi_grid(9))
    recs = sweep(cfg)
    assert [r.phi for r in recs] == list(cfg.phi_grid)
    for r in recs:
        assert r.discord.value <= r.delta_C + 1e-4
        assert r.C_before == pytest.approx(1.0, abs=1e-12)
        assert r.joint_fidelity == pytest.approx(1.0, abs=1e-9)
    assert abs(recs[0].discord.value) < 1e-6 and abs(recs[-1].discord.value) < 1e-6
    assert recs[4].delta_C == pytest.approx(1.0, abs=1e-9)


def test_sweep_order_independent_of_workers(monkeypatch):
    cfg = Dqc1Config(phi_grid=(2.0, 0.5, 1.0), discord=DiscordConfig(starts=2))
    monkeypatch.setenv("DQC1LAB_THREADS", "3")
    par = sweep(cfg, workers=3)
    monkeypatch.setenv("DQC1LAB_THREADS", "1")
    seq = sweep(cfg)
    assert [r.phi for r in par] == [2.0, 0.5, 1.0]
    assert [r.discord.value for r in par] == [r.discord.value for r in seq]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("DQC1LAB_THREADS", "2")
    assert worker_count(8) == 2
    assert ordered_map(lambda x: x * x, [3, 1, 2], workers=4) == [9, 1, 4]


def test_config_validation():
    with pytest.raises(ValueError):
        Dqc1Config(register_dim=1)
    with pytest.raises(ValueError):
        Dqc1Config(phi_grid=(0.0, float("nan")))
    bad = DensityMatrix(HilbertSpec.of(("qubit", 2)), np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        Dqc1Config(initial_ancilla=bad)
    assert Dqc1Config(discord_mode="full").discord.mode == "full"


def test_record_rejects_impossible_trace():
    rho = ideal_state(0.0)
    res = sweep(Dqc1Config(phi_grid=(0.0,), discord=DiscordConfig(starts=1)))[0].discord
    with pytest.raises(ValueError):
        SweepRecord(0.0, 1.0, 0.5, 1, 0, 1, res, 1.0, rho)
