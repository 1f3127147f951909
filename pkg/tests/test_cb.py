import math

import numpy as np
import pytest

from cabbench.cab import (
    CabConfig,
    UnsupportedGateError,
    estimate_fidelity,
    execute_cab_run,
    run_cb_experiment,
)
from cabbench.circuits import GateBlock
from cabbench.device import ControlPhases, DeviceModel, GateSpec


def cz_device(p=1.0, control=None, **kw):
    return DeviceModel(
        n_qubits=2,
        gates=(GateSpec(pair=(0, 1), depol_p=p, control=control or ControlPhases()),),
        **kw,
    )


def test_cb_perfect_device():
    dev = cz_device()
    block = GateBlock.parallel_cz(dev, (0,))
    cfg = CabConfig(depths=(5, 10), k_r=10, k_s=500, seed=0, backend="dm")
    est = run_cb_experiment(dev, block, cfg, cycles=(2, 4), n_chars=5)
    assert est.value == pytest.approx(1.0, abs=1e-9)


def test_cb_agrees_with_cab_on_noisy_cz():
    dev = cz_device(p=0.97, control=ControlPhases(0.05, 0.02, 0.0), single_qubit_depol=0.998)
    block = GateBlock.parallel_cz(dev, (0,))
    cfg = CabConfig(depths=(5, 10), k_r=25, k_s=20_000, mode="traverse", seed=3, backend="dm")
    cab = estimate_fidelity(execute_cab_run(dev, block, cfg, "dressed", tag=0))
    cb = run_cb_experiment(dev, block, cfg, cycles=(10, 20), n_chars=5)
    combined = math.hypot(cab.se, cb.se)
    assert abs(cab.value - cb.value) < 3 * combined + 3e-3


def test_cb_rejects_bad_cycle_counts():
    dev = cz_device()
    block = GateBlock.parallel_cz(dev, (0,))
    cfg = CabConfig(depths=(5, 10), k_r=10, k_s=100, seed=0)
    with pytest.raises(UnsupportedGateError):
        run_cb_experiment(dev, block, cfg, cycles=(3, 6), n_chars=5)


def test_cb_rejects_large_order():
    from cabbench.paulis import LocalCliffordLayer
    from cabbench.tableau import CliffordTableau

    dev = cz_device()
    # phase gate has order 4 > the cap we pass
    t = CliffordTableau.phase_gate(2, 0)
    block = GateBlock(
        name="s0", n=2, tableau=t, layers=(), inverse_layers=()
    )
    cfg = CabConfig(depths=(5, 10), k_r=10, k_s=100, seed=0)
    with pytest.raises(UnsupportedGateError):
        run_cb_experiment(dev, block, cfg, cycles=(4, 8), n_chars=5, order_cap=2)
