"""Composite benchmark targets and device constructors used by the CLI."""

from __future__ import annotations

import numpy as np

from .circuits import CliffordLayer, GateBlock, GateLayer
from .device import CouplingMap, DeviceModel, GateSpec
from .paulis import sample_local_clifford
from .tableau import CliffordTableau, gate_order


def ring_cz_patterns(n: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """The two brickwork CZ patterns of an n-qubit ring."""
    if n % 2 or n < 4:
        raise ValueError("ring size must be even and at least 4")
    a = [(q, q + 1) for q in range(0, n, 2)]
    b = [(q, (q + 1) % n) for q in range(1, n, 2)]
    return a, b


def ring_device(n: int, gate_depol: float = 1.0, **kw) -> DeviceModel:
    """Device with both brickwork CZ layers of a ring available."""
    a, b = ring_cz_patterns(n)
    gates = tuple(GateSpec(pair=p, depol_p=gate_depol) for p in a + b)
    edges = tuple((q, (q + 1) % n) for q in range(n))
    return DeviceModel(n_qubits=n, gates=gates, couplings=CouplingMap(), layout_edges=edges, **kw)


def fully_connected_gate(device: DeviceModel, a_gates: tuple[int, ...], b_gates: tuple[int, ...], rng: np.random.Generator) -> GateBlock:
    """Brickwork unit: CZ layer, random local layer, CZ layer, local layer."""
    n = device.n_qubits
    v1 = sample_local_clifford(n, rng)
    v2 = sample_local_clifford(n, rng)
    t = CliffordTableau.from_cz_layer(n, [device.gates[g].pair for g in a_gates])
    t = CliffordTableau.from_local_layer(v1).compose(t)
    t = CliffordTableau.from_cz_layer(n, [device.gates[g].pair for g in b_gates]).compose(t)
    t = CliffordTableau.from_local_layer(v2).compose(t)
    layers = (
        GateLayer(tuple(a_gates)),
        CliffordLayer(v1),
        GateLayer(tuple(b_gates)),
        CliffordLayer(v2),
    )
    inverse_layers = (
        CliffordLayer(v2.inverse()),
        GateLayer(tuple(b_gates)),
        CliffordLayer(v1.inverse()),
        GateLayer(tuple(a_gates)),
    )
    return GateBlock(
        name=f"fully_connected[n={n}]",
        n=n,
        tableau=t,
        layers=layers,
        inverse_layers=inverse_layers,
        gate_indices=tuple(a_gates) + tuple(b_gates),
    )


def ring_fully_connected(n: int, rng: np.random.Generator, **device_kw) -> tuple[GateBlock, DeviceModel]:
    """Fully connected gate on a fresh ring device; returns (block, device)."""
    dev = ring_device(n, **device_kw)
    n_half = n // 2
    a_gates = tuple(range(n_half))
    b_gates = tuple(range(n_half, n))
    return fully_connected_gate(dev, a_gates, b_gates, rng), dev


def gate_order_samples(n: int, samples: int, rng: np.random.Generator, cap: int = 100_000) -> list[int | None]:
    """Orders of the fully connected gate over random local-layer draws."""
    out = []
    for _ in range(samples):
        block, _dev = ring_fully_connected(n, rng)
        out.append(gate_order(block.tableau, cap=cap))
    return out
