"""Circuit sequences built from layers, and benchmark target gate blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import DeviceModel
from .paulis import LocalCliffordLayer, PauliString
from .tableau import CliffordTableau


@dataclass(frozen=True)
class CliffordLayer:
    """A layer of parallel single-qubit Cliffords."""

    layer: LocalCliffordLayer

    def tableau(self, n: int) -> CliffordTableau:
        return CliffordTableau.from_local_layer(self.layer)


@dataclass(frozen=True)
class PauliLayer:
    """A layer of single-qubit Paulis; ``closing`` marks the inverse gate."""

    pauli: PauliString
    closing: bool = False

    def tableau(self, n: int) -> CliffordTableau:
        return CliffordTableau.from_pauli_conjugation(self.pauli)


@dataclass(frozen=True)
class GateLayer:
    """Parallel execution of a set of the device's two-qubit gates."""

    gates: tuple[int, ...]

    def tableau_for(self, device: DeviceModel, n: int) -> CliffordTableau:
        pairs = [device.gates[g].pair for g in self.gates]
        return CliffordTableau.from_cz_layer(n, pairs)


@dataclass(frozen=True)
class Unitary1qLayer:
    """Arbitrary single-qubit unitaries; density-matrix backend only."""

    ops: tuple[tuple[int, np.ndarray], ...]


Layer = CliffordLayer | PauliLayer | GateLayer | Unitary1qLayer


@dataclass(frozen=True)
class CircuitSequence:
    """Ordered layers acting on a fixed register."""

    n: int
    layers: tuple[Layer, ...]

    def net_tableau(self, device: DeviceModel) -> CliffordTableau:
        net = CliffordTableau.identity(self.n)
        for layer in self.layers:
            if isinstance(layer, Unitary1qLayer):
                raise ValueError("net tableau undefined for non-Clifford layers")
            if isinstance(layer, GateLayer):
                t = layer.tableau_for(device, self.n)
            else:
                t = layer.tableau(self.n)
            net = t.compose(net)
        return net

    def closes_to_identity(self, device: DeviceModel) -> bool:
        return self.net_tableau(device).is_identity()


@dataclass(frozen=True)
class GateBlock:
    """A benchmark target: its tableau plus device-level layer decomposition.

    ``layers`` implement the gate, ``inverse_layers`` its inverse, both in
    circuit order.  For a parallel CZ gate the two coincide.
    """

    name: str
    n: int
    tableau: CliffordTableau
    layers: tuple[Layer, ...]
    inverse_layers: tuple[Layer, ...]
    gate_indices: tuple[int, ...] = ()

    @staticmethod
    def parallel_cz(device: DeviceModel, gate_indices: tuple[int, ...]) -> "GateBlock":
        device.check_layer_disjoint(gate_indices)
        n = device.n_qubits
        pairs = [device.gates[g].pair for g in gate_indices]
        t = CliffordTableau.from_cz_layer(n, pairs)
        layer = (GateLayer(tuple(gate_indices)),)
        return GateBlock(
            name=f"parallel_cz[{','.join(str(g) for g in gate_indices)}]",
            n=n,
            tableau=t,
            layers=layer,
            inverse_layers=layer,
            gate_indices=tuple(gate_indices),
        )

    @staticmethod
    def identity(n: int) -> "GateBlock":
        return GateBlock(
            name="identity",
            n=n,
            tableau=CliffordTableau.identity(n),
            layers=(),
            inverse_layers=(),
        )
