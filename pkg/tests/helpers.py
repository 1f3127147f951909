"""Dense-matrix reference implementations used as test oracles.

Everything here is deliberately independent of the package internals:
plain kron products and explicit channel evaluations.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
H2 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S2 = np.array([[1, 0], [0, 1j]], dtype=complex)

LETTERS = {"I": I2, "X": X2, "Y": Y2, "Z": Z2}


def kron_all(mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def pauli_matrix(label: str) -> np.ndarray:
    return kron_all([LETTERS[c] for c in label])


def embed_1q(n: int, q: int, mat: np.ndarray) -> np.ndarray:
    return kron_all([mat if i == q else I2 for i in range(n)])


def cz_matrix(n: int, a: int, b: int) -> np.ndarray:
    d = 2**n
    diag = np.ones(d, dtype=complex)
    for idx in range(d):
        if (idx >> (n - 1 - a)) & 1 and (idx >> (n - 1 - b)) & 1:
            diag[idx] = -1
    return np.diag(diag)


def process_fidelity_pauli_sum(apply_channel, n: int) -> float:
    """Eq-style Pauli-overlap average, computed brute force."""
    d = 2**n
    labels = ["".join(p) for p in _product_letters(n)]
    total = 0.0
    for lab in labels:
        p = pauli_matrix(lab)
        total += np.real(np.trace(p @ apply_channel(p)))
    return float(total / (2 ** (3 * n)))


def _product_letters(n):
    if n == 0:
        yield ()
        return
    for rest in _product_letters(n - 1):
        for c in "IXYZ":
            yield (c, *rest)


def depolarizing_channel(p: float, dim: int):
    def apply(rho):
        return p * rho + (1 - p) * np.trace(rho) * np.eye(dim) / dim

    return apply


def unitary_channel(u: np.ndarray):
    def apply(rho):
        return u @ rho @ u.conj().T

    return apply


def exact_survival(probs: np.ndarray, w: int) -> float:
    """sum_x p(x) (-1)^(w.x) from an exact outcome distribution."""
    d = len(probs)
    parity = (np.bitwise_count(np.arange(d) & w) & 1).astype(np.float64)
    return float(probs @ (1.0 - 2.0 * parity))
