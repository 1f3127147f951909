"""Character-average benchmarking engine and cycle-benchmarking baseline.

A benchmark run samples random sequences per circuit depth, executes them
on a backend, extracts Z-observable survival probabilities, fits the decay
f(m) = A * lambda^(2m) per observable, and averages the quality parameters
into a process-fidelity estimate.  The twirling-layer fidelity is measured
the same way with the identity as the target gate; the interleaved formula
isolates the pure gate fidelity from the dressed one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends import ShotCounts, dm_run, stab_run_counts
from .circuits import CircuitSequence, CliffordLayer, GateBlock, PauliLayer
from .device import DeviceModel, ResourceLimitError
from .paulis import sample_local_clifford, sample_random_pauli
from .tableau import compile_inverse_pauli, gate_order

TRAVERSE_LIMIT = 12
SUBSET_QUBIT_LIMIT = 8
DM_AUTO_LIMIT = 6


class DegenerateFitError(RuntimeError):
    """A decay fit has a zero denominator."""


class UnsupportedGateError(ValueError):
    """The target gate cannot be benchmarked by this protocol."""


@dataclass(frozen=True)
class CabConfig:
    """Settings of one benchmarking experiment."""

    depths: tuple[int, ...] = (0, 2)
    k_r: int = 50
    k_s: int = 20_000
    mode: str = "sample"  # "sample" or "traverse"
    k_q: int = 100
    seed: int = 0
    subsets: tuple[tuple[int, ...], ...] = ()
    backend: str = "auto"  # "dm", "stab", or "auto"
    threads: int = 1

    def __post_init__(self):
        if len(set(self.depths)) < 2 or any(m < 0 for m in self.depths):
            raise ValueError("need at least two distinct non-negative depths")
        if self.k_r < 1 or self.k_s < 1:
            raise ValueError("k_r and k_s must be >= 1")
        if self.mode not in ("sample", "traverse"):
            raise ValueError("mode must be 'sample' or 'traverse'")
        if self.mode == "sample" and self.k_q < 1:
            raise ValueError("k_q must be >= 1 in sample mode")

    def replace(self, **kw) -> "CabConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kw)


@dataclass
class QualityParameter:
    """One fitted decay eigenvalue for a Z-observable label."""

    w_mask: int
    lam: float
    se: float
    flagged: bool = False


@dataclass
class FidelityEstimate:
    value: float
    se: float
    kind: str  # "dressed", "twirl" or "pure"
    quality_params: list[QualityParameter] = field(default_factory=list)
    n_flagged: int = 0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "se": self.se,
            "kind": self.kind,
            "n_flagged": self.n_flagged,
            "metadata": self.metadata,
        }


# ---------------------------------------------------------------------------
# sequence generation and observables
# ---------------------------------------------------------------------------


def build_cab_sequence(block: GateBlock, m: int, rng: np.random.Generator) -> CircuitSequence:
    """One random benchmarking sequence of depth m for the target block.

    Layout: C, then m repetitions of (P, U, P, U^-1), then the compiled
    closing Pauli, then C^-1.  The noiseless composition is the identity.
    """
    n = block.n
    c = sample_local_clifford(n, rng)
    paulis = [sample_random_pauli(n, rng) for _ in range(2 * m)]
    closer = compile_inverse_pauli(block.tableau, paulis, m)
    layers: list = [CliffordLayer(c)]
    for i in range(m):
        layers.append(PauliLayer(paulis[2 * i]))
        layers.extend(block.layers)
        layers.append(PauliLayer(paulis[2 * i + 1]))
        layers.extend(block.inverse_layers)
    layers.append(PauliLayer(closer, closing=True))
    layers.append(CliffordLayer(c.inverse()))
    return CircuitSequence(n, tuple(layers))


def sample_observables(n: int, k_q: int, rng: np.random.Generator) -> np.ndarray:
    """k_q Z-observable masks, each bit set independently with probability 3/4.

    This is the product form of the weight distribution 3^|w| / 4^n; the
    same list must be reused for every depth.
    """
    if k_q < 1:
        raise ValueError("k_q must be >= 1")
    bits = (rng.random((k_q, n)) < 0.75).astype(np.uint8)
    from .backends import pack_bits

    return pack_bits(bits)


def survival_probability(counts: ShotCounts, w_mask: int) -> float:
    """Parity-weighted mean (-1)^(w.x) over the counted outcomes."""
    if counts.k_s < 1:
        raise ValueError("empty counts")
    return counts.survival(w_mask)


def kq_for_accuracy(epsilon: float, delta: float) -> int:
    """Observable budget from the Hoeffding bound: ceil(2 eps^-2 ln(2/delta))."""
    if not 0 < epsilon <= 1 or not 0 < delta < 1:
        raise ValueError("require 0 < epsilon <= 1 and 0 < delta < 1")
    return math.ceil(2.0 * epsilon**-2 * math.log(2.0 / delta))


# ---------------------------------------------------------------------------
# decay fitting
# ---------------------------------------------------------------------------


def _fit_lambda_arrays(exponents: np.ndarray, fbar: np.ndarray, ses: np.ndarray | None):
    """Vectorized decay fits f = A * lambda^x per observable column.

    ``fbar`` has shape (M, Q).  Returns (lam, se, flagged); flagged marks
    sign-ambiguous fits (non-positive survival ratios), whose lam is nan.
    """
    x = np.asarray(exponents, dtype=float)
    m, q = fbar.shape
    if m == 2:
        dx = x[1] - x[0]
        if dx == 0:
            raise DegenerateFitError("two identical depths")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = fbar[1] / fbar[0]
            flagged = ~(ratio > 0) | ~np.isfinite(ratio)
            lam = np.where(flagged, np.nan, np.abs(ratio)) ** (1.0 / dx)
            lam = np.where(flagged, np.nan, lam)
            if ses is not None:
                rel = np.sqrt((ses[0] / fbar[0]) ** 2 + (ses[1] / fbar[1]) ** 2)
                se = np.abs(lam) / dx * rel
            else:
                se = np.full(q, np.nan)
        return lam, se, flagged
    flagged = np.any(fbar <= 0, axis=0) | ~np.all(np.isfinite(fbar), axis=0)
    lam = np.full(q, np.nan)
    se = np.full(q, np.nan)
    ok = ~flagged
    if np.any(ok):
        y = np.log(fbar[:, ok])
        if ses is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = (fbar[:, ok] / ses[:, ok]) ** 2
            w = np.where(np.isfinite(w), w, 1.0)
        else:
            w = np.ones_like(y)
        wsum = w.sum(axis=0)
        xbar = (w * x[:, None]).sum(axis=0) / wsum
        ybar = (w * y).sum(axis=0) / wsum
        sxx = (w * (x[:, None] - xbar) ** 2).sum(axis=0)
        if np.any(sxx == 0):
            raise DegenerateFitError("zero spread of depths after weighting")
        slope = (w * (x[:, None] - xbar) * (y - ybar)).sum(axis=0) / sxx
        lam[ok] = np.exp(slope)
        se[ok] = lam[ok] * np.sqrt(1.0 / sxx)
    return lam, se, flagged


def fit_quality_parameter(points: list[tuple[float, float, float]], w_mask: int = 0) -> QualityParameter:
    """Fit one observable's decay; points are (m, fbar, se) per depth."""
    ms = np.array([p[0] for p in points], dtype=float)
    fbar = np.array([[p[1]] for p in points])
    ses = np.array([[p[2]] for p in points])
    if len(points) < 2 or len(set(ms.tolist())) < 2:
        raise ValueError("need at least two distinct depths")
    lam, se, flagged = _fit_lambda_arrays(2.0 * ms, fbar, ses)
    return QualityParameter(w_mask, float(lam[0]), float(se[0]), bool(flagged[0]))


def _weights_for_masks(masks: np.ndarray, n: int, mode: str) -> np.ndarray:
    if mode == "traverse":
        w = np.bitwise_count(masks.astype(np.int64)).astype(float)
        return 3.0**w / 4.0**n
    return np.full(len(masks), 1.0 / len(masks))


def _aggregate(lam: np.ndarray, weights: np.ndarray, flagged: np.ndarray) -> float:
    ok = ~flagged
    if not np.any(ok):
        return float("nan")
    return float(np.sum(weights[ok] * lam[ok]) / np.sum(weights[ok]))


# ---------------------------------------------------------------------------
# run data
# ---------------------------------------------------------------------------


@dataclass
class CabRunData:
    """Raw per-sequence results of one CAB run (one target, one device)."""

    block_name: str
    n: int
    kind: str
    depths: tuple[int, ...]
    k_r: int
    k_s: int
    mode: str
    masks: np.ndarray  # (Q,) observable masks tracked in `surv`
    surv: np.ndarray  # (M, K_r, Q) per-sequence survivals
    counts: list[list[ShotCounts]]  # [depth][sequence]
    backend: str

    def depth_means(self) -> np.ndarray:
        return self.surv.mean(axis=1)

    def depth_ses(self) -> np.ndarray:
        return self.surv.std(axis=1, ddof=1) / np.sqrt(self.k_r)


def _resolve_backend(name: str, n: int) -> str:
    if name == "auto":
        return "dm" if n <= DM_AUTO_LIMIT else "stab"
    if name not in ("dm", "stab"):
        raise ValueError("backend must be 'dm', 'stab' or 'auto'")
    return name


def execute_cab_run(
    device: DeviceModel,
    block: GateBlock,
    config: CabConfig,
    kind: str,
    tag: int,
) -> CabRunData:
    """Sample, execute and post-process all sequences of one run."""
    n = block.n
    backend = _resolve_backend(config.backend, n)
    depths = tuple(config.depths)
    if config.mode == "traverse":
        if n > TRAVERSE_LIMIT:
            raise ResourceLimitError(f"traverse mode limited to {TRAVERSE_LIMIT} qubits")
        masks = np.arange(2**n, dtype=np.int64)
    else:
        rng_obs = np.random.default_rng([config.seed, 5, tag])
        masks = sample_observables(n, config.k_q, rng_obs)

    def one_sequence(d_idx: int, k: int) -> ShotCounts:
        m = depths[d_idx]
        rng_seq = np.random.default_rng([config.seed, 17, tag, d_idx, k])
        seq = build_cab_sequence(block, m, rng_seq)
        rng_shot = np.random.default_rng([config.seed, 23, tag, d_idx, k])
        if backend == "dm":
            probs = dm_run(seq, device)
            return ShotCounts.from_probabilities(probs, n, config.k_s, rng_shot)
        return stab_run_counts(seq, device, config.k_s, rng_shot)

    tasks = [(d, k) for d in range(len(depths)) for k in range(config.k_r)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda t: one_sequence(*t), tasks))
    else:
        results = [one_sequence(*t) for t in tasks]
    counts: list[list[ShotCounts]] = [[] for _ in depths]
    for (d, _k), res in zip(tasks, results):
        counts[d].append(res)

    surv = np.empty((len(depths), config.k_r, len(masks)))
    for d in range(len(depths)):
        for k in range(config.k_r):
            sc = counts[d][k]
            if config.mode == "traverse":
                surv[d, k] = sc.all_survivals()
            else:
                packed = sc.packed()
                par = (np.bitwise_count(packed[:, None] & masks[None, :]) & 1).astype(float)
                surv[d, k] = ((1.0 - 2.0 * par) * sc.counts[:, None]).sum(axis=0) / sc.k_s
    return CabRunData(
        block_name=block.name,
        n=n,
        kind=kind,
        depths=depths,
        k_r=config.k_r,
        k_s=config.k_s,
        mode=config.mode,
        masks=masks,
        surv=surv,
        counts=counts,
        backend=backend,
    )


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def _estimate_from_surv(
    surv: np.ndarray,
    masks: np.ndarray,
    exponents: np.ndarray,
    n: int,
    mode: str,
    kind: str,
    k_r: int,
) -> FidelityEstimate:
    fbar = surv.mean(axis=1)
    ses = surv.std(axis=1, ddof=1) / np.sqrt(k_r) if k_r > 1 else None
    lam, lam_se, flagged = _fit_lambda_arrays(exponents, fbar, ses)
    identity = masks == 0
    lam[identity] = 1.0
    if lam_se is not None:
        lam_se[identity] = 0.0
    flagged[identity] = False
    weights = _weights_for_masks(masks, n, mode)
    value = _aggregate(lam, weights, flagged)

    # jackknife over sequences: delete-one recomputation of the whole chain
    jack = np.empty(k_r)
    for k in range(k_r):
        fk = (surv.sum(axis=1) - surv[:, k, :]) / (k_r - 1)
        lk, _, flk = _fit_lambda_arrays(exponents, fk, None)
        lk[identity] = 1.0
        flk[identity] = False
        jack[k] = _aggregate(lk, weights, flk)
    good = np.isfinite(jack)
    if good.sum() >= 2:
        jm = jack[good].mean()
        se_jack = float(np.sqrt((good.sum() - 1) / good.sum() * np.sum((jack[good] - jm) ** 2)))
    else:
        se_jack = float("nan")

    se = se_jack
    meta = {"se_jackknife": se_jack, "mode": mode}
    if mode == "sample":
        ok = ~flagged
        if ok.sum() >= 2:
            between = float(np.var(lam[ok], ddof=1) / ok.sum())
        else:
            between = 0.0
        se = float(np.sqrt(se_jack**2 + between))
        meta["se_observable_sampling"] = float(np.sqrt(between))
    qps = [
        QualityParameter(int(m_), float(l_), float(s_) if np.isfinite(s_) else 0.0, bool(f_))
        for m_, l_, s_, f_ in zip(masks, lam, lam_se if lam_se is not None else np.zeros_like(lam), flagged)
    ]
    return FidelityEstimate(
        value=value,
        se=se,
        kind=kind,
        quality_params=qps,
        n_flagged=int(flagged.sum()),
        metadata=meta,
    )


def estimate_fidelity(data: CabRunData, kind: str | None = None) -> FidelityEstimate:
    """Fidelity from a run: weighted (traverse) or plain (sample) mean of lambda."""
    exponents = 2.0 * np.asarray(data.depths, dtype=float)
    est = _estimate_from_surv(
        data.surv, data.masks, exponents, data.n, data.mode, kind or data.kind, data.k_r
    )
    est.metadata["backend"] = data.backend
    est.metadata["depths"] = list(data.depths)
    return est


def subset_fidelity(data: CabRunData, gate_subset: tuple[int, ...], device: DeviceModel) -> FidelityEstimate:
    """Fidelity of a gate subset, traversing the Z-observables on its qubits.

    Reuses the run's shot data: counts are marginalized to the subset's
    qubits and all 2^(2*len(subset)) restricted observables are traversed.
    """
    qubits = tuple(sorted({q for g in gate_subset for q in device.gates[g].pair}))
    if len(qubits) > SUBSET_QUBIT_LIMIT:
        raise ResourceLimitError(
            f"subset spans {len(qubits)} qubits, traverse limit is {SUBSET_QUBIT_LIMIT}"
        )
    from .device import fwht

    n_s = len(qubits)
    masks = np.arange(2**n_s, dtype=np.int64)
    surv = np.empty((len(data.depths), data.k_r, 2**n_s))
    for d in range(len(data.depths)):
        for k in range(data.k_r):
            vec = data.counts[d][k].marginal_count_vector(qubits)
            surv[d, k] = np.real(fwht(vec)) / data.k_s
    exponents = 2.0 * np.asarray(data.depths, dtype=float)
    est = _estimate_from_surv(surv, masks, exponents, n_s, "traverse", data.kind, data.k_r)
    est.metadata["gates"] = list(gate_subset)
    est.metadata["qubits"] = list(qubits)
    return est


def interleaved_pure_fidelity(dress: FidelityEstimate, twirl: FidelityEstimate, n: int) -> FidelityEstimate:
    """Isolate the target-gate fidelity from dressed and twirl estimates."""
    d4 = 4.0**n
    denom = d4 * twirl.value - 1.0
    if denom == 0.0:
        raise DegenerateFitError("twirl fidelity equals 1/4^n")
    f = (d4 * dress.value - 1.0) / denom * (1.0 - 1.0 / d4) + 1.0 / d4
    inv = 1.0 / d4
    var = 0.0
    if dress.value != inv:
        var += dress.se**2 / (dress.value - inv) ** 2
    if twirl.value != inv:
        var += twirl.se**2 / (twirl.value - inv) ** 2
    se = abs(f - inv) * math.sqrt(var)
    return FidelityEstimate(
        value=float(f),
        se=float(se),
        kind="pure",
        quality_params=[],
        n_flagged=dress.n_flagged + twirl.n_flagged,
        metadata={"n": n},
    )


# ---------------------------------------------------------------------------
# full experiments
# ---------------------------------------------------------------------------


@dataclass
class SubsetResult:
    gates: tuple[int, ...]
    qubits: tuple[int, ...]
    dressed: FidelityEstimate
    twirl: FidelityEstimate
    pure: FidelityEstimate


@dataclass
class CabReport:
    block_name: str
    n: int
    config: CabConfig
    dressed: FidelityEstimate
    twirl: FidelityEstimate
    pure: FidelityEstimate
    subsets: dict[tuple[int, ...], SubsetResult]
    metadata: dict

    def lambda_table(self) -> list[tuple[str, int, float, float, bool]]:
        """(kind, w_mask, lambda, se, flagged) rows for violin-plot export."""
        rows = []
        for kind, est in (("dressed", self.dressed), ("twirl", self.twirl)):
            for qp in est.quality_params:
                rows.append((kind, qp.w_mask, qp.lam, qp.se, qp.flagged))
        return rows


def run_cab_experiment(
    device: DeviceModel,
    block: GateBlock,
    config: CabConfig,
    *,
    measure_twirl: bool = True,
    keep_run_data: bool = False,
) -> CabReport:
    """Full pipeline: dressed run, twirl run, interleaving, subset fidelities."""
    dressed_data = execute_cab_run(device, block, config, "dressed", tag=0)
    dressed = estimate_fidelity(dressed_data)
    if measure_twirl:
        twirl_data = execute_cab_run(device, GateBlock.identity(block.n), config, "twirl", tag=1)
        twirl = estimate_fidelity(twirl_data)
        pure = interleaved_pure_fidelity(dressed, twirl, block.n)
    else:
        twirl_data = None
        twirl = FidelityEstimate(1.0, 0.0, "twirl", metadata={"assumed_perfect": True})
        pure = interleaved_pure_fidelity(dressed, twirl, block.n)
    subsets: dict[tuple[int, ...], SubsetResult] = {}
    for subset in config.subsets:
        key = tuple(sorted(subset))
        sd = subset_fidelity(dressed_data, key, device)
        if twirl_data is not None:
            st = subset_fidelity(twirl_data, key, device)
        else:
            st = FidelityEstimate(1.0, 0.0, "twirl", metadata={"assumed_perfect": True})
        qubits = tuple(sorted({q for g in key for q in device.gates[g].pair}))
        sp = interleaved_pure_fidelity(sd, st, len(qubits))
        subsets[key] = SubsetResult(key, qubits, sd, st, sp)
    meta = {
        "flag_policy": "sign-ambiguous quality parameters are excluded from the mean",
        "gate_order_convention": "tableau identity, i.e. modulo global phase",
        "backend": dressed.metadata.get("backend"),
        "seed": config.seed,
    }
    report = CabReport(
        block_name=block.name,
        n=block.n,
        config=config,
        dressed=dressed,
        twirl=twirl,
        pure=pure,
        subsets=subsets,
        metadata=meta,
    )
    if keep_run_data:
        report.metadata["dressed_data"] = dressed_data
        report.metadata["twirl_data"] = twirl_data
    return report


# ---------------------------------------------------------------------------
# cycle-benchmarking baseline
# ---------------------------------------------------------------------------


def _prep_layer_for_character(n: int, char_x: np.ndarray, char_z: np.ndarray):
    """Local Cliffords mapping each qubit's Z to the character's letter."""
    from .paulis import LocalCliffordLayer, single_qubit_cliffords

    table = single_qubit_cliffords()
    elements = np.empty(n, dtype=np.uint8)
    for q in range(n):
        code = int(char_x[q]) + 2 * int(char_z[q])
        if code == 0:
            elements[q] = table.identity_index
        else:
            elements[q] = table.find_z_preparation(int(char_x[q]), int(char_z[q]))
    return LocalCliffordLayer(n, elements)


def build_cb_sequence(
    block: GateBlock,
    character,
    cycles: int,
    order: int,
    rng: np.random.Generator,
) -> CircuitSequence:
    """One cycle-benchmarking sequence: basis prep, cycles of (P, U), closure."""
    n = block.n
    if cycles % order != 0:
        raise ValueError("cycle count must be a multiple of the gate order")
    prep = _prep_layer_for_character(n, character.x, character.z)
    inv_powers = [None] * order  # tableaus of U^-k
    from .tableau import CliffordTableau

    acc = CliffordTableau.identity(n)
    uinv = block.tableau.inverse()
    for k in range(order):
        inv_powers[k] = acc
        acc = uinv.compose(acc)
    layers: list = [CliffordLayer(prep)]
    from .paulis import PauliString

    net = PauliString.identity(n)
    for j in range(cycles):
        p = sample_random_pauli(n, rng)
        layers.append(PauliLayer(p))
        layers.extend(block.layers)
        net = inv_powers[j % order].conjugate(p) * net
    layers.append(PauliLayer(net.inverse(), closing=True))
    layers.append(CliffordLayer(prep.inverse()))
    return CircuitSequence(n, tuple(layers))


@dataclass
class CbRunData:
    characters: np.ndarray  # (n_chars,) observable masks of the sampled Paulis
    cycles: tuple[int, ...]
    surv: np.ndarray  # (M, n_chars, group_size)


def run_cb_experiment(
    device: DeviceModel,
    block: GateBlock,
    config: CabConfig,
    cycles: tuple[int, ...] = (10, 20),
    n_chars: int = 5,
    order_cap: int = 64,
) -> FidelityEstimate:
    """Cycle-benchmarking estimate of the dressed fidelity of the block.

    The k_r sequences are split into n_chars groups, each tied to one
    uniformly sampled Pauli character; per character the decay of its
    expectation over the number of gate applications is fitted and the
    results are averaged.  This variant samples characters uniformly from
    the full Pauli group and closes every sequence with a compiled Pauli.
    """
    n = block.n
    order = gate_order(block.tableau, cap=order_cap)
    if order is None:
        raise UnsupportedGateError(f"gate order exceeds {order_cap}")
    for c in cycles:
        if c % order != 0:
            raise UnsupportedGateError("cycle counts must be multiples of the gate order")
    if config.k_r % n_chars != 0:
        raise ValueError("k_r must be divisible by the number of characters")
    group = config.k_r // n_chars
    backend = _resolve_backend(config.backend, n)

    rng_char = np.random.default_rng([config.seed, 7, 2])
    characters = [sample_random_pauli(n, rng_char) for _ in range(n_chars)]
    char_masks = np.array(
        [int(sum(((int(p.x[q]) | int(p.z[q])) << (n - 1 - q)) for q in range(n))) for p in characters],
        dtype=np.int64,
    )

    surv = np.empty((len(cycles), n_chars, group))
    for d, c in enumerate(cycles):
        for ci, char in enumerate(characters):
            for k in range(group):
                rng_seq = np.random.default_rng([config.seed, 29, 2, d, ci, k])
                seq = build_cb_sequence(block, char, c, order, rng_seq)
                rng_shot = np.random.default_rng([config.seed, 31, 2, d, ci, k])
                if backend == "dm":
                    probs = dm_run(seq, device)
                    sc = ShotCounts.from_probabilities(probs, n, config.k_s, rng_shot)
                else:
                    sc = stab_run_counts(seq, device, config.k_s, rng_shot)
                surv[d, ci, k] = sc.survival(int(char_masks[ci]))

    exponents = np.asarray(cycles, dtype=float)
    fbar = surv.mean(axis=2)
    ses = surv.std(axis=2, ddof=1) / np.sqrt(group) if group > 1 else None
    lam, lam_se, flagged = _fit_lambda_arrays(exponents, fbar, ses)
    identity = char_masks == 0
    lam[identity] = 1.0
    flagged[identity] = False
    ok = ~flagged
    value = float(np.mean(lam[ok])) if np.any(ok) else float("nan")

    # jackknife over sequences within groups
    jack = []
    for k in range(group):
        fk = (surv.sum(axis=2) - surv[:, :, k]) / (group - 1) if group > 1 else fbar
        lk, _, flk = _fit_lambda_arrays(exponents, fk, None)
        lk[identity] = 1.0
        flk[identity] = False
        okk = ~flk
        jack.append(float(np.mean(lk[okk])) if np.any(okk) else np.nan)
    jack = np.asarray(jack)
    good = np.isfinite(jack)
    if good.sum() >= 2:
        jm = jack[good].mean()
        se = float(np.sqrt((good.sum() - 1) / good.sum() * np.sum((jack[good] - jm) ** 2)))
    else:
        se = float("nan")
    qps = [
        QualityParameter(int(m_), float(l_), float(s_) if ses is not None and np.isfinite(s_) else 0.0, bool(f_))
        for m_, l_, s_, f_ in zip(char_masks, lam, lam_se if lam_se is not None else np.zeros(n_chars), flagged)
    ]
    return FidelityEstimate(
        value=value,
        se=se,
        kind="dressed",
        quality_params=qps,
        n_flagged=int(flagged.sum()),
        metadata={
            "protocol": "cycle-benchmarking variant (uniform characters, compiled Pauli closure)",
            "cycles": list(cycles),
            "gate_order": order,
            "n_characters": n_chars,
            "backend": backend,
        },
    )
