"""Gap evaluation and counterexample search for recovery inequalities.

Two instance shapes are supported. A CMI instance is a state rho^{AEB}; a
channel instance is a triple (rho, sigma, T). A CMI instance converts to a
channel instance with T = tr_B and sigma = rho^A (x) rho^{EB}, for which the
relative entropy difference equals I(A:B|E).

Every inequality reads lhs >= rhs and gap = lhs - rhs.
"""
from __future__ import annotations

import enum
import math
import re
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from qrecover import channels, info, linalg, serialization
from qrecover.channels import KrausMap, QuantumChannel
from qrecover.errors import RankDeficientWarning
from qrecover.linalg import SubsystemLayout
from qrecover.states import (
    MultipartiteState,
    StateEnsembleSpec,
    dumps_state,
    ginibre,
    make_rng,
    random_density_matrix,
)

VIOLATION_TOL = 1e-7
AEB = ("A", "E", "B")


class InequalityId(str, enum.Enum):
    FR_fidelity = "FR_fidelity"
    Kim = "Kim"
    Zhang = "Zhang"
    BSW = "BSW"
    SBW = "SBW"
    KeWinter = "KeWinter"
    BigOne = "BigOne"
    Theorem5_quantum = "Theorem5_quantum"


# id -> (instance form, rhs kind); ratio-only ids never flag violations
_RECIPES = {
    InequalityId.FR_fidelity: ("cmi", "neg_log_fid"),
    InequalityId.Kim: ("cmi", "trace_sq"),
    InequalityId.Zhang: ("channel", "trace_sq"),
    InequalityId.BSW: ("cmi", "neg_log_fid"),
    InequalityId.SBW: ("channel", "neg_log_fid"),
    InequalityId.KeWinter: ("cmi", "rel_ent"),
    InequalityId.BigOne: ("channel", "rel_ent"),
    InequalityId.Theorem5_quantum: ("channel", "rel_ent"),
}
RATIO_ONLY = frozenset({InequalityId.Kim, InequalityId.Zhang})


@dataclass(frozen=True)
class MapVariant:
    kind: str = "petz_t0"
    t: float = 0.0
    grid: tuple = channels.DEFAULT_GRID

    @classmethod
    def parse(cls, text: str) -> "MapVariant":
        text = text.strip()
        if text == "petz_t0":
            return cls()
        if text == "best_scan":
            return cls("best_scan")
        m = re.fullmatch(r"swivelled\(([-+0-9.eE]+)\)", text)
        if m:
            return cls("swivelled", float(m.group(1)))
        raise ValueError(f"unknown map variant {text!r}")

    def __str__(self) -> str:
        if self.kind == "swivelled":
            return f"swivelled({self.t:g})"
        return self.kind


@dataclass
class InequalityReport:
    inequality: str
    map_variant: str
    lhs: float
    rhs: float
    gap: float
    instance_seed: int
    instance_descriptor: str
    violation: bool
    ratio: float = math.nan
    t_used: float = 0.0
    refinement_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InequalityReport":
        return cls(**d)


@dataclass(frozen=True)
class SearchConfig:
    trials: int = 1000
    refine_steps: int = 200
    perturbation_scale: float = 0.05
    dims: tuple = (2, 2, 2)
    seed: int = 0
    family: str = "cmi"             # cmi | channel | classical
    ensemble: str = "hilbert_schmidt_mixed"
    tolerance: float = VIOLATION_TOL

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if self.family not in ("cmi", "channel", "classical"):
            raise ValueError(f"unknown instance family {self.family!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


# ------------------------------------------------------------------ instances


@dataclass(frozen=True)
class ChannelInstance:
    rho: np.ndarray
    sigma: np.ndarray
    channel: KrausMap
    origin: MultipartiteState | None = field(default=None, compare=False)


def to_channel_form(rho_aeb: MultipartiteState) -> ChannelInstance:
    """(rho^{AEB}, rho^A x rho^{EB}, tr_B)."""
    rho = rho_aeb.reorder(AEB)
    sigma = rho.marginal(("A",)).tensor(rho.marginal(("E", "B")))
    t = channels.partial_trace_channel(rho.layout, ("A", "E"))
    return ChannelInstance(rho.matrix, sigma.matrix, t, rho)


def _unpack(params: dict, family: str, dims: Sequence[int]):
    """Instance from raw (unnormalized) parameters, so that hill-climbing can perturb them freely."""
    if family == "cmi":
        g = params["g"]
        m = g @ g.conj().T
        return MultipartiteState(m / np.real(np.trace(m)), SubsystemLayout(AEB, tuple(dims)), check=False)
    if family == "classical":
        p = np.abs(params["p"]) ** 2
        return MultipartiteState(np.diag(p / p.sum()).astype(np.complex128),
                                 SubsystemLayout(AEB, tuple(dims)), check=False)
    d_in, d_out = dims[0], dims[1]
    gr, gs, k = params["gr"], params["gs"], params["k"]
    rho, sigma = gr @ gr.conj().T, gs @ gs.conj().T
    s = np.einsum("kab,kac->bc", k.conj(), k)
    k = k @ linalg.psd_inv_sqrt(s)
    ch = QuantumChannel(k, SubsystemLayout(("X",), (d_in,)), SubsystemLayout(("X",), (d_out,)), "random")
    return ChannelInstance(rho / np.real(np.trace(rho)), sigma / np.real(np.trace(sigma)), ch)


def _sample_params(rng: np.random.Generator, family: str, dims: Sequence[int], ensemble: str) -> dict:
    if family == "cmi":
        d = int(np.prod(dims))
        if ensemble == "haar_pure":
            return {"g": ginibre(rng, d, 1)}
        if ensemble == "hilbert_schmidt_mixed":
            return {"g": ginibre(rng, d, d)}
        m = random_density_matrix(rng, d, ensemble)
        return {"g": linalg.psd_sqrt(m)}
    if family == "classical":
        return {"p": rng.standard_normal(int(np.prod(dims)))}
    d_in, d_out = dims[0], dims[1]
    rank = dims[2] if len(dims) > 2 else d_in * d_out
    return {"gr": ginibre(rng, d_in, d_in), "gs": ginibre(rng, d_in, d_in),
            "k": ginibre(rng, rank * d_out, d_in).reshape(rank, d_out, d_in)}


def _perturb(rng: np.random.Generator, params: dict, scale: float) -> dict:
    out = {}
    for key, v in params.items():
        if np.iscomplexobj(v):
            noise = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
        else:
            noise = rng.standard_normal(v.shape)
        out[key] = v + scale * np.linalg.norm(v) / math.sqrt(v.size) * noise
    return out


def sample_instance(seed: int, family: str = "cmi", dims: Sequence[int] = (2, 2, 2),
                    ensemble: str = "hilbert_schmidt_mixed"):
    """The instance regenerated from its seed alone."""
    return _unpack(_sample_params(make_rng(seed), family, dims, ensemble), family, dims)


def descriptor(family: str, dims: Sequence[int], ensemble: str) -> str:
    ens = "diagonal" if family == "classical" else ensemble
    return f"{family}:{'x'.join(str(d) for d in dims)}:{ens}"


# ------------------------------------------------------------------ evaluation


def _rhs_value(kind: str, target: np.ndarray, recovered: np.ndarray, sqrt_target=None) -> float:
    if kind == "neg_log_fid":
        f = info.fidelity_with_sqrt(sqrt_target, recovered) if sqrt_target is not None \
            else info.fidelity(target, recovered)
        f = min(f, 1.0)
        return math.inf if f <= 0 else -2 * math.log2(f)
    if kind == "trace_sq":
        return info.trace_distance(target, recovered) ** 2
    return info.relative_entropy(target, recovered)


def _scan(fun: Callable[[float], float], variant: MapVariant) -> tuple[float, float]:
    if variant.kind == "petz_t0":
        return 0.0, fun(0.0)
    if variant.kind == "swivelled":
        return variant.t, fun(variant.t)
    return channels.scan_grid(fun, variant.grid, refine=True)


def _channel_lhs(inst: ChannelInstance) -> float:
    d1 = info.relative_entropy(inst.rho, inst.sigma)
    d2 = info.relative_entropy(inst.channel(inst.rho), inst.channel(inst.sigma))
    return d1 - d2


def evaluate(inequality: InequalityId | str, instance, map_variant: MapVariant | str = "petz_t0",
             instance_seed: int = 0, instance_descriptor: str = "",
             tolerance: float = VIOLATION_TOL) -> InequalityReport:
    """Compute lhs, rhs and gap for one instance.

    ``instance`` is a MultipartiteState on (A, E, B) or a ChannelInstance.
    Channel-form inequalities accept a CMI state and convert it.
    """
    ineq = InequalityId(inequality)
    variant = MapVariant.parse(map_variant) if isinstance(map_variant, str) else map_variant
    if ineq is InequalityId.Theorem5_quantum and variant.kind != "petz_t0":
        raise ValueError("Theorem5_quantum is defined with the plain Petz map")
    form, rhs_kind = _RECIPES[ineq]

    if isinstance(instance, MultipartiteState):
        rho = instance.reorder(AEB)
        prob = channels.CMIRecoveryProblem(rho, ("A",), ("E",), ("B",))
        target = prob.target.matrix
        sq = linalg.psd_sqrt(target) if rhs_kind == "neg_log_fid" else None
        t_used, rhs = _scan(lambda t: _rhs_value(rhs_kind, target, prob.recovered(t), sq), variant)
        if form == "cmi":
            lhs = prob.cmi
        else:
            lhs = _channel_lhs(to_channel_form(rho))
    elif isinstance(instance, ChannelInstance):
        if form == "cmi":
            if instance.origin is None:
                raise ValueError(f"{ineq.value} needs a state on (A, E, B)")
            return evaluate(ineq, instance.origin, variant, instance_seed, instance_descriptor, tolerance)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            in_layout = instance.channel.in_layout
            sigma = MultipartiteState(instance.sigma, in_layout, check=False)
            parts = channels._petz_parts(instance.channel, instance.sigma)
            t_rho = instance.channel(instance.rho)
            sq = linalg.psd_sqrt(instance.rho) if rhs_kind == "neg_log_fid" else None

            def rhs_at(t):
                rec = channels.swivelled_petz_map(instance.channel, sigma, t, _parts=parts)
                return _rhs_value(rhs_kind, instance.rho, rec(t_rho), sq)

            t_used, rhs = _scan(rhs_at, variant)
        lhs = _channel_lhs(instance)
    else:
        raise TypeError(f"unsupported instance type {type(instance).__name__}")

    gap = lhs - rhs
    ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else math.nan)
    violation = (ineq not in RATIO_ONLY) and bool(gap < -tolerance)
    return InequalityReport(ineq.value, str(variant), float(lhs), float(rhs), float(gap),
                            int(instance_seed), instance_descriptor, violation, float(ratio),
                            float(t_used))


# ------------------------------------------------------------------ search


@dataclass
class SearchResult:
    best: InequalityReport
    min_gap: float
    violations: int
    worst: list[tuple[float, int]]           # (objective, seed) of the 10 worst trials
    status: str                              # violation_found | inconclusive
    reverified: bool
    witness: object = field(default=None, repr=False)
    archived: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "min_gap": self.min_gap,
            "violations": self.violations,
            "worst_seeds": [s for _, s in self.worst],
            "worst_objectives": [g for g, _ in self.worst],
            "status": self.status,
            "reverified": self.reverified,
            "archived": self.archived,
        }


def _objective(rep: InequalityReport) -> float:
    """Quantity minimized by the search: the ratio for Kim/Zhang, the gap otherwise."""
    return rep.ratio if InequalityId(rep.inequality) in RATIO_ONLY else rep.gap


def _safe_evaluate(ineq, inst, variant, seed, desc, tol) -> InequalityReport | None:
    try:
        with np.errstate(all="ignore"):
            return evaluate(ineq, inst, variant, seed, desc, tol)
    except (np.linalg.LinAlgError, ValueError):
        return None


def search_counterexample(inequality: InequalityId | str, map_variant: MapVariant | str,
                          config: SearchConfig, archive_dir: str | Path | None = None,
                          progress: Callable[[int], None] | None = None,
                          map_fn: Callable | None = None) -> SearchResult:
    """Seeded random sampling, then hill-climbing from the best trial.

    Trial i uses seed ``config.seed + i``. Refinement perturbs the raw
    parameters with Gaussian noise and keeps a move when the objective
    decreases. The best candidate is re-evaluated under tightened
    eigensolver settings; only a violation that survives is archived.
    """
    ineq = InequalityId(inequality)
    variant = MapVariant.parse(map_variant) if isinstance(map_variant, str) else map_variant
    desc = descriptor(config.family, config.dims, config.ensemble)
    reports: list[tuple[float, int, InequalityReport]] = []
    best = None
    violations = 0

    def trial(i: int):
        seed = config.seed + i
        params = _sample_params(make_rng(seed), config.family, config.dims, config.ensemble)
        rep = _safe_evaluate(ineq, _unpack(params, config.family, config.dims), variant, seed, desc,
                             config.tolerance)
        return seed, params, rep

    # results are consumed in trial order whatever the mapper does internally
    for i, (seed, params, rep) in enumerate((map_fn or map)(trial, range(config.trials))):
        if progress is not None:
            progress(i)
        if rep is None:
            continue
        violations += rep.violation
        obj = _objective(rep)
        reports.append((obj, seed, rep))
        if best is None or (obj, seed) < (best[0], best[1]):
            best = (obj, seed, rep, params)
    if best is None:
        raise ValueError("no trial could be evaluated")
    reports.sort(key=lambda x: (x[0], x[1]))
    worst = [(float(o), s) for o, s, _ in reports[:10]]

    obj, seed, rep, params = best
    rng = make_rng(config.seed + config.trials)
    scale = config.perturbation_scale
    accepted = 0
    for _ in range(config.refine_steps):
        cand = _perturb(rng, params, scale)
        r = _safe_evaluate(ineq, _unpack(cand, config.family, config.dims), variant, seed, desc,
                           config.tolerance)
        if r is not None and _objective(r) < obj:
            obj, rep, params = _objective(r), r, cand
            accepted += 1
        else:
            scale *= 0.97
            scale = max(scale, 1e-4)
    rep.refinement_steps = accepted
    witness = _unpack(params, config.family, config.dims)

    with linalg.tightened():
        tight = _safe_evaluate(ineq, witness, variant, seed, desc, config.tolerance)
    reverified = bool(tight is not None and tight.violation and rep.violation)
    status = "violation_found" if reverified else "inconclusive"
    result = SearchResult(rep, float(min(rep.gap, min(r.gap for _, _, r in reports))),
                          violations, worst, status, reverified, witness)
    if reverified and archive_dir is not None:
        result.archived = archive_witness(archive_dir, rep, witness)
    return result


def archive_witness(directory: str | Path, rep: InequalityReport, witness) -> list[str]:
    """Write <id>_<seed>.state.json and <id>_<seed>.report.json; never overwrites."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = f"{rep.inequality}_{rep.instance_seed}"
    state_path, report_path = d / f"{stem}.state.json", d / f"{stem}.report.json"
    n = 1
    while state_path.exists() or report_path.exists():
        state_path, report_path = d / f"{stem}_{n}.state.json", d / f"{stem}_{n}.report.json"
        n += 1
    doc = {"schema_version": 1, "kind": "inequality_report", **rep.to_dict()}
    if isinstance(witness, MultipartiteState):
        state_path.write_text(dumps_state(witness))
    else:
        state_path.write_text(dumps_state(MultipartiteState(witness.rho, witness.channel.in_layout)))
        doc["sigma"] = serialization.complex_entries(witness.sigma)
        doc["kraus"] = [serialization.complex_entries(k) for k in witness.channel.kraus]
    report_path.write_text(serialization.dumps(doc))
    return [str(state_path), str(report_path)]


# ------------------------------------------------------------------ functoriality


@dataclass
class FunctorialityReport:
    axiom: str
    deviation: float
    per_instance: list[float]
    asserted: bool
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _full_rank_state(rng, d: int) -> np.ndarray:
    return random_density_matrix(rng, d, "hilbert_schmidt_mixed")


def _probe_deviation(lhs_map, rhs_map, d_in: int, rng, probes: int) -> float:
    worst = 0.0
    for _ in range(probes):
        x = random_density_matrix(rng, d_in, "hilbert_schmidt_mixed")
        worst = max(worst, info.trace_distance(lhs_map(x), rhs_map(x)))
    return worst


def _petz(channel: KrausMap, sigma: np.ndarray) -> QuantumChannel:
    return channels.petz_map(channel, MultipartiteState(sigma, channel.in_layout, check=False)).channel


def _layout(d: int, label: str = "X") -> SubsystemLayout:
    return SubsystemLayout((label,), (d,))


def check_functoriality(axiom: str, instances: int = 10, seed: int = 0, probes: int = 8,
                        dims: Sequence[int] = (2, 2), classical: bool = False) -> FunctorialityReport:
    """Deviation between the two sides of an axiom for the Petz construction.

    normalization: R(id, tau) vs id. tensor: R(T1 x T2, s1 x s2) vs R1 x R2.
    composition: R(T2 o T1, s) vs R(T1, s) o R(T2, T1 s). With
    ``classical=True`` the instances are diagonal states and stochastic
    channels. Normalization and tensor are asserted at 1e-8; composition is
    asserted only for classical instances (1e-10) and otherwise just measured.
    """
    rng = make_rng(seed)
    d1, d2 = dims[0], dims[1] if len(dims) > 1 else dims[0]
    devs = []
    for _ in range(instances):
        if axiom == "normalization":
            tau = _full_rank_state(rng, d1)
            ident = channels.identity_channel(_layout(d1))
            r = _petz(ident, tau)
            devs.append(_probe_deviation(r, lambda x: x, d1, rng, probes))
        elif axiom == "tensor":
            s1, s2 = _full_rank_state(rng, d1), _full_rank_state(rng, d2)
            t1 = channels.random_channel(rng, _layout(d1, "X"), _layout(d2, "X"), 2)
            t2 = channels.random_channel(rng, _layout(d2, "Y"), _layout(d1, "Y"), 2)
            joint = channels.tensor_channels(t1, t2)
            r_joint = _petz(joint, np.kron(s1, s2))
            r_prod = channels.tensor_channels(_petz(t1, s1), _petz(t2, s2))
            devs.append(_probe_deviation(r_joint, r_prod, d2 * d1, rng, probes))
        elif axiom == "composition":
            if classical:
                p = rng.dirichlet(np.ones(d1))
                s = np.diag(p).astype(np.complex128)
                t1 = channels.classical_channel(rng.dirichlet(np.ones(d2), size=d1).T)
                t2 = channels.classical_channel(rng.dirichlet(np.ones(d1), size=d2).T)
            else:
                s = _full_rank_state(rng, d1)
                t1 = channels.random_channel(rng, _layout(d1), _layout(d2), 2)
                t2 = channels.random_channel(rng, _layout(d2), _layout(d1), 2)
            r_whole = _petz(channels.compose(t2, t1), s)
            r1 = _petz(t1, s)
            r2 = _petz(t2, t1(s))
            r_chain = channels.compose(r1, r2)
            devs.append(_probe_deviation(r_whole, r_chain, t2.out_layout.dim, rng, probes))
        else:
            raise ValueError(f"unknown axiom {axiom!r}")
    asserted = axiom != "composition" or classical
    tol = 1e-10 if axiom == "composition" else 1e-8
    worst = max(devs) if devs else 0.0
    return FunctorialityReport(axiom, float(worst), [float(x) for x in devs], asserted,
                               bool(worst <= tol) if asserted else True)
