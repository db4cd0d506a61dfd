"""Randomized property batteries behind ``qrecover check``."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from qrecover import classical, conjectures, info
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState, make_rng, random_density_matrix

SUITES = ("info", "classical", "functoriality", "fvdg", "pinsker", "chain_identity")


@dataclass
class PropertyResult:
    name: str
    passed: int = 0
    failed: int = 0
    worst: float = -math.inf    # largest violation margin seen (<= 0 when everything holds)
    failing_seeds: list[int] = field(default_factory=list)

    def record(self, ok: bool, margin: float, seed: int) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failing_seeds) < 10:
                self.failing_seeds.append(seed)
        if not math.isnan(margin):
            self.worst = max(self.worst, margin)


@dataclass
class SuiteResult:
    suite: str
    properties: list[PropertyResult]

    @property
    def ok(self) -> bool:
        return all(p.failed == 0 for p in self.properties)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "ok": self.ok, "properties": [asdict(p) for p in self.properties]}


def _random_aeb(rng, dims=(2, 2, 2)) -> MultipartiteState:
    d = int(np.prod(dims))
    return MultipartiteState(random_density_matrix(rng, d), SubsystemLayout(("A", "E", "B"), dims), check=False)


def _pair(rng):
    d = int(rng.integers(2, 5))
    return random_density_matrix(rng, d), random_density_matrix(rng, d)


def suite_info(trials: int, seed: int) -> list[PropertyResult]:
    ssa, cmi_rel = PropertyResult("strong_subadditivity"), PropertyResult("cmi_as_relative_entropy_difference")
    for i in range(trials):
        rng = make_rng(seed + i)
        dims = tuple(int(x) for x in rng.integers(1, 4, size=3))
        if np.prod(dims) < 2:
            dims = (2, 2, 2)
        rho = _random_aeb(rng, dims)
        cmi = info.conditional_mutual_information(rho, "A", "B", "E")
        ssa.record(cmi >= -1e-8, -cmi, seed + i)
        sig_full = rho.marginal(("A",)).tensor(rho.marginal(("E", "B")))
        sig_ae = rho.marginal(("A",)).tensor(rho.marginal(("E",)))
        diff = info.relative_entropy(rho, sig_full) - info.relative_entropy(rho.marginal(("A", "E")), sig_ae)
        cmi_rel.record(abs(diff - cmi) <= 1e-8, abs(diff - cmi) - 1e-8, seed + i)
    return [ssa, cmi_rel]


def suite_pinsker(trials: int, seed: int) -> list[PropertyResult]:
    q, c = PropertyResult("pinsker_quantum"), PropertyResult("pinsker_classical")
    for i in range(trials):
        rng = make_rng(seed + i)
        a, b = _pair(rng)
        l1 = info.trace_distance(a, b)
        bound = math.sqrt(2 * math.log(2) * max(info.relative_entropy(a, b), 0.0))
        q.record(l1 <= bound + 1e-9, l1 - bound, seed + i)
        p, r = classical.random_distribution(rng, 6), classical.random_distribution(rng, 6)
        l1c, bc, ok = classical.pinsker_holds(p, r)
        c.record(ok, l1c - bc, seed + i)
    return [q, c]


def suite_fvdg(trials: int, seed: int) -> list[PropertyResult]:
    res = PropertyResult("fuchs_van_de_graaf")
    for i in range(trials):
        rng = make_rng(seed + i)
        a, b = _pair(rng)
        lhs, mid, rhs, ok = info.check_fuchs_van_de_graaf(a, b)
        res.record(ok, max(lhs - mid, mid - rhs), seed + i)
    return [res]


def suite_chain_identity(trials: int, seed: int) -> list[PropertyResult]:
    res = PropertyResult("multi_information_chain")
    layout = SubsystemLayout(("A1", "A2", "A3", "E"), (2, 2, 2, 2))
    for i in range(trials):
        rng = make_rng(seed + i)
        rho = MultipartiteState(random_density_matrix(rng, 16), layout, check=False)
        parts = ["A1", "A2", "A3"]
        direct = info.conditional_multi_information(rho, parts, "E")
        chain = info.multi_information_chain(rho, parts, "E")
        res.record(abs(direct - chain) <= 1e-8, abs(direct - chain) - 1e-8, seed + i)
    return [res]


def suite_classical(trials: int, seed: int) -> list[PropertyResult]:
    rnd = PropertyResult("data_processing_gap_random")
    det = PropertyResult("data_processing_gap_deterministic")
    proj = PropertyResult("markov_projection_distance")
    for i in range(trials):
        rng = make_rng(seed + i)
        nx, nu = (int(x) for x in rng.integers(1, 9, size=2))
        p = classical.random_distribution(rng, nx, sparsity=0.2)
        q = classical.random_distribution(rng, nx)
        t = classical.random_stochastic_map(rng, nu, nx)
        gap = classical.check_theorem5(p, q, t).gap
        rnd.record(gap >= -1e-10, -gap, seed + i)
        pj = classical.random_distribution(rng, 27)
        qj = classical.markov_projection(pj, (3, 3, 3))
        cmi = classical.classical_conditional_mutual_information(pj, (3, 3, 3))
        err = abs(classical.kl_divergence(pj, qj) - cmi)
        l1 = float(np.sum(np.abs(pj.probs - qj.probs)))
        pins = l1 - math.sqrt(2 * math.log(2) * max(cmi, 0.0))
        proj.record(err <= 1e-10 and pins <= 1e-9, max(err - 1e-10, pins - 1e-9), seed + i)
    rng = make_rng(seed)
    for nx in range(1, 4):
        for nu in range(1, 4):
            for t in classical.deterministic_maps(nx, nu):
                for _ in range(max(1, min(trials // 100, 20))):
                    p, q = classical.random_distribution(rng, nx), classical.random_distribution(rng, nx)
                    gap = classical.check_theorem5(p, q, t).gap
                    det.record(abs(gap) <= 1e-10, abs(gap) - 1e-10, seed)
    return [rnd, det, proj]


def suite_functoriality(trials: int, seed: int) -> list[PropertyResult]:
    out = []
    n = max(1, min(trials, 50))
    for axiom, cl in (("normalization", False), ("tensor", False), ("composition", True), ("composition", False)):
        rep = conjectures.check_functoriality(axiom, instances=n, seed=seed, classical=cl)
        name = f"{axiom}{'_classical' if cl else ''}" + ("" if rep.asserted else "_measured")
        pr = PropertyResult(name)
        tol = 1e-10 if axiom == "composition" else 1e-8
        for dev in rep.per_instance:
            pr.record(dev <= tol or not rep.asserted, dev - tol, seed)
        out.append(pr)
    return out


_RUNNERS: dict[str, Callable[[int, int], list[PropertyResult]]] = {
    "info": suite_info,
    "classical": suite_classical,
    "functoriality": suite_functoriality,
    "fvdg": suite_fvdg,
    "pinsker": suite_pinsker,
    "chain_identity": suite_chain_identity,
}


def run_suite(name: str, trials: int = 500, seed: int = 0) -> SuiteResult:
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SuiteResult(name, _RUNNERS[name](trials, seed))
