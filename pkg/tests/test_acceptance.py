"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""
import json
import math
import time
import warnings

import numpy as np
import pytest

from qrecover import cli, info, linalg, suites
from qrecover.channels import CMIRecoveryProblem, RankDeficientWarning, best_swivel_scan
from qrecover.classical import (
    check_theorem5,
    classical_conditional_mutual_information,
    deterministic_maps,
    kl_divergence,
    markov_projection,
    random_distribution,
    random_stochastic_map,
)
from qrecover.extend import build_k_extension
from qrecover.linalg import SubsystemLayout
from qrecover.measures import entanglement_of_formation, separable_from_formation, squashed_entanglement_upper_bound
from qrecover.states import (
    MultipartiteState,
    antisymmetric_state,
    make_rng,
    named_state,
    random_density_matrix,
    random_markov_chain,
)

from conftest import random_aeb, separable_state
from test_extend import small_markov

AB = SubsystemLayout.of(A=2, B=2)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        yield


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, elapsed, limit, detail=""):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} ({elapsed:.1f}s / {limit}s) {detail}")
        assert ok, detail
    return emit


def test_criterion_01_classical_gap(verdict):
    t0 = time.perf_counter()
    worst = math.inf
    for seed in range(10_000):
        rng = make_rng(seed)
        nx, nu = (int(x) for x in rng.integers(1, 9, size=2))
        p, q = random_distribution(rng, nx, 0.2), random_distribution(rng, nx)
        worst = min(worst, check_theorem5(p, q, random_stochastic_map(rng, nu, nx)).gap)
    rng = make_rng(1)
    worst_det = 0.0
    for nx in range(1, 4):
        for nu in range(1, 4):
            for t in deterministic_maps(nx, nu):
                for _ in range(20):
                    p, q = random_distribution(rng, nx, 0.3), random_distribution(rng, nx)
                    worst_det = max(worst_det, abs(check_theorem5(p, q, t).gap))
    ok = worst >= -1e-10 and worst_det <= 1e-10
    verdict(1, "classical recovery gap", ok, time.perf_counter() - t0, 30,
            f"min gap {worst:.2e}, max |gap| deterministic {worst_det:.2e}")


def test_criterion_02_markov_projection(verdict):
    t0 = time.perf_counter()
    err = slack = 0.0
    for seed in range(1000):
        p = random_distribution(make_rng(seed), 27, 0.1)
        q = markov_projection(p, (3, 3, 3))
        cmi = classical_conditional_mutual_information(p, (3, 3, 3))
        err = max(err, abs(kl_divergence(p, q) - cmi))
        l1 = float(np.sum(np.abs(p.probs - q.probs)))
        slack = max(slack, l1 - math.sqrt(2 * math.log(2) * max(cmi, 0.0)))
    verdict(2, "Markov projection", err <= 1e-10 and slack <= 1e-9, time.perf_counter() - t0, 10,
            f"|D - I| {err:.2e}, l1 excess {slack:.2e}")


def test_criterion_03_petz_exact_on_markov(verdict):
    t0 = time.perf_counter()
    cmi_max = dist_max = 0.0
    for seed in range(100):
        rho = random_markov_chain(make_rng(seed), max_dim=48)
        assert rho.layout.dim <= 48
        prob = CMIRecoveryProblem(rho, "A", "E", "B")
        cmi_max = max(cmi_max, info.conditional_mutual_information(rho, "A", "B", "E"))
        dist_max = max(dist_max, info.trace_distance(prob.recovered(0.0), prob.target.matrix))
    verdict(3, "Petz exactness on Markov chains", cmi_max <= 1e-8 and dist_max <= 1e-6,
            time.perf_counter() - t0, 120, f"max CMI {cmi_max:.2e}, max distance {dist_max:.2e}")


def test_criterion_04_swivel_fidelity_bound(verdict, tmp_path):
    t0 = time.perf_counter()
    exceptions = []
    for seed in range(1000):
        rho = random_aeb(seed, ensemble="haar_pure")
        scan = best_swivel_scan(rho, "A", "E", "B")
        if not scan.bound_holds:
            with linalg.tightened():
                again = best_swivel_scan(rho, "A", "E", "B")
            record = {"seed": seed, "value": scan.value_best, "cmi": scan.cmi,
                      "reverified_value": again.value_best, "reverified_holds": again.bound_holds}
            (tmp_path / f"fr_exception_{seed}.json").write_text(json.dumps(record))
            exceptions.append(record)
    frac = 1 - len(exceptions) / 1000
    verdict(4, "swivelled fidelity bound", frac >= 0.999, time.perf_counter() - t0, 600,
            f"holds on {frac:.2%}, exceptions {[e['seed'] for e in exceptions]}")


def _bookkeeping_ok(rep):
    bound = (rep.k - 1) / 2 * rep.t_measured + 1e-8
    return rep.symmetry_residual <= 1e-8 and max(rep.marginal_distances) <= bound


def test_criterion_05_extension_bookkeeping(verdict):
    t0 = time.perf_counter()
    runs = []
    markov = small_markov(1)
    runs.append(("markov k=4", build_k_extension(markov.marginal(["A", "B"]), 4, "supplied", rho_abe=markov,
                                                 check_bounds=False)[0]))
    runs.append(("bell k=2", build_k_extension(named_state("bell"), 2, check_bounds=False)[0]))
    alpha3 = antisymmetric_state(3, 3).rename({"B1": "B", "B2": "E"})
    runs.append(("alpha3 k=2", build_k_extension(alpha3.marginal(["A", "B"]), 2, "supplied", rho_abe=alpha3,
                                                 check_bounds=False)[0]))
    for seed in range(50):
        rho = random_aeb(seed)
        runs.append((f"random {seed}", build_k_extension(rho.marginal(["A", "B"]), 3, "supplied", rho_abe=rho,
                                                         check_bounds=False)[0]))
    bad = [name for name, rep in runs if not _bookkeeping_ok(rep)]
    verdict(5, "k-extension bookkeeping", not bad, time.perf_counter() - t0, 300,
            f"{len(runs)} runs, failing {bad}")


def alpha_oracle(d):
    """(1 - F)/(d(d-1)) with F the swap operator."""
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[i * d + j, j * d + i] = 1
    return (np.eye(d * d) - swap) / (d * (d - 1))


def test_criterion_06_antisymmetric_extendibility(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for d in (3, 4):
        om = antisymmetric_state(d, d)
        target = alpha_oracle(d)
        for x in om.labels:
            for y in om.labels:
                if x < y:
                    worst = max(worst, float(np.max(np.abs(om.marginal([x, y]).matrix - target))))
    ext = antisymmetric_state(3, 3).rename({"B1": "B", "B2": "E"})
    esq = squashed_entanglement_upper_bound(ext.marginal(["A", "B"]), env_dim=3, initial_extensions=[ext]).value
    verdict(6, "antisymmetric extendibility", worst <= 1e-10 and esq <= 0.80, time.perf_counter() - t0, 60,
            f"marginal error {worst:.2e}, esq_ub(alpha3) {esq:.4f}")


def test_criterion_07_quantum_counterexample(verdict, tmp_path, capsys):
    t0 = time.perf_counter()
    code = cli.main(["fuzz", "--inequality", "Theorem5_quantum", "--trials", "100000", "--dims", "2,2,2",
                     "--seed", "0", "--archive", str(tmp_path)])
    out, _ = capsys.readouterr()
    doc = json.loads(out)
    best = doc["reports"][0]
    found = doc["status"] == "violation_found" and best["gap"] <= -1e-4 and len(doc["archived"]) == 2
    flagged = doc["status"] == "inconclusive"
    verdict(7, "quantum counterexample search", code == 0 and (found or flagged), time.perf_counter() - t0, 1200,
            f"status {doc['status']}, best gap {best['gap']:.4e} (seed {best['instance_seed']}), "
            f"{doc['violations']} violating trials")


def test_criterion_08_measures(verdict):
    t0 = time.perf_counter()
    bell = entanglement_of_formation(named_state("bell")).value
    sep_worst = 0.0
    for seed in range(20):
        rho = separable_state(seed)
        ef = entanglement_of_formation(rho, seed=seed)
        es = squashed_entanglement_upper_bound(rho, seed=seed, formation=ef.witness)
        sep_worst = max(sep_worst, ef.value, es.value)
    order_excess = -math.inf
    witness_slack = -math.inf
    for seed in range(50):
        rng = make_rng(1000 + seed)
        rho = MultipartiteState(random_density_matrix(rng, 4), AB)
        ef = entanglement_of_formation(rho, seed=seed)
        es = squashed_entanglement_upper_bound(rho, seed=seed, formation=ef.witness)
        order_excess = max(order_excess, es.value - ef.value)
        _, dist, bound = separable_from_formation(rho, ef.witness)
        # sqrt(eps) turns round-off in eps near 0 into ~1e-8 absolute error
        witness_slack = max(witness_slack, dist - bound)
    ok = abs(bell - 1) <= 1e-3 and sep_worst <= 1e-3 and order_excess <= 5e-3 and witness_slack <= 1e-8
    verdict(8, "entanglement measures", ok, time.perf_counter() - t0, 600,
            f"E_F(bell) {bell:.6f}, separable max {sep_worst:.2e}, max(E_sq-E_F) {order_excess:.2e}, "
            f"witness excess {witness_slack:.2e}")


def test_criterion_09_entropy_core(verdict):
    t0 = time.perf_counter()
    failed = {}
    for name in ("info", "pinsker", "fvdg", "chain_identity"):
        res = suites.run_suite(name, trials=10_000, seed=0)
        for p in res.properties:
            assert p.passed + p.failed >= 10_000
            if p.failed:
                failed[p.name] = p.failing_seeds
    verdict(9, "entropy core", not failed, time.perf_counter() - t0, 300, f"failures {failed}")


def _strip(text):
    assert '"timestamp"' in text
    return [line for line in text.splitlines() if not line.lstrip().startswith('"timestamp"')]


def test_criterion_10_reproducibility(verdict, tmp_path, capsys):
    t0 = time.perf_counter()
    state = tmp_path / "iso.json"
    cli.main(["gen", "--ensemble", "hilbert_schmidt_mixed", "--dims", "2,2", "--seed", "3", "--out", str(state)])
    campaigns = [
        ["fuzz", "--inequality", "Theorem5_quantum", "--trials", "1000", "--seed", "5"],
        ["fuzz", "--inequality", "BigOne", "--family", "classical", "--trials", "500"],
        ["fuzz", "--inequality", "BSW", "--map-variant", "best_scan", "--trials", "50", "--refine-steps", "20"],
        ["extend", "--dims", "2,2,2", "--k", "3", "--trials", "5", "--seed", "7"],
        ["extend", "--dims", "2,2,2", "--k", "2", "--trials", "3", "--format", "csv"],
        ["check", "classical", "--trials", "200"],
        ["measures", "--state", str(state), "--measure", "esq_ub", "--restarts", "2"],
    ]
    differing = []
    capsys.readouterr()
    for argv in campaigns:
        outs = []
        for _ in range(2):
            cli.main(argv)
            outs.append(capsys.readouterr()[0])
        same = outs[0] == outs[1] if "csv" in argv else _strip(outs[0]) == _strip(outs[1])
        if not same:
            differing.append(" ".join(argv[:3]))
    verdict(10, "reproducibility", not differing, time.perf_counter() - t0, 600,
            f"{len(campaigns)} campaigns, differing {differing}")
