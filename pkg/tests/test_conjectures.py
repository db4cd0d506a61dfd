import json
import math
import warnings

import numpy as np
import pytest

from qrecover import info
from qrecover.channels import RankDeficientWarning
from qrecover.classical import diagonal_embedding, random_distribution
from qrecover.conjectures import (
    RATIO_ONLY,
    InequalityId,
    InequalityReport,
    MapVariant,
    SearchConfig,
    archive_witness,
    check_functoriality,
    evaluate,
    sample_instance,
    search_counterexample,
    to_channel_form,
)
from qrecover.linalg import SubsystemLayout
from qrecover.states import MultipartiteState, make_rng, random_markov_chain
from qrecover.suites import SUITES, run_suite

from conftest import random_aeb

ALL_IDS = list(InequalityId)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        yield


def classical_aeb(seed, dims=(2, 2, 2)):
    p = random_distribution(make_rng(seed), int(np.prod(dims)))
    return MultipartiteState(diagonal_embedding(p), SubsystemLayout(("A", "E", "B"), dims))


@pytest.mark.parametrize("ineq", ALL_IDS)
def test_markov_chain_saturates(ineq):
    rho = random_markov_chain(make_rng(4))
    rep = evaluate(ineq, rho)
    assert rep.lhs >= -1e-9
    assert abs(rep.rhs) <= 1e-6
    assert not rep.violation


def test_classical_diagonal_bigone():
    for seed in range(20):
        rep = evaluate("BigOne", classical_aeb(seed))
        assert rep.gap >= -1e-10


@pytest.mark.parametrize("ineq", ALL_IDS)
def test_classical_embeddings_never_violate(ineq):
    for seed in range(10):
        rep = evaluate(ineq, classical_aeb(100 + seed, (2, 3, 2)))
        if ineq in RATIO_ONLY:
            assert not rep.violation
        else:
            assert rep.gap >= -1e-10, (seed, rep)


def test_classical_swivel_independent():
    rho = classical_aeb(7)
    a = evaluate("KeWinter", rho, "petz_t0")
    b = evaluate("KeWinter", rho, "swivelled(1.3)")
    assert abs(a.rhs - b.rhs) <= 1e-9


def test_quantum_analogue_requires_plain_petz():
    rho = random_aeb(1)
    evaluate("Theorem5_quantum", rho, "petz_t0")
    for variant in ("best_scan", "swivelled(0.5)"):
        with pytest.raises(ValueError):
            evaluate("Theorem5_quantum", rho, variant)


def test_ratio_only_ids_never_flag():
    for seed in range(10):
        rho = random_aeb(seed)
        for ineq in RATIO_ONLY:
            rep = evaluate(ineq, rho, tolerance=-math.inf)
            assert not rep.violation
            assert rep.ratio == pytest.approx(rep.lhs / rep.rhs)


def test_data_processing_floor():
    # lhs of the channel forms is a difference of relative entropies, never negative
    for seed in range(20):
        inst = sample_instance(seed, "channel", (3, 2))
        for ineq in ("BigOne", "SBW"):
            assert evaluate(ineq, inst).lhs >= -1e-9


def test_fidelity_vs_trace_ordering():
    # -log F^2 >= (1/ln 2) (||.||_1 / 2)^2 for the same recovered state
    for seed in range(20):
        rho = random_aeb(200 + seed)
        sbw, zhang = evaluate("SBW", rho), evaluate("Zhang", rho)
        assert sbw.rhs >= zhang.rhs / (4 * math.log(2)) - 1e-10
        bsw, kim = evaluate("BSW", rho), evaluate("Kim", rho)
        assert bsw.rhs >= kim.rhs / (4 * math.log(2)) - 1e-10


def test_best_scan_not_worse_than_petz():
    for seed in range(5):
        rho = random_aeb(300 + seed)
        assert evaluate("KeWinter", rho, "best_scan").rhs <= evaluate("KeWinter", rho).rhs + 1e-12


def test_cmi_form_lhs_is_cmi():
    rho = random_aeb(11, (2, 3, 2))
    rep = evaluate("FR_fidelity", rho)
    assert abs(rep.lhs - info.conditional_mutual_information(rho, "A", "B", "E")) <= 1e-10
    assert abs(evaluate("BigOne", rho).lhs - rep.lhs) <= 1e-8


def test_channel_form_conversion():
    rho = random_aeb(2)
    inst = to_channel_form(rho)
    assert inst.channel(inst.rho).shape == (4, 4)
    np.testing.assert_allclose(inst.channel(inst.rho), rho.marginal(["A", "E"]).matrix, atol=1e-12)
    a, b = evaluate("BigOne", rho), evaluate("BigOne", inst)
    assert abs(a.gap - b.gap) <= 1e-9
    with pytest.raises(ValueError):
        evaluate("KeWinter", sample_instance(0, "channel", (2, 2)))


def test_map_variant_parse():
    assert MapVariant.parse("petz_t0") == MapVariant()
    assert MapVariant.parse("best_scan").kind == "best_scan"
    v = MapVariant.parse("swivelled(-0.25)")
    assert v.kind == "swivelled" and v.t == -0.25 and str(v) == "swivelled(-0.25)"
    for text in ("petz_t0", "best_scan", "swivelled(1.5)"):
        assert str(MapVariant.parse(text)) == text
    with pytest.raises(ValueError):
        MapVariant.parse("swivelled()")


def test_report_round_trip_and_determinism():
    a = evaluate("BSW", sample_instance(5), "best_scan", 5, "cmi:2x2x2:hilbert_schmidt_mixed")
    b = evaluate("BSW", sample_instance(5), "best_scan", 5, "cmi:2x2x2:hilbert_schmidt_mixed")
    assert a == b
    assert InequalityReport.from_dict(json.loads(json.dumps(a.to_dict()))) == a


def test_search_config_validation():
    for kwargs in ({"trials": 0}, {"refine_steps": -1}, {"family": "nope"}, {"seed": -1}):
        with pytest.raises(ValueError):
            SearchConfig(**kwargs)


def test_search_is_deterministic():
    cfg = SearchConfig(trials=15, refine_steps=5, seed=3)
    a = search_counterexample("KeWinter", "petz_t0", cfg)
    b = search_counterexample("KeWinter", "petz_t0", cfg)
    assert a.summary() == b.summary()


def test_quantum_analogue_search_finds_and_archives(tmp_path):
    cfg = SearchConfig(trials=40, refine_steps=20, dims=(2, 2), seed=0, family="channel")
    res = search_counterexample("Theorem5_quantum", "petz_t0", cfg, archive_dir=tmp_path)
    assert res.status == "violation_found" and res.reverified
    assert len(res.archived) == 2
    report = json.loads((tmp_path / f"Theorem5_quantum_{res.best.instance_seed}.report.json").read_text())
    assert report["violation"] and report["gap"] < -1e-7
    again = archive_witness(tmp_path, res.best, res.witness)
    assert set(again).isdisjoint(res.archived)
    assert len(list(tmp_path.iterdir())) == 4


def test_classical_family_search_inconclusive(tmp_path):
    cfg = SearchConfig(trials=20, refine_steps=10, family="classical")
    res = search_counterexample("BigOne", "petz_t0", cfg, archive_dir=tmp_path)
    assert res.status == "inconclusive"
    assert res.violations == 0 and res.min_gap >= -1e-10
    assert list(tmp_path.iterdir()) == []


def test_functoriality_asserted_axioms():
    for axiom in ("normalization", "tensor"):
        rep = check_functoriality(axiom, instances=10, seed=1)
        assert rep.asserted and rep.passed and rep.deviation <= 1e-8
    rep = check_functoriality("composition", instances=10, seed=1, classical=True)
    assert rep.asserted and rep.passed and rep.deviation <= 1e-10


def test_functoriality_quantum_composition_measured():
    rep = check_functoriality("composition", instances=5, seed=1)
    assert not rep.asserted and rep.passed
    assert len(rep.per_instance) == 5
    # the Petz construction composes exactly when the intermediate state is full rank
    assert rep.deviation <= 1e-8
    with pytest.raises(ValueError):
        check_functoriality("associativity")


@pytest.mark.parametrize("suite", SUITES)
def test_suites_pass(suite):
    res = run_suite(suite, trials=60, seed=0)
    assert res.ok, res.to_dict()
