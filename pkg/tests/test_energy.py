import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from socparse.energy import (
    EnergyError,
    EnergyModel,
    alpha_energy,
    beta_conditional,
    endpoint_code,
    energy_terms,
    factor_layout,
    factor_size,
    gamma_conditional,
    gamma_proposal_log_row,
    norm_energy,
    norm_energy_reduced,
    posterior_energy,
    triangle_energy,
    triangle_terms,
)
from socparse.oracle import random_instance, reference_energy
from socparse.schema import AttributeSchema, make_relation_schema
from socparse.scorer import TableScorer, UniformScorer, ZeroScorer
from socparse.socgraph import Entity, make_aog, new_parse_graph


def fill_random(aog, rng, attrs=True):
    pg = new_parse_graph(aog)
    for s in aog.slots:
        if s.kind == "rel" or attrs:
            pg.set(s, int(rng.integers(aog.slot_arity(s))))
    return pg


@pytest.mark.parametrize("R, arities", [(2, ()), (3, (2,)), (4, (2, 3)), (2, (2, 2, 2))])
def test_uniform_closed_form(R, arities):
    rs = make_relation_schema([f"r{k}" for k in range(R - 1)])
    subs = tuple(f"s{m}" for m in range(len(arities)))
    ats = AttributeSchema(subs, {s: tuple(f"v{k}" for k in range(a)) for s, a in zip(subs, arities)})
    aog = make_aog(["A", "B"], rs, ats)
    pg = fill_random(aog, np.random.default_rng(0))
    model = EnergyModel.uniform(rs, ats)
    expected = 2 * np.log(R) + 4 * sum(np.log(a) for a in arities)
    np.testing.assert_allclose(norm_energy(model, pg), expected, rtol=1e-12)


def test_zero_weights_give_zero_energy():
    aog, _, model = random_instance(4, R=3, M=2)
    model = model.with_weights(0.0, 0.0, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert norm_energy(model, fill_random(aog, rng)) == 0.0


def test_unknown_attributes_add_no_attribute_energy():
    aog, _, model = random_instance(5, R=3, M=2)
    pg = fill_random(aog, np.random.default_rng(2), attrs=False)
    assert energy_terms(None, model, (), pg)["gamma_l"] == 0.0
    assert energy_terms(None, model, (), pg)["gamma_r"] == 0.0


def _planted_couple_model():
    rs = make_relation_schema(["per:spouse", "per:siblings"], [("per:spouse", "per:spouse"),
                                                                ("per:siblings", "per:siblings")])
    ats = AttributeSchema(("gender",), {"gender": ("male", "female")})
    model = EnergyModel.uniform(rs, ats)
    table = model.beta_tables[0].copy()
    mixed = np.log([0.8, 0.1, 0.1])
    same = np.log([0.1, 0.8, 0.1])
    for a, b in itertools.product(range(2), repeat=2):
        table[a, b] = mixed if a != b else same
    return EnergyModel(rs, ats, (table,), model.gamma_tables, model.triangle_table)


def test_planted_gold_beats_every_single_flip():
    model = _planted_couple_model()
    rs, ats = model.relation_schema, model.attribute_schema
    aog = make_aog(["A", "B", "C"], rs, ats)
    gold = new_parse_graph(aog)
    for e, g in zip("ABC", ("male", "female", "male")):
        gold.set_attribute(e, "gender", g)
    for a, b in itertools.permutations("ABC", 2):
        same = gold.attribute(a, "gender") == gold.attribute(b, "gender")
        gold.set_relation(a, b, "per:siblings" if same else "per:spouse")
    e_gold = norm_energy(model, gold)
    flips = 0
    for s in aog.slots:
        for v in range(aog.slot_arity(s)):
            if v == gold.get(s):
                continue
            bad = gold.copy()
            bad.set(s, v)
            assert norm_energy(model, bad) > e_gold
            flips += 1
    assert flips == 3 + 6 * 2


def test_planted_row_is_read_back():
    rs = make_relation_schema(["per:children", "per:parents", "per:friends"])
    ats = AttributeSchema(("gender", "age"), {"gender": ("male", "female"), "age": ("adult", "baby")})
    model = EnergyModel.uniform(rs, ats)
    table = model.beta_tables[0].copy()
    arities = ats.arities
    ci = endpoint_code(arities, (0, 1), np.array([1, 0]))
    cj = endpoint_code(arities, (0, 1), np.array([0, 1]))
    counts = np.array([90.0, 4.0, 4.0, 2.0])
    table[ci, cj] = np.log(counts / counts.sum())
    model = EnergyModel(rs, ats, (table,), model.gamma_tables)
    row = beta_conditional(model, ("female", "adult"), ("male", "baby"))
    assert row[rs.index("per:children")] == pytest.approx(0.9)
    assert row.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(beta_conditional(model, None, ("male", "baby")), 0.25)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 3))
def test_conditional_rows_are_distributions(seed, M):
    aog, _, model = random_instance(seed, R=3, M=M, arity=3)
    rng = np.random.default_rng(seed)
    pg = fill_random(aog, rng)
    for i, j in itertools.permutations(range(aog.K), 2):
        np.testing.assert_allclose(np.exp(model.pair_log_row(pg, i, j)).sum(), 1.0, rtol=1e-12)
    for m in range(M):
        for side in ("left", "right"):
            np.testing.assert_allclose(gamma_conditional(model, 1, side, m).sum(), 1.0, rtol=1e-12)
        np.testing.assert_allclose(np.exp(gamma_proposal_log_row(model, pg, 0, m)).sum(), 1.0, rtol=1e-12)


def test_gamma_proposal_is_product_of_incident_rows():
    aog, _, model = random_instance(9, K=2, R=3, M=1, arity=3)
    pg = fill_random(aog, np.random.default_rng(0))
    e01, e10 = pg.rels[0, 1], pg.rels[1, 0]
    p = gamma_conditional(model, e01, "left", 0) * gamma_conditional(model, e10, "right", 0)
    np.testing.assert_allclose(np.exp(gamma_proposal_log_row(model, pg, 0, 0)), p / p.sum(), rtol=1e-12)


def test_factor_layout_switches_to_per_subtype_tables():
    assert factor_layout((2, 2)) == [(0, 1)]
    assert factor_layout((2, 2, 3)) == [(0,), (1,), (2,)]
    assert factor_size((2, 3), (0, 1)) == 3 * 4 + 1


def test_triangle_needs_three_entities():
    rs = make_relation_schema(["a", "b"])
    model = EnergyModel.uniform(rs, AttributeSchema(), reduced=True)
    aog = make_aog(["A", "B"], rs, AttributeSchema())
    assert norm_energy_reduced(model, fill_random(aog, np.random.default_rng(0))) == 0.0


@pytest.mark.parametrize("K", [3, 4, 5])
def test_uniform_triangle_closed_form(K):
    rs = make_relation_schema(["a", "b"])
    model = EnergyModel.uniform(rs, AttributeSchema(), reduced=True, beta=0.5)
    aog = make_aog([f"E{k}" for k in range(K)], rs, AttributeSchema())
    n_terms = len(list(triangle_terms(K)))
    assert n_terms == K * (K - 1) * (K - 2)
    pg = fill_random(aog, np.random.default_rng(K))
    np.testing.assert_allclose(norm_energy_reduced(model, pg), 0.5 * n_terms * np.log(3), rtol=1e-12)


def test_planted_family_triangles():
    rs = make_relation_schema(["per:children", "per:parents", "per:siblings"],
                              [("per:children", "per:parents"), ("per:siblings", "per:siblings")])
    R = len(rs)
    aog = make_aog(["A", "B", "C"], rs, AttributeSchema())
    gold = new_parse_graph(aog)
    for a, b, label in [("A", "B", "per:children"), ("A", "C", "per:children"), ("B", "A", "per:parents"),
                        ("C", "A", "per:parents"), ("B", "C", "per:siblings"), ("C", "B", "per:siblings")]:
        gold.set_relation(a, b, label)
    table = np.full((R, R, R), 0.1 / (R - 1))
    for (x, y), (x2, z), (y2, z2) in triangle_terms(3):
        row = np.full(R, 0.1 / (R - 1))
        row[gold.rels[x, y]] = 0.9
        table[gold.rels[x2, z], gold.rels[y2, z2]] = row
    model = EnergyModel.uniform(rs, AttributeSchema(), reduced=True)
    model = EnergyModel(rs, AttributeSchema(), model.beta_tables, model.gamma_tables, np.log(table), reduced=True)
    e_gold = triangle_energy(model, gold)
    pairs = [s for s in aog.rel_slots]
    pg = new_parse_graph(aog)
    for labels in itertools.product(range(R), repeat=len(pairs)):
        for s, v in zip(pairs, labels):
            pg.set(s, v)
        hamming = sum(pg.get(s) != gold.get(s) for s in pairs)
        if hamming == 1:
            assert triangle_energy(model, pg) > e_gold
        elif hamming == 0:
            assert triangle_energy(model, pg) == e_gold


def test_switch_gating():
    aog, scorer, model = random_instance(11, R=3, M=1)
    pg = fill_random(aog, np.random.default_rng(3))
    assert posterior_energy(scorer, model.with_switches(False, False, False), (), pg) == 0.0
    alpha_only = model.with_switches(True, False, False)
    assert posterior_energy(scorer, alpha_only, (), pg) == alpha_energy(scorer, (), pg)
    terms = energy_terms(scorer, model.with_switches(False, True, False), (), pg)
    assert terms["alpha"] == terms["gamma_l"] == terms["gamma_r"] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4), st.integers(2, 4), st.integers(0, 3), st.integers(0, 1),
       st.booleans())
def test_matches_reference_evaluation(seed, K, R, M, nh, reduced):
    aog, scorer, model = random_instance(seed, K=K, R=R, M=M, non_human=nh, reduced=reduced)
    model = model.with_weights(0.7, 1.3, 0.4)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        pg = fill_random(aog, rng, attrs=rng.random() < 0.7)
        np.testing.assert_allclose(posterior_energy(scorer, model, (), pg),
                                   reference_energy(scorer, model, (), pg), rtol=1e-10, atol=1e-10)


def test_bad_table_shapes_are_rejected():
    rs = make_relation_schema(["a"])
    ats = AttributeSchema(("g",), {"g": ("x", "y")})
    model = EnergyModel.uniform(rs, ats)
    with pytest.raises(EnergyError):
        EnergyModel(rs, ats, (np.zeros((2, 2, 2)),), model.gamma_tables)
    with pytest.raises(EnergyError):
        EnergyModel(rs, ats, model.beta_tables, (np.zeros((2, 2, 3)),))
    with pytest.raises(EnergyError):
        EnergyModel(rs, ats, model.beta_tables, model.gamma_tables, reduced=True)
    with pytest.raises(EnergyError):
        model.with_weights(beta=-1.0)


def test_alpha_energy_rejects_negative_scores():
    aog = make_aog(["A", "B"], make_relation_schema(["a"]), AttributeSchema())
    pg = new_parse_graph(aog)
    attr_E = np.zeros((2, 0, 1))
    rel_E = np.full((2, 2, 2), -1.0)
    with pytest.raises(EnergyError):
        alpha_energy(TableScorer(attr_E, rel_E), (), pg)


def test_builtin_uniform_scorer_energy():
    rs = make_relation_schema(["a"])
    aog = make_aog(["A", "B"], rs, AttributeSchema())
    pg = new_parse_graph(aog)
    assert UniformScorer().score((), pg) == pytest.approx(2 * np.log(2))
    assert UniformScorer().score((), pg) == UniformScorer().score((), pg)
    assert ZeroScorer().score((), pg) == 0.0


def test_non_human_endpoint_uses_entity_kind_code():
    rs = make_relation_schema(["a", "b"])
    ats = AttributeSchema(("g",), {"g": ("x", "y")})
    aog = make_aog([Entity("A"), Entity("T", is_human=False)], rs, ats)
    _, _, model = random_instance(2, R=3, M=1)
    model = EnergyModel(rs, ats, model.beta_tables, model.gamma_tables)
    pg = new_parse_graph(aog)
    pg.set_attribute("A", "g", "y")
    row = model.pair_log_row(pg, 0, 1)
    np.testing.assert_allclose(row, model.beta_tables[0][1, 3])
    assert logsumexp(row) == pytest.approx(0.0)
