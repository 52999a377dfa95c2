"""Shared builders for the test modules."""

import numpy as np
from scipy import sparse

from socparse.energy import EnergyModel
from socparse.oracle import random_instance
from socparse.socgraph import new_parse_graph
from socparse.training import Example, Params, energy_and_grad, pair_loss_and_grad
from socparse.scorer import FeaturizedScorer, Featurizer


def random_graph(aog, rng, p_unset=0.0):
    pg = new_parse_graph(aog)
    for s in aog.slots:
        if s.kind == "attr" and rng.random() < p_unset:
            continue
        pg.set(s, int(rng.integers(aog.slot_arity(s))))
    return pg


def random_gradient_case(seed, reduced=False, n_features=6):
    """``(params, example, negative, model)`` with random logits and a random sparse design."""
    rng = np.random.default_rng(seed)
    M = [1, 2, 3][seed % 3]
    aog, _, model = random_instance(seed, K=3 + seed % 2, R=3, M=M, arity=2 + seed % 2, reduced=reduced,
                                    non_human=seed % 2)
    model = model.with_weights(*rng.uniform(0.3, 1.5, size=3))
    K = aog.K
    X_attr = sparse.random(K, n_features, density=0.6, random_state=seed, format="csr")
    X_rel = sparse.random(K * K, n_features, density=0.6, random_state=seed + 1, format="csr")
    scorer = FeaturizedScorer(
        aog.relation_schema, aog.attribute_schema,
        Featurizer({f"f{k}": k for k in range(n_features)}),
        rng.normal(size=(n_features, len(aog.relation_schema))),
        [rng.normal(size=(n_features, a)) for a in aog.attribute_schema.arities],
    )
    params = Params.from_model(model, scorer)
    params = params.with_flat(params.flat() + rng.normal(scale=0.3, size=params.flat().size))
    gold = random_graph(aog, rng, p_unset=0.2)
    neg = random_graph(aog, rng, p_unset=0.2)
    return params, Example(aog, gold, X_attr, X_rel), neg, model


def loss_of(params, ex, neg, model, margin):
    E_pos, _ = energy_and_grad(params, ex, ex.gold, model, grad=False)
    E_neg, _ = energy_and_grad(params, ex, neg, model, grad=False)
    return max(0.0, margin + E_pos - E_neg)


def gradient_errors(params, ex, neg, model, h=1e-5):
    """Per-group relative error between the analytic and the central-difference gradient."""
    E_pos, _ = energy_and_grad(params, ex, ex.gold, model, grad=False)
    E_neg, _ = energy_and_grad(params, ex, neg, model, grad=False)
    margin = abs(E_neg - E_pos) + 10.0  # stay away from the hinge
    _, g = pair_loss_and_grad(params, ex, neg, model, margin)
    analytic = g.flat()
    x = params.flat()
    numeric = np.empty_like(x)
    for k in range(len(x)):
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        numeric[k] = (loss_of(params.with_flat(up), ex, neg, model, margin)
                      - loss_of(params.with_flat(down), ex, neg, model, margin)) / (2 * h)
    pieces: dict[str, list[slice]] = {}
    offset = 0
    for name, a in zip(params.groups(), params.arrays()):
        pieces.setdefault(name, []).append(slice(offset, offset + a.size))
        offset += a.size
    errors = {}
    for name, slices in pieces.items():
        a_part = np.concatenate([analytic[sl] for sl in slices])
        n_part = np.concatenate([numeric[sl] for sl in slices])
        diff = np.linalg.norm(a_part - n_part)
        scale = max(np.linalg.norm(n_part), np.linalg.norm(a_part))
        errors[name] = 0.0 if scale < 1e-9 and diff < 1e-9 else diff / max(scale, 1e-12)
    return errors


def used_groups(model: EnergyModel) -> set[str]:
    if model.reduced:
        return {"triangle", "scorer", "weights"}
    return {"beta", "gamma", "scorer", "weights"}
