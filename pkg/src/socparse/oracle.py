"""Exact posterior by brute-force enumeration, for verifying the sampler on tiny instances.

Also holds a deliberately naive energy evaluator written straight from the
model definition (no shared helpers with :mod:`socparse.energy` beyond the
table layout) so the two implementations can check each other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .energy import EnergyModel, posterior_energy
from .schema import AttributeSchema, make_relation_schema
from .scorer import TableScorer, empty_tables
from .socgraph import Entity, ParseGraph, SocAoG, Slot, make_aog, new_parse_graph

DEFAULT_CAP = 10**6


class OracleError(RuntimeError):
    pass


@dataclass
class ExactPosterior:
    aog: SocAoG
    support: np.ndarray  # (n_graphs, n_slots) in aog.slots order
    energies: np.ndarray
    probabilities: np.ndarray
    log_Z: float

    def graph(self, n: int) -> ParseGraph:
        pg = new_parse_graph(self.aog)
        for s, v in zip(self.aog.slots, self.support[n]):
            pg.set(s, int(v))
        return pg

    def map_graph(self) -> ParseGraph:
        return self.graph(int(np.argmax(self.probabilities)))

    def marginals(self) -> list[np.ndarray]:
        return [exact_marginal(self, s) for s in self.aog.slots]


def enumerate_support(aog: SocAoG, cap: int = DEFAULT_CAP) -> np.ndarray:
    size = aog.support_size()
    if size > cap:
        raise OracleError(f"support of {size} graphs exceeds the cap of {cap}")
    ranges = [range(aog.slot_arity(s)) for s in aog.slots]
    support = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(size, len(ranges))
    return support


def enumerate_posterior(
    aog: SocAoG, scorer, model: EnergyModel, dialogue_prefix=(), cap: int = DEFAULT_CAP
) -> ExactPosterior:
    support = enumerate_support(aog, cap)
    energies = np.empty(len(support))
    pg = new_parse_graph(aog)
    for n, vec in enumerate(support):
        for s, v in zip(aog.slots, vec):
            pg.set(s, int(v))
        energies[n] = posterior_energy(scorer, model, dialogue_prefix, pg)
    log_Z = float(logsumexp(-energies))
    probs = np.exp(-energies - log_Z)
    return ExactPosterior(aog, support, energies, probs, log_Z)


def exact_marginal(posterior: ExactPosterior, slot: Slot) -> np.ndarray:
    aog = posterior.aog
    n = aog.slots.index(slot)
    return np.bincount(
        posterior.support[:, n], weights=posterior.probabilities, minlength=aog.slot_arity(slot)
    )


def compare(estimate, exact) -> float:
    """L1 distance between two distributions on the same support."""
    p = np.asarray(estimate, dtype=float)
    q = np.asarray(exact, dtype=float)
    if p.shape != q.shape:
        raise OracleError(f"support mismatch: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


# -- independent term-by-term evaluation ----------------------------------------------
def _code(model: EnergyModel, pg: ParseGraph, i: int, subtypes) -> int:
    arities = model.attribute_schema.arities
    if not pg.aog.human[i]:
        n = 1
        for m in subtypes:
            n *= arities[m] + 1
        return n
    code = 0
    for m in reversed(subtypes):
        v = pg.attrs[i, m]
        code = code * (arities[m] + 1) + (arities[m] if v < 0 else v)
    return int(code)


def reference_terms(scorer, model: EnergyModel, dialogue_prefix, pg: ParseGraph) -> dict[str, float]:
    """Unweighted energy terms computed naively from the definitions."""
    aog = pg.aog
    K = aog.K
    terms = {"alpha": 0.0, "beta": 0.0, "gamma_l": 0.0, "gamma_r": 0.0, "triangle": 0.0}
    if scorer is not None:
        terms["alpha"] = float(scorer.score(dialogue_prefix, pg))
    for i, j in itertools.permutations(range(K), 2):
        r = pg.rels[i, j]
        rows = np.array(
            [t[_code(model, pg, i, f), _code(model, pg, j, f)] for f, t in zip(model.factors, model.beta_tables)]
        )
        row = rows.mean(axis=0)
        terms["beta"] -= row[r] - logsumexp(row)
        for m in range(aog.M):
            if aog.human[i] and pg.attrs[i, m] >= 0:
                terms["gamma_l"] -= model.gamma_tables[m][r, 0, pg.attrs[i, m]]
            if aog.human[j] and pg.attrs[j, m] >= 0:
                terms["gamma_r"] -= model.gamma_tables[m][r, 1, pg.attrs[j, m]]
    if model.triangle_table is not None:
        # every ordered triple (x, y, z) is one directed edge x->y given x->z and y->z
        for x, y, z in itertools.permutations(range(K), 3):
            terms["triangle"] -= model.triangle_table[pg.rels[x, z], pg.rels[y, z], pg.rels[x, y]]
    return terms


def reference_energy(scorer, model: EnergyModel, dialogue_prefix, pg: ParseGraph) -> float:
    t = reference_terms(scorer, model, dialogue_prefix, pg)
    total = t["alpha"] if model.use_alpha else 0.0
    if model.reduced:
        return total + (model.beta * t["triangle"] if model.use_beta else 0.0)
    if model.use_beta:
        total += model.beta * t["beta"]
    if model.use_gamma:
        total += model.gamma_l * t["gamma_l"] + model.gamma_r * t["gamma_r"]
    return total


# -- random verification instances ------------------------------------------------------
def random_instance(seed: int, K: int = 3, R: int = 2, M: int = 1, arity: int = 2, scale: float = 1.0,
                    reduced: bool = False, non_human: int = 0):
    """A random small ``(aog, scorer, model)`` with finite, non-flat energies."""
    rng = np.random.default_rng(seed)
    labels = [f"rel{k}" for k in range(R - 1)]
    rs = make_relation_schema(labels)
    subtypes = tuple(f"sub{m}" for m in range(M))
    ats = AttributeSchema(subtypes, {s: tuple(f"v{k}" for k in range(arity)) for s in subtypes})
    entities = [Entity(f"E{k}", is_human=k >= non_human) for k in range(K)]
    aog = make_aog(entities, rs, ats)
    base = EnergyModel.uniform(rs, ats)

    def noisy(shape):
        x = rng.normal(scale=scale, size=shape)
        return x - logsumexp(x, axis=-1, keepdims=True)

    model = EnergyModel(
        rs, ats,
        tuple(noisy(t.shape) for t in base.beta_tables),
        tuple(noisy(t.shape) for t in base.gamma_tables),
        noisy((R, R, R)),
        reduced=reduced,
    )
    attr_E, rel_E = empty_tables(aog)
    for m in range(M):
        attr_E[:, m, :arity] = rng.exponential(scale, size=(K, arity))
    rel_E[:] = rng.exponential(scale, size=rel_E.shape)
    return aog, TableScorer(attr_E, rel_E), model


# (relation labels incl. unanswerable, subtypes, non-human entities) of the standard suite
STANDARD_SPECS = ((2, 0, 0), (2, 1, 0), (2, 2, 0), (3, 0, 0), (3, 1, 0),
                  (2, 1, 1), (3, 1, 1), (2, 2, 1), (3, 2, 0), (3, 0, 1))
STANDARD_SCALE = 0.35


def standard_instances(n: int = len(STANDARD_SPECS), scale: float = STANDARD_SCALE, base_seed: int = 100,
                       flat: bool = False):
    """The K=3 verification instances; ``flat`` switches every energy term off."""
    if not 1 <= n <= len(STANDARD_SPECS):
        raise ValueError(f"between 1 and {len(STANDARD_SPECS)} standard instances are available")
    out = []
    for k, (R, M, nh) in enumerate(STANDARD_SPECS[:n]):
        aog, scorer, model = random_instance(base_seed + k, R=R, M=M, non_human=nh, scale=scale)
        if flat:
            model = model.with_switches(False, False, False)
        out.append((aog, scorer, model))
    return out


def chain_marginals(aog, scorer, model, config, seed: int) -> list[np.ndarray]:
    """Per-slot marginals of a single-turn chain started from the all-unset graph."""
    from dataclasses import replace

    from .sampler import ChainState, parse_turn, slot_marginals

    cfg = replace(config, seed=seed, classify_init=False, warm_start=False)
    state = ChainState.start(aog, seed)
    _, tt = parse_turn(state, None, scorer, model, cfg)
    return slot_marginals(aog, tt.samples)


def max_slot_l1(estimates, exact) -> float:
    return max(compare(p, q) for p, q in zip(estimates, exact))


def oracle_check(instances, seeds, config, threshold: float = 0.05, min_pass_rate: float = 0.95) -> dict:
    """Sampler-vs-enumeration verdict over ``instances`` x ``seeds``.

    A run passes when its largest per-slot L1 error is within ``threshold``;
    the verdict passes when every instance reaches ``min_pass_rate``.
    """
    per_instance = []
    worst = 0.0
    for aog, scorer, model in instances:
        exact = enumerate_posterior(aog, scorer, model).marginals()
        errs = [max_slot_l1(chain_marginals(aog, scorer, model, config, s), exact) for s in seeds]
        worst = max(worst, max(errs))
        per_instance.append(float(np.mean([e <= threshold for e in errs])))
    pass_rate = min(per_instance) if per_instance else 0.0
    return {
        "instances": len(per_instance),
        "seeds": len(list(seeds)),
        "threshold": threshold,
        "max_L1": worst,
        "pass_rate": pass_rate,
        "per_instance_pass_rate": per_instance,
        "pass": bool(per_instance) and pass_rate >= min_pass_rate,
    }
