"""Gibbs energies of parse graphs.

The posterior over parse graphs is ``p(pg | D) ∝ exp(-E(D | pg) - E(pg))``.
``E(D | pg)`` comes from an :class:`~socparse.scorer.AlphaScorer`; ``E(pg)``
is the social-norm energy built from conditional tables stored here as
log-probabilities:

* relation-given-attributes rows ``p(e_ij | v_i, v_j)`` (one or more factors),
* attribute-given-relation rows ``p(v^m | e, side)`` per subtype,
* for the attribute-free variant, triangle rows ``p(e_ij | e_ik, e_jk)``.

Unknown attribute values condition the relation rows through a dedicated
code and are marginalized out of the attribute terms (they add no energy).
Non-human endpoints condition the relation rows through a single
"entity-kind" code and carry no attribute terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .schema import AttributeSchema, RelationSchema
from .socgraph import UNSET, ParseGraph

LEFT, RIGHT = 0, 1
FULL_TUPLE_MAX_SUBTYPES = 2


class EnergyError(RuntimeError):
    pass


def factor_layout(arities: Sequence[int]) -> list[tuple[int, ...]]:
    """Subtype groups conditioning the relation rows.

    Up to two subtypes share one joint table; beyond that every subtype gets
    its own table and the rows are combined by a normalized geometric mean.
    """
    M = len(arities)
    if M <= FULL_TUPLE_MAX_SUBTYPES:
        return [tuple(range(M))]
    return [(m,) for m in range(M)]


def factor_size(arities: Sequence[int], subtypes: Sequence[int]) -> int:
    """Number of conditioning codes of a factor: attribute tuples (with unknown) plus non-human."""
    n = 1
    for m in subtypes:
        n *= arities[m] + 1
    return n + 1


def endpoint_code(arities, subtypes, attr_row) -> int:
    """Conditioning code of one endpoint; ``attr_row`` is ``None`` for non-human entities."""
    if attr_row is None:
        return factor_size(arities, subtypes) - 1
    code, stride = 0, 1
    for m in subtypes:
        v = attr_row[m]
        code += (arities[m] if v < 0 else int(v)) * stride
        stride *= arities[m] + 1
    return code


def log_normalize(table: np.ndarray) -> np.ndarray:
    return table - logsumexp(table, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class EnergyModel:
    relation_schema: RelationSchema
    attribute_schema: AttributeSchema
    beta_tables: tuple[np.ndarray, ...]
    gamma_tables: tuple[np.ndarray, ...]
    triangle_table: np.ndarray | None = None
    beta: float = 1.0
    gamma_l: float = 1.0
    gamma_r: float = 1.0
    use_alpha: bool = True
    use_beta: bool = True
    use_gamma: bool = True
    reduced: bool = False
    smoothing: float = 0.1
    factors: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        arities = self.attribute_schema.arities
        if not self.factors:
            object.__setattr__(self, "factors", tuple(factor_layout(arities)))
        R = len(self.relation_schema)
        for f, t in zip(self.factors, self.beta_tables):
            C = factor_size(arities, f)
            if t.shape != (C, C, R):
                raise EnergyError(f"relation table for factor {f} has shape {t.shape}, expected {(C, C, R)}")
        for m, t in enumerate(self.gamma_tables):
            if t.shape != (R, 2, arities[m]):
                raise EnergyError(f"attribute table {m} has shape {t.shape}")
        if self.triangle_table is not None and self.triangle_table.shape != (R, R, R):
            raise EnergyError("triangle table must be (R, R, R)")
        if self.reduced and self.triangle_table is None:
            raise EnergyError("the reduced model needs a triangle table")
        for w in (self.beta, self.gamma_l, self.gamma_r):
            if w < 0:
                raise EnergyError("process weights must be non-negative")

    # -- construction ------------------------------------------------------
    @classmethod
    def uniform(cls, relation_schema, attribute_schema, *, triangle=True, **kwargs) -> "EnergyModel":
        arities = attribute_schema.arities
        R = len(relation_schema)
        factors = tuple(factor_layout(arities))
        beta_tables = tuple(
            np.full((factor_size(arities, f),) * 2 + (R,), -np.log(R)) for f in factors
        )
        gamma_tables = tuple(np.full((R, 2, a), -np.log(a)) for a in arities)
        tri = np.full((R, R, R), -np.log(R)) if triangle else None
        return cls(relation_schema, attribute_schema, beta_tables, gamma_tables, tri, factors=factors, **kwargs)

    def with_switches(self, alpha=None, beta=None, gamma=None) -> "EnergyModel":
        return replace(
            self,
            use_alpha=self.use_alpha if alpha is None else alpha,
            use_beta=self.use_beta if beta is None else beta,
            use_gamma=self.use_gamma if gamma is None else gamma,
        )

    def with_weights(self, beta=None, gamma_l=None, gamma_r=None) -> "EnergyModel":
        return replace(
            self,
            beta=self.beta if beta is None else beta,
            gamma_l=self.gamma_l if gamma_l is None else gamma_l,
            gamma_r=self.gamma_r if gamma_r is None else gamma_r,
        )

    # -- conditional rows --------------------------------------------------
    def codes(self, attr_row) -> tuple[int, ...]:
        arities = self.attribute_schema.arities
        return tuple(endpoint_code(arities, f, attr_row) for f in self.factors)

    def beta_log_row(self, codes_i, codes_j) -> np.ndarray:
        if len(self.factors) == 1:
            return self.beta_tables[0][codes_i[0], codes_j[0]]
        s = sum(t[ci, cj] for t, ci, cj in zip(self.beta_tables, codes_i, codes_j)) / len(self.factors)
        return s - logsumexp(s)

    def pair_log_row(self, pg: ParseGraph, i: int, j: int) -> np.ndarray:
        human = pg.aog.human
        row_i = pg.attrs[i] if human[i] else None
        row_j = pg.attrs[j] if human[j] else None
        return self.beta_log_row(self.codes(row_i), self.codes(row_j))

    def _attr_row(self, values) -> np.ndarray | None:
        if values is None:
            return None
        ats = self.attribute_schema
        if len(values) != len(ats):
            raise EnergyError("attribute tuple length does not match the schema")
        out = np.empty(len(ats), dtype=np.int64)
        for m, (sub, v) in enumerate(zip(ats.subtypes, values)):
            out[m] = v if isinstance(v, (int, np.integer)) else ats.value_index(sub, v)
        return out

    def gamma_log_row(self, label: int, side: int, m: int) -> np.ndarray:
        return self.gamma_tables[m][label, side]


def beta_conditional(model: EnergyModel, v_i, v_j) -> np.ndarray:
    """Distribution over relation labels given the endpoint attribute tuples.

    ``v_i`` / ``v_j`` are tuples of value names (or indices, ``-1`` unknown);
    ``None`` denotes a non-human endpoint.
    """
    row = model.beta_log_row(model.codes(model._attr_row(v_i)), model.codes(model._attr_row(v_j)))
    return np.exp(row)


def gamma_conditional(model: EnergyModel, label, side, subtype) -> np.ndarray:
    """Distribution over the values of ``subtype`` given an incident relation label."""
    rs, ats = model.relation_schema, model.attribute_schema
    e = label if isinstance(label, (int, np.integer)) else rs.index(label)
    s = {"left": LEFT, "right": RIGHT}.get(side, side)
    m = subtype if isinstance(subtype, (int, np.integer)) else ats.subtype_index(subtype)
    return np.exp(model.gamma_log_row(e, s, m))


# -- social-norm energies -------------------------------------------------------
def beta_energy(model: EnergyModel, pg: ParseGraph) -> float:
    """``-Σ_{i≠j} log p(e_ij | v_i, v_j)`` (unweighted)."""
    total = 0.0
    for s in pg.aog.rel_slots:
        total -= model.pair_log_row(pg, s.a, s.b)[pg.rels[s.a, s.b]]
    return float(total)


def gamma_energies(model: EnergyModel, pg: ParseGraph) -> tuple[float, float]:
    """Unweighted left/right attribute-given-relation energies."""
    aog = pg.aog
    left = right = 0.0
    for s in aog.rel_slots:
        e = pg.rels[s.a, s.b]
        for m in range(aog.M):
            if aog.human[s.a] and pg.attrs[s.a, m] != UNSET:
                left -= model.gamma_tables[m][e, LEFT, pg.attrs[s.a, m]]
            if aog.human[s.b] and pg.attrs[s.b, m] != UNSET:
                right -= model.gamma_tables[m][e, RIGHT, pg.attrs[s.b, m]]
    return float(left), float(right)


def triangle_terms(K: int):
    """(target edge, first conditioning edge, second conditioning edge) for every triangle term.

    Each unordered triple contributes its six directed edges ``x→y``, each
    conditioned on ``x→z`` and ``y→z`` where ``z`` is the third vertex.
    """
    for a, b, c in combinations(range(K), 3):
        for x, y, z in ((a, b, c), (b, a, c), (a, c, b), (c, a, b), (b, c, a), (c, b, a)):
            yield (x, y), (x, z), (y, z)


def triangle_energy(model: EnergyModel, pg: ParseGraph) -> float:
    if model.triangle_table is None:
        raise EnergyError("model has no triangle table")
    T = model.triangle_table
    r = pg.rels
    total = 0.0
    for (x, y), (x2, z), (y2, z2) in triangle_terms(pg.aog.K):
        total -= T[r[x2, z], r[y2, z2], r[x, y]]
    return float(total)


def norm_energy(model: EnergyModel, pg: ParseGraph) -> float:
    """Weighted relation/attribute energy (both switches honoured)."""
    total = 0.0
    if model.use_beta and model.beta:
        total += model.beta * beta_energy(model, pg)
    if model.use_gamma and (model.gamma_l or model.gamma_r):
        left, right = gamma_energies(model, pg)
        total += model.gamma_l * left + model.gamma_r * right
    return total


def norm_energy_reduced(model: EnergyModel, pg: ParseGraph) -> float:
    if pg.aog.K < 3:
        return 0.0
    if not model.use_beta:
        return 0.0
    return model.beta * triangle_energy(model, pg)


def prior_energy(model: EnergyModel, pg: ParseGraph) -> float:
    return norm_energy_reduced(model, pg) if model.reduced else norm_energy(model, pg)


def alpha_energy(scorer, dialogue_prefix, pg: ParseGraph) -> float:
    e = float(scorer.score(dialogue_prefix, pg))
    if not np.isfinite(e) or e < 0:
        raise EnergyError(f"scorer returned an invalid energy {e}")
    return e


def posterior_energy(scorer, model: EnergyModel, dialogue_prefix, pg: ParseGraph) -> float:
    """``E(D | pg) + E(pg)`` with each process gated by the model switches; Z is never formed."""
    total = 0.0
    if model.use_alpha and scorer is not None:
        total += alpha_energy(scorer, dialogue_prefix, pg)
    return total + prior_energy(model, pg)


def energy_terms(scorer, model: EnergyModel, dialogue_prefix, pg: ParseGraph) -> dict[str, float]:
    """Weighted per-process breakdown; switched-off processes report 0."""
    terms = {"alpha": 0.0, "beta": 0.0, "gamma_l": 0.0, "gamma_r": 0.0, "triangle": 0.0}
    if model.use_alpha and scorer is not None:
        terms["alpha"] = alpha_energy(scorer, dialogue_prefix, pg)
    if model.reduced:
        terms["triangle"] = norm_energy_reduced(model, pg)
    else:
        if model.use_beta:
            terms["beta"] = model.beta * beta_energy(model, pg)
        if model.use_gamma:
            left, right = gamma_energies(model, pg)
            terms["gamma_l"] = model.gamma_l * left
            terms["gamma_r"] = model.gamma_r * right
    return terms


def gamma_proposal_log_row(model: EnergyModel, pg: ParseGraph, i: int, m: int) -> np.ndarray:
    """Normalized log of ``∏_j p(v | e_ij, left) ∏_j p(v | e_ji, right)`` over the domain of ``m``."""
    s = np.zeros(model.attribute_schema.arities[m])
    for j in range(pg.aog.K):
        if j == i:
            continue
        s = s + model.gamma_tables[m][pg.rels[i, j], LEFT] + model.gamma_tables[m][pg.rels[j, i], RIGHT]
    return s - logsumexp(s)
