"""Dialogue-likelihood scorers.

An alpha scorer maps a dialogue prefix and a parse graph to a non-negative
energy ``E(D | pg)`` and classifies every slot from the prefix alone (used to
initialize unset slots).  Scorers that factorize over slots additionally
expose :meth:`FactorizedScorer.slot_energies`, which lets the sampler work
with local energy differences.
"""

from __future__ import annotations

import functools
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import sparse
from scipy.special import log_softmax

from .corpus import Turn
from .schema import AttributeSchema, RelationSchema
from .socgraph import UNSET, ParseGraph, SocAoG, Slot


class ScorerError(RuntimeError):
    """Transport or protocol failure of an external scorer."""


@runtime_checkable
class AlphaScorer(Protocol):
    def score(self, dialogue_prefix: Sequence[Turn], pg: ParseGraph) -> float: ...

    def classify(self, dialogue_prefix: Sequence[Turn], aog: SocAoG) -> dict[Slot, np.ndarray]: ...


class FactorizedScorer:
    """Base for scorers whose energy is a sum of per-slot terms ``-log p(value | D)``."""

    factorized = True

    def slot_energies(self, dialogue_prefix, aog: SocAoG) -> tuple[np.ndarray, np.ndarray]:
        """``(attr_E, rel_E)``: ``(K, M, max arity)`` padded with ``inf`` and ``(K, K, R)``."""
        raise NotImplementedError

    def score(self, dialogue_prefix, pg: ParseGraph) -> float:
        attr_E, rel_E = self.slot_energies(dialogue_prefix, pg.aog)
        return energy_from_tables(attr_E, rel_E, pg)

    def classify(self, dialogue_prefix, aog: SocAoG) -> dict[Slot, np.ndarray]:
        attr_E, rel_E = self.slot_energies(dialogue_prefix, aog)
        out = {}
        for s in aog.attr_slots:
            a = aog.attribute_schema.arities[s.b]
            out[s] = np.exp(-attr_E[s.a, s.b, :a])
        for s in aog.rel_slots:
            out[s] = np.exp(-rel_E[s.a, s.b])
        return out


def energy_from_tables(attr_E: np.ndarray, rel_E: np.ndarray, pg: ParseGraph) -> float:
    aog = pg.aog
    total = 0.0
    for s in aog.attr_slots:
        v = pg.attrs[s.a, s.b]
        if v != UNSET:
            total += attr_E[s.a, s.b, v]
    for s in aog.rel_slots:
        total += rel_E[s.a, s.b, pg.rels[s.a, s.b]]
    return float(total)


def empty_tables(aog: SocAoG) -> tuple[np.ndarray, np.ndarray]:
    arities = aog.attribute_schema.arities
    amax = max(arities, default=1)
    attr_E = np.full((aog.K, aog.M, amax), np.inf)
    for m, a in enumerate(arities):
        attr_E[:, m, :a] = 0.0
    rel_E = np.zeros((aog.K, aog.K, len(aog.relation_schema)))
    return attr_E, rel_E


class UniformScorer(FactorizedScorer):
    """Every slot uniform: the energy of a graph is ``Σ log(arity)`` over its set slots."""

    def slot_energies(self, dialogue_prefix, aog):
        attr_E, rel_E = empty_tables(aog)
        for m, a in enumerate(aog.attribute_schema.arities):
            attr_E[:, m, :a] = np.log(a)
        rel_E[:] = np.log(len(aog.relation_schema))
        return attr_E, rel_E


class ZeroScorer(FactorizedScorer):
    """Constant zero energy (a flat dialogue landscape)."""

    def slot_energies(self, dialogue_prefix, aog):
        return empty_tables(aog)

    def classify(self, dialogue_prefix, aog):
        out = {}
        for s in aog.slots:
            n = aog.slot_arity(s)
            out[s] = np.full(n, 1.0 / n)
        return out


class TableScorer(FactorizedScorer):
    """Fixed per-slot energy tables, independent of the dialogue (planted landscapes, tests)."""

    def __init__(self, attr_E: np.ndarray, rel_E: np.ndarray):
        self.attr_E = np.asarray(attr_E, dtype=float)
        self.rel_E = np.asarray(rel_E, dtype=float)

    def slot_energies(self, dialogue_prefix, aog):
        return self.attr_E, self.rel_E

    def classify(self, dialogue_prefix, aog):
        out = {}
        for s in aog.attr_slots:
            a = aog.attribute_schema.arities[s.b]
            out[s] = np.exp(log_softmax(-self.attr_E[s.a, s.b, :a]))
        for s in aog.rel_slots:
            out[s] = np.exp(log_softmax(-self.rel_E[s.a, s.b]))
        return out


# -- lexical features --------------------------------------------------------------
def _grams(tokens: Sequence[str]) -> frozenset[str]:
    low = [t.lower() for t in tokens]
    return frozenset(low) | frozenset(f"{a} {b}" for a, b in zip(low, low[1:]))


def _name_parts(entity) -> list[tuple[str, ...]]:
    from .corpus import tokenize

    parts = []
    for name in {entity.id, entity.display_name}:
        toks = tuple(t.lower() for t in tokenize(name))
        if toks:
            parts.append(toks)
    return parts


def _name_mentioned(low: Sequence[str], parts) -> bool:
    for p in parts:
        n = len(p)
        for k in range(len(low) - n + 1):
            if tuple(low[k : k + n]) == p:
                return True
    return False


NEAR_WINDOW = 3


def _after_mention(low: Sequence[str], parts) -> frozenset[str]:
    """Grams of the few tokens following each mention of a name."""
    grams: set[str] = set()
    for p in parts:
        n = len(p)
        for k in range(len(low) - n + 1):
            if tuple(low[k : k + n]) == p:
                window = [t for t in low[k + n : k + n + NEAR_WINDOW + 1] if t.isalnum()][:NEAR_WINDOW]
                grams |= _grams(window)
    return frozenset(grams)


@functools.lru_cache(maxsize=65536)
def turn_features(prev: Turn | None, turn: Turn, entities: tuple) -> dict:
    """Feature contributions of one turn: keys ``("a", i)`` and ``("r", i, j)``."""
    ids = [e.id for e in entities]
    low = turn.lowered
    grams = _grams(turn.tokens)
    speakers = {ids.index(s) for s in turn.speakers if s in ids}
    prev_speakers = {ids.index(s) for s in (prev.speakers if prev else ()) if s in ids}
    named = {k for k, e in enumerate(entities) if _name_mentioned(low, _name_parts(e))}
    out: dict = {}

    def add(key, prefix):
        out.setdefault(key, set()).update(prefix + g for g in grams)

    after = {j: _after_mention(low, _name_parts(entities[j])) for j in named}
    for i in speakers:
        add(("a", i), "a:self:")
        for j in range(len(entities)):
            if j == i or j in speakers:
                continue
            if j in named or j in prev_speakers:
                add(("r", i, j), "r:ij:")
                add(("r", j, i), "r:ji:")
            if after.get(j):
                out.setdefault(("r", i, j), set()).update("r:near:" + g for g in after[j])
                out.setdefault(("r", j, i), set()).update("r:nearji:" + g for g in after[j])
    for j in named - speakers:
        add(("a", j), "a:about:")
        if after[j]:
            out.setdefault(("a", j), set()).update("a:near:" + g for g in after[j])
    for j in prev_speakers - speakers - named:
        add(("a", j), "a:to:")
    mentioned = sorted(named - speakers)
    for x in mentioned:
        for y in mentioned:
            if x != y:
                add(("r", x, y), "r:men:")
    return {k: frozenset(v) for k, v in out.items()}


def slot_feature_sets(dialogue: Sequence[Turn], aog: SocAoG) -> tuple[list[set], dict]:
    """Feature string sets per entity (attribute slots) and per ordered pair (relation slots)."""
    entities = aog.entities
    K = len(entities)
    attr = [{"a:bias"} for _ in range(K)]
    rel = {}
    for i in range(K):
        for j in range(K):
            if i != j:
                kind = ("H" if aog.human[i] else "N") + ("H" if aog.human[j] else "N")
                rel[(i, j)] = {"r:bias", f"r:kind:{kind}"}
    prev = None
    for turn in dialogue:
        for key, feats in turn_features(prev, turn, entities).items():
            if key[0] == "a":
                attr[key[1]] |= feats
            else:
                rel[(key[1], key[2])] |= feats
        prev = turn
    return attr, rel


class Featurizer:
    """Maps feature strings to columns of sparse design matrices."""

    def __init__(self, vocab: dict[str, int] | None = None):
        self.vocab = dict(vocab or {})

    def __len__(self):
        return len(self.vocab)

    def fit(self, feature_sets, min_count: int = 1) -> "Featurizer":
        counts: dict[str, int] = {}
        for fs in feature_sets:
            for f in fs:
                counts[f] = counts.get(f, 0) + 1
        for f in sorted(counts):
            if counts[f] >= min_count and f not in self.vocab:
                self.vocab[f] = len(self.vocab)
        return self

    def matrix(self, feature_sets) -> sparse.csr_matrix:
        indptr, indices = [0], []
        for fs in feature_sets:
            cols = sorted(self.vocab[f] for f in fs if f in self.vocab)
            indices.extend(cols)
            indptr.append(len(indices))
        data = np.ones(len(indices))
        return sparse.csr_matrix(
            (data, np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(feature_sets), len(self.vocab)),
        )

    def design(self, dialogue, aog: SocAoG):
        """``(X_attr (K, F), X_rel (K*K, F))``; relation row ``i*K + j``, diagonal rows empty."""
        attr, rel = slot_feature_sets(dialogue, aog)
        K = aog.K
        X_attr = self.matrix(attr)
        X_rel = self.matrix([rel.get((i, j), ()) for i in range(K) for j in range(K)])
        return X_attr, X_rel


class FeaturizedScorer(FactorizedScorer):
    """Per-slot softmax-linear models over lexical features.

    Relation slots share one weight matrix ``(F, R)``; each attribute subtype
    has its own ``(F, arity)`` matrix.  A slot's energy is ``-log p(value)``
    with ``p = softmax(x W / temperature)``.
    """

    def __init__(
        self,
        relation_schema: RelationSchema,
        attribute_schema: AttributeSchema,
        featurizer: Featurizer | None = None,
        rel_weights: np.ndarray | None = None,
        attr_weights: Sequence[np.ndarray] | None = None,
        temperature: float = 1.0,
    ):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.relation_schema = relation_schema
        self.attribute_schema = attribute_schema
        self.featurizer = featurizer or Featurizer()
        F = len(self.featurizer)
        R = len(relation_schema)
        self.rel_weights = np.zeros((F, R)) if rel_weights is None else np.asarray(rel_weights, float)
        self.attr_weights = (
            [np.zeros((F, a)) for a in attribute_schema.arities]
            if attr_weights is None
            else [np.asarray(w, float) for w in attr_weights]
        )
        self.temperature = float(temperature)

    def copy(self) -> "FeaturizedScorer":
        return FeaturizedScorer(
            self.relation_schema,
            self.attribute_schema,
            Featurizer(self.featurizer.vocab),
            self.rel_weights.copy(),
            [w.copy() for w in self.attr_weights],
            self.temperature,
        )

    def design(self, dialogue, aog):
        return self.featurizer.design(dialogue, aog)

    def log_probs(self, X_attr, X_rel, aog: SocAoG):
        """Per-slot log-probabilities from design matrices."""
        rel_lp = log_softmax(np.asarray(X_rel @ self.rel_weights) / self.temperature, axis=1)
        attr_lp = [
            log_softmax(np.asarray(X_attr @ w) / self.temperature, axis=1) for w in self.attr_weights
        ]
        return attr_lp, rel_lp

    def energies_from_design(self, X_attr, X_rel, aog: SocAoG):
        attr_lp, rel_lp = self.log_probs(X_attr, X_rel, aog)
        attr_E, rel_E = empty_tables(aog)
        for m, lp in enumerate(attr_lp):
            attr_E[:, m, : lp.shape[1]] = -lp
        rel_E[:] = -rel_lp.reshape(aog.K, aog.K, -1)
        for i in range(aog.K):
            rel_E[i, i] = 0.0
        return attr_E, rel_E

    def slot_energies(self, dialogue_prefix, aog):
        X_attr, X_rel = self.design(dialogue_prefix, aog)
        return self.energies_from_design(X_attr, X_rel, aog)
