"""Learning the social-norm tables and the scorer weights from annotated sessions.

Tables start from smoothed counts.  A softmax-regression pre-fit gives the
lexical scorer its initial weights.  Everything is then refined jointly by
minimizing a margin loss ``max(0, m + E(pos) - E(neg))`` between gold parse
graphs and single-slot corruptions of them.  Tables are parametrized as
logits and renormalized after every update, so they always hold
log-probabilities.
"""

from __future__ import annotations

import base64
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.special import log_softmax, softmax

from .corpus import DialogueSession
from .energy import LEFT, RIGHT, EnergyModel, endpoint_code, factor_layout, factor_size
from .schema import AttributeSchema, RelationSchema, load_attribute_schema, load_relation_schema
from .scorer import Featurizer, FeaturizedScorer, slot_feature_sets
from .socgraph import UNSET, ParseGraph, SocAoG

log = logging.getLogger(__name__)

WEIGHT_GRID = (0.25, 0.5, 1.0, 2.0)
MODEL_FORMAT = "socparse-model/1"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 5
    margin: float = 1.0
    negatives_per_positive: int = 1
    smoothing: float = 0.1
    seed: int = 0
    batch_size: int = 32
    optimizer: str = "momentum"  # momentum | adam
    momentum: float = 0.9
    learn_weights: bool = False
    beta: float = 1.0
    gamma_l: float = 1.0
    gamma_r: float = 1.0
    reduced: bool = False
    l2: float = 1.0
    prefit_scorer: bool = True
    min_feature_count: int = 1

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.negatives_per_positive < 1 or self.batch_size < 1:
            raise ValueError("negatives_per_positive and batch_size must be positive")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")


def _gold_graphs(corpus, relation_schema, attribute_schema) -> list[ParseGraph]:
    out = []
    for item in corpus:
        if isinstance(item, ParseGraph):
            out.append(item)
        else:
            out.append(item.gold_parse_graph(item.aog(relation_schema, attribute_schema)))
    return out


def _normalize_counts(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=-1, keepdims=True)
    n = counts.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / np.where(total > 0, total, 1.0), 1.0 / n)
        return np.log(p)


def fit_counts(
    corpus,
    relation_schema: RelationSchema,
    attribute_schema: AttributeSchema,
    smoothing: float = 0.1,
    reduced: bool = False,
    beta: float = 1.0,
    gamma_l: float = 1.0,
    gamma_r: float = 1.0,
) -> EnergyModel:
    """Smoothed maximum-likelihood tables from gold parse graphs (sessions or graphs)."""
    graphs = _gold_graphs(corpus, relation_schema, attribute_schema)
    if not graphs:
        raise TrainingError("cannot fit an empty corpus")
    arities = attribute_schema.arities
    R = len(relation_schema)
    factors = factor_layout(arities)
    beta_c = [np.zeros((factor_size(arities, f),) * 2 + (R,)) for f in factors]
    gamma_c = [np.zeros((R, 2, a)) for a in arities]
    tri_c = np.zeros((R, R, R))
    for pg in graphs:
        aog = pg.aog
        codes = [
            [endpoint_code(arities, f, pg.attrs[i] if aog.human[i] else None) for i in range(aog.K)]
            for f in factors
        ]
        for s in aog.rel_slots:
            i, j, r = s.a, s.b, pg.rels[s.a, s.b]
            for f, c in enumerate(codes):
                beta_c[f][c[i], c[j], r] += 1
            for m in range(aog.M):
                if aog.human[i] and pg.attrs[i, m] != UNSET:
                    gamma_c[m][r, LEFT, pg.attrs[i, m]] += 1
                if aog.human[j] and pg.attrs[j, m] != UNSET:
                    gamma_c[m][r, RIGHT, pg.attrs[j, m]] += 1
        rels = pg.rels
        for x, y, z in itertools.permutations(range(aog.K), 3):
            tri_c[rels[x, z], rels[y, z], rels[x, y]] += 1
    k = smoothing
    return EnergyModel(
        relation_schema,
        attribute_schema,
        tuple(_normalize_counts(c + k) for c in beta_c),
        tuple(_normalize_counts(c + k) for c in gamma_c),
        _normalize_counts(tri_c + k),
        beta=beta,
        gamma_l=gamma_l,
        gamma_r=gamma_r,
        reduced=reduced,
        smoothing=smoothing,
        factors=tuple(factors),
    )


def sample_negative(gold: ParseGraph, rng: np.random.Generator) -> ParseGraph:
    """Corrupt one uniformly chosen slot to a uniformly chosen different value.

    Only slots with a known gold value and at least two possible values are
    eligible.
    """
    aog = gold.aog
    eligible = [s for s in aog.slots if aog.slot_arity(s) > 1 and gold.get(s) != UNSET]
    if not eligible:
        raise TrainingError("no slot can be corrupted (all arities are 1 or values unknown)")
    slot = eligible[int(rng.integers(len(eligible)))]
    old = gold.get(slot)
    new = int(rng.integers(aog.slot_arity(slot) - 1))
    if new >= old:
        new += 1
    neg = gold.copy()
    neg.set(slot, new)
    return neg


def contrastive_loss(E_pos: float, E_neg: float, margin: float) -> float:
    return max(0.0, margin + E_pos - E_neg)


# -- parameters and analytic gradients ---------------------------------------------------
@dataclass
class Params:
    """Logit-parametrized tables, scorer weights and the three process weights."""

    beta: list
    gamma: list
    triangle: np.ndarray
    rel_W: np.ndarray
    attr_W: list
    weights: np.ndarray  # beta, gamma_l, gamma_r

    def arrays(self) -> list[np.ndarray]:
        return [*self.beta, *self.gamma, self.triangle, self.rel_W, *self.attr_W, self.weights]

    def groups(self) -> list[str]:
        return (
            ["beta"] * len(self.beta)
            + ["gamma"] * len(self.gamma)
            + ["triangle", "scorer"]
            + ["scorer"] * len(self.attr_W)
            + ["weights"]
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "Params":
        out, k = [], 0
        for a in self.arrays():
            out.append(vec[k : k + a.size].reshape(a.shape).copy())
            k += a.size
        nb, ng, na = len(self.beta), len(self.gamma), len(self.attr_W)
        return Params(
            out[:nb], out[nb : nb + ng], out[nb + ng], out[nb + ng + 1],
            out[nb + ng + 2 : nb + ng + 2 + na], out[-1],
        )

    def zeros_like(self) -> "Params":
        return self.with_flat(np.zeros(self.flat().size))

    def normalized(self) -> "Params":
        return Params(
            [log_softmax(t, axis=-1) for t in self.beta],
            [log_softmax(t, axis=-1) for t in self.gamma],
            log_softmax(self.triangle, axis=-1),
            self.rel_W.copy(),
            [w.copy() for w in self.attr_W],
            np.maximum(self.weights, 0.0),
        )

    @classmethod
    def from_model(cls, model: EnergyModel, scorer: FeaturizedScorer) -> "Params":
        R = len(model.relation_schema)
        tri = model.triangle_table if model.triangle_table is not None else np.full((R, R, R), -np.log(R))
        return cls(
            [t.copy() for t in model.beta_tables],
            [t.copy() for t in model.gamma_tables],
            tri.copy(),
            scorer.rel_weights.copy(),
            [w.copy() for w in scorer.attr_weights],
            np.array([model.beta, model.gamma_l, model.gamma_r], dtype=float),
        )

    def to_model(self, template: EnergyModel) -> EnergyModel:
        p = self.normalized()
        return replace(
            template,
            beta_tables=tuple(p.beta),
            gamma_tables=tuple(p.gamma),
            triangle_table=p.triangle,
            beta=float(p.weights[0]),
            gamma_l=float(p.weights[1]),
            gamma_r=float(p.weights[2]),
        )

    def to_scorer(self, template: FeaturizedScorer) -> FeaturizedScorer:
        out = template.copy()
        out.rel_weights = self.rel_W.copy()
        out.attr_weights = [w.copy() for w in self.attr_W]
        return out


@dataclass
class Example:
    aog: SocAoG
    gold: ParseGraph
    X_attr: sparse.csr_matrix
    X_rel: sparse.csr_matrix
    codes: list = field(default_factory=list)


def _example(session: DialogueSession, rs, ats, featurizer: Featurizer) -> Example:
    aog = session.aog(rs, ats)
    X_attr, X_rel = featurizer.design(session.turns, aog)
    return Example(aog, session.gold_parse_graph(aog), X_attr, X_rel)


def _onehot_minus(p: np.ndarray, idx: np.ndarray) -> np.ndarray:
    g = -p.copy()
    g[np.arange(len(idx)), idx] += 1.0
    return g


def energy_and_grad(
    params: Params,
    ex: Example,
    pg: ParseGraph,
    model: EnergyModel,
    temperature: float = 1.0,
    grad: bool = True,
):
    """Posterior energy of ``pg`` under ``params`` and its gradient (a :class:`Params`).

    Tables in ``params`` are treated as logits.  Switches and the reduced flag
    come from ``model``; process weights come from ``params.weights``.
    """
    aog = ex.aog
    K, R = aog.K, len(aog.relation_schema)
    arities = aog.attribute_schema.arities
    w_beta, w_gl, w_gr = params.weights
    g = params.zeros_like() if grad else None
    E = 0.0
    src = np.array([s.a for s in aog.rel_slots], dtype=np.int64)
    dst = np.array([s.b for s in aog.rel_slots], dtype=np.int64)
    lab = pg.rels[src, dst]

    if model.use_alpha:
        rel_lp = log_softmax(np.asarray(ex.X_rel @ params.rel_W) / temperature, axis=1)
        rows = src * K + dst
        E -= rel_lp[rows, lab].sum()
        if grad:
            G = np.zeros((K * K, R))
            G[rows] = -_onehot_minus(np.exp(rel_lp[rows]), lab) / temperature
            g.rel_W += np.asarray(ex.X_rel.T @ G)
        for m, W in enumerate(params.attr_W):
            ents = np.array([i for i in range(K) if aog.human[i] and pg.attrs[i, m] != UNSET], dtype=np.int64)
            if len(ents) == 0:
                continue
            lp = log_softmax(np.asarray(ex.X_attr @ W) / temperature, axis=1)
            vals = pg.attrs[ents, m]
            E -= lp[ents, vals].sum()
            if grad:
                G = np.zeros((K, W.shape[1]))
                G[ents] = -_onehot_minus(np.exp(lp[ents]), vals) / temperature
                g.attr_W[m] += np.asarray(ex.X_attr.T @ G)

    if model.reduced:
        if model.use_beta and K >= 3:
            lp = log_softmax(params.triangle, axis=-1)
            r = pg.rels
            e_tri = 0.0
            for x, y, z in itertools.permutations(range(K), 3):
                a, b, c = r[x, z], r[y, z], r[x, y]
                e_tri -= lp[a, b, c]
                if grad:
                    row = -np.exp(lp[a, b])
                    row[c] += 1.0
                    g.triangle[a, b] -= w_beta * row
            E += w_beta * e_tri
            if grad:
                g.weights[0] += e_tri
        return E, g

    if model.use_beta:
        codes = [
            np.array([endpoint_code(arities, f, pg.attrs[i] if aog.human[i] else None) for i in range(K)])
            for f in model.factors
        ]
        nf = len(codes)
        s = sum(params.beta[f][codes[f][src], codes[f][dst]] for f in range(nf)) / nf
        lp = log_softmax(s, axis=1)
        e_beta = -lp[np.arange(len(lab)), lab].sum()
        E += w_beta * e_beta
        if grad:
            G = -_onehot_minus(np.exp(lp), lab) * (w_beta / nf)
            for f in range(nf):
                np.add.at(g.beta[f], (codes[f][src], codes[f][dst]), G)
            g.weights[0] += e_beta

    if model.use_gamma:
        e_side = [0.0, 0.0]
        for m in range(aog.M):
            lp = log_softmax(params.gamma[m], axis=-1)
            for side, ends, w in ((LEFT, src, w_gl), (RIGHT, dst, w_gr)):
                vals = pg.attrs[ends, m]
                keep = aog.human[ends] & (vals != UNSET)
                if not keep.any():
                    continue
                ll, vv = lab[keep], vals[keep]
                e_side[side] -= lp[ll, side, vv].sum()
                if grad:
                    G = -_onehot_minus(np.exp(lp[ll, side]), vv) * w
                    np.add.at(g.gamma[m], (ll, side), G)
        E += w_gl * e_side[0] + w_gr * e_side[1]
        if grad:
            g.weights[1] += e_side[0]
            g.weights[2] += e_side[1]
    return E, g


def pair_loss_and_grad(params, ex, neg, model, margin, temperature=1.0):
    E_pos, g_pos = energy_and_grad(params, ex, ex.gold, model, temperature)
    E_neg, g_neg = energy_and_grad(params, ex, neg, model, temperature)
    loss = contrastive_loss(E_pos, E_neg, margin)
    if loss <= 0:
        return loss, None
    return loss, params.with_flat(g_pos.flat() - g_neg.flat())


# -- optimizers --------------------------------------------------------------------------
class Momentum:
    def __init__(self, lr: float, mu: float = 0.9):
        self.lr, self.mu, self.v = lr, mu, None

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        self.v = -self.lr * g if self.v is None else self.mu * self.v - self.lr * g
        return x + self.v


class Adam:
    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m, self.v = np.zeros_like(x), np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return x - self.lr * mh / (np.sqrt(vh) + self.eps)


# -- scorer pre-fit -------------------------------------------------------------------------
def _softmax_regression(X: sparse.csr_matrix, y: np.ndarray, n_classes: int, l2: float) -> np.ndarray:
    F = X.shape[1]
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0

    def f(w):
        W = w.reshape(F, n_classes)
        Z = np.asarray(X @ W)
        lp = log_softmax(Z, axis=1)
        loss = -(lp * Y).sum() + 0.5 * l2 * (W * W).sum()
        G = np.asarray(X.T @ (softmax(Z, axis=1) - Y)) + l2 * W
        return loss, G.ravel()

    res = optimize.minimize(f, np.zeros(F * n_classes), jac=True, method="L-BFGS-B", options={"maxiter": 500})
    return res.x.reshape(F, n_classes)


def fit_scorer(sessions: Sequence[DialogueSession], rs, ats, l2: float = 1.0, min_count: int = 1) -> FeaturizedScorer:
    """Featurize the training sessions and fit every slot family by L2 softmax regression."""
    feats = []
    for s in sessions:
        attr, rel = slot_feature_sets(s.turns, s.aog(rs, ats))
        feats.extend(attr)
        feats.extend(rel.values())
    featurizer = Featurizer().fit(feats, min_count)
    scorer = FeaturizedScorer(rs, ats, featurizer)
    if len(featurizer) == 0:
        return scorer
    rel_rows, rel_y = [], []
    attr_rows = [[] for _ in ats.subtypes]
    attr_y = [[] for _ in ats.subtypes]
    for s in sessions:
        aog = s.aog(rs, ats)
        X_attr, X_rel = featurizer.design(s.turns, aog)
        gold = s.gold_parse_graph(aog)
        for slot in aog.rel_slots:
            rel_rows.append(X_rel[slot.a * aog.K + slot.b])
            rel_y.append(gold.rels[slot.a, slot.b])
        for slot in aog.attr_slots:
            v = gold.attrs[slot.a, slot.b]
            if v != UNSET:
                attr_rows[slot.b].append(X_attr[slot.a])
                attr_y[slot.b].append(v)
    if rel_rows:
        scorer.rel_weights = _softmax_regression(sparse.vstack(rel_rows).tocsr(), np.array(rel_y), len(rs), l2)
    for m, a in enumerate(ats.arities):
        if attr_rows[m]:
            scorer.attr_weights[m] = _softmax_regression(sparse.vstack(attr_rows[m]).tocsr(), np.array(attr_y[m]), a, l2)
    return scorer


# -- training loop ----------------------------------------------------------------------------
@dataclass
class TrainResult:
    model: EnergyModel
    scorer: FeaturizedScorer
    losses: list = field(default_factory=list)
    count_model: EnergyModel | None = None


def _dataset_loss(params, examples, negatives, model, margin) -> float:
    total, n = 0.0, 0
    for ex, negs in zip(examples, negatives):
        E_pos, _ = energy_and_grad(params, ex, ex.gold, model, grad=False)
        for neg in negs:
            E_neg, _ = energy_and_grad(params, ex, neg, model, grad=False)
            total += contrastive_loss(E_pos, E_neg, margin)
            n += 1
    return total / max(n, 1)


def train(
    sessions: Sequence[DialogueSession],
    relation_schema: RelationSchema,
    attribute_schema: AttributeSchema,
    config: TrainConfig = TrainConfig(),
    switches: dict | None = None,
) -> TrainResult:
    """Count initialization, scorer pre-fit, then contrastive refinement.

    Negatives are drawn once up front so every epoch optimizes the same
    objective; the per-epoch loss is that objective after the epoch.
    """
    if not sessions:
        raise TrainingError("cannot train on an empty corpus")
    rs, ats = relation_schema, attribute_schema
    model0 = fit_counts(sessions, rs, ats, config.smoothing, config.reduced, config.beta, config.gamma_l, config.gamma_r)
    if switches:
        model0 = model0.with_switches(**switches)
    if config.prefit_scorer:
        scorer0 = fit_scorer(sessions, rs, ats, config.l2, config.min_feature_count)
    else:
        scorer0 = FeaturizedScorer(rs, ats, Featurizer())
    if config.epochs == 0:
        return TrainResult(model0, scorer0, [], model0)

    rng = np.random.default_rng(config.seed)
    examples = [_example(s, rs, ats, scorer0.featurizer) for s in sessions]
    negatives = [
        [sample_negative(ex.gold, rng) for _ in range(config.negatives_per_positive)] for ex in examples
    ]
    params = Params.from_model(model0, scorer0)
    opt = Momentum(config.lr, config.momentum) if config.optimizer == "momentum" else Adam(config.lr)
    x = params.flat()
    frozen = np.zeros_like(x, dtype=bool)
    if not config.learn_weights:
        frozen[-3:] = True
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            g = np.zeros_like(x)
            n = 0
            for k in batch:
                for neg in negatives[k]:
                    _, gk = pair_loss_and_grad(params, examples[k], neg, model0, config.margin)
                    if gk is not None:
                        g += gk.flat()
                    n += 1
            g /= max(n, 1)
            g[frozen] = 0.0
            x = opt.step(x, g)
            params = params.with_flat(x).normalized()
            x = params.flat()
        loss = _dataset_loss(params, examples, negatives, model0, config.margin)
        if not np.isfinite(loss) or not np.all(np.isfinite(x)):
            raise TrainingError(f"training diverged at epoch {epoch + 1} (loss {loss})")
        losses.append(loss)
        log.info("epoch %d loss %.6f", epoch + 1, loss)
    return TrainResult(params.to_model(model0), params.to_scorer(scorer0), losses, model0)


def tune_weights(model: EnergyModel, evaluate, grid: Sequence[float] = WEIGHT_GRID) -> tuple[EnergyModel, float]:
    """Grid search over (beta, gamma_l, gamma_r); ``evaluate(model) -> score`` (higher is better).

    Ties keep the earliest grid point, which makes the search deterministic.
    """
    best, best_score = None, -np.inf
    for b, gl, gr in itertools.product(grid, repeat=3):
        candidate = model.with_weights(beta=b, gamma_l=gl, gamma_r=gr)
        score = evaluate(candidate)
        if score > best_score:
            best, best_score = candidate, score
    return best, best_score


# -- serialization ----------------------------------------------------------------------------
def _enc(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).copy()


def model_to_dict(model: EnergyModel, scorer: FeaturizedScorer | None = None, config: TrainConfig | None = None) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "relation_schema": model.relation_schema.to_text(),
        "attribute_schema": model.attribute_schema.to_text(),
        "relation_fingerprint": model.relation_schema.fingerprint(),
        "attribute_fingerprint": model.attribute_schema.fingerprint(),
        "factors": [list(f) for f in model.factors],
        "beta_tables": [_enc(t) for t in model.beta_tables],
        "gamma_tables": [_enc(t) for t in model.gamma_tables],
        "triangle_table": None if model.triangle_table is None else _enc(model.triangle_table),
        "weights": {"beta": model.beta, "gamma_l": model.gamma_l, "gamma_r": model.gamma_r},
        "switches": {"alpha": model.use_alpha, "beta": model.use_beta, "gamma": model.use_gamma},
        "reduced": model.reduced,
        "smoothing": model.smoothing,
        "scorer": None,
        "train_config": None if config is None else asdict(config),
    }
    if scorer is not None:
        vocab = sorted(scorer.featurizer.vocab.items(), key=lambda kv: kv[1])
        doc["scorer"] = {
            "vocab": [k for k, _ in vocab],
            "temperature": scorer.temperature,
            "rel_weights": _enc(scorer.rel_weights),
            "attr_weights": [_enc(w) for w in scorer.attr_weights],
        }
    return doc


def save_model(path, model: EnergyModel, scorer: FeaturizedScorer | None = None, config: TrainConfig | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, scorer, config), fh, sort_keys=True)
        fh.write("\n")


def model_from_dict(doc: dict, relation_schema=None, attribute_schema=None):
    if doc.get("format") != MODEL_FORMAT:
        raise TrainingError(f"unsupported model format {doc.get('format')!r}")
    rs = relation_schema or load_relation_schema(doc["relation_schema"])
    ats = attribute_schema or load_attribute_schema(doc["attribute_schema"])
    if rs.fingerprint() != doc["relation_fingerprint"]:
        raise TrainingError("relation schema fingerprint does not match the model")
    if ats.fingerprint() != doc["attribute_fingerprint"]:
        raise TrainingError("attribute schema fingerprint does not match the model")
    w, sw = doc["weights"], doc["switches"]
    model = EnergyModel(
        rs,
        ats,
        tuple(_dec(t) for t in doc["beta_tables"]),
        tuple(_dec(t) for t in doc["gamma_tables"]),
        None if doc["triangle_table"] is None else _dec(doc["triangle_table"]),
        beta=w["beta"],
        gamma_l=w["gamma_l"],
        gamma_r=w["gamma_r"],
        use_alpha=sw["alpha"],
        use_beta=sw["beta"],
        use_gamma=sw["gamma"],
        reduced=doc["reduced"],
        smoothing=doc["smoothing"],
        factors=tuple(tuple(f) for f in doc["factors"]),
    )
    scorer = None
    if doc.get("scorer"):
        s = doc["scorer"]
        featurizer = Featurizer({k: n for n, k in enumerate(s["vocab"])})
        scorer = FeaturizedScorer(
            rs, ats, featurizer, _dec(s["rel_weights"]), [_dec(a) for a in s["attr_weights"]], s["temperature"]
        )
    config = TrainConfig(**doc["train_config"]) if doc.get("train_config") else None
    return model, scorer, config


def load_model(path, relation_schema=None, attribute_schema=None):
    """``(EnergyModel, FeaturizedScorer | None, TrainConfig | None)``; refuses mismatched schemas."""
    with open(path) as fh:
        return model_from_dict(json.load(fh), relation_schema, attribute_schema)
