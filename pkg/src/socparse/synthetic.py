"""Planted synthetic societies with templated dialogues.

A small kinship world: entities get a gender and an age group, every pair
draws its relation from a planted relation-given-attributes table (the reverse
direction gets the inverse label; the planted rows are closed under inversion,
so both directions follow the same table), and a
template emitter turns part of that graph into dialogue (kin terms when
addressing someone, self descriptions, family introductions, filler).  Because
the generating tables are known, learned tables and parse estimates can be
checked against them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DialogueSession, GoldRelation, Turn
from .energy import endpoint_code, factor_size
from .schema import AttributeSchema, RelationSchema, make_relation_schema
from .socgraph import Entity, ParseGraph

LABELS = ("per:parents", "per:children", "per:spouse", "per:siblings", "per:friends")
INVERSES = (("per:parents", "per:children"), ("per:spouse", "per:spouse"),
            ("per:siblings", "per:siblings"), ("per:friends", "per:friends"))
ATTRIBUTES = {"gender": ("male", "female"), "age": ("adult", "kid")}
NAMES = ("Alex", "Sam", "Jordan", "Casey", "Riley", "Taylor", "Morgan", "Jamie", "Robin", "Quinn",
         "Avery", "Drew", "Sky", "Rowan", "Kai", "Reese")

# kin term used when addressing the object of a relation, by the object's gender
ADDRESS = {
    "per:parents": ("dad", "mom"),
    "per:children": ("son", "daughter"),
    "per:spouse": ("honey", "honey"),
    "per:siblings": ("bro", "sis"),
    "per:friends": ("buddy", "buddy"),
}
INTRO = {
    "per:parents": ("father", "mother"),
    "per:children": ("boy", "girl"),
    "per:spouse": ("husband", "wife"),
    "per:siblings": ("brother", "sister"),
    "per:friends": ("friend", "friend"),
}
SELF = {("male", "adult"): "as a grown man", ("female", "adult"): "as a grown woman",
        ("male", "kid"): "i am just a little boy", ("female", "kid"): "i am just a little girl"}
TAILS = ("can you pass the salt", "where are my keys", "did you see the game", "we should get going",
         "that is a great idea", "what time is it", "i need some help here", "look at this")
FILLER = ("what a day", "the weather is nice", "anyone want coffee", "let us order food", "hmm okay")

MAIN_ROWS = {
    # (age of i, age of j[, same gender]) -> main relation distribution; "unanswerable"
    # only enters through the uniform mixture
    ("adult", "kid"): {"per:children": 0.85, "per:friends": 0.15},
    ("kid", "adult"): {"per:parents": 0.85, "per:friends": 0.15},
    ("kid", "kid"): {"per:siblings": 0.75, "per:friends": 0.25},
    ("adult", "adult", False): {"per:spouse": 0.70, "per:friends": 0.20, "per:siblings": 0.10},
    ("adult", "adult", True): {"per:friends": 0.70, "per:siblings": 0.30},
}
UNIFORM_MIX = 0.05


def schemas() -> tuple[RelationSchema, AttributeSchema]:
    rs = make_relation_schema(LABELS, INVERSES, LABELS)
    ats = AttributeSchema(tuple(ATTRIBUTES), ATTRIBUTES)
    return rs, ats


def planted_row(rs: RelationSchema, attrs_i: tuple[str, str], attrs_j: tuple[str, str]) -> np.ndarray:
    """Planted relation distribution for (gender, age) tuples of the two endpoints."""
    (g_i, a_i), (g_j, a_j) = attrs_i, attrs_j
    key = (a_i, a_j, g_i == g_j) if a_i == a_j == "adult" else (a_i, a_j)
    row = np.zeros(len(rs))
    for label, p in MAIN_ROWS[key].items():
        row[rs.index(label)] = p
    return (1 - UNIFORM_MIX) * row + UNIFORM_MIX / len(rs)


def planted_beta(rs: RelationSchema, ats: AttributeSchema) -> dict[tuple[int, int], np.ndarray]:
    """Planted rows keyed by the joint conditioning codes of fully known endpoints."""
    arities = ats.arities
    sub = tuple(range(len(ats)))
    out = {}
    tuples = [(g, a) for a in ATTRIBUTES["age"] for g in ATTRIBUTES["gender"]]
    for ti in tuples:
        for tj in tuples:
            ci = endpoint_code(arities, sub, [ats.value_index(s, v) for s, v in zip(ats.subtypes, ti)])
            cj = endpoint_code(arities, sub, [ats.value_index(s, v) for s, v in zip(ats.subtypes, tj)])
            out[(ci, cj)] = planted_row(rs, ti, tj)
    assert len(out) < factor_size(arities, sub) ** 2
    return out


@dataclass
class World:
    names: list[str]
    attrs: list[tuple[str, str]]  # (gender, age)
    rels: dict[tuple[int, int], str]

    @property
    def K(self) -> int:
        return len(self.names)


def sample_world(rng: np.random.Generator, rs: RelationSchema, K: int = 4, p_adult: float = 0.6) -> World:
    names = [str(n) for n in rng.choice(NAMES, size=K, replace=False)]
    attrs = [
        (ATTRIBUTES["gender"][int(rng.integers(2))], "adult" if rng.random() < p_adult else "kid")
        for _ in range(K)
    ]
    rels = {}
    for i in range(K):
        for j in range(i + 1, K):
            label = rs.labels[int(rng.choice(len(rs), p=planted_row(rs, attrs[i], attrs[j])))]
            rels[(i, j)] = label
            rels[(j, i)] = rs.inverse_of(label) or label
    return World(names, attrs, rels)


def _gender_index(world: World, j: int) -> int:
    return ATTRIBUTES["gender"].index(world.attrs[j][0])


def _address(world: World, i: int, j: int, rng) -> tuple[str, str]:
    kin = ADDRESS[world.rels[(i, j)]][_gender_index(world, j)]
    return f"{world.names[j]}, {kin}, {TAILS[int(rng.integers(len(TAILS)))]}.", kin


def _cover(world: World, j: int, rng) -> str:
    return f"{world.names[j]}, buddy, {TAILS[int(rng.integers(len(TAILS)))]}."


def _intro(world: World, i: int, targets, rng) -> tuple[str, dict]:
    parts, triggers = [], {}
    for j in targets:
        word = INTRO[world.rels[(i, j)]][_gender_index(world, j)]
        parts.append(f"{world.names[j]}, my {word}.")
        triggers[j] = word
    return "Everyone, meet my family. " + " ".join(parts), triggers


def _self(world: World, i: int) -> str:
    g, a = world.attrs[i]
    return f"Well, {SELF[(g, a)]}, {FILLER[0]}."


def _session(world: World, turns: list[tuple[int, str]], triggers: dict, sid: str) -> DialogueSession:
    entities = [Entity(f"S{k + 1}", world.names[k]) for k in range(world.K)]
    gold = []
    for (i, j), label in sorted(world.rels.items()):
        if label == "unanswerable":
            continue
        trig = tuple(sorted(triggers.get((i, j), ())))
        gold.append(GoldRelation(entities[i].id, entities[j].id, (label,), trig))
    attrs = {entities[k].id: {"gender": g, "age": a} for k, (g, a) in enumerate(world.attrs)}
    turn_objs = [Turn.from_text((entities[i].id,), text) for i, text in turns]
    return DialogueSession(turn_objs, entities, gold, attrs, sid)


def generate_session(
    rng: np.random.Generator,
    rs: RelationSchema,
    K: int = 4,
    n_turns: int = 10,
    p_reveal: float = 0.6,
    p_self: float = 0.6,
    p_cover: float = 0.2,
    p_intro: float = 0.2,
    p_adult: float = 0.6,
    sid: str = "",
) -> DialogueSession:
    """One dialogue revealing a random part of a freshly sampled world."""
    world = sample_world(rng, rs, K, p_adult)
    groups: list[list[tuple[int, str]]] = []
    triggers: dict = {}
    revealed = []
    for (i, j), label in world.rels.items():
        if i < j and label != "unanswerable" and rng.random() < p_reveal:
            revealed.append((i, j) if rng.random() < 0.5 else (j, i))
    if rng.random() < p_intro and revealed:
        i = revealed[0][0]
        targets = [j for (a, j) in revealed if a == i]
        text, trig = _intro(world, i, targets, rng)
        covers = [(i, _cover(world, j, rng)) for j in targets
                  if world.rels[(i, j)] != "per:friends" and rng.random() < p_cover]
        groups.append(covers + [(i, text)])
        for j, word in trig.items():
            triggers.setdefault((i, j), set()).add(word)
        revealed = [p for p in revealed if p[0] != i]
    for i, j in revealed:
        group = []
        if world.rels[(i, j)] != "per:friends" and rng.random() < p_cover:
            group.append((i, _cover(world, j, rng)))
        text, kin = _address(world, i, j, rng)
        group.append((i, text))
        groups.append(group)
        triggers.setdefault((i, j), set()).add(kin)
    for i in range(K):
        if rng.random() < p_self:
            groups.append([(i, _self(world, i))])
    while sum(map(len, groups)) < n_turns:
        i = int(rng.integers(K))
        j = int((i + 1 + rng.integers(K - 1)) % K)
        groups.append([(i, f"{world.names[j]}, {FILLER[int(rng.integers(len(FILLER)))]}.")])
    # random interleaving that keeps each group's internal order (cover before reveal)
    events = []
    while groups:
        g = groups[int(rng.integers(len(groups)))]
        events.append(g.pop(0))
        groups = [g for g in groups if g]
    return _session(world, events, triggers, sid)


def generate_corpus(n: int, seed: int = 0, **kwargs) -> list[DialogueSession]:
    rs, _ = schemas()
    rng = np.random.default_rng(seed)
    return [generate_session(rng, rs, sid=f"syn-{seed}-{k}", **kwargs) for k in range(n)]


def revelation_session(rng: np.random.Generator, rs: RelationSchema, reveal_turn: int = 5,
                       n_turns: int = 8, K: int = 4, sid: str = "", adult_hub: bool = True) -> DialogueSession:
    """A dialogue whose turn ``reveal_turn`` (1-based) overturns an earlier belief.

    One speaker calls every other entity "buddy" early on and then introduces
    them as family members in a single turn.  With ``adult_hub`` the speaker
    is a grown-up introducing a spouse, children or siblings.
    """
    for _ in range(1000):
        world = sample_world(rng, rs, K)
        hub = 0
        family = [j for j in range(1, K) if world.rels[(0, j)] not in ("per:friends", "unanswerable")]
        if len(family) >= 2 and (world.attrs[hub][1] == "adult" or not adult_hub):
            break
    else:
        raise RuntimeError("could not draw a world with a family hub")
    before = [(hub, _cover(world, j, rng)) for j in family] + [(hub, _self(world, hub))]
    while len(before) < reveal_turn - 1:
        i = int(rng.integers(1, K))
        j = int((i + 1 + rng.integers(K - 1)) % K)
        before.append((i, f"{world.names[j]}, {FILLER[int(rng.integers(len(FILLER)))]}."))
    before = before[: reveal_turn - 1]
    text, trig = _intro(world, hub, family, rng)
    triggers = {(hub, j): {w} for j, w in trig.items()}
    # after the reveal the other speakers settle their own pairs and attributes
    follow = []
    others = [int(i) for i in rng.permutation(np.arange(1, K))]
    for i in others:
        for j in others:
            if j != i and world.rels[(i, j)] != "unanswerable":
                line, kin = _address(world, i, j, rng)
                follow.append((i, line))
                triggers.setdefault((i, j), set()).add(kin)
    follow += [(i, _self(world, i)) for i in others]
    after = follow[: n_turns - len(before) - 1]
    return _session(world, before + [(hub, text)] + after, triggers, sid)


def relation_accuracy(pg: ParseGraph, gold: ParseGraph) -> float:
    """Fraction of ordered pairs whose relation label matches the gold graph."""
    aog = pg.aog
    hits = [pg.rels[s.a, s.b] == gold.rels[s.a, s.b] for s in aog.rel_slots]
    return float(np.mean(hits)) if hits else 1.0


# -- end-to-end suite -------------------------------------------------------------------------
SUITE = {"K": 6, "n_turns": 20, "p_reveal": 0.8, "p_adult": 0.5}
ABLATIONS = {
    "alpha": (True, False, False),
    "alpha+beta": (True, True, False),
    "alpha+gamma": (True, False, True),
    "alpha+beta+gamma": (True, True, True),
}


def mean_final_accuracy(sessions, scorer, model, config) -> float:
    """Mean relation accuracy of the last-turn estimate over ``sessions``."""
    from .sampler import parse_session

    rs, ats = model.relation_schema, model.attribute_schema
    accs = []
    for s in sessions:
        aog = s.aog(rs, ats)
        graphs, _ = parse_session(s, scorer, model, config, aog)
        accs.append(relation_accuracy(graphs[-1], s.gold_parse_graph(aog)))
    return float(np.mean(accs))


def planted_beta_error(model) -> float:
    """Largest L1 distance between a learned beta row and its planted row."""
    rs, ats = model.relation_schema, model.attribute_schema
    table = model.beta_tables[0]
    return max(float(np.abs(np.exp(table[c]) - row).sum()) for c, row in planted_beta(rs, ats).items())


def run_suite(seed: int, n_train: int = 1000, n_valid: int = 10, n_test: int = 50, sweeps: int = 100,
              gamma_grid=(0.25, 0.5, 1.0), train_config=None, **session_kw) -> dict:
    """Train on a fresh synthetic corpus, tune the gamma weight, and score every ablation.

    The two gamma weights are tied and picked on validation sessions; the
    ablations then switch terms off without retuning.  Returns the
    planted-row error of the learned tables, the chosen weights and the mean
    final-turn relation accuracy of each ablation on held-out sessions.
    """
    from dataclasses import replace

    from .sampler import SamplerConfig
    from .training import TrainConfig, train

    kw = {**SUITE, **session_kw}
    rs, ats = schemas()
    corpus = generate_corpus(n_train, seed=3 * seed, **kw)
    valid = generate_corpus(n_valid, seed=3 * seed + 1, **kw)
    test = generate_corpus(n_test, seed=3 * seed + 2, **kw)
    tc = train_config or TrainConfig(epochs=0, seed=seed)
    result = train(corpus, rs, ats, tc)
    config = SamplerConfig(sweeps=sweeps, seed=seed, hastings_correction=True)
    scores = [
        mean_final_accuracy(valid, result.scorer, result.model.with_weights(gamma_l=g, gamma_r=g), config)
        for g in gamma_grid
    ]
    g = gamma_grid[int(np.argmax(scores))]
    model = result.model.with_weights(gamma_l=g, gamma_r=g)
    accuracy = {
        name: mean_final_accuracy(test, result.scorer, model.with_switches(*sw), replace(config))
        for name, sw in ABLATIONS.items()
    }
    return {
        "seed": seed,
        "beta_row_l1": planted_beta_error(result.model),
        "weights": (model.beta, model.gamma_l, model.gamma_r),
        "accuracy": accuracy,
    }
