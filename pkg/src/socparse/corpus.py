"""Dialogue corpora, attribute sidecars and relation-extraction metrics."""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .schema import AttributeSchema, RelationSchema, SchemaError
from .socgraph import Entity, ParseGraph, SocAoG, new_parse_graph

TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(TOKEN_RE.findall(text))


@dataclass(frozen=True)
class Turn:
    speakers: tuple[str, ...]
    tokens: tuple[str, ...]
    text: str = ""

    @classmethod
    def from_text(cls, speakers, text: str) -> "Turn":
        if isinstance(speakers, str):
            speakers = (speakers,)
        return cls(tuple(speakers), tokenize(text), text)

    @property
    def lowered(self) -> tuple[str, ...]:
        return tuple(t.lower() for t in self.tokens)


def dialogue_tokens(turns: Sequence[Turn]) -> list[str]:
    """Flat token stream: each turn rendered as ``speaker... : tokens``."""
    out: list[str] = []
    for turn in turns:
        out.extend(turn.speakers)
        out.append(":")
        out.extend(turn.tokens)
    return out


@dataclass(frozen=True)
class GoldRelation:
    subject: str
    object: str
    labels: tuple[str, ...]
    triggers: tuple[str, ...] | None = ()

    def to_dict(self) -> dict:
        d = {"x": self.subject, "y": self.object, "r": list(self.labels)}
        if self.triggers is not None:
            d["t"] = list(self.triggers)
        return d


@dataclass
class DialogueSession:
    turns: list[Turn]
    entities: list[Entity]
    gold_relations: list[GoldRelation] = field(default_factory=list)
    gold_attributes: dict[str, dict[str, str]] | None = None
    session_id: str = ""

    def validate(self, relation_schema: RelationSchema | None = None) -> None:
        if not self.turns:
            raise CorpusError(f"session {self.session_id!r} has no turns")
        ids = {e.id for e in self.entities}
        for rel in self.gold_relations:
            for arg in (rel.subject, rel.object):
                if arg not in ids:
                    raise CorpusError(f"session {self.session_id!r}: argument {arg!r} is not an entity")
            if relation_schema is not None:
                for label in rel.labels:
                    if label not in relation_schema:
                        raise CorpusError(
                            f"session {self.session_id!r}: relation label {label!r} absent from schema"
                        )

    def aog(self, relation_schema: RelationSchema, attribute_schema: AttributeSchema) -> SocAoG:
        return SocAoG(tuple(self.entities), relation_schema, attribute_schema)

    def gold_parse_graph(self, aog: SocAoG) -> ParseGraph:
        """Gold relations (first listed label per pair), gold attributes where annotated."""
        pg = new_parse_graph(aog)
        for rel in self.gold_relations:
            if rel.subject != rel.object and rel.labels:
                pg.set_relation(rel.subject, rel.object, rel.labels[0])
        for entity, values in (self.gold_attributes or {}).items():
            if not aog.human[aog.index(entity)]:
                continue
            for subtype, value in values.items():
                if subtype in aog.attribute_schema.subtypes:
                    pg.set_attribute(entity, subtype, value)
        return pg

    def to_dialogre(self) -> list:
        names = {e.id: e.display_name for e in self.entities}
        lines = [f"{', '.join(names.get(s, s) for s in t.speakers)}: {t.text}" for t in self.turns]
        rels = []
        for rel in self.gold_relations:
            d = rel.to_dict()
            d["x"], d["y"] = names[rel.subject], names[rel.object]
            d["x_type"] = "PER" if self._entity(rel.subject).is_human else "STRING"
            d["y_type"] = "PER" if self._entity(rel.object).is_human else "STRING"
            rels.append(d)
        return [lines, rels]

    def _entity(self, entity_id: str) -> Entity:
        for e in self.entities:
            if e.id == entity_id:
                return e
        raise KeyError(entity_id)


# -- DialogRE ---------------------------------------------------------------------
def _speaker_tag(name: str, mapping: dict[str, str]) -> str:
    name = " ".join(name.split())
    if name not in mapping:
        mapping[name] = f"S{len(mapping) + 1}"
    return mapping[name]


def parse_turn_line(line: str, mapping: dict[str, str] | None = None) -> Turn:
    """``"Speaker 1, Speaker 2: text"`` → Turn with normalized speaker tags."""
    head, sep, text = line.partition(":")
    if not sep or not head.strip():
        raise CorpusError(f"malformed turn line {line!r}: expected 'Speaker: text'")
    names = [n.strip() for n in head.split(",") if n.strip()]
    if mapping is None:
        speakers = tuple(" ".join(n.split()) for n in names)
    else:
        speakers = tuple(_speaker_tag(n, mapping) for n in names)
    return Turn.from_text(speakers, text.strip())


def session_from_dialogre(item, index: int = 0, relation_schema: RelationSchema | None = None) -> DialogueSession:
    if not (isinstance(item, (list, tuple)) and len(item) == 2):
        raise CorpusError(f"item {index}: expected [turns, relations]")
    lines, rels = item
    if not isinstance(lines, list) or not all(isinstance(l, str) for l in lines):
        raise CorpusError(f"item {index}: turns must be a list of strings")
    mapping: dict[str, str] = {}
    try:
        turns = [parse_turn_line(line, mapping) for line in lines]
    except CorpusError as exc:
        raise CorpusError(f"item {index}: {exc}") from None
    display = {tag: name for name, tag in mapping.items()}
    entities: dict[str, Entity] = {tag: Entity(tag, name, True) for tag, name in display.items()}
    order = list(entities)
    gold = []
    for r in rels:
        try:
            x, y, labels = r["x"], r["y"], r["r"]
        except (KeyError, TypeError):
            raise CorpusError(f"item {index}: relation entry missing x/y/r") from None
        args = []
        for name, kind in ((x, r.get("x_type", "PER")), (y, r.get("y_type", "PER"))):
            key = " ".join(str(name).split())
            if key in mapping:
                args.append(mapping[key])
                continue
            if key not in entities:
                entities[key] = Entity(key, key, kind == "PER")
                order.append(key)
            args.append(key)
        if relation_schema is not None:
            for label in labels:
                if label not in relation_schema:
                    raise CorpusError(f"item {index}: relation label {label!r} absent from schema")
        triggers = r.get("t")
        triggers = None if triggers is None else tuple(t for t in triggers if t)
        gold.append(GoldRelation(args[0], args[1], tuple(labels), triggers))
    return DialogueSession(turns, [entities[k] for k in order], gold, None, str(index))


def load_dialogre(path, relation_schema: RelationSchema | None = None) -> list[DialogueSession]:
    """Load a DialogRE-format JSON file (list of ``[turns, relations]`` items)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise CorpusError("DialogRE file must contain a JSON list")
    return [session_from_dialogre(item, n, relation_schema) for n, item in enumerate(data)]


def dump_dialogre(sessions: Iterable[DialogueSession], path) -> None:
    Path(path).write_text(
        json.dumps([s.to_dialogre() for s in sessions], ensure_ascii=False, indent=1), encoding="utf-8"
    )


# -- MovieGraph-style clip files ----------------------------------------------------
MOVIEGRAPH_SECTIONS = ("entities", "attributes", "relations", "transcript")


def load_moviegraph_clip(path, relation_schema=None, attribute_schema=None) -> DialogueSession:
    """Read one clip file.

    Sections (tab-separated rows): ``[entities]`` id, name, human|object;
    ``[attributes]`` entity, subtype, value; ``[relations]`` src, dst, label;
    ``[transcript]`` ``Speaker: text`` lines.  Emotion and interaction rows
    are not part of the format.
    """
    section = None
    entities, attributes, gold, turns = [], defaultdict(dict), [], []
    name_to_id: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("[") and line.strip().endswith("]"):
            section = line.strip()[1:-1]
            if section not in MOVIEGRAPH_SECTIONS:
                raise CorpusError(f"{path}:{lineno}: unknown section {section!r}")
            continue
        cols = [c.strip() for c in line.split("\t")]
        if section == "entities":
            eid = cols[0]
            name = cols[1] if len(cols) > 1 and cols[1] else eid
            kind = cols[2] if len(cols) > 2 else "human"
            entities.append(Entity(eid, name, kind != "object"))
            name_to_id[name] = eid
        elif section == "attributes":
            if len(cols) != 3:
                raise CorpusError(f"{path}:{lineno}: expected entity, subtype, value")
            if attribute_schema is not None:
                attribute_schema.value_index(cols[1], cols[2])
            attributes[cols[0]][cols[1]] = cols[2]
        elif section == "relations":
            if len(cols) != 3:
                raise CorpusError(f"{path}:{lineno}: expected src, dst, label")
            if relation_schema is not None and cols[2] not in relation_schema:
                raise CorpusError(f"{path}:{lineno}: relation label {cols[2]!r} absent from schema")
            gold.append(GoldRelation(cols[0], cols[1], (cols[2],), None))
        elif section == "transcript":
            turn = parse_turn_line(line)
            turn = Turn(tuple(name_to_id.get(s, s) for s in turn.speakers), turn.tokens, turn.text)
            turns.append(turn)
        else:
            raise CorpusError(f"{path}:{lineno}: entry outside any section")
    session = DialogueSession(turns, entities, gold, dict(attributes) or None, Path(path).stem)
    session.validate(relation_schema)
    return session


# -- attribute sidecar ---------------------------------------------------------------
def load_attribute_sidecar(path, schema: AttributeSchema, sessions: Sequence[DialogueSession] | None = None):
    """TSV rows ``session_id  entity  subtype  value`` → ``{session: {entity: {subtype: value}}}``."""
    known = None
    if sessions is not None:
        known = {s.session_id: {e.id for e in s.entities} for s in sessions}
    out: dict[str, dict[str, dict[str, str]]] = defaultdict(lambda: defaultdict(dict))
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = [c.strip() for c in raw.split("\t")]
        if len(cols) != 4:
            raise CorpusError(f"{path}:{lineno}: expected 4 tab-separated columns")
        sid, entity, subtype, value = cols
        if subtype not in schema.subtypes:
            raise CorpusError(f"{path}:{lineno}: unknown attribute subtype {subtype!r}")
        try:
            schema.value_index(subtype, value)
        except SchemaError:
            raise CorpusError(f"{path}:{lineno}: value {value!r} outside the {subtype!r} domain") from None
        if value == schema.unknown_value:
            continue
        if known is not None:
            if sid not in known:
                raise CorpusError(f"{path}:{lineno}: unknown session {sid!r}")
            if entity not in known[sid]:
                raise CorpusError(f"{path}:{lineno}: unknown entity {entity!r} in session {sid!r}")
        out[sid][entity][subtype] = value
    return {sid: dict(ents) for sid, ents in out.items()}


def attach_attributes(sessions: Sequence[DialogueSession], sidecar: Mapping) -> None:
    for s in sessions:
        if s.session_id in sidecar:
            s.gold_attributes = {e: dict(v) for e, v in sidecar[s.session_id].items()}


def read_jsonl_records(path_or_lines) -> list[dict]:
    """Parse line-delimited JSON (path or iterable of lines); blank lines skipped."""
    if isinstance(path_or_lines, (str, Path)):
        lines = Path(path_or_lines).read_text(encoding="utf-8").splitlines()
    else:
        lines = path_or_lines
    return [json.loads(l) for l in lines if l.strip()]


# -- metrics -----------------------------------------------------------------------
@dataclass
class EvalReport:
    per_label: dict[str, dict[str, float]]
    macro_f1: float
    macro_f1_c: float | None = None
    support: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "macro_f1_c": self.macro_f1_c,
            "per_label": self.per_label,
            "support": self.support,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        width = max([len("label")] + [len(l) for l in self.per_label])
        rows = [f"{'label':<{width}}  {'P':>6}  {'R':>6}  {'F1':>6}  {'n':>5}"]
        for label in sorted(self.per_label):
            s = self.per_label[label]
            rows.append(
                f"{label:<{width}}  {s['precision']:6.4f}  {s['recall']:6.4f}  {s['f1']:6.4f}"
                f"  {self.support.get(label, 0):5d}"
            )
        rows.append(f"{'macro F1':<{width}}  {self.macro_f1:6.4f}")
        if self.macro_f1_c is not None:
            rows.append(f"{'macro F1c':<{width}}  {self.macro_f1_c:6.4f}")
        return "\n".join(rows) + "\n"


def _per_label_scores(pairs) -> tuple[dict, dict, float]:
    """``pairs``: iterable of (gold label set, predicted label)."""
    tp, fp, fn, support = Counter(), Counter(), Counter(), Counter()
    for gold, pred in pairs:
        for g in gold:
            support[g] += 1
        if pred in gold:
            tp[pred] += 1
        else:
            fp[pred] += 1
            for g in gold:
                fn[g] += 1
    per_label = {}
    for label in support:
        p_den = tp[label] + fp[label]
        r_den = tp[label] + fn[label]
        precision = tp[label] / p_den if p_den else 0.0
        recall = tp[label] / r_den if r_den else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_label[label] = {"precision": precision, "recall": recall, "f1": f1}
    macro = float(np.mean([v["f1"] for v in per_label.values()])) if per_label else 0.0
    return per_label, dict(support), macro


def _gold_items(gold):
    """Normalize gold to ``[(session key, GoldRelation)]``."""
    if isinstance(gold, Mapping):
        return [(k, r) for k, rels in gold.items() for r in rels]
    return [(s.session_id, r) for s in gold for r in s.gold_relations]


def score_predictions(predictions: Mapping, gold) -> EvalReport:
    pairs = []
    for sid, rel in _gold_items(gold):
        try:
            pred = predictions[sid][(rel.subject, rel.object)]
        except KeyError:
            raise CorpusError(f"missing prediction for ({rel.subject}, {rel.object}) in session {sid!r}") from None
        pairs.append((frozenset(rel.labels), pred))
    per_label, support, macro = _per_label_scores(pairs)
    return EvalReport(per_label, macro, None, support)


def macro_f1(predictions: Mapping, gold) -> float:
    """Macro F1 over labels with gold support.

    ``predictions`` maps session id → {(subject, object): label}; ``gold`` is a
    list of sessions or a mapping session id → list of GoldRelation.
    A prediction matching any gold label of a pair is a true positive for that
    label; a miss is a false positive for the prediction and a false negative
    for every gold label of the pair.
    """
    return score_predictions(predictions, gold).macro_f1


def _mentions(turn: Turn, entity: Entity) -> bool:
    if entity.id in turn.speakers:
        return True
    low = turn.lowered
    for name in {entity.id, entity.display_name}:
        parts = tuple(t.lower() for t in tokenize(name))
        n = len(parts)
        if n and any(low[k : k + n] == parts for k in range(len(low) - n + 1)):
            return True
    return False


def _contains(turn: Turn, trigger: str) -> bool:
    return trigger.lower() in turn.text.lower() or trigger.lower() in " ".join(turn.lowered)


def evaluation_turn(session: DialogueSession, rel: GoldRelation) -> int:
    """Earliest 0-based turn by which both arguments and one trigger have appeared.

    Relations without triggers, or whose condition is never met, use the final turn.
    """
    last = len(session.turns) - 1
    if not rel.triggers:
        return last
    ents = {e.id: e for e in session.entities}
    seen_x = seen_y = seen_t = False
    for t, turn in enumerate(session.turns):
        seen_x = seen_x or _mentions(turn, ents[rel.subject])
        seen_y = seen_y or _mentions(turn, ents[rel.object])
        seen_t = seen_t or any(_contains(turn, trig) for trig in rel.triggers)
        if seen_x and seen_y and seen_t:
            return t
    return last


def f1_c(per_turn_predictions: Mapping, sessions: Sequence[DialogueSession]) -> float:
    """Conversational macro F1.

    ``per_turn_predictions`` maps session id → list (one per turn) of
    {(subject, object): label}.  Each gold relation is scored with the
    prediction made at :func:`evaluation_turn`.
    """
    if not any(r.triggers is not None for s in sessions for r in s.gold_relations):
        raise CorpusError("trigger annotations are required for F1c")
    pairs = []
    for s in sessions:
        turns = per_turn_predictions[s.session_id]
        for rel in s.gold_relations:
            t = evaluation_turn(s, rel)
            try:
                pred = turns[t][(rel.subject, rel.object)]
            except (KeyError, IndexError):
                raise CorpusError(
                    f"missing turn-{t} prediction for ({rel.subject}, {rel.object}) in session {s.session_id!r}"
                ) from None
            pairs.append((frozenset(rel.labels), pred))
    return _per_label_scores(pairs)[2]


def split_corpus(sessions: Sequence, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Deterministic shuffled split into train/validation/test lists."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    order = np.random.default_rng(seed).permutation(len(sessions))
    n_train = int(round(fractions[0] * len(sessions)))
    n_val = int(round(fractions[1] * len(sessions)))
    pick = lambda idx: [sessions[i] for i in idx]
    return pick(order[:n_train]), pick(order[n_train : n_train + n_val]), pick(order[n_train + n_val :])
