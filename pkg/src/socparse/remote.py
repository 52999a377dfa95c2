"""Out-of-process alpha scorers over newline-delimited JSON.

The client talks to a child process (stdio) or a TCP endpoint.  Every request
is one JSON object per line and carries an integer ``id`` that the response
must echo:

* ``{"id": n, "op": "score", "dialogue": [tokens], "pg": [flattened tokens]}``
  answered by ``{"id": n, "energy": x}``
* ``{"id": n, "op": "classify", "dialogue": [tokens], "slots": {slot_id: [values]}}``
  answered by ``{"id": n, "slots": {slot_id: {value: prob}}}``

Requests also carry ``turns`` (speakers and raw text per turn) and
``entities`` (id, display name, human flag) so a server can rebuild the
inputs its own featurization needs.  A response may instead hold
``{"id": n, "error": message}``.  Any timeout, malformed line, id mismatch or
server-reported error raises :class:`ScorerError`; there is no fallback.
"""

from __future__ import annotations

import json
import logging
import math
import os
import select
import socket
import subprocess
import sys
import threading
import time
from typing import IO, Sequence

import numpy as np

from .corpus import Turn, dialogue_tokens
from .schema import AttributeSchema, RelationSchema
from .scorer import ScorerError
from .socgraph import CLS, UNSET, Entity, ParseGraph, SocAoG, flatten, make_aog, new_parse_graph

log = logging.getLogger(__name__)

DEFAULT_DEADLINE = 10.0


def _turns_doc(dialogue_prefix: Sequence[Turn]) -> list[dict]:
    return [{"speakers": list(t.speakers), "text": t.text or " ".join(t.tokens)} for t in dialogue_prefix]


def _entities_doc(aog: SocAoG) -> list[dict]:
    return [{"id": e.id, "name": e.display_name, "human": bool(e.is_human)} for e in aog.entities]


def _slot_domain(aog: SocAoG, slot) -> list[str]:
    if slot.kind == "attr":
        sub = aog.attribute_schema.subtypes[slot.b]
        return list(aog.attribute_schema.domain[sub])
    return list(aog.relation_schema.labels)


class _Channel:
    """Line-oriented duplex byte stream with a read deadline."""

    def __init__(self, read_fd: int, write: IO[bytes]):
        self.read_fd = read_fd
        self.write = write
        self.buffer = b""

    def send(self, line: bytes) -> None:
        try:
            self.write.write(line)
            self.write.flush()
        except (OSError, ValueError) as exc:
            raise ScorerError(f"scorer connection closed while sending: {exc}") from exc

    def readline(self, deadline: float) -> bytes:
        end = time.monotonic() + deadline
        while b"\n" not in self.buffer:
            remaining = end - time.monotonic()
            if remaining <= 0:
                raise ScorerError(f"scorer did not answer within {deadline:g} s")
            ready, _, _ = select.select([self.read_fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(self.read_fd, 65536)
            if not chunk:
                raise ScorerError("scorer closed the connection")
            self.buffer += chunk
        line, _, self.buffer = self.buffer.partition(b"\n")
        return line


class ExternalScorer:
    """Alpha scorer backed by a remote process; requests are serialized per connection."""

    factorized = False

    def __init__(self, command: Sequence[str] | None = None, address: tuple[str, int] | None = None,
                 deadline: float = DEFAULT_DEADLINE):
        if (command is None) == (address is None):
            raise ValueError("give exactly one of command or address")
        if deadline <= 0:
            raise ValueError("deadline must be positive")
        self.deadline = float(deadline)
        self.lock = threading.Lock()
        self.next_id = 0
        self.proc = None
        self.sock = None
        try:
            if command is not None:
                self.proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
                self.channel = _Channel(self.proc.stdout.fileno(), self.proc.stdin)
            else:
                self.sock = socket.create_connection(address, timeout=self.deadline)
                self.channel = _Channel(self.sock.fileno(), self.sock.makefile("wb"))
        except OSError as exc:
            raise ScorerError(f"cannot reach scorer: {exc}") from exc

    def close(self) -> None:
        if self.proc is not None:
            if self.proc.stdin:
                self.proc.stdin.close()
            try:
                self.proc.wait(timeout=self.deadline)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
            if self.proc.stdout:
                self.proc.stdout.close()
            self.proc = None
        if self.sock is not None:
            self.channel.write.close()
            self.sock.close()
            self.sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, doc: dict) -> dict:
        with self.lock:
            self.next_id += 1
            rid = self.next_id
            doc = {"id": rid, **doc}
            self.channel.send((json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8"))
            raw = self.channel.readline(self.deadline)
        try:
            resp = json.loads(raw)
        except ValueError as exc:
            raise ScorerError(f"malformed scorer response: {raw[:200]!r}") from exc
        if not isinstance(resp, dict) or resp.get("id") != rid:
            raise ScorerError(f"scorer response does not answer request {rid}: {raw[:200]!r}")
        if "error" in resp:
            raise ScorerError(f"scorer reported an error: {resp['error']}")
        return resp

    def score(self, dialogue_prefix: Sequence[Turn], pg: ParseGraph) -> float:
        resp = self.request({
            "op": "score",
            "dialogue": dialogue_tokens(dialogue_prefix),
            "pg": flatten(pg),
            "turns": _turns_doc(dialogue_prefix),
            "entities": _entities_doc(pg.aog),
        })
        energy = resp.get("energy")
        if isinstance(energy, bool) or not isinstance(energy, (int, float)) or not math.isfinite(energy) or energy < 0:
            raise ScorerError(f"scorer returned an invalid energy: {energy!r}")
        return float(energy)

    def classify(self, dialogue_prefix: Sequence[Turn], aog: SocAoG) -> dict:
        slots = {s.key(aog): _slot_domain(aog, s) for s in aog.slots}
        resp = self.request({
            "op": "classify",
            "dialogue": dialogue_tokens(dialogue_prefix),
            "slots": slots,
            "turns": _turns_doc(dialogue_prefix),
            "entities": _entities_doc(aog),
        })
        got = resp.get("slots")
        if not isinstance(got, dict):
            raise ScorerError("classify response has no slots object")
        out = {}
        for s in aog.slots:
            dist = got.get(s.key(aog))
            if not isinstance(dist, dict):
                raise ScorerError(f"classify response is missing slot {s.key(aog)}")
            try:
                p = np.array([float(dist.get(v, 0.0)) for v in _slot_domain(aog, s)])
            except (TypeError, ValueError) as exc:
                raise ScorerError(f"non-numeric probability for slot {s.key(aog)}") from exc
            if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
                raise ScorerError(f"slot {s.key(aog)} is not a distribution")
            out[s] = p
        return out


# -- reference server ------------------------------------------------------------------------
def unflatten(tokens: Sequence[str], aog: SocAoG) -> ParseGraph:
    """Inverse of :func:`socparse.socgraph.flatten` for a known grammar (the dialogue part is skipped)."""
    rs, ats = aog.relation_schema, aog.attribute_schema
    K = aog.K
    n_tail = 3 * K * (K - 1) + K + sum(aog.human) * aog.M + 1
    if len(tokens) < n_tail + 2 or tokens[0] != CLS:
        raise ValueError("token list is too short for this grammar")
    tail = list(tokens[len(tokens) - n_tail:])
    pg = new_parse_graph(aog)
    pos = 0
    for s in aog.rel_slots:
        src, label, dst = tail[pos: pos + 3]
        pos += 3
        if (src, dst) != (aog.entities[s.a].id, aog.entities[s.b].id):
            raise ValueError(f"unexpected relation triple {src} {label} {dst}")
        pg.rels[s.a, s.b] = rs.unanswerable_index if label == CLS else rs.index(label)
    for i, e in enumerate(aog.entities):
        if tail[pos] != e.id:
            raise ValueError(f"expected attribute block of {e.id}, got {tail[pos]}")
        pos += 1
        if aog.human[i]:
            for m, sub in enumerate(ats.subtypes):
                v = tail[pos]
                pos += 1
                pg.attrs[i, m] = UNSET if v == CLS else ats.value_index(sub, v)
    return pg


def _request_inputs(doc: dict, rs: RelationSchema, ats: AttributeSchema):
    if "turns" in doc:
        turns = tuple(Turn.from_text(tuple(t.get("speakers", ())), t["text"]) for t in doc["turns"])
    else:
        turns = (Turn((), tuple(doc.get("dialogue", ())), " ".join(doc.get("dialogue", ()))),)
    if "entities" in doc:
        entities = [Entity(e["id"], e.get("name", ""), bool(e.get("human", True))) for e in doc["entities"]]
    else:
        raise ValueError("request has no entities list")
    return turns, make_aog(entities, rs, ats)


def handle_request(doc: dict, scorer, rs: RelationSchema, ats: AttributeSchema) -> dict:
    rid = doc.get("id")
    try:
        turns, aog = _request_inputs(doc, rs, ats)
        if doc.get("op") == "score":
            pg = unflatten(doc["pg"], aog)
            return {"id": rid, "energy": float(scorer.score(turns, pg))}
        if doc.get("op") == "classify":
            probs = scorer.classify(turns, aog)
            slots = {}
            for s in aog.slots:
                p = np.asarray(probs[s], dtype=float)
                p = p / p.sum()
                slots[s.key(aog)] = dict(zip(_slot_domain(aog, s), map(float, p)))
            return {"id": rid, "slots": slots}
        return {"id": rid, "error": f"unknown op {doc.get('op')!r}"}
    except (KeyError, ValueError, TypeError) as exc:
        return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(scorer, rs: RelationSchema, ats: AttributeSchema, rfile: IO[bytes], wfile: IO[bytes]) -> None:
    """Answer requests line by line until end of input."""
    for raw in rfile:
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
            resp = handle_request(doc, scorer, rs, ats) if isinstance(doc, dict) else {"id": None, "error": "not an object"}
        except ValueError as exc:
            resp = {"id": None, "error": f"malformed request: {exc}"}
        wfile.write((json.dumps(resp, separators=(",", ":")) + "\n").encode("utf-8"))
        wfile.flush()


def serve_tcp(scorer, rs: RelationSchema, ats: AttributeSchema, host: str = "127.0.0.1", port: int = 0,
              ready=None, max_connections: int | None = None) -> None:
    """Serve connections one at a time; ``ready(port)`` is called once listening."""
    with socket.create_server((host, port)) as srv:
        if ready is not None:
            ready(srv.getsockname()[1])
        served = 0
        while max_connections is None or served < max_connections:
            conn, _ = srv.accept()
            with conn, conn.makefile("rb") as rf, conn.makefile("wb") as wf:
                serve(scorer, rs, ats, rf, wf)
            served += 1


def main(argv: Sequence[str] | None = None) -> int:
    """Stdio reference server around a saved model's built-in scorer."""
    import argparse

    from .training import load_model

    ap = argparse.ArgumentParser(prog="python -m socparse.remote", description="reference alpha-scorer server")
    ap.add_argument("--model", required=True, help="model file written by `socparse train`")
    ap.add_argument("--tcp", type=int, default=None, help="listen on this TCP port instead of stdio")
    args = ap.parse_args(argv)
    model, scorer, _ = load_model(args.model)
    if scorer is None:
        print("model file has no scorer", file=sys.stderr)
        return 2
    rs, ats = model.relation_schema, model.attribute_schema
    if args.tcp is not None:
        serve_tcp(scorer, rs, ats, port=args.tcp)
    else:
        serve(scorer, rs, ats, sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
