"""``socparse`` command line: train, infer, eval, oracle-check, trace, synth.

Every option can also come from a TOML file (``--config``; top-level keys
apply to all subcommands, a ``[<subcommand>]`` table to one) or from a
``SOCPARSE_<OPTION>`` environment variable.  Precedence is flags, then
environment, then config file, then built-in defaults.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4
ENV_PREFIX = "SOCPARSE_"

log = logging.getLogger("socparse")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class Opt:
    dest: str
    type: Callable
    default: Any
    help: str
    flag: str | None = None  # for booleans: the flag that sets the non-default value
    choices: tuple | None = None

    @property
    def is_bool(self) -> bool:
        return self.type is _bool

    def flag_name(self) -> str:
        if self.flag:
            return self.flag
        return "--" + self.dest.replace("_", "-")


def _opts(*items) -> list[Opt]:
    return [Opt(*item) if isinstance(item, tuple) else item for item in items]


SCHEMA_CHOICES = ("dialogre", "moviegraph", "kinship")
FORMAT_CHOICES = ("dialogre", "moviegraph")

COMMON = _opts(
    ("seed", int, 0, "random seed"),
    ("log_level", str, "warning", "logging level", None, ("debug", "info", "warning", "error")),
)
SAMPLER = _opts(
    ("q1_prob", float, 0.7, "probability of a relation move"),
    ("sweeps", int, 1, "sweep count w of the step budget"),
    ("max_steps", int, 20000, "step cap S_max per turn"),
    ("burn_in", float, 0.2, "fraction of steps discarded before estimation"),
    Opt("warm_start", _bool, True, "do not carry the estimate across turns", "--no-warm-start"),
    Opt("classify_init", _bool, True, "do not fill unknown slots from the scorer", "--no-classify-init"),
    Opt("hastings", _bool, False, "apply the proposal-ratio correction", "--hastings"),
    ("engine", str, "auto", "sampler engine", None, ("auto", "compiled", "python")),
    Opt("use_alpha", _bool, True, "switch the dialogue term off", "--no-alpha"),
    Opt("use_beta", _bool, True, "switch the relation-given-attributes term off", "--no-beta"),
    Opt("use_gamma", _bool, True, "switch the attribute-given-relation terms off", "--no-gamma"),
    Opt("reduced", _bool, False, "use the attribute-free triangle model", "--reduced"),
    ("beta_weight", float, None, "override the beta weight of the model"),
    ("gamma_l_weight", float, None, "override the left gamma weight"),
    ("gamma_r_weight", float, None, "override the right gamma weight"),
    ("scorer_command", str, None, "run this command as an external scorer (stdio)"),
    ("scorer_address", str, None, "connect to an external scorer at host:port"),
    ("scorer_deadline", float, 10.0, "seconds to wait for each external scorer reply"),
)
CORPUS = _opts(
    ("corpus", str, None, "corpus file (DialogRE JSON) or clip directory/file (MovieGraph)"),
    ("format", str, "dialogre", "corpus format", None, FORMAT_CHOICES),
    ("sidecar", str, None, "attribute sidecar TSV"),
)
SESSION_INPUT = _opts(
    ("model", str, None, "model file written by `socparse train`"),
    ("input", str, "-", "turn lines `Speaker: text` (file or - for stdin)"),
    ("entities", str, None, "comma list of entity ids, each optionally `id=Display Name`"),
    ("non_human", str, None, "comma list of entity ids that are not persons"),
)

COMMANDS: dict[str, list[Opt]] = {
    "train": COMMON + CORPUS + _opts(
        ("schema", str, "dialogre", "bundled schema name or schema file path"),
        ("out", str, None, "model file to write"),
        ("epochs", int, 5, "contrastive epochs (0 keeps the count fit)"),
        ("lr", float, 0.01, "learning rate"),
        ("margin", float, 1.0, "hinge margin"),
        ("negatives", int, 1, "negatives per positive"),
        ("smoothing", float, 0.1, "additive pseudo-count"),
        ("batch_size", int, 32, "examples per update"),
        ("optimizer", str, "momentum", "optimizer", None, ("momentum", "adam")),
        ("momentum", float, 0.9, "momentum coefficient"),
        Opt("learn_weights", _bool, False, "also learn the term weights", "--learn-weights"),
        ("beta", float, 1.0, "initial beta weight"),
        ("gamma_l", float, 1.0, "initial left gamma weight"),
        ("gamma_r", float, 1.0, "initial right gamma weight"),
        Opt("reduced", _bool, False, "train the attribute-free triangle model", "--reduced"),
        ("l2", float, 1.0, "L2 strength of the scorer pre-fit"),
        Opt("prefit", _bool, True, "skip the scorer pre-fit", "--no-prefit"),
        ("min_feature_count", int, 1, "drop scorer features seen fewer times"),
        Opt("use_alpha", _bool, True, "train without the dialogue term", "--no-alpha"),
        Opt("use_beta", _bool, True, "train without the beta term", "--no-beta"),
        Opt("use_gamma", _bool, True, "train without the gamma terms", "--no-gamma"),
        Opt("planted_check", _bool, False, "compare beta rows with the planted kinship tables", "--planted-check"),
    ),
    "infer": COMMON + SESSION_INPUT + SAMPLER + _opts(
        ("emit", str, "jsonl", "output format", None, ("jsonl", "dot")),
        ("out_dir", str, ".", "directory for pg_<turn>.dot files"),
        ("output", str, "-", "JSONL destination (file or - for stdout)"),
    ),
    "eval": COMMON + CORPUS + _opts(
        ("model", str, None, "model file written by `socparse train`"),
        ("report", str, None, "also write the JSON report here"),
        ("table", str, None, "write the aligned text table here"),
        ("predictions", str, None, "write per-session prediction records (JSONL) here"),
        ("workers", int, 1, "worker processes"),
    ) + SAMPLER,
    "oracle-check": COMMON + _opts(
        ("instances", int, 10, "number of standard K=3 instances"),
        ("seeds", int, 20, "chains per instance"),
        ("threshold", float, 0.05, "per-slot L1 threshold"),
        ("min_pass_rate", float, 1.0, "fraction of chains per instance that must pass"),
        ("max_steps", int, 400000, "steps per chain"),
        ("burn_in", float, 0.2, "fraction of steps discarded"),
        ("q1_prob", float, 0.7, "probability of a relation move"),
        ("scale", float, 0.35, "spread of the random tables"),
        Opt("hastings", _bool, True, "use the uncorrected acceptance rule", "--no-hastings"),
        Opt("flat", _bool, False, "switch every energy term off", "--flat"),
        ("cap", int, 10**6, "largest support to enumerate"),
    ),
    "trace": COMMON + SESSION_INPUT + SAMPLER + _opts(
        ("output", str, "-", "trace destination (file or - for stdout)"),
        Opt("summary_only", _bool, False, "emit only the per-turn summary records", "--summary-only"),
    ),
    "synth": COMMON + _opts(
        ("n", int, 100, "number of sessions"),
        ("out", str, None, "DialogRE JSON file to write"),
        ("sidecar", str, None, "attribute sidecar TSV to write"),
        ("entities_per_session", int, 6, "entities per session"),
        ("n_turns", int, 20, "minimum turns per session"),
        ("p_reveal", float, 0.8, "probability that a related pair is mentioned"),
        ("p_adult", float, 0.5, "probability that an entity is an adult"),
        Opt("revelation", _bool, False, "write information-revelation sessions", "--revelation"),
        ("reveal_turn", int, 5, "turn of the revelation (with --revelation)"),
    ),
}
REQUIRED = {
    "train": ("corpus", "out"),
    "infer": ("model",),
    "eval": ("model", "corpus"),
    "oracle-check": (),
    "trace": ("model",),
    "synth": ("out", "sidecar"),
}
HELP = {
    "train": "fit tables and the built-in scorer on an annotated corpus",
    "infer": "parse a dialogue turn by turn, emitting one record per turn",
    "eval": "score a model on an annotated corpus (macro F1 and F1c)",
    "oracle-check": "compare sampler marginals with exact enumeration",
    "trace": "export per-step sampler telemetry for a dialogue",
    "synth": "write a synthetic kinship corpus with its attribute sidecar",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socparse", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", default=None, help="TOML file with option values")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", default=argparse.SUPPRESS, help="TOML file with option values")
        for o in opts:
            if o.is_bool:
                p.add_argument(o.flag_name(), dest=o.dest, action="store_const", const=not o.default,
                               default=argparse.SUPPRESS, help=o.help)
            else:
                p.add_argument(o.flag_name(), dest=o.dest, type=o.type, choices=o.choices,
                               default=argparse.SUPPRESS, help=f"{o.help} (default: {o.default})")
    return parser


def _coerce(opt: Opt, value, origin: str):
    if value is None:
        return None
    try:
        v = opt.type(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{origin}: bad value for {opt.dest}: {value!r}") from exc
    if opt.choices and v not in opt.choices:
        raise UsageError(f"{origin}: {opt.dest} must be one of {', '.join(opt.choices)}")
    return v


def resolve_settings(command: str, flags: dict, environ: dict | None = None, config_path: str | None = None) -> dict:
    """Merge defaults, config file, environment and flags (later wins)."""
    opts = {o.dest: o for o in COMMANDS[command]}
    settings = {d: o.default for d, o in opts.items()}
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"config file is not valid TOML: {exc}") from exc
        layers = [{k: v for k, v in doc.items() if not isinstance(v, dict)}, doc.get(command, {})]
        for n, layer in enumerate(layers):
            for key, value in layer.items():
                dest = key.replace("-", "_")
                if dest not in opts:
                    if n == 0:
                        continue  # shared keys may target other subcommands
                    raise UsageError(f"config file: unknown option {key!r} for {command}")
                settings[dest] = _coerce(opts[dest], value, "config file")
    environ = os.environ if environ is None else environ
    for dest, o in opts.items():
        key = ENV_PREFIX + dest.upper()
        if key in environ:
            settings[dest] = _coerce(o, environ[key], key)
    for dest, value in flags.items():
        if dest in opts:
            settings[dest] = value
    missing = [d for d in REQUIRED[command] if settings.get(d) in (None, "")]
    if missing:
        raise UsageError(f"{command}: missing required option(s): "
                         + ", ".join(opts[d].flag_name() for d in missing))
    return settings


# -- shared helpers --------------------------------------------------------------------------
def _schemas(name: str):
    from .schema import fixture_path, load_relation_schema, load_attribute_schema

    path = fixture_path(f"{name}.schema") if name in SCHEMA_CHOICES else Path(name)
    if not Path(path).is_file():
        raise DataError(f"schema file not found: {name}")
    return load_relation_schema(Path(path)), load_attribute_schema(Path(path))


def _load_corpus(st: dict, rs, ats):
    from .corpus import attach_attributes, load_attribute_sidecar, load_dialogre, load_moviegraph_clip

    path = Path(st["corpus"])
    if not path.exists():
        raise DataError(f"corpus not found: {path}")
    if st["format"] == "dialogre":
        sessions = load_dialogre(path, rs)
    else:
        files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
        sessions = [load_moviegraph_clip(p, rs, ats) for p in files]
    if st.get("sidecar"):
        attach_attributes(sessions, load_attribute_sidecar(st["sidecar"], ats, sessions))
    for s in sessions:
        s.validate(rs)
    return sessions


def _load_model(st: dict):
    from .training import load_model

    path = Path(st["model"])
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    model, scorer, _ = load_model(path)
    if st.get("reduced") and not model.reduced:
        if model.triangle_table is None:
            raise DataError("the model has no triangle table; train it with --reduced")
        from dataclasses import replace

        model = replace(model, reduced=True)
    model = model.with_switches(st["use_alpha"], st["use_beta"], st["use_gamma"])
    model = model.with_weights(st["beta_weight"], st["gamma_l_weight"], st["gamma_r_weight"])
    return model, _scorer(st, scorer)


def _scorer(st: dict, built_in):
    import shlex

    from .remote import ExternalScorer

    if st.get("scorer_command") and st.get("scorer_address"):
        raise UsageError("give at most one of --scorer-command and --scorer-address")
    if st.get("scorer_command"):
        return ExternalScorer(command=shlex.split(st["scorer_command"]), deadline=st["scorer_deadline"])
    if st.get("scorer_address"):
        host, _, port = st["scorer_address"].rpartition(":")
        if not host or not port.isdigit():
            raise UsageError("--scorer-address must look like host:port")
        return ExternalScorer(address=(host, int(port)), deadline=st["scorer_deadline"])
    return built_in


def _sampler_config(st: dict, seed_offset: int = 0):
    from .sampler import SamplerConfig

    try:
        return SamplerConfig(
            q1_prob=st["q1_prob"], sweeps=st["sweeps"], max_steps=st["max_steps"], burn_in=st["burn_in"],
            seed=st["seed"] + seed_offset, warm_start=st["warm_start"], classify_init=st["classify_init"],
            hastings_correction=st["hastings"], engine=st["engine"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _open_out(path: str):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _entity_list(spec: str | None, non_human: str | None):
    from .socgraph import Entity

    objects = {x.strip() for x in (non_human or "").split(",") if x.strip()}
    entities = []
    for item in (spec or "").split(","):
        item = item.strip()
        if not item:
            continue
        eid, _, name = item.partition("=")
        entities.append(Entity(eid.strip(), name.strip(), eid.strip() not in objects))
    ids = [e.id for e in entities]
    if len(set(ids)) != len(ids):
        raise UsageError("--entities lists an id twice")
    unknown = objects - set(ids)
    if unknown:
        raise UsageError(f"--non-human names ids missing from --entities: {', '.join(sorted(unknown))}")
    return entities


def _input_lines(path: str):
    if path == "-":
        return iter(sys.stdin.readline, "")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input not found: {path}")
    return iter(p.read_text(encoding="utf-8").splitlines(keepends=True))


def _session_stream(st: dict):
    """``(entities, iterator of Turn)``; entities default to the speakers of a file input."""
    from .corpus import CorpusError, parse_turn_line

    entities = _entity_list(st["entities"], st["non_human"])
    lines = _input_lines(st["input"])
    if not entities:
        if st["input"] == "-":
            raise UsageError("streaming from stdin needs --entities")
        lines = [l for l in lines if l.strip()]
        seen = []
        for l in lines:
            for s in parse_turn_line(l).speakers:
                if s not in seen:
                    seen.append(s)
        entities = _entity_list(",".join(seen), st["non_human"])
    lookup = {}
    for e in entities:
        lookup[e.id] = e.id
        lookup.setdefault(e.display_name, e.id)

    def turns():
        for n, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                turn = parse_turn_line(line.rstrip("\n"))
            except CorpusError as exc:
                raise DataError(f"input line {n}: {exc}") from exc
            try:
                speakers = tuple(lookup[s] for s in turn.speakers)
            except KeyError as exc:
                raise DataError(f"input line {n}: unknown speaker {exc.args[0]!r}") from None
            yield type(turn)(speakers, turn.tokens, turn.text)

    return entities, turns()


def _marginals(aog, samples) -> dict:
    from .sampler import slot_marginals

    rs = aog.relation_schema
    out: dict = {}
    if len(samples) == 0:
        return out
    margs = slot_marginals(aog, samples)
    for slot, p in zip(aog.slots, margs):
        if slot.kind != "rel":
            continue
        src, dst = aog.entities[slot.a].id, aog.entities[slot.b].id
        out.setdefault(src, {})[dst] = {rs.labels[k]: float(p[k]) for k in np.flatnonzero(p)}
    return out


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# -- subcommands ----------------------------------------------------------------------------
def cmd_train(st: dict) -> int:
    from .synthetic import planted_beta_error
    from .training import TrainConfig, save_model, train

    rs, ats = _schemas(st["schema"])
    sessions = _load_corpus(st, rs, ats)
    if not sessions:
        raise DataError("the corpus is empty")
    try:
        tc = TrainConfig(
            lr=st["lr"], epochs=st["epochs"], margin=st["margin"], negatives_per_positive=st["negatives"],
            smoothing=st["smoothing"], seed=st["seed"], batch_size=st["batch_size"], optimizer=st["optimizer"],
            momentum=st["momentum"], learn_weights=st["learn_weights"], beta=st["beta"], gamma_l=st["gamma_l"],
            gamma_r=st["gamma_r"], reduced=st["reduced"], l2=st["l2"], prefit_scorer=st["prefit"],
            min_feature_count=st["min_feature_count"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    switches = {"alpha": st["use_alpha"], "beta": st["use_beta"], "gamma": st["use_gamma"]}
    result = train(sessions, rs, ats, tc, switches)
    for epoch, loss in enumerate(result.losses, 1):
        print(f"epoch {epoch} loss {loss:.6f}", flush=True)
    save_model(st["out"], result.model, result.scorer, tc)
    print(f"wrote {st['out']}")
    if st["planted_check"]:
        if rs.fingerprint() != _schemas("kinship")[0].fingerprint():
            raise UsageError("--planted-check needs the kinship schema")
        err = planted_beta_error(result.model)
        ok = err <= 0.1
        print(f"planted beta rows: max L1 {err:.4f} ({'pass' if ok else 'FAIL'} at 0.1)")
        if not ok:
            return EXIT_VERIFY
    return EXIT_OK


def _open_session(st: dict):
    from .sampler import ChainState
    from .socgraph import SocAoG

    model, scorer = _load_model(st)
    entities, turns = _session_stream(st)
    aog = SocAoG(tuple(entities), model.relation_schema, model.attribute_schema)
    state = ChainState.start(aog, st["seed"])
    return model, scorer, aog, state, turns


def cmd_infer(st: dict) -> int:
    from .sampler import parse_turn
    from .socgraph import to_dot

    model, scorer, aog, state, turns = _open_session(st)
    config = _sampler_config(st)
    out, close = _open_out(st["output"]) if st["emit"] == "jsonl" else (sys.stdout, False)
    if st["emit"] == "dot":
        Path(st["out_dir"]).mkdir(parents=True, exist_ok=True)
    try:
        for turn in turns:
            pg, tt = parse_turn(state, turn, scorer, model, config)
            if st["emit"] == "jsonl":
                record = {
                    "turn": tt.turn,
                    "speakers": list(turn.speakers),
                    "text": turn.text,
                    "pg": pg.to_dict(),
                    "marginals": _marginals(aog, tt.samples),
                    "acceptance_rate": tt.acceptance_rate,
                    "steps": tt.steps,
                }
                out.write(_dumps(record) + "\n")
            else:
                path = Path(st["out_dir"]) / f"pg_{tt.turn}.dot"
                path.write_text(to_dot(pg, f"pg_{tt.turn}"), encoding="utf-8")
                out.write(f"{path}\n")
            out.flush()
    finally:
        if close:
            out.close()
        if hasattr(scorer, "close"):
            scorer.close()
    return EXIT_OK


def cmd_trace(st: dict) -> int:
    from .sampler import SamplerTrace, parse_turn

    model, scorer, aog, state, turns = _open_session(st)
    config = _sampler_config(st)
    trace = SamplerTrace(aog)
    out, close = _open_out(st["output"])
    try:
        for turn in turns:
            _, tt = parse_turn(state, turn, scorer, model, config, trace)
            for rec in tt.records():
                if st["summary_only"] and not rec.get("summary"):
                    continue
                out.write(_dumps(rec) + "\n")
            out.flush()
    finally:
        if close:
            out.close()
        if hasattr(scorer, "close"):
            scorer.close()
    return EXIT_OK


_WORKER: dict = {}


def _eval_init(st: dict) -> None:
    _WORKER["model"], _WORKER["scorer"] = _load_model(st)
    _WORKER["st"] = st


def _eval_session(job):
    from .sampler import parse_session

    n, session = job
    model, scorer, st = _WORKER["model"], _WORKER["scorer"], _WORKER["st"]
    graphs, _ = parse_session(session, scorer, model, _sampler_config(st, n))
    pairs = [(r.subject, r.object) for r in session.gold_relations]
    per_turn = [{p: pg.relation(*p) for p in pairs} for pg in graphs]
    return session.session_id, per_turn


def cmd_eval(st: dict) -> int:
    from .corpus import f1_c, score_predictions

    _eval_init(st)
    model = _WORKER["model"]
    sessions = _load_corpus(st, model.relation_schema, model.attribute_schema)
    if not sessions:
        raise DataError("the corpus is empty")
    jobs = list(enumerate(sessions))
    pred_fh = open(st["predictions"], "w", encoding="utf-8") if st["predictions"] else None
    per_turn: dict = {}
    try:
        if st["workers"] > 1:
            from concurrent.futures import ProcessPoolExecutor

            pool = ProcessPoolExecutor(st["workers"], initializer=_eval_init, initargs=(st,))
            results = pool.map(_eval_session, jobs)
        else:
            pool, results = None, map(_eval_session, jobs)
        for sid, turns in results:  # map keeps session order whatever the completion order
            per_turn[sid] = turns
            if pred_fh:
                final = [[s, o, label] for (s, o), label in turns[-1].items()]
                pred_fh.write(_dumps({"session": sid, "predictions": final}) + "\n")
                pred_fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if pred_fh:
            pred_fh.close()
        scorer = _WORKER.get("scorer")
        if hasattr(scorer, "close"):
            scorer.close()
    report = score_predictions({sid: t[-1] for sid, t in per_turn.items()}, sessions)
    if any(r.triggers for s in sessions for r in s.gold_relations):
        report.macro_f1_c = f1_c(per_turn, sessions)
    text = report.to_json() + "\n"
    sys.stdout.write(text)
    if st["report"]:
        Path(st["report"]).write_text(text, encoding="utf-8")
    if st["table"]:
        Path(st["table"]).write_text(report.to_table(), encoding="utf-8")
    return EXIT_OK


def cmd_oracle_check(st: dict) -> int:
    from .oracle import oracle_check, standard_instances
    from .sampler import SamplerConfig

    try:
        instances = standard_instances(st["instances"], st["scale"], flat=st["flat"])
        config = SamplerConfig(q1_prob=st["q1_prob"], sweeps=10**9, max_steps=st["max_steps"],
                               burn_in=st["burn_in"], hastings_correction=st["hastings"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for aog, _, _ in instances:
        if aog.support_size() > st["cap"]:
            raise DataError(f"support of {aog.support_size()} graphs exceeds --cap {st['cap']}")
    seeds = range(st["seed"], st["seed"] + st["seeds"])
    verdict = oracle_check(instances, seeds, config, st["threshold"], st["min_pass_rate"])
    verdict["mode"] = "hastings" if st["hastings"] else "uncorrected"
    print(_dumps(verdict))
    return EXIT_OK if verdict["pass"] else EXIT_VERIFY


def cmd_synth(st: dict) -> int:
    from .corpus import dump_dialogre, load_dialogre
    from .synthetic import generate_session, revelation_session, schemas

    rs, _ = schemas()
    rng = np.random.default_rng(st["seed"])
    sessions = []
    for n in range(st["n"]):
        if st["revelation"]:
            s = revelation_session(rng, rs, st["reveal_turn"], st["n_turns"], st["entities_per_session"], str(n))
        else:
            s = generate_session(rng, rs, st["entities_per_session"], st["n_turns"], st["p_reveal"],
                                 p_adult=st["p_adult"], sid=str(n))
        sessions.append(s)
    dump_dialogre(sessions, st["out"])
    # DialogRE files carry display names only; the sidecar uses the ids the loader assigns
    reloaded = load_dialogre(st["out"], rs)
    rows = []
    for orig, new in zip(sessions, reloaded):
        by_name = {e.display_name: e.id for e in new.entities}
        names = {e.id: e.display_name for e in orig.entities}
        for eid, values in sorted(orig.gold_attributes.items()):
            for subtype, value in values.items():
                rows.append(f"{new.session_id}\t{by_name[names[eid]]}\t{subtype}\t{value}")
    Path(st["sidecar"]).write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(sessions)} sessions to {st['out']} and attributes to {st['sidecar']}")
    return EXIT_OK


HANDLERS = {
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "oracle-check": cmd_oracle_check,
    "trace": cmd_trace,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    from .corpus import CorpusError
    from .oracle import OracleError
    from .schema import SchemaError
    from .scorer import ScorerError
    from .training import TrainingError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(args)
    command = flags.pop("command")
    config_path = flags.pop("config", None) or os.environ.get(ENV_PREFIX + "CONFIG")
    try:
        st = resolve_settings(command, flags, config_path=config_path)
        logging.basicConfig(level=st["log_level"].upper(), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return HANDLERS[command](st)
    except UsageError as exc:
        print(f"socparse {command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK
    except (DataError, CorpusError, SchemaError, TrainingError, OracleError, ScorerError,
            json.JSONDecodeError, OSError) as exc:
        print(f"socparse {command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
