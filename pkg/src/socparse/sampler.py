"""Incremental Metropolis-Hastings parsing of a dialogue into parse graphs.

Every turn extends the dialogue prefix, optionally fills still-unset slots
from the scorer's classification, and runs a fixed budget of single-slot
moves: ``q1`` resamples one directed relation from the relation-given-
attributes row, ``q2`` resamples one attribute value from the product of its
attribute-given-relation rows.  The per-slot majority over the retained
samples is the turn's estimate.

Each step consumes four uniforms (move kind, slot, value, acceptance) from a
block drawn up front, which lets the compiled loop in :mod:`._kernel` and the
pure-Python loop here reproduce each other exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernel
from .corpus import DialogueSession, Turn
from .energy import EnergyError, EnergyModel, gamma_proposal_log_row, posterior_energy
from .scorer import FactorizedScorer, ScorerError, empty_tables
from .socgraph import UNSET, ParseGraph, SocAoG, is_unset, new_parse_graph

log = logging.getLogger(__name__)

Q1, Q2 = 1, 2
KIND_NAMES = {Q1: "q1", Q2: "q2"}


@dataclass(frozen=True)
class SamplerConfig:
    q1_prob: float = 0.7
    sweeps: int = 1
    max_steps: int = 20000
    burn_in: float = 0.2
    seed: int = 0
    warm_start: bool = True
    classify_init: bool = True
    hastings_correction: bool = False
    engine: str = "auto"  # auto | compiled | python
    audit_every: int = 100

    def __post_init__(self):
        if not 0.0 <= self.q1_prob <= 1.0:
            raise ValueError("q1_prob must lie in [0, 1]")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.sweeps < 1 or self.max_steps < 1:
            raise ValueError("sweeps and max_steps must be positive")
        if self.engine not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown engine {self.engine!r}")


def step_budget(K: int, M: int, N: int, w: int, S_max: int) -> int:
    """``min(w (K M + K (K-1) N), S_max)``."""
    for name, v in (("K", K), ("N", N), ("w", w), ("S_max", S_max)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    if int(M) != M or M < 0:
        raise ValueError(f"M must be a non-negative integer, got {M!r}")
    return int(min(w * (K * M + K * (K - 1) * N), S_max))


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# -- chain state and traces ----------------------------------------------------------
@dataclass
class ChainState:
    aog: SocAoG
    rng: np.random.Generator
    pg: ParseGraph | None = None
    energy: float = 0.0
    turn: int = 0
    prefix: list = field(default_factory=list)

    @classmethod
    def start(cls, aog: SocAoG, seed: int = 0) -> "ChainState":
        return cls(aog, rng_from_seed(seed))

    def snapshot(self):
        pg = None if self.pg is None else self.pg.copy()
        return (pg, self.energy, self.turn, list(self.prefix), self.rng.bit_generator.state)

    def restore(self, snap) -> None:
        pg, self.energy, self.turn, prefix, rng_state = snap
        self.pg = pg
        self.prefix = prefix
        self.rng.bit_generator.state = rng_state

    def check_energy(self, scorer, model: EnergyModel, tol: float = 1e-9) -> None:
        e = posterior_energy(scorer, model, self.prefix, self.pg)
        if abs(e - self.energy) > tol * max(1.0, abs(e)):
            raise EnergyError(f"cached energy {self.energy} differs from recomputed {e}")


@dataclass
class TurnTrace:
    turn: int
    steps: int
    kinds: np.ndarray
    accepted: np.ndarray
    e_before: np.ndarray
    e_after: np.ndarray
    samples: np.ndarray  # (retained, n_slots) in aog.slots order
    n_burn: int
    init: np.ndarray
    estimate: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        if self.steps == 0:
            return 1.0
        return float(self.accepted.sum()) / self.steps

    def records(self) -> Iterable[dict]:
        for s in range(self.steps):
            yield {
                "turn": self.turn,
                "step": s,
                "kind": KIND_NAMES[int(self.kinds[s])],
                "accepted": bool(self.accepted[s]),
                "e_before": float(self.e_before[s]),
                "e_after": float(self.e_after[s]),
            }
        yield {
            "turn": self.turn,
            "summary": True,
            "steps": self.steps,
            "burn_in": self.n_burn,
            "acceptance_rate": self.acceptance_rate,
        }


@dataclass
class SamplerTrace:
    aog: SocAoG
    turns: list = field(default_factory=list)

    def turn(self, t: int) -> TurnTrace:
        """Trace of turn ``t`` (1-based)."""
        for tt in self.turns:
            if tt.turn == t:
                return tt
        raise KeyError(f"no trace for turn {t}")

    @property
    def acceptance_rates(self) -> list[float]:
        return [tt.acceptance_rate for tt in self.turns]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for tt in self.turns for r in tt.records())

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


def slot_marginals(aog: SocAoG, samples: np.ndarray) -> list[np.ndarray]:
    """Empirical value frequencies per slot (unknown attribute samples are not counted)."""
    if len(samples) == 0:
        raise ValueError("no retained samples")
    out = []
    for n, s in enumerate(aog.slots):
        col = samples[:, n]
        a = aog.slot_arity(s)
        counts = np.bincount(col[col >= 0], minlength=a)[:a]
        out.append(counts / len(samples))
    return out


def majority(aog: SocAoG, samples: np.ndarray) -> np.ndarray:
    """Per-slot mode; ties go to the lowest index (unknown counts as ``-1``)."""
    est = np.empty(samples.shape[1], dtype=np.int64)
    for n, s in enumerate(aog.slots):
        counts = np.bincount(samples[:, n].astype(np.int64) + 1, minlength=aog.slot_arity(s) + 1)
        est[n] = int(np.argmax(counts)) - 1
    return est


def pg_from_vector(aog: SocAoG, vec: np.ndarray) -> ParseGraph:
    pg = new_parse_graph(aog)
    for s, v in zip(aog.slots, vec):
        pg.set(s, int(v))
    return pg


def relation_estimate(trace: SamplerTrace, pair: tuple[str, str], t: int) -> np.ndarray:
    """Label frequencies of the directed pair over turn ``t``'s retained samples."""
    aog = trace.aog
    tt = trace.turn(t)
    i, j = aog.index(pair[0]), aog.index(pair[1])
    if i == j:
        raise ValueError("a relation needs two distinct entities")
    n = len(aog.attr_slots) + i * (aog.K - 1) + (j if j < i else j - 1)
    if len(tt.samples) == 0:
        raise ValueError(f"turn {t} retained no samples")
    R = len(aog.relation_schema)
    return np.bincount(tt.samples[:, n], minlength=R)[:R] / len(tt.samples)


# -- proposals and acceptance ----------------------------------------------------------
def _inverse_cdf(logq: np.ndarray, u: float) -> int:
    # mirrors _kernel._sample term by term
    mx = max(logq)
    w = [math.exp(x - mx) for x in logq]
    total = 0.0
    for x in w:
        total += x
    target = u * total
    acc = 0.0
    for k, x in enumerate(w):
        acc += x
        if acc > target:
            return k
    return len(w) - 1


def _accept_log(log_ratio: float, u: float) -> bool:
    return log_ratio >= 0.0 or u < math.exp(log_ratio)


def _q1_row(model: EnergyModel, pg: ParseGraph, i: int, j: int) -> np.ndarray:
    R = len(model.relation_schema)
    if model.reduced or not model.use_beta:
        return np.full(R, -math.log(R))
    return model.pair_log_row(pg, i, j)


def _q2_row(model: EnergyModel, pg: ParseGraph, i: int, m: int) -> np.ndarray:
    a = model.attribute_schema.arities[m]
    if model.reduced or not model.use_gamma:
        return np.full(a, -math.log(a))
    return gamma_proposal_log_row(model, pg, i, m)


def _propose(pg: ParseGraph, model: EnergyModel, use_q1: bool, u1: float, u2: float, hastings: bool):
    """``(slot, old, new, log proposal correction)`` for one move."""
    aog = pg.aog
    if use_q1:
        slots = aog.rel_slots
        slot = slots[min(int(u1 * len(slots)), len(slots) - 1)]
        logq = _q1_row(model, pg, slot.a, slot.b)
    else:
        slots = aog.attr_slots
        slot = slots[min(int(u1 * len(slots)), len(slots) - 1)]
        logq = _q2_row(model, pg, slot.a, slot.b)
    old = pg.get(slot)
    new = _inverse_cdf(logq, u2)
    corr = 0.0
    if hastings and new != old and old != UNSET:
        corr = float(logq[old] - logq[new])
    return slot, old, new, corr


def _choose_q1(aog: SocAoG, q1_prob: float, u0: float) -> bool:
    if not aog.attr_slots:
        return True
    if not aog.rel_slots:
        return False
    return u0 < q1_prob


def propose_q1(state: ChainState, model: EnergyModel, rng: np.random.Generator | None = None) -> ParseGraph:
    """Resample one uniformly chosen directed relation from its relation-given-attributes row."""
    if not state.aog.rel_slots:
        raise ValueError("q1 needs at least two entities")
    rng = rng or state.rng
    slot, _, new, _ = _propose(state.pg, model, True, rng.random(), rng.random(), False)
    out = state.pg.copy()
    out.set(slot, new)
    return out


def propose_q2(state: ChainState, model: EnergyModel, rng: np.random.Generator | None = None) -> ParseGraph:
    """Resample one uniformly chosen attribute from the product of its incident attribute rows."""
    if not state.aog.attr_slots:
        raise ValueError("q2 needs at least one attribute slot")
    rng = rng or state.rng
    slot, _, new, _ = _propose(state.pg, model, False, rng.random(), rng.random(), False)
    out = state.pg.copy()
    out.set(slot, new)
    return out


def accept(E_current: float, E_proposed: float, rng: np.random.Generator, log_correction: float = 0.0) -> bool:
    """Accept with probability ``min(1, exp(E_current - E_proposed + log_correction))``."""
    if not (math.isfinite(E_current) and math.isfinite(E_proposed)):
        raise EnergyError("acceptance needs finite energies")
    return _accept_log(E_current - E_proposed + log_correction, rng.random())


# -- compiled path -----------------------------------------------------------------------
class _Tables(NamedTuple):
    human: np.ndarray
    arity: np.ndarray
    alpha_attr: np.ndarray
    alpha_rel: np.ndarray
    fsub: np.ndarray
    fstride: np.ndarray
    fsize: np.ndarray
    beta_t: np.ndarray
    gamma_t: np.ndarray
    tri_t: np.ndarray
    w_beta: float
    w_gl: float
    w_gr: float
    reduced: bool


def _model_arrays(model: EnergyModel, aog: SocAoG):
    arities = model.attribute_schema.arities
    R = len(model.relation_schema)
    M = len(arities)
    nf = len(model.factors)
    width = max([len(f) for f in model.factors] + [1])
    fsub = np.full((nf, width), -1, dtype=np.int64)
    fstride = np.zeros((nf, width), dtype=np.int64)
    for f, subs in enumerate(model.factors):
        stride = 1
        for k, m in enumerate(subs):
            fsub[f, k] = m
            fstride[f, k] = stride
            stride *= arities[m] + 1
    fsize = np.array([t.shape[0] for t in model.beta_tables], dtype=np.int64)
    C = int(fsize.max())
    beta_t = np.zeros((nf, C, C, R))
    for f, t in enumerate(model.beta_tables):
        beta_t[f, : t.shape[0], : t.shape[1]] = t
    amax = max(arities, default=1)
    gamma_t = np.zeros((M, R, 2, amax))
    for m, t in enumerate(model.gamma_tables):
        gamma_t[m, :, :, : t.shape[2]] = t
    tri = model.triangle_table if model.triangle_table is not None else np.zeros((R, R, R))
    return fsub, fstride, fsize, beta_t, gamma_t, np.ascontiguousarray(tri, dtype=float)


def compile_tables(model: EnergyModel, aog: SocAoG, alpha=None) -> _Tables:
    """Flatten a model plus per-slot alpha energies into kernel arrays."""
    if alpha is None or not model.use_alpha:
        attr_E, rel_E = empty_tables(aog)
        attr_E[np.isinf(attr_E)] = 0.0
    else:
        attr_E, rel_E = alpha
    fsub, fstride, fsize, beta_t, gamma_t, tri = _model_arrays(model, aog)
    return _Tables(
        human=aog.human.copy(),
        arity=np.array(model.attribute_schema.arities, dtype=np.int64),
        alpha_attr=np.ascontiguousarray(attr_E, dtype=float),
        alpha_rel=np.ascontiguousarray(rel_E, dtype=float),
        fsub=fsub,
        fstride=fstride,
        fsize=fsize,
        beta_t=beta_t,
        gamma_t=gamma_t,
        tri_t=tri,
        w_beta=float(model.beta) if model.use_beta else 0.0,
        w_gl=float(model.gamma_l) if model.use_gamma else 0.0,
        w_gr=float(model.gamma_r) if model.use_gamma else 0.0,
        reduced=bool(model.reduced),
    )


def compiled_energy(tables: _Tables, pg: ParseGraph) -> float:
    t = tables
    return float(
        _kernel.full_energy(
            pg.attrs, pg.rels, t.human, t.arity, t.alpha_attr, t.alpha_rel, t.fsub, t.fstride, t.fsize,
            t.beta_t, t.gamma_t, t.tri_t, t.w_beta, t.w_gl, t.w_gr, t.reduced,
        )
    )


def _slot_index_arrays(aog: SocAoG):
    attr = np.array([(s.a, s.b) for s in aog.attr_slots], dtype=np.int64).reshape(-1, 2)
    rel = np.array([(s.a, s.b) for s in aog.rel_slots], dtype=np.int64).reshape(-1, 2)
    return attr, rel


def _run_compiled(pg, tables: _Tables, model, config, U, n_burn, energy, out):
    t = tables
    attr_slots, rel_slots = _slot_index_arrays(pg.aog)
    energy, status = _kernel.run_chain(
        pg.attrs, pg.rels, t.human, t.arity, t.alpha_attr, t.alpha_rel, t.fsub, t.fstride, t.fsize,
        t.beta_t, t.gamma_t, t.tri_t, t.w_beta, t.w_gl, t.w_gr, t.reduced,
        model.reduced or not model.use_beta, model.reduced or not model.use_gamma,
        bool(config.hastings_correction), float(config.q1_prob), attr_slots, rel_slots, U, n_burn,
        float(energy), int(config.audit_every), *out,
    )
    if status != 0:
        raise EnergyError("incremental energy drifted from full recomputation")
    return energy


def _run_python(pg, scorer, model, prefix, config, U, n_burn, energy, out):
    kinds, accepted, e_before, e_after, samples = out
    aog = pg.aog
    for s in range(len(U)):
        u0, u1, u2, u3 = U[s]
        use_q1 = _choose_q1(aog, config.q1_prob, u0)
        slot, old, new, corr = _propose(pg, model, use_q1, u1, u2, config.hastings_correction)
        kinds[s] = Q1 if use_q1 else Q2
        e_before[s] = energy
        if new == old:
            ok, e_new = True, energy
        else:
            pg.set(slot, new)
            e_new = posterior_energy(scorer, model, prefix, pg)
            ok = _accept_log(energy - e_new + corr, u3)
            if not ok:
                pg.set(slot, old)
        accepted[s] = ok
        if ok:
            energy = e_new
        e_after[s] = energy
        if s >= n_burn:
            samples[s - n_burn] = pg.slot_vector()
    return energy


def _use_compiled(scorer, model: EnergyModel, config: SamplerConfig) -> bool:
    factorized = scorer is None or not model.use_alpha or isinstance(scorer, FactorizedScorer)
    if config.engine == "compiled" and not factorized:
        raise ValueError("the compiled engine needs a slot-factorized scorer")
    return config.engine == "compiled" or (config.engine == "auto" and factorized)


def _classify_fill(pg: ParseGraph, scorer, prefix, alpha) -> None:
    aog = pg.aog
    unset = [s for s in aog.slots if is_unset(pg, s)]
    if not unset:
        return
    if alpha is not None:
        attr_E, rel_E = alpha
        for s in unset:
            row = attr_E[s.a, s.b, : aog.slot_arity(s)] if s.kind == "attr" else rel_E[s.a, s.b]
            pg.set(s, int(np.argmin(row)))
        return
    probs = scorer.classify(prefix, aog)
    for s in unset:
        if s in probs:
            pg.set(s, int(np.argmax(probs[s])))


# -- the per-turn loop ---------------------------------------------------------------------
def parse_turn(
    state: ChainState,
    utterance: Turn,
    scorer,
    model: EnergyModel,
    config: SamplerConfig,
    trace: SamplerTrace | None = None,
) -> tuple[ParseGraph, TurnTrace]:
    snap = state.snapshot()
    try:
        return _parse_turn(state, utterance, scorer, model, config, trace)
    except ScorerError:
        state.restore(snap)
        raise


def _parse_turn(state, utterance, scorer, model, config, trace):
    aog = state.aog
    state.prefix.append(utterance)
    state.turn += 1
    prefix = tuple(state.prefix)
    if config.warm_start and state.pg is not None:
        pg = state.pg.copy()
    else:
        pg = new_parse_graph(aog)

    compiled = _use_compiled(scorer, model, config)
    alpha = None
    if compiled and scorer is not None and model.use_alpha:
        alpha = scorer.slot_energies(prefix, aog)
    if config.classify_init and scorer is not None:
        _classify_fill(pg, scorer, prefix, alpha)
    init = pg.slot_vector()

    S = step_budget(aog.K, aog.M, len(aog.relation_schema), config.sweeps, config.max_steps)
    if not aog.slots:
        S = 0
    U = state.rng.random((S, 4))
    n_burn = int(config.burn_in * S)
    n_slots = len(aog.slots)
    out = (
        np.zeros(S, dtype=np.int8),
        np.zeros(S, dtype=np.bool_),
        np.zeros(S),
        np.zeros(S),
        np.zeros((S - n_burn, n_slots), dtype=np.int16),
    )
    if compiled:
        tables = compile_tables(model, aog, alpha)
        energy = compiled_energy(tables, pg)
        _run_compiled(pg, tables, model, config, U, n_burn, energy, out)
    else:
        energy = posterior_energy(scorer, model, prefix, pg)
        _run_python(pg, scorer, model, prefix, config, U, n_burn, energy, out)

    samples = out[4]
    estimate = majority(aog, samples) if len(samples) else pg.slot_vector()
    est_pg = pg_from_vector(aog, estimate)
    state.pg = est_pg
    if compiled:
        state.energy = compiled_energy(tables, est_pg)
    else:
        state.energy = posterior_energy(scorer, model, prefix, est_pg)
    tt = TurnTrace(state.turn, S, out[0], out[1], out[2], out[3], samples, n_burn, init, estimate)
    if trace is not None:
        trace.turns.append(tt)
    log.debug("turn %d: %d steps, acceptance %.3f", state.turn, S, tt.acceptance_rate)
    return est_pg, tt


def parse_session(
    session: DialogueSession | Sequence[Turn],
    scorer,
    model: EnergyModel,
    config: SamplerConfig,
    aog: SocAoG | None = None,
) -> tuple[list[ParseGraph], SamplerTrace]:
    if isinstance(session, DialogueSession):
        turns = session.turns
        aog = aog or session.aog(model.relation_schema, model.attribute_schema)
    else:
        turns = list(session)
        if aog is None:
            raise ValueError("a bare turn list needs an explicit SocAoG")
    if not turns:
        raise ValueError("session has no turns")
    state = ChainState.start(aog, config.seed)
    trace = SamplerTrace(aog)
    graphs = []
    for turn in turns:
        pg, _ = parse_turn(state, turn, scorer, model, config, trace)
        graphs.append(pg)
    return graphs, trace


def pooled_marginals(traces: Sequence[SamplerTrace], t: int) -> list[np.ndarray]:
    """Per-slot marginals of turn ``t`` from several independent chains, pooled by concatenation."""
    aog = traces[0].aog
    samples = np.concatenate([tr.turn(t).samples for tr in traces])
    return slot_marginals(aog, samples)
