"""Compiled Metropolis-Hastings inner loop for slot-factorized energies.

Consumes the same four uniforms per step as the pure-Python loop in
:mod:`socparse.sampler` (move kind, slot, value, acceptance), so both paths
produce identical chains for the same random stream.
"""

import math

import numpy as np
from numba import njit

AUDIT_TOL = 1e-6


@njit(cache=True, inline="always")
def _code(attrs, human, arity, fsub, fstride, fsize, f, i):
    if not human[i]:
        return fsize[f] - 1
    c = 0
    for k in range(fsub.shape[1]):
        m = fsub[f, k]
        if m < 0:
            break
        v = attrs[i, m]
        if v < 0:
            v = arity[m]
        c += v * fstride[f, k]
    return c


@njit(cache=True, inline="always")
def _beta_row(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, out):
    nf = fsub.shape[0]
    R = out.shape[0]
    if nf == 1:
        ci = _code(attrs, human, arity, fsub, fstride, fsize, 0, i)
        cj = _code(attrs, human, arity, fsub, fstride, fsize, 0, j)
        for r in range(R):
            out[r] = beta_t[0, ci, cj, r]
        return
    for r in range(R):
        out[r] = 0.0
    for f in range(nf):
        ci = _code(attrs, human, arity, fsub, fstride, fsize, f, i)
        cj = _code(attrs, human, arity, fsub, fstride, fsize, f, j)
        for r in range(R):
            out[r] += beta_t[f, ci, cj, r]
    mx = -np.inf
    for r in range(R):
        out[r] /= nf
        if out[r] > mx:
            mx = out[r]
    s = 0.0
    for r in range(R):
        s += math.exp(out[r] - mx)
    lse = mx + math.log(s)
    for r in range(R):
        out[r] -= lse


@njit(cache=True, inline="always")
def _gamma_row(rels, gamma_t, K, i, m, a, out):
    for v in range(a):
        out[v] = 0.0
    for j in range(K):
        if j == i:
            continue
        for v in range(a):
            out[v] += gamma_t[m, rels[i, j], 0, v] + gamma_t[m, rels[j, i], 1, v]
    mx = -np.inf
    for v in range(a):
        if out[v] > mx:
            mx = out[v]
    s = 0.0
    for v in range(a):
        s += math.exp(out[v] - mx)
    lse = mx + math.log(s)
    for v in range(a):
        out[v] -= lse


@njit(cache=True, inline="always")
def _triple_energy(rels, tri_t, a, b, c):
    # six directed edges x->y of {a, b, c}, each given x->z and y->z
    e = 0.0
    e -= tri_t[rels[a, c], rels[b, c], rels[a, b]]
    e -= tri_t[rels[b, c], rels[a, c], rels[b, a]]
    e -= tri_t[rels[a, b], rels[c, b], rels[a, c]]
    e -= tri_t[rels[c, b], rels[a, b], rels[c, a]]
    e -= tri_t[rels[b, a], rels[c, a], rels[b, c]]
    e -= tri_t[rels[c, a], rels[b, a], rels[c, b]]
    return e


@njit(cache=True, inline="always")
def _sample(logq, n, u, w):
    if n == 1:
        return 0
    mx = -np.inf
    for k in range(n):
        if logq[k] > mx:
            mx = logq[k]
    total = 0.0
    for k in range(n):
        w[k] = math.exp(logq[k] - mx)
        total += w[k]
    target = u * total
    acc = 0.0
    for k in range(n):
        acc += w[k]
        if acc > target:
            return k
    return n - 1


@njit(cache=True, inline="always")
def _beta_entry(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, r, row):
    if fsub.shape[0] == 1:
        ci = _code(attrs, human, arity, fsub, fstride, fsize, 0, i)
        cj = _code(attrs, human, arity, fsub, fstride, fsize, 0, j)
        return beta_t[0, ci, cj, r]
    _beta_row(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, row)
    return row[r]


@njit(cache=True, inline="always")
def _rel_delta(attrs, rels, human, alpha_rel, gamma_t, tri_t, w_beta, w_gl, w_gr, reduced,
               i, j, old, new, brow):
    """Energy change of relabelling ``i -> j``; ``brow`` is the edge's relation log-row."""
    d = alpha_rel[i, j, new] - alpha_rel[i, j, old]
    if not reduced:
        if w_beta > 0.0:
            d -= w_beta * (brow[new] - brow[old])
        if w_gl > 0.0 or w_gr > 0.0:
            for m in range(attrs.shape[1]):
                if human[i] and attrs[i, m] >= 0:
                    v = attrs[i, m]
                    d -= w_gl * (gamma_t[m, new, 0, v] - gamma_t[m, old, 0, v])
                if human[j] and attrs[j, m] >= 0:
                    v = attrs[j, m]
                    d -= w_gr * (gamma_t[m, new, 1, v] - gamma_t[m, old, 1, v])
    elif w_beta > 0.0:
        K = rels.shape[0]
        e_old = 0.0
        for k in range(K):
            if k != i and k != j:
                e_old += _triple_energy(rels, tri_t, i, j, k)
        rels[i, j] = new
        e_new = 0.0
        for k in range(K):
            if k != i and k != j:
                e_new += _triple_energy(rels, tri_t, i, j, k)
        rels[i, j] = old
        d += w_beta * (e_new - e_old)
    return d


@njit(cache=True, inline="always")
def _attr_delta(attrs, rels, human, arity, alpha_attr, fsub, fstride, fsize, beta_t, gamma_t,
                w_beta, w_gl, w_gr, reduced, i, m, old, new, row):
    K = rels.shape[0]
    d = alpha_attr[i, m, new]
    if old >= 0:
        d -= alpha_attr[i, m, old]
    if reduced:
        return d
    if w_beta > 0.0:
        # only rows conditioned on entity i change
        e_old = 0.0
        for j in range(K):
            if j != i:
                e_old += _beta_entry(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, rels[i, j], row)
                e_old += _beta_entry(attrs, human, arity, fsub, fstride, fsize, beta_t, j, i, rels[j, i], row)
        attrs[i, m] = new
        e_new = 0.0
        for j in range(K):
            if j != i:
                e_new += _beta_entry(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, rels[i, j], row)
                e_new += _beta_entry(attrs, human, arity, fsub, fstride, fsize, beta_t, j, i, rels[j, i], row)
        attrs[i, m] = old
        d -= w_beta * (e_new - e_old)
    if w_gl > 0.0 or w_gr > 0.0:
        for j in range(K):
            if j == i:
                continue
            d -= w_gl * gamma_t[m, rels[i, j], 0, new] + w_gr * gamma_t[m, rels[j, i], 1, new]
            if old >= 0:
                d += w_gl * gamma_t[m, rels[i, j], 0, old] + w_gr * gamma_t[m, rels[j, i], 1, old]
    return d


@njit(cache=True)
def full_energy(attrs, rels, human, arity, alpha_attr, alpha_rel, fsub, fstride, fsize, beta_t,
                gamma_t, tri_t, w_beta, w_gl, w_gr, reduced):
    K = rels.shape[0]
    M = attrs.shape[1]
    R = alpha_rel.shape[2]
    row = np.empty(R)
    e = 0.0
    for i in range(K):
        if human[i]:
            for m in range(M):
                v = attrs[i, m]
                if v >= 0:
                    e += alpha_attr[i, m, v]
    for i in range(K):
        for j in range(K):
            if i == j:
                continue
            r = rels[i, j]
            e += alpha_rel[i, j, r]
            if reduced:
                continue
            if w_beta > 0.0:
                _beta_row(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, row)
                e -= w_beta * row[r]
            for m in range(M):
                if human[i] and attrs[i, m] >= 0:
                    e -= w_gl * gamma_t[m, r, 0, attrs[i, m]]
                if human[j] and attrs[j, m] >= 0:
                    e -= w_gr * gamma_t[m, r, 1, attrs[j, m]]
    if reduced and w_beta > 0.0:
        for a in range(K):
            for b in range(a + 1, K):
                for c in range(b + 1, K):
                    e += w_beta * _triple_energy(rels, tri_t, a, b, c)
    return e


@njit(cache=True)
def run_chain(attrs, rels, human, arity, alpha_attr, alpha_rel, fsub, fstride, fsize, beta_t,
              gamma_t, tri_t, w_beta, w_gl, w_gr, reduced, q1_uniform, q2_uniform, hastings,
              q1_prob, attr_slots, rel_slots, uniforms, n_burn, energy, audit_every,
              kinds, accepted, e_before, e_after, samples):
    """Run ``len(uniforms)`` steps in place on ``attrs`` / ``rels``.

    Returns ``(energy, status)``; status 1 means the incremental energy
    drifted from a full recomputation.
    """
    K = rels.shape[0]
    R = alpha_rel.shape[2]
    amax = alpha_attr.shape[2]
    n_attr = attr_slots.shape[0]
    n_rel = rel_slots.shape[0]
    row = np.empty(R)
    logq = np.empty(max(R, amax))
    wbuf = np.empty(max(R, amax))
    log_r = math.log(R)
    S = uniforms.shape[0]
    for s in range(S):
        u0 = uniforms[s, 0]
        u1 = uniforms[s, 1]
        u2 = uniforms[s, 2]
        u3 = uniforms[s, 3]
        if n_attr == 0:
            use_q1 = True
        elif n_rel == 0:
            use_q1 = False
        else:
            use_q1 = u0 < q1_prob
        d = 0.0
        corr = 0.0
        if use_q1:
            idx = min(int(u1 * n_rel), n_rel - 1)
            i = rel_slots[idx, 0]
            j = rel_slots[idx, 1]
            need_row = not reduced and w_beta > 0.0
            if not q1_uniform or need_row:
                _beta_row(attrs, human, arity, fsub, fstride, fsize, beta_t, i, j, row)
            if q1_uniform:
                for r in range(R):
                    logq[r] = -log_r
            else:
                for r in range(R):
                    logq[r] = row[r]
            old = rels[i, j]
            new = _sample(logq, R, u2, wbuf)
            if new != old:
                d = _rel_delta(attrs, rels, human, alpha_rel, gamma_t, tri_t, w_beta, w_gl, w_gr,
                               reduced, i, j, old, new, row)
                if hastings:
                    corr = logq[old] - logq[new]
            kinds[s] = 1
        else:
            idx = min(int(u1 * n_attr), n_attr - 1)
            i = attr_slots[idx, 0]
            m = attr_slots[idx, 1]
            a = arity[m]
            if q2_uniform:
                la = math.log(a)
                for v in range(a):
                    logq[v] = -la
            else:
                _gamma_row(rels, gamma_t, K, i, m, a, logq)
            old = attrs[i, m]
            new = _sample(logq, a, u2, wbuf)
            if new != old:
                d = _attr_delta(attrs, rels, human, arity, alpha_attr, fsub, fstride, fsize, beta_t,
                                gamma_t, w_beta, w_gl, w_gr, reduced, i, m, old, new, row)
                if hastings and old >= 0:
                    corr = logq[old] - logq[new]
            kinds[s] = 2
        log_ratio = corr - d
        ok = log_ratio >= 0.0 or u3 < math.exp(log_ratio)
        e_before[s] = energy
        if ok:
            accepted[s] = True
            if use_q1:
                rels[i, j] = new
            else:
                attrs[i, m] = new
            energy += d
        else:
            accepted[s] = False
        e_after[s] = energy
        if audit_every > 0 and (s + 1) % audit_every == 0:
            full = full_energy(attrs, rels, human, arity, alpha_attr, alpha_rel, fsub, fstride, fsize,
                               beta_t, gamma_t, tri_t, w_beta, w_gl, w_gr, reduced)
            if abs(full - energy) > AUDIT_TOL * max(1.0, abs(full)):
                return energy, 1
            energy = full
        if s >= n_burn:
            k = s - n_burn
            for n in range(n_attr):
                samples[k, n] = attrs[attr_slots[n, 0], attr_slots[n, 1]]
            for n in range(n_rel):
                samples[k, n_attr + n] = rels[rel_slots[n, 0], rel_slots[n, 1]]
    return energy, 0
