"""Utilities, choice probabilities, and the simulated panel log-likelihood.

Per individual n with draws r = 1..R the simulated likelihood is

    L_n = (1/R) * sum_r prod_t P(chosen alternative of task t | draw r)

computed entirely in log space: the inner product over a person's tasks is a
sum of log probabilities and the across-draw average is a max-shifted
log-sum-exp, so nine tasks of extreme utilities cannot underflow. Utilities
follow the selected space:

    preference:  V = sum_k coef_k * x_k          (price is an ordinary term)
    wtp:         V = phi * (price + sum_k z_k * x_k)

Random coefficients realize as mean + |sd| * xi (normal) or
-exp(m + |s| * xi) (negated lognormal); spreads are estimated unconstrained.

The module exposes two layers. `realize_coefficients`,
`alternative_utility` and `choice_probabilities` are scalar reference
operations. `simulated_loglikelihood` / `score_vector` run on a packed
array representation, vectorized over alternatives and draw chunks, and may
fan per-individual work out across threads; per-individual results are
bitwise independent of the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Alternative, ChoiceDataset
from .draws import DrawTensor
from .errors import ConfigurationError, DomainError, EvaluationError
from .modelspec import (ASC_ATTRIBUTE, FIXED, NORMAL, PREFERENCE_SPACE,
                        WTP_SPACE, ModelSpec)

#: Chosen probabilities below this are treated as evaluation failures.
LOG_PROB_FLOOR = math.log(1e-300)

#: Draws are processed in chunks of this many columns. Fixed so that the
#: floating point summation order (and therefore the result, bit for bit)
#: does not depend on the thread count.
DRAW_CHUNK = 64

_DIST_FIXED = 0
_DIST_NORMAL = 1
_DIST_NEGLOG = 2


@dataclass
class LikelihoodEvaluation:
    value: float
    per_individual: np.ndarray
    score: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Scalar reference operations
# ---------------------------------------------------------------------------

def realize_coefficients(params, draw_row, spec: ModelSpec) -> dict[str, float]:
    """Realize one coefficient per parameter from a single draw row.

    `draw_row` holds one standard normal per random parameter, in
    declaration order. Fixed parameters pass through unchanged.
    """
    p = np.asarray(params, dtype=float)
    draw_row = np.asarray(draw_row, dtype=float)
    if draw_row.shape != (spec.n_random,):
        raise DomainError(f"draw_row must have {spec.n_random} entries, "
                          f"got {draw_row.shape}")
    slots = spec.slots()
    out: dict[str, float] = {}
    k = 0
    for pd in spec.parameters:
        m_idx, s_idx = slots[pd.name]
        if not pd.is_random:
            out[pd.name] = float(p[m_idx])
            continue
        m, s, xi = float(p[m_idx]), abs(float(p[s_idx])), float(draw_row[k])
        k += 1
        if pd.distribution == NORMAL:
            out[pd.name] = m + s * xi
        else:  # negated lognormal: strictly negative by construction
            out[pd.name] = -math.exp(m + s * xi)
    return out


def _attribute_value(alternative: Alternative, name: str) -> float:
    if name == ASC_ATTRIBUTE:
        return 1.0
    try:
        return alternative.attributes[name]
    except KeyError:
        raise EvaluationError(f"attribute {name!r} not bound on alternative "
                              f"{alternative.alt_id!r}")


def alternative_utility(spec: ModelSpec, coefficients: dict[str, float],
                        alternative: Alternative) -> float:
    """Systematic utility of one alternative at realized coefficients."""
    if spec.space == PREFERENCE_SPACE:
        v = 0.0
        for t in spec.terms:
            if alternative.alt_id not in t.applies_to:
                continue
            x = _attribute_value(alternative, t.attribute)
            if t.multiplier_attribute is not None:
                x *= _attribute_value(alternative, t.multiplier_attribute)
            v += coefficients[t.parameter] * x
        return v
    # WTP space: V = phi * (price + z'x); the stay alternative carries no
    # price term, so its price contribution is zero.
    phi_name = spec.price_parameter_name()
    money = 0.0
    for t in spec.terms:
        if alternative.alt_id not in t.applies_to:
            continue
        x = _attribute_value(alternative, t.attribute)
        if t.multiplier_attribute is not None:
            x *= _attribute_value(alternative, t.multiplier_attribute)
        if t.parameter == phi_name and not t.is_interaction:
            money += x
        else:
            money += coefficients[t.parameter] * x
    return coefficients[phi_name] * money


def choice_probabilities(utilities, available=None) -> np.ndarray:
    """Max-shifted softmax over the available alternatives.

    Unavailable alternatives get probability exactly 0; the available ones
    sum to 1 up to float rounding.
    """
    v = np.asarray(utilities, dtype=float)
    if available is None:
        avail = np.ones(v.shape, dtype=bool)
    else:
        avail = np.asarray(available, dtype=bool)
    if not avail.any():
        raise DomainError("no available alternative")
    out = np.zeros(v.shape, dtype=float)
    va = v[avail]
    e = np.exp(va - va.max())
    out[avail] = e / e.sum()
    return out


# ---------------------------------------------------------------------------
# Packed representation
# ---------------------------------------------------------------------------

@dataclass
class PackedModel:
    """Dataset x spec flattened to arrays for vectorized evaluation."""

    space: str
    n_persons: int
    n_tasks: int
    n_rows: int
    n_estimated: int
    names: tuple[str, ...]
    # Row-level arrays (rows ordered person -> task -> alternative).
    X: np.ndarray                 # (n_rows, n_paramdefs) effective regressors
    avail: np.ndarray             # bool (n_rows,)
    chosen_mask: np.ndarray       # float (n_rows,), 1.0 on chosen rows
    chosen_rows: np.ndarray       # int (n_tasks,)
    row_task: np.ndarray          # int (n_rows,)
    row_person: np.ndarray        # int (n_rows,)
    task_offsets: np.ndarray      # int (n_tasks,) first row of each task
    person_task_offsets: np.ndarray  # int (n_persons,)
    person_row_offsets: np.ndarray   # int (n_persons,)
    task_person: np.ndarray       # int (n_tasks,)
    task_labels: list             # (person_id, task_id) per task, diagnostics
    # Parameter layout (one entry per parameter definition).
    dist: np.ndarray              # int codes
    mean_slot: np.ndarray         # raw vector index of the location
    sd_slot: np.ndarray           # raw vector index of the spread, -1 if fixed
    rand_dim: np.ndarray          # draw dimension, -1 if fixed
    price_col: int                # paramdef column of phi, -1 in pref space
    # Derived index arrays.
    rand_cols: np.ndarray         # paramdef column per draw dimension
    rand_mean_slots: np.ndarray
    rand_sd_slots: np.ndarray
    rand_neglog: np.ndarray       # bool per draw dimension
    # Global person range covered by this (possibly sliced) pack.
    person_lo: int = 0

    @property
    def n_random(self) -> int:
        return len(self.rand_cols)

    def available_counts(self) -> np.ndarray:
        """Number of available alternatives per task (for the null LL)."""
        return np.add.reduceat(self.avail.astype(float), self.task_offsets)

    def split(self, n_blocks: int) -> list["PackedModel"]:
        n_blocks = max(1, min(int(n_blocks), self.n_persons))
        if n_blocks == 1:
            return [self]
        bounds = np.linspace(0, self.n_persons, n_blocks + 1).astype(int)
        blocks = []
        for p0, p1 in zip(bounds[:-1], bounds[1:]):
            if p0 == p1:
                continue
            t0 = int(self.person_task_offsets[p0])
            t1 = int(self.person_task_offsets[p1]) if p1 < self.n_persons else self.n_tasks
            r0 = int(self.person_row_offsets[p0])
            r1 = int(self.person_row_offsets[p1]) if p1 < self.n_persons else self.n_rows
            blocks.append(PackedModel(
                space=self.space,
                n_persons=p1 - p0, n_tasks=t1 - t0, n_rows=r1 - r0,
                n_estimated=self.n_estimated, names=self.names,
                X=self.X[r0:r1], avail=self.avail[r0:r1],
                chosen_mask=self.chosen_mask[r0:r1],
                chosen_rows=self.chosen_rows[t0:t1] - r0,
                row_task=self.row_task[r0:r1] - t0,
                row_person=self.row_person[r0:r1] - p0,
                task_offsets=self.task_offsets[t0:t1] - r0,
                person_task_offsets=self.person_task_offsets[p0:p1] - t0,
                person_row_offsets=self.person_row_offsets[p0:p1] - r0,
                task_person=self.task_person[t0:t1] - p0,
                task_labels=self.task_labels[t0:t1],
                dist=self.dist, mean_slot=self.mean_slot, sd_slot=self.sd_slot,
                rand_dim=self.rand_dim, price_col=self.price_col,
                rand_cols=self.rand_cols, rand_mean_slots=self.rand_mean_slots,
                rand_sd_slots=self.rand_sd_slots, rand_neglog=self.rand_neglog,
                person_lo=self.person_lo + p0,
            ))
        return blocks


def pack_model(dataset: ChoiceDataset, spec: ModelSpec) -> PackedModel:
    """Flatten a dataset/spec pair into the packed array representation."""
    alts: list[Alternative] = []
    row_task: list[int] = []
    row_person: list[int] = []
    task_offsets: list[int] = []
    person_task_offsets: list[int] = []
    person_row_offsets: list[int] = []
    chosen_rows: list[int] = []
    task_person: list[int] = []
    task_labels: list[tuple[str, str]] = []
    avail: list[bool] = []
    chosen_mask: list[float] = []

    t_idx = 0
    for p_idx, person in enumerate(dataset.individuals):
        person_task_offsets.append(t_idx)
        person_row_offsets.append(len(alts))
        for task in person.tasks:
            task_offsets.append(len(alts))
            task_person.append(p_idx)
            task_labels.append((person.person_id, task.task_id))
            chosen_row = -1
            for alt in task.alternatives:
                if alt.alt_id == task.chosen:
                    chosen_row = len(alts)
                alts.append(alt)
                row_task.append(t_idx)
                row_person.append(p_idx)
                avail.append(alt.available)
                chosen_mask.append(1.0 if alt.alt_id == task.chosen else 0.0)
            if chosen_row < 0:
                raise EvaluationError(f"person {person.person_id!r} task "
                                      f"{task.task_id!r}: chosen alternative missing")
            chosen_rows.append(chosen_row)
            t_idx += 1

    n_rows = len(alts)
    row_alt = np.array([a.alt_id for a in alts])

    attr_cache: dict[str, np.ndarray] = {}

    def column(name: str) -> np.ndarray:
        if name == ASC_ATTRIBUTE:
            return np.ones(n_rows)
        if name not in attr_cache:
            out = np.empty(n_rows)
            for i, alt in enumerate(alts):
                try:
                    out[i] = alt.attributes[name]
                except KeyError:
                    pid, tid = task_labels[row_task[i]]
                    raise EvaluationError(
                        f"attribute {name!r} not bound on alternative "
                        f"{alt.alt_id!r} (person {pid!r}, task {tid!r})")
            attr_cache[name] = out
        return attr_cache[name]

    n_defs = len(spec.parameters)
    pcol = {pd.name: j for j, pd in enumerate(spec.parameters)}
    X = np.zeros((n_rows, n_defs))
    for term in spec.terms:
        vals = column(term.attribute)
        if term.multiplier_attribute is not None:
            vals = vals * column(term.multiplier_attribute)
        mask = np.isin(row_alt, list(term.applies_to))
        X[:, pcol[term.parameter]] += np.where(mask, vals, 0.0)

    slots = spec.slots()
    dist = np.empty(n_defs, dtype=int)
    mean_slot = np.empty(n_defs, dtype=int)
    sd_slot = np.empty(n_defs, dtype=int)
    rand_dim = np.full(n_defs, -1, dtype=int)
    k = 0
    for j, pd in enumerate(spec.parameters):
        mean_slot[j], sd_slot[j] = slots[pd.name]
        if pd.kind == FIXED:
            dist[j] = _DIST_FIXED
        else:
            dist[j] = _DIST_NORMAL if pd.distribution == NORMAL else _DIST_NEGLOG
            rand_dim[j] = k
            k += 1

    price_col = -1
    if spec.space == WTP_SPACE:
        phi_name = spec.price_parameter_name()
        if phi_name is None:
            raise ConfigurationError("wtp spec has no price term")
        price_col = pcol[phi_name]

    rand_cols = np.where(rand_dim >= 0)[0]
    return PackedModel(
        space=spec.space,
        n_persons=len(dataset.individuals), n_tasks=t_idx, n_rows=n_rows,
        n_estimated=spec.n_estimated, names=spec.estimated_names(),
        X=X,
        avail=np.asarray(avail, dtype=bool),
        chosen_mask=np.asarray(chosen_mask, dtype=float),
        chosen_rows=np.asarray(chosen_rows, dtype=np.intp),
        row_task=np.asarray(row_task, dtype=np.intp),
        row_person=np.asarray(row_person, dtype=np.intp),
        task_offsets=np.asarray(task_offsets, dtype=np.intp),
        person_task_offsets=np.asarray(person_task_offsets, dtype=np.intp),
        person_row_offsets=np.asarray(person_row_offsets, dtype=np.intp),
        task_person=np.asarray(task_person, dtype=np.intp),
        task_labels=task_labels,
        dist=dist, mean_slot=mean_slot, sd_slot=sd_slot, rand_dim=rand_dim,
        price_col=price_col,
        rand_cols=rand_cols,
        rand_mean_slots=mean_slot[rand_cols],
        rand_sd_slots=sd_slot[rand_cols],
        rand_neglog=(dist[rand_cols] == _DIST_NEGLOG),
    )


# ---------------------------------------------------------------------------
# Vectorized evaluation
# ---------------------------------------------------------------------------

def _realize_chunk(p: np.ndarray, b: PackedModel, xi: np.ndarray) -> np.ndarray:
    """Realized random coefficients for a chunk: (n_persons, chunk, K)."""
    m = p[b.rand_mean_slots]
    s = np.abs(p[b.rand_sd_slots])
    coefs = m + s * xi
    if b.rand_neglog.any():
        nl = b.rand_neglog
        coefs[..., nl] = -np.exp(m[nl] + s[nl] * xi[..., nl])
    return coefs


def _base_values(p: np.ndarray, b: PackedModel) -> np.ndarray:
    """Draw-independent part: fixed-coefficient utility (preference space)
    or the fixed part of the money bracket incl. price (wtp space)."""
    fixed = np.where(b.dist == _DIST_FIXED)[0]
    if b.space == PREFERENCE_SPACE:
        if fixed.size == 0:
            return np.zeros(b.n_rows)
        return b.X[:, fixed] @ p[b.mean_slot[fixed]]
    zfix = fixed[fixed != b.price_col]
    base = b.X[:, b.price_col].copy()
    if zfix.size:
        base += b.X[:, zfix] @ p[b.mean_slot[zfix]]
    return base


def _chunk_quantities(p, b, base, xi, r0, r1):
    """Utilities and intermediates for draws r0:r1 of one block."""
    coefs = _realize_chunk(p, b, xi[:, r0:r1, :]) if b.n_random else None
    rp = b.row_person
    phi = None
    if b.space == PREFERENCE_SPACE:
        V = np.repeat(base[:, None], r1 - r0, axis=1)
        for k in range(b.n_random):
            V += coefs[rp, :, k] * b.X[:, b.rand_cols[k], None]
        M = V  # alias; M is only meaningful in wtp space
    else:
        M = np.repeat(base[:, None], r1 - r0, axis=1)
        kphi = -1
        for k in range(b.n_random):
            if b.rand_cols[k] == b.price_col:
                kphi = k
                continue
            M += coefs[rp, :, k] * b.X[:, b.rand_cols[k], None]
        phi = coefs[rp, :, kphi] if kphi >= 0 else float(p[b.mean_slot[b.price_col]])
        V = phi * M
    V = np.where(b.avail[:, None], V, -np.inf)
    tmax = np.maximum.reduceat(V, b.task_offsets, axis=0)
    E = np.exp(V - tmax[b.row_task])
    sumE = np.add.reduceat(E, b.task_offsets, axis=0)
    logP = V[b.chosen_rows] - (tmax + np.log(sumE))
    return coefs, phi, M, E, sumE, logP


def _check_logp(b: PackedModel, logP: np.ndarray):
    bad = ~np.isfinite(logP) | (logP < LOG_PROB_FLOOR)
    if bad.any():
        t_local = int(np.argwhere(bad)[0][0])
        pid, tid = b.task_labels[t_local]
        raise EvaluationError(
            f"simulated choice probability underflowed or utilities were "
            f"non-finite for person {pid!r} task {tid!r}")


def _block_loglik(b: PackedModel, p: np.ndarray, xi: np.ndarray, S_out: np.ndarray):
    R = S_out.shape[1]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        base = _base_values(p, b)
        for r0 in range(0, R, DRAW_CHUNK):
            r1 = min(r0 + DRAW_CHUNK, R)
            _, _, _, _, _, logP = _chunk_quantities(p, b, base, xi, r0, r1)
            _check_logp(b, logP)
            S_out[:, r0:r1] = np.add.reduceat(logP, b.person_task_offsets, axis=0)


def _block_score(b: PackedModel, p: np.ndarray, xi: np.ndarray, w: np.ndarray,
                 out: np.ndarray):
    """Per-individual score rows for one block, written into `out`."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        base = _base_values(p, b)
    R = w.shape[1]
    nr = b.n_rows
    pref = b.space == PREFERENCE_SPACE
    phi_random = (not pref) and (b.rand_dim[b.price_col] >= 0)
    kphi = int(b.rand_dim[b.price_col]) if phi_random else -1

    q_base = np.zeros(nr)                       # sum_r gw (pref) / gw*phi (wtp z)
    q_dim = [np.zeros(nr) for _ in range(b.n_random)]
    q_dim2 = [np.zeros(nr) for _ in range(b.n_random)]  # neglog second piece
    q_price = np.zeros(nr)                      # phi gradient, location part
    q_price_sd = np.zeros(nr)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for r0 in range(0, R, DRAW_CHUNK):
            r1 = min(r0 + DRAW_CHUNK, R)
            coefs, phi, M, E, sumE, logP = _chunk_quantities(p, b, base, xi, r0, r1)
            _check_logp(b, logP)
            P = E / sumE[b.row_task]
            gw = (b.chosen_mask[:, None] - P) * w[b.row_person, r0:r1]
            if pref:
                q_base += gw.sum(axis=1)
                for k in range(b.n_random):
                    xk = xi[b.row_person, r0:r1, k]
                    if b.rand_neglog[k]:
                        ck = coefs[b.row_person, :, k]
                        q_dim[k] += (gw * ck).sum(axis=1)
                        q_dim2[k] += (gw * ck * xk).sum(axis=1)
                    else:
                        q_dim[k] += (gw * xk).sum(axis=1)
            else:
                gphi = gw * phi
                q_base += gphi.sum(axis=1)
                for k in range(b.n_random):
                    if k == kphi:
                        continue
                    xk = xi[b.row_person, r0:r1, k]
                    if b.rand_neglog[k]:
                        ck = coefs[b.row_person, :, k]
                        q_dim[k] += (gphi * ck).sum(axis=1)
                        q_dim2[k] += (gphi * ck * xk).sum(axis=1)
                    else:
                        q_dim[k] += (gphi * xk).sum(axis=1)
                gM = gw * M
                if not phi_random:
                    q_price += gM.sum(axis=1)
                else:
                    xk = xi[b.row_person, r0:r1, kphi]
                    if b.rand_neglog[kphi]:
                        q_price += (gM * phi).sum(axis=1)
                        q_price_sd += (gM * phi * xk).sum(axis=1)
                    else:
                        q_price += gM.sum(axis=1)
                        q_price_sd += (gM * xk).sum(axis=1)

    RS = np.zeros((nr, b.n_estimated))
    for j in range(len(b.dist)):
        col = b.X[:, j]
        m_idx, s_idx = b.mean_slot[j], b.sd_slot[j]
        k = b.rand_dim[j]
        # d|s|/ds, taking the right derivative at the kink so a spread that
        # lands exactly on zero can still move.
        sgn = (1.0 if p[s_idx] >= 0.0 else -1.0) if k >= 0 else 0.0
        if (not pref) and j == b.price_col:
            RS[:, m_idx] = q_price
            if k >= 0:
                RS[:, s_idx] = sgn * q_price_sd
        elif b.dist[j] == _DIST_FIXED:
            RS[:, m_idx] = q_base * col
        elif b.dist[j] == _DIST_NORMAL:
            RS[:, m_idx] = q_base * col
            RS[:, s_idx] = sgn * q_dim[k] * col
        else:  # negated lognormal
            RS[:, m_idx] = q_dim[k] * col
            RS[:, s_idx] = sgn * q_dim2[k] * col
    out[:] = np.add.reduceat(RS, b.person_row_offsets, axis=0)


def _run_blocks(blocks, work, threads):
    if threads <= 1 or len(blocks) == 1:
        for blk in blocks:
            work(blk)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))


def evaluate_packed(packed: PackedModel, params, tensor: DrawTensor,
                    need_score: bool = False, threads: int = 1):
    """Per-individual log-likelihood contributions and optional score rows."""
    p = np.asarray(params, dtype=float)
    if p.shape != (packed.n_estimated,):
        raise DomainError(f"parameter vector must have {packed.n_estimated} "
                          f"entries, got {p.shape}")
    if tensor.dimensions != packed.n_random:
        raise ConfigurationError(f"draw tensor has {tensor.dimensions} dimensions "
                                 f"but the spec has {packed.n_random} random parameters")
    if tensor.n_individuals != packed.n_persons:
        raise ConfigurationError(f"draw tensor built for {tensor.n_individuals} "
                                 f"individuals, dataset has {packed.n_persons}")
    blocks = packed.split(threads)
    R = tensor.n_draws
    S = np.empty((packed.n_persons, R))

    def pass1(blk: PackedModel):
        lo = blk.person_lo - packed.person_lo
        _block_loglik(blk, p, tensor.values[lo:lo + blk.n_persons], S[lo:lo + blk.n_persons])

    _run_blocks(blocks, pass1, threads)

    smax = S.max(axis=1)
    lse = smax + np.log(np.exp(S - smax[:, None]).sum(axis=1))
    ll_pp = lse - math.log(R)
    if not need_score:
        return ll_pp, None

    w = np.exp(S - lse[:, None])
    score_pp = np.empty((packed.n_persons, packed.n_estimated))

    def pass2(blk: PackedModel):
        lo = blk.person_lo - packed.person_lo
        _block_score(blk, p, tensor.values[lo:lo + blk.n_persons],
                     w[lo:lo + blk.n_persons], score_pp[lo:lo + blk.n_persons])

    _run_blocks(blocks, pass2, threads)
    return ll_pp, score_pp


def simulated_loglikelihood(dataset: ChoiceDataset, spec: ModelSpec, params,
                            tensor: DrawTensor, threads: int = 1,
                            with_score: bool = False) -> LikelihoodEvaluation:
    """Simulated panel log-likelihood; `value` is the exact sum (math.fsum)
    of the per-individual contributions, so it is invariant under any
    reordering of individuals."""
    packed = pack_model(dataset, spec)
    ll_pp, score_pp = evaluate_packed(packed, params, tensor,
                                      need_score=with_score, threads=threads)
    score = score_pp.sum(axis=0) if score_pp is not None else None
    return LikelihoodEvaluation(value=math.fsum(ll_pp.tolist()),
                                per_individual=ll_pp, score=score)


def score_vector(dataset: ChoiceDataset, spec: ModelSpec, params,
                 tensor: DrawTensor, threads: int = 1) -> np.ndarray:
    """Analytic gradient of the simulated log-likelihood, canonical order."""
    packed = pack_model(dataset, spec)
    _, score_pp = evaluate_packed(packed, params, tensor, need_score=True,
                                  threads=threads)
    return score_pp.sum(axis=0)
