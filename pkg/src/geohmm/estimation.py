"""M-step updates under geometric constraints, and the EM driver.

Transition and observation matrices are reestimated from expected counts
in the usual way. Relation parameters are reestimated under the
configured constraint level:

* unconstrained: independent per-direction weighted means/variances;
* anti-symmetric: each unordered pair is estimated jointly, with the
  new mean computed from both traversal directions using the previous
  iteration's variances (concentrations for the heading), after which
  variances are refit against the new mean. Updating the mean with
  lagged spread parameters makes every step an exact coordinate ascent
  on the expected complete-data log-likelihood, so the likelihood is
  nondecreasing (a generalized EM step);
* additive: per-state coordinates are estimated directly (weighted
  least-squares embedding for x and y; heading projection with held
  well-supported entries) and all pair means are read off the
  embedding, so additivity holds by construction.

Self-relations are pinned at zero mean and never reestimated. Pairs that
receive no posterior weight keep their previous parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circstats import (KAPPA_MAX, bessel_ratio_array,
                        resultant_to_kappa_array, wrap_angle)
from .inference import Posteriors, forward_backward, posteriors
from .model import (VAR_FLOOR, ConstraintLevel, CoordinateMode,
                    ExperienceSequence, GeoHmm, RelationMatrix,
                    embed_relations)


@dataclass
class LearnConfig:
    """Knobs for the EM loop; defaults suit desk-scale experiments."""

    constraint_level: ConstraintLevel = ConstraintLevel.ANTISYMMETRIC
    mode: CoordinateMode | None = None      # None: inherit from the model
    use_odometry: bool = True
    max_iters: int = 200
    rel_tol: float = 1e-6
    var_floor: float = VAR_FLOOR
    kappa_max: float = KAPPA_MAX
    spread_damping: float = 1.0
    trans_pseudocount: float = 0.0
    obs_pseudocount: float = 0.0
    held_weight_threshold: float = 1.0
    density_floor: float | None = None
    antisym_burn_in: int = 0    # additive level only: antisym-only iterations first
    rng_seed: int = 0


@dataclass
class LearnReport:
    iterations_run: int
    loglik_trace: list
    converged: bool
    monotonicity_violations: list = field(default_factory=list)


def update_transitions(post: Posteriors, prev_A: np.ndarray,
                       pseudocount: float = 0.0) -> np.ndarray:
    """Expected transitions out of i into j over expected visits to i.

    Rows that received no posterior weight keep the previous row. A
    positive pseudocount adds that much mass per cell before
    normalization (MAP smoothing; keeps rare transitions off exact 0).
    """
    num = post.xi.sum(axis=0) + pseudocount
    den = post.gamma[:-1].sum(axis=0)
    A = np.array(prev_A, dtype=float, copy=True)
    live = den > 0.0 if pseudocount == 0.0 else np.ones_like(den, dtype=bool)
    A[live] = num[live] / num[live].sum(axis=1, keepdims=True)
    return A


def update_observations(post: Posteriors, e: ExperienceSequence,
                        prev_B, pseudocount: float = 0.0) -> tuple:
    """Per-dimension expected symbol counts, column-normalized per state.

    A positive pseudocount is added per cell before normalization.
    """
    gamma = post.gamma
    den = gamma.sum(axis=0)
    live = den > 0.0 if pseudocount == 0.0 else np.ones_like(den, dtype=bool)
    out = []
    for i, b_prev in enumerate(prev_B):
        counts = np.full_like(np.asarray(b_prev, dtype=float), pseudocount)
        np.add.at(counts, e.observations[:, i], gamma)
        b = np.array(b_prev, dtype=float, copy=True)
        b[:, live] = counts[:, live] / counts[:, live].sum(axis=0)
        out.append(b)
    return tuple(out)


def _pair_sums(post: Posteriors, e: ExperienceSequence):
    """Per-direction sums over time of xi-weighted reading statistics."""
    xi = post.xi
    rd = e.readings
    s0 = xi.sum(axis=0)
    sx = np.einsum("tij,t->ij", xi, rd[:, 0])
    sy = np.einsum("tij,t->ij", xi, rd[:, 1])
    ssin = np.einsum("tij,t->ij", xi, np.sin(rd[:, 2]))
    scos = np.einsum("tij,t->ij", xi, np.cos(rd[:, 2]))
    return s0, sx, sy, ssin, scos


PAIR_WEIGHT_TINY = 1e-12


def _lagged_theta_means(s0, ssin, scos, kappa_old, mu_old):
    """Anti-symmetric heading means with lagged concentrations.

    Solves the stationarity condition of the paired von Mises likelihood
    for mu[i,j] = -mu[j,i] with the previous concentrations as weights;
    the result is exactly anti-symmetric. Pairs without weight keep the
    old mean.
    """
    p = kappa_old * ssin
    q = kappa_old * scos
    num = p - p.T
    den = q + q.T
    mu = wrap_angle(np.arctan2(num, den))
    dataless = (s0 + s0.T) <= PAIR_WEIGHT_TINY
    mu = np.where(dataless, mu_old, mu)
    np.fill_diagonal(mu, 0.0)
    return mu


def _spread_updates(post: Posteriors, e: ExperienceSequence, R_old,
                    mu_x, mu_y, mu_theta, var_floor, kappa_max,
                    damping: float = 0.0):
    """Variances against the new means (normal dims) and concentrations
    against the new mean directions (heading), per direction.

    Directions with zero posterior weight keep the old parameters. With
    damping > 0, that many pseudo-observations drawn at the previous
    parameters are blended into each refit; the damped value lies between
    the old value and the conditional maximizer, so expected
    complete-data likelihood still ascends, while near-zero-weight pairs
    can no longer collapse onto razor-thin spreads.
    """
    xi = post.xi
    rd = e.readings
    s0 = xi.sum(axis=0)
    live = s0 > 0.0
    denom = s0 + damping

    def fit_var(values, mu, old):
        resid = values[:, None, None] - mu[None, :, :]
        num = np.einsum("tij,tij->ij", xi, resid * resid)
        out = np.array(old, copy=True)
        out[live] = np.maximum(
            (num[live] + damping * old[live]) / denom[live], var_floor)
        return out

    var_x = fit_var(rd[:, 0], mu_x, R_old.var_x)
    var_y = fit_var(rd[:, 1], mu_y, R_old.var_y)

    ssin = np.einsum("tij,t->ij", xi, np.sin(rd[:, 2]))
    scos = np.einsum("tij,t->ij", xi, np.cos(rd[:, 2]))
    resultant = np.zeros_like(s0)
    resultant[live] = (np.cos(mu_theta[live]) * scos[live]
                       + np.sin(mu_theta[live]) * ssin[live]) / s0[live]
    if damping > 0.0:
        old_resultant = bessel_ratio_array(
            np.clip(R_old.kappa_theta, 0.0, KAPPA_MAX))
        resultant[live] = ((s0[live] * resultant[live]
                            + damping * old_resultant[live]) / denom[live])
    kappa = np.array(R_old.kappa_theta, copy=True)
    kappa[live] = np.minimum(
        resultant_to_kappa_array(np.clip(resultant[live], 0.0, 1.0)),
        kappa_max)
    # Diagonals are pinned, not reestimated.
    n = s0.shape[0]
    idx = np.arange(n)
    for out, old in ((var_x, R_old.var_x), (var_y, R_old.var_y),
                     (kappa, R_old.kappa_theta)):
        out[idx, idx] = old[idx, idx]
    return var_x, var_y, kappa


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def update_relations_antisym(post: Posteriors, e: ExperienceSequence,
                             R_old: RelationMatrix, mode: CoordinateMode,
                             var_floor: float = VAR_FLOOR,
                             kappa_max: float = KAPPA_MAX,
                             damping: float = 0.0) -> RelationMatrix:
    """One lag-behind anti-symmetric reestimation of the relation matrix.

    Means are computed from both traversal directions with the previous
    variances (heading: previous concentrations) as weights; variances
    and concentrations are then refit against the new means. Pairs with
    no posterior weight in either direction keep their old entries.
    """
    s0, sx, sy, ssin, scos = _pair_sums(post, e)
    n = R_old.n_states
    dataless = (s0 + s0.T) <= PAIR_WEIGHT_TINY

    mu_theta = _lagged_theta_means(s0, ssin, scos, R_old.kappa_theta,
                                   R_old.mu_theta)

    if mode is CoordinateMode.GLOBAL:
        def antisym_mean(s_val, var_old, mu_old):
            info = 1.0 / var_old
            num = s_val * info - (s_val * info).T
            den = s0 * info + (s0 * info).T
            mu = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
            mu = np.where(dataless, mu_old, mu)
            np.fill_diagonal(mu, 0.0)
            return mu

        mu_x = antisym_mean(sx, R_old.var_x, R_old.mu_x)
        mu_y = antisym_mean(sy, R_old.var_y, R_old.mu_y)
    else:
        mu_x = R_old.mu_x.copy()
        mu_y = R_old.mu_y.copy()
        for i in range(n):
            for j in range(i + 1, n):
                wf, wb = s0[i, j], s0[j, i]
                if dataless[i, j]:
                    continue
                # Backward mean is tied to the forward one through the
                # frame rotation: mu[j,i] = -G mu[i,j], G = R(mu_theta[j,i]).
                G = _rotation(mu_theta[j, i])
                Df = np.diag(1.0 / np.array([R_old.var_x[i, j],
                                             R_old.var_y[i, j]]))
                Db = np.diag(1.0 / np.array([R_old.var_x[j, i],
                                             R_old.var_y[j, i]]))
                lhs = wf * Df + wb * G.T @ Db @ G
                rhs = (Df @ np.array([sx[i, j], sy[i, j]])
                       - G.T @ Db @ np.array([sx[j, i], sy[j, i]]))
                m = np.linalg.solve(lhs, rhs)
                mu_x[i, j], mu_y[i, j] = m
                back = -G @ m
                mu_x[j, i], mu_y[j, i] = back

    var_x, var_y, kappa = _spread_updates(
        post, e, R_old, mu_x, mu_y, mu_theta, var_floor, kappa_max, damping)
    return RelationMatrix(mu_x, mu_y, mu_theta, var_x, var_y, kappa)


def update_relations_unconstrained(post: Posteriors, e: ExperienceSequence,
                                   R_old: RelationMatrix,
                                   var_floor: float = VAR_FLOOR,
                                   kappa_max: float = KAPPA_MAX,
                                   damping: float = 0.0) -> RelationMatrix:
    """Independent per-direction reestimation (diagonal still pinned)."""
    s0, sx, sy, ssin, scos = _pair_sums(post, e)
    live = s0 > 0.0
    mu_x = np.where(live, np.divide(sx, s0, out=np.zeros_like(sx),
                                    where=live), R_old.mu_x)
    mu_y = np.where(live, np.divide(sy, s0, out=np.zeros_like(sy),
                                    where=live), R_old.mu_y)
    mu_theta = np.where(live, np.arctan2(ssin, scos), R_old.mu_theta)
    for m in (mu_x, mu_y, mu_theta):
        np.fill_diagonal(m, 0.0)
    var_x, var_y, kappa = _spread_updates(
        post, e, R_old, mu_x, mu_y, mu_theta, var_floor, kappa_max, damping)
    return RelationMatrix(mu_x, mu_y, mu_theta, var_x, var_y, kappa)


def constrained_two_normal_mle(P, Q, var_floor: float = VAR_FLOOR):
    """ML estimate of (mu, var_P, var_Q) for two normal samples whose
    means are constrained to be negatives of each other.

    Profiling the variances out of the joint likelihood leaves a cubic
    stationarity condition in mu; the real root with the highest profile
    likelihood is returned. Exactly consistent constant samples collapse
    to zero variance: multi-point ones return floored variances, anything
    else degenerate raises ValueError.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.size < 1 or Q.size < 1:
        raise ValueError("both samples must be non-empty")
    n, k = P.size, Q.size
    p_bar, q_bar = P.mean(), Q.mean()
    vp, vq = P.var(), Q.var()

    if vp == 0.0 and vq == 0.0:
        if q_bar == -p_bar and not (n == 1 and k == 1):
            return float(p_bar), var_floor, var_floor
        raise ValueError("degenerate zero-variance samples")
    if vp == 0.0 or vq == 0.0:
        raise ValueError("degenerate zero-variance sample")

    # n (p_bar - mu) (vq + (q_bar + mu)^2) = k (q_bar + mu) (vp + (p_bar - mu)^2)
    left = n * np.polymul([-1.0, p_bar], [1.0, 2.0 * q_bar, q_bar ** 2 + vq])
    right = k * np.polymul([1.0, q_bar], [1.0, -2.0 * p_bar, p_bar ** 2 + vp])
    roots = np.roots(np.polysub(left, right))
    real = roots[np.abs(roots.imag) < 1e-9].real
    if real.size == 0:
        raise ValueError("no real stationary point found")

    def profile_loglik(mu):
        sp2 = vp + (p_bar - mu) ** 2
        sq2 = vq + (q_bar + mu) ** 2
        return -0.5 * (n * np.log(sp2) + k * np.log(sq2))

    best = real[np.argmax([profile_loglik(m) for m in real])]
    sp2 = vp + (p_bar - best) ** 2
    sq2 = vq + (q_bar + best) ** 2
    return float(best), float(max(sp2, var_floor)), float(max(sq2, var_floor))


class _OffsetUnionFind:
    """Union-find tracking each node's scalar offset from its root."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.offset = [0.0] * n

    def find(self, i: int):
        if self.parent[i] == i:
            return i, 0.0
        root, above = self.find(self.parent[i])
        self.parent[i] = root
        self.offset[i] += above
        return root, self.offset[i]

    def union(self, i: int, j: int, delta: float) -> bool:
        """Impose value[j] - value[i] = delta; False if already connected."""
        ri, oi = self.find(i)
        rj, oj = self.find(j)
        if ri == rj:
            return False
        self.parent[rj] = ri
        self.offset[rj] = oi + delta - oj
        return True


def solve_positions(targets, n: int, anchor: int = 0) -> np.ndarray:
    """Weighted least-squares embedding of difference constraints.

    targets is an iterable of (i, j, value, weight) meaning
    value ~ x[j] - x[i] with the given positive weight. Solved per
    connected component of the constraint graph; the given anchor (or the
    lowest-index node of each other component) is fixed at 0.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= anchor < n:
        raise ValueError("anchor out of range")
    lap = np.zeros((n, n))
    rhs = np.zeros(n)
    uf = _OffsetUnionFind(n)
    for i, j, value, weight in targets:
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        if weight == 0 or i == j:
            continue
        lap[i, i] += weight
        lap[j, j] += weight
        lap[i, j] -= weight
        lap[j, i] -= weight
        rhs[j] += weight * value
        rhs[i] -= weight * value
        uf.union(i, j, 0.0)

    components = {}
    for node in range(n):
        root, _ = uf.find(node)
        components.setdefault(root, []).append(node)

    x = np.zeros(n)
    for members in components.values():
        pin = anchor if anchor in members else min(members)
        free = [m for m in members if m != pin]
        if not free:
            continue
        sub = lap[np.ix_(free, free)]
        x[free] = np.linalg.solve(sub, rhs[free])
    return x


def project_headings(raw_mu_theta, weights, tau: float,
                     theta_ref=None) -> tuple:
    """Map pairwise heading estimates onto an additive assignment.

    Pairs whose combined weight reaches tau are held: their raw values
    are reproduced exactly as long as they are mutually consistent
    (conflicting cycles demote the lowest-weight member until the held
    set is consistent). The remaining pairs are fit by weighted least
    squares over per-state headings, with each raw angle unwrapped to
    the branch nearest the reference embedding (theta_ref, or a
    spanning-forest walk of the raw estimates when absent).

    Returns (theta, mu_theta): per-state headings with theta[0] = 0 and
    the induced additive matrix wrap(theta[j] - theta[i]).
    """
    raw = np.asarray(raw_mu_theta, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = raw.shape[0]
    pair_w = w + w.T

    pairs = [(pair_w[i, j], i, j)
             for i in range(n) for j in range(i + 1, n) if pair_w[i, j] > 0]
    pairs.sort(key=lambda item: (-item[0], item[1], item[2]))

    if theta_ref is None:
        ref = np.zeros(n)
        ref_uf = _OffsetUnionFind(n)
        for _, i, j in pairs:
            ref_uf.union(i, j, raw[i, j])
        for node in range(n):
            root, off = ref_uf.find(node)
            ref[node] = off
    else:
        ref = np.asarray(theta_ref, dtype=float)

    held = _OffsetUnionFind(n)
    soft = []
    for weight, i, j in pairs:
        if weight >= tau:
            ri, oi = held.find(i)
            rj, oj = held.find(j)
            if ri != rj:
                held.union(i, j, raw[i, j])
                continue
            if abs(wrap_angle((oj - oi) - raw[i, j])) <= 1e-9:
                continue  # redundant but consistent: nothing to add
        soft.append((weight, i, j))  # below tau, or demoted cycle closer

    roots = sorted({held.find(node)[0] for node in range(n)})
    root_index = {r: idx for idx, r in enumerate(roots)}
    targets = []
    for weight, i, j in soft:
        ri, oi = held.find(i)
        rj, oj = held.find(j)
        if ri == rj:
            continue
        pred = ref[j] - ref[i]
        unwrapped = pred + wrap_angle(raw[i, j] - pred)
        targets.append((root_index[ri], root_index[rj],
                        unwrapped - (oj - oi), weight))
    anchor_root = root_index[held.find(0)[0]]
    offsets = solve_positions(targets, len(roots), anchor=anchor_root)

    theta = np.zeros(n)
    for node in range(n):
        root, off = held.find(node)
        theta[node] = offsets[root_index[root]] + off
    theta -= theta[0]
    mu_theta = wrap_angle(theta[None, :] - theta[:, None])
    return wrap_angle(theta), mu_theta


def update_relations_additive(post: Posteriors, e: ExperienceSequence,
                              R_old: RelationMatrix, mode: CoordinateMode,
                              cfg: LearnConfig,
                              theta_ref=None) -> tuple:
    """Fully additive reestimation via per-state coordinates.

    Headings: lag-behind anti-symmetric estimates projected onto an
    additive assignment (held entries weighted by expected transition
    counts). Positions: per-pair weighted mean readings, rotated to the
    global frame first in relative mode, fed to the least-squares
    embedding with information weights from the lagged variances. All
    pair means are then differences of coordinates, hence exactly
    additive. Returns (relations, theta) with theta reusable as the next
    projection reference.
    """
    s0, sx, sy, ssin, scos = _pair_sums(post, e)
    n = R_old.n_states

    raw_theta = _lagged_theta_means(s0, ssin, scos, R_old.kappa_theta,
                                    R_old.mu_theta)
    theta, mu_theta = project_headings(raw_theta, s0,
                                       cfg.held_weight_threshold, theta_ref)

    live = s0 > 0.0
    vbar_x = np.divide(sx, s0, out=np.zeros_like(sx), where=live)
    vbar_y = np.divide(sy, s0, out=np.zeros_like(sy), where=live)
    if mode is CoordinateMode.RELATIVE:
        c = np.cos(theta)[:, None]
        s = np.sin(theta)[:, None]
        gx = vbar_x * c - vbar_y * s
        gy = vbar_x * s + vbar_y * c
    else:
        gx, gy = vbar_x, vbar_y

    targets_x, targets_y = [], []
    for i in range(n):
        for j in range(n):
            if i == j or not live[i, j]:
                continue
            targets_x.append((i, j, gx[i, j], s0[i, j] / R_old.var_x[i, j]))
            targets_y.append((i, j, gy[i, j], s0[i, j] / R_old.var_y[i, j]))
    pos_x = solve_positions(targets_x, n, anchor=0)
    pos_y = solve_positions(targets_y, n, anchor=0)

    mu_x, mu_y, mu_theta_embed = embed_relations(pos_x, pos_y, theta, mode)

    var_x, var_y, kappa = _spread_updates(
        post, e, R_old, mu_x, mu_y, mu_theta_embed,
        cfg.var_floor, cfg.kappa_max, cfg.spread_damping)
    rel = RelationMatrix(mu_x, mu_y, mu_theta_embed, var_x, var_y, kappa)
    return rel, theta


def em_learn(e: ExperienceSequence, initial: GeoHmm, cfg: LearnConfig,
             on_iteration=None) -> tuple:
    """Generalized-EM loop: E-step posteriors, M-step constrained updates.

    Stops when the relative log-likelihood improvement falls below
    cfg.rel_tol or after cfg.max_iters M-steps. The report records the
    full trace and any decrease beyond 1e-8 relative (none are expected
    below the additive level; the heading projection is monitored).

    An M-step that lowers the log-likelihood is rejected and retried
    with the relation matrix held at its previous (still consistent)
    value; updating only A and B given fixed relations ascends the
    likelihood exactly, so the trace never decreases. The attempted drop
    is recorded in monotonicity_violations. Anti-symmetric and
    unconstrained relation updates ascend the expected complete-data
    likelihood exactly, so such rejections can only fire at the additive
    level (where the heading projection carries no guarantee). If even
    the relations-held step fails to improve, the run has converged.

    on_iteration, if given, is called as on_iteration(k, model) after
    every M-step.
    """
    mode = cfg.mode or initial.mode
    if mode is not initial.mode:
        raise ValueError("config mode %s conflicts with model mode %s"
                         % (mode, initial.mode))
    model = initial
    trellis = forward_backward(model, e, use_odometry=cfg.use_odometry,
                               density_floor=cfg.density_floor)
    trace = [trellis.loglik]
    violations = []
    converged = False
    theta_ref = None

    for it in range(1, cfg.max_iters + 1):
        post = posteriors(trellis, model, e, use_odometry=cfg.use_odometry)
        new_A = update_transitions(post, model.A, cfg.trans_pseudocount)
        new_B = update_observations(post, e, model.B, cfg.obs_pseudocount)
        relations = model.relations
        if cfg.use_odometry:
            level = cfg.constraint_level
            if (level is ConstraintLevel.ADDITIVE
                    and it <= cfg.antisym_burn_in):
                level = ConstraintLevel.ANTISYMMETRIC
            if level is ConstraintLevel.UNCONSTRAINED:
                relations = update_relations_unconstrained(
                    post, e, model.relations, cfg.var_floor, cfg.kappa_max,
                    cfg.spread_damping)
            elif level is ConstraintLevel.ANTISYMMETRIC:
                relations = update_relations_antisym(
                    post, e, model.relations, mode, cfg.var_floor,
                    cfg.kappa_max, cfg.spread_damping)
            else:
                relations, theta_ref = update_relations_additive(
                    post, e, model.relations, mode, cfg, theta_ref)
        candidate = GeoHmm(n_states=model.n_states, obs_dims=model.obs_dims,
                           A=new_A, B=new_B, start_state=model.start_state,
                           relations=relations, mode=mode)
        new_trellis = forward_backward(candidate, e,
                                       use_odometry=cfg.use_odometry,
                                       density_floor=cfg.density_floor)
        previous = trace[-1]
        if new_trellis.loglik < previous:
            violations.append((it, float(previous - new_trellis.loglik)))
            candidate = GeoHmm(n_states=model.n_states,
                               obs_dims=model.obs_dims, A=new_A, B=new_B,
                               start_state=model.start_state,
                               relations=model.relations, mode=mode)
            new_trellis = forward_backward(candidate, e,
                                           use_odometry=cfg.use_odometry,
                                           density_floor=cfg.density_floor)
            if new_trellis.loglik < previous:
                converged = True
                break
        if on_iteration is not None:
            on_iteration(it, candidate)
        model, trellis = candidate, new_trellis
        trace.append(trellis.loglik)
        if trellis.loglik - previous < cfg.rel_tol * abs(previous):
            converged = True
            break

    report = LearnReport(iterations_run=len(trace) - 1, loglik_trace=trace,
                         converged=converged,
                         monotonicity_violations=violations)
    return model, report
