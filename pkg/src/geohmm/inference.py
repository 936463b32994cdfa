"""Scaled forward/backward recursions and posterior tables.

The forward variable folds in, beside the usual transition and
observation terms, the density of the odometric reading recorded on each
transition:

    alpha_t(j) = sum_i alpha_{t-1}(i) A[i,j] f(r_t | R[i,j]) b_t(j)

Relation densities can be orders of magnitude above or below 1, so alpha
rows are normalized at every step and the same scales are reused for
beta; the log-likelihood is the sum of the log scale factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circstats import LOG_TWO_PI, log_bessel_i0
from .model import (ExperienceSequence, GeoHmm, ImpossibleSequenceError)


@dataclass
class Trellis:
    """Scaled forward/backward tables for one (model, sequence) pair."""

    alpha: np.ndarray          # (T, N), rows sum to 1
    beta: np.ndarray           # (T, N), scaled with the alpha scales
    scales: np.ndarray         # (T,) positive normalizers
    loglik: float
    use_odometry: bool
    _emit: np.ndarray = field(repr=False, default=None)    # (T, N)
    _pairf: np.ndarray = field(repr=False, default=None)   # (T-1, N, N)


@dataclass
class Posteriors:
    """State-occupation (gamma) and state-transition (xi) tables.

    gamma[t, i] = Pr(q_t = i | E). xi[t, i, j] = Pr(q_t = i, q_{t+1} = j | E);
    slab t weighs the reading recorded on the transition t -> t+1.
    """

    gamma: np.ndarray          # (T, N)
    xi: np.ndarray             # (T-1, N, N)


def obs_prob(model: GeoHmm, state: int, v) -> float:
    """Probability of observation vector v in the given state."""
    v = np.asarray(v, dtype=int)
    if v.shape != (model.n_obs_dims,):
        raise ValueError("observation vector must have length %d"
                         % model.n_obs_dims)
    out = 1.0
    for i, b in enumerate(model.B):
        if not 0 <= v[i] < model.obs_dims[i]:
            raise ValueError("symbol %d out of alphabet on dimension %d"
                             % (v[i], i))
        out *= b[v[i], state]
    return float(out)


def emission_probs(model: GeoHmm, e: ExperienceSequence) -> np.ndarray:
    """(T, N) matrix of per-state observation-vector probabilities."""
    obs = e.observations
    if obs.shape[1] != model.n_obs_dims:
        raise ValueError("sequence has %d observation dimensions, model has %d"
                         % (obs.shape[1], model.n_obs_dims))
    for i, size in enumerate(model.obs_dims):
        bad = np.nonzero(obs[:, i] >= size)[0]
        if bad.size:
            raise ValueError("symbol %d out of alphabet on dimension %d at step %d"
                             % (obs[bad[0], i], i, bad[0]))
    out = np.ones((len(e), model.n_states))
    for i, b in enumerate(model.B):
        out *= b[obs[:, i], :]
    return out


def relation_density_tensor(model: GeoHmm, e: ExperienceSequence) -> np.ndarray:
    """(T-1, N, N) tensor of reading densities f(r_{t+1} | R[i,j])."""
    R = model.relations
    rd = e.readings
    dx = rd[:, 0, None, None]
    dy = rd[:, 1, None, None]
    dt = rd[:, 2, None, None]
    log_norm_x = -0.5 * np.log(2.0 * np.pi * R.var_x)
    log_norm_y = -0.5 * np.log(2.0 * np.pi * R.var_y)
    log_i0 = np.vectorize(log_bessel_i0, otypes=[float])(R.kappa_theta)
    logf = (log_norm_x - 0.5 * (dx - R.mu_x) ** 2 / R.var_x
            + log_norm_y - 0.5 * (dy - R.mu_y) ** 2 / R.var_y
            + R.kappa_theta * np.cos(dt - R.mu_theta) - LOG_TWO_PI - log_i0)
    return np.exp(logf)


def forward_backward(model: GeoHmm, e: ExperienceSequence,
                     use_odometry: bool = True,
                     density_floor: float | None = None) -> Trellis:
    """Run the scaled recursions; raises ImpossibleSequenceError if some
    step has zero total probability.

    With use_odometry off, all reading densities are replaced by 1 and the
    recursion reduces to the plain observation-only HMM.
    """
    T, N = len(e), model.n_states
    emit = emission_probs(model, e)
    if use_odometry and T > 1:
        pairf = relation_density_tensor(model, e)
        if density_floor is not None:
            pairf = np.maximum(pairf, density_floor)
    else:
        pairf = np.ones((T - 1, N, N))

    alpha = np.zeros((T, N))
    scales = np.zeros(T)
    alpha[0, model.start_state] = emit[0, model.start_state]
    scales[0] = alpha[0].sum()
    if scales[0] <= 0.0:
        raise ImpossibleSequenceError(0)
    alpha[0] /= scales[0]
    for t in range(1, T):
        step = alpha[t - 1] @ (model.A * pairf[t - 1]) * emit[t]
        scales[t] = step.sum()
        if scales[t] <= 0.0 or not np.isfinite(scales[t]):
            raise ImpossibleSequenceError(t)
        alpha[t] = step / scales[t]

    beta = np.zeros((T, N))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (model.A * pairf[t]) @ (emit[t + 1] * beta[t + 1]) / scales[t + 1]

    return Trellis(alpha=alpha, beta=beta, scales=scales,
                   loglik=float(np.sum(np.log(scales))),
                   use_odometry=use_odometry, _emit=emit, _pairf=pairf)


def posteriors(trellis: Trellis, model: GeoHmm, e: ExperienceSequence,
               use_odometry: bool = True) -> Posteriors:
    """Gamma and xi tables from a trellis computed for the same inputs."""
    T, N = len(e), model.n_states
    if trellis.alpha.shape != (T, N) or trellis.use_odometry != use_odometry:
        raise ValueError("trellis does not match the given model/sequence/flag")

    ab = trellis.alpha * trellis.beta
    gamma = ab / ab.sum(axis=1, keepdims=True)

    xi = np.zeros((T - 1, N, N))
    if T > 1:
        emit_beta = trellis._emit[1:] * trellis.beta[1:]       # (T-1, N)
        xi = (trellis.alpha[:-1, :, None]
              * (model.A[None, :, :] * trellis._pairf)
              * emit_beta[:, None, :])
        xi /= xi.sum(axis=(1, 2), keepdims=True)
    return Posteriors(gamma=gamma, xi=xi)
