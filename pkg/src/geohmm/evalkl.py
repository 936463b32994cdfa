"""Sampled KL divergence between the observation-string distributions of
two models, plus an exhaustive variant for tiny instances.

Odometric readings are ignored on both sides, so models learned with and
without odometry are compared on equal, purely topological footing.
Values are natural-log (nats) per symbol.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .inference import emission_probs, forward_backward
from .model import ExperienceSequence, GeoHmm, ImpossibleSequenceError
from .simgen import sample_sequence

EXACT_TERM_GUARD = 10_000_000


@dataclass
class KlEstimate:
    value: float               # nats per symbol
    n_sequences: int
    seq_length: int
    std_error: float
    n_impossible: int = 0      # sequences the learned model rejected

    def __str__(self):
        if math.isinf(self.value):
            return ("KL estimate: inf (%d/%d sequences impossible under the "
                    "second model)" % (self.n_impossible, self.n_sequences))
        return "KL estimate: %.6f +- %.6f nats/symbol (n=%d, L=%d)" % (
            self.value, self.std_error, self.n_sequences, self.seq_length)


def _check_alphabets(true_model: GeoHmm, learned: GeoHmm):
    if true_model.obs_dims != learned.obs_dims:
        raise ValueError("models have different observation alphabets: "
                         "%r vs %r" % (true_model.obs_dims, learned.obs_dims))


def kl_sampled(true_model: GeoHmm, learned: GeoHmm, seq_length: int = 1000,
               n_sequences: int = 10,
               rng: np.random.Generator | None = None) -> KlEstimate:
    """Monte Carlo per-symbol KL divergence estimate.

    Sequences are drawn from the true model; both per-sequence
    log-likelihoods are computed with odometry ignored. If the learned
    model assigns zero probability to any sampled sequence, the estimate
    is flagged +inf.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    _check_alphabets(true_model, learned)
    diffs = []
    n_impossible = 0
    for _ in range(n_sequences):
        seq = sample_sequence(true_model, seq_length, rng)
        ll_true = forward_backward(true_model, seq, use_odometry=False).loglik
        try:
            ll_learned = forward_backward(learned, seq,
                                          use_odometry=False).loglik
        except ImpossibleSequenceError:
            n_impossible += 1
            continue
        diffs.append((ll_true - ll_learned) / seq_length)
    if n_impossible:
        return KlEstimate(value=math.inf, n_sequences=n_sequences,
                          seq_length=seq_length, std_error=math.inf,
                          n_impossible=n_impossible)
    diffs = np.asarray(diffs)
    std_error = (float(diffs.std(ddof=1) / np.sqrt(len(diffs)))
                 if len(diffs) > 1 else 0.0)
    return KlEstimate(value=float(diffs.mean()), n_sequences=n_sequences,
                      seq_length=seq_length, std_error=std_error)


def _string_log_prob(model: GeoHmm, obs: np.ndarray) -> float:
    """Exact log probability of one observation-vector string (no
    odometry), by the unscaled forward recursion."""
    emit = emission_probs(model, ExperienceSequence(
        observations=obs, readings=np.zeros((len(obs) - 1, 3))))
    alpha = np.zeros(model.n_states)
    alpha[model.start_state] = emit[0, model.start_state]
    for t in range(1, len(obs)):
        alpha = (alpha @ model.A) * emit[t]
    total = alpha.sum()
    return float(np.log(total)) if total > 0 else -math.inf


def kl_exact_small(true_model: GeoHmm, learned: GeoHmm, horizon: int) -> float:
    """Exhaustive per-symbol KL over all observation strings of the given
    horizon. Refuses instances beyond the enumeration guard."""
    _check_alphabets(true_model, learned)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n_vectors = int(np.prod(true_model.obs_dims))
    terms = (n_vectors * true_model.n_states) ** horizon
    if terms > EXACT_TERM_GUARD:
        raise ValueError("instance too large for exact enumeration "
                         "(%d terms > %d)" % (terms, EXACT_TERM_GUARD))

    symbol_space = list(itertools.product(
        *[range(size) for size in true_model.obs_dims]))
    total = 0.0
    for string in itertools.product(symbol_space, repeat=horizon):
        obs = np.asarray(string, dtype=int)
        lp_true = _string_log_prob(true_model, obs)
        if lp_true == -math.inf:
            continue
        lp_learned = _string_log_prob(learned, obs)
        if lp_learned == -math.inf:
            return math.inf
        total += math.exp(lp_true) * (lp_true - lp_learned)
    return total / horizon
