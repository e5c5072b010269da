"""CTC loss with analytic logit gradients, plus greedy best-path decoding.

The loss sums, over every frame-level path that collapses to the target
string, the product of per-frame softmax probabilities. The recursion runs
entirely in log space (log-sum-exp) because the rest of this pipeline works
on the int16 amplitude scale and produces large logits that underflow a
linear-space recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf


@dataclass(frozen=True)
class Alphabet:
    """Character set of the recognizer; the blank class is implicit and
    always indexed after the last symbol."""

    symbols: str = "abcdefghijklmnopqrstuvwxyz "

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be unique")
        if not self.symbols:
            raise ValueError("alphabet must not be empty")

    @property
    def blank_index(self) -> int:
        return len(self.symbols)

    @property
    def num_classes(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.array([self.symbols.index(c) for c in text], dtype=np.intp)
        except ValueError:
            bad = sorted({c for c in text if c not in self.symbols})
            raise ValueError(f"characters not in alphabet: {bad!r}") from None

    def decode(self, indices) -> str:
        return "".join(self.symbols[i] for i in indices)


DEFAULT_ALPHABET = Alphabet()


def min_frames(text: str) -> int:
    """Fewest frames on which `text` can be emitted: one per character
    plus one separating blank per adjacent duplicate pair."""
    dups = sum(1 for a, b in zip(text, text[1:]) if a == b)
    return len(text) + dups


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ctc_loss(logits, target: str, alphabet: Alphabet = DEFAULT_ALPHABET):
    """Negative log-probability of `target` plus d(loss)/d(logits).

    Returns (loss, grad) where grad has the logits' shape. An infeasible
    target (more emissions required than frames available) is flagged by
    loss = +inf with an all-zero gradient rather than an exception, so
    iterative callers can observe it cheaply.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be T x C, got shape {logits.shape}")
    T, C = logits.shape
    if T < 1:
        raise ValueError("need at least one frame of logits")
    if C != alphabet.num_classes:
        raise ValueError(f"logits have {C} classes, alphabet needs {alphabet.num_classes}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite values")

    labels = alphabet.encode(target)
    if T < min_frames(target):
        return math.inf, np.zeros_like(logits)

    blank = alphabet.blank_index
    S = 2 * labels.size + 1
    ext = np.full(S, blank, dtype=np.intp)
    ext[1::2] = labels
    # A skip transition into state s jumps over one blank; it is allowed
    # only when s holds a symbol that differs from the symbol two back.
    can_skip = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    log_probs = log_softmax(logits)
    lp_ext = log_probs[:, ext]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp_ext[0, 0]
    if S > 1:
        alpha[0, 1] = lp_ext[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        move = np.concatenate(([NEG_INF], prev[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
        skip[~can_skip] = NEG_INF
        alpha[t] = lp_ext[t] + np.logaddexp(np.logaddexp(stay, move), skip)

    if S > 1:
        log_p = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    else:
        log_p = alpha[-1, -1]

    # Backward pass; beta excludes the current frame's emission so that
    # alpha + beta is the log-mass of all paths through (t, s).
    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    skip_from = np.zeros(S, dtype=bool)
    if S > 2:
        skip_from[:-2] = can_skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp_ext[t + 1]
        stay = nxt
        move = np.concatenate((nxt[1:], [NEG_INF]))
        skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
        skip[~skip_from] = NEG_INF
        beta[t] = np.logaddexp(np.logaddexp(stay, move), skip)

    posterior = np.exp(alpha + beta - log_p)
    occupancy = np.zeros((T, C))
    for s in range(S):
        occupancy[:, ext[s]] += posterior[:, s]
    grad = np.exp(log_probs) - occupancy
    return float(-log_p), grad


def greedy_decode(logits, alphabet: Alphabet = DEFAULT_ALPHABET) -> str:
    """Best-path decode: per-frame argmax, collapse repeats, drop blanks.

    Ties break toward the lowest class index (argmax convention), which
    keeps decoding deterministic.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[1] != alphabet.num_classes:
        raise ValueError(f"logits must be T x {alphabet.num_classes}")
    best = np.argmax(logits, axis=1)
    blank = alphabet.blank_index
    out = []
    prev = -1
    for idx in best:
        if idx != prev and idx != blank:
            out.append(alphabet.symbols[idx])
        prev = idx
    return "".join(out)
