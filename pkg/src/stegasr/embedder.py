"""Embed hidden text into audio as a bounded adversarial perturbation.

The embedder learns an additive perturbation, clipped elementwise to a
threshold tau, such that the private model's greedy decode of the
perturbed audio equals the hidden text. Every time the decode matches,
the candidate is saved and tau shrinks (tau <- 0.8 * min(tau, max|delta|)),
so the loop keeps trading success margin for a smaller perturbation and
returns the last, tightest success. Extraction is just a forward pass
plus greedy decoding: the model itself is the key.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import INT16_MAX, INT16_MIN, AudioClip
from .ctc import ctc_loss, greedy_decode, min_frames
from .dsp import features_backward, features_forward, linf_norm
from .nnet import AcousticModel, AdamState, adam_step, backward, forward


class InfeasibleTextError(ValueError):
    """Hidden text needs more emission frames than the carrier provides."""


@dataclass(frozen=True)
class EmbedConfig:
    """Knobs of the embedding loop.

    tau0 and attack_lr are on the int16 amplitude scale. reset_adam_on_shrink
    clears optimizer moments after each threshold shrink; default keeps them.
    """

    max_iterations: int = 500
    tau0: float = 3000.0
    shrink: float = 0.8
    attack_lr: float = 100.0
    early_stop: bool = False
    reset_adam_on_shrink: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.attack_lr <= 0:
            raise ValueError("attack_lr must be positive")


@dataclass
class EmbedReport:
    """Trajectory of one embedding run."""

    success: bool
    hidden_text: str
    delta: np.ndarray | None
    max_delta: float
    tau_history: list[float] = field(default_factory=list)
    success_iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def best_loss(self) -> float:
        return min(self.losses) if self.losses else float("inf")

    def to_dict(self) -> dict:
        """JSON-friendly view; omits the raw perturbation (the stego WAV
        next to the report carries it implicitly)."""
        return {
            "success": self.success,
            "hidden_text": self.hidden_text,
            "max_delta": self.max_delta,
            "tau_history": self.tau_history,
            "success_iterations": self.success_iterations,
            "iterations": self.iterations,
            "best_loss": self.best_loss,
            "losses": self.losses,
        }


def _quantize(samples: np.ndarray) -> np.ndarray:
    """Round to the integers a 16-bit WAV will actually store."""
    return np.clip(np.rint(samples), INT16_MIN, INT16_MAX)


def _decode(model: AcousticModel, samples: np.ndarray, rate: int) -> str:
    feats, _ = features_forward(AudioClip(samples, rate), model.feature_cfg)
    logits, _ = forward(model, feats)
    return greedy_decode(logits, model.alphabet)


def embed(
    model: AcousticModel,
    carrier: AudioClip,
    hidden: str,
    cfg: EmbedConfig = EmbedConfig(),
) -> tuple[AudioClip | None, EmbedReport]:
    """Optimize a perturbation so the model decodes `hidden` from the carrier.

    Each iteration: CTC loss of the current stego against the hidden text,
    one Adam step on the perturbation through the full feature/network
    chain, then an elementwise clip to [-tau, +tau]. A success event fires
    when the greedy decode matches AND still matches after rounding the
    stego to integer samples (what the WAV on disk will hold); the rounded
    candidate is saved and tau shrinks. Returns (stego, report); stego is
    None when no iteration succeeded (report carries the diagnostics).
    """
    model.alphabet.encode(hidden)  # reject out-of-alphabet characters early
    frames = model.feature_cfg.frame_count(len(carrier))
    if frames < 1:
        raise ValueError(
            f"carrier too short: {len(carrier)} samples, need {model.feature_cfg.win_len}"
        )
    needed = min_frames(hidden)
    if needed > frames:
        raise InfeasibleTextError(
            f"hidden text needs {needed} frames but the carrier has {frames} "
            f"({frames / model.feature_cfg.frame_rate:.2f} s at "
            f"{model.feature_cfg.frame_rate:.0f} frames/s)"
        )

    x = carrier.samples
    rate = carrier.sample_rate
    delta = np.zeros_like(x)
    state = AdamState.for_params([delta], cfg.attack_lr)
    tau = cfg.tau0

    best_stego: np.ndarray | None = None
    tau_history: list[float] = []
    success_iterations: list[int] = []
    losses: list[float] = []
    iterations_run = 0

    # Iteration i's gradient forward pass doubles as the decode check of
    # the perturbation produced at the end of iteration i-1, so each
    # update is verified exactly once at the cost of a single extra
    # forward pass after the loop.
    for i in range(cfg.max_iterations + 1):
        stego = x + delta
        feats, feat_ctx = features_forward(AudioClip(stego, rate), model.feature_cfg)
        logits, tape = forward(model, feats)

        if i > 0 and greedy_decode(logits, model.alphabet) == hidden:
            rounded = _quantize(stego)
            if _decode(model, rounded, rate) == hidden:
                tau = cfg.shrink * min(tau, linf_norm(delta))
                tau_history.append(tau)
                success_iterations.append(i)
                best_stego = rounded
                if cfg.reset_adam_on_shrink:
                    state = AdamState.for_params([delta], cfg.attack_lr)
                if cfg.early_stop:
                    iterations_run = i
                    break
            # else: rounding broke the decode; drop the candidate and
            # keep optimizing under the unchanged threshold.

        if i == cfg.max_iterations:
            iterations_run = i
            break

        loss, grad_logits = ctc_loss(logits, hidden, model.alphabet)
        losses.append(loss)
        _, grad_feats = backward(model, tape, grad_logits)
        grad_delta = features_backward(feat_ctx, grad_feats)
        adam_step(state, [delta], [grad_delta])
        np.clip(delta, -tau, tau, out=delta)

    if best_stego is None:
        report = EmbedReport(
            success=False,
            hidden_text=hidden,
            delta=None,
            max_delta=0.0,
            tau_history=tau_history,
            success_iterations=success_iterations,
            losses=losses,
            iterations=iterations_run,
        )
        return None, report

    if _decode(model, best_stego, rate) != hidden:  # re-verify at return
        raise AssertionError("saved stego no longer decodes to the hidden text")
    final_delta = best_stego - x
    report = EmbedReport(
        success=True,
        hidden_text=hidden,
        delta=final_delta,
        max_delta=linf_norm(final_delta),
        tau_history=tau_history,
        success_iterations=success_iterations,
        losses=losses,
        iterations=iterations_run,
    )
    return AudioClip(best_stego, rate), report


def extract(model: AcousticModel, clip: AudioClip) -> str:
    """Recover text from a clip: forward pass plus greedy decode, nothing
    else. On non-stego audio this simply transcribes whatever is there."""
    feats, _ = features_forward(clip, model.feature_cfg)
    logits, _ = forward(model, feats)
    return greedy_decode(logits, model.alphabet)
