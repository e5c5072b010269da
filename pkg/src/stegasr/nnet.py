"""Context-window MLP acoustic model with exact reverse-mode gradients.

Each frame's input is the concatenation of its neighbours within a fixed
context radius (edges replicate), pushed through tanh hidden layers to one
logit row per frame. Gradients are derived by hand for both the parameters
(training) and the input features (perturbation attacks); both paths are
checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ctc import Alphabet, DEFAULT_ALPHABET
from .dsp import FeatureConfig, FeatureMatrix


@dataclass
class AcousticModel:
    """Parameters plus everything needed to reproduce the input pipeline.

    The feature config and alphabet ride along so a stored model is fully
    self-describing: embedding and extraction can never disagree on the
    front end. feat_mean/feat_scale standardize each mel bin before the
    context stack; they are fixed statistics of the training corpus (raw
    int16-scale log-mel has a large common-mode component that otherwise
    stalls CTC training in the constant-blank optimum), stored with the
    parameters as part of the key.
    """

    feature_cfg: FeatureConfig
    alphabet: Alphabet
    context_radius: int
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feat_mean: np.ndarray = None
    feat_scale: np.ndarray = None
    train_seed: int = 0

    def __post_init__(self):
        expected_in = self.feature_cfg.n_mels * (2 * self.context_radius + 1)
        if self.layer_sizes[0] != expected_in:
            raise ValueError(
                f"input width {self.layer_sizes[0]} does not match "
                f"{self.feature_cfg.n_mels} mels x {2 * self.context_radius + 1} frames"
            )
        if self.layer_sizes[-1] != self.alphabet.num_classes:
            raise ValueError("output width must equal the alphabet class count")
        if self.feat_mean is None:
            self.feat_mean = np.zeros(self.feature_cfg.n_mels)
        if self.feat_scale is None:
            self.feat_scale = np.ones(self.feature_cfg.n_mels)
        for name, vec in (("feat_mean", self.feat_mean), ("feat_scale", self.feat_scale)):
            if vec.shape != (self.feature_cfg.n_mels,):
                raise ValueError(f"{name} must have shape ({self.feature_cfg.n_mels},)")
        if np.any(self.feat_scale <= 0):
            raise ValueError("feat_scale entries must be positive")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]):
                raise ValueError(f"layer {i} weight shape {w.shape} mismatches sizes")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ValueError(f"layer {i} bias shape {b.shape} mismatches sizes")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; mutating entries in
        place updates the model."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_model(
    feature_cfg: FeatureConfig = FeatureConfig(),
    alphabet: Alphabet = DEFAULT_ALPHABET,
    hidden: tuple[int, ...] = (128, 128),
    context_radius: int = 3,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> AcousticModel:
    """Seeded uniform(-0.05, 0.05) initialization of all parameters."""
    if rng is None:
        rng = np.random.default_rng(seed)
    in_width = feature_cfg.n_mels * (2 * context_radius + 1)
    sizes = (in_width, *hidden, alphabet.num_classes)
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        weights.append(rng.uniform(-0.05, 0.05, size=(sizes[i], sizes[i + 1])))
        biases.append(rng.uniform(-0.05, 0.05, size=sizes[i + 1]))
    return AcousticModel(
        feature_cfg=feature_cfg,
        alphabet=alphabet,
        context_radius=context_radius,
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        train_seed=seed,
    )


@dataclass
class ActivationTape:
    """Activations cached by forward() for one backward() call. Single
    use: reading a stale tape is an error, not a silent wrong answer."""

    inputs: np.ndarray
    hidden: list[np.ndarray]
    consumed: bool = False


def _stack_context(frames: np.ndarray, radius: int) -> np.ndarray:
    T = frames.shape[0]
    offsets = np.arange(-radius, radius + 1)
    idx = np.clip(np.arange(T)[:, None] + offsets[None, :], 0, T - 1)
    return frames[idx].reshape(T, -1)


def forward(model: AcousticModel, feats: FeatureMatrix):
    """Feature frames -> logits; also returns the activation tape."""
    frames = np.asarray(feats.frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.feature_cfg.n_mels:
        raise ValueError(
            f"features must be T x {model.feature_cfg.n_mels}, got {frames.shape}"
        )
    if frames.shape[0] < 1:
        raise ValueError("need at least one feature frame")
    frames = (frames - model.feat_mean) / model.feat_scale
    x = _stack_context(frames, model.context_radius)
    hidden = []
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ w + b)
        hidden.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return logits, ActivationTape(inputs=x, hidden=hidden)


def backward(model: AcousticModel, tape: ActivationTape, grad_logits: np.ndarray):
    """Exact reverse-mode gradients for parameters and input features.

    Returns (param_grads, grad_feats) with param_grads ordered like
    model.params(). Edge-replicated context windows un-stack by summing
    every window's contribution back onto its source frame.
    """
    if tape.consumed:
        raise RuntimeError("activation tape already consumed by a previous backward()")
    tape.consumed = True
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    T = tape.inputs.shape[0]
    if grad_logits.shape != (T, model.layer_sizes[-1]):
        raise ValueError(
            f"grad_logits shape {grad_logits.shape} does not match logits "
            f"({T}, {model.layer_sizes[-1]})"
        )

    acts = [tape.inputs] + tape.hidden  # input to each affine layer
    weight_grads = [None] * len(model.weights)
    bias_grads = [None] * len(model.biases)
    d = grad_logits
    for i in range(len(model.weights) - 1, -1, -1):
        weight_grads[i] = acts[i].T @ d
        bias_grads[i] = d.sum(axis=0)
        d = d @ model.weights[i].T
        if i > 0:  # pull back through the tanh that produced acts[i]
            d = d * (1.0 - acts[i] * acts[i])
    d_stacked = d

    F = model.feature_cfg.n_mels
    r = model.context_radius
    grad_feats = np.zeros((T, F))
    rows = np.arange(T)
    for j, off in enumerate(range(-r, r + 1)):
        src = np.clip(rows + off, 0, T - 1)
        np.add.at(grad_feats, src, d_stacked[:, j * F : (j + 1) * F])
    grad_feats /= model.feat_scale  # back through the input standardization

    param_grads = []
    for gw, gb in zip(weight_grads, bias_grads):
        param_grads.append(gw)
        param_grads.append(gb)
    return param_grads, grad_feats


@dataclass
class AdamState:
    """Adam moments for one parameter list; owned by exactly one
    optimization run."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update, applied to params in place.

    Non-finite gradients reject the whole step so they can never poison
    the moment accumulators.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match the optimizer state")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ValueError(f"shape mismatch at parameter {i}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient at parameter {i}; step rejected")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
