"""Synthetic tone corpus, acoustic-model training, and model files.

The corpus renders each character as a fixed two-sine chord (a distinct
frequency pair per character, DTMF style) over a noise floor. That keeps
the whole pipeline self-contained: the private model trains from nothing
in well under a minute, fully deterministically, and tests never need an
external dataset. Real recordings can be substituted through the manifest
format at any time.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, read_wav, write_wav
from .ctc import Alphabet, DEFAULT_ALPHABET, ctc_loss, greedy_decode, min_frames
from .dsp import FeatureConfig, FeatureMatrix, features_forward
from .nnet import AcousticModel, AdamState, adam_step, backward, forward, init_model

SAMPLE_RATE = 16000
CHAR_SECONDS = 0.1
RAMP_SECONDS = 0.005
PAD_SECONDS = 0.1
TONE_AMP = 6000.0
NOISE_SNR_DB = 30.0
F1_BASE, F1_STEP = 400.0, 35.0
F2_BASE, F2_STEP = 1500.0, 60.0

MODEL_MAGIC = b"SWAM1"


class ModelFileError(ValueError):
    """Corrupt, truncated, or wrong-version model file."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Utterance:
    clip: AudioClip
    transcript: str

    def __post_init__(self):
        if not self.transcript:
            raise ValueError("transcript must be non-empty")


@dataclass
class Corpus:
    train: list[Utterance]
    heldout: list[Utterance]


def char_tone_freqs(index: int) -> tuple[float, float]:
    """Frequency pair for alphabet index `index`; injective by design."""
    return F1_BASE + F1_STEP * index, F2_BASE + F2_STEP * index


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def synth_utterance(
    text: str, seed: int, alphabet: Alphabet = DEFAULT_ALPHABET
) -> Utterance:
    """Render `text` as 100 ms chords with 5 ms raised-cosine ramps,
    100 ms of noise-only padding on both ends, and a 30 dB noise floor.
    Deterministic in (text, seed); samples are integer-valued like a real
    16-bit capture."""
    labels = alphabet.encode(text)
    if labels.size == 0:
        raise ValueError("cannot synthesize an empty transcript")
    n_char = int(round(CHAR_SECONDS * SAMPLE_RATE))
    n_ramp = int(round(RAMP_SECONDS * SAMPLE_RATE))
    n_pad = int(round(PAD_SECONDS * SAMPLE_RATE))

    env = np.ones(n_char)
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_ramp) / n_ramp))
    env[:n_ramp] = ramp
    env[-n_ramp:] = ramp[::-1]
    t = np.arange(n_char) / SAMPLE_RATE

    tones = []
    for k in labels:
        f1, f2 = char_tone_freqs(int(k))
        chord = TONE_AMP * (np.sin(2 * np.pi * f1 * t) + np.sin(2 * np.pi * f2 * t))
        tones.append(chord * env)
    clean = np.concatenate(tones)

    total = n_pad + clean.size + n_pad
    signal = np.zeros(total)
    signal[n_pad : n_pad + clean.size] = clean
    noise_std = np.sqrt(float(np.mean(clean * clean)) / 10.0 ** (NOISE_SNR_DB / 10.0))
    noise = np.random.default_rng(seed).standard_normal(total) * noise_std
    samples = np.rint(signal + noise)
    return Utterance(AudioClip(samples, SAMPLE_RATE), text)


def random_transcript(
    length: int,
    rng: np.random.Generator,
    alphabet: Alphabet = DEFAULT_ALPHABET,
    no_adjacent_repeat: bool = True,
) -> str:
    """Random transcript over the alphabet. Adjacent repeats are avoided
    by default: a repeated character renders as one uninterrupted chord,
    which no frame-level recognizer can split reliably."""
    symbols = alphabet.symbols
    out = [symbols[rng.integers(len(symbols))]]
    while len(out) < length:
        c = symbols[rng.integers(len(symbols))]
        if no_adjacent_repeat and c == out[-1]:
            continue
        out.append(c)
    return "".join(out)


def default_transcripts(
    count: int = 500, seed: int = 42, min_len: int = 5, max_len: int = 15
) -> list[str]:
    rng = np.random.default_rng(seed)
    return [
        random_transcript(int(rng.integers(min_len, max_len + 1)), rng)
        for _ in range(count)
    ]


def gen_corpus(spec, seed: int) -> Corpus:
    """Synthesize utterances and split off the last 10% as held-out.

    `spec` is a list of transcripts, or of (transcript, repetition count)
    pairs. Per-utterance noise seeds derive from (seed, index), so
    generation is order-independent and parallelizable.
    """
    texts: list[str] = []
    for entry in spec:
        if isinstance(entry, str):
            texts.append(entry)
        else:
            text, reps = entry
            texts.extend([text] * int(reps))
    if len(texts) < 10:
        raise ValueError(f"corpus spec too small to split: {len(texts)} utterances")
    utts = [synth_utterance(t, _child_seed(seed, i)) for i, t in enumerate(texts)]
    n_held = len(utts) // 10
    return Corpus(train=utts[:-n_held], heldout=utts[-n_held:])


def make_carriers(count: int, seed: int, duration: float = 3.0) -> list[Utterance]:
    """Synthetic carrier clips of the requested duration (0.1 s resolution)."""
    n_chars = int(round(duration / CHAR_SECONDS)) - 2
    if n_chars < 1:
        raise ValueError(f"duration {duration} too short for a carrier")
    rng = np.random.default_rng(seed)
    return [
        synth_utterance(random_transcript(n_chars, rng), _child_seed(seed, 10_000 + i))
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Training


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    heldout_exact: float


def _decode_rate(model: AcousticModel, featured: list[tuple[FeatureMatrix, str]]) -> float:
    if not featured:
        return float("nan")
    hits = 0
    for feats, transcript in featured:
        logits, _ = forward(model, feats)
        if greedy_decode(logits, model.alphabet) == transcript:
            hits += 1
    return hits / len(featured)


def train(
    corpus: Corpus,
    seed: int,
    epochs: int = 30,
    lr: float = 1e-3,
    hidden: tuple[int, ...] = (128, 128),
    context_radius: int = 3,
    feature_cfg: FeatureConfig = FeatureConfig(),
    alphabet: Alphabet = DEFAULT_ALPHABET,
    stop_at_perfect: bool = True,
    weight_decay: float = 0.2,
    lr_half_every: int = 10,
) -> tuple[AcousticModel, list[EpochStats]]:
    """Per-utterance Adam on the CTC loss over seeded-shuffle epochs.

    Deterministic in (corpus, seed): one generator seeds both the
    parameter init and every shuffle. Features are precomputed once per
    utterance (the waveforms never change during training), and their
    per-bin mean/std over the training set become the model's fixed input
    standardization. Decoupled weight decay plus a stepped learning-rate
    decay keep the model from memorizing the corpus noise floor, and the
    parameters from the best held-out epoch are the ones returned (the
    loop keeps bouncing between near-equivalent minima after it has fit
    the training set). Stops early once held-out decoding is perfect, if
    `stop_at_perfect`. The returned model's parameters are rounded through
    float32 so that it serializes bit-exactly.
    """
    if not corpus.train:
        raise ValueError("training corpus is empty")
    rng = np.random.default_rng(seed)
    model = init_model(feature_cfg, alphabet, hidden, context_radius, seed=seed, rng=rng)

    def featurize(utts: list[Utterance]):
        out = []
        for i, u in enumerate(utts):
            feats, _ = features_forward(u.clip, feature_cfg)
            if feats.frames.shape[0] < min_frames(u.transcript):
                raise ValueError(
                    f"utterance {i} ({u.transcript!r}) too short for its transcript"
                )
            out.append((feats, u.transcript))
        return out

    train_set = featurize(corpus.train)
    heldout_set = featurize(corpus.heldout)

    all_frames = np.concatenate([f.frames for f, _ in train_set])
    model.feat_mean = all_frames.mean(axis=0)
    model.feat_scale = np.maximum(all_frames.std(axis=0), 1e-3)

    params = model.params()
    state = AdamState.for_params(params, lr)
    log: list[EpochStats] = []
    best_rate = -1.0
    best_params = None
    for epoch in range(epochs):
        state.lr = lr * 0.5 ** (epoch // lr_half_every)
        order = rng.permutation(len(train_set))
        losses = np.empty(len(train_set))
        for j, idx in enumerate(order):
            feats, transcript = train_set[idx]
            logits, tape = forward(model, feats)
            loss, grad_logits = ctc_loss(logits, transcript, alphabet)
            losses[j] = loss
            param_grads, _ = backward(model, tape, grad_logits)
            if weight_decay:
                for p in params:
                    p *= 1.0 - state.lr * weight_decay
            try:
                adam_step(state, params, param_grads)
            except ValueError as exc:
                raise TrainingDivergedError(
                    f"epoch {epoch}, utterance {idx}: {exc}"
                ) from exc
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(f"epoch {epoch}: mean loss {mean_loss}")
        rate = _decode_rate(model, heldout_set)
        log.append(EpochStats(epoch, mean_loss, rate))
        if rate > best_rate:
            best_rate = rate
            best_params = [p.copy() for p in params]
        if stop_at_perfect and rate == 1.0:
            break

    if best_params is not None:
        for p, best in zip(params, best_params):
            p[...] = best
    for p in params:  # f32 round-trip so save/load is bit-exact
        p[...] = p.astype(np.float32)
    model.feat_mean = model.feat_mean.astype(np.float32).astype(np.float64)
    model.feat_scale = model.feat_scale.astype(np.float32).astype(np.float64)
    return model, log


# ---------------------------------------------------------------------------
# Model files


def _model_tensors(model: AcousticModel) -> list[np.ndarray]:
    """Serialization order: input standardization vectors, then parameters."""
    return [model.feat_mean, model.feat_scale] + model.params()


def save_model(model: AcousticModel, path) -> None:
    """Binary model file: magic, JSON header, float32 LE tensors, CRC-32."""
    header = {
        "feature": {
            "sample_rate": model.feature_cfg.sample_rate,
            "win_len": model.feature_cfg.win_len,
            "hop": model.feature_cfg.hop,
            "n_mels": model.feature_cfg.n_mels,
            "fmin": model.feature_cfg.fmin,
            "fmax": model.feature_cfg.fmax,
            "log_floor": model.feature_cfg.log_floor,
        },
        "arch": {
            "context_radius": model.context_radius,
            "layer_sizes": list(model.layer_sizes),
            "activation": "tanh",
        },
        "alphabet": model.alphabet.symbols,
        "train_seed": model.train_seed,
        "tensors": [list(p.shape) for p in _model_tensors(model)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bytearray()
    payload += MODEL_MAGIC
    payload += struct.pack("<I", len(blob))
    payload += blob
    for p in _model_tensors(model):
        payload += np.ascontiguousarray(p, dtype="<f4").tobytes()
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    Path(path).write_bytes(bytes(payload))


def load_model(path) -> AcousticModel:
    data = Path(path).read_bytes()
    if len(data) < len(MODEL_MAGIC) + 8:
        raise ModelFileError(f"{path}: truncated model file")
    if data[:4] != MODEL_MAGIC[:4]:
        raise ModelFileError(f"{path}: not a model file")
    if data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFileError(
            f"{path}: unsupported model version {data[4:5].decode(errors='replace')!r}"
        )
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ModelFileError(f"{path}: checksum mismatch")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + header_len > len(data) - 4:
        raise ModelFileError(f"{path}: truncated header")
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    feature_cfg = FeatureConfig(**header["feature"])
    alphabet = Alphabet(header["alphabet"])
    sizes = tuple(header["arch"]["layer_sizes"])
    shapes = [tuple(s) for s in header["tensors"]]
    n_values = sum(int(np.prod(s)) for s in shapes)
    if offset + 4 * n_values != len(data) - 4:
        raise ModelFileError(f"{path}: tensor payload size mismatch")
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors.append(arr.astype(np.float64).reshape(shape))
        offset += 4 * count
    feat_mean, feat_scale = tensors[0], tensors[1]
    weights = tensors[2::2]
    biases = tensors[3::2]
    return AcousticModel(
        feature_cfg=feature_cfg,
        alphabet=alphabet,
        context_radius=header["arch"]["context_radius"],
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        feat_mean=feat_mean,
        feat_scale=feat_scale,
        train_seed=header["train_seed"],
    )


# ---------------------------------------------------------------------------
# Manifests (one "relative/path.wav<TAB>transcript" line per utterance)


def write_corpus(utterances: list[Utterance], out_dir) -> Path:
    """Write numbered WAVs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, utt in enumerate(utterances):
        name = f"{i:04d}.wav"
        write_wav(utt.clip, out_dir / name)
        lines.append(f"{name}\t{utt.transcript}")
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_manifest(manifest_path) -> list[Utterance]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    utterances = []
    for lineno, line in enumerate(
        manifest_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            rel, transcript = line.split("\t", 1)
        except ValueError:
            raise ValueError(
                f"{manifest_path}:{lineno}: expected 'path<TAB>transcript'"
            ) from None
        utterances.append(Utterance(read_wav(base / rel), transcript))
    if not utterances:
        raise ValueError(f"{manifest_path}: no utterances")
    return utterances


def split_corpus(utterances: list[Utterance]) -> Corpus:
    """Same last-10% held-out rule as gen_corpus, for manifest input."""
    if len(utterances) < 10:
        raise ValueError(f"corpus too small to split: {len(utterances)} utterances")
    n_held = len(utterances) // 10
    return Corpus(train=utterances[:-n_held], heldout=utterances[-n_held:])
