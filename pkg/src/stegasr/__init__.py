"""stegasr: hide text in audio as adversarial perturbations that only a
private CTC speech recognizer can read back."""

from .audio_io import AudioClip, AudioFormatError, read_wav, resample, write_wav
from .corpus import (
    Corpus,
    ModelFileError,
    Utterance,
    gen_corpus,
    load_model,
    make_carriers,
    save_model,
    synth_utterance,
    train,
)
from .ctc import Alphabet, DEFAULT_ALPHABET, ctc_loss, greedy_decode
from .dsp import (
    FeatureConfig,
    attack_awgn,
    attack_echo,
    attack_lowpass,
    attack_resample,
    features_backward,
    features_forward,
    linf_norm,
    snr_db,
)
from .embedder import EmbedConfig, EmbedReport, InfeasibleTextError, embed, extract
from .nnet import AcousticModel, AdamState, adam_step, init_model

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioFormatError",
    "read_wav",
    "write_wav",
    "resample",
    "FeatureConfig",
    "features_forward",
    "features_backward",
    "attack_awgn",
    "attack_resample",
    "attack_lowpass",
    "attack_echo",
    "snr_db",
    "linf_norm",
    "Alphabet",
    "DEFAULT_ALPHABET",
    "ctc_loss",
    "greedy_decode",
    "AcousticModel",
    "AdamState",
    "adam_step",
    "init_model",
    "Corpus",
    "Utterance",
    "ModelFileError",
    "gen_corpus",
    "synth_utterance",
    "make_carriers",
    "train",
    "save_model",
    "load_model",
    "EmbedConfig",
    "EmbedReport",
    "InfeasibleTextError",
    "embed",
    "extract",
]
