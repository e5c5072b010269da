"""Batch evaluations: capacity, imperceptibility, security, robustness.

Each evaluation walks a set of stego clips and emits flat EvalRecord rows
(CSV) plus per-metric summaries (JSON). Success is always exact transcript
equality; there is no partial credit. The identity-channel control row is
always emitted before any attack rows so embedding regressions are
distinguishable from channel effects.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .ctc import min_frames
from .dsp import (
    attack_awgn,
    attack_echo,
    attack_lowpass,
    attack_resample,
    linf_norm,
    snr_db,
)
from .embedder import EmbedConfig, EmbedReport, embed, extract
from .nnet import AcousticModel

# Ten short command-like phrases used by the bundled evaluations; group g
# hides phrase g in all of its carriers.
EVAL_PHRASES = (
    "be quiet",
    "sing louder",
    "close the door",
    "the key is one one nine",
    "call the police",
    "happy birthday to you",
    "be careful",
    "bob is the spy",
    "help me",
    "see you at five pm",
)

METRIC_NAMES = frozenset(
    {
        "capacity_cps",
        "snr_db",
        "max_delta",
        "extract_ok",
        "attack_awgn_ok",
        "attack_resample_ok",
        "attack_lowpass_ok",
        "attack_echo_ok",
        "cross_model_ok",
    }
)


@dataclass(frozen=True)
class EvalRecord:
    """One cell of a results table."""

    carrier_id: str
    group: str
    hidden_text: str
    metric: str
    value: float
    success: bool | None = None

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class StegoItem:
    """A successful embed: carrier, stego, and the run's report."""

    carrier_id: str
    group: str
    hidden_text: str
    carrier: AudioClip
    stego: AudioClip
    report: EmbedReport


@dataclass
class EmbedFailure:
    carrier_id: str
    group: str
    hidden_text: str
    report: EmbedReport


def embed_groups(
    model: AcousticModel,
    carriers: list[AudioClip],
    cfg: EmbedConfig = EmbedConfig(),
    phrases=EVAL_PHRASES,
) -> tuple[list[StegoItem], list[EmbedFailure]]:
    """Embed phrase g into carriers[g*k : (g+1)*k], k = len(carriers)/len(phrases)."""
    if len(carriers) % len(phrases) != 0:
        raise ValueError(
            f"{len(carriers)} carriers do not divide evenly over {len(phrases)} groups"
        )
    per_group = len(carriers) // len(phrases)
    items: list[StegoItem] = []
    failures: list[EmbedFailure] = []
    for i, carrier in enumerate(carriers):
        g = i // per_group
        hidden = phrases[g]
        carrier_id = f"carrier{i:02d}"
        stego, report = embed(model, carrier, hidden, cfg)
        if stego is None:
            failures.append(EmbedFailure(carrier_id, f"g{g}", hidden, report))
        else:
            items.append(StegoItem(carrier_id, f"g{g}", hidden, carrier, stego, report))
    return items, failures


# ---------------------------------------------------------------------------
# Capacity


def capacity_payload(seconds: float, words_dropped: int = 0) -> str:
    """Dense per-second payload: ten space-separated 'hide' words per
    whole second (49 characters/s), minus `words_dropped` words."""
    n_words = 10 * int(seconds) - words_dropped
    if n_words < 1:
        raise ValueError("payload would be empty")
    return " ".join(["hide"] * n_words)


def eval_capacity(
    model: AcousticModel,
    carriers: list[AudioClip],
    cfg: EmbedConfig = EmbedConfig(),
) -> list[EvalRecord]:
    """Embed the densest feasible payload, backing off one word at a time.

    Capacity is (characters of correctly extracted text) / duration; a
    carrier where even the shortest payload fails scores zero.
    """
    records: list[EvalRecord] = []
    rates: list[float] = []
    for i, carrier in enumerate(carriers):
        carrier_id = f"carrier{i:02d}"
        duration = carrier.duration
        frames = model.feature_cfg.frame_count(len(carrier))
        capacity = 0.0
        achieved = False
        payload = ""
        for dropped in range(10 * int(duration)):
            payload = capacity_payload(duration, dropped)
            if min_frames(payload) > frames:
                continue  # over the per-frame emission ceiling
            stego, report = embed(model, carrier, payload, cfg)
            if stego is not None and extract(model, stego) == payload:
                capacity = len(payload) / duration
                achieved = True
                break
        records.append(
            EvalRecord(carrier_id, "capacity", payload if achieved else "",
                       "capacity_cps", capacity, achieved)
        )
        rates.append(capacity)
    if rates:
        records.append(
            EvalRecord("mean", "capacity", "", "capacity_cps",
                       float(np.mean(rates)), None)
        )
    return records


# ---------------------------------------------------------------------------
# Imperceptibility


def eval_imperceptibility(items: list[StegoItem], out_dir=None) -> list[EvalRecord]:
    """SNR and max|delta| per carrier/stego pair, plus corpus means.

    With `out_dir` set, also writes one difference-waveform CSV per pair
    (sample index, carrier, stego, delta) for external plotting.
    """
    records: list[EvalRecord] = []
    snrs, deltas = [], []
    for item in items:
        if len(item.carrier) != len(item.stego):
            raise ValueError(f"{item.carrier_id}: carrier/stego length mismatch")
        s = snr_db(item.carrier, item.stego)
        d = linf_norm(item.stego.samples - item.carrier.samples)
        snrs.append(s)
        deltas.append(d)
        records.append(EvalRecord(item.carrier_id, item.group, item.hidden_text,
                                  "snr_db", s, None))
        records.append(EvalRecord(item.carrier_id, item.group, item.hidden_text,
                                  "max_delta", d, None))
        if out_dir is not None:
            path = Path(out_dir) / f"{item.carrier_id}_delta.csv"
            diff = item.stego.samples - item.carrier.samples
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["sample_index", "carrier", "stego", "delta"])
                for n in range(len(item.carrier)):
                    writer.writerow(
                        [n, item.carrier.samples[n], item.stego.samples[n], diff[n]]
                    )
    if items:
        records.append(EvalRecord("mean", "", "", "snr_db", float(np.mean(snrs)), None))
        records.append(
            EvalRecord("mean", "", "", "max_delta", float(np.mean(deltas)), None)
        )
    return records


# ---------------------------------------------------------------------------
# Security


def eval_security(
    private: AcousticModel,
    variants: list[tuple[str, AcousticModel]],
    items: list[StegoItem],
    clean=None,
) -> list[EvalRecord]:
    """Extraction-success matrix over [private] + variant models.

    Per-item rows use carrier_id "model/carrierNN"; per-model aggregates
    use group "all". With `clean` (a list of Utterances), each model also
    gets a plain-transcription accuracy row (group "clean") showing the
    variants are competent recognizers that merely lack the key.
    """
    records: list[EvalRecord] = []
    for name, model in [("private", private)] + list(variants):
        hits = 0
        for item in items:
            ok = extract(model, item.stego) == item.hidden_text
            hits += ok
            records.append(
                EvalRecord(f"{name}/{item.carrier_id}", item.group, item.hidden_text,
                           "cross_model_ok", float(ok), ok)
            )
        if items:
            records.append(
                EvalRecord(name, "all", "", "cross_model_ok", hits / len(items), None)
            )
        if clean:
            clean_hits = sum(
                extract(model, utt.clip) == utt.transcript for utt in clean
            )
            records.append(
                EvalRecord(name, "clean", "", "extract_ok",
                           clean_hits / len(clean), None)
            )
    return records


# ---------------------------------------------------------------------------
# Robustness

_ATTACKS = (
    ("attack_awgn_ok", lambda clip, seed: attack_awgn(clip, 20.0, seed)),
    ("attack_resample_ok", lambda clip, seed: attack_resample(clip)),
    ("attack_lowpass_ok", lambda clip, seed: attack_lowpass(clip)),
    ("attack_echo_ok", lambda clip, seed: attack_echo(clip)),
)


def eval_robustness(
    model: AcousticModel, items: list[StegoItem], seed: int = 0
) -> list[EvalRecord]:
    """Identity-channel control first, then the four channel attacks.

    Each attack is applied independently to every stego clip before
    attempting extraction; noise seeds derive from (seed, item index).
    """
    records: list[EvalRecord] = []
    identity_hits = 0
    for item in items:
        ok = extract(model, item.stego) == item.hidden_text
        identity_hits += ok
        records.append(
            EvalRecord(item.carrier_id, item.group, item.hidden_text,
                       "extract_ok", float(ok), ok)
        )
    if items:
        records.append(
            EvalRecord("mean", "all", "", "extract_ok",
                       identity_hits / len(items), None)
        )
    for metric, apply_attack in _ATTACKS:
        hits = 0
        for j, item in enumerate(items):
            attacked = apply_attack(item.stego, seed + j)
            ok = extract(model, attacked) == item.hidden_text
            hits += ok
            records.append(
                EvalRecord(item.carrier_id, item.group, item.hidden_text,
                           metric, float(ok), ok)
            )
        if items:
            records.append(EvalRecord("mean", "all", "", metric, hits / len(items), None))
    return records


# ---------------------------------------------------------------------------
# Report files


def write_records_csv(records: list[EvalRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["carrier_id", "group", "hidden_text", "metric", "value", "success"])
        for r in records:
            writer.writerow(
                [r.carrier_id, r.group, r.hidden_text, r.metric, repr(r.value),
                 "" if r.success is None else str(r.success).lower()]
            )


def summarize(records: list[EvalRecord]) -> dict:
    """Per-metric mean/min/max over all record values."""
    by_metric: dict[str, list[float]] = {}
    for r in records:
        by_metric.setdefault(r.metric, []).append(r.value)
    return {
        metric: {
            "mean": float(np.mean(vals)),
            "min": float(np.min(vals)),
            "max": float(np.max(vals)),
            "count": len(vals),
        }
        for metric, vals in sorted(by_metric.items())
    }


def write_summary_json(records: list[EvalRecord], config: dict, path) -> None:
    payload = {"config": config, "metrics": summarize(records)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
