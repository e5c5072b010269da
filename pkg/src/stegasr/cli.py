"""Command-line front end.

Every subcommand echoes its fully resolved configuration as JSON before
doing any work (into the output directory when there is one, to stderr
otherwise), never mutates its inputs, and is deterministic given that
echoed configuration. Exit status: 0 success, 1 operation failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .audio_io import AudioFormatError, read_wav, write_wav
from .dsp import attack_awgn, attack_echo, attack_lowpass, attack_resample
from .embedder import EmbedConfig, InfeasibleTextError, embed, extract
from .harness import (
    EVAL_PHRASES,
    embed_groups,
    eval_capacity,
    eval_imperceptibility,
    eval_robustness,
    eval_security,
    write_records_csv,
    write_summary_json,
)


def _resolved_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if not callable(v)}


def _echo_config(args: argparse.Namespace, out_dir: Path | None) -> dict:
    config = _resolved_config(args)
    text = json.dumps(config, indent=2, sort_keys=True, default=str) + "\n"
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(text)
    else:
        sys.stderr.write(text)
    return config


def _add_embed_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iterations", type=int, default=500,
                        help="max optimization iterations (default 500)")
    parser.add_argument("--tau0", type=float, default=3000.0,
                        help="initial perturbation bound, int16 scale (default 3000)")
    parser.add_argument("--shrink", type=float, default=0.8,
                        help="bound shrink factor per success (default 0.8)")
    parser.add_argument("--attack-lr", type=float, default=100.0,
                        help="Adam learning rate for the perturbation (default 100)")
    parser.add_argument("--early-stop", action="store_true",
                        help="return at the first verified success instead of "
                             "spending the remaining budget shrinking the bound")


def _embed_config(args: argparse.Namespace) -> EmbedConfig:
    return EmbedConfig(
        max_iterations=args.iterations,
        tau0=args.tau0,
        shrink=args.shrink,
        attack_lr=args.attack_lr,
        early_stop=args.early_stop,
    )


def _parse_hidden_sizes(spec: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in spec.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer sizes {spec!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad layer sizes {spec!r}")
    return sizes


def cmd_gen_corpus(args) -> int:
    out_dir = Path(args.out)
    _echo_config(args, out_dir)
    if args.texts:
        texts = [
            line for line in Path(args.texts).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    else:
        texts = corpus_mod.default_transcripts(
            count=args.count, seed=args.seed, min_len=args.min_len, max_len=args.max_len
        )
    corpus = corpus_mod.gen_corpus(texts, seed=args.seed)
    manifest = corpus_mod.write_corpus(corpus.train + corpus.heldout, out_dir)
    print(f"wrote {len(corpus.train) + len(corpus.heldout)} utterances to {manifest}")
    return 0


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    _echo_config(args, out_dir)
    utterances = corpus_mod.load_manifest(args.manifest)
    corpus = corpus_mod.split_corpus(utterances)
    model, log = corpus_mod.train(
        corpus, seed=args.seed, epochs=args.epochs, lr=args.lr, hidden=args.hidden
    )
    model_path = out_dir / "model.swam"
    corpus_mod.save_model(model, model_path)
    (out_dir / "train_log.json").write_text(
        json.dumps([asdict(e) for e in log], indent=2) + "\n"
    )
    final = log[-1]
    print(
        f"trained {len(corpus.train)} utterances, {final.epoch + 1} epochs, "
        f"held-out exact match {final.heldout_exact:.1%} -> {model_path}"
    )
    return 0


def cmd_embed(args) -> int:
    out_dir = Path(args.out)
    _echo_config(args, out_dir)
    model = corpus_mod.load_model(args.model)
    carrier = read_wav(args.carrier)
    stego, report = embed(model, carrier, args.text, _embed_config(args))
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    if stego is None:
        print(
            f"embedding failed after {report.iterations} iterations "
            f"(best loss {report.best_loss:.3f}); report in {out_dir}",
            file=sys.stderr,
        )
        return 1
    stego_path = out_dir / "stego.wav"
    write_wav(stego, stego_path)
    print(
        f"embedded {args.text!r} with max|delta| {report.max_delta:.0f} "
        f"({len(report.success_iterations)} successes) -> {stego_path}"
    )
    return 0


def cmd_extract(args) -> int:
    _echo_config(args, None)
    model = corpus_mod.load_model(args.model)
    print(extract(model, read_wav(args.wav)))
    return 0


def cmd_attack(args) -> int:
    out_path = Path(args.out)
    _echo_config(args, out_path.parent if str(out_path.parent) != "" else None)
    clip = read_wav(args.wav)
    if args.channel == "awgn":
        attacked = attack_awgn(clip, args.snr_db, args.seed)
    elif args.channel == "resample":
        attacked = attack_resample(clip)
    elif args.channel == "lowpass":
        attacked = attack_lowpass(clip)
    else:
        attacked = attack_echo(clip)
    write_wav(attacked, out_path, clamp=True)  # noise may exceed full scale
    print(f"applied {args.channel} -> {out_path}")
    return 0


def _make_carriers(args, per_group: int):
    carriers = corpus_mod.make_carriers(
        per_group * len(EVAL_PHRASES), seed=args.seed, duration=args.duration
    )
    return [u.clip for u in carriers]


def _finish_eval(records, config, out_dir: Path, name: str) -> None:
    write_records_csv(records, out_dir / "records.csv")
    write_summary_json(records, config, out_dir / "summary.json")
    print(f"{name}: {len(records)} records -> {out_dir}")


def cmd_eval_capacity(args) -> int:
    out_dir = Path(args.out)
    config = _echo_config(args, out_dir)
    model = corpus_mod.load_model(args.model)
    carriers = [
        u.clip
        for u in corpus_mod.make_carriers(args.carriers, seed=args.seed,
                                          duration=args.duration)
    ]
    records = eval_capacity(model, carriers, _embed_config(args))
    _finish_eval(records, config, out_dir, "capacity")
    return 0


def cmd_eval_imperceptibility(args) -> int:
    out_dir = Path(args.out)
    config = _echo_config(args, out_dir)
    model = corpus_mod.load_model(args.model)
    items, failures = embed_groups(
        model, _make_carriers(args, args.carriers_per_group), _embed_config(args)
    )
    records = eval_imperceptibility(items, out_dir=out_dir)
    _finish_eval(records, config, out_dir, "imperceptibility")
    return 1 if failures and not items else 0


def cmd_eval_security(args) -> int:
    out_dir = Path(args.out)
    config = _echo_config(args, out_dir)
    model = corpus_mod.load_model(args.model)
    variants = [
        (Path(p).stem, corpus_mod.load_model(p)) for p in args.variants
    ]
    items, failures = embed_groups(
        model, _make_carriers(args, args.carriers_per_group), _embed_config(args)
    )
    clean = corpus_mod.make_carriers(args.clean_count, seed=args.seed + 1,
                                     duration=args.duration)
    records = eval_security(model, variants, items, clean=clean)
    _finish_eval(records, config, out_dir, "security")
    return 1 if failures and not items else 0


def cmd_eval_robustness(args) -> int:
    out_dir = Path(args.out)
    config = _echo_config(args, out_dir)
    model = corpus_mod.load_model(args.model)
    items, failures = embed_groups(
        model, _make_carriers(args, args.carriers_per_group), _embed_config(args)
    )
    records = eval_robustness(model, items, seed=args.attack_seed)
    _finish_eval(records, config, out_dir, "robustness")
    return 1 if failures and not items else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stegasr",
        description="Hide text in audio as adversarial perturbations that only "
                    "the private recognizer can read back.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="synthesize a training corpus + manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--texts", help="file with one transcript per line "
                                   "(overrides random generation)")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a recognizer from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=_parse_hidden_sizes, default=(128, 128),
                   help="hidden layer sizes, e.g. 128,128 (default) or 64,64")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="hide text in a carrier WAV")
    p.add_argument("--model", required=True)
    p.add_argument("--carrier", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_embed_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="print the text a model hears in a WAV")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("attack", help="apply one channel attack to a WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--channel", required=True,
                   choices=["awgn", "resample", "lowpass", "echo"])
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    def eval_parser(name: str, help_text: str):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--model", required=True)
        q.add_argument("--out", required=True, help="output directory")
        q.add_argument("--seed", type=int, default=100, help="carrier synthesis seed")
        q.add_argument("--duration", type=float, default=3.0)
        _add_embed_flags(q)
        return q

    p = eval_parser("eval-capacity", "dense-payload hiding rate")
    p.add_argument("--carriers", type=int, default=10)
    p.set_defaults(func=cmd_eval_capacity)

    p = eval_parser("eval-imperceptibility", "SNR and max|delta| of stego audio")
    p.add_argument("--carriers-per-group", type=int, default=1)
    p.set_defaults(func=cmd_eval_imperceptibility)

    p = eval_parser("eval-security", "cross-model extraction matrix")
    p.add_argument("--variants", nargs="+", required=True,
                   help="paths to retrained model files to test against")
    p.add_argument("--carriers-per-group", type=int, default=1)
    p.add_argument("--clean-count", type=int, default=20,
                   help="clean utterances for the competence check")
    p.set_defaults(func=cmd_eval_security)

    p = eval_parser("eval-robustness", "extraction survival under channel attacks")
    p.add_argument("--carriers-per-group", type=int, default=1)
    p.add_argument("--attack-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_robustness)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        AudioFormatError,
        InfeasibleTextError,
        corpus_mod.ModelFileError,
        corpus_mod.TrainingDivergedError,
        FileNotFoundError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
