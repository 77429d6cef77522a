"""Command-line pipeline: vocabulary, importance tables, synthetic data,
training, evaluation, generation, and the CE-vs-IL bias experiment.

Configuration precedence: built-in profile defaults ("desk" unless
--profile paper), then --config JSON, then explicit flags. Every
command that writes an output directory drops the fully resolved
config there for provenance.

Exit codes: 0 success, 1 runtime failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .captioner import ModelDims, init_params, load_checkpoint
from .corpus import (CaptionCorpus, CorpusError, Vocabulary, build_vocabulary,
                     corpus_bias_report, load_corpus, save_corpus)
from .decoding import DecodeConfig, generate
from .features import (FeatureConfig, FeatureError, biased_corpus,
                       load_features_dir, save_features_dir,
                       synthesize_features, synthetic_corpus)
from .importance import (ImportanceError, build_importance_table,
                         load_importance_table, save_importance_table)
from .metrics import bleu4, cider, evaluate
from .objective import LossConfig
from .tensor_io import TensorFileError
from .trainer import TrainConfig, TrainingDiverged, train


@dataclass
class RunConfig:
    """Union of the per-module configs, flattened for flag/file override."""

    # features
    n_frames: int = 8
    k_objects: int = 4
    d1: int = 32
    d2: int = 32
    d3: int = 32
    # model
    hidden: int = 32
    embed: int = 32
    # vocabulary
    min_count: int = 1
    # loss
    loss: str = "il"
    lam: float = 0.5
    gamma: float = 2.0
    # training
    learning_rate: float = 1e-2
    anneal_factor: float = 0.8
    anneal_every: int = 30
    batch_size: int = 16
    max_epochs: int = 300
    dropout_keep: float = 1.0
    grad_clip: float = 5.0
    stop_per_token_ce: float | None = None
    # decoding
    strategy: str = "greedy"
    beam_width: int = 3
    max_length: int = 20
    seed: int = 0

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(n_frames=self.n_frames, k_objects=self.k_objects,
                             d1=self.d1, d2=self.d2, d3=self.d3)

    def loss_config(self) -> LossConfig:
        kind = {"ce": "cross_entropy", "il": "information_loss"}[self.loss]
        return LossConfig(kind=kind, lam=self.lam, gamma=self.gamma)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, anneal_factor=self.anneal_factor,
            anneal_every=self.anneal_every, batch_size=self.batch_size,
            max_epochs=self.max_epochs, dropout_keep=self.dropout_keep,
            grad_clip=self.grad_clip if self.grad_clip > 0 else None,
            seed=self.seed, stop_per_token_ce=self.stop_per_token_ce)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(strategy=self.strategy, beam_width=self.beam_width,
                            max_length=self.max_length)


PROFILES: dict[str, dict] = {
    # Small dims, no dropout, a learning rate that overfits toy corpora
    # within a few hundred epochs.
    "desk": {},
    # The full-scale settings: 40 frames x 16 objects, 512 hidden units,
    # lr 1e-4 annealed by 0.8 every 30 epochs, lambda 0.5, gamma 2.
    "paper": {
        "n_frames": 40, "k_objects": 16, "d1": 2048, "d2": 2048, "d3": 4096,
        "hidden": 512, "embed": 512, "min_count": 5,
        "learning_rate": 1e-4, "anneal_factor": 0.8, "anneal_every": 30,
        "dropout_keep": 0.5, "max_epochs": 100,
    },
}


class UsageError(Exception):
    """User-facing input problem; maps to exit code 2."""


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(PROFILES[args.profile])
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        overrides = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(RunConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(overrides)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if args.seed is not None:
        values["seed"] = args.seed
    return RunConfig(**values)


def _write_config(out_dir: Path, config: RunConfig, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **asdict(config)}
    (out_dir / "config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _require(path: str | Path, kind: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{kind} not found: {path}")
    return path


def _load_corpus(args, config: RunConfig, path: str | Path) -> CaptionCorpus:
    return load_corpus(_require(path, "corpus file"), format=args.corpus_format)


def _load_vocab(path: str | Path) -> Vocabulary:
    return Vocabulary.load(_require(path, "vocabulary file"))


def _check_vocab_hash(manifest: dict, vocab: Vocabulary, source: str) -> None:
    stored = manifest.get("vocab_hash")
    if stored and stored != vocab.content_hash():
        raise UsageError(f"{source}: vocabulary hash mismatch "
                         f"({stored} != {vocab.content_hash()})")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_build_vocab(args, config: RunConfig) -> int:
    corpus = _load_corpus(args, config, args.corpus)
    vocab = build_vocabulary(corpus, min_count=config.min_count)
    vocab.save(args.out)
    print(f"vocabulary: {len(vocab)} tokens (min_count={config.min_count}) -> {args.out}")
    return 0


def cmd_importance(args, config: RunConfig) -> int:
    corpus = _load_corpus(args, config, args.corpus)
    vocab = _load_vocab(args.vocab)
    table = build_importance_table(corpus, vocab, gamma=config.gamma)
    save_importance_table(table, args.out, vocab)
    print(f"importance table: {table.video_count} videos, gamma={table.gamma} -> {args.out}")
    if args.bias_report is not None:
        report = corpus_bias_report(corpus, vocab, args.top_fraction)
        Path(args.bias_report).write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n",
            encoding="utf-8")
        print(f"top {report.top_words} words cover {report.share:.3f} "
              f"of {report.total_tokens} tokens -> {args.bias_report}")
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    _write_config(out_dir, config, "synth")
    if args.biased:
        corpus, rare = biased_corpus(args.videos, args.captions, config.seed)
        (out_dir / "rare_words.json").write_text(
            json.dumps(rare, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    else:
        corpus = synthetic_corpus(args.videos, args.captions, config.seed,
                                  distinct_captions=not args.identical_captions)
    save_corpus(corpus, out_dir / "corpus.tsv")
    features = synthesize_features(corpus, config.feature_config(), config.seed)
    save_features_dir(features, out_dir / "features")
    print(f"synthesized {len(corpus)} videos x {args.captions} captions -> {out_dir}")
    return 0


def cmd_train(args, config: RunConfig) -> int:
    corpus = _load_corpus(args, config, args.corpus)
    vocab = _load_vocab(args.vocab)
    features = load_features_dir(_require(args.features, "features directory"),
                                 config.feature_config(), corpus.video_ids())
    loss_config = config.loss_config()
    if args.table is not None:
        table = load_importance_table(_require(args.table, "importance table"), vocab)
    else:
        table = build_importance_table(corpus, vocab, gamma=config.gamma)
    validation = None
    if args.val_corpus is not None:
        val_corpus = _load_corpus(args, config, args.val_corpus)
        val_features = load_features_dir(
            _require(args.features, "features directory"),
            config.feature_config(), val_corpus.video_ids())
        validation = (val_corpus, val_features)

    out_dir = Path(args.out_dir)
    _write_config(out_dir, config, "train")
    dims = ModelDims(vocab_size=len(vocab), hidden=config.hidden,
                     embed=config.embed, d1=config.d1, d2=config.d2, d3=config.d3)
    params = init_params(dims, config.seed)
    result = train(corpus, features, vocab, table, params,
                   config.train_config(), loss_config,
                   out_dir=out_dir, validation=validation)
    if result.log:
        last = result.log[-1]
        print(f"trained {len(result.log)} epochs, final mean loss "
              f"{last.mean_loss:.4f}, per-token CE {last.per_token_ce:.4f}")
    else:
        print("trained 0 epochs (checkpoint equals initialization)")
    print(f"checkpoint -> {out_dir / 'checkpoint_final'}")
    return 0


def _load_model(args, vocab: Vocabulary):
    params, manifest = load_checkpoint(_require(args.checkpoint, "checkpoint"))
    _check_vocab_hash(manifest, vocab, str(args.checkpoint))
    return params, manifest


def cmd_eval(args, config: RunConfig) -> int:
    corpus = _load_corpus(args, config, args.corpus)
    vocab = _load_vocab(args.vocab)
    params, _ = _load_model(args, vocab)
    features = load_features_dir(_require(args.features, "features directory"),
                                 config.feature_config(), corpus.video_ids())
    report = evaluate(params, vocab, corpus, features, config.decode_config())
    selected = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(selected) - {"bleu4", "cider"}
    if unknown:
        raise UsageError(f"unknown metrics: {sorted(unknown)}")
    payload = report.to_dict()
    payload["metrics"] = {m: payload[m] for m in selected}
    if args.out is not None:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                                  encoding="utf-8")
    for m in selected:
        print(f"{m}: {payload[m]:.4f}")
    return 0


def cmd_generate(args, config: RunConfig) -> int:
    vocab = _load_vocab(args.vocab)
    params, _ = _load_model(args, vocab)
    corpus = _load_corpus(args, config, args.corpus)
    features = load_features_dir(_require(args.features, "features directory"),
                                 config.feature_config(), corpus.video_ids())
    decode_config = config.decode_config()
    lines = []
    for video_id in corpus.video_ids():
        caption = " ".join(generate(features[video_id], params, vocab, decode_config))
        lines.append(f"{video_id}\t{caption}")
        print(lines[-1])
    if args.out is not None:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _recall(caption: list[str], wanted: set[str]) -> float:
    if not wanted:
        return 0.0
    return len(wanted & set(caption)) / len(wanted)


def run_bias_experiment(config: RunConfig, n_videos: int, n_captions: int,
                        seeds: list[int], epochs: int) -> dict:
    """Paired CE/IL training runs from shared inits, one pair per seed."""
    feature_config = config.feature_config()
    per_seed = []
    for seed in seeds:
        corpus, rare = biased_corpus(n_videos, n_captions, seed)
        features = synthesize_features(corpus, feature_config, seed)
        vocab = build_vocabulary(corpus, min_count=1)
        table = build_importance_table(corpus, vocab, gamma=config.gamma)
        common = set.intersection(
            *({tok for cap in video.captions for tok in cap} for video in corpus))
        dims = ModelDims(vocab_size=len(vocab), hidden=config.hidden,
                         embed=config.embed, d1=feature_config.d1,
                         d2=feature_config.d2, d3=feature_config.d3)
        init = init_params(dims, seed)
        train_config = config.train_config()
        train_config.seed = seed
        train_config.max_epochs = epochs

        arms = {}
        for arm, loss_config in (
                ("ce", LossConfig(kind="cross_entropy")),
                ("il", LossConfig(kind="information_loss", lam=config.lam,
                                  gamma=config.gamma))):
            params = init.copy()
            train(corpus, features, vocab, table, params, train_config, loss_config)
            candidates = {
                vid: generate(features[vid], params, vocab, config.decode_config())
                for vid in corpus.video_ids()
            }
            references = {v.video_id: v.captions for v in corpus}
            corpus_cider, _ = cider(candidates, references)
            arms[arm] = {
                "rare_recall": sum(
                    1.0 for vid in corpus.video_ids()
                    if rare[vid] in candidates[vid]) / len(corpus),
                "common_recall": sum(
                    _recall(candidates[vid], common)
                    for vid in corpus.video_ids()) / len(corpus),
                "bleu4": sum(
                    bleu4(candidates[v.video_id], v.captions)
                    for v in corpus) / len(corpus),
                "cider": corpus_cider,
            }
        per_seed.append({"seed": seed, "ce": arms["ce"], "il": arms["il"]})

    def agg(arm: str, key: str) -> float:
        return sum(row[arm][key] for row in per_seed) / len(per_seed)

    wins = sum(1 for row in per_seed
               if row["il"]["rare_recall"] >= row["ce"]["rare_recall"])
    return {
        "videos": n_videos,
        "captions_per_video": n_captions,
        "epochs": epochs,
        "lam": config.lam,
        "gamma": config.gamma,
        "per_seed": per_seed,
        "aggregate": {
            arm: {key: agg(arm, key)
                  for key in ("rare_recall", "common_recall", "bleu4", "cider")}
            for arm in ("ce", "il")
        },
        "il_rare_recall_wins": wins,
        "seeds_total": len(per_seed),
    }


def cmd_bias_experiment(args, config: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    _write_config(out_dir, config, "bias-experiment")
    seeds = [config.seed + i for i in range(args.seeds)]
    report = run_bias_experiment(config, args.videos, args.captions, seeds,
                                 args.epochs)
    (out_dir / "bias_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    agg = report["aggregate"]
    print(f"rare-token recall: CE {agg['ce']['rare_recall']:.3f} vs "
          f"IL {agg['il']['rare_recall']:.3f} "
          f"(IL >= CE in {report['il_rare_recall_wins']}/{report['seeds_total']} seeds)")
    print(f"bleu4: CE {agg['ce']['bleu4']:.3f} vs IL {agg['il']['bleu4']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infocap",
        description="Hierarchical-attention video captioning with an "
                    "importance-weighted loss.")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                        help="named default set (desk: tiny dims; paper: full scale)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p, names):
        flags = {
            "min_count": ("--min-count", int), "gamma": ("--gamma", float),
            "lam": ("--lambda", float), "loss": ("--loss", str),
            "learning_rate": ("--learning-rate", float),
            "max_epochs": ("--max-epochs", int),
            "batch_size": ("--batch-size", int),
            "dropout_keep": ("--dropout-keep", float),
            "grad_clip": ("--grad-clip", float),
            "anneal_factor": ("--anneal-factor", float),
            "anneal_every": ("--anneal-every", int),
            "stop_per_token_ce": ("--stop-per-token-ce", float),
            "hidden": ("--hidden", int), "embed": ("--embed", int),
            "n_frames": ("--n-frames", int), "k_objects": ("--k-objects", int),
            "d1": ("--d1", int), "d2": ("--d2", int), "d3": ("--d3", int),
            "strategy": ("--strategy", str), "beam_width": ("--beam", int),
            "max_length": ("--max-length", int),
        }
        for name in names:
            flag, typ = flags[name]
            kwargs = {"type": typ, "default": None, "dest": name}
            if name == "loss":
                kwargs["choices"] = ["ce", "il"]
            if name == "strategy":
                kwargs["choices"] = ["greedy", "beam"]
            p.add_argument(flag, **kwargs)

    feature_names = ["n_frames", "k_objects", "d1", "d2", "d3"]

    p = sub.add_parser("build-vocab", help="build a vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--out", required=True)
    add_overrides(p, ["min_count"])
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("importance", help="build the importance table and bias report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bias-report", default=None)
    p.add_argument("--top-fraction", type=float, default=0.05)
    add_overrides(p, ["gamma"])
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("synth", help="generate a synthetic corpus and features")
    p.add_argument("--videos", type=int, default=5)
    p.add_argument("--captions", type=int, default=3)
    p.add_argument("--identical-captions", action="store_true",
                   help="repeat one caption per video (overfit fixtures)")
    p.add_argument("--biased", action="store_true",
                   help="plant the common/rare word imbalance")
    p.add_argument("--out-dir", required=True)
    add_overrides(p, feature_names)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a captioner")
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--table", default=None,
                   help="importance table file (built on the fly when omitted)")
    p.add_argument("--val-corpus", default=None)
    p.add_argument("--out-dir", required=True)
    add_overrides(p, feature_names + [
        "hidden", "embed", "loss", "lam", "gamma", "learning_rate",
        "max_epochs", "batch_size", "dropout_keep", "grad_clip",
        "anneal_factor", "anneal_every", "stop_per_token_ce"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score generated captions against references")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--metrics", default="bleu4,cider")
    p.add_argument("--out", default=None)
    add_overrides(p, feature_names + ["strategy", "beam_width", "max_length"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="decode captions for a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", default=None)
    add_overrides(p, feature_names + ["strategy", "beam_width", "max_length"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bias-experiment",
                       help="paired CE vs IL runs on a planted-bias corpus")
    p.add_argument("--videos", type=int, default=8)
    p.add_argument("--captions", type=int, default=4)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=15,
                   help="kept low on purpose: the gap shows mid-training")
    p.add_argument("--out-dir", required=True)
    add_overrides(p, feature_names + [
        "hidden", "embed", "lam", "gamma", "learning_rate", "batch_size",
        "dropout_keep"])
    p.set_defaults(func=cmd_bias_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return args.func(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, FeatureError, TensorFileError, ImportanceError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
