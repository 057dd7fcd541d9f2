"""Command-line entry point: ``gssfcap <command> [flags]``.

Commands: synth, train, generate, evaluate, gradcheck, paramcount.

Settings come from an optional INI file (``--config``) whose sections and
keys mirror :class:`RunConfig`; command-line flags override the file.
Exit codes: 0 success, 1 usage/config error, 2 validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gssfcap.cells import CellConfig, init_params, param_count
from gssfcap.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gssfcap.data import (
    BOS,
    EOS,
    build_vocab,
    decode,
    load_dataset,
    load_embeddings,
    synth_dataset,
    write_dataset,
)
from gssfcap.decoding import beam_decode, greedy_decode, read_generations, sequence_log_prob, write_generations
from gssfcap.errors import ConfigError, GssfError
from gssfcap.gssf import smooth
from gssfcap.metrics import evaluate, evaluate_e1_e2, format_table, make_corpus
from gssfcap.training import LOSS_ALIASES, TrainConfig, gradient_check, make_batch, train, write_trace
from gssfcap.translate import DictionaryTranslator, IdentityTranslator

log = logging.getLogger("gssfcap")

# section -> keys accepted in the INI file
SECTIONS = {
    "model": ("variant", "hidden", "embed", "factor"),
    "train": ("epochs", "lr", "batch", "loss", "dropout", "seed", "grad_clip", "finetune_embeddings"),
    "decode": ("beam", "max_len", "no_repeat"),
    "gssf": ("sigma", "radius"),
    "vocab": ("max_vocab", "min_doc_frac"),
    "synth": ("items", "v_dim", "s_dim", "vocab_size", "top_k", "captions_per_item"),
    "metrics": ("sigma_len",),
    "paths": ("dataset", "embeddings", "checkpoint", "out", "captions", "refs_en", "dictionary", "translator"),
}


@dataclass
class RunConfig:
    variant: str = "gst"
    hidden: int = 64
    embed: int = 32
    factor: int | None = None
    epochs: int = 50
    lr: float = 0.1
    batch: int = 32
    loss: str = "xent"
    dropout: float = 0.5
    seed: int = 0
    grad_clip: float | None = None
    finetune_embeddings: bool = False
    beam: int = 5
    max_len: int = 16
    no_repeat: int = 2
    sigma: float = 1.0
    radius: int | None = None
    max_vocab: int = 20000
    min_doc_frac: float = 0.0
    items: int = 50
    v_dim: int = 16
    s_dim: int = 20
    vocab_size: int = 20
    top_k: int = 5
    captions_per_item: int = 1
    sigma_len: float = 6.0
    dataset: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    captions: str | None = None
    refs_en: str | None = None
    dictionary: str | None = None
    translator: str = "identity"

    def validate(self) -> "RunConfig":
        if self.variant not in ("lstm", "gst", "gsscn"):
            raise ConfigError(f"variant must be lstm, gst or gsscn, got {self.variant!r}")
        if self.loss not in LOSS_ALIASES:
            raise ConfigError(f"loss must be se or xent, got {self.loss!r}")
        if self.translator not in ("identity", "dictionary"):
            raise ConfigError(f"translator must be identity or dictionary, got {self.translator!r}")
        positive = ("hidden", "embed", "epochs", "batch", "beam", "max_len", "max_vocab",
                    "items", "v_dim", "s_dim", "vocab_size", "top_k", "captions_per_item")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.factor is not None and self.factor < 1:
            raise ConfigError("factor must be >= 1")
        if not self.sigma > 0 or not self.lr > 0 or not self.sigma_len > 0:
            raise ConfigError("sigma, lr and sigma_len must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.no_repeat < 0:
            raise ConfigError("no_repeat must be >= 0 (0 disables it)")
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.epochs, self.batch, self.dropout, LOSS_ALIASES[self.loss],
                           self.seed, self.grad_clip, self.finetune_embeddings)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    default = _FIELDS[name].default
    text = raw.strip()
    if name in ("factor", "radius", "grad_clip") and text.lower() in ("", "none"):
        return None
    try:
        if name in ("factor", "radius"):
            return int(text)
        if name == "grad_clip":
            return float(text)
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r}") from None
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` INI file. Unknown sections and keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[key] = _coerce(key, raw)
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add(p, *flags, dest, help, **kw):
    p.add_argument(*flags, dest=dest, default=None, help=help, **kw)


def _common(p):
    _add(p, "--config", dest="config", help="INI config file; flags override its values")
    _add(p, "--seed", dest="seed", type=int, help="random seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")


def _model_flags(p):
    _add(p, "--variant", dest="variant", choices=("lstm", "gst", "gsscn"), help="cell variant (default gst)")
    _add(p, "--hidden", dest="hidden", type=int, help="hidden dim d (default 64)")
    _add(p, "--embed", dest="embed", type=int, help="embedding dim m (default 32)")
    _add(p, "--factor", dest="factor", type=int, help="gsscn factor dim f (default hidden // 4)")


def _gssf_flags(p):
    _add(p, "--sigma", dest="sigma", type=float, help="Gaussian smoothing width in tag-index units (default 1.0)")
    _add(p, "--radius", dest="radius", type=int, help="kernel half-width (default ceil(3 * sigma))")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gssfcap", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic JSONL dataset")
    _common(p)
    _add(p, "--out", dest="out", help="output dataset path (.jsonl)")
    _add(p, "--items", dest="items", type=int, help="number of images (default 50)")
    _add(p, "--v-dim", dest="v_dim", type=int, help="visual feature dim (default 16)")
    _add(p, "--s-dim", dest="s_dim", type=int, help="semantic tag dim (default 20)")
    _add(p, "--vocab-size", dest="vocab_size", type=int, help="distinct tag words (default 20)")
    _add(p, "--top-k", dest="top_k", type=int, help="active tags, i.e. caption length (default 5)")
    _add(p, "--captions-per-item", dest="captions_per_item", type=int, help="captions per image (default 1)")

    p = sub.add_parser("train", help="train a caption model; writes checkpoint and loss CSV")
    _common(p)
    _model_flags(p)
    _gssf_flags(p)
    _add(p, "--dataset", dest="dataset", help="training dataset (.jsonl)")
    _add(p, "--checkpoint", dest="checkpoint", help="checkpoint path to write")
    _add(p, "--out", dest="out", help="loss trace CSV path (default <checkpoint>.loss.csv)")
    _add(p, "--embeddings", dest="embeddings", help="GloVe-style embedding table")
    _add(p, "--epochs", dest="epochs", type=int, help="training epochs (default 50)")
    _add(p, "--lr", dest="lr", type=float, help="SGD learning rate (default 0.1)")
    _add(p, "--batch", dest="batch", type=int, help="batch size (default 32)")
    _add(p, "--loss", dest="loss", choices=("se", "xent"), help="squared error or cross entropy (default xent)")
    _add(p, "--dropout", dest="dropout", type=float, help="dropout rate at the four dropout sites (default 0.5)")
    _add(p, "--grad-clip", dest="grad_clip", type=float, help="clip gradient global norm to this value")
    p.add_argument("--finetune-embeddings", dest="finetune_embeddings", action="store_const", const=True,
                   default=None, help="let gradients update the embedding table")
    _add(p, "--max-vocab", dest="max_vocab", type=int, help="vocabulary size cap incl. reserved tokens (default 20000)")
    _add(p, "--min-doc-frac", dest="min_doc_frac", type=float, help="minimum fraction of captions containing a token (default 0)")

    p = sub.add_parser("generate", help="caption every image of a dataset")
    _common(p)
    _add(p, "--checkpoint", dest="checkpoint", help="trained checkpoint")
    _add(p, "--dataset", dest="dataset", help="dataset with features to caption (.jsonl)")
    _add(p, "--out", dest="out", help="output captions (.jsonl)")
    _add(p, "--beam", dest="beam", type=int, help="beam size; 1 with --no-repeat 0 is greedy (default 5)")
    _add(p, "--max-len", dest="max_len", type=int, help="maximum decoding steps (default 16)")
    _add(p, "--no-repeat", dest="no_repeat", type=int, help="block repeated n-grams of this size; 0 disables (default 2)")

    p = sub.add_parser("evaluate", help="score generated captions (BLEU, ROUGE-L, CIDEr-D)")
    _common(p)
    _add(p, "--captions", dest="captions", help="generated captions (.jsonl from generate)")
    _add(p, "--dataset", dest="dataset", help="reference dataset in the generated language")
    _add(p, "--refs-en", dest="refs_en", help="English reference dataset; enables the E1/E2 pair")
    _add(p, "--translator", dest="translator", choices=("identity", "dictionary"), help="translator for E2 (default identity)")
    _add(p, "--dictionary", dest="dictionary", help="two-column dictionary file for --translator dictionary")
    _add(p, "--out", dest="out", help="report directory")
    _add(p, "--sigma-len", dest="sigma_len", type=float, help="CIDEr-D length-penalty width (default 6)")

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    _common(p)
    _add(p, "--variant", dest="variant", choices=("lstm", "gst", "gsscn"), help="cell variant (default: all three)")
    _add(p, "--loss", dest="loss", choices=("se", "xent"), help="loss to differentiate (default xent)")
    _gssf_flags(p)
    p.add_argument("--threshold", type=float, default=1e-4, help="maximum allowed relative error (default 1e-4)")

    p = sub.add_parser("paramcount", help="parameter counts of the three variants")
    _common(p)
    p.add_argument("--hidden", type=int, default=512, help="hidden dim d (default 512)")
    p.add_argument("--embed", type=int, default=300, help="embedding dim m (default 300)")
    p.add_argument("--semantic", type=int, default=999, help="semantic dim s (default 999)")
    p.add_argument("--vocab", type=int, default=20000, help="vocabulary size V (default 20000)")
    p.add_argument("--visual", type=int, default=2048, help="visual feature dim (default 2048)")
    p.add_argument("--factor", type=int, default=None, help="gsscn factor dim f (default hidden // 4)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values).validate()


def _require(cfg: RunConfig, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def cmd_synth(cfg: RunConfig, args) -> int:
    _require(cfg, "out")
    ds = synth_dataset(cfg.items, cfg.v_dim, cfg.s_dim, cfg.vocab_size, cfg.seed, cfg.top_k, cfg.captions_per_item)
    write_dataset(ds, cfg.out)
    print(f"wrote {len(ds)} items to {cfg.out}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    _require(cfg, "dataset", "checkpoint")
    ds = load_dataset(cfg.dataset)
    vocab = build_vocab(ds.sentences(), cfg.max_vocab, cfg.min_doc_frac)
    cell = CellConfig.build(cfg.variant, cfg.hidden, cfg.embed, ds.v_dim, len(vocab), ds.s_dim, cfg.factor)
    table = load_embeddings(cfg.embeddings, vocab, cfg.embed, cfg.seed) if cfg.embeddings else None
    log.info("dataset %s", ds.summary(vocab))

    def progress(epoch, value):
        log.info("epoch %d/%d loss %.6f", epoch, cfg.epochs, value)

    result = train(ds, cell, cfg.train_config(), vocab, cfg.sigma, cfg.radius, table, progress=progress)
    meta = {"train": dataclasses.asdict(cfg.train_config()), "dataset_summary": ds.summary(vocab)}
    save_checkpoint(Checkpoint(result.params, vocab, cfg.sigma, cfg.radius, meta), cfg.checkpoint)
    trace_path = cfg.out or f"{cfg.checkpoint}.loss.csv"
    write_trace(result.trace, trace_path)
    print(f"trained {cfg.variant} ({param_count(cell)} parameters) for {cfg.epochs} epochs; "
          f"final loss {result.trace[-1]:.6f}")
    print(f"checkpoint: {cfg.checkpoint}\nloss trace: {trace_path}")
    return 0


def cmd_generate(cfg: RunConfig, args) -> int:
    _require(cfg, "checkpoint", "dataset", "out")
    ckpt = load_checkpoint(cfg.checkpoint)
    ds = load_dataset(cfg.dataset, ckpt.config.v_dim, ckpt.config.s)
    records = []
    for item in ds:
        if cfg.beam == 1 and cfg.no_repeat == 0:
            tokens = greedy_decode(ckpt.params, item.v, item.S, cfg.max_len, ckpt.sigma, ckpt.radius)
            full = [BOS] + tokens + ([EOS] if len(tokens) < cfg.max_len else [])
            lp = sequence_log_prob(ckpt.params, item.v, item.S, full, ckpt.sigma, ckpt.radius)
        else:
            best = beam_decode(ckpt.params, item.v, item.S, cfg.beam, cfg.max_len, cfg.no_repeat or None,
                               sigma=ckpt.sigma, radius=ckpt.radius).best
            tokens, lp = best.caption, best.log_prob
        records.append({"image_id": item.image_id, "tokens": tokens,
                        "text": decode(ckpt.vocab, tokens), "log_prob": lp})
    write_generations(records, cfg.out)
    print(f"wrote {len(records)} captions to {cfg.out}")
    return 0


def _references(path) -> dict[str, list[str]]:
    return {item.image_id: item.captions for item in load_dataset(path)}


def cmd_evaluate(cfg: RunConfig, args) -> int:
    _require(cfg, "captions", "dataset", "out")
    generated = {rec["image_id"]: rec["text"] for rec in read_generations(cfg.captions)}
    refs_L = _references(cfg.dataset)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.refs_en:
        if cfg.translator == "dictionary":
            _require(cfg, "dictionary")
            translator = DictionaryTranslator.from_file(cfg.dictionary)
        else:
            translator = IdentityTranslator()
        e1, e2 = evaluate_e1_e2(generated, refs_L, _references(cfg.refs_en), translator)
        reports = {"E1": e1, "E2": e2}
        for name, report in reports.items():
            (out / f"report_{name.lower()}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    else:
        report = evaluate(make_corpus(generated, refs_L), sigma_len=cfg.sigma_len)
        reports = {"E1": report}
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    table = format_table(reports)
    (out / "report.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    for report in reports.values():
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    return 0


def gradcheck_instance(variant: str, seed: int = 0, sigma: float = 1.0, radius=None):
    """The default tiny problem: d=4, m=3, s=5, f=2, V=6, v_dim=3, two captions of 3 steps."""
    cfg = CellConfig.build(variant, d=4, m=3, v_dim=3, V=6, s=5, f=2)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    vs = rng.normal(size=(2, cfg.v_dim))
    S = rng.uniform(size=(2, 5))
    s_hat = None if variant == "lstm" else np.stack([smooth(row, sigma, radius) for row in S])
    seqs = [[0] + [int(t) for t in rng.integers(4, cfg.V, size=2)] + [1] for _ in range(2)]
    return params, make_batch(vs, s_hat, seqs)


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    variants = [args.variant] if args.variant else ["lstm", "gst", "gsscn"]
    worst = 0.0
    for variant in variants:
        params, batch = gradcheck_instance(variant, cfg.seed, cfg.sigma, cfg.radius)
        result = gradient_check(params, batch, LOSS_ALIASES[cfg.loss], tol=args.threshold)
        worst = max(worst, result.max_error)
        print(f"{variant:<6} max relative error {result.max_error:.3e} "
              f"({result.frac_within:.2%} of {result.n_params} entries within {args.threshold:g}; "
              f"worst tensor {result.worst})")
    if worst > args.threshold:
        print(f"gradient check failed: {worst:.3e} > {args.threshold:g}", file=sys.stderr)
        return 3
    return 0


def cmd_paramcount(cfg: RunConfig, args) -> int:
    counts = {}
    for variant in ("lstm", "gst", "gsscn"):
        cell = CellConfig.build(variant, args.hidden, args.embed, args.visual, args.vocab, args.semantic, args.factor)
        counts[variant] = param_count(cell)
    f = args.factor if args.factor is not None else max(1, args.hidden // 4)
    print(f"d={args.hidden} m={args.embed} s={args.semantic} V={args.vocab} v_dim={args.visual} f={f}")
    for variant, n in counts.items():
        print(f"{variant:<6} {n}")
    print(f"gst/gsscn ratio {counts['gst'] / counts['gsscn']:.4f}")
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate,
            "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck, "paramcount": cmd_paramcount}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except GssfError as exc:
        print(f"gssfcap {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"gssfcap {args.command}: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"gssfcap {args.command}: malformed JSON ({exc})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
