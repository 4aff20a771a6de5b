"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(divergence, numerical breakdown, unexpected errors). Every subcommand
validates its inputs before creating anything under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .checkpoint import NetworkCheckpoint, load_module, save_module
from .core import (
    AttributeSpec,
    ManifestRecord,
    encode_conditions,
    load_image,
    load_manifest,
    load_manifest_images,
    load_ratings,
    save_image,
    write_manifest,
)
from .errors import CheckpointError, ConfigurationError, LightExprError, ValidationError
from .losses import ABLATION_FLAGS, G_TERMS
from .metrics import FeatureExtractor, MetricReport, evaluate, write_report, write_table
from .nets import forward_generator

log = logging.getLogger("lightexpr")

ENV_OUT = "LIGHTEXPR_OUT"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; usage problems are validation failures here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# shared helpers


def version_string() -> str:
    """Package version plus the short commit id when run from a git checkout."""
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if sha.returncode == 0 and sha.stdout.strip():
            return f"{__version__}+g{sha.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def resolve_out(args) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(ENV_OUT)
    if not root:
        raise ValidationError(f"no --out given and {ENV_OUT} is not set")
    return Path(root) / args.command


def prepare_out(path: Path) -> Path:
    if path.exists() and not path.is_dir():
        raise ValidationError(f"output path {path} exists and is not a directory")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_run_json(out: Path, args, config: dict, seed) -> None:
    record = {"command": args.command, "argv": list(args.argv), "config": config, "seed": seed,
              "version": version_string()}
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return obj


def require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} not found: {p}")
    return p


def load_network(path, kind: str):
    require_file(path, f"{kind} checkpoint")
    return load_module(path, expected_kind=kind)


def _spec_from_args(args, base: AttributeSpec) -> AttributeSpec:
    ne = args.num_expressions if getattr(args, "num_expressions", None) else base.num_expressions
    nl = args.num_lightings if getattr(args, "num_lightings", None) else base.num_lightings
    if (ne, nl) == (base.num_expressions, base.num_lightings):
        return base
    return AttributeSpec(ne, nl)


# --------------------------------------------------------------------------
# preprocess


def cmd_preprocess(args) -> int:
    from .desk import DEGRADATIONS
    from .toy import make_ratings_corpus, make_toy_corpus, write_ratings_corpus, write_toy_corpus

    if args.toy:
        if args.manifest:
            raise ValidationError("--toy and --manifest are mutually exclusive")
        if args.toy < 1 or args.toy_ratings < 0 or args.toy_heldout < 0:
            raise ValidationError("--toy, --toy-ratings and --toy-heldout must be positive")
        kinds = tuple(k.strip() for k in args.degradations.split(",") if k.strip())
        bad = [k for k in kinds if k not in DEGRADATIONS]
        if bad or not kinds:
            raise ValidationError(f"unknown degradation(s) {bad}; valid: {', '.join(DEGRADATIONS)}")
        out = prepare_out(resolve_out(args))
        corpus = make_toy_corpus(args.toy, args.size, args.toy_subjects, seed=args.seed)
        write_toy_corpus(out, corpus)
        if args.toy_heldout:
            held = make_toy_corpus(args.toy_heldout, args.size, args.toy_subjects, seed=args.seed + 10_000)
            write_toy_corpus(out / "heldout", held, prefix="held")
        if args.toy_ratings:
            rated = make_ratings_corpus(corpus, args.toy_ratings, kinds=kinds, seed=args.seed + 100)
            write_ratings_corpus(out / "ratings", rated)
        write_run_json(out, args, {"toy": args.toy, "size": args.size, "subjects": args.toy_subjects,
                                   "ratings": args.toy_ratings, "heldout": args.toy_heldout,
                                   "degradations": args.degradations}, args.seed)
        print(f"wrote toy corpus of {args.toy} images to {out}")
        return EXIT_OK

    if not args.manifest:
        raise ValidationError("preprocess needs --manifest or --toy")
    spec = _spec_from_args(args, AttributeSpec())
    manifest = load_manifest(require_file(args.manifest, "manifest"), spec)
    images, masks = load_manifest_images(manifest, args.size)
    out = prepare_out(resolve_out(args))
    (out / "images").mkdir(exist_ok=True)
    records = []
    for i, (r, img, m) in enumerate(zip(manifest, images, masks)):
        name = f"images/{i:05d}.png"
        save_image(out / name, np.where(m[..., None], img, -1.0) if args.apply_mask else img)
        lm = None
        if r.landmarks:
            with Image.open(manifest.resolve(r)) as im:
                w, h = im.size
            lm = [(x * args.size / w, y * args.size / h) for x, y in r.landmarks]
        records.append(ManifestRecord(name, r.expression, r.lighting, r.subject, lm))
    write_manifest(out / "manifest.jsonl", records)
    write_run_json(out, args, {"size": args.size, "apply_mask": args.apply_mask, "spec": spec.to_dict()}, None)
    print(f"preprocessed {len(records)} images into {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train-quality


def cmd_train_quality(args) -> int:
    from .plotting import plot_epoch_losses
    from .quality import QualityTrainConfig, load_rated_image, predict_quality, train_quality_model

    base = read_json(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in ("image_size", "base_channels", "fc_width", "epochs", "patience",
                                               "seed", "loss", "max_seconds", "lr", "batch_size")
                 if getattr(args, k) is not None}
    if args.no_mirror:
        overrides["mirror"] = False
    try:
        config = QualityTrainConfig(**{**base, **overrides})
    except TypeError as exc:
        raise ValidationError(f"bad quality config: {exc}") from None
    ratings = load_ratings(require_file(args.ratings, "ratings file"))
    if len(ratings) < 2:
        raise ValidationError(f"need at least 2 rated images, got {len(ratings)}")
    missing = [r.image for r in ratings if not Path(r.image).is_file()]
    if missing:
        raise ValidationError(f"{len(missing)} rated images not found, first: {missing[0]}")

    out = prepare_out(resolve_out(args))
    write_run_json(out, args, asdict(config), config.seed)
    result = train_quality_model(ratings, config, out_dir=out)
    plot_epoch_losses(result.log, out / "loss_curve.png")
    test = result.split[2]
    summary = {"epochs_run": len(result.log), "stopped_early": result.stopped_early,
               "split_sizes": [len(s) for s in result.split]}
    if len(test) >= 2:
        imgs = np.stack([load_rated_image(ratings[i], config.image_size) for i in test])
        pred = np.array([p.score for p in predict_quality(imgs, result.net)])
        mu = np.array([ratings[i].mu for i in test])
        if pred.std() > 0 and mu.std() > 0:
            summary["test_pearson"] = float(np.corrcoef(pred, mu)[0, 1])
        summary["test_mae"] = float(np.abs(pred - mu).mean())
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# train-legan


def _train_config(args):
    from .train import TrainConfig

    base = read_json(args.config) if getattr(args, "config", None) else {}
    config = TrainConfig.from_dict(base)
    changes = {}
    for name in ("seed", "epochs", "batch_size", "max_g_steps", "image_size", "g_channels", "d_channels",
                 "n_res", "upsampling", "n_critic", "lr"):
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    for flag in ABLATION_FLAGS:
        if getattr(args, flag, False):
            changes[flag] = True
    if getattr(args, "q_target", None) is not None:
        changes["weights"] = replace(config.weights, q_target=args.q_target)
    spec = _spec_from_args(args, config.spec)
    if spec != config.spec:
        changes["spec"] = spec
    return replace(config, **changes) if changes else config


def _load_quality_for(config, path):
    """Frozen Q for training, or None when the quality term is off."""
    if config.effective_weights.lambda_qual == 0:
        return None
    if not path:
        raise ConfigurationError("quality loss enabled: pass --q with a trained quality checkpoint "
                                 "(or --disable-qual)")
    net, ckpt = load_network(path, "quality")
    if not ckpt.meta.get("trained", False):
        raise ConfigurationError(f"{path} holds an untrained quality network")
    if net.input_size != config.image_size:
        raise ConfigurationError(f"quality net takes {net.input_size}px images, training uses {config.image_size}px")
    return net


def _load_identity(path):
    from .identity import FrozenEmbedder

    enc, _ = load_network(path, "identity")
    return FrozenEmbedder(enc)


def _prepare_legan(args, config):
    """Everything train-legan needs, validated before any output exists."""
    from .train import load_train_data

    manifest = load_manifest(require_file(args.manifest, "manifest"), config.spec)
    if len(manifest) == 0:
        raise ValidationError("manifest has no records")
    q_net = _load_quality_for(config, args.q)
    embedder = None
    if config.effective_weights.lambda_id > 0:
        if args.identity:
            embedder = _load_identity(args.identity)
        elif any(r.subject is None for r in manifest):
            raise ConfigurationError("identity loss enabled: pass --identity, or give every manifest record "
                                     "a subject so a default embedder can be trained")
    resume = None
    if getattr(args, "resume", None):
        rdir = Path(args.resume)
        try:
            resume = (NetworkCheckpoint.load(rdir / "generator.ckpt"),
                      NetworkCheckpoint.load(rdir / "discriminator.ckpt"))
        except CheckpointError as exc:
            raise ValidationError(f"cannot resume: {exc}") from None
        if resume[0].config_hash != config.hash():
            raise ValidationError("resume checkpoint was trained with a different config")
    data = load_train_data(manifest, config)
    return data, q_net, embedder, resume


def _ensure_identity(data, embedder, config, out: Path):
    from .identity import FrozenEmbedder, train_identity_embedder

    if embedder is not None or config.effective_weights.lambda_id == 0:
        return embedder
    enc = train_identity_embedder(data.images, data.subjects, seed=config.seed)
    save_module(out / "identity.ckpt", enc, meta={"trained": True})
    return FrozenEmbedder(enc)


def _fixed_batch(data, config, seed_offset=7):
    from .train import sample_targets

    n = min(config.batch_size, len(data))
    idx = np.arange(n)
    targets = sample_targets(n, config.spec, np.random.default_rng(config.seed + seed_offset))
    return idx, targets


def run_legan(data, config, q_net, embedder, out: Path, resume=None):
    """Train, write log / checkpoints / figure / fixed-batch loss report; returns (result, report)."""
    from .plotting import plot_training_curves
    from .train import fixed_batch_report, train_arrays

    embedder = _ensure_identity(data, embedder, config, out)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
    result = train_arrays(data, config, q_net, embedder, out_dir=out, resume=resume)
    if result.log:
        plot_training_curves(result.log, out / "training_curves.png")
    idx, targets = _fixed_batch(data, config)
    report = fixed_batch_report(result.state.generator, result.state.discriminator, q_net, embedder,
                                data.images[idx], data.expressions[idx], data.lightings[idx], data.masks[idx],
                                targets, config)
    with open(out / "fixed_batch_losses.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    return result, report, embedder


def cmd_train_legan(args) -> int:
    config = _train_config(args)
    data, q_net, embedder, resume = _prepare_legan(args, config)
    out = prepare_out(resolve_out(args))
    write_run_json(out, args, config.to_dict(), config.seed)
    result, report, _ = run_legan(data, config, q_net, embedder, out, resume)
    print(json.dumps({"iterations": result.state.iteration, "d_steps": result.state.d_steps,
                      "fixed_batch_total": report.total}, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# synthesize


def cmd_synthesize(args) -> int:
    from .plotting import plot_synthesis

    gen, ckpt = load_network(args.gen, "generator")
    spec = gen.spec
    image_path = require_file(args.input, "input image")
    size = args.size or ckpt.meta.get("config", {}).get("image_size")
    image = load_image(image_path, size)
    target = encode_conditions(args.expression, args.lighting, spec, *image.shape[:2])
    result = forward_generator(image, target, gen)

    out = prepare_out(resolve_out(args))
    write_run_json(out, args, {"expression": args.expression, "lighting": args.lighting,
                               "generator": str(args.gen), "size": image.shape[0]}, None)
    save_image(out / "output.png", result["output"])
    if "mask_e" in result and not args.no_masks:
        save_image(out / "mask_e.png", result["mask_e"])
        save_image(out / "mask_l.png", result["mask_l"])
    names = spec.expression_names, spec.lighting_names
    title = f"expression {names[0][args.expression] if names[0] else args.expression}, " \
            f"lighting {names[1][args.lighting] if names[1] else args.lighting}"
    plot_synthesis(image, result, out / "panel.png", title=title)
    print(f"wrote {out / 'output.png'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate


def q_extractor(q_net) -> FeatureExtractor:
    from .quality import quality_features

    return FeatureExtractor("quality-penultimate", q_net.fc_width, lambda x: quality_features(x, q_net))


def score_images(real, fake, fake_masks, q_net, embedder, paired=True) -> MetricReport:
    from .quality import predict_quality

    def q_score(images):
        return [p.score for p in predict_quality(images, q_net, masks=fake_masks)]

    emb = embedder.numpy_embed if embedder is not None else None
    return evaluate(real, fake, q_extractor(q_net), q_score=q_score, embedder=emb, paired=paired)


def cmd_evaluate(args) -> int:
    from .plotting import plot_quality_histogram
    from .quality import predict_quality

    spec = _spec_from_args(args, AttributeSpec())
    real_m = load_manifest(require_file(args.real, "real manifest"), spec)
    fake_m = load_manifest(require_file(args.fake, "fake manifest"), spec)
    if len(real_m) == 0 or len(fake_m) == 0:
        raise ValidationError("real and fake manifests must be nonempty")
    paired = not args.unpaired
    if paired and len(real_m) != len(fake_m):
        from .errors import AlignmentError

        raise AlignmentError(f"paired metrics need aligned manifests: {len(real_m)} real vs {len(fake_m)} fake "
                             "(use --unpaired for FID and quality only)")
    q_net, _ = load_network(args.q, "quality")
    embedder = _load_identity(args.identity) if args.identity else None
    size = q_net.input_size
    real, _ = load_manifest_images(real_m, size)
    fake, fake_masks = load_manifest_images(fake_m, size)
    report = score_images(real, fake, fake_masks, q_net, embedder, paired)

    out = prepare_out(resolve_out(args))
    write_run_json(out, args, {"real": str(args.real), "fake": str(args.fake), "paired": paired,
                               "extractor": report.extractor}, None)
    write_report(out / "report.json", report)
    write_table(out / "report.csv", [report.row(args.label)])
    scores = [p.score for p in predict_quality(fake, q_net, masks=fake_masks)]
    plot_quality_histogram(scores, out / "quality_hist.png", label=args.label)
    print(json.dumps(report.row(args.label)))
    return EXIT_OK


# --------------------------------------------------------------------------
# ablate


def ablation_variants(flags, q_values) -> tuple:
    """(loss-ablation variants, q-sweep variants) as (name, changes) pairs."""
    loss = []
    if flags or not q_values:
        loss = [(f"wo_{f[len('disable_'):]}", {f: True}) for f in flags] + [("full", {})]
    sweep = [(f"q_{q:g}", {"q_target": float(q)}) for q in q_values]
    return loss, sweep


def parse_flags(text) -> list:
    if not text:
        return []
    if text.strip() == "all":
        return list(ABLATION_FLAGS)
    flags = [f.strip().replace("-", "_") for f in text.split(",") if f.strip()]
    flags = [f if f.startswith("disable_") else f"disable_{f}" for f in flags]
    bad = [f for f in flags if f not in ABLATION_FLAGS]
    if bad:
        raise ValidationError(f"unknown ablation flag(s) {', '.join(bad)}; valid: {', '.join(ABLATION_FLAGS)}")
    if len(set(flags)) != len(flags):
        raise ValidationError("duplicate ablation flags")
    return flags


def parse_q_values(text) -> list:
    if not text:
        return []
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--q-values must be comma-separated numbers, got {text!r}") from None
    for v in vals:
        if not 5.0 <= v <= 10.0:
            raise ValidationError(f"q value {v} outside [5, 10]")
    return vals


def _variant_config(config, changes):
    if "q_target" in changes:
        return replace(config, weights=replace(config.weights, q_target=changes["q_target"]))
    return replace(config, **changes)


def _eval_generator(generator, real, masks, q_net, embedder, config, seed_offset=11) -> MetricReport:
    from .train import sample_targets, translate

    te, tl = sample_targets(len(real), config.spec, np.random.default_rng(config.seed + seed_offset))
    fake = translate(generator, real, te, tl, config.spec)["output"]
    if q_net is None:
        raise ConfigurationError("evaluation needs a quality checkpoint for features and scores")
    return score_images(real, fake, masks, q_net, embedder, paired=True)


def _run_variant(job):
    name, config, data, q_net, embedder, eval_set, out = job
    vdir = prepare_out(out / name)
    result, report, emb = run_legan(data, config, q_net, embedder, vdir)
    metrics = _eval_generator(result.state.generator, eval_set[0], eval_set[1], q_net, emb or embedder, config)
    write_report(vdir / "report.json", metrics)
    row = metrics.row(name)
    row.update({f"loss_{t}": report.contributions[t] for t in G_TERMS})
    row["loss_total"] = report.total
    return row


def cmd_ablate(args) -> int:
    from .identity import FrozenEmbedder, train_identity_embedder
    from .plotting import plot_metric_bars

    flags = parse_flags(args.flags)
    q_values = parse_q_values(args.q_values)
    config = _train_config(args)
    loss_variants, sweep_variants = ablation_variants(flags, q_values)
    if args.q is None:
        raise ConfigurationError("ablate needs --q: the quality net supplies evaluation features and scores")
    data, _, embedder, _ = _prepare_legan(args, replace(config, disable_qual=True, disable_id=True))
    q_net, _ = load_network(args.q, "quality")
    if q_net.input_size != config.image_size:
        raise ConfigurationError(f"quality net takes {q_net.input_size}px images, training uses {config.image_size}px")
    if args.identity:
        embedder = _load_identity(args.identity)
    elif any(s is None for s in data.subjects):
        raise ConfigurationError("pass --identity or give every manifest record a subject")
    if args.eval_manifest:
        em = load_manifest(require_file(args.eval_manifest, "evaluation manifest"), config.spec)
        eval_set = load_manifest_images(em, config.image_size)
    else:
        eval_set = (data.images, data.masks)

    out = prepare_out(resolve_out(args))
    write_run_json(out, args, {"base": config.to_dict(), "flags": flags, "q_values": q_values}, config.seed)
    if embedder is None:
        enc = train_identity_embedder(data.images, data.subjects, seed=config.seed)
        save_module(out / "identity.ckpt", enc, meta={"trained": True})
        embedder = FrozenEmbedder(enc)

    def jobs(variants):
        return [(name, _variant_config(config, ch), data, q_net, embedder, eval_set, out) for name, ch in variants]

    def run_all(variants):
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                return list(pool.map(_run_variant, jobs(variants)))
        return [_run_variant(j) for j in jobs(variants)]

    columns = ["model", "fid", "lpips", "ssim", "match_score", "quality_score",
               *(f"loss_{t}" for t in G_TERMS), "loss_total"]
    if loss_variants:
        rows = run_all(loss_variants)
        write_table(out / "ablation.csv", rows, columns=columns)
        plot_metric_bars(rows, "fid", out / "ablation_fid.png")
    if sweep_variants:
        rows = run_all(sweep_variants)
        write_table(out / "q_sweep.csv", rows, columns=columns)
        plot_metric_bars(rows, "quality_score", out / "q_sweep_quality.png")
    print(f"ablation outputs in {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_out(p):
    p.add_argument("--out", help=f"output directory (default: ${ENV_OUT}/<command>)")


def _add_spec(p):
    p.add_argument("--num-expressions", type=int)
    p.add_argument("--num-lightings", type=int)


def _add_legan_options(p):
    p.add_argument("--manifest", required=True)
    p.add_argument("--q", help="trained quality checkpoint")
    p.add_argument("--identity", help="identity embedder checkpoint")
    p.add_argument("--config", help="TrainConfig JSON (see docs/train_config.schema.json)")
    for name, typ in (("seed", int), ("epochs", int), ("batch-size", int), ("max-g-steps", int),
                      ("image-size", int), ("g-channels", int), ("d-channels", int), ("n-res", int),
                      ("n-critic", int), ("lr", float), ("q-target", float)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--upsampling", choices=("pixel-shuffle", "bilinear", "transposed-conv"))
    _add_spec(p)
    _add_out(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lightexpr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("preprocess", help="normalize a manifest, or generate the toy corpus")
    p.add_argument("--manifest")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--apply-mask", action="store_true", help="write face-masked images")
    p.add_argument("--toy", type=int, default=0, help="generate a toy corpus of this many images")
    p.add_argument("--toy-subjects", type=int, default=20)
    p.add_argument("--toy-ratings", type=int, default=0, help="also write a rated degradation corpus")
    p.add_argument("--toy-heldout", type=int, default=0, help="also write a held-out toy manifest")
    p.add_argument("--degradations", default="blur,noise,texture,flat")
    p.add_argument("--seed", type=int, default=0)
    _add_spec(p)
    _add_out(p)

    p = sub.add_parser("train-quality", help="train the quality scorer on rated images")
    p.add_argument("--ratings", required=True)
    p.add_argument("--config", help="quality training config JSON")
    for name, typ in (("image-size", int), ("base-channels", int), ("fc-width", int), ("epochs", int),
                      ("patience", int), ("seed", int), ("max-seconds", float), ("lr", float),
                      ("batch-size", int)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--loss", choices=("margin", "hinge"))
    p.add_argument("--no-mirror", action="store_true")
    _add_out(p)

    p = sub.add_parser("train-legan", help="train the expression and lighting translator")
    _add_legan_options(p)
    for flag in ABLATION_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, action="store_true")
    p.add_argument("--resume", help="run directory to continue from")

    p = sub.add_parser("synthesize", help="translate one image to target conditions")
    p.add_argument("--gen", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--expression", type=int, required=True)
    p.add_argument("--lighting", type=int, required=True)
    p.add_argument("--size", type=int, help="resize input (default: the training size)")
    p.add_argument("--no-masks", action="store_true")
    _add_out(p)

    p = sub.add_parser("evaluate", help="score synthesized images against real ones")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--identity")
    p.add_argument("--label", default="model")
    p.add_argument("--unpaired", action="store_true", help="skip paired metrics (SSIM, match score)")
    _add_spec(p)
    _add_out(p)

    p = sub.add_parser("ablate", help="train one variant per disabled term and/or q value")
    _add_legan_options(p)
    p.add_argument("--flags", help="comma-separated ablation flags, or 'all'")
    p.add_argument("--q-values", help="comma-separated q targets, e.g. 5,6,7,8,9,10")
    p.add_argument("--eval-manifest", help="held-out manifest for variant metrics (default: training set)")
    p.add_argument("--jobs", type=int, default=1, help="variants trained in parallel processes")
    return parser


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train-quality": cmd_train_quality,
    "train-legan": cmd_train_legan,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        args.argv = argv
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ValidationError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except LightExprError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
