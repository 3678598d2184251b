"""Command-line entry points.

Every subcommand maps onto one library operation.  Exit codes: 0 success,
1 usage error, 2 data/domain error.  Output files are written atomically
(temp file in the same directory, then rename).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import ingest_jsonl, ingest_midi, save_jsonl, split, synth_corpus
from .errors import FadersError
from .evaluation import EvalReport, evaluate, fader_sweep, project_latents
from .model import FaderNetModel, ModelConfig
from .rng import stream
from .training import train, write_loss_csv
from .transfer import transfer

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(args) -> ModelConfig:
    overrides = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        config = ModelConfig.from_dict(data)
        if args.mode:
            data = config.to_dict()
            data["mode"] = args.mode
            config = ModelConfig.from_dict(data)
        return config
    if args.mode:
        overrides["mode"] = args.mode
    return ModelConfig.desk(**overrides)


def _load_corpus(path: str):
    result = ingest_jsonl(path)
    if result.skipped_overflow:
        print(
            f"skipped {result.skipped_overflow} over-long record(s)", file=sys.stderr
        )
    return result.records


def _apply_labelled_fraction(records, fraction: float, seed: int) -> None:
    """Keep at most ceil(fraction * n) labelled records (at least 1 per class)."""
    import math

    labelled = [i for i, r in enumerate(records) if r.arousal_class is not None]
    if not labelled:
        return
    budget = max(1, math.ceil(len(records) * fraction)) if fraction > 0 else 0
    rng = stream("labelled-fraction", seed)
    keep = set(rng.choice(labelled, size=min(budget, len(labelled)), replace=False).tolist())
    if budget:
        for cls in (0, 1):
            if all(records[i].arousal_class != cls for i in keep):
                candidates = [i for i in labelled if records[i].arousal_class == cls]
                if candidates:
                    keep.add(candidates[0])
    for i in labelled:
        if i not in keep:
            records[i].arousal_class = None


def cmd_corpus_synth(args) -> int:
    records = synth_corpus(args.n, labelled_fraction=args.labelled_fraction, seed=args.seed)
    out = Path(args.out)
    fd, tmp = tempfile.mkstemp(dir=out.parent or Path("."), prefix=out.name)
    os.close(fd)
    save_jsonl(records, tmp)
    os.replace(tmp, out)
    labelled = sum(r.arousal_class is not None for r in records)
    print(f"wrote {len(records)} records ({labelled} labelled) to {out}")
    return 0


def cmd_corpus_ingest(args) -> int:
    records = []
    skipped = 0
    for midi_path in args.midi:
        result = ingest_midi(Path(midi_path).read_bytes())
        records.extend(result.records)
        skipped += result.skipped_overflow
    out = Path(args.out)
    fd, tmp = tempfile.mkstemp(dir=out.parent or Path("."), prefix=out.name)
    os.close(fd)
    save_jsonl(records, tmp)
    os.replace(tmp, out)
    print(f"wrote {len(records)} records to {out} (skipped {skipped} over-long)")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    if args.steps is not None:
        data = config.to_dict()
        data["train_steps"] = args.steps
        config = ModelConfig.from_dict(data)
    records = _load_corpus(args.corpus)
    if args.labelled_fraction is not None:
        _apply_labelled_fraction(records, args.labelled_fraction, args.seed)
    parts = split(records, seed=args.seed)
    model = FaderNetModel(config, seed=args.seed)

    def progress(step, breakdown):
        if step % 200 == 0:
            print(f"step {step}: total {breakdown.total:.3f}", file=sys.stderr)

    result = train(model, parts.train, seed=args.seed, progress=progress)
    checkpoint_id = save_checkpoint(model, args.out)
    losses_path = Path(args.out).with_suffix(".losses.csv")
    write_loss_csv(result.history, losses_path)
    print(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "checkpoint_id": checkpoint_id,
                "steps": result.steps,
                "final_total": result.history[-1].total,
                "zd_ranges": result.zd_ranges,
                "losses_csv": str(losses_path),
            }
        )
    )
    return 0


def _report_with_runs(model, test_records, args, checkpoint_id) -> dict:
    reports = []
    for run in range(args.runs):
        report = evaluate(
            model,
            test_records,
            t_steps=args.t_steps,
            m_samples=args.m_samples,
            seed=args.seed + run,
            checkpoint_id=checkpoint_id,
        )
        reports.append(report)
    payload = {"runs": [r.to_dict() for r in reports]}
    if args.runs > 1:
        summary = {}
        for feature in model.features:
            summary[feature] = {}
            for metric in ("consistency", "restrictiveness", "linearity"):
                values = [getattr(r.scores[feature], metric) for r in reports]
                summary[feature][metric] = {
                    "mean": float(np.mean(values)),
                    "std": float(np.std(values)),
                }
        payload["summary"] = summary
    return payload


def cmd_eval(args) -> int:
    model, checkpoint_id = load_checkpoint(args.checkpoint)
    records = _load_corpus(args.corpus)
    parts = split(records, seed=args.seed)
    payload = _report_with_runs(model, parts.test, args, checkpoint_id)
    text = json.dumps(payload, indent=2)
    if args.out:
        _atomic_write_text(Path(args.out), text + "\n")
    if args.csv:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(EvalReport.CSV_HEADER)
        for run in payload["runs"]:
            for feature, scores in run["scores"].items():
                writer.writerow(
                    [run["checkpoint_id"], feature]
                    + [scores[m] for m in ("consistency", "restrictiveness", "linearity")]
                    + [run["t_steps"], run["m_samples"], run["seed"]]
                )
        _atomic_write_text(Path(args.csv), buf.getvalue())
    print(text)
    return 0


def cmd_sweep(args) -> int:
    model, checkpoint_id = load_checkpoint(args.checkpoint)
    records = _load_corpus(args.corpus)
    parts = split(records, seed=args.seed)
    result = fader_sweep(
        model,
        parts.test,
        args.feature,
        t_steps=args.t_steps,
        m_samples=args.m_samples,
        seed=args.seed,
    )
    payload = {
        "checkpoint_id": checkpoint_id,
        "feature": result.feature,
        "slid_values": result.slid_values.tolist(),
        "rhythm_density": result.rhythm_density.tolist(),
        "note_density": result.note_density.tolist(),
        "sample_indices": result.sample_indices,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        _atomic_write_text(Path(args.out), text + "\n")
    print(text)
    return 0


def cmd_transfer(args) -> int:
    model, checkpoint_id = load_checkpoint(args.checkpoint)
    records = _load_corpus(args.corpus)
    if not 0 <= args.index < len(records):
        print(f"record index {args.index} out of range", file=sys.stderr)
        return USAGE_ERROR
    result = transfer(model, records[args.index].segment, args.target, alpha=args.alpha)
    payload = {"checkpoint_id": checkpoint_id, **result.to_dict()}
    text = json.dumps(payload, indent=2)
    if args.out:
        _atomic_write_text(Path(args.out), text + "\n")
    print(text)
    return 0


def cmd_project(args) -> int:
    model, checkpoint_id = load_checkpoint(args.checkpoint)
    records = _load_corpus(args.corpus)
    parts = split(records, seed=args.seed)
    encoded = model.encode_records(parts.test)
    labels = [
        r.arousal_truth if r.arousal_truth is not None else -1 for r in parts.test
    ]
    points = project_latents(encoded[args.feature], labels)
    lines = ["x,y,label"] + [f"{x},{y},{label}" for x, y, label in points]
    _atomic_write_text(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {len(points)} points for {args.feature} ({checkpoint_id}) to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    model, checkpoint_id = load_checkpoint(args.checkpoint)
    app = create_app(model, checkpoint_id, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="faders", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="create or convert corpora")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)

    synth = corpus_sub.add_parser("synth", help="generate a synthetic corpus")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--labelled-fraction", type=float, default=0.01)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_corpus_synth)

    ingest = corpus_sub.add_parser("ingest", help="convert MIDI files to JSONL")
    ingest.add_argument("--midi", nargs="+", required=True)
    ingest.add_argument("--out", required=True)
    ingest.set_defaults(func=cmd_corpus_ingest)

    train_p = sub.add_parser("train", help="train a model")
    train_p.add_argument("--corpus", required=True)
    train_p.add_argument("--config", help="JSON config file")
    train_p.add_argument(
        "--mode", choices=["gm_vae", "vanilla_vae", "ablation_single_latent"]
    )
    train_p.add_argument("--seed", type=int, default=0)
    train_p.add_argument("--steps", type=int)
    train_p.add_argument("--labelled-fraction", type=float)
    train_p.add_argument("--out", required=True)
    train_p.set_defaults(func=cmd_train)

    eval_p = sub.add_parser("eval", help="controllability scores on the test split")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--corpus", required=True)
    eval_p.add_argument("--seed", type=int, default=0)
    eval_p.add_argument("--t-steps", type=int, default=8)
    eval_p.add_argument("--m-samples", type=int, default=100)
    eval_p.add_argument("--runs", type=int, default=1)
    eval_p.add_argument("--out")
    eval_p.add_argument("--csv")
    eval_p.set_defaults(func=cmd_eval)

    sweep = sub.add_parser("sweep", help="raw fader-sweep densities")
    sweep.add_argument("--checkpoint", required=True)
    sweep.add_argument("--corpus", required=True)
    sweep.add_argument("--feature", choices=["rhythm", "note", "latent"], required=True)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--t-steps", type=int, default=8)
    sweep.add_argument("--m-samples", type=int, default=100)
    sweep.add_argument("--out")
    sweep.set_defaults(func=cmd_sweep)

    transfer_p = sub.add_parser("transfer", help="arousal style transfer on one record")
    transfer_p.add_argument("--checkpoint", required=True)
    transfer_p.add_argument("--corpus", required=True)
    transfer_p.add_argument("--index", type=int, default=0)
    transfer_p.add_argument("--target", type=int, choices=[0, 1], required=True)
    transfer_p.add_argument("--alpha", type=float, default=1.0)
    transfer_p.add_argument("--out")
    transfer_p.set_defaults(func=cmd_transfer)

    project = sub.add_parser("project", help="2-D latent projection CSV")
    project.add_argument("--checkpoint", required=True)
    project.add_argument("--corpus", required=True)
    project.add_argument("--feature", choices=["rhythm", "note", "latent"], required=True)
    project.add_argument("--seed", type=int, default=0)
    project.add_argument("--out", required=True)
    project.set_defaults(func=cmd_project)

    serve = sub.add_parser("serve", help="HTTP service for the fader console")
    serve.add_argument("--checkpoint", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8707)
    serve.add_argument("--ui-dir", help="static UI directory to serve at /")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FadersError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
