"""Command-line interface.

Subcommands cover the whole desk-scale workflow: build the face basis,
render a dataset, train the two auxiliary models, train the re-enactment
model, run single re-enactments, and evaluate metrics. Every command
takes --seed/--out/--config/--json; reports land as delimited files plus
rendered figures inside --out.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="JSON file with default values for this command")
    parser.add_argument("--seed", type=int, default=0, metavar="N")
    parser.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (default: current directory)")
    parser.add_argument("--json", action="store_true",
                        help="print a machine-readable JSON report to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facemotion",
        description="one-shot face re-enactment on procedural face proxies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-basis", help="build and save the face basis asset")
    _global_flags(p)

    p = sub.add_parser("generate-data", help="render a synthetic dataset")
    _global_flags(p)
    p.add_argument("--basis", metavar="PATH",
                   help="basis asset (built from --seed when omitted)")
    p.add_argument("--identities", type=int, default=16)
    p.add_argument("--per-identity", type=int, default=8)
    p.add_argument("--resolution", type=int, default=64, choices=[64, 128, 256])

    p = sub.add_parser("train-encoder", help="train the coefficient regressor")
    _global_flags(p)
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--width", type=int, default=24)

    p = sub.add_parser("train-embedder", help="train the identity embedder")
    _global_flags(p)
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--width", type=int, default=16)

    p = sub.add_parser("train", help="train the re-enactment model")
    _global_flags(p)
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--basis", metavar="PATH")
    p.add_argument("--encoder", metavar="PATH",
                   help="coefficient-encoder checkpoint")
    p.add_argument("--embedder", metavar="PATH",
                   help="identity-embedder checkpoint")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--resume", metavar="PATH",
                   help="continue from a saved training checkpoint")

    p = sub.add_parser("reenact", help="re-enact one source with one driving image")
    _global_flags(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--source", required=True, metavar="IMAGE")
    p.add_argument("--driving", required=True, metavar="IMAGE")
    p.add_argument("--output-name", default="reenacted.png")
    p.add_argument("--dump-correspondence", metavar="DIR",
                   help="write intermediate proxies, warps, and the field")

    p = sub.add_parser("evaluate", help="compute metrics on a dataset")
    _global_flags(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--max-pairs", type=int, default=None)

    return parser


def _load_config(args: argparse.Namespace) -> dict:
    if not args.config:
        return {}
    with open(args.config) as fh:
        return json.load(fh)


def _emit(args: argparse.Namespace, report: dict) -> None:
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for key, value in report.items():
            print(f"{key}: {value}")


def _basis_path(args, cfg) -> str:
    return getattr(args, "basis", None) or cfg.get("basis") or \
        os.path.join(args.out, "basis.fbas")


def _load_or_build_basis(args, cfg):
    from .face_model import basis as basis_mod
    path = _basis_path(args, cfg)
    if os.path.isfile(path):
        return basis_mod.load_basis(path), path
    basis = basis_mod.build_face_basis(seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    basis_mod.save_basis(basis, path)
    return basis, path


def cmd_make_basis(args) -> int:
    from .face_model import basis as basis_mod
    basis = basis_mod.build_face_basis(seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "basis.fbas")
    basis_mod.save_basis(basis, path)
    _emit(args, {"path": path, "vertices": basis.n_vertices,
                 "faces": int(basis.faces.shape[0]),
                 "fingerprint": basis_mod.basis_fingerprint(basis)})
    return 0


def cmd_generate_data(args) -> int:
    from .face_model import dataset as dataset_mod
    cfg = _load_config(args)
    basis, basis_path = _load_or_build_basis(args, cfg)
    records = dataset_mod.generate_dataset(
        basis, args.out,
        n_identities=cfg.get("identities", args.identities),
        samples_per_identity=cfg.get("per_identity", args.per_identity),
        resolution=cfg.get("resolution", args.resolution),
        seed=args.seed)
    _emit(args, {"out": args.out, "basis": basis_path, "samples": len(records)})
    return 0


def cmd_train_encoder(args) -> int:
    import torch

    from . import encoders, report
    from .face_model.dataset import load_dataset
    torch.set_num_threads(1)
    cfg = _load_config(args)
    index = load_dataset(args.data)
    result = encoders.train_encoder(
        index, epochs=cfg.get("epochs", args.epochs), seed=args.seed,
        width=cfg.get("width", args.width))
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "encoder.fmck")
    encoders.save_encoder_checkpoint(ckpt, result)
    paths = report.write_encoder_report(result.history, args.out)
    final = result.history[-1].val_mse if result.history else None
    _emit(args, {"checkpoint": ckpt, "final_val_mse": final,
                 "epochs": len(result.history), **paths})
    return 0


def cmd_train_embedder(args) -> int:
    import torch

    from . import encoders
    from .face_model.dataset import load_dataset
    torch.set_num_threads(1)
    cfg = _load_config(args)
    index = load_dataset(args.data)
    result = encoders.train_embedder(
        index, epochs=cfg.get("epochs", args.epochs), seed=args.seed,
        width=cfg.get("width", args.width))
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "embedder.fmck")
    encoders.save_embedder_checkpoint(ckpt, result)
    _emit(args, {"checkpoint": ckpt, "margin": result.margin,
                 "epochs": len(result.history)})
    return 0


def cmd_train(args) -> int:
    from . import encoders, report, training
    from .face_model.dataset import load_dataset
    cfg = _load_config(args)
    index = load_dataset(args.data)

    if args.resume:
        state, history = training.run_training(
            index, None, None, None, None, None,
            out_dir=args.out, resume_from=args.resume)
    else:
        if not args.encoder or not args.embedder:
            raise ValueError("--encoder and --embedder are required "
                             "(or use --resume)")
        basis, _ = _load_or_build_basis(args, cfg)
        encoder, normalizer, _ = encoders.load_encoder_checkpoint(args.encoder)
        embedder, _ = encoders.load_embedder_checkpoint(args.embedder)
        train_cfg = training.TrainConfig.from_json(cfg["train"]) \
            if "train" in cfg else training.TrainConfig()
        train_cfg.seed = args.seed
        train_cfg.resolution = index.resolution
        if args.steps is not None:
            train_cfg.total_steps = args.steps
        if args.batch_size is not None:
            train_cfg.batch_size = args.batch_size
        state, history = training.run_training(
            index, train_cfg, basis, encoder, normalizer, embedder,
            out_dir=args.out)
    paths = report.write_training_report(history, args.out)
    _emit(args, {"checkpoint": os.path.join(args.out, "checkpoint.fmck"),
                 "steps": state.step, "weights": state.weights.as_dict(),
                 **paths})
    return 0


def cmd_reenact(args) -> int:
    from . import pipeline as pipeline_mod
    os.makedirs(args.out, exist_ok=True)
    request = pipeline_mod.ReenactRequest(
        source_path=args.source, driving_path=args.driving,
        checkpoint_path=args.checkpoint,
        output_path=os.path.join(args.out, args.output_name),
        dump_dir=args.dump_correspondence)
    pipeline_mod.reenact(request)
    _emit(args, {"output": request.output_path,
                 "dump_dir": request.dump_dir or ""})
    return 0


def cmd_evaluate(args) -> int:
    from . import evaluation, report
    from .face_model.dataset import load_dataset
    from .pipeline import ReenactPipeline
    index = load_dataset(args.data)
    pipe = ReenactPipeline.from_checkpoint(args.checkpoint)
    metrics = evaluation.evaluate(index, pipe, max_pairs=args.max_pairs)
    paths = report.write_metrics_report(metrics, args.out)
    _emit(args, {**metrics.to_json(), **paths})
    return 0


_COMMANDS = {
    "make-basis": cmd_make_basis,
    "generate-data": cmd_generate_data,
    "train-encoder": cmd_train_encoder,
    "train-embedder": cmd_train_embedder,
    "train": cmd_train,
    "reenact": cmd_reenact,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        import torch
        torch.set_num_threads(1)
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
