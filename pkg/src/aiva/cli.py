"""Command-line entry point.

Subcommands cover the full workflow: gen-data, train, eval, ablate,
infer, import-mvsa, serve. Flags take precedence over the optional
--config JSON file, which takes precedence over built-in defaults; every
subcommand echoes its fully resolved configuration to stderr before
acting. Machine-readable output goes to stdout or files, logs to stderr.

Exit codes: 0 success, 1 usage/validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ModelConfig
from .datasets import (
    DatasetError,
    SynthSpec,
    import_mvsa,
    load_jsonl,
    save_jsonl,
    split_records,
    synth_generate,
)
from .epe import PromptTemplate, default_template, default_labels
from .training import (
    CheckpointError,
    TrainConfig,
    evaluate,
    history_csv,
    load_checkpoint,
    rows_to_csv,
    run_ablation,
    run_lambda_sweep,
    save_result,
    train,
)

log = logging.getLogger("aiva")


class CliUsageError(Exception):
    pass


class CliRuntimeError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliUsageError(message)


# Defaults per destination name; None in parsed args means "not given on
# the command line", so the config file (then these) fill the gap.
_DEFAULTS = {
    "seed": 0,
    "log_level": "info",
    "lr": 2e-5,
    "batch_size": 16,
    "epochs": 10,
    "lam": 1.0,
    "tau": 0.1,
    "d_model": 64,
    "heads": 4,
    "text_layers": 2,
    "vis_layers": 2,
    "fusion_layers": 3,
    "max_len": 32,
    "image_size": 32,
    "patch_size": 8,
    "classes": 3,
    "freeze_encoders": False,
    "split": "test",
    "sweep": "components",
    "seeds": "0,1,2",
    "lambdas": "0.5,1.0,1.5,2.0",
    "host": "127.0.0.1",
    "port": 8000,
    "max_turns": 200,
}


def _resolve(args: argparse.Namespace, file_cfg: dict) -> dict:
    """flags > config file > defaults."""
    eff = {}
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            eff[key] = value
        elif key in file_cfg:
            eff[key] = file_cfg[key]
        elif key in _DEFAULTS:
            eff[key] = _DEFAULTS[key]
        else:
            eff[key] = None
    return eff


def _echo(command: str, eff: dict):
    print(f"effective-config {command} {json.dumps(eff, sort_keys=True)}", file=sys.stderr)


def _model_config(eff: dict) -> ModelConfig:
    return ModelConfig(
        d_model=int(eff["d_model"]), n_heads=int(eff["heads"]),
        n_text_layers=int(eff["text_layers"]), n_vis_layers=int(eff["vis_layers"]),
        n_fusion_layers=int(eff["fusion_layers"]), max_len=int(eff["max_len"]),
        image_size=int(eff["image_size"]), patch_size=int(eff["patch_size"]),
        n_classes=int(eff["classes"]))


def _train_config(eff: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(eff["lr"]), batch_size=int(eff["batch_size"]),
        epochs=int(eff["epochs"]), lam=float(eff["lam"]), tau=float(eff["tau"]),
        seed=int(eff["seed"]), freeze_encoders=bool(eff["freeze_encoders"]),
        model=_model_config(eff))


def _load_split_files(data_dir: str):
    d = Path(data_dir)
    out = {}
    for split in ("train", "val", "test"):
        path = d / f"{split}.jsonl"
        if not path.exists():
            raise CliRuntimeError(f"missing dataset file: {path}")
        out[split] = load_jsonl(path)
    return out


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--d-model", dest="d_model", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--text-layers", dest="text_layers", type=int)
    p.add_argument("--vis-layers", dest="vis_layers", type=int)
    p.add_argument("--fusion-layers", dest="fusion_layers", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--classes", type=int)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--freeze-encoders", dest="freeze_encoders", action="store_const", const=True)
    _add_model_flags(p)


def build_parser() -> _Parser:
    parser = _Parser(prog="aiva", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--config", help="JSON file of flag defaults")
    parser.add_argument("--log-level", dest="log_level",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="directory of {train,val,test}.jsonl")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="per-epoch history CSV path")
    p.add_argument("--warm-start", dest="warm_start", help="checkpoint to warm-start from")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset JSONL file or directory")
    p.add_argument("--split", choices=["train", "val", "test"])

    p = sub.add_parser("ablate", help="component ablations / lambda sweep")
    p.add_argument("--data", required=True, help="directory of {train,val,test}.jsonl")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--sweep", choices=["components", "lambda"])
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--lambdas", help="comma-separated lambda grid")
    _add_train_flags(p)

    p = sub.add_parser("infer", help="classify one text/image pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--image", help="image file path (optional)")

    p = sub.add_parser("import-mvsa", help="convert an MVSA-layout directory to JSONL")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--report", help="import report JSON path")

    p = sub.add_parser("serve", help="run the agent service")
    p.add_argument("--checkpoint", help="defaults to $AIVA_CHECKPOINT")
    p.add_argument("--template", help="prompt template JSON path")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--sessions-path", dest="sessions_path")
    p.add_argument("--max-turns", dest="max_turns", type=int)
    return parser


# -- subcommand implementations ---------------------------------------------


def cmd_gen_data(eff: dict) -> int:
    if eff.get("spec"):
        try:
            raw = json.loads(Path(eff["spec"]).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CliRuntimeError(f"spec file not found: {eff['spec']}")
        except json.JSONDecodeError as e:
            raise CliUsageError(f"spec file is not valid JSON: {e}")
    else:
        raw = {}
    raw.setdefault("seed", int(eff["seed"]))
    try:
        spec = SynthSpec.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise CliUsageError(f"invalid spec: {e}")
    records = synth_generate(spec)
    out = Path(eff["out"])
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for split in ("train", "val", "test"):
        recs = split_records(records, split)
        save_jsonl(recs, out / f"{split}.jsonl")
        counts[split] = len(recs)
    report = {"spec": spec.to_dict(), "counts": counts, "total": len(records)}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(report))
    return 0


def cmd_train(eff: dict) -> int:
    data = _load_split_files(eff["data"])
    cfg = _train_config(eff)
    warm = None
    if eff.get("warm_start"):
        warm = _load_ckpt(eff["warm_start"])
    result = train(cfg, data["train"], data["val"], warm_start=warm,
                   progress=lambda row: log.info("epoch %s", row))
    save_result(result, eff["out"])
    if eff.get("history"):
        Path(eff["history"]).write_text(history_csv(result.history), encoding="utf-8")
    print(json.dumps({"checkpoint": str(eff["out"]),
                      "final": result.history[-1]}))
    return 0


def _load_ckpt(path: str):
    if not Path(path).exists():
        raise CliRuntimeError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except CheckpointError as e:
        raise CliRuntimeError(str(e))


def _records_for_eval(eff: dict):
    data_path = Path(eff["data"])
    if data_path.is_dir():
        records = load_jsonl(data_path / f"{eff['split']}.jsonl")
    else:
        records = load_jsonl(data_path)
    return records


def cmd_eval(eff: dict) -> int:
    ckpt = _load_ckpt(eff["checkpoint"])
    records = _records_for_eval(eff)
    labels = {r.label for r in records}
    too_big = {l for l in labels if l >= ckpt.config.n_classes}
    if too_big:
        raise CliRuntimeError(
            f"label-space mismatch: dataset labels go up to {max(labels)} but the "
            f"checkpoint classifies {ckpt.config.n_classes} classes")
    from . import nn
    metrics = evaluate(nn.unflatten_params(ckpt.params), ckpt.config, ckpt.vocab, records)
    print(json.dumps(metrics.to_dict()))
    return 0


def cmd_ablate(eff: dict) -> int:
    data = _load_split_files(eff["data"])
    cfg = _train_config(eff)
    seeds = [int(s) for s in str(eff["seeds"]).split(",") if s != ""]
    if eff["sweep"] == "lambda":
        lambdas = [float(v) for v in str(eff["lambdas"]).split(",") if v != ""]
        rows = run_lambda_sweep(cfg, data["train"], data["val"], data["test"],
                                lambdas=lambdas, seeds=seeds,
                                progress=lambda row: log.info("done %s", row))
    else:
        rows = run_ablation(cfg, data["train"], data["val"], data["test"], seeds=seeds,
                            progress=lambda row: log.info("done %s", row))
    csv_text = rows_to_csv(rows)
    Path(eff["out"]).write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    return 0


def cmd_infer(eff: dict) -> int:
    ckpt = _load_ckpt(eff["checkpoint"])
    from . import nn
    from .datasets import decode_image
    from .model import neutral_placeholder_image
    from .encoders import encode_pair, tokenize
    from .fusion import forward_mspn
    import numpy as np

    params = nn.unflatten_params(ckpt.params)
    cfg = ckpt.config
    if eff.get("image"):
        if not Path(eff["image"]).exists():
            raise CliRuntimeError(f"image not found: {eff['image']}")
        image = decode_image({"path": eff["image"]}, cfg.image_size, cfg.channels)
    else:
        image = neutral_placeholder_image(cfg)
    tokens = tokenize(eff["text"], ckpt.vocab, cfg.max_len)
    result = forward_mspn(encode_pair(tokens, image, params, cfg), params, cfg)
    labels = default_labels(cfg.n_classes)
    out = {
        "sentiment": labels[int(np.argmax(result.prediction.logits.data))],
        "probabilities": [float(v) for v in result.prediction.p_hat.data],
    }
    print(json.dumps(out))
    return 0


def cmd_import_mvsa(eff: dict) -> int:
    if not Path(eff["dir"]).is_dir():
        raise CliRuntimeError(f"not a directory: {eff['dir']}")
    report = import_mvsa(eff["dir"], eff["out"], seed=int(eff["seed"]))
    if eff.get("report"):
        Path(eff["report"]).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    print(json.dumps(report.to_dict()))
    return 0


def cmd_serve(eff: dict) -> int:
    import uvicorn

    from .service import AgentService, LlmBackend, build_app
    from .training.checkpoint import checkpoint_id

    ckpt_path = eff.get("checkpoint") or os.environ.get("AIVA_CHECKPOINT")
    if not ckpt_path:
        raise CliUsageError("no checkpoint: pass --checkpoint or set AIVA_CHECKPOINT")
    ckpt = _load_ckpt(ckpt_path)
    if eff.get("template"):
        template = PromptTemplate.load(eff["template"])
    else:
        template = default_template(default_labels(ckpt.config.n_classes))
    backend = LlmBackend.from_env()
    try:
        service = AgentService(ckpt, template, backend,
                               checkpoint_id=checkpoint_id(ckpt_path),
                               max_turns=int(eff["max_turns"]))
    except ValueError as e:
        raise CliRuntimeError(f"startup error: {e}")
    host, port = eff["host"], int(eff["port"])
    app = build_app(service, sessions_path=eff.get("sessions_path"))
    log.info("serving on %s:%s (backend=%s)", host, port, backend.mode)
    uvicorn.run(app, host=host, port=port, log_level=eff["log_level"])
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "infer": cmd_infer,
    "import-mvsa": cmd_import_mvsa,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise CliRuntimeError(f"config file not found: {args.config}")
            except json.JSONDecodeError as e:
                raise CliUsageError(f"config file is not valid JSON: {e}")
        if args.command == "serve":
            # env binds sit between the config file and built-in defaults
            bind = os.environ.get("AIVA_BIND_ADDR")
            if bind:
                host, _, port = bind.partition(":")
                file_cfg.setdefault("host", host or _DEFAULTS["host"])
                if port:
                    file_cfg.setdefault("port", int(port))
        eff = _resolve(args, file_cfg)
        logging.basicConfig(level=eff["log_level"].upper(), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        _echo(args.command, eff)
        return _COMMANDS[args.command](eff)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CliRuntimeError, DatasetError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
