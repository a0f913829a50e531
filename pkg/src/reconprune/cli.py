"""Command-line entry point wiring datagen, training, pruning, evaluation,
FLOPs accounting, and visualization.

Subcommands: datagen, train, prune, eval, bench, viz. Exit codes: 0 ok,
1 runtime error, 2 usage/config error. Structured outputs are JSON (or the
package's binary dataset/checkpoint formats with a JSON provenance sidecar);
images are emitted as binary PPM (P6). Options may also come from a
``key=value`` config file via --config; explicit flags win on conflict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SceneConfig, generate_dataset, read_dataset, write_dataset
from .encoder import EncoderConfig, FrozenEncoder
from .eval import evaluate
from .flops import ModelSpec, pruning_report
from .masking import binarize, split
from .prune_infer import dump_pruned, prune, retained_count, top_k_indices
from .pruner import saliency
from .recon_decoder import reconstruct_pair
from .tensor import Tensor
from .training import TrainConfig, init_state, load_checkpoint, save_checkpoint, train

# ------------------------------------------------------------------ plumbing


def _load_config_file(path) -> dict:
    """Parse a key=value config file (one pair per line, '#' comments)."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(args, option_spec: dict) -> dict:
    """Effective options: explicit flag > config-file entry > default."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = set(file_cfg) - set(option_spec)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, (cast, default) in option_spec.items():
        flag_val = getattr(args, key)
        if flag_val is not None:
            out[key] = flag_val
        elif key in file_cfg:
            out[key] = cast(file_cfg[key])
        else:
            out[key] = default
    return out


def _provenance(seed, config: dict) -> dict:
    # the output path is not semantic config: identical runs writing to
    # different paths must still produce byte-identical reports
    config = {k: v for k, v in config.items() if k != "out"}
    canon = json.dumps(config, sort_keys=True)
    return {
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest()[:16],
    }


def _emit_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def write_ppm(path, image: np.ndarray) -> None:
    """Binary PPM (P6), maxval 255. Accepts H x W x 3 or H x W in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"write_ppm: expected HxWx3 image, got {image.shape}")
    u8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = u8.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(u8.tobytes())


def read_ppm(path) -> np.ndarray:
    """Inverse of write_ppm; returns H x W x 3 float in [0, 1]."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError(f"{path}: not a maxval-255 P6 PPM")
    w, h = (int(t) for t in parts[1].split())
    u8 = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return u8.reshape(h, w, 3).astype(np.float64) / 255.0


def _load_test_inputs(checkpoint: str, data: str):
    pruner, enc_cfg, decoder, meta = load_checkpoint(checkpoint)
    encoder = FrozenEncoder(enc_cfg)
    pairs = read_dataset(data)
    if pairs and pairs[0].image.shape[0] != enc_cfg.image_size:
        raise ValueError(
            f"dataset image size {pairs[0].image.shape[0]} does not match "
            f"checkpoint image size {enc_cfg.image_size}")
    return pruner, encoder, decoder, meta, pairs


def _scores_for(pruner, encoder, image: np.ndarray):
    seq = encoder.encode(image)
    x = Tensor((seq.tokens.data + seq.pos_embed.data)[None])
    return seq, saliency(x, pruner).data.reshape(-1)


# --------------------------------------------------------------- subcommands

DATAGEN_OPTS = {
    "count": (int, 2048),
    "test_count": (int, 256),
    "size": (int, 96),
    "seed": (int, 0),
    "out": (str, "data"),
}


def cmd_datagen(args) -> int:
    opt = _resolve(args, DATAGEN_OPTS)
    out_dir = Path(opt["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = SceneConfig(size=opt["size"], seed=opt["seed"])
    train_pairs = generate_dataset(scene, opt["count"])
    test_pairs = generate_dataset(scene, opt["test_count"], start_index=opt["count"])
    write_dataset(train_pairs, out_dir / "train.nfgs")
    write_dataset(test_pairs, out_dir / "test.nfgs")
    _emit_json({
        "train": str(out_dir / "train.nfgs"),
        "test": str(out_dir / "test.nfgs"),
        "provenance": _provenance(opt["seed"], opt),
    }, out_dir / "provenance.json")
    print(f"wrote {opt['count']} train + {opt['test_count']} test scenes to {out_dir}")
    return 0


TRAIN_OPTS = {
    "data": (str, None),
    "epochs": (int, 10),
    "lr": (float, 3e-4),
    "batch_size": (int, 16),
    "alpha": (float, 0.5),
    "lam": (float, 0.2),
    "mode": (str, "full"),
    "seed": (int, 0),
    "patch_size": (int, 8),
    "hidden_dim": (int, 64),
    "out": (str, "pruner.rpck"),
}


def cmd_train(args) -> int:
    opt = _resolve(args, TRAIN_OPTS)
    if not opt["data"]:
        raise ValueError("train: --data is required")
    pairs = read_dataset(opt["data"])
    enc_cfg = EncoderConfig(
        image_size=pairs[0].image.shape[0],
        patch_size=opt["patch_size"],
        hidden_dim=opt["hidden_dim"],
    )
    cfg = TrainConfig(
        lr=opt["lr"], epochs=opt["epochs"], batch_size=opt["batch_size"],
        alpha=opt["alpha"], lam=opt["lam"], seed=opt["seed"], mode=opt["mode"],
    )
    log_path = Path(str(opt["out"]) + ".log.jsonl")
    with open(log_path, "w") as log_file:
        state = train(cfg, pairs, enc_cfg, log_file=log_file)
    save_checkpoint(state, opt["out"])
    _emit_json({
        "checkpoint": str(opt["out"]),
        "log": str(log_path),
        "steps": state.step,
        "provenance": _provenance(opt["seed"], opt),
    }, str(opt["out"]) + ".json")
    print(f"trained {state.step} steps; checkpoint at {opt['out']}")
    return 0


PRUNE_OPTS = {
    "checkpoint": (str, None),
    "data": (str, None),
    "index": (int, 0),
    "n_tokens": (int, None),
    "ratio": (float, 0.75),
    "out": (str, None),
}


def cmd_prune(args) -> int:
    opt = _resolve(args, PRUNE_OPTS)
    p = opt["ratio"]
    if opt["checkpoint"] is None:
        # arithmetic mode: just report the retained count for a token budget
        if opt["n_tokens"] is None:
            raise ValueError("prune: need --checkpoint or --n-tokens")
        n = opt["n_tokens"]
        record = {"n": n, "m": retained_count(n, p), "p": p}
    else:
        if opt["data"] is None:
            raise ValueError("prune: --checkpoint mode needs --data")
        pruner, encoder, _, _, pairs = _load_test_inputs(opt["checkpoint"], opt["data"])
        if not 0 <= opt["index"] < len(pairs):
            raise ValueError(f"prune: index {opt['index']} outside dataset of {len(pairs)}")
        seq, s = _scores_for(pruner, encoder, pairs[opt["index"]].image)
        pruned = prune(seq.tokens.data, seq.pos_embed.data, s, p)
        record = dump_pruned(pruned, s, encoder.cfg.n_tokens)
    record["provenance"] = _provenance(0, opt)
    _emit_json(record, opt["out"])
    return 0


EVAL_OPTS = {
    "checkpoint": (str, None),
    "data": (str, None),
    "ratios": (str, "0.25,0.5,0.75"),
    "out": (str, None),
}


def cmd_eval(args) -> int:
    opt = _resolve(args, EVAL_OPTS)
    if not opt["checkpoint"] or not opt["data"]:
        raise ValueError("eval: --checkpoint and --data are required")
    ratios = tuple(float(t) for t in opt["ratios"].split(",") if t)
    if not ratios:
        raise ValueError("eval: --ratios must name at least one ratio")
    pruner, encoder, decoder, meta, pairs = _load_test_inputs(opt["checkpoint"], opt["data"])
    report = evaluate(pruner, encoder, pairs, ratios=ratios, decoder=decoder)
    report["checkpoint_step"] = meta.get("meta/step")
    report["provenance"] = _provenance(int(meta.get("config/seed", 0)), opt)
    _emit_json(report, opt["out"])
    return 0


BENCH_OPTS = {
    "layers": (int, 28),
    "hidden": (int, 3584),
    "intermediate": (int, 18944),
    "heads": (int, 28),
    "visual_tokens": (int, 3249),
    "text_tokens": (int, 0),
    "ratio": (float, 0.75),
    "retained": (int, None),
    "out": (str, None),
}


def cmd_bench(args) -> int:
    opt = _resolve(args, BENCH_OPTS)
    spec = ModelSpec(
        n_layers=opt["layers"], hidden=opt["hidden"],
        intermediate=opt["intermediate"], n_heads=opt["heads"],
        visual_tokens=opt["visual_tokens"], text_tokens=opt["text_tokens"],
    )
    retained = opt["retained"]
    if retained is None:
        retained = retained_count(opt["visual_tokens"], opt["ratio"])
    report = pruning_report(spec, retained)
    record = {
        "spec": {
            "n_layers": spec.n_layers, "hidden": spec.hidden,
            "intermediate": spec.intermediate, "n_heads": spec.n_heads,
            "visual_tokens": spec.visual_tokens, "text_tokens": spec.text_tokens,
            "retained": retained,
        },
        **report,
        "provenance": _provenance(0, opt),
    }
    _emit_json(record, opt["out"])
    return 0


VIZ_OPTS = {
    "checkpoint": (str, None),
    "data": (str, None),
    "index": (int, 0),
    "ratio": (float, 0.5),
    "out": (str, "viz"),
}


def cmd_viz(args) -> int:
    opt = _resolve(args, VIZ_OPTS)
    if not opt["checkpoint"] or not opt["data"]:
        raise ValueError("viz: --checkpoint and --data are required")
    pruner, encoder, decoder, meta, pairs = _load_test_inputs(opt["checkpoint"], opt["data"])
    if decoder is None:
        raise ValueError("viz: checkpoint has no decoder sidecar (*.decoder)")
    if not 0 <= opt["index"] < len(pairs):
        raise ValueError(f"viz: index {opt['index']} outside dataset of {len(pairs)}")
    pair = pairs[opt["index"]]
    seq, s = _scores_for(pruner, encoder, pair.image)
    cfg = encoder.cfg
    grid, patch = cfg.grid, cfg.patch_size

    # saliency heat over the patch grid, kept tokens (top-k at --ratio) in green
    heat = s.reshape(grid, grid)
    span = heat.max() - heat.min()
    heat = (heat - heat.min()) / (span if span > 0 else 1.0)
    kept = top_k_indices(s, retained_count(cfg.n_tokens, opt["ratio"]))
    kept_grid = np.zeros(cfg.n_tokens)
    kept_grid[kept] = 1.0
    up = np.kron(heat, np.ones((patch, patch)))
    kept_up = np.kron(kept_grid.reshape(grid, grid), np.ones((patch, patch)))
    sal_img = np.stack([up, np.maximum(up, 0.6 * kept_up), up], axis=-1)

    mask = binarize(Tensor(s.reshape(1, cfg.n_tokens, 1)))
    fore_t, back_t = split(Tensor(seq.tokens.data[None]), mask)
    pred_f, pred_b = reconstruct_pair(fore_t, back_t, Tensor(seq.pos_embed.data[None]), decoder)

    out_dir = Path(opt["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"viz{opt['index']:04d}"
    write_ppm(out_dir / f"{stem}_input.ppm", pair.image)
    write_ppm(out_dir / f"{stem}_saliency.ppm", sal_img)
    write_ppm(out_dir / f"{stem}_recon_fore.ppm", pred_f.data[0])
    write_ppm(out_dir / f"{stem}_recon_back.ppm", pred_b.data[0])
    _emit_json({
        "files": [f"{stem}_{k}.ppm" for k in ("input", "saliency", "recon_fore", "recon_back")],
        "provenance": _provenance(int(meta.get("config/seed", 0)), opt),
    }, out_dir / f"{stem}.json")
    print(f"wrote 4 images to {out_dir}/{stem}_*.ppm")
    return 0


# -------------------------------------------------------------------- parser


def _add_options(sub, spec: dict) -> None:
    sub.add_argument("--config", help="key=value config file; flags win")
    for key, (cast, default) in spec.items():
        flag = "--" + key.replace("_", "-")
        if key == "lam":
            flag = "--lambda"
        sub.add_argument(flag, dest=key, type=cast, default=None,
                         help=f"default: {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reconprune",
        description="Reconstruction-guided visual token pruning toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, func, spec, doc in (
        ("datagen", cmd_datagen, DATAGEN_OPTS, "generate synthetic train/test datasets"),
        ("train", cmd_train, TRAIN_OPTS, "train the pruner on a dataset"),
        ("prune", cmd_prune, PRUNE_OPTS, "top-k prune (arithmetic or checkpoint mode)"),
        ("eval", cmd_eval, EVAL_OPTS, "retention/saliency metrics on a test set"),
        ("bench", cmd_bench, BENCH_OPTS, "prefill FLOPs before/after pruning"),
        ("viz", cmd_viz, VIZ_OPTS, "emit input/saliency/reconstruction PPMs"),
    ):
        sub = subs.add_parser(name, help=doc)
        _add_options(sub, spec)
        sub.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 — one-line diagnostic, exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
