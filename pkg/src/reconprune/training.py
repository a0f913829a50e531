"""End-to-end training of the pruner + reconstruction decoder with the
adversarial foreground/background reconstruction objective.

Per step: encode -> pruner layer -> scores -> hard mask (straight-through)
-> fore/back token split -> shared-decoder reconstruction of both streams ->
masked-image stream losses -> alpha-weighted total -> backward -> AdamW.
The encoder stays frozen throughout; the only gradient path into the pruner
is through the straight-through mask.

Modes: "full" (both streams), "fore_only" (alpha forced to 1, the shortcut
ablation), "mask_prediction" (scores trained directly with BCE against
token-level foreground truth; the decoder is unused).

Checkpoint format (little-endian): magic "RPCK" | version u32 | entry count
u32 | per entry: name len u16, name bytes, rank u8, dims u32 x rank, f32
payload. Training log: one JSON object per line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .datagen import ImageMaskPair
from .encoder import EncoderConfig, FrozenEncoder
from .losses import LossConfig, masked_targets, stream_loss, total_loss
from .masking import binarize, split
from .pruner import PrunerConfig, PrunerParams, init_pruner, pruner_forward, score
from .recon_decoder import DecoderConfig, DecoderParams, init_decoder, reconstruct_pair
from .tensor import Tensor

CKPT_MAGIC = b"RPCK"
CKPT_VERSION = 1
MODES = ("full", "fore_only", "mask_prediction")


class NonFiniteLoss(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4          # desk-scale default; the reference setting 2e-5 stays selectable
    epochs: int = 10
    batch_size: int = 16
    alpha: float = 0.5
    lam: float = 0.2
    seed: int = 0
    mode: str = "full"
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    theta_fg: float = 0.25    # mask_prediction target threshold

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def effective_alpha(self) -> float:
        return 1.0 if self.mode == "fore_only" else self.alpha


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


class AdamW:
    """Decoupled weight decay, bias-corrected moments, deterministic."""

    def __init__(self, named_params, cfg: TrainConfig):
        self.named_params = list(named_params)
        self.cfg = cfg
        self.m = {name: np.zeros_like(t.data) for name, t in self.named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in self.named_params}
        self.t = 0

    def step(self, lr_t: float) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            p.data -= np.float32(lr_t) * (update + cfg.weight_decay * p.data)


@dataclass
class TrainState:
    encoder: FrozenEncoder
    pruner: PrunerParams
    decoder: DecoderParams
    optimizer: AdamW
    cfg: TrainConfig
    loss_cfg: LossConfig
    step: int = 0


def init_state(cfg: TrainConfig, enc_cfg: EncoderConfig | None = None) -> TrainState:
    enc_cfg = enc_cfg or EncoderConfig()
    encoder = FrozenEncoder(enc_cfg)
    pruner = init_pruner(PrunerConfig(hidden_dim=enc_cfg.hidden_dim, seed=cfg.seed))
    decoder = init_decoder(DecoderConfig(
        hidden_dim=enc_cfg.hidden_dim,
        patch_size=enc_cfg.patch_size,
        grid=enc_cfg.grid,
        seed=cfg.seed + 1,
    ))
    named = list(pruner.named()) + list(decoder.named())
    return TrainState(
        encoder=encoder,
        pruner=pruner,
        decoder=decoder,
        optimizer=AdamW(named, cfg),
        cfg=cfg,
        loss_cfg=LossConfig(lam=cfg.lam, alpha=cfg.effective_alpha),
    )


def all_params(state: TrainState):
    return [t for _, t in state.optimizer.named_params]


def _forward_losses(state: TrainState, images: np.ndarray, masks: np.ndarray):
    """Shared forward for training and loss probing. Returns
    (loss, l_fore, l_back, frac_pos)."""
    enc = state.encoder
    tokens = Tensor(enc.encode_batch(images))
    b, n, d = tokens.shape
    pos = Tensor(np.broadcast_to(enc._pos, (b, n, d)).copy())

    q_star, v_star = pruner_forward(T.add(tokens, pos), state.pruner)
    s = score(q_star, v_star, state.pruner)
    mask = binarize(s)

    if state.cfg.mode == "mask_prediction":
        fg = np.stack([enc.token_foreground_truth(m, state.cfg.theta_fg) for m in masks])
        bce = T.bce_with_logits(s, fg.astype(np.float64).reshape(b, n, 1))
        return bce, bce, bce, mask.fraction_positive

    v_fore, v_back = split(tokens, mask)
    pred_fore, pred_back = reconstruct_pair(v_fore, v_back, pos, state.decoder)
    gt_fore, gt_back = masked_targets(images, masks)
    l_fore = stream_loss(gt_fore, pred_fore, state.loss_cfg)
    l_back = stream_loss(gt_back, pred_back, state.loss_cfg)
    return total_loss(l_fore, l_back, state.loss_cfg), l_fore, l_back, mask.fraction_positive


def train_step(state: TrainState, images: np.ndarray, masks: np.ndarray,
               lr_t: float) -> dict:
    loss, l_fore, l_back, frac_pos = _forward_losses(state, images, masks)
    if not np.isfinite(loss.item()):
        raise NonFiniteLoss(
            f"non-finite loss at step {state.step}: "
            f"l_fore={l_fore.item()}, l_back={l_back.item()}"
        )
    T.zero_grads(all_params(state))
    T.backward(loss)
    state.optimizer.step(lr_t)
    state.step += 1
    return {
        "l_all": loss.item(),
        "l_fore": l_fore.item(),
        "l_back": l_back.item(),
        "frac_pos": frac_pos,
        "lr": lr_t,
    }


def train(cfg: TrainConfig, pairs, enc_cfg: EncoderConfig | None = None,
          log_file=None, state: TrainState | None = None) -> TrainState:
    """Run the full schedule over the dataset; logs one JSON line per epoch
    (and returns the final state)."""
    if not pairs:
        raise ValueError("empty training dataset")
    state = state or init_state(cfg, enc_cfg)
    images = np.stack([p.image for p in pairs])
    masks = np.stack([p.mask for p in pairs])
    n = len(pairs)
    bs = cfg.batch_size
    steps_per_epoch = (n + bs - 1) // bs
    total_steps = cfg.epochs * steps_per_epoch
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD1CE]))

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        ep_metrics = []
        for b0 in range(0, n, bs):
            idx = order[b0:b0 + bs]
            lr_t = cosine_lr(state.step, total_steps, cfg.lr)
            metrics = train_step(state, images[idx], masks[idx], lr_t)
            ep_metrics.append(metrics)
        row = {
            "epoch": epoch,
            "step": state.step,
            "l_all": float(np.mean([m["l_all"] for m in ep_metrics])),
            "l_fore": float(np.mean([m["l_fore"] for m in ep_metrics])),
            "l_back": float(np.mean([m["l_back"] for m in ep_metrics])),
            "frac_pos": float(np.mean([m["frac_pos"] for m in ep_metrics])),
            "lr": ep_metrics[-1]["lr"],
        }
        if log_file is not None:
            log_file.write(json.dumps(row) + "\n")
            log_file.flush()
    return state


# ------------------------------------------------------------- checkpointing


def write_tensor_table(path, entries: dict) -> None:
    """entries: name -> numpy array (written as f32)."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(entries)))
        for name, arr in entries.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def read_tensor_table(path) -> dict:
    from .datagen import BadMagic, TruncatedFile  # shared error types

    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CKPT_MAGIC:
        raise BadMagic(f"bad checkpoint magic in {path}")
    version, count = struct.unpack("<II", blob[4:12])
    if version != CKPT_VERSION:
        raise BadMagic(f"unsupported checkpoint version {version}")
    entries = {}
    off = 12
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode()
            off += nlen
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
            off += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
            entries[name] = arr.copy()
    except (struct.error, ValueError) as exc:
        raise TruncatedFile(f"{path}: truncated checkpoint") from exc
    if len(entries) != count:
        raise TruncatedFile(f"{path}: expected {count} entries, got {len(entries)}")
    return entries


def save_checkpoint(state: TrainState, path: str) -> None:
    """Pruner (+ optimizer + config echo) in `path`; decoder parameters in a
    sibling `path + '.decoder'` so the shipped pruner file stands alone."""
    pruner_entries = {name: t.data for name, t in state.pruner.named()}
    decoder_entries = {name: t.data for name, t in state.decoder.named()}
    for name, _ in state.optimizer.named_params:
        target = pruner_entries if name.startswith("pruner/") else decoder_entries
        target["adam_m/" + name] = state.optimizer.m[name]
        target["adam_v/" + name] = state.optimizer.v[name]
    cfg = state.cfg
    pruner_entries.update({
        "meta/step": np.array([state.step], dtype=np.float32),
        "meta/mode": np.array([MODES.index(cfg.mode)], dtype=np.float32),
        "config/lr": np.array([cfg.lr], dtype=np.float32),
        "config/epochs": np.array([cfg.epochs], dtype=np.float32),
        "config/batch_size": np.array([cfg.batch_size], dtype=np.float32),
        "config/alpha": np.array([cfg.alpha], dtype=np.float32),
        "config/lam": np.array([cfg.lam], dtype=np.float32),
        "config/seed": np.array([cfg.seed], dtype=np.float32),
        "config/hidden_dim": np.array([state.encoder.cfg.hidden_dim], dtype=np.float32),
        "config/image_size": np.array([state.encoder.cfg.image_size], dtype=np.float32),
        "config/patch_size": np.array([state.encoder.cfg.patch_size], dtype=np.float32),
        "config/encoder_seed": np.array([state.encoder.cfg.seed], dtype=np.float32),
    })
    write_tensor_table(path, pruner_entries)
    write_tensor_table(str(path) + ".decoder", decoder_entries)


def load_checkpoint(path: str):
    """Returns (pruner_params, encoder_cfg, decoder_params_or_None, meta)."""
    import os

    entries = read_tensor_table(path)
    enc_cfg = EncoderConfig(
        image_size=int(entries["config/image_size"][0]),
        patch_size=int(entries["config/patch_size"][0]),
        hidden_dim=int(entries["config/hidden_dim"][0]),
        seed=int(entries["config/encoder_seed"][0]),
    )
    pruner = init_pruner(PrunerConfig(hidden_dim=enc_cfg.hidden_dim))
    for name, t in pruner.named():
        t.data = entries[name].copy()
    decoder = None
    dec_path = str(path) + ".decoder"
    if os.path.exists(dec_path):
        dec_entries = read_tensor_table(dec_path)
        decoder = init_decoder(DecoderConfig(
            hidden_dim=enc_cfg.hidden_dim,
            patch_size=enc_cfg.patch_size,
            grid=enc_cfg.grid,
        ))
        for name, t in decoder.named():
            t.data = dec_entries[name].copy()
    meta = {k: float(v[0]) for k, v in entries.items()
            if k.startswith(("meta/", "config/"))}
    return pruner, enc_cfg, decoder, meta
