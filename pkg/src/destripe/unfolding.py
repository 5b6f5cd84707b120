"""Deep-unfolded destriping model and its training loop.

The model is a stack of T independent bidirectional GRU layers. Inference
iterates: starting from the noisy image as iterate 0, layer k reads the
columns of iterate k-1 as a sequence of length-n vectors, produces a fresh
estimate of the *total* stripe noise, and subtracts that estimate from the
original input (never from the previous iterate):

    iterate_k = iterate_0 - layer_k(iterate_{k-1})

Training corrupts clean patches on the fly, measures MSE between the final
iterate and the clean patch, and backpropagates through every layer and every
column step of both scan directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import metrics
from .imaging import check_image, extract_patches
from .neural import (
    BiGruLayerParams,
    DivergenceError,
    GruParams,
    adam_step,
    bigru_backward,
    bigru_forward,
    gradient_check,
    init_adam,
    init_bigru_layer,
    mse_loss,
)
from .noise import FIXED, MODES, SAMPLED, check_mode, field_seed, sample_stripe_field

PER_PIXEL = "per-pixel"
PER_COLUMN = "per-column"
OUTPUT_MODES = (PER_PIXEL, PER_COLUMN)

CHECKPOINT_MAGIC = "destripe-checkpoint"
CHECKPOINT_VERSION = 1

# Stream tags hashed with the run seed; keeps init/shuffle/noise draws independent.
_STREAM_INIT = 0
_STREAM_SHUFFLE = 1
_STREAM_TRAIN_NOISE = 2
_STREAM_VAL_NOISE = 3


class ConfigError(ValueError):
    """Bad configuration key or value."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


# ---------------------------------------------------------------------------
# Model


@dataclass
class UnfoldedModel:
    """T BiGRU layers (no weight sharing) plus the geometry they were built for."""

    layers: list[BiGruLayerParams]
    column_length: int
    hidden: int
    output_mode: str

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass
class IterateTrace:
    """All iterates of one forward pass plus the implied noise estimates.

    ``s_hats[k-1]`` is computed as ``x_hats[0] - x_hats[k]``, so that identity
    holds exactly in floating point.
    """

    x_hats: list[np.ndarray]
    s_hats: list[np.ndarray]


def init_unfolded_model(
    num_layers: int,
    column_length: int,
    hidden: int,
    output_mode: str = PER_PIXEL,
    seed: int = 0,
    dtype=np.float32,
) -> UnfoldedModel:
    if num_layers < 1:
        raise ValueError(f"need at least one layer, got {num_layers}")
    if output_mode not in OUTPUT_MODES:
        raise ValueError(f"output mode must be one of {OUTPUT_MODES}, got {output_mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_INIT]))
    out_size = column_length if output_mode == PER_PIXEL else 1
    layers = [
        init_bigru_layer(column_length, hidden, out_size, rng, dtype)
        for _ in range(num_layers)
    ]
    return UnfoldedModel(
        layers=layers, column_length=column_length, hidden=hidden, output_mode=output_mode
    )


def named_parameters(model: UnfoldedModel) -> dict[str, np.ndarray]:
    """All parameter tensors keyed 'layerNN.<branch>.<tensor>', in a fixed order."""
    out: dict[str, np.ndarray] = {}
    for k, layer in enumerate(model.layers):
        out.update(layer.named(f"layer{k:02d}."))
    return out


def _layer_noise(model: UnfoldedModel, layer_out: np.ndarray, rows: int) -> np.ndarray:
    """Layer output (m, B, out) -> full noise estimate (B, rows, m)."""
    if model.output_mode == PER_PIXEL:
        return layer_out.transpose(1, 2, 0)
    # one scalar per column, broadcast down the rows
    return np.broadcast_to(layer_out[:, :, 0].T[:, np.newaxis, :], (layer_out.shape[1], rows, layer_out.shape[0]))


def _forward_batch(
    model: UnfoldedModel, noisy: np.ndarray, want_caches: bool = False
):
    """Run the unfold on a (B, n, m) batch. Returns iterate list [+ caches, raw outputs]."""
    batch, rows, _cols = noisy.shape
    if rows != model.column_length:
        raise ValueError(
            f"image columns have {rows} rows, model expects {model.column_length}"
        )
    x_hats = [noisy]
    caches = []
    for layer in model.layers:
        seq = x_hats[-1].transpose(2, 0, 1)  # (m, B, n)
        if want_caches:
            out, cache = bigru_forward(layer, seq, return_cache=True)
            caches.append(cache)
        else:
            out = bigru_forward(layer, seq)
        x_hats.append(x_hats[0] - _layer_noise(model, out, rows))
    return (x_hats, caches) if want_caches else x_hats


def _backward_batch(
    model: UnfoldedModel,
    caches: list,
    grad_x_hats: list[np.ndarray | None],
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Backpropagate iterate gradients through all layers and column steps.

    ``grad_x_hats[k]`` is the loss gradient that attaches directly to iterate
    k (None for unused iterates). Returns (parameter gradients, gradient
    w.r.t. the network input), accounting for the input's reuse as the
    minuend of every iteration.
    """
    depth = model.num_layers
    param_grads: dict[str, np.ndarray] = {}
    if grad_x_hats[depth] is None:
        raise ValueError("final iterate gradient is required")
    current = grad_x_hats[depth]
    grad_input = np.zeros_like(current)
    for k in range(depth, 0, -1):
        grad_input += current  # minuend path: iterate_k = input - estimate_k
        g_noise = -current
        if model.output_mode == PER_PIXEL:
            grad_out = g_noise.transpose(2, 0, 1)
        else:
            grad_out = g_noise.sum(axis=1).T[:, :, np.newaxis]
        grad_seq, layer_grads = bigru_backward(model.layers[k - 1], caches[k - 1], grad_out)
        gin = grad_seq.transpose(1, 2, 0)
        for name, arr in layer_grads.named(f"layer{k - 1:02d}."):
            param_grads[name] = arr
        if k == 1:
            grad_input += gin
        else:
            extra = grad_x_hats[k - 1]
            current = gin if extra is None else gin + extra
    return param_grads, grad_input


def forward(model: UnfoldedModel, noisy: np.ndarray) -> IterateTrace:
    """Full iterate trace for a single (n, m) image; iterates are not clamped."""
    arr = check_image(noisy)
    x_hats = _forward_batch(model, arr[np.newaxis].astype(arr.dtype, copy=False))
    x_list = [x[0] for x in x_hats]
    s_list = [x_list[0] - x_list[k] for k in range(1, len(x_list))]
    return IterateTrace(x_hats=x_list, s_hats=s_list)


def denoise(model: UnfoldedModel, noisy: np.ndarray) -> np.ndarray:
    """Final iterate clamped back to pixel range."""
    trace = forward(model, noisy)
    return np.clip(trace.x_hats[-1], 0.0, 1.0)


def check_unfolded_model(
    model: UnfoldedModel,
    clean: np.ndarray,
    noisy: np.ndarray,
    tolerance: float = 1e-4,
    step: float = 1e-5,
):
    """Finite-difference check of the full training gradient on one image pair.

    Build the model with float64 parameters for this; float32 cannot resolve
    the default step.
    """
    clean_b = clean[np.newaxis]
    noisy_b = noisy[np.newaxis]
    params = named_parameters(model)

    def loss_fn() -> float:
        x_hats = _forward_batch(model, noisy_b)
        loss, _ = mse_loss(x_hats[-1], clean_b)
        return loss

    x_hats, caches = _forward_batch(model, noisy_b, want_caches=True)
    _, grad_final = mse_loss(x_hats[-1], clean_b)
    grad_list: list[np.ndarray | None] = [None] * model.num_layers + [grad_final]
    analytic, _ = _backward_batch(model, caches, grad_list)
    return gradient_check(loss_fn, params, analytic, tolerance, step)


# ---------------------------------------------------------------------------
# Training configuration


@dataclass
class TrainConfig:
    """Flat training configuration; every field doubles as a config-file key."""

    layers: int = 15
    hidden: int = 32
    patch_size: int = 64
    patch_stride: int = 64
    epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 1e-3
    beta_min: float = 0.0
    beta_max: float = 0.25
    noise_mode: str = SAMPLED
    output_mode: str = PER_PIXEL
    eval_beta: float = 0.15
    eval_mode: str = FIXED
    aux_loss_weight: float = 0.0
    split_fraction: float = 0.85
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.beta_min <= self.beta_max:
            raise ConfigError(
                f"need 0 <= beta_min <= beta_max, got [{self.beta_min}, {self.beta_max}]"
            )
        if self.patch_size < 8:
            raise ConfigError("patch_size must be >= 8 (SSIM validation window)")
        if self.patch_stride < 1:
            raise ConfigError(f"patch_stride must be >= 1, got {self.patch_stride}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.eval_beta < 0:
            raise ConfigError(f"eval_beta must be >= 0, got {self.eval_beta}")
        if self.aux_loss_weight < 0:
            raise ConfigError(f"aux_loss_weight must be >= 0, got {self.aux_loss_weight}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.noise_mode not in MODES:
            raise ConfigError(f"noise_mode must be one of {MODES}, got {self.noise_mode!r}")
        if self.eval_mode not in MODES:
            raise ConfigError(f"eval_mode must be one of {MODES}, got {self.eval_mode!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(
                f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}"
            )
        return self

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "TrainConfig":
        """Build from string key=value pairs; unknown keys are rejected by name."""
        types = {f.name: f.type for f in fields(cls)}
        casts = {"int": int, "float": float, "str": str}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kwargs[key] = casts[types[key]](raw)
            except ValueError:
                raise ConfigError(f"bad value for config key {key!r}: {raw!r}") from None
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_mapping(parse_kv_text(Path(path).read_text()))

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat 'key=value' lines; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    model: UnfoldedModel
    log: list[dict]
    diverged: bool
    noisy_psnr: float
    noisy_ssim: float


LOG_HEADER = ("epoch", "train_loss", "val_psnr", "val_ssim")


def log_csv(result: TrainResult) -> str:
    lines = [",".join(LOG_HEADER)]
    for row in result.log:
        lines.append(
            f"{row['epoch']},{row['train_loss']:.8e},{row['val_psnr']:.4f},{row['val_ssim']:.6f}"
        )
    return "\n".join(lines) + "\n"


def _stream_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


def _train_sigma_offsets(cols: int, cfg: TrainConfig, noise_seed: int, index: int) -> np.ndarray:
    """Stripe offsets for one training patch.

    Sampled mode draws sigma ~ U(beta_min, beta_max); with the default
    beta_min = 0 this is bit-identical to the evaluation-path sampler.
    """
    rng = np.random.default_rng(field_seed(noise_seed, index))
    if cfg.noise_mode == SAMPLED:
        sigma = float(rng.uniform(cfg.beta_min, cfg.beta_max))
    else:
        sigma = cfg.beta_max
    return rng.normal(0.0, sigma, size=cols) if sigma > 0 else np.zeros(cols)


def _collect_patches(images: list[np.ndarray], cfg: TrainConfig) -> np.ndarray:
    patches = []
    for img in images:
        patches.extend(extract_patches(img, cfg.patch_size, cfg.patch_size, cfg.patch_stride))
    if not patches:
        return np.zeros((0, cfg.patch_size, cfg.patch_size), dtype=np.float32)
    return np.stack(patches).astype(np.float32)


def _validate(model: UnfoldedModel, clean: np.ndarray, noisy: np.ndarray) -> tuple[float, float]:
    if clean.shape[0] == 0:
        return math.nan, math.nan
    denoised = _forward_batch(model, noisy)[-1]
    denoised = np.clip(denoised, 0.0, 1.0)
    psnrs = [metrics.psnr(c, d) for c, d in zip(clean, denoised)]
    ssims = [metrics.ssim(c, d) for c, d in zip(clean, denoised)]
    return float(np.mean(psnrs)), float(np.mean(ssims))


def train(
    cfg: TrainConfig,
    train_images: list[np.ndarray],
    val_images: list[np.ndarray],
    progress=None,
) -> TrainResult:
    """Train an unfolded model on clean images, corrupting patches on the fly.

    Deterministic for a fixed config and thread count. On a non-finite loss or
    gradient the run stops and the parameters roll back to the last completed
    epoch. ``progress``, if given, is called with each epoch's log row.
    """
    cfg.validate()
    train_patches = _collect_patches(train_images, cfg)
    if train_patches.shape[0] == 0:
        raise ValueError("training set produced no patches")
    val_patches = _collect_patches(val_images, cfg)

    model = init_unfolded_model(
        cfg.layers, cfg.patch_size, cfg.hidden, cfg.output_mode, seed=cfg.seed
    )
    params = named_parameters(model)
    adam = init_adam(params, learning_rate=cfg.learning_rate)

    # Fixed validation corruption so epoch curves are comparable.
    val_seed = _stream_seed(cfg.seed, _STREAM_VAL_NOISE)
    val_noisy = np.empty_like(val_patches)
    for i, patch in enumerate(val_patches):
        fld = sample_stripe_field(patch.shape[1], cfg.eval_beta, cfg.eval_mode, field_seed(val_seed, i))
        val_noisy[i] = np.clip(patch + fld.offsets[np.newaxis, :].astype(np.float32), 0.0, 1.0)
    if val_patches.shape[0]:
        noisy_psnr = float(np.mean([metrics.psnr(c, y) for c, y in zip(val_patches, val_noisy)]))
        noisy_ssim = float(np.mean([metrics.ssim(c, y) for c, y in zip(val_patches, val_noisy)]))
    else:
        noisy_psnr = noisy_ssim = math.nan

    noise_seed = _stream_seed(cfg.seed, _STREAM_TRAIN_NOISE)
    noise_counter = 0
    depth = cfg.layers
    aux_each = cfg.aux_loss_weight / (depth - 1) if depth > 1 and cfg.aux_loss_weight > 0 else 0.0

    snapshot = {k: v.copy() for k, v in params.items()}
    log: list[dict] = []
    diverged = False

    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _STREAM_SHUFFLE, epoch])
        ).permutation(train_patches.shape[0])
        batch_losses = []
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            clean = train_patches[idx]
            offsets = np.stack(
                [
                    _train_sigma_offsets(clean.shape[2], cfg, noise_seed, noise_counter + j)
                    for j in range(idx.size)
                ]
            ).astype(np.float32)
            noise_counter += idx.size
            noisy = np.clip(clean + offsets[:, np.newaxis, :], 0.0, 1.0)

            x_hats, caches = _forward_batch(model, noisy, want_caches=True)
            loss, grad_final = mse_loss(x_hats[-1], clean)
            grad_list: list[np.ndarray | None] = [None] * (depth + 1)
            grad_list[depth] = grad_final
            if aux_each > 0.0:
                for k in range(1, depth):
                    aux_loss, aux_grad = mse_loss(x_hats[k], clean)
                    loss += aux_each * aux_loss
                    grad_list[k] = aux_each * aux_grad
            if not math.isfinite(loss):
                diverged = True
                break
            try:
                grads, _ = _backward_batch(model, caches, grad_list)
                adam_step(adam, params, grads)
            except DivergenceError:
                diverged = True
                break
            batch_losses.append(loss)
        if diverged:
            for key, value in params.items():
                value[...] = snapshot[key]
            break
        val_psnr, val_ssim = _validate(model, val_patches, val_noisy)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            "val_psnr": val_psnr,
            "val_ssim": val_ssim,
        }
        log.append(row)
        if progress is not None:
            progress(row)
        snapshot = {k: v.copy() for k, v in params.items()}

    return TrainResult(
        model=model, log=log, diverged=diverged, noisy_psnr=noisy_psnr, noisy_ssim=noisy_ssim
    )


# ---------------------------------------------------------------------------
# Checkpoint format: text manifest, then raw little-endian float32 in order


def _expected_shapes(
    num_layers: int, column_length: int, hidden: int, output_mode: str
) -> dict[str, tuple[int, ...]]:
    out_size = column_length if output_mode == PER_PIXEL else 1
    shapes: dict[str, tuple[int, ...]] = {}
    for k in range(num_layers):
        for branch in ("fwd", "bwd"):
            for gate in ("z", "r", "h"):
                shapes[f"layer{k:02d}.{branch}.w_{gate}"] = (hidden, column_length)
                shapes[f"layer{k:02d}.{branch}.u_{gate}"] = (hidden, hidden)
                shapes[f"layer{k:02d}.{branch}.b_{gate}"] = (hidden,)
        shapes[f"layer{k:02d}.proj"] = (out_size, 2 * hidden)
        shapes[f"layer{k:02d}.proj_bias"] = (out_size,)
    return shapes


def save_checkpoint(model: UnfoldedModel, path: str | Path) -> None:
    """Write manifest + float32 blob; round-trips float32 models bit-exactly."""
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"layers {model.num_layers}",
        f"column_length {model.column_length}",
        f"hidden {model.hidden}",
        f"output_mode {model.output_mode}",
    ]
    params = named_parameters(model)
    blobs = []
    for name, arr in params.items():
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {dims}")
        blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    header = ("\n".join(lines) + "\ndata\n").encode("ascii")
    Path(path).write_bytes(header + b"".join(blobs))


def _gru_from_arrays(arrays: dict[str, np.ndarray], prefix: str) -> GruParams:
    return GruParams(
        **{name: arrays[prefix + name] for name in
           ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")}
    )


def load_checkpoint(path: str | Path) -> UnfoldedModel:
    data = Path(path).read_bytes()
    marker = b"\ndata\n"
    split = data.find(marker)
    if split < 0:
        raise CheckpointError(f"{path}: missing data marker")
    header_lines = data[:split].decode("ascii", errors="replace").splitlines()
    blob = data[split + len(marker):]

    magic = header_lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC or magic[1] != str(CHECKPOINT_VERSION):
        raise CheckpointVersionError(
            f"{path}: expected '{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}', got {header_lines[0]!r}"
        )
    meta: dict[str, str] = {}
    manifest: list[tuple[str, tuple[int, ...]]] = []
    for line in header_lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "tensor":
            manifest.append((parts[1], tuple(int(d) for d in parts[2:])))
        else:
            meta[parts[0]] = parts[1]
    try:
        num_layers = int(meta["layers"])
        column_length = int(meta["column_length"])
        hidden = int(meta["hidden"])
        output_mode = meta["output_mode"]
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing header field {exc}") from None
    if output_mode not in OUTPUT_MODES:
        raise CheckpointError(f"{path}: unknown output mode {output_mode!r}")

    expected = _expected_shapes(num_layers, column_length, hidden, output_mode)
    if [name for name, _ in manifest] != list(expected):
        raise CheckpointShapeError(f"{path}: tensor list does not match declared architecture")
    for name, shape in manifest:
        if shape != expected[name]:
            raise CheckpointShapeError(
                f"{path}: tensor {name} has shape {shape}, expected {expected[name]}"
            )

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(blob):
            raise CheckpointTruncatedError(f"{path}: blob truncated inside tensor {name}")
        arrays[name] = (
            np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after last tensor")

    layers = []
    for k in range(num_layers):
        prefix = f"layer{k:02d}."
        layers.append(
            BiGruLayerParams(
                fwd=_gru_from_arrays(arrays, prefix + "fwd."),
                bwd=_gru_from_arrays(arrays, prefix + "bwd."),
                proj=arrays[prefix + "proj"],
                proj_bias=arrays[prefix + "proj_bias"],
            )
        )
    return UnfoldedModel(
        layers=layers, column_length=column_length, hidden=hidden, output_mode=output_mode
    )


# ---------------------------------------------------------------------------
# Layer-count ablation


def ablate(
    layer_counts: list[int],
    cfg: TrainConfig,
    train_images: list[np.ndarray],
    val_images: list[np.ndarray],
    eval_images: list[np.ndarray],
    betas: tuple[float, ...] = (0.05, 0.15, 0.25),
) -> list[dict]:
    """Train one model per layer count and evaluate each at several betas.

    Seeds and data are identical across counts; evaluation corrupts the eval
    images in fixed-sigma mode with fields that depend only on (seed, beta,
    image index), so every row sees the same noise.
    """
    for count in layer_counts:
        if count < 1:
            raise ValueError(f"layer counts must be >= 1, got {count}")
    rows = []
    for count in layer_counts:
        result = train(replace(cfg, layers=count), train_images, val_images)
        row: dict = {"layers": count, "diverged": result.diverged}
        psnrs, ssims = [], []
        for b_index, beta in enumerate(betas):
            noise_seed = _stream_seed(cfg.seed, _STREAM_VAL_NOISE, 1000 + b_index)
            p_vals, s_vals = [], []
            for i, img in enumerate(eval_images):
                fld = sample_stripe_field(img.shape[1], beta, FIXED, field_seed(noise_seed, i))
                noisy = np.clip(img + fld.offsets[np.newaxis, :], 0.0, 1.0).astype(np.float32)
                restored = denoise(result.model, noisy)
                p_vals.append(metrics.psnr(img, restored))
                s_vals.append(metrics.ssim(img, restored))
            row[f"psnr_{beta:g}"] = float(np.mean(p_vals))
            row[f"ssim_{beta:g}"] = float(np.mean(s_vals))
            psnrs.append(row[f"psnr_{beta:g}"])
            ssims.append(row[f"ssim_{beta:g}"])
        row["psnr_avg"] = float(np.mean(psnrs))
        row["ssim_avg"] = float(np.mean(ssims))
        rows.append(row)
    return rows


def ablation_csv(rows: list[dict], betas: tuple[float, ...] = (0.05, 0.15, 0.25)) -> str:
    header = ["layers"]
    for beta in betas:
        header += [f"psnr_beta{beta:g}", f"ssim_beta{beta:g}"]
    header += ["psnr_avg", "ssim_avg"]
    lines = [",".join(header)]
    for row in rows:
        cells = [str(row["layers"])]
        for beta in betas:
            cells += [f"{row[f'psnr_{beta:g}']:.4f}", f"{row[f'ssim_{beta:g}']:.6f}"]
        cells += [f"{row['psnr_avg']:.4f}", f"{row['ssim_avg']:.6f}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
