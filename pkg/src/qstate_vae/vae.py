"""beta-VAE on flattened 4x4 density matrices.

The encoder is ``16 -> 16 -> 8 -> 4 -> 2`` (tanh) followed by one linear
layer producing ``[mu, logvar]`` (both heads read the 2-unit layer). The
decoder mirrors it: ``N -> 2 -> 4 -> 8 -> 16`` (tanh) and a linear 16-unit
output.
"""

import csv
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import nn
from .errors import ConfigError, FormatError, NumericError, ShapeError

log = logging.getLogger(__name__)

INPUT_DIM = 16
ENCODER_HIDDEN = (16, 8, 4, 2)
DECODER_HIDDEN = (2, 4, 8, 16)
MAX_LATENT = 8
CHECKPOINT_FORMAT = "qstate-vae-checkpoint"
CHECKPOINT_VERSION = 1


class LatentEncoding(NamedTuple):
    mu: np.ndarray
    logvar: np.ndarray


class LossParts(NamedTuple):
    total: float
    recon: float
    kl_total: float
    kl_per_latent: np.ndarray


class VAEModel:
    def __init__(self, latent_dim: int, params: Optional[np.ndarray] = None):
        if not (1 <= latent_dim <= MAX_LATENT):
            raise ShapeError(f"latent_dim must be in [1, {MAX_LATENT}], got {latent_dim}")
        self.latent_dim = latent_dim
        n = latent_dim
        self.encoder = nn.MLP((INPUT_DIM,) + ENCODER_HIDDEN + (2 * n,), ("tanh",) * 4 + ("linear",))
        self.decoder = nn.MLP((n,) + DECODER_HIDDEN + (INPUT_DIM,), ("tanh",) * 4 + ("linear",))
        n_enc = self.encoder.n_params
        if params is None:
            params = np.zeros(n_enc + self.decoder.n_params)
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (n_enc + self.decoder.n_params,):
            raise ShapeError(f"parameter vector has wrong length {params.shape}")
        self.params = params
        self.encoder.bind(params[:n_enc])
        self.decoder.bind(params[n_enc:])
        self.metadata: dict = {}

    @classmethod
    def init(cls, latent_dim: int, rng: np.random.Generator) -> "VAEModel":
        """Glorot-uniform initialisation; the mu and logvar heads are drawn as
        two separate ``2 -> N`` layers."""
        model = cls(latent_dim)
        for mlp in (model.encoder, model.decoder):
            for w in mlp.weights:
                n_out, n_in = w.shape
                if w is model.encoder.weights[-1]:
                    n_out //= 2
                limit = math.sqrt(6.0 / (n_in + n_out))
                w[...] = rng.uniform(-limit, limit, size=w.shape)
        model.touch()
        return model

    @property
    def chain(self) -> dict:
        return {"encoder": list(self.encoder.sizes), "decoder": list(self.decoder.sizes)}

    def touch(self) -> None:
        self.encoder.touch()
        self.decoder.touch()

    def copy(self) -> "VAEModel":
        other = VAEModel(self.latent_dim, self.params.copy())
        other.metadata = json.loads(json.dumps(self.metadata))
        return other


def _batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != INPUT_DIM or x.ndim not in (1, 2):
        raise ShapeError(f"expected input of shape (..., {INPUT_DIM}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("input has non-finite entries")
    return x


def encode(model: VAEModel, x) -> LatentEncoding:
    out = model.encoder(_batch(x))
    n = model.latent_dim
    return LatentEncoding(out[..., :n], out[..., n:])


def decode(model: VAEModel, z) -> np.ndarray:
    return model.decoder(np.asarray(z, dtype=np.float64))


def reparameterize(enc: LatentEncoding, rng: Optional[np.random.Generator] = None, eps=None) -> np.ndarray:
    """``z = mu + exp(logvar / 2) * eps`` with ``eps ~ N(0, 1)`` unless given."""
    if eps is None:
        eps = rng.standard_normal(np.shape(enc.mu))
    return enc.mu + np.exp(0.5 * enc.logvar) * eps


def recon_loss(x, x_hat, reduction: str = "mean") -> float:
    """Squared error per sample, reduced over the 16 entries by ``mean`` or
    ``sum`` and averaged over a batch."""
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    sq = (x_hat - x) ** 2
    per_sample = sq.mean(axis=-1) if reduction == "mean" else sq.sum(axis=-1)
    return float(np.mean(per_sample))


def kl_loss_per_latent(enc: LatentEncoding) -> np.ndarray:
    """Closed-form KL to N(0, 1), one term per latent (per sample for batches)."""
    mu, lv = np.asarray(enc.mu), np.asarray(enc.logvar)
    return 0.5 * (mu * mu + np.expm1(lv) - lv)


def _recon_scale(reduction: str) -> float:
    if reduction == "mean":
        return 1.0 / INPUT_DIM
    if reduction == "sum":
        return 1.0
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_and_grad(model: VAEModel, x, beta: float, eps, reduction: str = "mean", need_grad: bool = True):
    """Batch objective ``recon + beta * KL`` with fixed noise ``eps``.

    Returns ``(LossParts, grad)``; ``grad`` has the layout of ``model.params``
    (``None`` when ``need_grad`` is false).
    """
    x = _batch(x)
    if x.ndim == 1:
        x = x[None, :]
    eps = np.asarray(eps, dtype=np.float64).reshape(x.shape[0], model.latent_dim)
    b = x.shape[0]
    n = model.latent_dim
    scale = _recon_scale(reduction)

    out, enc_tape = nn.forward(model.encoder, x)
    mu, lv = out[:, :n], out[:, n:]
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    x_hat, dec_tape = nn.forward(model.decoder, z)

    diff = x_hat - x
    recon = scale * float(np.sum(diff * diff)) / b
    var = std * std
    kl_terms = 0.5 * (mu * mu + np.expm1(lv) - lv)
    kl_per_latent = kl_terms.mean(axis=0)
    kl_total = float(kl_per_latent.sum())
    total = recon + beta * kl_total
    if not math.isfinite(total):
        raise NumericError(f"non-finite loss (recon={recon}, kl={kl_total})")
    parts = LossParts(total, recon, kl_total, kl_per_latent)
    if not need_grad:
        return parts, None

    g_dec, g_z = nn.backward(model.decoder, dec_tape, (2.0 * scale / b) * diff)
    g_mu = g_z + (beta / b) * mu
    g_lv = g_z * eps * std * 0.5 + (beta / b) * 0.5 * (var - 1.0)
    g_enc, _ = nn.backward(model.encoder, enc_tape, np.concatenate([g_mu, g_lv], axis=1))
    return parts, np.concatenate([g_enc, g_dec])


def total_loss(x, model: VAEModel, beta: float, rng: Optional[np.random.Generator] = None, eps=None,
               reduction: str = "mean") -> LossParts:
    x = _batch(x)
    shape = (x.shape[0] if x.ndim == 2 else 1, model.latent_dim)
    if eps is None:
        eps = rng.standard_normal(shape)
    parts, _ = loss_and_grad(model, x, beta, eps, reduction, need_grad=False)
    return parts


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    lr_initial: float = 5e-3
    lr_min: float = 1e-4
    plateau_factor: float = 0.5
    plateau_patience: int = 25
    plateau_min_delta: float = 1e-6
    beta_final: float = 0.0
    beta_ramp_fraction: float = 0.5
    beta_mode: str = "linear"
    beta_cycles: int = 4
    validation_fraction: float = 0.1
    recon_reduction: str = "mean"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if not (0 < self.lr_min <= self.lr_initial):
            raise ConfigError("lr_min", "need 0 < lr_min <= lr_initial")
        if not (0 < self.plateau_factor < 1):
            raise ConfigError("plateau_factor", "must lie in (0, 1)")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience", "must be >= 1")
        if self.beta_final < 0:
            raise ConfigError("beta_final", "must be >= 0")
        if not (0 < self.beta_ramp_fraction <= 1):
            raise ConfigError("beta_ramp_fraction", "must lie in (0, 1]")
        if self.beta_mode not in ("linear", "cyclical"):
            raise ConfigError("beta_mode", "must be 'linear' or 'cyclical'")
        if self.beta_cycles < 1:
            raise ConfigError("beta_cycles", "must be >= 1")
        if not (0 <= self.validation_fraction < 1):
            raise ConfigError("validation_fraction", "must lie in [0, 1)")
        if self.recon_reduction not in ("mean", "sum"):
            raise ConfigError("recon_reduction", "must be 'mean' or 'sum'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown training key")
        return cls(**d)


def beta_schedule(epoch: int, config: TrainConfig) -> float:
    """Linear ramp from 0 to ``beta_final`` over ``ceil(ramp_fraction * epochs)``
    epochs; in cyclical mode the ramp repeats ``beta_cycles`` times."""
    if config.beta_mode == "cyclical":
        period = max(1, math.ceil(config.epochs / config.beta_cycles))
        ramp = max(1, math.ceil(config.beta_ramp_fraction * period))
        return config.beta_final * min(1.0, (epoch % period) / ramp)
    ramp = math.ceil(config.beta_ramp_fraction * config.epochs)
    if ramp <= 0:
        return config.beta_final
    return config.beta_final * min(1.0, epoch / ramp)


class PlateauScheduler:
    """Reduce the learning rate when validation loss stops improving."""

    def __init__(self, config: TrainConfig):
        self.lr = config.lr_initial
        self.factor = config.plateau_factor
        self.patience = config.plateau_patience
        self.min_delta = config.plateau_min_delta
        self.lr_min = config.lr_min
        self.best = math.inf
        self.wait = 0
        self.fired = False

    def step(self, val_loss: float) -> float:
        self.fired = False
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr * self.factor, self.lr_min)
                self.wait = 0
                self.fired = True
        return self.lr


def lr_plateau_step(history, current_lr: float, config: TrainConfig) -> float:
    """Learning rate after the last entry of ``history`` (replays the rule)."""
    sched = PlateauScheduler(config)
    for loss in history:
        sched.step(loss)
    if sched.fired:
        return max(current_lr * config.plateau_factor, config.lr_min)
    return current_lr


def split_indices(n: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([config.seed, 0]).permutation(n)
    n_val = int(round(config.validation_fraction * n)) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def _eval_parts(model, x, beta, rng, reduction) -> LossParts:
    eps = rng.standard_normal((x.shape[0], model.latent_dim))
    parts, _ = loss_and_grad(model, x, beta, eps, reduction, need_grad=False)
    return parts


def train(model: VAEModel, data, config: TrainConfig, metrics_path=None):
    """Minimise ``recon + beta * KL`` with Adam, beta annealing and plateau
    learning-rate decay.

    ``data`` is an ``(n, 16)`` array. Returns ``(model, metrics)`` where
    ``metrics`` holds one dict per epoch; ``model`` is updated in place.
    """
    data = _batch(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ShapeError("training data must be a non-empty (n, 16) array")
    train_idx, val_idx = split_indices(data.shape[0], config)
    x_train = data[train_idx]
    x_val = data[val_idx] if val_idx.size else x_train
    adam = nn.AdamState.zeros(model.params.size)
    sched = PlateauScheduler(config)
    n = model.latent_dim
    metrics = []

    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, 2, epoch])
        beta = beta_schedule(epoch, config)
        lr = sched.lr
        order = rng.permutation(x_train.shape[0])
        eps_all = rng.standard_normal((x_train.shape[0], n))
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                parts, grad = loss_and_grad(model, x_train[idx], beta, eps_all[start:start + idx.size],
                                            config.recon_reduction)
                nn.adam_step(model.params, grad, adam, lr)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch}: {exc}") from exc
            model.touch()
            total += parts.total * idx.size
        val = _eval_parts(model, x_val, beta, np.random.default_rng([config.seed, 3, epoch]),
                          config.recon_reduction)
        row = {
            "epoch": epoch,
            "lr": lr,
            "beta": beta,
            "train_loss": total / x_train.shape[0],
            "val_loss": val.total,
            "recon_loss": val.recon,
            "kl_total": val.kl_total,
        }
        for i, k in enumerate(val.kl_per_latent):
            row[f"kl_{i}"] = float(k)
        metrics.append(row)
        sched.step(val.total)

    model.metadata = {
        "config": config.to_dict(),
        "seed": config.seed,
        "epochs_run": config.epochs,
        "final": metrics[-1] if metrics else None,
    }
    if metrics_path is not None:
        write_metrics_csv(metrics, metrics_path, n)
    return model, metrics


def metrics_header(latent_dim: int) -> list:
    return ["epoch", "lr", "beta", "train_loss", "val_loss", "recon_loss", "kl_total"] + [
        f"kl_{i}" for i in range(latent_dim)
    ]


def write_metrics_csv(metrics, path, latent_dim: int) -> None:
    header = metrics_header(latent_dim)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in metrics:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in header])


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model: VAEModel, path) -> None:
    """Versioned JSON; floats are written with ``repr`` so they round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "latent_dim": model.latent_dim,
        "chain": model.chain,
        "params": model.params.tolist(),
        "metadata": model.metadata,
    }
    _atomic_write_text(path, json.dumps(doc, indent=1))


def load_checkpoint(path) -> VAEModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        model = VAEModel(int(doc["latent_dim"]), np.array(doc["params"], dtype=np.float64))
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise FormatError(f"{path}: inconsistent checkpoint ({exc})") from exc
    if doc.get("chain") != model.chain:
        raise FormatError(f"{path}: layer chain {doc.get('chain')} does not match latent_dim")
    model.metadata = doc.get("metadata") or {}
    return model
