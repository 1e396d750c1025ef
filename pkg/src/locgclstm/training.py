"""Loss, optimizer, learning-rate schedule, training loop, checkpoints, and
the hyperparameter grid search.

Training minimizes mean squared error on standardized flow plus an L2
penalty on the LSTM gate biases. The optimizer keeps a running mean of
squared gradients per parameter; the learning rate follows cosine annealing
with warm restarts between configured bounds.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import GradientTape, ParameterSet, Tensor, backward
from .data import SampleSet, kfold_split
from .encoding import StandardizationParams, zscore_fit
from .errors import ContractError, NumericError, ShapeMismatchError, ValidationError
from .graph import RoadGraph
from .metrics import evaluate
from .model import LocGCLSTM

__all__ = [
    "TrainConfig",
    "RMSPropState",
    "TrainResult",
    "training_loss",
    "rmsprop_step",
    "calra_lr",
    "fit_standardization",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "grid_search",
]

CHECKPOINT_MAGIC = b"LGCK"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 600
    batch_size: int = 64
    lr_max: float = 2.4e-5
    lr_min: float = 1.5e-5
    calra_cycles: int = 4
    bias_l2_lambda: float = 0.01
    seed: int = 0
    normalization_mode: str = "dynamic"
    gcn_units: int = 128
    gcn_steps: int = 1
    lstm_units: int = 256
    lstm_layers: int = 2
    use_gcn: bool = True

    def __post_init__(self):
        if not (self.lr_max >= self.lr_min > 0):
            raise ValidationError(
                f"need lr_max >= lr_min > 0, got {self.lr_max}, {self.lr_min}"
            )
        if self.calra_cycles < 1:
            raise ValidationError(f"calra_cycles must be >= 1, got {self.calra_cycles}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()


def training_loss(pred: Tensor, truth: np.ndarray, model: LocGCLSTM, lam: float) -> Tensor:
    """MSE over every node and horizon plus lam * sum of squared LSTM biases."""
    truth = np.asarray(truth, dtype=np.float64)
    if pred.data.shape != truth.shape:
        raise ShapeMismatchError(f"loss: {pred.data.shape} vs {truth.shape}")
    diff = ad.subtract(pred, truth)
    loss = ad.reduce_mean(ad.multiply(diff, diff))
    if lam:
        for layer in model.lstm_layers:
            for g in ("f", "i", "c", "o"):
                b = layer.bias[g]
                loss = ad.add(loss, ad.multiply(Tensor(lam), ad.reduce_sum(ad.multiply(b, b))))
    return loss


class RMSPropState:
    """Per-parameter running mean of squared gradients."""

    def __init__(self, params: ParameterSet, rho: float = 0.9, eps: float = 1e-7):
        self.rho = rho
        self.eps = eps
        self.accum = {name: np.zeros_like(t.data) for name, t in params.items()}


def rmsprop_step(params: ParameterSet, state: RMSPropState, lr: float) -> None:
    """accum <- rho*accum + (1-rho)*g^2 ; p <- p - lr*g/(sqrt(accum)+eps)."""
    for name, tensor in params.items():
        g = params.grad(name)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        acc = state.accum[name]
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        tensor.data -= lr * g / (np.sqrt(acc) + state.eps)


def calra_lr(epoch: int, cfg: TrainConfig) -> float:
    """Cosine annealing with warm restarts across ``calra_cycles`` cycles.

    Within each cycle of length T = epochs/cycles the rate decays from
    lr_max (first epoch of the cycle, exactly) to lr_min (last epoch of the
    cycle, exactly), then restarts.
    """
    if not (0 <= epoch < cfg.epochs):
        raise ContractError(f"epoch {epoch} outside [0, {cfg.epochs})")
    cycle_len = max(1, (cfg.epochs + cfg.calra_cycles - 1) // cfg.calra_cycles)
    t_cur = epoch % cycle_len
    if cycle_len == 1:
        return cfg.lr_max
    frac = t_cur / (cycle_len - 1)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + np.cos(np.pi * frac))


def fit_standardization(samples: SampleSet, indices) -> tuple[StandardizationParams, StandardizationParams]:
    """Fit per-feature z-score params on the indexed training blocks only.

    Returns (input params, flow params); the flow column's params also
    govern target standardization and prediction inversion.
    """
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise ContractError("cannot fit standardization on an empty index set")
    blocks = samples.input_blocks(indices)  # (S, N, L, F), logged access
    rows = blocks.reshape(-1, samples.feature_count)
    inputs = zscore_fit(rows)
    return inputs, inputs.column(samples.flow_index)


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = float("inf")
    best_parameters: dict = field(default_factory=dict)
    final_parameters: dict = field(default_factory=dict)
    fit_access_range: tuple = (0, 0)


def _snapshot(params: ParameterSet) -> dict:
    return {name: t.data.copy() for name, t in params.items()}


def _restore(params: ParameterSet, snap: dict) -> None:
    for name, tensor in params.items():
        tensor.data[...] = snap[name]


def train(
    model: LocGCLSTM,
    samples: SampleSet,
    cfg: TrainConfig,
    train_indices,
    val_indices=None,
) -> TrainResult:
    """Run the full loop; the model is updated in place.

    History rows carry per-epoch training loss and, when a validation set is
    given, raw-unit validation RMSE/MAE/MAPE; the best-validation parameter
    snapshot (by RMSE) is kept alongside the final one.
    """
    train_indices = np.asarray(train_indices, dtype=np.intp)
    if train_indices.size == 0:
        raise ContractError("empty training set")
    val_indices = (
        None if val_indices is None else np.asarray(val_indices, dtype=np.intp)
    )
    rng = np.random.default_rng(cfg.seed)

    log_mark = len(samples.access_log) if samples.access_log is not None else 0
    input_params, flow_params = fit_standardization(samples, train_indices)
    log_end = len(samples.access_log) if samples.access_log is not None else 0
    model.set_standardization(input_params, flow_params)

    params = model.parameters()
    state = RMSPropState(params)
    result = TrainResult(fit_access_range=(log_mark, log_end))

    x_train = samples.input_blocks(train_indices)
    y_train = samples.target_blocks(train_indices)
    x_std_all = model.standardize_inputs(x_train)
    y_std_all = model.standardize_targets(y_train)

    for epoch in range(cfg.epochs):
        lr = calra_lr(epoch, cfg)
        order = rng.permutation(train_indices.size)
        total_loss = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            x_std = x_std_all[batch]
            y_std = y_std_all[batch]
            with GradientTape() as tape:
                pred = model.forward_standardized(x_std)
                loss = training_loss(pred, y_std, model, cfg.bias_l2_lambda)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss in epoch {epoch}, batch starting at {start}"
                )
            backward(loss, tape, params)
            rmsprop_step(params, state, lr)
            total_loss += value * batch.size
        row = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": total_loss / order.size,
            "val_RMSE": "",
            "val_MAE": "",
            "val_MAPE": "",
        }
        if val_indices is not None and val_indices.size:
            report = evaluate_model(model, samples, val_indices)
            row["val_RMSE"] = report.rmse
            row["val_MAE"] = report.mae
            row["val_MAPE"] = "" if report.mape is None else report.mape
            if report.rmse < result.best_val_rmse:
                result.best_val_rmse = report.rmse
                result.best_epoch = epoch
                result.best_parameters = _snapshot(params)
        result.history.append(row)

    result.final_parameters = _snapshot(params)
    if not result.best_parameters:
        result.best_parameters = _snapshot(params)
        result.best_epoch = cfg.epochs - 1
    return result


def evaluate_model(model: LocGCLSTM, samples: SampleSet, indices, batch_size: int = 256):
    """Raw-unit metrics of the model on the indexed samples."""
    indices = np.asarray(indices, dtype=np.intp)
    preds, truths = [], []
    for start in range(0, indices.size, batch_size):
        chunk = indices[start : start + batch_size]
        preds.append(model.predict(samples.input_blocks(chunk)))
        truths.append(samples.target_blocks(chunk))
    return evaluate(np.concatenate(preds).ravel(), np.concatenate(truths).ravel())


def apply_parameters(model: LocGCLSTM, snapshot: dict) -> None:
    _restore(model.parameters(), snapshot)


# ---- checkpoints -----------------------------------------------------------


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode()
    parts = [struct.pack("<H", len(encoded)), encoded, struct.pack("<B", array.ndim)]
    parts += [struct.pack("<Q", d) for d in array.shape]
    parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, model: LocGCLSTM, cfg: TrainConfig, history=()) -> None:
    """Versioned binary container; written atomically (temp file + rename).

    Contains the architecture, the resolved config and its digest, the
    standardization parameters, the training history, the adjacency, and
    every named parameter tensor. No timestamps: identical runs produce
    byte-identical files.
    """
    if model.input_standardization is None:
        raise ContractError("cannot checkpoint an unfitted model")
    header = {
        "architecture": model.architecture(),
        "config": asdict(cfg),
        "config_digest": cfg.digest(),
        "history": list(history),
        "input_mean": model.input_standardization.mean.tolist(),
        "input_std": model.input_standardization.std.tolist(),
        "flow_mean": model.flow_standardization.mean.tolist(),
        "flow_std": model.flow_standardization.std.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tensors = [( "graph.adjacency", model.graph.adjacency)]
    tensors += [(name, t.data) for name, t in model.parameters().items()]
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, array in tensors:
            fh.write(_pack_tensor(name, array))
    os.replace(tmp, path)


def load_checkpoint(path):
    """Rebuild (model, cfg, history) from a checkpoint file."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
            data = np.frombuffer(
                fh.read(8 * int(np.prod(shape)) if shape else 8), dtype="<f8"
            ).reshape(shape)
            tensors[name] = data.copy()
    cfg = TrainConfig(**header["config"])
    graph = RoadGraph(tensors.pop("graph.adjacency"))
    model = LocGCLSTM.from_architecture(header["architecture"], graph)
    params = model.parameters()
    for name, tensor in params.items():
        if name not in tensors:
            raise ValidationError(f"{path}: checkpoint missing tensor {name!r}")
        if tensors[name].shape != tensor.data.shape:
            raise ValidationError(
                f"{path}: tensor {name!r} is {tensors[name].shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data[...] = tensors[name]
    model.set_standardization(
        StandardizationParams(
            mean=np.array(header["input_mean"]), std=np.array(header["input_std"])
        ),
        StandardizationParams(
            mean=np.array(header["flow_mean"]), std=np.array(header["flow_std"])
        ),
    )
    return model, cfg, header["history"]


# ---- grid search -------------------------------------------------------------


GRID_METRIC_ORDER = ("MSE", "RMSE", "MAE", "MAPE", "MdAE", "MdAPE")


def grid_search(
    graph: RoadGraph,
    samples: SampleSet,
    base_cfg: TrainConfig,
    batch_sizes=(16, 32, 64, 128),
    units=(32, 64, 128, 256),
    layer_counts=(3, 4),
    folds: int = 5,
):
    """Train and score every (batch size, units, layers) combination.

    ``layers`` counts total named layers as configured (graph convolution +
    LSTMs + head), so 3 means one LSTM layer and 4 means two. Evaluation is
    on fold 0 of a seeded split; rows report all Table-style metrics in the
    order MSE, RMSE, MAE, MAPE, MdAE, MdAPE. Failures are flagged per cell
    and the search continues.
    """
    if not batch_sizes or not units or not layer_counts:
        raise ContractError("empty grid")
    split = kfold_split(len(samples), k=folds, seed=base_cfg.seed)
    train_idx = split.train_indices(0)
    val_idx = split.test_indices(0)
    rows = []
    for layers in layer_counts:
        for unit in units:
            for batch in batch_sizes:
                row = {"layers": layers, "units": unit, "batch_size": batch}
                try:
                    cfg = replace(
                        base_cfg,
                        batch_size=batch,
                        lstm_units=unit,
                        lstm_layers=max(1, layers - 2),
                    )
                    model = LocGCLSTM(
                        graph=graph,
                        feature_count=samples.feature_count,
                        gcn_units=cfg.gcn_units,
                        gcn_steps=cfg.gcn_steps,
                        lstm_units=cfg.lstm_units,
                        lstm_layers=cfg.lstm_layers,
                        horizon=samples.horizon,
                        normalization_mode=cfg.normalization_mode,
                        use_gcn=cfg.use_gcn,
                        rng=np.random.default_rng(cfg.seed),
                    )
                    result = train(model, samples, cfg, train_idx, val_idx)
                    apply_parameters(model, result.best_parameters)
                    report = evaluate_model(model, samples, val_idx)
                    row.update(
                        {
                            "MSE": report.rmse**2,
                            "RMSE": report.rmse,
                            "MAE": report.mae,
                            "MAPE": report.mape,
                            "MdAE": report.mdae,
                            "MdAPE": report.mdape,
                            "failed": "",
                        }
                    )
                except (NumericError, ValidationError, ContractError) as exc:
                    row.update({m: "" for m in GRID_METRIC_ORDER})
                    row["failed"] = str(exc)
                rows.append(row)
    scored = [r for r in rows if r["failed"] == ""]
    if not scored:
        raise NumericError("every grid cell failed")
    best = min(scored, key=lambda r: (r["MSE"], r["MAE"], r["RMSE"]))
    return rows, best
