"""Experiment runner: datasets, per-epoch distribution diagnostics, and
machine-readable output.

Each experiment trains one freshly initialized network per method (all
methods share the initialization stream, so they start from identical
parameters) and records, after every epoch including epoch 0, one metrics row
per hidden layer:

    method,epoch,layer,train_loss,val_loss,val_acc,sw1_gauss,q25,q50,q75,act_mean,act_var

sw1_gauss is the sliced W1 between the layer's activations on a fixed
training subset and an equal-size batch of fresh N(0, I) draws; the metric
uses its own random streams so it never perturbs training. A run that hits a
non-finite loss writes a single diagnostic row (layer -1, nan metrics) and
aborts.

All randomness derives from named substreams of the experiment seed, so a
rerun with the same config reproduces the metrics CSV byte for byte. The
summary JSON additionally contains wall-clock times, which do vary.
"""

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .baselines import BnState, huber, pseudo_huber
from .per import RegConfig, SQRT_2_OVER_PI, per_point_grad, per_point_loss
from .sliced import ActivationBatch, draw_slices, sw1_empirical
from .special_fns import RngStream

CSV_HEADER = ("method,epoch,layer,train_loss,val_loss,val_acc,"
              "sw1_gauss,q25,q50,q75,act_mean,act_var")

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Tags naming the independent substreams of the experiment seed.
(_S_DATA, _S_INIT, _S_SHUFFLE, _S_REG, _S_METRIC_REF, _S_METRIC_SLICES,
 _S_TRACKED) = range(1, 8)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DataFormatError(ValueError):
    """Malformed external data file."""


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "gauss_mixture"  # gauss_mixture | two_arcs | idx_files
    classes: int = 3             # gauss_mixture
    dim: int = 16                # gauss_mixture
    train_size: int = 2000
    val_size: int = 500
    spread: float = 1.0          # gauss_mixture within-class std
    noise: float = 0.1           # two_arcs jitter std
    images_path: str = ""        # idx_files
    labels_path: str = ""
    val_fraction: float = 0.2    # idx_files split

    def __post_init__(self):
        if self.kind not in ("gauss_mixture", "two_arcs", "idx_files"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind != "idx_files":
            if self.train_size < 1 or self.val_size < 1:
                raise ConfigError("train_size and val_size must be positive")
        if self.kind == "gauss_mixture":
            if self.classes < 2 or self.dim < 1:
                raise ConfigError("gauss_mixture needs classes >= 2, dim >= 1")
            if self.spread < 0.0:
                raise ConfigError("spread must be nonnegative")
        if self.kind == "two_arcs" and self.noise < 0.0:
            raise ConfigError("noise must be nonnegative")
        if self.kind == "idx_files":
            if not self.images_path or not self.labels_path:
                raise ConfigError("idx_files needs images_path and labels_path")
            if not (0.0 < self.val_fraction < 1.0):
                raise ConfigError("val_fraction must lie in (0, 1)")


@dataclass
class MetricsRecord:
    epoch: int
    layer: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    sw1_gauss: float
    q25: float
    q50: float
    q75: float
    act_mean: float
    act_var: float

    def __post_init__(self):
        if not (self.q25 <= self.q50 <= self.q75):
            raise ValueError("quantiles must be ordered")
        if self.act_var < 0.0:
            raise ValueError("variance must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    widths: tuple = (64, 64, 64, 64)   # hidden layer widths
    activation: str = "leaky_relu"
    train: nn.TrainConfig = field(default_factory=lambda: nn.TrainConfig(
        lr=0.05, momentum=0.9, epochs=60, batch_size=32))
    methods: tuple = (RegConfig(method="none"),
                      RegConfig(method="per", lam=1e-4))
    metrics_slices: int = 256
    gaussian_ref_size: int = 256
    out_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if len(self.methods) < 1:
            raise ConfigError("need at least one method")
        names = [m.method for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("method names must be unique within a run")
        if len(self.widths) < 1 or any(w < 1 for w in self.widths):
            raise ConfigError("widths must be positive")
        if self.activation not in nn.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.metrics_slices < 1 or self.gaussian_ref_size < 1:
            raise ConfigError("metrics_slices and gaussian_ref_size must be >= 1")
        if "bn" in names and self.train.batch_size < 2:
            raise ConfigError("batch norm needs batch_size >= 2")


def _standardize(train_x, val_x):
    # Per-feature statistics from the training split only.
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (train_x - mu) / sd, (val_x - mu) / sd


def _gauss_mixture_split(means, size, spread, rng):
    k, d = means.shape
    labels = np.arange(size) % k
    points = means[labels] + spread * rng.generator().standard_normal((size, d))
    return points, labels


def _two_arcs_split(size, noise, rng):
    gen = rng.generator()
    n0 = size // 2
    n1 = size - n0
    t0 = gen.uniform(0.0, math.pi, n0)
    t1 = gen.uniform(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower]) + noise * gen.standard_normal((size, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64),
                        np.ones(n1, dtype=np.int64)])
    return x, y


def generate_dataset(cfg: DatasetConfig, rng: RngStream):
    """Build (train_x, train_y, val_x, val_y), standardized per feature with
    training-split statistics. Deterministic given the stream."""
    if cfg.kind == "gauss_mixture":
        means = 2.0 * rng.substream(0).generator().standard_normal(
            (cfg.classes, cfg.dim))
        train_x, train_y = _gauss_mixture_split(means, cfg.train_size,
                                                cfg.spread, rng.substream(1))
        val_x, val_y = _gauss_mixture_split(means, cfg.val_size, cfg.spread,
                                            rng.substream(2))
    elif cfg.kind == "two_arcs":
        train_x, train_y = _two_arcs_split(cfg.train_size, cfg.noise,
                                           rng.substream(1))
        val_x, val_y = _two_arcs_split(cfg.val_size, cfg.noise,
                                       rng.substream(2))
    else:
        images, labels = load_idx(cfg.images_path, cfg.labels_path)
        n = images.shape[0]
        n_val = int(round(n * cfg.val_fraction))
        if n_val < 1 or n - n_val < 1:
            raise ConfigError("val_fraction leaves an empty split")
        order = rng.substream(3).generator().permutation(n)
        train_idx, val_idx = order[:-n_val], order[-n_val:]
        train_x, train_y = images[train_idx], labels[train_idx]
        val_x, val_y = images[val_idx], labels[val_idx]
    train_x, val_x = _standardize(train_x, val_x)
    return train_x, train_y, val_x, val_y


def _read_be_u32(data: bytes, offset: int, path) -> int:
    if offset + 4 > len(data):
        raise DataFormatError(f"{path}: truncated, expected 4 bytes at "
                              f"offset {offset}, file has {len(data)}")
    return int.from_bytes(data[offset:offset + 4], "big")


def load_idx(path_images, path_labels):
    """Parse a big-endian IDX image/label file pair.

    Returns (images, labels): images as an (n, rows*cols) float matrix scaled
    to [0, 1], labels as an int vector. Per-feature standardization happens
    later, with training-split statistics, in generate_dataset.
    """
    raw = Path(path_images).read_bytes()
    magic = _read_be_u32(raw, 0, path_images)
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"{path_images}: bad magic 0x{magic:08x} at "
                              f"offset 0, expected 0x{IDX_IMAGE_MAGIC:08x}")
    count = _read_be_u32(raw, 4, path_images)
    rows = _read_be_u32(raw, 8, path_images)
    cols = _read_be_u32(raw, 12, path_images)
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise DataFormatError(f"{path_images}: truncated pixel data, file "
                              f"ends at byte {len(raw)}, expected {need}")
    images = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols,
                           offset=16).reshape(count, rows * cols) / 255.0

    raw_l = Path(path_labels).read_bytes()
    magic_l = _read_be_u32(raw_l, 0, path_labels)
    if magic_l != IDX_LABEL_MAGIC:
        raise DataFormatError(f"{path_labels}: bad magic 0x{magic_l:08x} at "
                              f"offset 0, expected 0x{IDX_LABEL_MAGIC:08x}")
    count_l = _read_be_u32(raw_l, 4, path_labels)
    if count_l != count:
        raise DataFormatError(f"{path_labels}: {count_l} labels for "
                              f"{count} images")
    if len(raw_l) < 8 + count_l:
        raise DataFormatError(f"{path_labels}: truncated label data, file "
                              f"ends at byte {len(raw_l)}, expected {8 + count_l}")
    labels = np.frombuffer(raw_l, dtype=np.uint8, count=count_l,
                           offset=8).astype(np.int64)
    return images, labels


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def _evaluate(net, x, y, bn_states):
    logits, _, _ = nn.forward(net, x, bn_states, training=False)
    loss, _ = nn.softmax_cross_entropy(logits, y)
    acc = float((logits.argmax(axis=1) == y).mean())
    return loss, acc


def _layer_metrics(net, cfg, root, method_index, epoch, metrics_x,
                   tracked_units, train_stats, val_stats, bn_states=None):
    """One MetricsRecord per hidden layer at the current parameters."""
    _, acts, _ = nn.forward(net, metrics_x, bn_states, training=False)
    records = []
    for l in range(net.n_hidden):
        a = acts[l].values
        ref = root.substream(_S_METRIC_REF, method_index, epoch, l) \
            .generator().standard_normal(a.shape)
        slices = draw_slices(
            root.substream(_S_METRIC_SLICES, method_index, epoch, l),
            cfg.metrics_slices, a.shape[1])
        sw1 = sw1_empirical(ActivationBatch(a, l), ActivationBatch(ref, l),
                            slices)
        col = a[:, tracked_units[l]]
        q25, q50, q75 = np.quantile(col, (0.25, 0.5, 0.75))
        records.append(MetricsRecord(
            epoch=epoch, layer=l,
            train_loss=train_stats[0], val_loss=val_stats[0],
            val_accuracy=val_stats[1], sw1_gauss=sw1,
            q25=float(q25), q50=float(q50), q75=float(q75),
            act_mean=float(col.mean()), act_var=float(col.var())))
    return records


def run_experiment(cfg: ExperimentConfig):
    """Train every configured method and write metrics.csv + summary.json
    into cfg.out_dir; returns their paths.

    On a non-finite loss the CSV gets a diagnostic row (layer -1, nan
    metrics) for the failing method and TrainingDiverged is raised after both
    files are flushed.
    """
    root = RngStream(cfg.seed)
    train_x, train_y, val_x, val_y = generate_dataset(
        cfg.dataset, root.substream(_S_DATA))
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    widths = (train_x.shape[1], *cfg.widths, n_classes)

    m = min(cfg.gaussian_ref_size, train_x.shape[0])
    metrics_x = train_x[:m]
    tracked_units = [
        int(root.substream(_S_TRACKED, l).generator().integers(w))
        for l, w in enumerate(cfg.widths)
    ]

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    summary = {}
    diverged = None

    for mi, reg in enumerate(cfg.methods):
        t0 = time.perf_counter()
        net = nn.init_network(widths, cfg.activation, cfg.train.init,
                              root.substream(_S_INIT))
        bn_states = None
        if reg.method == "bn":
            bn_states = [BnState.create(layer.weights.shape[0])
                         for layer in net.layers[:-1]] + [None]
        tcfg = replace(cfg.train,
                       reg=replace(reg, seed=root.substream(_S_REG, mi)),
                       seed=root.substream(_S_SHUFFLE, mi))
        velocity = nn.init_velocity(nn.trainable_arrays(net, bn_states))

        final_records = None
        abort_epoch = 0
        try:
            for epoch in range(cfg.train.epochs + 1):
                abort_epoch = epoch
                if epoch > 0:
                    nn.train_epoch(net, train_x, train_y, tcfg, velocity,
                                   bn_states, epoch - 1)
                train_stats = _evaluate(net, train_x, train_y, bn_states)
                val_stats = _evaluate(net, val_x, val_y, bn_states)
                records = _layer_metrics(net, cfg, root, mi, epoch, metrics_x,
                                         tracked_units, train_stats, val_stats,
                                         bn_states)
                rows.extend((reg.method, r) for r in records)
                final_records = records
        except nn.TrainingDiverged as exc:
            rows.append((reg.method, ("abort", abort_epoch)))
            summary[reg.method] = {
                "diverged": str(exc),
                "wall_time_s": time.perf_counter() - t0,
            }
            diverged = exc
            break

        summary[reg.method] = {
            "final_val_acc": final_records[0].val_accuracy,
            "final_sw1_per_layer": [r.sw1_gauss for r in final_records],
            "wall_time_s": time.perf_counter() - t0,
        }

    csv_path = out_dir / "metrics.csv"
    with open(csv_path, "w", newline="\n") as fp:
        fp.write(CSV_HEADER + "\n")
        for method, rec in rows:
            if isinstance(rec, tuple):  # ("abort", epoch) diagnostic record
                fields = [method, str(rec[1]), "-1"] + ["nan"] * 9
            else:
                fields = [method, str(rec.epoch), str(rec.layer),
                          _fmt(rec.train_loss), _fmt(rec.val_loss),
                          _fmt(rec.val_accuracy), _fmt(rec.sw1_gauss),
                          _fmt(rec.q25), _fmt(rec.q50), _fmt(rec.q75),
                          _fmt(rec.act_mean), _fmt(rec.act_var)]
            fp.write(",".join(fields) + "\n")

    summary_path = out_dir / "summary.json"
    with open(summary_path, "w", newline="\n") as fp:
        json.dump(summary, fp, indent=2, sort_keys=True)
        fp.write("\n")

    if diverged is not None:
        raise nn.TrainingDiverged(str(diverged))
    return csv_path, summary_path


def emit_loss_curves(out_path):
    """Write the 1-D regularizer profile against its references on [-3, 3].

    Columns: x, the loss shifted to vanish at 0, its gradient erf(x/sqrt(2)),
    and the Huber / Pseudo-Huber curves. Plot-ready CSV, step 0.01.
    """
    xs = np.arange(-300, 301) * 0.01
    shifted = per_point_loss(xs) - SQRT_2_OVER_PI
    grad = per_point_grad(xs)
    hub = huber(xs)
    ph = pseudo_huber(xs)
    out_path = Path(out_path)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="\n") as fp:
        fp.write("x,per_shifted,per_grad,huber,pseudo_huber\n")
        for i in range(xs.shape[0]):
            fp.write(",".join(_fmt(v) for v in
                              (xs[i], shifted[i], grad[i], hub[i], ph[i])))
            fp.write("\n")
    return out_path
