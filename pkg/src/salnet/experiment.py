"""Experiment orchestration: named run specs, seeded training loops, CSV output.

A run is (spec, seed) -> per-epoch metrics. Presets expand into the sweeps
used by the experiment CLI; everything downstream (aggregation, figures) works
off the returned `MetricsRecord` lists, and the CSV writers are the stable
interchange format: fixed header, six-decimal floats, deterministic row order,
so identical runs produce byte-identical files.
"""

from __future__ import annotations

import copy
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import network as net_mod
from .data import BatchIterator, Dataset, load_dataset
from .layers import FcLayer, MoeLayer, SalLayer
from .numerics import Activation, Prng, softmax_ce_grad, softmax_ce_loss

DEFAULT_SEEDS = (1, 2, 3, 4, 5)

METRICS_HEADER = ("run_label", "seed", "epoch", "train_loss", "val_loss", "val_accuracy")
AGGREGATE_HEADER = ("run_label", "metric", "mean", "std", "n_seeds")
AGGREGATE_METRICS = ("val_accuracy", "val_loss", "train_loss")


@dataclass(frozen=True)
class ExperimentSpec:
    """One named training configuration, before a seed is chosen."""

    label: str
    dataset: str
    kind: str = "sal"
    n_areas: int = 1
    depth: int = 2
    hidden_dim: int = 256
    epochs: int = 25
    batch_size: int = 16
    lr: float = 1e-4
    lr_sel: float | None = None
    local_weight: float = 1.0
    deep: bool = False  # tanh interior + residual wiring for the depth sweeps

    def build_config(self, input_dim: int, output_dim: int) -> net_mod.NetworkConfig:
        maker = net_mod.deep_config if self.deep else net_mod.basic_config
        return maker(
            input_dim,
            output_dim=output_dim,
            kind=self.kind,
            n_areas=self.n_areas,
            depth=self.depth,
            hidden_dim=self.hidden_dim,
            lr_net=self.lr,
            lr_sel=self.lr_sel,
            local_weight=self.local_weight,
        )


@dataclass(frozen=True)
class MetricsRecord:
    run_label: str
    seed: int
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass(frozen=True)
class AggregateResult:
    run_label: str
    metric: str
    mean: float
    std: float
    n_seeds: int


def run_single(spec: ExperimentSpec, train: Dataset, test: Dataset, seed: int,
               progress=None) -> list[MetricsRecord]:
    """Train one network for `spec.epochs` epochs and record per-epoch metrics.

    The training loss for an epoch is the sample-weighted mean of batch losses,
    each measured on the parameters before that batch's update.
    """
    config = spec.build_config(train.features.shape[1], train.class_count)
    net = net_mod.build_network(config, Prng(seed))
    batches = BatchIterator(train, spec.batch_size, seed)
    records = []
    for epoch in range(1, spec.epochs + 1):
        total, count = 0.0, 0
        for x, y in batches.epoch(epoch):
            loss = net.train_step(x, y)
            total += loss * len(y)
            count += len(y)
        val_loss, val_acc = net.evaluate(test.features, test.labels)
        records.append(MetricsRecord(spec.label, seed, epoch, total / count, val_loss, val_acc))
        if progress is not None:
            progress(records[-1])
    return records


def _run_task(payload):
    spec, train, test, seed = payload
    return run_single(spec, train, test, seed)


def run_many(specs, train: Dataset, test: Dataset, seeds=DEFAULT_SEEDS, jobs: int = 1,
             progress=None) -> list[MetricsRecord]:
    """Run every (spec, seed) pair; rows come back grouped by spec then seed.

    `jobs > 1` fans the independent runs out over processes; ordering of the
    output is identical either way.
    """
    tasks = [(spec, train, test, seed) for spec in specs for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
        if progress is not None:
            for run in results:
                for record in run:
                    progress(record)
    else:
        results = [run_single(spec, train, test, seed, progress) for spec, train, test, seed in tasks]
    return [record for run in results for record in run]


def aggregate(records) -> list[AggregateResult]:
    """Mean/std of each run's final-epoch metrics across seeds.

    Rows are emitted in first-appearance order of the labels, metrics in the
    fixed `AGGREGATE_METRICS` order, so output is deterministic.
    """
    finals = {}
    order = []
    for rec in records:
        key = (rec.run_label, rec.seed)
        if rec.run_label not in finals:
            finals[rec.run_label] = {}
            order.append(rec.run_label)
        prev = finals[rec.run_label].get(rec.seed)
        if prev is None or rec.epoch >= prev.epoch:
            finals[rec.run_label][rec.seed] = rec
    out = []
    for label in order:
        rows = [finals[label][s] for s in sorted(finals[label])]
        for metric in AGGREGATE_METRICS:
            values = np.array([getattr(r, metric) for r in rows])
            # Sample std (n-1); a single seed reports 0 rather than nan.
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            out.append(AggregateResult(label, metric, float(values.mean()),
                                       std, len(values)))
    return out


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for r in records:
            writer.writerow([r.run_label, r.seed, r.epoch, f"{r.train_loss:.6f}",
                             f"{r.val_loss:.6f}", f"{r.val_accuracy:.6f}"])


def read_metrics_csv(path) -> list[MetricsRecord]:
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            records.append(MetricsRecord(row[0], int(row[1]), int(row[2]),
                                         float(row[3]), float(row[4]), float(row[5])))
    return records


def write_aggregate_csv(results, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(AGGREGATE_HEADER)
        for r in results:
            writer.writerow([r.run_label, r.metric, f"{r.mean:.6f}", f"{r.std:.6f}", r.n_seeds])


# ---------------------------------------------------------------------------
# Presets: the sweeps reported in the experiment write-up.

AREA_SWEEP = (1, 2, 4, 8, 16)
DEPTH_SWEEP = (4, 16, 64, 128)
WIDTH_SWEEP = (1024, 2048)
COMPARE_AREAS = (4, 16)


def basic_preset(dataset: str, epochs: int = 25) -> list[ExperimentSpec]:
    """Area sweep on the 2-layer network plus the plain-BP baseline."""
    specs = [ExperimentSpec(f"sal-{n}", dataset, kind="sal", n_areas=n, epochs=epochs)
             for n in AREA_SWEEP]
    specs.append(ExperimentSpec("baseline", dataset, kind="bp", epochs=epochs))
    return specs


def compare_preset(dataset: str, epochs: int = 25, areas=COMPARE_AREAS) -> list[ExperimentSpec]:
    """Routing-for-routing comparison against the gated-expert baseline."""
    specs = []
    for n in areas:
        specs.append(ExperimentSpec(f"sal-{n}", dataset, kind="sal", n_areas=n, epochs=epochs))
        specs.append(ExperimentSpec(f"moe-{n}", dataset, kind="moe", n_areas=n, epochs=epochs))
    specs.append(ExperimentSpec("baseline", dataset, kind="bp", epochs=epochs))
    return specs


def depth_preset(dataset: str, epochs: int = 25, hidden_dim: int = 256) -> list[ExperimentSpec]:
    """Depth sweep with tanh interiors and residual wiring, 4 areas per layer."""
    specs = []
    for d in DEPTH_SWEEP:
        specs.append(ExperimentSpec(f"sal-d{d}", dataset, kind="sal", n_areas=4, depth=d,
                                    hidden_dim=hidden_dim, epochs=epochs, deep=True))
        specs.append(ExperimentSpec(f"bp-d{d}", dataset, kind="bp", depth=d,
                                    hidden_dim=hidden_dim, epochs=epochs, deep=True))
    return specs


def width_preset(dataset: str, epochs: int = 25, depth: int = 64) -> list[ExperimentSpec]:
    """Width sweep at fixed (large) depth."""
    specs = []
    for w in WIDTH_SWEEP:
        specs.append(ExperimentSpec(f"sal-d{depth}-w{w}", dataset, kind="sal", n_areas=4,
                                    depth=depth, hidden_dim=w, epochs=epochs, deep=True))
        specs.append(ExperimentSpec(f"bp-d{depth}-w{w}", dataset, kind="bp", depth=depth,
                                    hidden_dim=w, epochs=epochs, deep=True))
    return specs


PRESETS = {
    "basic": basic_preset,
    "compare": compare_preset,
    "depth": depth_preset,
    "width": width_preset,
}


def run_preset(preset: str, dataset: str, data_dir, seeds=DEFAULT_SEEDS, epochs: int = 25,
               jobs: int = 1, progress=None):
    """Load the dataset, run a preset's specs, and return (records, aggregates)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
    train, test = load_dataset(dataset, data_dir)
    specs = PRESETS[preset](dataset, epochs=epochs)
    records = run_many(specs, train, test, seeds=seeds, jobs=jobs, progress=progress)
    return records, aggregate(records)


# ---------------------------------------------------------------------------
# Gradient checks.
#
# Learned updates here are plain SGD, so (params_before - params_after) / lr
# recovers exactly the gradient the update applied; that estimate is compared
# against central finite differences of the same loss. tanh keeps the losses
# smooth (ReLU kinks would poison the finite differences).


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def _finite_diff(param: np.ndarray, loss_fn, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = param[idx]
        param[idx] = original + h
        up = loss_fn()
        param[idx] = original - h
        down = loss_fn()
        param[idx] = original
        grad[idx] = (up - down) / (2 * h)
    return grad


def _toy_batch(rng: Prng, batch: int = 6, dim: int = 5, classes: int = 3):
    x = rng.child(100).normal(batch, dim, std=1.0)
    y = rng.child(101).integers(0, classes, size=batch)
    return x, y


def _check_bp_network(rng: Prng) -> float:
    """Full two-layer BP network against finite differences of the CE loss."""
    x, y = _toy_batch(rng)
    config = net_mod.basic_config(5, output_dim=3, kind="bp", hidden_dim=4, lr_net=1e-3)
    config.activations = [Activation.TANH, Activation.LINEAR]
    net = net_mod.build_network(config, rng.child(0))

    def loss():
        return softmax_ce_loss(net.forward(x)[-1].outputs, y)

    probe = copy.deepcopy(net)
    probe.train_step(x, y)
    errors = []
    for layer, trained in zip(net.layers, probe.layers):
        fd_w = _finite_diff(layer.weights, loss)
        fd_b = _finite_diff(layer.bias, loss)
        errors.append(_relative_error((layer.weights - trained.weights) / config.lr_net, fd_w))
        errors.append(_relative_error((layer.bias - trained.bias) / config.lr_net, fd_b))
    return max(errors)


def _make_sal_layer(rng: Prng, is_output: bool = False, n_areas: int = 3) -> SalLayer:
    out_dim = 3 if is_output else 4
    return SalLayer(5, out_dim, n_areas=n_areas, class_count=3,
                    activation=Activation.LINEAR if is_output else Activation.TANH,
                    rng=rng.child(0), is_output=is_output)


def _check_sal_selector(rng: Prng) -> float:
    """Selector update equals the gradient of its auxiliary routing loss.

    The routing loss is summed per sample, not batch-averaged, so the
    finite-difference target is batch * mean cross-entropy.
    """
    layer = _make_sal_layer(rng)
    x, y = _toy_batch(rng)
    lr_sel = 1e-3

    def loss():
        return len(y) * softmax_ce_loss(x @ layer.selector, y)

    fd = _finite_diff(layer.selector, loss)
    probe = copy.deepcopy(layer)
    cache = probe.forward(x)
    probe.update(cache, np.zeros((len(y), probe.feedback.shape[1])), y,
                 lr_net=0.0, lr_sel=lr_sel, local_weight=0.0)
    return _relative_error((layer.selector - probe.selector) / lr_sel, fd)


def _check_sal_local(rng: Prng) -> float:
    """Hidden-layer local term equals the gradient of the projected local loss.

    Area updates average over the samples routed to the area, so each
    area's applied step is batch/|S_k| times the gradient of the
    batch-mean local loss. Routing reads only the selector and prototypes,
    never the area weights, so perturbing an area weight cannot move a
    sample between areas and the finite differences stay clean.
    """
    layer = _make_sal_layer(rng)
    x, y = _toy_batch(rng)
    lr = 1e-3

    def loss():
        cache = layer.forward(x)
        return softmax_ce_loss(cache.outputs @ layer.feedback, y)

    errors = []
    probe = copy.deepcopy(layer)
    cache = probe.forward(x)
    probe.update(cache, np.zeros((len(y), probe.feedback.shape[1])), y,
                 lr_net=lr, lr_sel=0.0, local_weight=1.0)
    selected = cache.routing.selected
    for k in range(layer.n_areas):
        routed = int(np.sum(selected == k))
        if routed == 0:
            continue
        scale = len(y) / routed
        fd_w = _finite_diff(layer.area_weights[k], loss) * scale
        fd_b = _finite_diff(layer.area_biases[k], loss) * scale
        errors.append(_relative_error((layer.area_weights[k] - probe.area_weights[k]) / lr, fd_w))
        errors.append(_relative_error((layer.area_biases[k] - probe.area_biases[k]) / lr, fd_b))
    return max(errors)


def _check_sal_output_exact(rng: Prng) -> float:
    """Single-area output layer must reproduce the BP gradient to round-off."""
    layer = _make_sal_layer(rng, is_output=True, n_areas=1)
    x, y = _toy_batch(rng)
    lr = 1e-3
    cache = layer.forward(x)
    grad_logits = softmax_ce_grad(cache.outputs, y)
    bp_w = x.T @ grad_logits
    bp_b = grad_logits.sum(axis=0)
    probe = copy.deepcopy(layer)
    probe.update(cache, grad_logits, y, lr_net=lr, lr_sel=0.0, local_weight=0.0)
    return max(_relative_error((layer.area_weights[0] - probe.area_weights[0]) / lr, bp_w),
               _relative_error((layer.area_biases[0] - probe.area_biases[0]) / lr, bp_b))


def _check_moe_layer(rng: Prng) -> float:
    """Gated-expert layer against finite differences, with routing pinned."""
    layer = MoeLayer(5, 3, n_experts=3, activation=Activation.TANH, rng=rng.child(0))
    x, y = _toy_batch(rng)
    lr = 1e-3
    selection = layer.forward(x).routing.selected.copy()

    def loss():
        return softmax_ce_loss(layer.forward(x, selection=selection).outputs, y)

    probe = copy.deepcopy(layer)
    cache = probe.forward(x, selection=selection)
    probe.backward(cache, softmax_ce_grad(cache.outputs, y), lr=lr)
    errors = [_relative_error((layer.gate - probe.gate) / lr, _finite_diff(layer.gate, loss))]
    for j in range(layer.n_experts):
        fd_w = _finite_diff(layer.expert_weights[j], loss)
        fd_b = _finite_diff(layer.expert_biases[j], loss)
        errors.append(_relative_error((layer.expert_weights[j] - probe.expert_weights[j]) / lr, fd_w))
        errors.append(_relative_error((layer.expert_biases[j] - probe.expert_biases[j]) / lr, fd_b))
    return max(errors)


def _check_moe_chain(rng: Prng) -> float:
    """Downstream error leaving a gated-expert layer, checked through a stack."""
    first = FcLayer(5, 4, Activation.TANH, rng.child(0))
    second = MoeLayer(4, 3, n_experts=3, activation=Activation.LINEAR, rng=rng.child(1))
    x, y = _toy_batch(rng)
    lr = 1e-3
    selection = second.forward(first.forward(x).outputs).routing.selected.copy()

    def loss():
        hidden = first.forward(x).outputs
        return softmax_ce_loss(second.forward(hidden, selection=selection).outputs, y)

    fd_w = _finite_diff(first.weights, loss)
    fd_b = _finite_diff(first.bias, loss)
    probe_first, probe_second = copy.deepcopy(first), copy.deepcopy(second)
    cache1 = probe_first.forward(x)
    cache2 = probe_second.forward(cache1.outputs, selection=selection)
    upstream = probe_second.backward(cache2, softmax_ce_grad(cache2.outputs, y), lr=lr)
    probe_first.backward(cache1, upstream, lr=lr)
    return max(_relative_error((first.weights - probe_first.weights) / lr, fd_w),
               _relative_error((first.bias - probe_first.bias) / lr, fd_b))


GRAD_CHECKS = (
    ("bp-network", _check_bp_network, 1e-4),
    ("sal-selector", _check_sal_selector, 1e-4),
    ("sal-local-term", _check_sal_local, 1e-4),
    ("sal-output-vs-bp", _check_sal_output_exact, 1e-8),
    ("moe-layer", _check_moe_layer, 1e-4),
    ("moe-chain", _check_moe_chain, 1e-4),
)


def grad_check_suite(seed: int = 7) -> list[GradCheckResult]:
    """Run every named gradient check; each uses its own child stream of `seed`."""
    results = []
    for i, (name, fn, tol) in enumerate(GRAD_CHECKS):
        rng = Prng(seed).child(i)
        results.append(GradCheckResult(name, fn(rng), tol))
    return results
