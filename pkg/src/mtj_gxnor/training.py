"""Quantized MLP training through the synapse-array model.

Each layer's weights live in a SynapseArray. The forward pass decodes row
currents to integer sums, the backward pass uses the inverse read, and
weight changes go through pulse-level stochastic device updates. Optimizer
math (ADAM or SGD) and integer biases stay in software.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .array import (BINARY_MODE, TERNARY_MODE, HardwareLaw, SoftwareLaw, SynapseArray,
                    UpdateStats, VariationSpec, apply_update, apply_variation, decode_row,
                    feedforward, transpose_product)
from .device import MtjDeviceParams
from .errors import MtjGxnorError, ParameterError, ShapeError, TrainingDivergedError
from .gxnor import (BINARY, DEFAULT_M, TERNARY, ActivationWindow, activate, project,
                    symmetric_grad)
from .perf import ARRAY_128, PowerProfile
from .rng import RngStreams

MODES = ("ternary", "binary", "bin-activation")
# fan_in: gain / sqrt(fan_in); layer: one scale per layer from sample statistics;
# neuron: per-neuron scale and mean shift from sample statistics
SCALE_MODES = ("fan_in", "layer", "neuron")


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    mode: 'ternary' (ternary weights and activations), 'binary' (binary
    weights on the one-MTJ array, sign activations) or 'bin-activation'
    (ternary weights, sign activations).
    """

    epochs: int = 10
    batch_size: int = 100
    lr: float = 0.01
    lr_decay: float = 0.1
    milestones: tuple = ()
    optimizer: str = "adam"
    scheme: str = "general"
    law: str = "hardware"
    m: float = DEFAULT_M
    seed: int = 0
    mode: str = "ternary"
    hidden: tuple = (512,)
    gain: float = 1.0
    scale_mode: str = "fan_in"
    calibrate_every: int = 0
    calibrate_samples: int = 1000
    use_bias: bool = True
    bias_lr_scale: float = 1.0
    input_encoding: str = "bipolar"
    window_r: float = 0.5
    window_a: float = 0.5
    leakage: float = 0.0
    routing: str = "state_aware"
    variation: VariationSpec = field(default_factory=VariationSpec)
    train_limit: int | None = None
    test_limit: int | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.scheme not in ("general", "sgd"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "sgd" and self.optimizer != "sgd":
            raise ParameterError("the in-array sgd scheme needs optimizer 'sgd'")
        if self.law not in ("hardware", "software"):
            raise ParameterError(f"unknown switching law {self.law!r}")
        if self.scale_mode not in SCALE_MODES:
            raise ParameterError(f"unknown scale mode {self.scale_mode!r}")
        if self.input_encoding not in ("bipolar", "unipolar"):
            raise ParameterError(f"unknown input encoding {self.input_encoding!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("epochs must be >= 0 and batch_size >= 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["hidden"] = list(self.hidden)
        return d


def config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    if "variation" in data and isinstance(data["variation"], dict):
        data["variation"] = VariationSpec(**data["variation"])
    for key in ("milestones", "hidden"):
        if key in data:
            data[key] = tuple(data[key])
    return TrainConfig(**data)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_decay ** sum(1 for m in cfg.milestones if epoch >= m)


# ---- network ----

@dataclass
class QuantLayer:
    array: SynapseArray
    space: object                 # activation space of this layer's output
    window: ActivationWindow
    bias: np.ndarray              # integer, software held
    scale: float | np.ndarray     # pre-activation = scale * (sum + bias - shift)
    is_output: bool = False
    shift: float | np.ndarray = 0.0

    @property
    def fan_in(self):
        return self.array.cols

    @property
    def fan_out(self):
        return self.array.rows


@dataclass
class Network:
    layers: list
    input_space: object
    use_bias: bool = True

    def weights(self):
        return [layer.array.weights() for layer in self.layers]


def build_network(cfg: TrainConfig, params: MtjDeviceParams | None = None,
                  streams: RngStreams | None = None, sizes=None) -> Network:
    params = MtjDeviceParams() if params is None else params
    streams = RngStreams(cfg.seed) if streams is None else streams
    sizes = [784, *cfg.hidden, 10] if sizes is None else list(sizes)
    array_mode = BINARY_MODE if cfg.mode == "binary" else TERNARY_MODE
    act_space = TERNARY if cfg.mode == "ternary" else BINARY
    window = ActivationWindow(cfg.window_r, cfg.window_a)
    init = streams["init"]
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        arr = SynapseArray(n_out, n_in, array_mode, params, cfg.leakage, cfg.routing)
        if array_mode == BINARY_MODE:
            arr.set_weights(init.choice(np.array([-1, 1]), (n_out, n_in)))
        else:
            arr.set_weights(init.integers(-1, 2, (n_out, n_in)))
        spec = cfg.variation
        if (spec.resistance_rsd > 0 or spec.theta0_rsd > 0
                or spec.temperature != params.temperature):
            arr = apply_variation(arr, spec, streams["variation"])
        layers.append(QuantLayer(arr, act_space, window, np.zeros(n_out, np.int64),
                                 cfg.gain / math.sqrt(n_in), k == len(sizes) - 2))
    return Network(layers, act_space, cfg.use_bias)


def calibrate_scales(net: Network, x, gain: float = 1.0, mode: str = "layer"):
    """Set the digital gain (and shift) of each layer from sample statistics.

    'layer' gives the layer's pre-activations std ``gain``; 'neuron' centres and
    scales each neuron separately. The values are held constant between
    calibrations and treated as constants by backprop.
    """
    u = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        sums = decode_row(feedforward(layer.array, u), layer.array) + layer.bias
        fallback = gain / math.sqrt(layer.fan_in)
        if mode == "neuron":
            spread = sums.std(axis=0)
            layer.scale = np.where(spread > 0, gain / np.where(spread > 0, spread, 1.0),
                                   fallback)
            layer.shift = sums.mean(axis=0)
        else:
            spread = float(np.std(sums))
            layer.scale = gain / spread if spread > 0 else fallback
        if not layer.is_output:
            pre = layer.scale * (sums - layer.shift)
            u = np.asarray(activate(layer.space, pre), dtype=np.float64)


def encode_inputs(x, cfg: TrainConfig, space=None) -> np.ndarray:
    """Quantize [-1, 1] pixels to the input activation space."""
    space = (TERNARY if cfg.mode == "ternary" else BINARY) if space is None else space
    if cfg.input_encoding == "unipolar":
        return (np.asarray(x) > 0).astype(np.float64)
    return np.asarray(activate(space, x), dtype=np.float64)


@dataclass
class ForwardCache:
    inputs: list
    pre: list


def forward(net: Network, x):
    """Forward pass on quantized inputs; returns (scores, cache)."""
    u = np.asarray(x, dtype=np.float64)
    if u.ndim == 1:
        u = u[None, :]
    if u.shape[1] != net.layers[0].fan_in:
        raise ShapeError(f"input width {u.shape[1]} != {net.layers[0].fan_in}")
    inputs, pres = [], []
    for layer in net.layers:
        sums = decode_row(feedforward(layer.array, u), layer.array)
        pre = layer.scale * (sums + layer.bias - layer.shift)
        inputs.append(u)
        pres.append(pre)
        if not layer.is_output:
            u = np.asarray(activate(layer.space, pre), dtype=np.float64)
    return pres[-1], ForwardCache(inputs, pres)


def hinge_loss(scores, labels, n_classes: int = 10):
    """Squared one-vs-all hinge with margin 1; returns (mean loss, d loss / d scores)."""
    target = -np.ones((len(labels), n_classes))
    target[np.arange(len(labels)), labels] = 1.0
    slack = np.maximum(0.0, 1.0 - target * scores)
    loss = float(np.sum(slack ** 2) / len(labels))
    return loss, -2.0 * target * slack / len(labels)


@dataclass
class Gradients:
    weights: list
    biases: list


def backward(net: Network, cache: ForwardCache | None, dscores) -> Gradients:
    """Backpropagate through the window derivative using inverse reads."""
    if cache is None or not cache.inputs:
        raise MtjGxnorError("backward needs the cache of a forward pass")
    delta = np.asarray(dscores, dtype=np.float64)
    gw, gb = [None] * len(net.layers), [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        dz = delta * layer.scale
        gw[k] = dz.T @ cache.inputs[k]
        gb[k] = dz.sum(axis=0)
        if k > 0:
            err = transpose_product(layer.array, dz)
            prev = net.layers[k - 1]
            delta = err * symmetric_grad(prev.window, cache.pre[k - 1])
    return Gradients(gw, gb)


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def deltas(self, grads: list, lr: float, tag: str = "w") -> list:
        if tag == "w":
            self.t += 1
        out = []
        for k, g in enumerate(grads):
            key = (tag, k)
            m = self.m.get(key, np.zeros_like(g))
            v = self.v.get(key, np.zeros_like(g))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[key], self.v[key] = m, v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            out.append(-lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


class Sgd:
    def deltas(self, grads: list, lr: float, tag: str = "w") -> list:
        return [-lr * g for g in grads]


def make_optimizer(cfg: TrainConfig):
    return Adam() if cfg.optimizer == "adam" else Sgd()


def make_law(cfg: TrainConfig):
    return HardwareLaw() if cfg.law == "hardware" else SoftwareLaw(cfg.m)


def step(net: Network, deltas: list, streams: RngStreams, law=None,
         scheme: str = "general") -> list:
    """Apply per-layer update matrices through the arrays; returns UpdateStats per layer."""
    law = HardwareLaw() if law is None else law
    return [apply_update(layer.array, d, streams, law, scheme, stream_prefix=f"layer{k}/")
            for k, (layer, d) in enumerate(zip(net.layers, deltas))]


def update_biases(net: Network, deltas: list, streams: RngStreams, m: float):
    if not net.use_bias:
        return
    rng = streams["bias"]
    for layer, d in zip(net.layers, deltas):
        layer.bias += project(TERNARY, d, m, rng=rng).delta_w.astype(np.int64)


def check_closure(net: Network):
    for k, layer in enumerate(net.layers):
        allowed = layer.array.space.states
        if not np.all(np.isin(layer.array.weights(), allowed)):
            raise MtjGxnorError(f"layer {k}: weight left the quantized space")


# ---- energy ----

@dataclass
class EnergyLog:
    """Accumulated active time per phase and the power each phase draws."""

    profile: PowerProfile = ARRAY_128
    time: dict = field(default_factory=lambda: {"feedforward": 0.0, "inverse_read": 0.0,
                                                "update": 0.0})

    def power(self, phase: str) -> float:
        return self.profile.update_power if phase == "update" else self.profile.read_power

    def add_reads(self, net: Network, samples: int, inverse: bool):
        p = self.profile
        for k, layer in enumerate(net.layers):
            tiles = math.ceil(layer.fan_out / p.rows) * math.ceil(layer.fan_in / p.cols)
            self.time["feedforward"] += samples * tiles * p.t_rd
            if inverse and k > 0:
                self.time["inverse_read"] += samples * tiles * p.t_rd

    def add_updates(self, net: Network, stats: list):
        p = self.profile
        for layer, st in zip(net.layers, stats):
            row_tiles = math.ceil(layer.fan_out / p.rows)
            self.time["update"] += st.windows * row_tiles * p.t_up

    def energy(self) -> dict:
        return {ph: self.power(ph) * t for ph, t in self.time.items()}

    def total(self) -> float:
        return sum(self.energy().values())


# ---- training loop ----

@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    test_acc: float
    switches: list
    windows: list
    energy_j: float


def evaluate(net: Network, x, labels, batch: int = 1000) -> float:
    correct = 0
    for i in range(0, len(labels), batch):
        scores, _ = forward(net, x[i:i + batch])
        correct += int(np.sum(np.argmax(scores, axis=1) == labels[i:i + batch]))
    return correct / max(len(labels), 1)


def prepare(cfg: TrainConfig, dataset):
    x = dataset.normalized()
    y = dataset.labels.astype(np.int64)
    return encode_inputs(x, cfg), y


def train(net: Network, train_set, test_set, cfg: TrainConfig,
          streams: RngStreams | None = None, on_epoch=None, energy: EnergyLog | None = None):
    """Run ``cfg.epochs`` epochs; returns the list of EpochMetrics.

    ``train_set`` / ``test_set`` are Dataset objects or (x_quantized, labels)
    tuples. ``on_epoch`` is called with each EpochMetrics as soon as it exists.
    """
    streams = RngStreams(cfg.seed) if streams is None else streams
    x_tr, y_tr = train_set if isinstance(train_set, tuple) else prepare(cfg, train_set)
    x_te, y_te = test_set if isinstance(test_set, tuple) else prepare(cfg, test_set)
    if cfg.train_limit:
        x_tr, y_tr = x_tr[:cfg.train_limit], y_tr[:cfg.train_limit]
    if cfg.test_limit:
        x_te, y_te = x_te[:cfg.test_limit], y_te[:cfg.test_limit]
    opt = make_optimizer(cfg)
    law = make_law(cfg)
    energy = EnergyLog() if energy is None else energy
    n_classes = net.layers[-1].fan_out
    history = []
    step_count = 0
    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at(cfg, epoch - 1)
        order = streams["shuffle"].permutation(len(y_tr))
        loss_sum, correct = 0.0, 0
        switches = [0] * len(net.layers)
        windows = [0] * len(net.layers)
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            if cfg.scale_mode != "fan_in" and (
                    step_count == 0 if cfg.calibrate_every <= 0
                    else step_count % cfg.calibrate_every == 0):
                # statistics of the samples about to be trained on
                sample = order[start:start + cfg.calibrate_samples]
                calibrate_scales(net, x_tr[sample], cfg.gain, cfg.scale_mode)
            step_count += 1
            if cfg.scheme == "sgd":
                stats, loss, hits = _sgd_batch(net, xb, yb, lr, streams, law, cfg, n_classes)
                energy.add_reads(net, len(idx), inverse=True)
            else:
                scores, cache = forward(net, xb)
                loss, dscores = hinge_loss(scores, yb, n_classes)
                hits = int(np.sum(np.argmax(scores, axis=1) == yb))
                grads = backward(net, cache, dscores)
                deltas = opt.deltas(grads.weights, lr)
                stats = step(net, deltas, streams, law, "general")
                if net.use_bias:
                    update_biases(net, opt.deltas(grads.biases, lr * cfg.bias_lr_scale, "b"),
                                  streams, cfg.m)
                energy.add_reads(net, len(idx), inverse=True)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            energy.add_updates(net, stats)
            loss_sum += loss * len(idx)
            correct += hits
            for k, st in enumerate(stats):
                switches[k] += st.switched
                windows[k] += st.windows
        check_closure(net)
        test_acc = evaluate(net, x_te, y_te) if len(y_te) else float("nan")
        m = EpochMetrics(epoch, lr, loss_sum / len(order), correct / len(order), test_acc,
                         switches, windows, energy.total())
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
    return history


def _sgd_batch(net, xb, yb, lr, streams, law, cfg, n_classes):
    """In-array SGD: one outer-product update per sample, all columns in parallel."""
    total = [UpdateStats() for _ in net.layers]
    loss_sum, hits = 0.0, 0
    for i in range(len(yb)):
        scores, cache = forward(net, xb[i:i + 1])
        loss, dscores = hinge_loss(scores, yb[i:i + 1], n_classes)
        loss_sum += loss
        hits += int(np.argmax(scores[0]) == yb[i])
        grads = backward(net, cache, dscores)
        stats = step(net, [-lr * g for g in grads.weights], streams, law, "sgd")
        if net.use_bias:
            update_biases(net, [-lr * cfg.bias_lr_scale * g for g in grads.biases], streams,
                          cfg.m)
        for t, s in zip(total, stats):
            t.merge(s)
    return total, loss_sum / len(yb), hits


# ---- metrics output ----

def metrics_csv(history, n_layers: int | None = None) -> str:
    n_layers = len(history[0].switches) if n_layers is None and history else (n_layers or 0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["epoch", "lr", "loss", "train_acc", "test_acc"]
                    + [f"switches_layer{k}" for k in range(n_layers)]
                    + [f"windows_layer{k}" for k in range(n_layers)] + ["energy_j"])
    for m in history:
        writer.writerow([m.epoch, f"{m.lr:.10g}", f"{m.loss:.10g}", f"{m.train_acc:.10g}",
                         f"{m.test_acc:.10g}", *m.switches, *m.windows, f"{m.energy_j:.10g}"])
    return buf.getvalue()


def summary(history, cfg: TrainConfig, energy: EnergyLog | None = None) -> dict:
    out = {"config": cfg.as_dict(), "epochs": len(history)}
    if history:
        last = history[-1]
        out.update(final_test_acc=last.test_acc, final_train_acc=last.train_acc,
                   final_loss=last.loss, best_test_acc=max(m.test_acc for m in history))
    if energy is not None:
        out["energy_j"] = energy.energy()
        out["phase_time_s"] = dict(energy.time)
    return out


def run_training(cfg: TrainConfig, train_set, test_set, params: MtjDeviceParams | None = None,
                 on_epoch=None):
    """Build a network from ``cfg`` and train it; returns (net, history, energy)."""
    streams = RngStreams(cfg.seed)
    net = build_network(cfg, params, streams)
    energy = EnergyLog()
    history = train(net, train_set, test_set, cfg, streams, on_epoch, energy)
    return net, history, energy
