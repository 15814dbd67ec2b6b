"""Software-only reference trainer.

Same network, loss and optimizer as the array trainer, but weights are plain
integer matrices updated with the discrete projection. Random draws come
from the same named streams in the same order, so with ideal devices and the
software switching law the two trainers follow identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np

from .gxnor import BINARY, TERNARY, ActivationWindow, activate, bound_update, project, symmetric_grad
from .rng import RngStreams


class ReferenceNet:
    def __init__(self, cfg, sizes=None, streams: RngStreams | None = None):
        self.cfg = cfg
        self.streams = RngStreams(cfg.seed) if streams is None else streams
        sizes = [784, *cfg.hidden, 10] if sizes is None else list(sizes)
        self.weight_space = BINARY if cfg.mode == "binary" else TERNARY
        self.act_space = TERNARY if cfg.mode == "ternary" else BINARY
        self.window = ActivationWindow(cfg.window_r, cfg.window_a)
        init = self.streams["init"]
        self.w, self.b, self.scale, self.shift = [], [], [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            if cfg.mode == "binary":
                w = init.choice(np.array([-1, 1]), (n_out, n_in))
            else:
                w = init.integers(-1, 2, (n_out, n_in))
            self.w.append(w.astype(np.int64))
            self.b.append(np.zeros(n_out, np.int64))
            self.scale.append(cfg.gain / math.sqrt(n_in))
            self.shift.append(0.0)
        self.adam_t = 0
        self.moments = {}

    def calibrate(self, x):
        gain = self.cfg.gain
        u = np.asarray(x, dtype=np.float64)
        for k, w in enumerate(self.w):
            s = u @ w.T + self.b[k]
            if self.cfg.scale_mode == "neuron":
                sd = s.std(axis=0)
                self.scale[k] = np.array([gain / v if v > 0 else gain / math.sqrt(w.shape[1])
                                          for v in sd])
                self.shift[k] = s.mean(axis=0)
            else:
                spread = float(np.std(s))
                self.scale[k] = gain / spread if spread > 0 else gain / math.sqrt(w.shape[1])
            if k < len(self.w) - 1:
                u = np.asarray(activate(self.act_space, self.scale[k] * (s - self.shift[k])),
                               dtype=np.float64)

    def forward(self, x):
        u = np.asarray(x, dtype=np.float64)
        ins, pres = [], []
        for k, w in enumerate(self.w):
            pre = self.scale[k] * (u @ w.T + self.b[k] - self.shift[k])
            ins.append(u)
            pres.append(pre)
            if k < len(self.w) - 1:
                u = np.asarray(activate(self.act_space, pre), dtype=np.float64)
        return pres[-1], ins, pres

    def _adam(self, key, g, lr):
        b1, b2, eps = 0.9, 0.999, 1e-8
        m, v = self.moments.get(key, (np.zeros_like(g), np.zeros_like(g)))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        self.moments[key] = (m, v)
        return -lr * (m / (1 - b1 ** self.adam_t)) / (np.sqrt(v / (1 - b2 ** self.adam_t)) + eps)

    def train_batch(self, x, labels, lr):
        scores, ins, pres = self.forward(x)
        n = len(labels)
        target = -np.ones_like(scores)
        target[np.arange(n), labels] = 1.0
        slack = np.maximum(0.0, 1.0 - target * scores)
        delta = -2.0 * target * slack / n
        gw, gb = [None] * len(self.w), [None] * len(self.w)
        for k in range(len(self.w) - 1, -1, -1):
            dz = delta * self.scale[k]
            gw[k] = dz.T @ ins[k]
            gb[k] = dz.sum(axis=0)
            if k > 0:
                delta = (dz @ self.w[k]) * symmetric_grad(self.window, pres[k - 1])
        if self.cfg.optimizer == "adam":
            self.adam_t += 1
            dw = [self._adam(("w", k), g, lr) for k, g in enumerate(gw)]
            db = [self._adam(("b", k), g, lr * self.cfg.bias_lr_scale) for k, g in enumerate(gb)]
        else:
            dw = [-lr * g for g in gw]
            db = [-lr * self.cfg.bias_lr_scale * g for g in gb]
        for k, d in enumerate(dw):
            u = self.streams[f"layer{k}/update_nu"].random(d.shape)
            bounded = bound_update(self.w[k], d)
            step = project(self.weight_space, bounded, self.cfg.m, uniforms=u).delta_w
            self.w[k] = (self.w[k] + step).astype(np.int64)
        if self.cfg.use_bias:
            rng = self.streams["bias"]
            for k, d in enumerate(db):
                self.b[k] = self.b[k] + project(TERNARY, d, self.cfg.m, rng=rng).delta_w.astype(np.int64)
        return scores

    def accuracy(self, x, labels):
        return float(np.mean(np.argmax(self.forward(x)[0], axis=1) == labels))


def reference_train(cfg, x_train, y_train, sizes=None):
    """Train on pre-encoded inputs; returns the ReferenceNet and per-epoch weight snapshots."""
    net = ReferenceNet(cfg, sizes)
    snapshots = []
    n_steps = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay ** sum(1 for m in cfg.milestones if epoch >= m)
        order = net.streams["shuffle"].permutation(len(y_train))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            every = cfg.calibrate_every
            if cfg.scale_mode != "fan_in" and (n_steps % every == 0 if every > 0
                                               else n_steps == 0):
                net.calibrate(x_train[order[start:start + cfg.calibrate_samples]])
            n_steps += 1
            net.train_batch(x_train[idx], y_train[idx], lr)
        snapshots.append([w.copy() for w in net.w])
    return net, snapshots
