"""Feed-forward correction network in plain numpy."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from ..core import DEFAULT_CONSTANTS, N_ADVISORIES
from .state import DEST_DIM, SUBSTATE_DIM, BuilderKind, state_dim

CHECKPOINT_VERSION = 1


class CorrectionNetwork:
    """ReLU MLP mapping a normalized correction state to six advisory values.

    Parameters live in ``weights[i]`` of shape (fan_in, fan_out) and
    ``biases[i]``. With ``zero_output`` the last layer starts at zero, so a
    fresh network leaves the low-fidelity Q-values untouched.
    """

    def __init__(self, n_slots=4, hidden=(64, 64), builder_kind=BuilderKind.CLOSEST, seed=0,
                 zero_output=True, sensing_range=DEFAULT_CONSTANTS.sensing_range,
                 cruise_speed=DEFAULT_CONSTANTS.cruise_speed):
        self.n_slots = int(n_slots)
        self.builder_kind = BuilderKind(builder_kind)
        self.layer_sizes = [state_dim(self.n_slots), *map(int, hidden), N_ADVISORIES]
        self.sensing_range = float(sensing_range)
        self.cruise_speed = float(cruise_speed)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if zero_output and i == len(self.layer_sizes) - 2:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = math.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_scale(self):
        sub = [1 / self.sensing_range, 1 / math.pi, 1 / math.pi, 1 / self.cruise_speed, 1 / self.cruise_speed]
        return np.array(sub * self.n_slots + [1 / math.pi, 1 / self.sensing_range, 1 / self.sensing_range])

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        other = object.__new__(CorrectionNetwork)
        other.__dict__.update(self.__dict__)
        other.layer_sizes = list(self.layer_sizes)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def load_params_from(self, other):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected {self.layer_sizes[0]} inputs, got {X.shape[1]}")
        h = X * self.input_scale
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def forward(self, X):
        """Correction values; a single state gives a 6-vector, a batch (m, 6)."""
        for p in self.params:
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("correction network has non-finite parameters")
        single = np.asarray(X).ndim == 1
        out, _ = self._forward(X)
        return out[0] if single else out

    __call__ = forward

    def gradients(self, X, grad_out):
        """Backpropagate ``grad_out`` (m, 6) to parameter gradients (same order as ``params``)."""
        _, acts = self._forward(X)
        g = np.asarray(grad_out, dtype=float)
        n = len(self.weights)
        gw, gb = [None] * n, [None] * n
        for i in reversed(range(n)):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return [x for pair in zip(gw, gb) for x in pair]

    def to_dict(self):
        return {
            "format_version": CHECKPOINT_VERSION,
            "builder_kind": self.builder_kind.value,
            "N": self.n_slots,
            "layer_sizes": list(self.layer_sizes),
            "normalization": {"sensing_range": self.sensing_range, "cruise_speed": self.cruise_speed},
            "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('format_version')}")
        sizes = d["layer_sizes"]
        net = cls(d["N"], sizes[1:-1], d["builder_kind"], zero_output=True,
                  sensing_range=d["normalization"]["sensing_range"],
                  cruise_speed=d["normalization"]["cruise_speed"])
        if net.layer_sizes != sizes:
            raise ValueError("layer sizes do not match the declared slot count")
        for i, layer in enumerate(d["layers"]):
            w = np.asarray(layer["weight"], dtype=float)
            b = np.asarray(layer["bias"], dtype=float)
            if w.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise ValueError(f"layer {i} has the wrong shape")
            net.weights[i], net.biases[i] = w, b
        return net

    def save(self, path):
        path = os.fspath(path)
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def forward(net, s):
    vec = s.to_vector() if hasattr(s, "to_vector") else s
    return net.forward(vec)


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr=1e-4):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g
