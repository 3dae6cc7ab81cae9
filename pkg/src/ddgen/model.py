"""The trainable scalar dual function over images.

A fully connected net on flattened pixels, float64 throughout, with optional
step conditioning (one extra input scalar step/(k-1)), an EMA shadow of the
parameters, and global-norm gradient clipping. Parameter gradients come from
the reverse-mode tape in :mod:`ddgen.autodiff`; input gradients are
hand-rolled backprop for speed.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff
from .autodiff import Var
from .errors import ArgumentError, FormatError, InputError, ShapeError, TrainingError

DDM_MAGIC = b"DDM1"
FORMAT_VERSION = 1

ACT_TANH = "tanh"
ACT_SOFTPLUS = "softplus"


@dataclass
class ModelConfig:
    hidden_dims: tuple[int, ...] = (128, 64)
    activation: str = ACT_TANH
    step_conditioned: bool = True
    init_scale: float | None = None  # None: per-layer 1/sqrt(fan_in)
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ArgumentError("hidden_dims must be non-empty positive integers")
        if self.activation not in (ACT_TANH, ACT_SOFTPLUS):
            raise ArgumentError(f"unknown activation {self.activation!r}")
        if self.init_scale is not None and self.init_scale <= 0.0:
            raise ArgumentError("init_scale must be > 0")


class DualFunctionModel:
    """Scalar-valued MLP f(x) or f(x, step) over rows x cols images."""

    def __init__(self, config: ModelConfig, rows: int, cols: int, path_steps: int,
                 weights: list[np.ndarray], biases: list[np.ndarray],
                 ema_weights: list[np.ndarray], ema_biases: list[np.ndarray]):
        self.config = config
        self.rows = rows
        self.cols = cols
        self.path_steps = path_steps
        self.weights = weights
        self.biases = biases
        self.ema_weights = ema_weights
        self.ema_biases = ema_biases
        # Adam state, created lazily on the first training step
        self._opt_m: list[np.ndarray] | None = None
        self._opt_v: list[np.ndarray] | None = None
        self._opt_t = 0

    # ---- construction ----

    @classmethod
    def create(cls, config: ModelConfig, rows: int, cols: int, path_steps: int = 1) -> "DualFunctionModel":
        if rows < 1 or cols < 1 or path_steps < 1:
            raise ArgumentError("rows, cols and path_steps must be >= 1")
        input_dim = rows * cols + (1 if config.step_conditioned else 0)
        dims = [input_dim, *config.hidden_dims, 1]
        rng = np.random.default_rng(config.seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = config.init_scale if config.init_scale is not None else 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-scale, scale, size=(fan_out,)))
        ema_w = [w.copy() for w in weights]
        ema_b = [b.copy() for b in biases]
        return cls(config, rows, cols, path_steps, weights, biases, ema_w, ema_b)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "DualFunctionModel":
        return DualFunctionModel(
            replace(self.config), self.rows, self.cols, self.path_steps,
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            [w.copy() for w in self.ema_weights], [b.copy() for b in self.ema_biases],
        )

    def ema_model(self) -> "DualFunctionModel":
        """A copy whose live parameters are the EMA shadow."""
        m = self.copy()
        m.weights = [w.copy() for w in self.ema_weights]
        m.biases = [b.copy() for b in self.ema_biases]
        return m

    # ---- forward / gradients ----

    def _prepare_input(self, images: np.ndarray, step: int | None) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.rows or x.shape[2] != self.cols:
            raise ShapeError(f"expected images of shape (n, {self.rows}, {self.cols}), got {x.shape}")
        if x.shape[0] == 0:
            raise ArgumentError("images must be non-empty")
        if not np.isfinite(x).all():
            raise InputError("non-finite image input")
        flat = x.reshape(x.shape[0], -1)
        if self.config.step_conditioned:
            if step is None:
                raise ArgumentError("step-conditioned model requires a step")
            if not 0 <= step <= self.path_steps - 1:
                raise ArgumentError(f"step {step} outside [0, {self.path_steps - 1}]")
            s = step / (self.path_steps - 1) if self.path_steps > 1 else 0.0
            flat = np.concatenate([flat, np.full((flat.shape[0], 1), s)], axis=1)
        return flat

    def _activation(self, z: np.ndarray) -> np.ndarray:
        if self.config.activation == ACT_TANH:
            return np.tanh(z)
        return np.logaddexp(0.0, z)

    def _activation_grad(self, z: np.ndarray) -> np.ndarray:
        if self.config.activation == ACT_TANH:
            t = np.tanh(z)
            return 1.0 - t * t
        return np.exp(z - np.logaddexp(0.0, z))

    def forward(self, images: np.ndarray, step: int | None = None) -> np.ndarray:
        """f per image: shape (n,)."""
        h = self._prepare_input(images, step)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = self._activation(h)
        return h[:, 0]

    def penultimate(self, images: np.ndarray, step: int | None = None) -> np.ndarray:
        """Activations of the last hidden layer: shape (n, hidden_dims[-1])."""
        h = self._prepare_input(images, step)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = self._activation(h @ w + b)
        return h

    def grad_input(self, images: np.ndarray, step: int | None = None) -> np.ndarray:
        """Exact df/dx per pixel, same shape as the input (batch supported)."""
        arr = np.asarray(images, dtype=np.float64)
        squeeze = arr.ndim == 2
        h = self._prepare_input(arr, step)
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                pre.append(z)
                h = self._activation(z)
            else:
                h = z
        g = np.ones((h.shape[0], 1))
        for i in range(last, -1, -1):
            g = g @ self.weights[i].T
            if i > 0:
                g = g * self._activation_grad(pre[i - 1])
        if self.config.step_conditioned:
            g = g[:, :-1]
        g = g.reshape(-1, self.rows, self.cols)
        return g[0] if squeeze else g

    def forward_tape(self, images: np.ndarray, step: int | None,
                     w_vars: list[Var], b_vars: list[Var]) -> Var:
        """Forward pass on the autodiff tape; returns a (n,) Var."""
        h = Var(self._prepare_input(images, step))
        last = len(w_vars) - 1
        for i, (w, b) in enumerate(zip(w_vars, b_vars)):
            h = h.matmul(w) + b
            if i < last:
                h = h.tanh() if self.config.activation == ACT_TANH else h.softplus()
        return h.reshape(-1)

    # ---- training step ----

    def grad_params_and_step(self, loss_closure, learning_rate: float, clip_norm: float,
                             ema_decay: float = 0.999) -> float:
        """One clipped Adam step on the scalar loss.

        `loss_closure(fwd)` must return a scalar Var built from calls to
        `fwd(images, step)`. The global gradient norm is clipped to
        `clip_norm` before the Adam update (clip_norm 0 freezes the
        parameters); the EMA shadow then moves toward the live parameters.
        Returns the pre-clip global gradient norm.
        """
        w_vars = [Var(w) for w in self.weights]
        b_vars = [Var(b) for b in self.biases]

        def fwd(images, step=None):
            return self.forward_tape(images, step, w_vars, b_vars)

        loss = loss_closure(fwd)
        if not np.isfinite(loss.value).all():
            raise TrainingError(f"non-finite training loss: {loss.value}")
        autodiff.backward(loss)
        grads = [v.grad for v in w_vars] + [v.grad for v in b_vars]
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        scale = 1.0 if norm <= clip_norm else clip_norm / norm
        if clip_norm == 0.0:
            scale = 0.0

        params = self.weights + self.biases
        if self._opt_m is None:
            self._opt_m = [np.zeros_like(p) for p in params]
            self._opt_v = [np.zeros_like(p) for p in params]
        self._opt_t += 1
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        bc1 = 1.0 - beta1 ** self._opt_t
        bc2 = 1.0 - beta2 ** self._opt_t
        step_size = learning_rate * scale
        for p, g, m1, m2 in zip(params, grads, self._opt_m, self._opt_v):
            g = g * scale
            m1 *= beta1
            m1 += (1.0 - beta1) * g
            m2 *= beta2
            m2 += (1.0 - beta2) * g * g
            if step_size != 0.0:
                p -= learning_rate * (m1 / bc1) / (np.sqrt(m2 / bc2) + eps)
        for ema, live in zip(self.ema_weights + self.ema_biases, params):
            ema *= ema_decay
            ema += (1.0 - ema_decay) * live
        return norm

    # ---- serialization ----

    def save(self, path) -> None:
        header_lines = [
            f"version={FORMAT_VERSION}",
            f"rows={self.rows}",
            f"cols={self.cols}",
            f"path_steps={self.path_steps}",
            "hidden_dims=" + ",".join(str(h) for h in self.config.hidden_dims),
            f"activation={self.config.activation}",
            f"step_conditioned={int(self.config.step_conditioned)}",
            f"init_scale={'auto' if self.config.init_scale is None else repr(self.config.init_scale)}",
            f"seed={self.config.seed}",
        ]
        header = "\n".join(header_lines).encode("utf-8")
        buf = io.BytesIO()
        buf.write(DDM_MAGIC)
        buf.write(struct.pack("<I", len(header)))
        buf.write(header)
        for group in (zip(self.weights, self.biases), zip(self.ema_weights, self.ema_biases)):
            for w, b in group:
                buf.write(w.astype("<f8").tobytes())
                buf.write(b.astype("<f8").tobytes())
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "DualFunctionModel":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != DDM_MAGIC:
            raise FormatError(f"{path}: bad magic {blob[:4]!r} at byte offset 0, expected {DDM_MAGIC!r}")
        if len(blob) < 8:
            raise FormatError(f"{path}: truncated at byte offset {len(blob)}, header length missing")
        (hlen,) = struct.unpack("<I", blob[4:8])
        if len(blob) < 8 + hlen:
            raise FormatError(f"{path}: truncated header, expected {8 + hlen} bytes, found {len(blob)}")
        fields = {}
        for line in blob[8 : 8 + hlen].decode("utf-8").splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            rows, cols = int(fields["rows"]), int(fields["cols"])
            path_steps = int(fields["path_steps"])
            hidden = tuple(int(h) for h in fields["hidden_dims"].split(","))
            config = ModelConfig(
                hidden_dims=hidden,
                activation=fields["activation"],
                step_conditioned=bool(int(fields["step_conditioned"])),
                init_scale=None if fields["init_scale"] == "auto" else float(fields["init_scale"]),
                seed=int(fields["seed"]),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: bad header field: {exc}") from None
        model = cls.create(config, rows, cols, path_steps)
        offset = 8 + hlen
        for group in ((model.weights, model.biases), (model.ema_weights, model.ema_biases)):
            for w, b in zip(*group):
                for arr in (w, b):
                    nbytes = arr.size * 8
                    if len(blob) < offset + nbytes:
                        raise FormatError(
                            f"{path}: truncated parameters at byte offset {offset}, "
                            f"expected {nbytes} more bytes, found {len(blob) - offset}"
                        )
                    arr[...] = np.frombuffer(blob, dtype="<f8", count=arr.size, offset=offset).reshape(arr.shape)
                    offset += nbytes
        if offset != len(blob):
            raise FormatError(f"{path}: {len(blob) - offset} trailing bytes at offset {offset}")
        return model
