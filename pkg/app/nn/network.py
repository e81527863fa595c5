"""The fixed four-conv / two-FC classifier built from a ModelSpec."""

import json
import logging
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from app.errors import InvalidDataError, ShapeError
from app.models import ModelSpec
from app.nn.functional import softmax, softmax_cross_entropy
from app.nn.layers import (
    Activation,
    AdaptiveAvgPool2d,
    BatchNorm2d,
    Conv2d,
    Dropout,
    Flatten,
    Layer,
    Linear,
    MaxPool2x2,
)
from app.nn.optim import AdamState, adam_step

logger = logging.getLogger(__name__)

WEIGHTS_FORMAT = "cnn-ga-weights/1"


def build_layers(spec: ModelSpec, rng: np.random.Generator, dtype: Any) -> list[Layer]:
    """conv -> activation -> maxpool -> batchnorm (x4), avgpool, flatten, (linear -> act -> dropout) x2, head."""
    layers: list[Layer] = []
    for block in spec.conv_blocks:
        layers += [
            Conv2d(block.in_channels, block.out_channels, block.kernel_size, rng, dtype),
            Activation(block.activation),
            MaxPool2x2(),
            BatchNorm2d(block.out_channels, dtype),
        ]
    layers += [AdaptiveAvgPool2d(spec.pool_output), Flatten()]
    for block in spec.fc_blocks:
        layers += [
            Linear(block.in_features, block.out_features, rng, dtype),
            Activation(block.activation),
            Dropout(block.dropout_rate, rng),
        ]
    layers.append(Linear(spec.head.in_features, spec.head.out_features, rng, dtype))
    return layers


def parameter_count(spec: ModelSpec) -> int:
    """Closed-form trainable parameter count of the network built from `spec`."""
    total = 0
    for block in spec.conv_blocks:
        total += block.out_channels * block.in_channels * block.kernel_size ** 2 + block.out_channels
        total += 2 * block.out_channels
    for block in spec.fc_blocks:
        total += block.in_features * block.out_features + block.out_features
    total += spec.head.in_features * spec.head.out_features + spec.head.out_features
    return total


class Network:
    """
    Classifier with hand-written backprop.

    One instance is not safe for concurrent use: parameters, batchnorm statistics and the
    dropout rng are all mutated in place.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0, dtype: Any = np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.layers = build_layers(spec, self.rng, self.dtype)
        self.training = True

    def train(self) -> "Network":
        return self._set_mode(True)

    def eval(self) -> "Network":
        return self._set_mode(False)

    def _set_mode(self, training: bool) -> "Network":
        self.training = training
        for layer in self.layers:
            layer.training = training
        return self

    def freeze_dropout(self, frozen: bool = True) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.frozen = frozen

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", value

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, value in layer.buffers.items():
                yield f"{i}.{name}", value

    def named_gradients(self) -> dict[str, np.ndarray]:
        return {f"{i}.{name}": g for i, layer in enumerate(self.layers) for name, g in layer.grads.items()}

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def logits(self, x: np.ndarray) -> np.ndarray:
        first = self.spec.conv_blocks[0].in_channels
        if x.ndim != 4 or x.shape[1] != first:
            raise ShapeError(f"network expects N x {first} x H x W input, got {x.shape}")
        out = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities, N x 2."""
        return softmax(self.logits(x))

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        grad = grad_logits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def train_batch(
        self, x: np.ndarray, y: np.ndarray, class_weights: np.ndarray, adam: AdamState, lr: float
    ) -> float:
        """Forward in train mode, weighted CE, full backward, one Adam step; returns the loss."""
        self.train()
        loss, grad = softmax_cross_entropy(self.logits(x), y, class_weights)
        self.backward(grad)
        adam_step(dict(self.named_parameters()), self.named_gradients(), adam, lr)
        return loss

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Eval-mode argmax labels; exact probability ties resolve to class 0."""
        self.eval()
        labels = [self.forward(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)

    def _tensors(self) -> list[tuple[str, np.ndarray]]:
        return list(self.named_parameters()) + list(self.named_buffers())

    def save_weights(self, path: Path) -> None:
        """JSON header line with names and shapes, then little-endian float32 data in layer order."""
        tensors = self._tensors()
        header = {
            "format": WEIGHTS_FORMAT,
            "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
        }
        with open(path, "wb") as f:
            f.write((json.dumps(header) + "\n").encode("utf-8"))
            for _, t in tensors:
                f.write(t.astype("<f4").tobytes())
        logger.info(f"saved {len(tensors)} tensors to {path}")

    def load_weights(self, path: Path) -> None:
        with open(path, "rb") as f:
            try:
                header = json.loads(f.readline().decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise InvalidDataError(f"{path}: unreadable weights header") from e
            payload = f.read()
        if header.get("format") != WEIGHTS_FORMAT:
            raise InvalidDataError(f"{path}: unknown weights format {header.get('format')!r}")
        tensors = self._tensors()
        expected = [{"name": name, "shape": list(t.shape)} for name, t in tensors]
        if header.get("tensors") != expected:
            raise ShapeError(f"{path}: weights do not match this architecture")
        data = np.frombuffer(payload, dtype="<f4")
        if data.size != sum(t.size for _, t in tensors):
            raise InvalidDataError(f"{path}: truncated weights payload")
        offset = 0
        for _, t in tensors:
            t[...] = data[offset:offset + t.size].reshape(t.shape)
            offset += t.size
