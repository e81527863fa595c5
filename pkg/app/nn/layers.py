"""Stateful layer objects wrapping the kernels in `app.nn.functional`."""

from typing import Any, Optional

import numpy as np

from app.errors import ContractError
from app.nn import functional as F


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype: Any) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base layer: parameters/gradients keyed by name, plus saved forward context."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.training = True
        self._ctx: Any = None
        self._called = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _saved(self) -> Any:
        if not self._called:
            raise ContractError(f"{type(self).__name__}.backward called before forward")
        return self._ctx

    def _save(self, ctx: Any) -> None:
        self._ctx = ctx
        self._called = True


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator, dtype: Any = np.float32):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.params["weight"] = he_uniform((out_channels, in_channels, kernel_size, kernel_size), fan_in, rng, dtype)
        self.params["bias"] = np.zeros(out_channels, dtype=dtype)

    def forward(self, x):
        out, ctx = F.conv2d_forward(x, self.params["weight"], self.params["bias"])
        self._save(ctx)
        return out

    def backward(self, grad_out):
        grad_x, self.grads["weight"], self.grads["bias"] = F.conv2d_backward(grad_out, self._saved())
        return grad_x


class Activation(Layer):
    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def forward(self, x):
        out, ctx = F.activation_forward(x, self.name)
        self._save(ctx)
        return out

    def backward(self, grad_out):
        return F.activation_backward(grad_out, self._saved())


class MaxPool2x2(Layer):
    def forward(self, x):
        out, ctx = F.maxpool2x2_forward(x)
        self._save(ctx)
        return out

    def backward(self, grad_out):
        return F.maxpool2x2_backward(grad_out, self._saved())


class BatchNorm2d(Layer):
    def __init__(self, channels: int, dtype: Any = np.float32):
        super().__init__()
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x):
        out, ctx = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"], self.training,
        )
        self._save(ctx)
        return out

    def backward(self, grad_out):
        grad_x, self.grads["gamma"], self.grads["beta"] = F.batchnorm_backward(grad_out, self._saved())
        return grad_x


class AdaptiveAvgPool2d(Layer):
    def __init__(self, out_size: int):
        super().__init__()
        self.out_size = out_size

    def forward(self, x):
        out, ctx = F.adaptive_avgpool_forward(x, self.out_size)
        self._save(ctx)
        return out

    def backward(self, grad_out):
        return F.adaptive_avgpool_backward(grad_out, self._saved())


class Flatten(Layer):
    def forward(self, x):
        self._save(x.shape)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._saved())


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype: Any = np.float32):
        super().__init__()
        self.params["weight"] = he_uniform((out_features, in_features), in_features, rng, dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x):
        out, ctx = F.linear_forward(x, self.params["weight"], self.params["bias"])
        self._save(ctx)
        return out

    def backward(self, grad_out):
        grad_x, self.grads["weight"], self.grads["bias"] = F.linear_backward(grad_out, self._saved())
        return grad_x


class Dropout(Layer):
    """
    Inverted dropout drawing masks from the owning network's rng.

    With `frozen` set, the last train-mode mask is reused; gradient checks rely on this.
    """

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng
        self.frozen = False
        self._mask: Optional[np.ndarray] = None

    def forward(self, x):
        if not self.training or self.p == 0:
            mask = None
        elif self.frozen and self._mask is not None and self._mask.shape == x.shape:
            mask = self._mask
        else:
            mask = F.dropout_mask(x.shape, self.p, self.rng, x.dtype)
        self._mask = mask if mask is not None else self._mask
        out, ctx = F.dropout_forward(x, mask)
        self._save(ctx)
        return out

    def backward(self, grad_out):
        return F.dropout_backward(grad_out, self._saved())
