"""Central finite-difference checks for every layer kernel and the composed network."""

import logging
from typing import Callable, Optional

import numpy as np

from app.models import ConvBlock, FcBlock, GradCheckResult, HeadSpec, ModelSpec
from app.nn import functional as F
from app.nn.network import Network

logger = logging.getLogger(__name__)

EPS = 1e-5
LAYER_TOLERANCE = 1e-6
NETWORK_TOLERANCE = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise: max|a - n| / max(max|a|, max|n|)."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_gradient(
    loss: Callable[[], float],
    array: np.ndarray,
    indices: Optional[np.ndarray] = None,
    eps: float = EPS,
) -> np.ndarray:
    """Central differences of `loss` w.r.t. the given flat entries of `array` (perturbed in place)."""
    flat = array.reshape(-1)
    indices = np.arange(flat.size) if indices is None else indices
    grads = np.empty(len(indices), dtype=np.float64)
    for out, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + eps
        plus = loss()
        flat[i] = original - eps
        minus = loss()
        flat[i] = original
        grads[out] = (plus - minus) / (2 * eps)
    return grads


def _check(
    name: str,
    loss: Callable[[], float],
    analytic: dict[str, np.ndarray],
    inputs: dict[str, np.ndarray],
    tolerance: float,
    rng: Optional[np.random.Generator] = None,
    max_entries: Optional[int] = None,
) -> GradCheckResult:
    worst = 0.0
    for key, array in inputs.items():
        indices = None
        if rng is not None and max_entries is not None and array.size > max_entries:
            indices = rng.choice(array.size, size=max_entries, replace=False)
        numeric = numeric_gradient(loss, array, indices)
        expected = analytic[key].reshape(-1)
        expected = expected if indices is None else expected[indices]
        worst = max(worst, relative_error(expected, numeric))
    result = GradCheckResult(name=name, max_relative_error=worst, tolerance=tolerance)
    logger.debug(f"gradcheck {name}: {worst:.3e}")
    return result


def check_conv2d(rng: np.random.Generator) -> GradCheckResult:
    x = rng.standard_normal((2, 3, 6, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    r = rng.standard_normal((2, 4, 6, 5))
    loss = lambda: float((F.conv2d_forward(x, w, b)[0] * r).sum())
    _, ctx = F.conv2d_forward(x, w, b)
    gx, gw, gb = F.conv2d_backward(r, ctx)
    return _check("conv2d", loss, {"x": gx, "w": gw, "b": gb}, {"x": x, "w": w, "b": b}, LAYER_TOLERANCE)


def check_maxpool(rng: np.random.Generator) -> GradCheckResult:
    x = rng.standard_normal((2, 3, 7, 6))
    r = rng.standard_normal((2, 3, 3, 3))
    loss = lambda: float((F.maxpool2x2_forward(x)[0] * r).sum())
    _, ctx = F.maxpool2x2_forward(x)
    return _check("maxpool2x2", loss, {"x": F.maxpool2x2_backward(r, ctx)}, {"x": x}, LAYER_TOLERANCE)


def check_batchnorm(rng: np.random.Generator, training: bool = True) -> GradCheckResult:
    x = rng.standard_normal((3, 4, 5, 5)) * 2 + 1
    gamma = rng.standard_normal(4)
    beta = rng.standard_normal(4)
    running_mean = rng.standard_normal(4)
    running_var = rng.uniform(0.5, 2.0, 4)
    r = rng.standard_normal(x.shape)

    def forward():
        return F.batchnorm_forward(x, gamma, beta, running_mean.copy(), running_var.copy(), training)

    loss = lambda: float((forward()[0] * r).sum())
    gx, gg, gb = F.batchnorm_backward(r, forward()[1])
    name = "batchnorm" if training else "batchnorm-eval"
    return _check(name, loss, {"x": gx, "gamma": gg, "beta": gb}, {"x": x, "gamma": gamma, "beta": beta}, LAYER_TOLERANCE)


def check_adaptive_avgpool(rng: np.random.Generator) -> GradCheckResult:
    x = rng.standard_normal((2, 3, 5, 3))
    r = rng.standard_normal((2, 3, 2, 2))
    loss = lambda: float((F.adaptive_avgpool_forward(x, 2)[0] * r).sum())
    _, ctx = F.adaptive_avgpool_forward(x, 2)
    return _check("adaptive_avgpool", loss, {"x": F.adaptive_avgpool_backward(r, ctx)}, {"x": x}, LAYER_TOLERANCE)


def check_linear(rng: np.random.Generator) -> GradCheckResult:
    x = rng.standard_normal((4, 7))
    w = rng.standard_normal((5, 7))
    b = rng.standard_normal(5)
    r = rng.standard_normal((4, 5))
    loss = lambda: float((F.linear_forward(x, w, b)[0] * r).sum())
    _, ctx = F.linear_forward(x, w, b)
    gx, gw, gb = F.linear_backward(r, ctx)
    return _check("linear", loss, {"x": gx, "w": gw, "b": gb}, {"x": x, "w": w, "b": b}, LAYER_TOLERANCE)


def check_dropout(rng: np.random.Generator) -> GradCheckResult:
    x = rng.standard_normal((4, 6))
    mask = F.dropout_mask(x.shape, 0.3, rng, np.float64)
    r = rng.standard_normal(x.shape)
    loss = lambda: float((F.dropout_forward(x, mask)[0] * r).sum())
    _, ctx = F.dropout_forward(x, mask)
    return _check("dropout", loss, {"x": F.dropout_backward(r, ctx)}, {"x": x}, LAYER_TOLERANCE)


def check_activation(rng: np.random.Generator, name: str) -> GradCheckResult:
    x = rng.standard_normal((3, 8))
    # keep samples away from the kinks at 0
    x[np.abs(x) < 1e-3] += 0.01
    r = rng.standard_normal(x.shape)
    loss = lambda: float((F.activation_forward(x, name)[0] * r).sum())
    _, ctx = F.activation_forward(x, name)
    return _check(name, loss, {"x": F.activation_backward(r, ctx)}, {"x": x}, LAYER_TOLERANCE)


def check_softmax_cross_entropy(rng: np.random.Generator) -> GradCheckResult:
    logits = rng.standard_normal((6, 2)) * 2
    targets = rng.integers(0, 2, 6)
    weights = rng.uniform(0.3, 3.0, 2)
    loss = lambda: F.softmax_cross_entropy(logits, targets, weights)[0]
    _, grad = F.softmax_cross_entropy(logits, targets, weights)
    return _check("softmax_cross_entropy", loss, {"logits": grad}, {"logits": logits}, LAYER_TOLERANCE)


def toy_spec() -> ModelSpec:
    """Small architecture for checking the composed network on 2 x 16 x 16 inputs."""
    return ModelSpec(
        conv_blocks=(
            ConvBlock(in_channels=2, out_channels=3, kernel_size=3, activation="tanh"),
            ConvBlock(in_channels=3, out_channels=4, kernel_size=3, activation="relu"),
            ConvBlock(in_channels=4, out_channels=4, kernel_size=5, activation="leaky_relu"),
            ConvBlock(in_channels=4, out_channels=5, kernel_size=3, activation="tanh"),
        ),
        pool_output=2,
        fc_blocks=(
            FcBlock(in_features=20, out_features=6, activation="relu", dropout_rate=0.2),
            FcBlock(in_features=6, out_features=5, activation="leaky_relu", dropout_rate=0.3),
        ),
        head=HeadSpec(in_features=5, out_features=2),
    )


def check_network(rng: np.random.Generator, max_entries: int = 25) -> GradCheckResult:
    net = Network(toy_spec(), seed=int(rng.integers(2**31)), dtype=np.float64)
    x = rng.standard_normal((4, 2, 16, 16))
    y = np.array([0, 1, 1, 0])
    weights = np.array([1.3, 0.7])

    net.train()
    net.logits(x)
    net.freeze_dropout()
    loss = lambda: F.softmax_cross_entropy(net.logits(x), y, weights)[0]

    _, grad = F.softmax_cross_entropy(net.logits(x), y, weights)
    grad_x = net.backward(grad)
    analytic = {"x": grad_x, **net.named_gradients()}
    inputs = {"x": x, **dict(net.named_parameters())}
    result = _check("network", loss, analytic, inputs, NETWORK_TOLERANCE, rng, max_entries)
    net.freeze_dropout(False)
    return result


def run_suite(seed: int = 0) -> list[GradCheckResult]:
    """Every layer kernel in double precision, then the composed toy network."""
    rng = np.random.default_rng(seed)
    results = [
        check_conv2d(rng),
        check_maxpool(rng),
        check_batchnorm(rng, training=True),
        check_batchnorm(rng, training=False),
        check_adaptive_avgpool(rng),
        check_linear(rng),
        check_dropout(rng),
        *(check_activation(rng, name) for name in ("tanh", "relu", "leaky_relu")),
        check_softmax_cross_entropy(rng),
        check_network(rng),
    ]
    return results
