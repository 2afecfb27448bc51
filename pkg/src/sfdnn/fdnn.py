"""Functional network: spline-projected curves and scalars through dense layers.

The first layer mixes precomputed basis inner products of the functional
predictors with the scalar covariates.  When a spatial context is supplied,
the first-layer pre-activations are passed through the filter solve
(I - rho W)^{-1} before bias and activation; the backward pass applies the
transpose solve.  Because the filter couples rows globally, training always
evaluates the network on all rows and restricts the loss to the mini-batch.

Training uses Adam (beta1=0.9, beta2=0.999, eps=1e-8) over shuffled
mini-batches, an epoch-loss improvement stopping rule, and an optional
validation split with best-epoch restoration.  Everything is deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    DimensionError,
    InvalidArchitectureError,
    NumericOverflowError,
    TrainingDivergedError,
)
from .spatial import SpatialFilterFactor, SpatialWeightMatrix

__all__ = [
    "ACTIVATIONS",
    "NetworkArchitecture",
    "NetworkParameters",
    "TrainConfig",
    "TrainingTrace",
    "SpatialContext",
    "init_parameters",
    "forward",
    "loss",
    "gradients",
    "train",
    "predict",
    "save_parameters",
    "load_parameters",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_deriv(x):
    return (x > 0.0).astype(float)


def _sigmoid_deriv(x):
    s = expit(x)
    return s * (1.0 - s)


def _tanh_deriv(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_deriv),
    "sigmoid": (expit, _sigmoid_deriv),
    "tanh": (np.tanh, _tanh_deriv),
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
}


@dataclass(frozen=True)
class NetworkArchitecture:
    """Shape of the functional network.

    ``basis_sizes`` holds one spline-basis size per functional predictor;
    ``activations`` holds one tag per hidden layer.  The output layer is a
    single linear unit.
    """

    num_functional: int
    basis_sizes: tuple
    num_scalar: int
    hidden_sizes: tuple
    activations: tuple

    def __post_init__(self):
        object.__setattr__(self, "basis_sizes", tuple(int(m) for m in self.basis_sizes))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if self.num_functional < 0 or self.num_scalar < 0:
            raise InvalidArchitectureError("predictor counts must be nonnegative")
        if len(self.basis_sizes) != self.num_functional:
            raise InvalidArchitectureError("need one basis size per functional predictor")
        if any(m < 1 for m in self.basis_sizes):
            raise InvalidArchitectureError("basis sizes must be >= 1")
        if self.num_functional + self.num_scalar == 0:
            raise InvalidArchitectureError("network needs at least one input")
        if len(self.hidden_sizes) < 1:
            raise InvalidArchitectureError("need at least one hidden layer")
        if any(h < 1 for h in self.hidden_sizes):
            raise InvalidArchitectureError("hidden sizes must be >= 1")
        if len(self.activations) != len(self.hidden_sizes):
            raise InvalidArchitectureError("need one activation per hidden layer")
        for tag in self.activations:
            if tag not in ACTIVATIONS:
                raise InvalidArchitectureError(f"unknown activation '{tag}'")

    @property
    def feature_width(self) -> int:
        return sum(self.basis_sizes)

    @property
    def num_parameters(self) -> int:
        n1 = self.hidden_sizes[0]
        count = n1 * (self.feature_width + self.num_scalar) + n1
        prev = n1
        for h in self.hidden_sizes[1:]:
            count += h * prev + h
            prev = h
        count += prev + 1
        return count


@dataclass
class TrainConfig:
    """Optimization hyperparameters; all runs are deterministic per seed."""

    learning_rate: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 300
    early_stop_threshold: float = 0.0
    weight_decay: float = 0.0
    validation_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidArchitectureError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidArchitectureError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise InvalidArchitectureError("max_epochs must be >= 1")
        if self.early_stop_threshold < 0:
            raise InvalidArchitectureError("early_stop_threshold must be >= 0")
        if self.weight_decay < 0:
            raise InvalidArchitectureError("weight_decay must be >= 0")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise InvalidArchitectureError("validation_fraction must be in [0, 0.5]")


class SpatialContext:
    """Fixed spatial filter applied inside the first layer."""

    def __init__(self, W: SpatialWeightMatrix, rho_hat: float):
        self.W = W
        self.rho_hat = float(rho_hat)
        self._factor = SpatialFilterFactor(W, self.rho_hat)

    def solve(self, b):
        return self._factor.solve(b)

    def solve_transpose(self, b):
        return self._factor.solve_transpose(b)


class NetworkParameters:
    """All learnable tensors; gradient containers reuse this layout.

    ``func_weights`` is (n_1, sum of basis sizes): the per-neuron spline
    coefficient blocks concatenated over predictors.  ``hidden_weights``
    holds the transition matrices between consecutive layers, ending with
    the (1, n_R) output map.  ``biases`` has one vector per hidden layer
    plus the output bias.
    """

    def __init__(self, arch, func_weights, scalar_weights, hidden_weights, biases):
        self.arch = arch
        self.func_weights = func_weights
        self.scalar_weights = scalar_weights
        self.hidden_weights = list(hidden_weights)
        self.biases = list(biases)

    def functional_coeff_blocks(self):
        """Per-predictor views of the first-layer spline coefficients."""
        blocks = []
        start = 0
        for m in self.arch.basis_sizes:
            blocks.append(self.func_weights[:, start : start + m])
            start += m
        return blocks

    def tensors(self):
        """(name, array, is_weight) triples in a fixed canonical order."""
        out = [
            ("func_weights", self.func_weights, True),
            ("scalar_weights", self.scalar_weights, True),
        ]
        for i, w in enumerate(self.hidden_weights):
            out.append((f"hidden_weights_{i}", w, True))
        for i, b in enumerate(self.biases):
            out.append((f"bias_{i}", b, False))
        return out

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            self.arch,
            self.func_weights.copy(),
            self.scalar_weights.copy(),
            [w.copy() for w in self.hidden_weights],
            [b.copy() for b in self.biases],
        )

    @classmethod
    def zeros_like(cls, params: "NetworkParameters") -> "NetworkParameters":
        return cls(
            params.arch,
            np.zeros_like(params.func_weights),
            np.zeros_like(params.scalar_weights),
            [np.zeros_like(w) for w in params.hidden_weights],
            [np.zeros_like(b) for b in params.biases],
        )


def init_parameters(arch: NetworkArchitecture, seed: int) -> NetworkParameters:
    """Uniform Glorot initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    n1 = arch.hidden_sizes[0]
    fan_in = arch.feature_width + arch.num_scalar
    bound = np.sqrt(6.0 / (fan_in + n1))
    func_w = rng.uniform(-bound, bound, size=(n1, arch.feature_width))
    scalar_w = rng.uniform(-bound, bound, size=(n1, arch.num_scalar))
    hidden = []
    sizes = list(arch.hidden_sizes) + [1]
    for prev, nxt in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (prev + nxt))
        hidden.append(rng.uniform(-bound, bound, size=(nxt, prev)))
    biases = [np.zeros(s) for s in sizes]
    return NetworkParameters(arch, func_w, scalar_w, hidden, biases)


def _check_inputs(params, features, scalars):
    features = np.atleast_2d(np.asarray(features, dtype=float))
    scalars = np.asarray(scalars, dtype=float)
    if scalars.ndim == 1:
        scalars = scalars.reshape(features.shape[0], -1)
    arch = params.arch
    if features.shape[1] != arch.feature_width:
        raise DimensionError(
            f"features have width {features.shape[1]}, architecture expects {arch.feature_width}"
        )
    if scalars.shape != (features.shape[0], arch.num_scalar):
        raise DimensionError(
            f"scalars have shape {scalars.shape}, expected ({features.shape[0]}, {arch.num_scalar})"
        )
    return features, scalars


@dataclass
class ForwardCache:
    features: np.ndarray
    scalars: np.ndarray
    pre_activations: list = field(default_factory=list)
    post_activations: list = field(default_factory=list)


def forward(params: NetworkParameters, features, scalars, ctx: SpatialContext | None = None):
    """Evaluate the network, returning (predictions, cache for backprop)."""
    features, scalars = _check_inputs(params, features, scalars)
    if ctx is not None and ctx.W.n != features.shape[0]:
        raise DimensionError(
            f"spatial context has {ctx.W.n} sites but inputs have {features.shape[0]} rows"
        )
    arch = params.arch
    cache = ForwardCache(features=features, scalars=scalars)

    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_layers(params, arch, cache, ctx)


def _forward_layers(params, arch, cache, ctx):
    features, scalars = cache.features, cache.scalars
    pre = features @ params.func_weights.T + scalars @ params.scalar_weights.T
    if ctx is not None:
        pre = ctx.solve(pre)
    pre = pre + params.biases[0]
    act, _ = ACTIVATIONS[arch.activations[0]]
    h = act(pre)
    cache.pre_activations.append(pre)
    cache.post_activations.append(h)

    for r in range(1, len(arch.hidden_sizes)):
        pre = h @ params.hidden_weights[r - 1].T + params.biases[r]
        act, _ = ACTIVATIONS[arch.activations[r]]
        h = act(pre)
        cache.pre_activations.append(pre)
        cache.post_activations.append(h)

    out = (h @ params.hidden_weights[-1].T + params.biases[-1]).ravel()
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("network produced non-finite predictions")
    return out, cache


def predict(params: NetworkParameters, features, scalars, ctx: SpatialContext | None = None):
    """Predictions only."""
    return forward(params, features, scalars, ctx)[0]


def loss(predictions, y) -> float:
    """Mean squared residual."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if predictions.size != y.size:
        raise DimensionError("predictions and responses have different lengths")
    return float(np.mean((predictions - y) ** 2))


def _backprop(params, features, scalars, y, ctx, batch_rows):
    """Loss over ``batch_rows`` and its exact gradients.

    The forward pass always covers every row (the spatial filter couples
    rows); the residual is masked to the batch.
    """
    predictions, cache = forward(params, features, scalars, ctx)
    n_batch = batch_rows.size
    residual = np.zeros_like(predictions)
    residual[batch_rows] = predictions[batch_rows] - y[batch_rows]
    with np.errstate(over="ignore", invalid="ignore"):
        return _backprop_from_residual(params, cache, ctx, residual, n_batch)


def _backprop_from_residual(params, cache, ctx, residual, n_batch):
    batch_loss = float(residual @ residual) / n_batch

    grads = NetworkParameters.zeros_like(params)
    arch = params.arch
    n_hidden = len(arch.hidden_sizes)

    g = (2.0 / n_batch) * residual[:, None]  # dL/d out
    grads.hidden_weights[-1][...] = g.T @ cache.post_activations[-1]
    grads.biases[-1][...] = g.sum(axis=0)
    g = g @ params.hidden_weights[-1]  # dL/d h_R

    for r in range(n_hidden - 1, -1, -1):
        _, deriv = ACTIVATIONS[arch.activations[r]]
        g_pre = g * deriv(cache.pre_activations[r])
        grads.biases[r][...] = g_pre.sum(axis=0)
        if r > 0:
            grads.hidden_weights[r - 1][...] = g_pre.T @ cache.post_activations[r - 1]
            g = g_pre @ params.hidden_weights[r - 1]
        else:
            if ctx is not None:
                g_pre = ctx.solve_transpose(g_pre)
            grads.func_weights[...] = g_pre.T @ cache.features
            grads.scalar_weights[...] = g_pre.T @ cache.scalars
    return batch_loss, grads


def gradients(params: NetworkParameters, features, scalars, y, ctx: SpatialContext | None = None):
    """Exact reverse-mode gradients of the mean-squared loss over all rows."""
    features, scalars = _check_inputs(params, features, scalars)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != features.shape[0]:
        raise DimensionError("response length does not match inputs")
    if y.size == 0:
        raise DimensionError("batch must be nonempty")
    _, grads = _backprop(params, features, scalars, y, ctx, np.arange(y.size))
    return grads


@dataclass
class TrainingTrace:
    """Per-epoch loss history plus early-stopping bookkeeping."""

    epoch_losses: list = field(default_factory=list)
    validation_losses: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False


def _masked_loss(params, features, scalars, y, ctx, rows):
    predictions, _ = forward(params, features, scalars, ctx)
    diff = predictions[rows] - y[rows]
    return float(diff @ diff) / rows.size


def train(
    arch: NetworkArchitecture,
    config: TrainConfig,
    features,
    scalars,
    y,
    ctx: SpatialContext | None = None,
):
    """Fit the network with Adam; returns (parameters, trace).

    Stops when the absolute change in epoch loss drops below the early-stop
    threshold (the first epoch's delta is the loss itself), or at
    ``max_epochs``.  With a validation split, the parameters from the best
    validation epoch are restored at the end.
    """
    params = init_parameters(arch, config.seed)
    features, scalars = _check_inputs(params, features, scalars)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if features.shape[0] != n:
        raise DimensionError("response length does not match inputs")

    shuffle_rng = np.random.default_rng([config.seed, 1])
    split_rng = np.random.default_rng([config.seed, 2])

    if config.validation_fraction > 0.0:
        n_val = min(int(round(config.validation_fraction * n)), n - 1)
        perm = split_rng.permutation(n)
        val_rows = np.sort(perm[:n_val])
        train_rows = np.sort(perm[n_val:])
    else:
        val_rows = np.empty(0, dtype=int)
        train_rows = np.arange(n)

    moments_m = NetworkParameters.zeros_like(params)
    moments_v = NetworkParameters.zeros_like(params)
    step = 0
    trace = TrainingTrace()
    best_params = None
    best_val = np.inf
    prev_loss = None

    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(train_rows)
        for start in range(0, order.size, config.batch_size):
            batch = order[start : start + config.batch_size]
            try:
                batch_loss, grads = _backprop(params, features, scalars, y, ctx, batch)
            except NumericOverflowError as exc:
                raise TrainingDivergedError(str(exc), trace=trace) from exc
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError("batch loss became non-finite", trace=trace)
            step += 1
            corr1 = 1.0 - ADAM_BETA1**step
            corr2 = 1.0 - ADAM_BETA2**step
            for (_, p, is_w), (_, g, _), (_, m, _), (_, v, _) in zip(
                params.tensors(), grads.tensors(), moments_m.tensors(), moments_v.tensors()
            ):
                m[...] = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
                v[...] = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
                update = (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)
                if is_w and config.weight_decay > 0.0:
                    update = update + config.weight_decay * p
                p -= config.learning_rate * update

        try:
            epoch_loss = _masked_loss(params, features, scalars, y, ctx, train_rows)
        except NumericOverflowError as exc:
            raise TrainingDivergedError(str(exc), trace=trace) from exc
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError("epoch loss became non-finite", trace=trace)
        trace.epoch_losses.append(epoch_loss)

        if val_rows.size:
            val_loss = _masked_loss(params, features, scalars, y, ctx, val_rows)
            trace.validation_losses.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                trace.best_epoch = epoch

        delta = epoch_loss if epoch == 0 else abs(prev_loss - epoch_loss)
        prev_loss = epoch_loss
        if delta < config.early_stop_threshold:
            trace.stopped_early = True
            break

    if best_params is not None:
        params = best_params
    return params, trace


_FORMAT_TAG = "SFDNN-NET 1"


def dump_parameters(fh, params: NetworkParameters) -> None:
    """Write the versioned parameter text format to an open handle."""
    arch = params.arch
    fh.write(_FORMAT_TAG + "\n")
    fh.write(
        "functional %d %s\n" % (arch.num_functional, " ".join(str(m) for m in arch.basis_sizes))
    )
    fh.write(f"scalars {arch.num_scalar}\n")
    fh.write("hidden %s\n" % " ".join(str(h) for h in arch.hidden_sizes))
    fh.write("activations %s\n" % " ".join(arch.activations))
    for name, tensor, _ in params.tensors():
        dims = " ".join(str(d) for d in tensor.shape)
        values = " ".join(f"{v:.17g}" for v in np.ravel(tensor))
        fh.write(f"tensor {name} {tensor.ndim} {dims} {values}\n".rstrip() + "\n")


def save_parameters(params: NetworkParameters, path) -> None:
    """Versioned text serialization; values round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        dump_parameters(fh, params)


def parameters_from_lines(lines) -> NetworkParameters:
    """Rebuild parameters from the text-format lines."""
    if not lines or lines[0] != _FORMAT_TAG:
        raise DimensionError("not a recognized network parameter block")
    func_line = lines[1].split()
    p = int(func_line[1])
    basis_sizes = tuple(int(v) for v in func_line[2 : 2 + p])
    num_scalar = int(lines[2].split()[1])
    hidden_sizes = tuple(int(v) for v in lines[3].split()[1:])
    activations = tuple(lines[4].split()[1:])
    arch = NetworkArchitecture(
        num_functional=p,
        basis_sizes=basis_sizes,
        num_scalar=num_scalar,
        hidden_sizes=hidden_sizes,
        activations=activations,
    )
    tensors = {}
    for line in lines[5:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] != "tensor":
            raise DimensionError(f"unexpected parameter line '{line[:40]}'")
        name = parts[1]
        ndim = int(parts[2])
        shape = tuple(int(v) for v in parts[3 : 3 + ndim])
        values = np.array([float(v) for v in parts[3 + ndim :]])
        tensors[name] = values.reshape(shape)
    n_transitions = len(hidden_sizes)
    hidden = [tensors[f"hidden_weights_{i}"] for i in range(n_transitions)]
    biases = [tensors[f"bias_{i}"] for i in range(n_transitions + 1)]
    return NetworkParameters(
        arch, tensors["func_weights"], tensors["scalar_weights"], hidden, biases
    )


def load_parameters(path) -> NetworkParameters:
    """Read parameters written by :func:`save_parameters`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return parameters_from_lines(lines)
