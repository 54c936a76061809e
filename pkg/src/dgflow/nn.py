"""Dense MLP engine: forward, exact reverse-mode gradients, optimizers.

Everything is float64 and batch-major: inputs are (batch, features), weights
are (fan_in, fan_out), a layer computes h @ w + b followed by its activation.
The engine covers exactly what the rest of the package needs:

* forward with a cache, backward to parameters and inputs;
* the input-gradient map of a scalar-output net (the drift of the flow);
* the exact parameter gradient of the gradient-penalty term, obtained by
  differentiating the input-gradient map with ReLU masks held fixed (valid
  a.e. because ReLU'' = 0; tanh nets are rejected);
* Adam with bias correction, heavy-ball SGD, spectral normalization by
  power iteration.
"""

from dataclasses import dataclass, field

import numpy as np

from dgflow.errors import ConfigurationError, NumericError

RELU = "relu"
TANH = "tanh"
IDENTITY = "identity"
ACTIVATIONS = (RELU, TANH, IDENTITY)


@dataclass
class Layer:
    w: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[1],):
            raise ConfigurationError(
                f"layer shapes inconsistent: w {self.w.shape}, b {self.b.shape}"
            )


@dataclass
class Mlp:
    layers: list
    spectral_norm: bool = False
    power_iter_state: list = None  # per-layer (u, v) vectors when spectral_norm

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.w.shape[1] != nxt.w.shape[0]:
                raise ConfigurationError(
                    f"layer dims do not compose: {prev.w.shape} -> {nxt.w.shape}"
                )
        if self.spectral_norm and self.power_iter_state is None:
            raise ConfigurationError("spectral_norm requires power_iter_state")

    @property
    def in_dim(self):
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self):
        return self.layers[-1].w.shape[1]

    def params(self):
        """Flat parameter list [w0, b0, w1, b1, ...] (live views)."""
        out = []
        for layer in self.layers:
            out.append(layer.w)
            out.append(layer.b)
        return out

    def param_names(self):
        out = []
        for i in range(len(self.layers)):
            out.append(f"L{i}.w")
            out.append(f"L{i}.b")
        return out

    def copy(self):
        layers = [Layer(l.w.copy(), l.b.copy(), l.activation) for l in self.layers]
        state = None
        if self.power_iter_state is not None:
            state = [(u.copy(), v.copy()) for u, v in self.power_iter_state]
        return Mlp(layers, self.spectral_norm, state)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list  # pre-activations per layer
    post: list  # post-activations per layer


def init_mlp(dims, rng, hidden_activation=RELU, out_activation=IDENTITY,
             spectral_norm=False, init="uniform"):
    """MLP with the given layer widths (dims includes in/out).

    init "uniform" draws weights and biases from U(+-1/sqrt(fan_in)), the
    standard fully-connected default; "he" uses N(0, sqrt(2/fan_in)) weights
    with zero biases.
    """
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if init == "he":
            w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            b = np.zeros(fan_out)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(Layer(w, b, hidden_activation))
    layers[-1].activation = out_activation
    state = None
    if spectral_norm:
        state = []
        for layer in layers:
            u = rng.standard_normal(layer.w.shape[0])
            v = rng.standard_normal(layer.w.shape[1])
            state.append((u / np.linalg.norm(u), v / np.linalg.norm(v)))
    return Mlp(layers, spectral_norm=spectral_norm, power_iter_state=state)


def _activate(a, kind):
    if kind == RELU:
        return np.maximum(a, 0.0)
    if kind == TANH:
        return np.tanh(a)
    return a


def _activation_grad(layer_idx, cache, net):
    """phi'(pre-activation) for one layer; None means identically 1.

    ReLU masks stay boolean; multiplying float64 by bool fuses the cast.
    """
    kind = net.layers[layer_idx].activation
    if kind == RELU:
        return cache.pre[layer_idx] > 0
    if kind == TANH:
        post = cache.post[layer_idx]
        return 1.0 - post * post
    return None


def mlp_forward(net, batch):
    """Run the net on a (batch, in_dim) matrix; returns (outputs, cache)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ConfigurationError(
            f"input shape {x.shape} does not match net input dim {net.in_dim}"
        )
    pre, post = [], []
    h = x
    for layer in net.layers:
        a = h @ layer.w + layer.b
        h = _activate(a, layer.activation)
        pre.append(a)
        post.append(h)
    return h, ForwardCache(x, pre, post)


def mlp_backward(net, cache, out_grad):
    """Gradients of sum(outputs * out_grad) w.r.t. parameters and inputs.

    Returns (param_grads, input_grads) with param_grads flat like params().
    """
    if cache is None:
        raise ValueError("mlp_backward needs the cache from mlp_forward")
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if out_grad.shape != cache.post[-1].shape:
        raise ValueError(
            f"out_grad shape {out_grad.shape} != outputs shape {cache.post[-1].shape}"
        )
    grads = [None] * (2 * len(net.layers))
    delta = out_grad
    for i in range(len(net.layers) - 1, -1, -1):
        ag = _activation_grad(i, cache, net)
        if ag is not None:
            delta = delta * ag
        h_in = cache.post[i - 1] if i > 0 else cache.inputs
        grads[2 * i] = h_in.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ net.layers[i].w.T
    return grads, delta


def backprop_input(net, cache, out_grad):
    """Input gradients only (skips the parameter-gradient matmuls)."""
    delta = np.asarray(out_grad, dtype=np.float64)
    for i in range(len(net.layers) - 1, -1, -1):
        ag = _activation_grad(i, cache, net)
        if ag is not None:
            delta = delta * ag
        delta = delta @ net.layers[i].w.T
    return delta


def input_gradient(net, batch):
    """Per-row gradient of a scalar-output net: row i holds grad d(x_i)."""
    if net.out_dim != 1:
        raise ValueError(f"input_gradient needs a scalar-output net, got {net.out_dim}")
    _, cache = mlp_forward(net, batch)
    ones = np.ones_like(cache.post[-1])
    return backprop_input(net, cache, ones)


def _check_gp_supported(net):
    if net.out_dim != 1:
        raise ValueError(f"gp_param_gradient needs a scalar-output net, got {net.out_dim}")
    for layer in net.layers:
        if layer.activation == TANH:
            raise ConfigurationError(
                "gradient penalty requires piecewise-linear activations; "
                "use spectral normalization for tanh nets"
            )


def _gp_from_masks(net, masks, batch_size):
    """Penalty and parameter gradient given per-layer activation masks."""
    n_layers = len(net.layers)
    # forward sweep of the input-gradient map: S[i] = d(output)/d(pre_i)
    s = [None] * n_layers
    s[-1] = masks[-1] if masks[-1].dtype == np.float64 else masks[-1].astype(np.float64)
    for i in range(n_layers - 1, 0, -1):
        t = s[i] @ net.layers[i].w.T
        s[i - 1] = t * masks[i - 1]
    g = s[0] @ net.layers[0].w.T  # (batch, in_dim), row i = grad_x d(x_i)

    norms = np.linalg.norm(g, axis=1, keepdims=True)
    value = float(np.mean((norms[:, 0] - 1.0) ** 2))
    scale = np.zeros_like(norms)
    nz = norms[:, 0] > 0
    scale[nz] = 2.0 * (norms[nz] - 1.0) / (norms[nz] * batch_size)
    g_bar = scale * g

    grads = [None] * (2 * n_layers)
    t_bar = g_bar
    for i in range(n_layers):
        grads[2 * i] = t_bar.T @ s[i]
        grads[2 * i + 1] = np.zeros_like(net.layers[i].b)
        if i + 1 < n_layers:
            t_bar = (t_bar @ net.layers[i].w) * masks[i]
    return value, grads


def gp_masks_from_cache(net, cache, rows=None):
    """Per-layer phi' masks for the GP sweep, optionally on a row slice."""
    masks = []
    for i in range(len(net.layers)):
        ag = _activation_grad(i, cache, net)
        if ag is None:
            shape = cache.pre[i].shape if rows is None else cache.pre[i][rows].shape
            masks.append(np.ones(shape))
        else:
            masks.append(ag if rows is None else ag[rows])
    return masks


def gp_value_and_param_gradient(net, batch, cache=None, rows=None):
    """Penalty mean((||grad_x d(x)||_2 - 1)^2) and its exact parameter gradient.

    Differentiates the input-gradient map with the ReLU masks frozen; the
    masks' own derivative vanishes a.e., so for piecewise-linear nets this is
    the true gradient. Bias gradients are exactly zero a.e. for the same
    reason (the input-gradient map does not read biases). Pass a forward
    `cache` (and optional row slice) to reuse an existing forward pass.
    """
    _check_gp_supported(net)
    if cache is None:
        _, cache = mlp_forward(net, batch)
    masks = gp_masks_from_cache(net, cache, rows)
    return _gp_from_masks(net, masks, len(masks[0]))


def gp_param_gradient(net, batch):
    """Exact parameter gradient of the gradient penalty (piecewise-linear nets)."""
    return gp_value_and_param_gradient(net, batch)[1]


def gradient_penalty_value(net, batch):
    """mean((||grad_x d(x)|| - 1)^2) over the batch."""
    g = input_gradient(net, batch)
    norms = np.linalg.norm(g, axis=1)
    return float(np.mean((norms - 1.0) ** 2))


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(state, params, grads, names=None):
    """In-place Adam update with bias correction; returns (params, state)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    inv_root_bc2 = 1.0 / np.sqrt(1.0 - b2 ** state.step)
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"param[{i}]"
            raise NumericError(f"non-finite gradient for {name} at adam step {state.step}")
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # lr * (m/bc1) / (sqrt(v/bc2) + eps), with the temporaries reused
        denom = np.sqrt(v)
        denom *= inv_root_bc2
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= state.lr / bc1
        p -= denom
    return params, state


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.0
    velocity: list = field(default_factory=list)


def sgd_init(params, lr, momentum=0.0):
    return SgdState(lr=lr, momentum=momentum,
                    velocity=[np.zeros_like(p) for p in params])


def sgd_step(state, params, grads, names=None):
    """Heavy-ball SGD: v = momentum*v + g; p -= lr*v."""
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"param[{i}]"
            raise NumericError(f"non-finite gradient for {name}")
        vel = state.velocity[i]
        vel *= state.momentum
        vel += g
        p -= state.lr * vel
    return params, state


def spectral_step(net, power_iters=1):
    """Divide each weight by its estimated top singular value (in place).

    Power iteration state is carried on the net and refined every call; layers
    whose weight is exactly zero are skipped. Returns the per-layer estimates.
    """
    if net.power_iter_state is None:
        raise ConfigurationError("spectral_step needs power_iter_state on the net")
    sigmas = []
    for idx, layer in enumerate(net.layers):
        u, v = net.power_iter_state[idx]
        w = layer.w
        if not np.any(w):
            sigmas.append(0.0)
            continue
        for _ in range(power_iters):
            v = w.T @ u
            v /= np.linalg.norm(v)
            u = w @ v
            u /= np.linalg.norm(u)
        sigma = float(u @ (w @ v))
        net.power_iter_state[idx] = (u, v)
        if sigma > 0:
            w /= sigma
        sigmas.append(sigma)
    return sigmas
