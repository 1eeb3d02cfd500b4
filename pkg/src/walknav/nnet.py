"""Dense MLP stack used for both the actor and the critic.

Everything is float64 and functional: ``forward``/``backward``/``adam_step``
never mutate their inputs.  Inputs may be a single vector or a 2-D batch
(rows are samples); gradients from a batch are summed over rows.
"""

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("tanh", "identity")


class ShapeError(ValueError):
    """Raised when arrays do not match the network layout."""


class DivergenceError(FloatingPointError):
    """Raised when an update would write non-finite values into parameters."""


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def shapes(self):
        """(weight shape, bias shape) per layer."""
        s = self.layer_sizes
        return [((s[i + 1], s[i]), (s[i + 1],)) for i in range(len(s) - 1)]

    def n_params(self):
        return sum(o * i + o for (o, i), _ in self.shapes())


@dataclass
class ParameterSet:
    spec: MlpSpec
    weights: list
    biases: list = field(default_factory=list)

    def __post_init__(self):
        shapes = self.spec.shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeError("layer count does not match spec")
        for k, ((ws, bs), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != ws or b.shape != bs:
                raise ShapeError(
                    f"layer {k}: expected W{ws}/b{bs}, got W{w.shape}/b{b.shape}")

    def flat(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (spec.n_params(),):
            raise ShapeError(f"expected {spec.n_params()} values, got {vec.shape}")
        weights, biases, pos = [], [], 0
        for (o, i), _ in spec.shapes():
            weights.append(vec[pos:pos + o * i].reshape(o, i).copy())
            pos += o * i
            biases.append(vec[pos:pos + o].copy())
            pos += o
        return cls(spec, weights, biases)

    def copy(self):
        return ParameterSet(self.spec, [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases])

    def zeros_like(self):
        return ParameterSet(self.spec, [np.zeros_like(w) for w in self.weights],
                            [np.zeros_like(b) for b in self.biases])

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def init_params(spec, seed, final_scale=None):
    """Uniform fan-in initialisation with zero biases.

    Weights of a layer with fan-in ``n`` are drawn from U(-sqrt(1/n), sqrt(1/n)).
    ``final_scale`` multiplies the last layer's weights; it defaults to 0.01 for
    tanh-output (actor) networks and 1 otherwise.
    """
    if final_scale is None:
        final_scale = 0.01 if spec.output_activation == "tanh" else 1.0
    rng = np.random.Generator(np.random.Philox(seed))
    weights, biases = [], []
    shapes = spec.shapes()
    for k, ((o, i), _) in enumerate(shapes):
        bound = np.sqrt(1.0 / i)
        w = rng.uniform(-bound, bound, size=(o, i))
        if k == len(shapes) - 1:
            w = w * final_scale
        weights.append(w)
        biases.append(np.zeros(o))
    return ParameterSet(spec, weights, biases)


@dataclass
class ForwardCache:
    inputs: list      # input to each affine layer, 2-D
    preacts: list     # affine outputs, 2-D
    output: np.ndarray
    batched: bool


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def forward(params, x):
    """Evaluate the network; returns ``(output, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x[None, :]
    if h.ndim != 2 or h.shape[1] != params.spec.n_in:
        raise ShapeError(
            f"input has shape {x.shape}, network expects {params.spec.n_in} features")
    inputs, preacts = [], []
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        kind = params.spec.output_activation if k == n_layers - 1 else params.spec.hidden_activation
        h = _activate(z, kind)
    out = h if batched else h[0]
    return out, ForwardCache(inputs, preacts, h, batched)


def backward(params, cache, output_grad):
    """Reverse-mode gradients of ``<output_grad, output>``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is a
    ParameterSet of the same layout as ``params``.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if not cache.batched:
        g = g[None, :]
    if g.shape != cache.output.shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {cache.output.shape}")
    if len(cache.inputs) != len(params.weights) or any(
            inp.shape[1] != w.shape[1] for inp, w in zip(cache.inputs, params.weights)):
        raise ShapeError("cache was not produced by these parameters")
    n_layers = len(params.weights)
    dws, dbs = [None] * n_layers, [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        z = cache.preacts[k]
        kind = params.spec.output_activation if k == n_layers - 1 else params.spec.hidden_activation
        if kind == "relu":
            g = g * (z > 0.0)
        elif kind == "tanh":
            t = np.tanh(z)
            g = g * (1.0 - t * t)
        dws[k] = g.T @ cache.inputs[k]
        dbs[k] = g.sum(axis=0)
        g = g @ params.weights[k]
    input_grad = g if cache.batched else g[0]
    return ParameterSet(params.spec, dws, dbs), input_grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.t,
                         self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params, grads, state):
    """One bias-corrected Adam *descent* step.

    ``params``/``grads`` are either ParameterSets or flat float arrays; the
    result has the same kind as ``params``.  Non-finite gradients raise
    :class:`DivergenceError` and leave everything untouched.
    """
    is_set = isinstance(params, ParameterSet)
    p = params.flat() if is_set else np.asarray(params, dtype=np.float64)
    g = grads.flat() if isinstance(grads, ParameterSet) else np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ShapeError(f"params {p.shape}, grads {g.shape}, state {state.m.shape} disagree")
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    p_new = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    if is_set:
        return ParameterSet.from_flat(params.spec, p_new), new_state
    return p_new, new_state
