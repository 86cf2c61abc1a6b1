"""Dense feed-forward networks with exact reverse-mode gradients.

Networks are stacks of affine layers with ELU hidden activations and a
linear output layer, stored in double precision. The backward pass is the
exact transpose of the forward recurrence, so analytic gradients match
central finite differences to machine-level accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ELU = "elu"
IDENTITY = "identity"
_ACTIVATIONS = (ELU, IDENTITY)


@dataclass(frozen=True)
class NetworkSpec:
    """Shape of a dense network: depth counts hidden layers only.

    depth = 0 is a single affine map input_dim -> output_dim. Zero-width
    inputs/outputs are allowed (an input_dim-0 network is a trainable
    constant; an output_dim-0 network emits an empty vector).
    """

    input_dim: int
    output_dim: int
    depth: int = 0
    width: int = 0
    activation: str = ELU

    def __post_init__(self):
        if self.input_dim < 0 or self.output_dim < 0:
            raise ValueError(f"dims must be >= 0, got {self.input_dim}x{self.output_dim}")
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if self.depth > 0 and self.width <= 0:
            raise ValueError(f"width must be > 0 when depth > 0, got width={self.width}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {_ACTIVATIONS}")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) shapes of the affine layers, input to output."""
        dims = [self.input_dim] + [self.width] * self.depth + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


def _elu(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0.0, a, np.expm1(np.minimum(a, 0.0)))


def _elu_deriv(a: np.ndarray) -> np.ndarray:
    # exp(0) = 1, so the a <= 0 branch already yields derivative 1 at the kink.
    return np.where(a > 0.0, 1.0, np.exp(np.minimum(a, 0.0)))


class DenseNetwork:
    """A depth-l, width-w feed-forward block: affine/ELU/.../affine.

    ``layers`` is an ordered list of (weight, bias) with weight shaped
    (out, in). Hidden layers apply the spec activation; the output layer
    is always linear.
    """

    def __init__(self, spec: NetworkSpec, layers: list[tuple[np.ndarray, np.ndarray]]):
        expected = spec.layer_dims()
        if len(layers) != len(expected):
            raise ValueError(f"expected {len(expected)} layers, got {len(layers)}")
        for i, ((w, b), (dout, din)) in enumerate(zip(layers, expected)):
            if w.shape != (dout, din):
                raise ValueError(f"layer {i}: expected weight shape {(dout, din)}, got {w.shape}")
            if b.shape != (dout,):
                raise ValueError(f"layer {i}: expected bias shape {(dout,)}, got {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
        self.spec = spec
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in layers]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def param_arrays(self) -> list[np.ndarray]:
        """Live references to the parameter arrays, [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(self.spec, [(w.copy(), b.copy()) for w, b in self.layers])

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self._run(x, want_cache=False)
        return y

    def forward_with_cache(self, x: np.ndarray):
        """Forward pass keeping per-layer inputs and pre-activations for backward()."""
        return self._run(x, want_cache=True)

    def _run(self, x: np.ndarray, want_cache: bool):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.spec.input_dim:
            raise ValueError(
                f"input dim mismatch: expected {self.spec.input_dim}, got {h.shape[-1]}")
        cache = [] if want_cache else None
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            a = h @ w.T + b
            if want_cache:
                cache.append((h, a))
            if i < last and self.spec.activation == ELU:
                h = _elu(a)
            else:
                h = a
        if single:
            h = h[0]
        return h, (cache, single)

    def backward(self, cache, upstream: np.ndarray, grads: "GradientBuffer") -> np.ndarray:
        """Accumulate parameter gradients into ``grads``; return d(loss)/d(input).

        ``cache`` must come from forward_with_cache on the current parameters,
        ``upstream`` is d(loss)/d(output) with matching leading shape.
        """
        layer_cache, single = cache
        up = np.asarray(upstream, dtype=np.float64)
        if single:
            up = up[None, :]
        if up.shape[-1] != self.spec.output_dim:
            raise ValueError(
                f"upstream dim mismatch: expected {self.spec.output_dim}, got {up.shape[-1]}")
        if len(grads.layers) != len(self.layers):
            raise ValueError("gradient buffer does not match network layout")
        d = up
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            h, a = layer_cache[i]
            if h.shape[0] != d.shape[0]:
                raise ValueError(
                    f"cache/upstream batch mismatch at layer {i}: {h.shape[0]} vs {d.shape[0]}")
            if i < last and self.spec.activation == ELU:
                d = d * _elu_deriv(a)
            w, _ = self.layers[i]
            gw, gb = grads.layers[i]
            gw += d.T @ h
            gb += d.sum(axis=0)
            d = d @ w
        return d[0] if single else d


class GradientBuffer:
    """Per-layer (dW, db) accumulators, shape-congruent with one network."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = layers

    @classmethod
    def for_network(cls, net: DenseNetwork) -> "GradientBuffer":
        return cls([(np.zeros_like(w), np.zeros_like(b)) for w, b in net.layers])

    @classmethod
    def view(cls, arrays: list[np.ndarray]) -> "GradientBuffer":
        """Wrap an even-length [dW0, db0, dW1, db1, ...] list without copying."""
        if len(arrays) % 2:
            raise ValueError("expected (weight, bias) pairs")
        return cls([(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for gw, gb in self.layers:
            out.append(gw)
            out.append(gb)
        return out

    def zero(self):
        for gw, gb in self.layers:
            gw.fill(0.0)
            gb.fill(0.0)


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> DenseNetwork:
    """Fan-balanced uniform weights on +-sqrt(6/(fan_in+fan_out)), zero biases."""
    layers = []
    for dout, din in spec.layer_dims():
        fan = din + dout
        bound = np.sqrt(6.0 / fan) if fan > 0 else 0.0
        w = rng.uniform(-bound, bound, size=(dout, din))
        layers.append((w, np.zeros(dout)))
    return DenseNetwork(spec, layers)


def max_node_l1(net: DenseNetwork) -> float:
    """Max over nodes of ||incoming weight row||_1 + |bias|.

    This is the empirical per-node norm bound M consumed by the theory
    calculators; it is measured, never enforced.
    """
    best = 0.0
    for w, b in net.layers:
        if w.shape[0] == 0:
            continue
        norms = np.abs(w).sum(axis=1) + np.abs(b)
        best = max(best, float(norms.max()))
    return best
