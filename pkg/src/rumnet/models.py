"""The choice-model zoo: probability vectors over an assortment, with gradients.

Every model maps a ChoiceEvent to per-sample utility rows U of shape (S, n)
(S = K^2 sample pairs for the latent-heterogeneity model, S = 1 otherwise),
converts them with an availability-masked softmax, and averages over samples.
The batched engine works on stacks of events sharing an assortment size; the
per-event operations are thin wrappers over it.
"""
from __future__ import annotations

import numpy as np

from .data import ChoiceEvent
from .net import (
    DenseNetwork,
    GradientBuffer,
    NetworkSpec,
    init_network,
    max_node_l1,
)

MNL = "mnl"
TASTENET = "tastenet"
DEEPMNL = "deepmnl"
RUMNET = "rumnet"
VNN = "vnn"
MODEL_KINDS = (MNL, TASTENET, DEEPMNL, RUMNET, VNN)


def masked_softmax(utilities: np.ndarray, available: np.ndarray) -> np.ndarray:
    """Softmax over available alternatives only; unavailable get probability 0.

    Max-subtraction keeps the exponentials in range for any finite utilities.
    Broadcasting applies over leading axes; the last axis is the assortment.
    """
    avail = np.broadcast_to(np.asarray(available, dtype=bool), utilities.shape)
    if not avail.any(axis=-1).all():
        raise ValueError("no available alternative")
    shifted = np.where(avail, utilities, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def standard_gumbel(rng: np.random.Generator, size) -> np.ndarray:
    """-ln(-ln U) with U uniform on the open unit interval."""
    u = rng.random(size)
    tiny = np.finfo(np.float64).tiny
    return -np.log(-np.log(np.clip(u, tiny, 1.0 - np.finfo(np.float64).epsneg)))


class ChoiceModel:
    """Common surface: per-sample utilities, averaged probabilities, gradients."""

    kind: str
    d_x: int
    d_z: int

    # -- parameters ------------------------------------------------------
    def param_arrays(self) -> list[np.ndarray]:
        raise NotImplementedError

    def networks(self) -> list[DenseNetwork]:
        return []

    def new_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.param_arrays()]

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.param_arrays()]

    def restore(self, snap: list[np.ndarray]):
        for p, s in zip(self.param_arrays(), snap):
            p[...] = s

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.param_arrays())

    # -- batched engine ---------------------------------------------------
    def forward_batch(self, X: np.ndarray, Z: np.ndarray, want_cache: bool = False):
        """Utilities for stacked events: X (B,n,d_x), Z (B,d_z) -> (B,S,n), cache."""
        raise NotImplementedError

    def backward_batch(self, cache, dU: np.ndarray, grads: list[np.ndarray]):
        """Accumulate d(loss)/d(parameter) into grads given dU (B,S,n)."""
        raise NotImplementedError

    def _check_event(self, event: ChoiceEvent):
        if event.d_x != self.d_x:
            raise ValueError(f"product dim mismatch: expected {self.d_x}, got {event.d_x}")
        if event.d_z != self.d_z:
            raise ValueError(f"customer dim mismatch: expected {self.d_z}, got {event.d_z}")

    def _stack_event(self, event: ChoiceEvent):
        self._check_event(event)
        return event.products[None], event.customer[None]

    # -- per-event operations ----------------------------------------------
    def utilities(self, event: ChoiceEvent) -> np.ndarray:
        """Per-sample utility rows, shape (S, n); unavailable entries are
        computed too and flagged by event.available."""
        X, Z = self._stack_event(event)
        U, _ = self.forward_batch(X, Z)
        return U[0]

    def probabilities(self, event: ChoiceEvent) -> np.ndarray:
        """Mean over samples of the masked per-sample softmax; sums to 1."""
        U = self.utilities(event)
        return masked_softmax(U, event.available).mean(axis=0)

    def prob_gradients(self, event: ChoiceEvent, upstream: np.ndarray,
                       grads: list[np.ndarray]):
        """Accumulate d(upstream . probabilities)/d(parameters) into grads."""
        X, Z = self._stack_event(event)
        U, cache = self.forward_batch(X, Z, want_cache=True)
        P = masked_softmax(U, event.available)
        dU = softmax_mean_backward(P, np.asarray(upstream, dtype=np.float64)[None])
        self.backward_batch(cache, dU, grads)

    def sample_choice(self, event: ChoiceEvent, rng: np.random.Generator) -> int:
        """Draw one sample pair uniformly, add Gumbel noise, pick the argmax
        over available alternatives (ties -> lowest index)."""
        if not event.available.any():
            raise ValueError("no available alternative")
        U = self.utilities(event)
        s = int(rng.integers(U.shape[0])) if U.shape[0] > 1 else 0
        noisy = U[s] + standard_gumbel(rng, U.shape[1])
        return int(np.argmax(np.where(event.available, noisy, -np.inf)))


def softmax_mean_backward(P: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """d(upstream . mean_s softmax_s)/dU via the softmax Jacobian p(d_ij - p)."""
    S = P.shape[1]
    up = upstream[:, None, :]
    return P * (up - (up * P).sum(axis=-1, keepdims=True)) / S


class MNLModel(ChoiceModel):
    """Linear utility beta' x with i.i.d. Gumbel shocks."""

    kind = MNL

    def __init__(self, beta: np.ndarray, d_z: int = 0):
        self.beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        self.d_x = self.beta.shape[0]
        self.d_z = d_z

    def param_arrays(self):
        return [self.beta]

    def forward_batch(self, X, Z, want_cache=False):
        U = (X @ self.beta)[:, None, :]
        return U, X

    def backward_batch(self, cache, dU, grads):
        X = cache
        grads[0] += np.einsum("bn,bnd->d", dU[:, 0, :], X)


class TasteNetModel(ChoiceModel):
    """MNL plus a learned customer-taste correction: (beta + N(z))' x."""

    kind = TASTENET

    def __init__(self, beta: np.ndarray, taste_net: DenseNetwork):
        self.beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        self.taste_net = taste_net
        self.d_x = self.beta.shape[0]
        self.d_z = taste_net.spec.input_dim
        if taste_net.spec.output_dim != self.d_x:
            raise ValueError(
                f"taste net output {taste_net.spec.output_dim} != product dim {self.d_x}")

    def param_arrays(self):
        return [self.beta] + self.taste_net.param_arrays()

    def networks(self):
        return [self.taste_net]

    def forward_batch(self, X, Z, want_cache=False):
        if want_cache:
            taste, tcache = self.taste_net.forward_with_cache(Z)
        else:
            taste, tcache = self.taste_net.forward(Z), None
        U = (X @ self.beta + np.einsum("bnd,bd->bn", X, taste))[:, None, :]
        return U, (X, tcache)

    def backward_batch(self, cache, dU, grads):
        X, tcache = cache
        d = dU[:, 0, :]
        grads[0] += np.einsum("bn,bnd->d", d, X)
        dtaste = np.einsum("bn,bnd->bd", d, X)
        self.taste_net.backward(tcache, dtaste, GradientBuffer.view(grads[1:]))


class DeepMNLModel(ChoiceModel):
    """Utility from a feed-forward network on x (+) z, Gumbel shocks on top."""

    kind = DEEPMNL

    def __init__(self, net: DenseNetwork, d_x: int, d_z: int):
        if net.spec.input_dim != d_x + d_z:
            raise ValueError(
                f"utility net input {net.spec.input_dim} != d_x+d_z = {d_x + d_z}")
        if net.spec.output_dim != 1:
            raise ValueError("utility net must have a single output")
        self.net = net
        self.d_x = d_x
        self.d_z = d_z

    def param_arrays(self):
        return self.net.param_arrays()

    def networks(self):
        return [self.net]

    def forward_batch(self, X, Z, want_cache=False):
        B, n, _ = X.shape
        inp = np.concatenate(
            [X.reshape(B * n, self.d_x), np.repeat(Z, n, axis=0)], axis=1)
        if want_cache:
            y, cache = self.net.forward_with_cache(inp)
        else:
            y, cache = self.net.forward(inp), None
        return y.reshape(B, 1, n), (cache, (B, n))

    def backward_batch(self, cache, dU, grads):
        ncache, (B, n) = cache
        self.net.backward(ncache, dU.reshape(B * n, 1), GradientBuffer.view(grads))


class VNNModel(ChoiceModel):
    """Vanilla net on the concatenation of every product's features and z.

    Bound to a fixed assortment cardinality and alternative ordering.
    """

    kind = VNN

    def __init__(self, net: DenseNetwork, n: int, d_x: int, d_z: int):
        if net.spec.input_dim != n * d_x + d_z:
            raise ValueError(
                f"net input {net.spec.input_dim} != n*d_x+d_z = {n * d_x + d_z}")
        if net.spec.output_dim != n:
            raise ValueError(f"net output {net.spec.output_dim} != n = {n}")
        self.net = net
        self.n = n
        self.d_x = d_x
        self.d_z = d_z

    def param_arrays(self):
        return self.net.param_arrays()

    def networks(self):
        return [self.net]

    def _check_event(self, event):
        super()._check_event(event)
        if event.n_alternatives != self.n:
            raise ValueError(
                f"assortment size mismatch: model bound to {self.n}, "
                f"got {event.n_alternatives}")

    def forward_batch(self, X, Z, want_cache=False):
        B, n, _ = X.shape
        if n != self.n:
            raise ValueError(
                f"assortment size mismatch: model bound to {self.n}, got {n}")
        inp = np.concatenate([X.reshape(B, n * self.d_x), Z], axis=1)
        if want_cache:
            y, cache = self.net.forward_with_cache(inp)
        else:
            y, cache = self.net.forward(inp), None
        return y[:, None, :], cache

    def backward_batch(self, cache, dU, grads):
        self.net.backward(cache, dU[:, 0, :], GradientBuffer.view(grads))


class RumnetModel(ChoiceModel):
    """Sample-average choice model: K latent product nets x K latent customer
    nets feeding one utility net; probabilities average the K^2 softmaxes.

    Sample pairs are ordered s = k1 * K + k2.
    """

    kind = RUMNET

    def __init__(self, utility_net: DenseNetwork, eps_nets: list[DenseNetwork],
                 nu_nets: list[DenseNetwork], d_x: int, d_z: int):
        if len(eps_nets) != len(nu_nets) or not eps_nets:
            raise ValueError("need K >= 1 latent nets of each kind")
        self.K = len(eps_nets)
        self.d_x = d_x
        self.d_z = d_z
        self.d_eps = eps_nets[0].spec.output_dim
        self.d_nu = nu_nets[0].spec.output_dim
        for net in eps_nets:
            if net.spec != eps_nets[0].spec or net.spec.input_dim != d_x:
                raise ValueError("latent product nets must share one spec with input d_x")
        for net in nu_nets:
            if net.spec != nu_nets[0].spec or net.spec.input_dim != d_z:
                raise ValueError("latent customer nets must share one spec with input d_z")
        d = d_x + self.d_eps + d_z + self.d_nu
        if utility_net.spec.input_dim != d or utility_net.spec.output_dim != 1:
            raise ValueError(
                f"utility net must map {d} -> 1, got "
                f"{utility_net.spec.input_dim} -> {utility_net.spec.output_dim}")
        self.utility_net = utility_net
        self.eps_nets = list(eps_nets)
        self.nu_nets = list(nu_nets)

    @property
    def n_samples(self) -> int:
        return self.K * self.K

    def param_arrays(self):
        out = self.utility_net.param_arrays()
        for net in self.eps_nets:
            out += net.param_arrays()
        for net in self.nu_nets:
            out += net.param_arrays()
        return out

    def networks(self):
        return [self.utility_net] + self.eps_nets + self.nu_nets

    def forward_batch(self, X, Z, want_cache=False):
        B, n, _ = X.shape
        K = self.K
        Xf = X.reshape(B * n, self.d_x)
        Zf = np.repeat(Z, n, axis=0)
        eps_out, eps_caches = [], []
        for net in self.eps_nets:
            if want_cache:
                e, c = net.forward_with_cache(Xf)
            else:
                e, c = net.forward(Xf), None
            eps_out.append(e)
            eps_caches.append(c)
        nu_out, nu_caches = [], []
        for net in self.nu_nets:
            if want_cache:
                v, c = net.forward_with_cache(Z)
            else:
                v, c = net.forward(Z), None
            nu_out.append(v)
            nu_caches.append(c)
        d = self.d_x + self.d_eps + self.d_z + self.d_nu
        H = np.empty((K, K, B * n, d))
        c0, c1 = self.d_x, self.d_x + self.d_eps
        c2, c3 = c1 + self.d_z, c1 + self.d_z + self.d_nu
        H[:, :, :, :c0] = Xf
        H[:, :, :, c1:c2] = Zf
        for k1 in range(K):
            H[k1, :, :, c0:c1] = eps_out[k1]
        for k2 in range(K):
            H[:, k2, :, c2:c3] = np.repeat(nu_out[k2], n, axis=0)
        flat = H.reshape(K * K * B * n, d)
        if want_cache:
            y, ucache = self.utility_net.forward_with_cache(flat)
        else:
            y, ucache = self.utility_net.forward(flat), None
        U = y.reshape(K, K, B, n).transpose(2, 0, 1, 3).reshape(B, K * K, n)
        cache = (ucache, eps_caches, nu_caches, (B, n))
        return U, cache

    def backward_batch(self, cache, dU, grads):
        ucache, eps_caches, nu_caches, (B, n) = cache
        K = self.K
        dy = dU.reshape(B, K, K, n).transpose(1, 2, 0, 3).reshape(K * K * B * n, 1)
        off = 0
        u_arrays = grads[off:off + 2 * len(self.utility_net.layers)]
        off += len(u_arrays)
        dH = self.utility_net.backward(ucache, dy, GradientBuffer.view(u_arrays))
        dH = dH.reshape(K, K, B * n, -1)
        c0, c1 = self.d_x, self.d_x + self.d_eps
        c2, c3 = c1 + self.d_z, c1 + self.d_z + self.d_nu
        for k1, net in enumerate(self.eps_nets):
            arrs = grads[off:off + 2 * len(net.layers)]
            off += len(arrs)
            if self.d_eps:
                d_eps = dH[k1, :, :, c0:c1].sum(axis=0)
                net.backward(eps_caches[k1], d_eps, GradientBuffer.view(arrs))
        for k2, net in enumerate(self.nu_nets):
            arrs = grads[off:off + 2 * len(net.layers)]
            off += len(arrs)
            if self.d_nu:
                d_nu = dH[:, k2, :, c2:c3].sum(axis=0).reshape(B, n, self.d_nu).sum(axis=1)
                net.backward(nu_caches[k2], d_nu, GradientBuffer.view(arrs))


def build_model(kind: str, d_x: int, d_z: int, rng: np.random.Generator,
                depth: int = 0, width: int = 0, K: int = 1,
                d_eps: int = 4, d_nu: int = 4, n: int | None = None) -> ChoiceModel:
    """Construct a freshly initialized model of the given kind.

    Linear coefficients start at zero; networks use the fan-balanced uniform
    init. For the latent-heterogeneity model the utility net is drawn first,
    then the K product nets, then the K customer nets.
    """
    if kind == MNL:
        return MNLModel(np.zeros(d_x), d_z=d_z)
    if kind == TASTENET:
        taste = init_network(NetworkSpec(d_z, d_x, depth, width), rng)
        return TasteNetModel(np.zeros(d_x), taste)
    if kind == DEEPMNL:
        net = init_network(NetworkSpec(d_x + d_z, 1, depth, width), rng)
        return DeepMNLModel(net, d_x, d_z)
    if kind == RUMNET:
        d = d_x + d_eps + d_z + d_nu
        utility = init_network(NetworkSpec(d, 1, depth, width), rng)
        eps_nets = [init_network(NetworkSpec(d_x, d_eps, depth, width), rng)
                    for _ in range(K)]
        nu_nets = [init_network(NetworkSpec(d_z, d_nu, depth, width), rng)
                   for _ in range(K)]
        return RumnetModel(utility, eps_nets, nu_nets, d_x, d_z)
    if kind == VNN:
        if n is None:
            raise ValueError("the vanilla-net model needs a fixed assortment size n")
        net = init_network(NetworkSpec(n * d_x + d_z, n, depth, width), rng)
        return VNNModel(net, n, d_x, d_z)
    raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")


def model_max_node_l1(model: ChoiceModel) -> float:
    """Measured per-node norm bound over every constituent network; linear
    coefficient vectors count as a single node."""
    best = 0.0
    for net in model.networks():
        best = max(best, max_node_l1(net))
    if hasattr(model, "beta"):
        best = max(best, float(np.abs(model.beta).sum()))
    return best
