"""Minimal reverse-mode differentiation engine sized for a ~5k parameter model.

Values are float64 numpy arrays. Each op returns a Node holding the forward
value and a closure that scatters the upstream adjoint to its parents.
Backward visits nodes in reverse topological order exactly once, so adjoints
of shared subexpressions accumulate additively.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = [
    "Node",
    "Parameter",
    "constant",
    "add",
    "scale",
    "conv_same_temporal",
    "expand_maps",
    "slice_map",
    "project_channels",
    "batch_norm",
    "BatchNormState",
    "dense",
    "softmax",
    "log_variance",
    "binary_cross_entropy",
    "stack_scalars",
    "Adam",
]


def _as_f64(x):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericalError("non-finite value entering the computation graph")
    return a


class Node:
    """A value in the computation graph with an accumulated adjoint."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = _as_f64(value)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=1.0):
        """Run reverse-mode accumulation from this node.

        `seed` scales the whole gradient (useful for weighted loss terms).
        """
        if self.value.ndim != 0:
            raise NumericalError("backward requires a scalar root node")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(float(seed))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad = self.grad + g


class Parameter(Node):
    """Trainable leaf node."""

    def __init__(self, value, name=""):
        super().__init__(value, requires_grad=True)
        self.name = name

    __slots__ = ("name",)


def constant(value):
    return Node(value)


def _maybe_backward(parent, g):
    if parent.requires_grad:
        parent._accumulate(g)


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise NumericalError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _maybe_backward(a, g)
        _maybe_backward(b, g)

    return Node(a.value + b.value, (a, b), backward)


def scale(a: Node, s: float) -> Node:
    s = float(s)

    def backward(g):
        _maybe_backward(a, g * s)

    return Node(a.value * s, (a,), backward)


def stack_scalars(nodes) -> Node:
    """Stack 0-d/1-element nodes into a vector (used for small param groups)."""
    nodes = list(nodes)

    def backward(g):
        for i, n in enumerate(nodes):
            _maybe_backward(n, np.asarray(g[i]).reshape(n.shape))

    return Node(np.stack([n.value.reshape(()) for n in nodes]), tuple(nodes), backward)


def stack_rows(nodes) -> Node:
    """Stack equal-length 1-d nodes into a matrix, one per row."""
    nodes = list(nodes)

    def backward(g):
        for i, n in enumerate(nodes):
            _maybe_backward(n, g[i])

    return Node(np.stack([n.value for n in nodes]), tuple(nodes), backward)


def concat_columns(nodes) -> Node:
    """Concatenate N x d_i nodes along the feature axis."""
    nodes = list(nodes)
    widths = [n.shape[1] for n in nodes]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for i, n in enumerate(nodes):
            _maybe_backward(n, g[:, offsets[i]:offsets[i + 1]])

    return Node(np.concatenate([n.value for n in nodes], axis=1), tuple(nodes), backward)


def expand_maps(x: Node, k: int) -> Node:
    """Repeat a single feature map N x 1 x C x T into N x k x C x T."""
    if x.shape[1] != 1:
        raise NumericalError("expand_maps expects a single input map")

    def backward(g):
        _maybe_backward(x, g.sum(axis=1, keepdims=True))

    return Node(np.repeat(x.value, k, axis=1), (x,), backward)


def slice_map(x: Node, index: int) -> Node:
    """Select feature map `index`: N x K x C x T -> N x C x T."""

    def backward(g):
        full = np.zeros_like(x.value)
        full[:, index] = g
        _maybe_backward(x, full)

    return Node(x.value[:, index], (x,), backward)


def conv_same_temporal(x: Node, kernels: Node, bias: Node | None = None) -> Node:
    """Depthwise temporal convolution with zero 'same' padding.

    x: N x K x C x T, kernels: K x k. Feature map i is convolved along the
    time axis with kernel i only; channels are untouched. Output time length
    equals input time length.
    """
    n_maps = x.shape[1]
    if kernels.value.ndim != 2 or kernels.shape[0] != n_maps:
        raise NumericalError(
            f"kernel shape {kernels.shape} incompatible with {n_maps} feature maps")
    klen = kernels.shape[1]
    t_len = x.shape[3]
    if klen > t_len:
        raise NumericalError("kernel longer than the time axis")
    pad_l = (klen - 1) // 2
    pad_r = klen // 2

    xpad = np.pad(x.value, ((0, 0), (0, 0), (0, 0), (pad_l, pad_r)))
    windows = np.lib.stride_tricks.sliding_window_view(xpad, klen, axis=3)
    out = np.einsum("nkctw,kw->nkct", windows, kernels.value)
    parents = [x, kernels]
    if bias is not None:
        out = out + bias.value[None, :, None, None]
        parents.append(bias)

    def backward(g):
        if kernels.requires_grad:
            kernels._accumulate(np.einsum("nkctw,nkct->kw", windows, g))
        if x.requires_grad:
            gpad = np.pad(g, ((0, 0), (0, 0), (0, 0), (pad_r, pad_l)))
            gwin = np.lib.stride_tricks.sliding_window_view(gpad, klen, axis=3)
            x._accumulate(np.einsum("nkctw,kw->nkct", gwin, kernels.value[:, ::-1]))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return Node(out, tuple(parents), backward)


def project_channels(x: Node, w: np.ndarray) -> Node:
    """Apply a constant spatial projection: N x C x T -> N x d x T via w^T X."""
    w = np.asarray(w, dtype=np.float64)

    def backward(g):
        _maybe_backward(x, np.einsum("cd,ndt->nct", w, g))

    return Node(np.einsum("cd,nct->ndt", w, x.value), (x,), backward)


class BatchNormState:
    """Running statistics for one batch-norm layer (not part of the graph)."""

    def __init__(self, n_features, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Node, gamma: Node, beta: Node, state: BatchNormState,
               training: bool) -> Node:
    """Batch normalization over all axes except the feature axis.

    2D flavour: x is N x K x C x T, features are the K maps. 1D flavour:
    x is N x F, features are the F columns. Feature axis is axis 1 in both.
    """
    reduce_axes = tuple(i for i in range(x.value.ndim) if i != 1)
    feat_shape = [1] * x.value.ndim
    feat_shape[1] = x.shape[1]

    if training:
        if x.shape[0] < 2:
            raise NumericalError("batch norm in train mode requires batch size >= 2")
        mean = x.value.mean(axis=reduce_axes)
        var = x.value.var(axis=reduce_axes)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean
        state.running_var = (1 - m) * state.running_var + m * var
    else:
        mean = state.running_mean
        var = state.running_var

    mean_b = mean.reshape(feat_shape)
    istd_b = 1.0 / np.sqrt(var + state.eps).reshape(feat_shape)
    xhat = (x.value - mean_b) * istd_b
    out = gamma.value.reshape(feat_shape) * xhat + beta.value.reshape(feat_shape)
    count = x.value.size // x.shape[1]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=reduce_axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=reduce_axes))
        if x.requires_grad:
            ghat = g * gamma.value.reshape(feat_shape)
            if training:
                # batch statistics depend on x
                sum_ghat = ghat.sum(axis=reduce_axes, keepdims=True)
                sum_ghat_xhat = (ghat * xhat).sum(axis=reduce_axes, keepdims=True)
                dx = istd_b * (ghat - sum_ghat / count - xhat * sum_ghat_xhat / count)
            else:
                dx = ghat * istd_b
            x._accumulate(dx)

    return Node(out, (x, gamma, beta), backward)


def dense(x: Node, w: Node, b: Node) -> Node:
    """Affine map x @ w + b for x: N x d_in, w: d_in x d_out."""
    if x.shape[1] != w.shape[0] or b.shape[0] != w.shape[1]:
        raise NumericalError(
            f"dense shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.value.T)
        if w.requires_grad:
            w._accumulate(x.value.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return Node(x.value @ w.value + b.value, (x, w, b), backward)


def softmax(x: Node) -> Node:
    """Numerically stable softmax along the last axis."""
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            x._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return Node(s, (x,), backward)


def log_variance(x: Node) -> Node:
    """Log of the per-row population variance along the last axis."""
    t_len = x.shape[-1]
    if t_len < 2:
        raise NumericalError("variance needs at least two time points")
    centered = x.value - x.value.mean(axis=-1, keepdims=True)
    var = (centered ** 2).mean(axis=-1)
    if np.any(var <= 0):
        idx = np.argwhere(var <= 0)[0]
        raise NumericalError(f"zero-variance row at index {tuple(idx)}")

    def backward(g):
        if x.requires_grad:
            x._accumulate((2.0 / t_len) * centered * (g / var)[..., None])

    return Node(np.log(var), (x,), backward)


def binary_cross_entropy(probs: Node, targets: np.ndarray) -> Node:
    """Elementwise BCE summed over all entries; probabilities are clamped.

    Clamped entries contribute zero gradient (clamp acts as a stop).
    """
    targets = np.asarray(targets, dtype=np.float64)
    lo, hi = 1e-12, 1.0 - 1e-12
    clamped = np.clip(probs.value, lo, hi)
    loss = -(targets * np.log(clamped) + (1 - targets) * np.log(1 - clamped))
    inside = (probs.value > lo) & (probs.value < hi)

    def backward(g):
        if probs.requires_grad:
            dp = -(targets / clamped - (1 - targets) / (1 - clamped))
            probs._accumulate(g * dp * inside)

    return Node(loss.sum(), (probs,), backward)


def mean_of(x: Node) -> Node:
    n = x.value.size

    def backward(g):
        _maybe_backward(x, np.full_like(x.value, g / n))

    return Node(x.value.mean(), (x,), backward)


class Adam:
    """Adam with per-group learning rates and L1/L2 regularization.

    Each group is a dict with keys: params (list of Parameter), lr, and
    optional l1 / l2 factors applied to every parameter in the group.
    """

    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = []
        for g in groups:
            params = list(g["params"])
            self.groups.append({
                "params": params,
                "lr": float(g["lr"]),
                "l1": float(g.get("l1", 0.0)),
                "l2": float(g.get("l2", 0.0)),
                "m": [np.zeros_like(p.value) for p in params],
                "v": [np.zeros_like(p.value) for p in params],
            })
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"]:
                p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1 - self.beta1 ** t
        bc2 = 1 - self.beta2 ** t
        for g in self.groups:
            for i, p in enumerate(g["params"]):
                grad = p.grad
                if grad is None:
                    grad = np.zeros_like(p.value)
                grad = np.asarray(grad, dtype=np.float64).reshape(p.value.shape)
                if not np.all(np.isfinite(grad)):
                    name = getattr(p, "name", "") or f"group param {i}"
                    raise NumericalError(f"non-finite gradient for {name}")
                if g["l2"]:
                    grad = grad + g["l2"] * p.value
                if g["l1"]:
                    grad = grad + g["l1"] * np.sign(p.value)
                g["m"][i] = self.beta1 * g["m"][i] + (1 - self.beta1) * grad
                g["v"][i] = self.beta2 * g["v"][i] + (1 - self.beta2) * grad ** 2
                mhat = g["m"][i] / bc1
                vhat = g["v"][i] / bc2
                p.value = p.value - g["lr"] * mhat / (np.sqrt(vhat) + self.eps)
