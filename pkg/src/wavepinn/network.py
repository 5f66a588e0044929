"""Dense tanh networks with forward jets in the spatial input.

Spatial derivatives are propagated forward layer by layer (the input has only
``1 + p`` components); derivatives with respect to the weights come from torch
reverse mode through that propagation.  Everything runs in float64.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

DTYPE = torch.float64
ACTIVATIONS = ("tanh", "relu")


class JetOrderError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    """Layer widths ``(N_0, ..., N_L)`` and the hidden-layer activation."""

    widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(n) for n in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if self.widths[-1] != 1:
            raise ValueError("scalar output required (N_L = 1)")
        if min(self.widths) < 1:
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def L(self) -> int:
        return len(self.widths) - 1

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_params(self) -> int:
        return sum(m * n + m for n, m in zip(self.widths[:-1], self.widths[1:]))

    @classmethod
    def default(cls, p: int = 0, hidden: Sequence[int] = (64, 64, 64), activation: str = "tanh") -> "Architecture":
        return cls((1 + p, *hidden, 1), activation)


@dataclass(frozen=True, eq=False)
class Params:
    """Weights ``W[l]`` of shape ``(N_{l+1}, N_l)`` and biases ``b[l]``."""

    arch: Architecture
    weights: tuple[torch.Tensor, ...]
    biases: tuple[torch.Tensor, ...]

    def __post_init__(self):
        w = self.arch.widths
        if len(self.weights) != self.arch.L or len(self.biases) != self.arch.L:
            raise ValueError("number of layers does not match the architecture")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if tuple(W.shape) != (w[l + 1], w[l]) or tuple(b.shape) != (w[l + 1],):
                raise ValueError(f"layer {l + 1}: shapes {tuple(W.shape)}, {tuple(b.shape)} do not match {w}")

    def tensors(self) -> list[torch.Tensor]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_tensors(cls, arch: Architecture, ts: Sequence[torch.Tensor]) -> "Params":
        return cls(arch, tuple(ts[0::2]), tuple(ts[1::2]))

    def flat(self) -> np.ndarray:
        return torch.cat([t.detach().reshape(-1) for t in self.tensors()]).numpy().copy()

    @classmethod
    def from_flat(cls, arch: Architecture, v) -> "Params":
        v = torch.as_tensor(np.array(v, dtype=float), dtype=DTYPE)
        if v.numel() != arch.n_params:
            raise ValueError(f"expected {arch.n_params} values, got {v.numel()}")
        ts, pos = [], 0
        for n, m in zip(arch.widths[:-1], arch.widths[1:]):
            ts.append(v[pos : pos + m * n].reshape(m, n).clone())
            pos += m * n
            ts.append(v[pos : pos + m].clone())
            pos += m
        return cls.from_tensors(arch, ts)

    def trainable(self) -> "Params":
        """Detached copy whose tensors require gradients."""
        return Params.from_tensors(self.arch, [t.detach().clone().requires_grad_(True) for t in self.tensors()])

    def detached(self) -> "Params":
        return Params.from_tensors(self.arch, [t.detach().clone() for t in self.tensors()])

    def axpy(self, alpha: float, direction: "Params") -> "Params":
        """``self + alpha * direction`` (no gradient tracking)."""
        return Params.from_tensors(
            self.arch, [a.detach() + alpha * d.detach() for a, d in zip(self.tensors(), direction.tensors())]
        )


def init(arch: Architecture, seed: int) -> Params:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    ts = []
    for n, m in zip(arch.widths[:-1], arch.widths[1:]):
        lim = np.sqrt(6.0 / (n + m))
        ts.append(torch.as_tensor(rng.uniform(-lim, lim, size=(m, n)), dtype=DTYPE))
        ts.append(torch.zeros(m, dtype=DTYPE))
    return Params.from_tensors(arch, ts)


def zeros(arch: Architecture) -> Params:
    return Params.from_tensors(
        arch, [t for n, m in zip(arch.widths[:-1], arch.widths[1:]) for t in (torch.zeros(m, n, dtype=DTYPE), torch.zeros(m, dtype=DTYPE))]
    )


class Jet2(NamedTuple):
    """Value and first two derivatives in x; entries not requested are ``None``."""

    u: torch.Tensor
    ux: torch.Tensor | None = None
    uxx: torch.Tensor | None = None


def _act(name: str, h: torch.Tensor, order: int):
    if name == "tanh":
        a = torch.tanh(h)
        if order == 0:
            return a, None, None
        d1 = 1.0 - a * a
        return a, d1, (-2.0 * a * d1 if order == 2 else None)
    if order == 2:
        raise JetOrderError("relu networks have no second derivative")
    a = torch.relu(h)
    return a, (None if order == 0 else (h > 0).to(h.dtype)), None


POINT_CHUNK = 4096  # points per pass: keeps (chunk, width) activations in cache


def _propagate(theta: Params, z: torch.Tensor, order: int) -> Jet2:
    """Push ``z`` (..., N_0) through the layers; derivatives w.r.t. ``z[..., 0]``.

    Long point sets go through in chunks along the point axis (``z.shape[-2]``)
    and are concatenated; the result, gradients included, is unchanged.
    """
    if z.ndim >= 2 and z.shape[-2] > POINT_CHUNK:
        parts = [_propagate_block(theta, zc, order) for zc in torch.split(z, POINT_CHUNK, dim=-2)]
        cat = lambda ts: None if ts[0] is None else torch.cat(ts, dim=-1)
        return Jet2(*(cat([getattr(p, f) for p in parts]) for f in Jet2._fields))
    return _propagate_block(theta, z, order)


def _propagate_block(theta: Params, z: torch.Tensor, order: int) -> Jet2:
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if order == 2 and theta.arch.activation == "relu":
        raise JetOrderError("relu networks have no second derivative")
    if z.shape[-1] != theta.arch.n_inputs:
        raise ValueError(f"input has {z.shape[-1]} components, network expects {theta.arch.n_inputs}")
    L = theta.arch.L
    h = z
    hx = hxx = None
    for l, (W, b) in enumerate(zip(theta.weights, theta.biases)):
        if l == 0:
            g = h @ W.T + b
            gx = W[:, 0].expand_as(g) if order >= 1 else None
            gxx = torch.zeros_like(g) if order == 2 else None
        else:
            g = h @ W.T + b
            gx = hx @ W.T if order >= 1 else None
            gxx = hxx @ W.T if order == 2 else None
        if l == L - 1:
            h, hx, hxx = g, gx, gxx
            break
        a, d1, d2 = _act(theta.arch.activation, g, order)
        h = a
        hx = d1 * gx if order >= 1 else None
        hxx = d2 * gx * gx + d1 * gxx if order == 2 else None
    sq = lambda t: None if t is None else t[..., 0]
    return Jet2(sq(h), sq(hx), sq(hxx))


def _as_tensor(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a.to(DTYPE)
    return torch.as_tensor(np.asarray(a, dtype=float), dtype=DTYPE)


def inputs(x, mu=None) -> torch.Tensor:
    """Stack spatial points ``x`` (n,) with parameters ``mu`` (p,) or (m, p).

    Shape ``(n, 1 + p)`` for a single parameter, ``(m, n, 1 + p)`` for a batch.
    """
    x = _as_tensor(x).reshape(-1)
    if mu is None:
        return x[:, None]
    mu = _as_tensor(mu)
    if mu.ndim == 1:
        if mu.numel() == 0:
            return x[:, None]
        return torch.cat([x[:, None], mu.expand(x.shape[0], -1)], dim=1)
    m, p = mu.shape
    if p == 0:
        return x[None, :, None].expand(m, -1, 1)
    return torch.cat([x[None, :, None].expand(m, -1, 1), mu[:, None, :].expand(m, x.shape[0], p)], dim=2)


def forward(theta: Params, z) -> torch.Tensor:
    """Network output for inputs ``z`` of shape (..., N_0)."""
    return _propagate(theta, _as_tensor(z), 0).u


def forward_jet(theta: Params, x, mu=None, order: int = 2) -> Jet2:
    """``(u, u_x, u_xx)`` at spatial points ``x`` for parameter(s) ``mu``."""
    return _propagate(theta, inputs(x, mu), order)


# --------------------------------------------------------------------------
# model wrappers: anything with jet(x, mu, order)


class Network:
    """Callable view of ``Phi(.; theta)`` with the jet interface used by losses."""

    def __init__(self, theta: Params):
        self.theta = theta

    def jet(self, x, mu=None, order: int = 0) -> Jet2:
        return forward_jet(self.theta, x, mu, order)

    def __call__(self, x, mu=None) -> torch.Tensor:
        return self.jet(x, mu, 0).u


class ZeroMean:
    """``Q Phi = Phi - int_0^1 Phi``; the mean by a fixed quadrature (nodes, weights)."""

    def __init__(self, model, nodes, weights):
        self.model = model
        self.nodes = _as_tensor(nodes)
        self.weights = _as_tensor(weights)

    def mean(self, mu=None) -> torch.Tensor:
        return self.model.jet(self.nodes, mu, 0).u @ self.weights

    def jet(self, x, mu=None, order: int = 0) -> Jet2:
        j = self.model.jet(x, mu, order)
        return Jet2(j.u - self.mean(mu)[..., None], j.ux, j.uxx)

    def __call__(self, x, mu=None) -> torch.Tensor:
        return self.jet(x, mu, 0).u


class PeriodicLift:
    """``P Phi = Phi - (Phi(1) - Phi(0)) x``, which satisfies ``P Phi(0) = P Phi(1)``.

    Only values are matched, which is all ``H^1_per`` asks for.
    """

    def __init__(self, model):
        self.model = model

    def jump(self, mu=None) -> torch.Tensor:
        u = self.model.jet(np.array([0.0, 1.0]), mu, 0).u
        return u[..., 1] - u[..., 0]

    def jet(self, x, mu=None, order: int = 0) -> Jet2:
        j = self.model.jet(x, mu, order)
        s = self.jump(mu)[..., None]
        xt = _as_tensor(x).reshape(-1)
        return Jet2(j.u - s * xt, None if j.ux is None else j.ux - s, j.uxx)

    def __call__(self, x, mu=None) -> torch.Tensor:
        return self.jet(x, mu, 0).u


def project_zero_mean(model, grid) -> ZeroMean:
    """Wrap a network (or :class:`Params`) with the projector Q; ``grid`` has nodes and weights."""
    if isinstance(model, Params):
        model = Network(model)
    return ZeroMean(model, grid.nodes, grid.weights)


class Constant:
    """Network-shaped constant function, handy for tests and degenerate cases."""

    def __init__(self, c: float):
        self.c = float(c)

    def jet(self, x, mu=None, order: int = 0) -> Jet2:
        shape = inputs(x, mu).shape[:-1]
        z = torch.zeros(shape, dtype=DTYPE)
        return Jet2(z + self.c, z if order >= 1 else None, z if order == 2 else None)

    def __call__(self, x, mu=None):
        return self.jet(x, mu, 0).u


# --------------------------------------------------------------------------
# gradients


def grad(theta: Params, loss: Callable[[Params], torch.Tensor]) -> tuple[float, Params]:
    """Loss value and its gradient with respect to every entry of theta."""
    t = theta.trainable()
    value = loss(t)
    ts = t.tensors()
    if not value.requires_grad:
        gs = [torch.zeros_like(a) for a in ts]
    else:
        gs = torch.autograd.grad(value, ts, allow_unused=True)
        gs = [torch.zeros_like(a) if g is None else g for a, g in zip(ts, gs)]
    return float(value.detach()), Params.from_tensors(theta.arch, gs)


# --------------------------------------------------------------------------
# binary format: header "<4sII" (magic, L, activation code), L+1 uint32 widths,
# then for each layer W (row-major) and b as little-endian float64


_MAGIC = b"WNET"
_HEAD = struct.Struct("<4sII")


def save_params(path, theta: Params) -> None:
    arch = theta.arch
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(_MAGIC, arch.L, ACTIVATIONS.index(arch.activation)))
        fh.write(struct.pack(f"<{arch.L + 1}I", *arch.widths))
        for t in theta.tensors():
            fh.write(t.detach().numpy().astype("<f8").tobytes(order="C"))


def load_params(path) -> Params:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size:
        raise ValueError(f"{path}: truncated parameter file")
    magic, L, act = _HEAD.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    widths = struct.unpack_from(f"<{L + 1}I", raw, _HEAD.size)
    arch = Architecture(widths, ACTIVATIONS[act])
    body = raw[_HEAD.size + 4 * (L + 1) :]
    if len(body) != 8 * arch.n_params:
        raise ValueError(f"{path}: expected {arch.n_params} parameters, found {len(body) // 8}")
    return Params.from_flat(arch, np.frombuffer(body, dtype="<f8"))
