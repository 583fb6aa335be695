"""Minimal reverse-mode differentiation over batched float64 arrays.

The engine is deliberately small: a Tensor wraps a numpy array, and while a
Tape is active every primitive that touches a gradient-tracked tensor appends
one node (inputs, output, vjp closure) to the tape. ``Tape.backward`` walks
the node list once in reverse and returns a gradient map. Nodes are appended
in execution order, so the record is topologically sorted by construction.

Shape discipline is strict: apart from bias addition and scalar operands,
operand shapes must match exactly. This keeps each vjp a few lines and makes
shape bugs fail loudly at the op that caused them.

Input Jacobians of a masked block (trunk of masked affine + ReLU layers with
mu/alpha output heads, noise = (x - mu) * exp(-alpha)) are assembled
analytically: the chain product of transposed masked weight matrices with
ReLU indicator diagonals, combined with the exp(-alpha) diagonal and the
(x - mu) sensitivity of alpha. The ReLU indicators are piecewise constant in
the parameters, so the assembled product is itself an expression in recorded
primitives and one reverse pass differentiates scalar functions of Jacobian
entries with respect to the parameters. No nested or numerical
differentiation anywhere.

Convention: the ReLU derivative at exactly 0 is 0, both in ``relu``'s vjp and
in the indicator diagonals, so the analytic Jacobian and the subgradient used
by backward coincide everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "MaskedLayer",
    "MaskedBlockSpec",
    "tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "neg",
    "square",
    "sqrt",
    "exp",
    "tanh",
    "relu",
    "gaussian_logpdf",
    "tsum",
    "tmean",
    "matmul",
    "transpose",
    "trace",
    "trace_of_matrix_exp",
    "masked_affine",
    "masked_transpose",
    "scale_rows",
    "batch_identity",
    "indicator_outer",
    "flat_matmul",
    "flat_scale",
    "axes_to_batch",
    "block_forward_pass",
    "noise_from_pass",
    "input_jacobian",
    "jacobian_from_pass",
]

LOG_2PI = float(np.log(2.0 * np.pi))

_ACTIVE: "Tape | None" = None


class Tensor:
    """A float64 array plus a gradient-tracking flag. Hash/eq by identity."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(x, requires_grad: bool = False) -> Tensor:
    return Tensor(x, requires_grad)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def parameter(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


@dataclass
class Node:
    output: Tensor
    inputs: tuple
    vjp: object  # callable(grad_out, needs) -> tuple of grads aligned with inputs


class Gradients:
    """Gradient map returned by ``Tape.backward``, keyed by tensor identity."""

    def __init__(self, by_id: dict):
        self._by_id = by_id

    def __getitem__(self, t: Tensor) -> np.ndarray:
        return self._by_id[id(t)]

    def get(self, t: Tensor, default=None):
        return self._by_id.get(id(t), default)

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._by_id


class Tape:
    """Ordered record of primitive applications; single-writer per context."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = None
        return False

    def backward(self, loss: Tensor) -> Gradients:
        """Accumulate d(loss)/d(tensor) for every tracked tensor on this tape.

        Re-running backward on the same tape is deterministic: gradients are
        accumulated into fresh buffers in fixed reverse-node order.
        """
        if loss.data.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            needs = tuple(t.requires_grad for t in node.inputs)
            parts = node.vjp(g, needs)
            for inp, part in zip(node.inputs, parts):
                if part is None or not inp.requires_grad:
                    continue
                if part.shape != inp.data.shape:
                    raise AssertionError(
                        f"gradient shape {part.shape} != tensor shape {inp.data.shape}"
                    )
                prev = grads.get(id(inp))
                grads[id(inp)] = part if prev is None else prev + part
        return Gradients(grads)


def _record(out: Tensor, inputs: tuple, vjp) -> Tensor:
    if _ACTIVE is not None and out.requires_grad:
        _ACTIVE.nodes.append(Node(out, inputs, vjp))
    return out


def _any_grad(*ts) -> bool:
    return any(t.requires_grad for t in ts)


# ---------------------------------------------------------------------------
# elementwise and reduction primitives
# ---------------------------------------------------------------------------

def _check_addsub_shapes(a: Tensor, b: Tensor, opname: str):
    # allowed: identical shapes, scalar operand, or bias-vector add onto the
    # trailing axis of a 2-D batch
    if a.data.shape == b.data.shape:
        return "same"
    if b.data.shape == ():
        return "scalar_b"
    if a.data.shape == ():
        return "scalar_a"
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        return "bias"
    raise ValueError(f"{opname}: incompatible shapes {a.data.shape} and {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    kind = _check_addsub_shapes(a, b, "add")
    out = Tensor(a.data + b.data, _any_grad(a, b))

    def vjp(g, needs):
        ga = gb = None
        if needs[0]:
            ga = g if kind not in ("scalar_a",) else g.sum()
            ga = np.asarray(ga)
        if needs[1]:
            if kind == "scalar_b":
                gb = np.asarray(g.sum())
            elif kind == "bias":
                gb = g.sum(axis=0)
            else:
                gb = g
        return ga, gb

    return _record(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    kind = _check_addsub_shapes(a, b, "sub")
    out = Tensor(a.data - b.data, _any_grad(a, b))

    def vjp(g, needs):
        ga = gb = None
        if needs[0]:
            ga = np.asarray(g.sum()) if kind == "scalar_a" else g
        if needs[1]:
            if kind == "scalar_b":
                gb = np.asarray(-g.sum())
            elif kind == "bias":
                gb = -g.sum(axis=0)
            else:
                gb = -g
        return ga, gb

    return _record(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not (a.data.shape == b.data.shape or a.data.shape == () or b.data.shape == ()):
        raise ValueError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Tensor(a.data * b.data, _any_grad(a, b))
    adata, bdata = a.data, b.data

    def vjp(g, needs):
        ga = gb = None
        if needs[0]:
            ga = g * bdata
            if adata.shape == () and ga.shape != ():
                ga = np.asarray(ga.sum())
        if needs[1]:
            gb = g * adata
            if bdata.shape == () and gb.shape != ():
                gb = np.asarray(gb.sum())
        return ga, gb

    return _record(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _coerce(a)
    out = Tensor(-a.data, a.requires_grad)
    return _record(out, (a,), lambda g, needs: (-g,))


def square(a) -> Tensor:
    a = _coerce(a)
    out = Tensor(a.data * a.data, a.requires_grad)
    adata = a.data
    return _record(out, (a,), lambda g, needs: (2.0 * adata * g,))


def sqrt(a) -> Tensor:
    a = _coerce(a)
    if (a.data <= 0).any():
        raise ValueError("sqrt requires strictly positive entries (add an epsilon)")
    out = Tensor(np.sqrt(a.data), a.requires_grad)
    odata = out.data
    return _record(out, (a,), lambda g, needs: (g / (2.0 * odata),))


def exp(a) -> Tensor:
    a = _coerce(a)
    out = Tensor(np.exp(a.data), a.requires_grad)
    odata = out.data
    return _record(out, (a,), lambda g, needs: (g * odata,))


def tanh(a) -> Tensor:
    a = _coerce(a)
    out = Tensor(np.tanh(a.data), a.requires_grad)
    odata = out.data
    return _record(out, (a,), lambda g, needs: (g * (1.0 - odata * odata),))


def relu(a) -> Tensor:
    a = _coerce(a)
    ind = a.data > 0  # derivative at exactly 0 is 0
    out = Tensor(np.where(ind, a.data, 0.0), a.requires_grad)
    return _record(out, (a,), lambda g, needs: (g * ind,))


def gaussian_logpdf(a) -> Tensor:
    """Elementwise standard-normal log density: -x^2/2 - log(2*pi)/2."""
    a = _coerce(a)
    out = Tensor(-0.5 * a.data * a.data - 0.5 * LOG_2PI, a.requires_grad)
    adata = a.data
    return _record(out, (a,), lambda g, needs: (-adata * g,))


def tsum(a, axis: int | None = None) -> Tensor:
    a = _coerce(a)
    out = Tensor(a.data.sum(axis=axis), a.requires_grad)
    shape = a.data.shape

    def vjp(g, needs):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _record(out, (a,), vjp)


def tmean(a, axis: int | None = None) -> Tensor:
    a = _coerce(a)
    out = Tensor(a.data.mean(axis=axis), a.requires_grad)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def vjp(g, needs):
        if axis is None:
            return (np.broadcast_to(g / count, shape),)
        return (np.broadcast_to(np.expand_dims(g / count, axis), shape),)

    return _record(out, (a,), vjp)


# ---------------------------------------------------------------------------
# matrix primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product for 2-D/3-D operands; a 2-D operand broadcasts over batch."""
    a, b = _coerce(a), _coerce(b)
    an, bn = a.data.ndim, b.data.ndim
    if an not in (2, 3) or bn not in (2, 3):
        raise ValueError(f"matmul supports 2-D/3-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    if an == 3 and bn == 3 and a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"matmul: batch dimensions differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, _any_grad(a, b))
    adata, bdata = a.data, b.data

    def vjp(g, needs):
        ga = gb = None
        if needs[0]:
            if an == 2 and bn == 3:
                # sum over batch folded into one GEMM
                ga = np.tensordot(g, bdata, axes=([0, 2], [0, 2]))
            else:
                ga = g @ np.swapaxes(bdata, -1, -2)
        if needs[1]:
            if bn == 2 and an == 3:
                gb = np.tensordot(adata, g, axes=([0, 1], [0, 1]))
            else:
                gb = np.swapaxes(adata, -1, -2) @ g
        return ga, gb

    return _record(out, (a, b), vjp)


def transpose(a) -> Tensor:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got {a.data.shape}")
    out = Tensor(a.data.T.copy(), a.requires_grad)
    return _record(out, (a,), lambda g, needs: (g.T,))


def trace(a) -> Tensor:
    a = _coerce(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ValueError(f"trace expects a square 2-D tensor, got {a.data.shape}")
    d = a.data.shape[0]
    out = Tensor(np.trace(a.data), a.requires_grad)
    return _record(out, (a,), lambda g, needs: (g * np.eye(d),))


def trace_of_matrix_exp(a) -> Tensor:
    """tr(e^A) with analytic adjoint (e^A)^T; the constraint path's core node."""
    a = _coerce(a)
    e = linalg.matrix_exp(a.data)
    out = Tensor(np.trace(e), a.requires_grad)
    et = e.T.copy()
    return _record(out, (a,), lambda g, needs: (g * et,))


def masked_affine(x, w, mask, b) -> Tensor:
    """x @ (w * mask) + b for a 2-D batch x; mask is a constant 0/1 array."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != w.data.shape:
        raise ValueError(f"mask shape {mask.shape} != weight shape {w.data.shape}")
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"masked_affine: bad shapes x={x.data.shape} w={w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ValueError(f"masked_affine: bias shape {b.data.shape} != ({w.data.shape[1]},)")
    wm = w.data * mask
    out = Tensor(x.data @ wm + b.data, _any_grad(x, w, b))
    xdata = x.data

    def vjp(g, needs):
        gx = g @ wm.T if needs[0] else None
        gw = (xdata.T @ g) * mask if needs[1] else None
        gb = g.sum(axis=0) if needs[2] else None
        return gx, gw, gb

    return _record(out, (x, w, b), vjp)


def masked_transpose(w, mask) -> Tensor:
    """(w * mask)^T, the per-layer factor of the analytic input Jacobian."""
    w = _coerce(w)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != w.data.shape:
        raise ValueError(f"mask shape {mask.shape} != weight shape {w.data.shape}")
    out = Tensor((w.data * mask).T, w.requires_grad)
    return _record(out, (w,), lambda g, needs: (g.T * mask,))


def scale_rows(m, v) -> Tensor:
    """Row scaling: out[s, i, :] = m[(s,) i, :] * v[s, i].

    m is (batch, i, j) or a shared (i, j) matrix; v is (batch, i). This is the
    diagonal-matrix product used by the Jacobian chain, kept as a named
    primitive instead of generic broadcasting.
    """
    m, v = _coerce(m), _coerce(v)
    if v.data.ndim != 2:
        raise ValueError(f"scale_rows: v must be (batch, rows), got {v.data.shape}")
    if m.data.ndim == 3:
        if m.data.shape[:2] != v.data.shape:
            raise ValueError(f"scale_rows: {m.data.shape} incompatible with {v.data.shape}")
    elif m.data.ndim == 2:
        if m.data.shape[0] != v.data.shape[1]:
            raise ValueError(f"scale_rows: {m.data.shape} incompatible with {v.data.shape}")
    else:
        raise ValueError(f"scale_rows: m must be 2-D or 3-D, got {m.data.shape}")
    out = Tensor(m.data * v.data[:, :, None], _any_grad(m, v))
    mdata, vdata = m.data, v.data
    m_is_2d = m.data.ndim == 2

    def vjp(g, needs):
        gm = gv = None
        if needs[0]:
            gm = g * vdata[:, :, None]
            if m_is_2d:
                gm = gm.sum(axis=0)
        if needs[1]:
            gv = (g * mdata).sum(axis=-1)
        return gm, gv

    return _record(out, (m, v), vjp)


def batch_identity(batch: int, d: int) -> Tensor:
    return constant(np.broadcast_to(np.eye(d), (batch, d, d)))


# Jacobian chains carry (width, batch, d) "flat" stacks so each contraction
# runs as a single large GEMM; axes_to_batch restores (batch, d, d) at the end.

def indicator_outer(w, mask, s) -> Tensor:
    """Seed of the Jacobian chain: out[h, b, :] = s[b, h] * (w * mask)^T[h, :]."""
    w, s = _coerce(w), _coerce(s)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != w.data.shape:
        raise ValueError(f"mask shape {mask.shape} != weight shape {w.data.shape}")
    if s.data.ndim != 2 or s.data.shape[1] != w.data.shape[1]:
        raise ValueError(f"indicator shape {s.data.shape} incompatible with {w.data.shape}")
    wt = (w.data * mask).T                    # (width, d)
    st = np.ascontiguousarray(s.data.T)       # (width, batch); contiguous for fast broadcasting
    out = Tensor(wt[:, None, :] * st[:, :, None], w.requires_grad)

    def vjp(g, needs):
        gw = ((g * st[:, :, None]).sum(axis=1).T * mask) if needs[0] else None
        return gw, None

    return _record(out, (w, s), vjp)


def flat_matmul(a, m) -> Tensor:
    """(p, width) @ (width, batch, d) -> (p, batch, d) as one flat GEMM."""
    a, m = _coerce(a), _coerce(m)
    if a.data.ndim != 2 or m.data.ndim != 3 or a.data.shape[1] != m.data.shape[0]:
        raise ValueError(f"flat_matmul: bad shapes {a.data.shape} @ {m.data.shape}")
    width, batch, d = m.data.shape
    p = a.data.shape[0]
    mdata = m.data
    flat = np.reshape(mdata, (width, batch * d))
    out = Tensor((a.data @ flat).reshape(p, batch, d), _any_grad(a, m))
    adata = a.data

    def vjp(g, needs):
        gflat = np.reshape(g, (p, batch * d))
        ga = gflat @ flat.T if needs[0] else None
        gm = (adata.T @ gflat).reshape(width, batch, d) if needs[1] else None
        return ga, gm

    return _record(out, (a, m), vjp)


def flat_scale(m, s) -> Tensor:
    """Constant per-sample row scaling of a flat stack: out[h, b, :] = m[h, b, :] * s[b, h]."""
    m, s = _coerce(m), _coerce(s)
    if m.data.ndim != 3 or s.data.ndim != 2 or m.data.shape[:2] != (s.data.shape[1], s.data.shape[0]):
        raise ValueError(f"flat_scale: {m.data.shape} incompatible with {s.data.shape}")
    st = np.ascontiguousarray(s.data.T)
    out = Tensor(m.data * st[:, :, None], m.requires_grad)
    return _record(out, (m, s), lambda g, needs: (g * st[:, :, None] if needs[0] else None, None))


def axes_to_batch(m) -> Tensor:
    """(p, batch, d) -> (batch, p, d)."""
    m = _coerce(m)
    if m.data.ndim != 3:
        raise ValueError(f"axes_to_batch expects 3-D, got {m.data.shape}")
    out = Tensor(np.ascontiguousarray(m.data.transpose(1, 0, 2)), m.requires_grad)
    return _record(out, (m,), lambda g, needs: (np.ascontiguousarray(g.transpose(1, 0, 2)),))


# ---------------------------------------------------------------------------
# analytic input Jacobians of a masked autoregressive block
# ---------------------------------------------------------------------------

@dataclass
class MaskedLayer:
    w: Tensor
    b: Tensor
    mask: np.ndarray


@dataclass
class MaskedBlockSpec:
    """Structure of one block: masked ReLU trunk plus mu and alpha heads.

    ``alpha_bound`` > 0 squashes the raw alpha head through
    bound * tanh(raw / bound); 0 disables the squash.
    """

    trunk: list
    mu: MaskedLayer
    alpha: MaskedLayer
    alpha_bound: float = 8.0


class _BlockPass:
    """Forward values of one block shared by the noise and Jacobian paths."""

    __slots__ = ("x", "mu", "alpha", "x_minus_mu", "exp_neg_alpha",
                 "indicators", "squash_deriv")

    def __init__(self, x, mu, alpha, x_minus_mu, exp_neg_alpha, indicators, squash_deriv):
        self.x = x
        self.mu = mu
        self.alpha = alpha
        self.x_minus_mu = x_minus_mu
        self.exp_neg_alpha = exp_neg_alpha
        self.indicators = indicators
        self.squash_deriv = squash_deriv


def block_forward_pass(spec: MaskedBlockSpec, x) -> _BlockPass:
    """Run the block's networks once; mu and alpha come from a shared trunk."""
    x = _coerce(x)
    h = x
    indicators = []
    for layer in spec.trunk:
        pre = masked_affine(h, layer.w, layer.mask, layer.b)
        indicators.append(constant((pre.data > 0).astype(np.float64)))
        h = relu(pre)
    mu = masked_affine(h, spec.mu.w, spec.mu.mask, spec.mu.b)
    raw = masked_affine(h, spec.alpha.w, spec.alpha.mask, spec.alpha.b)
    if spec.alpha_bound > 0:
        t = tanh(mul(raw, 1.0 / spec.alpha_bound))
        alpha = mul(t, spec.alpha_bound)
        squash_deriv = sub(constant(np.ones(t.data.shape)), square(t))
    else:
        alpha = raw
        squash_deriv = None
    x_minus_mu = sub(x, mu)
    exp_neg_alpha = exp(neg(alpha))
    return _BlockPass(x, mu, alpha, x_minus_mu, exp_neg_alpha, indicators, squash_deriv)


def noise_from_pass(p: _BlockPass):
    """(noise, per-sample logdet) of the block's inverse map."""
    n = mul(p.x_minus_mu, p.exp_neg_alpha)
    logdet = neg(tsum(p.alpha, axis=-1))
    return n, logdet


def jacobian_from_pass(spec: MaskedBlockSpec, p: _BlockPass) -> Tensor:
    """Per-sample Jacobian d(noise)/d(x) of the block's inverse, on tape.

    With J_mu, J_alpha the head Jacobians through the masked trunk,
    dN_j/dx_k = exp(-alpha_j) * (delta_jk - J_mu[j,k] - (x_j - mu_j) * J_alpha[j,k]).
    """
    if not spec.trunk:
        raise ValueError("jacobian assembly requires at least one trunk layer")
    batch, d = p.x.data.shape
    # chain in flat (width, batch, d) layout: every contraction is one GEMM
    jac_h = indicator_outer(spec.trunk[0].w, spec.trunk[0].mask, p.indicators[0])
    for layer, ind in zip(spec.trunk[1:], p.indicators[1:]):
        jac_h = flat_scale(flat_matmul(masked_transpose(layer.w, layer.mask), jac_h), ind)
    jac_mu = axes_to_batch(flat_matmul(masked_transpose(spec.mu.w, spec.mu.mask), jac_h))
    jac_alpha = axes_to_batch(flat_matmul(masked_transpose(spec.alpha.w, spec.alpha.mask), jac_h))
    if p.squash_deriv is not None:
        jac_alpha = scale_rows(jac_alpha, p.squash_deriv)
    inner = sub(sub(batch_identity(batch, d), jac_mu),
                scale_rows(jac_alpha, p.x_minus_mu))
    return scale_rows(inner, p.exp_neg_alpha)


def input_jacobian(spec: MaskedBlockSpec, x) -> Tensor:
    """Stack of per-sample Jacobians of the block's inverse output w.r.t. x."""
    return jacobian_from_pass(spec, block_forward_pass(spec, x))
