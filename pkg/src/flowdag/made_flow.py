"""Masked autoregressive blocks and their stacked flow.

A block is a masked feed-forward network with a shared ReLU trunk and two
masked output heads (mu and alpha). Masks follow the degree rule: a unit of
degree m receives from units of degree <= m in hidden layers and from degree
< m at the output, so output j can only depend on inputs that precede it in
the block's ordering. The inverse map per sample is
noise = (x - mu(x)) * exp(-alpha(x)), a triangular bijection whose
log-determinant is -sum_j alpha_j. Stacking blocks with alternating orderings
lets the flow express dependencies in both directions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MaskedBlockSpec, MaskedLayer, Tensor

__all__ = [
    "MaskSet",
    "MadeBlock",
    "FlowModel",
    "NonFiniteError",
    "build_masks",
    "composed_connectivity",
    "stack_orderings",
    "block_inverse",
    "block_forward",
    "flow_log_likelihood",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class NonFiniteError(RuntimeError):
    """A forward pass produced NaN or infinity."""


@dataclass
class MaskSet:
    """Binary masks for one block, trunk layers first, output mask last."""

    ordering: tuple
    hidden_degrees: list
    masks: list

    @property
    def d(self) -> int:
        return len(self.ordering)


def _variable_degrees(ordering) -> np.ndarray:
    d = len(ordering)
    if sorted(ordering) != list(range(d)):
        raise ValueError(f"ordering must be a permutation of 0..{d - 1}, got {ordering}")
    deg = np.empty(d, dtype=np.int64)
    deg[list(ordering)] = np.arange(1, d + 1)
    return deg


def build_masks(d: int, hidden_sizes, ordering=None, seed: int | None = None,
                random_degrees: bool = False) -> MaskSet:
    """Degree-based mask construction.

    Variable degrees come from ``ordering`` (a permutation of 0..d-1 listing
    variables in dependency order). Hidden degrees cycle 1..d-1, assigned in
    even blocks across each layer's units so that every degree is populated;
    ``random_degrees`` samples them uniformly instead (reserved mode, uses
    ``seed``).
    """
    if d < 2:
        raise ValueError(f"build_masks requires d >= 2, got {d}")
    hidden_sizes = [int(h) for h in hidden_sizes]
    if not hidden_sizes or any(h < 1 for h in hidden_sizes):
        raise ValueError(f"hidden sizes must all be >= 1, got {hidden_sizes}")
    if ordering is None:
        ordering = tuple(range(d))
    ordering = tuple(int(v) for v in ordering)
    var_deg = _variable_degrees(ordering)

    rng = np.random.default_rng(seed)
    hidden_degrees = []
    for h in hidden_sizes:
        if random_degrees:
            degs = rng.integers(1, d, size=h)
        else:
            degs = 1 + (np.arange(h) * (d - 1)) // h
        hidden_degrees.append(degs.astype(np.int64))

    masks = []
    prev = var_deg
    for degs in hidden_degrees:
        masks.append((degs[None, :] >= prev[:, None]).astype(np.float64))
        prev = degs
    masks.append((var_deg[None, :] > prev[:, None]).astype(np.float64))

    mask_set = MaskSet(ordering=ordering, hidden_degrees=hidden_degrees, masks=masks)
    conn = composed_connectivity(mask_set)
    starved = [j for j in range(d) if var_deg[j] > 1 and not conn[j, :].any()]
    if starved:
        raise ValueError(
            f"outputs {starved} have no path from any input; "
            f"increase hidden sizes (got {hidden_sizes} for d={d})"
        )
    return mask_set


def _degenerate_masks(hidden_sizes) -> MaskSet:
    # d=1: no autoregressive structure exists, every mask is zero and the
    # heads reduce to their biases
    hidden_sizes = [int(h) for h in hidden_sizes]
    masks = [np.zeros((1, hidden_sizes[0]))]
    for prev, cur in zip(hidden_sizes, hidden_sizes[1:]):
        masks.append(np.zeros((prev, cur)))
    masks.append(np.zeros((hidden_sizes[-1], 1)))
    return MaskSet(ordering=(0,), hidden_degrees=[np.zeros(h, dtype=np.int64) for h in hidden_sizes],
                   masks=masks)


def composed_connectivity(mask_set: MaskSet) -> np.ndarray:
    """Boolean output-from-input reachability through the composed masks.

    Row = output, column = input, matching the Jacobian layout, so a natural
    ordering yields a strictly lower-triangular matrix.
    """
    prod = mask_set.masks[0]
    for m in mask_set.masks[1:]:
        prod = prod @ m
    return prod.T > 0


def stack_orderings(num_blocks: int, d: int) -> list:
    """Alternate the natural ordering with its reverse across the stack."""
    if num_blocks < 1:
        raise ValueError(f"num_blocks must be >= 1, got {num_blocks}")
    forward = tuple(range(d))
    backward = tuple(reversed(forward))
    return [forward if k % 2 == 0 else backward for k in range(num_blocks)]


class MadeBlock:
    """One masked block: ReLU trunk plus mu/alpha heads over shared features."""

    def __init__(self, mask_set: MaskSet, hidden_sizes, rng, alpha_bound: float = 8.0):
        self.d = mask_set.d
        self.hidden_sizes = [int(h) for h in hidden_sizes]
        self.mask_set = mask_set
        self.alpha_bound = float(alpha_bound)

        def init(n_in, n_out, mask):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out)) * mask
            return ad.parameter(w), ad.parameter(np.zeros(n_out))

        trunk = []
        sizes = [self.d] + self.hidden_sizes
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            w, b = init(n_in, n_out, mask_set.masks[i])
            trunk.append(MaskedLayer(w, b, mask_set.masks[i]))
        out_mask = mask_set.masks[-1]
        mu_w, mu_b = init(self.hidden_sizes[-1], self.d, out_mask)
        a_w, a_b = init(self.hidden_sizes[-1], self.d, out_mask)
        self.spec = MaskedBlockSpec(
            trunk=trunk,
            mu=MaskedLayer(mu_w, mu_b, out_mask),
            alpha=MaskedLayer(a_w, a_b, out_mask),
            alpha_bound=self.alpha_bound,
        )

    @classmethod
    def create(cls, d: int, hidden_sizes, ordering=None, rng=None, alpha_bound: float = 8.0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        mask_set = _degenerate_masks(hidden_sizes) if d == 1 else build_masks(d, hidden_sizes, ordering)
        return cls(mask_set, hidden_sizes, rng, alpha_bound)

    @property
    def ordering(self):
        return self.mask_set.ordering

    def parameters(self) -> list:
        layers = list(self.spec.trunk) + [self.spec.mu, self.spec.alpha]
        params = []
        for layer in layers:
            params.extend([layer.w, layer.b])
        return params

    def _numpy_mu_alpha(self, x: np.ndarray):
        # plain-array twin of the tape forward, used by sequential generation
        h = x
        for layer in self.spec.trunk:
            h = np.maximum(h @ (layer.w.data * layer.mask) + layer.b.data, 0.0)
        mu = h @ (self.spec.mu.w.data * self.spec.mu.mask) + self.spec.mu.b.data
        alpha = h @ (self.spec.alpha.w.data * self.spec.alpha.mask) + self.spec.alpha.b.data
        if self.alpha_bound > 0:
            alpha = self.alpha_bound * np.tanh(alpha / self.alpha_bound)
        return mu, alpha


def block_inverse(block: MadeBlock, x):
    """Map data to noise: n = (x - mu) * exp(-alpha), logdet = -sum_j alpha_j."""
    p = ad.block_forward_pass(block.spec, x)
    return ad.noise_from_pass(p)


def block_forward(block: MadeBlock, n) -> np.ndarray:
    """Generate x from noise by filling variables in degree order (d passes)."""
    n = n.data if isinstance(n, Tensor) else np.asarray(n, dtype=np.float64)
    x = np.zeros_like(n)
    for var in block.ordering:
        mu, alpha = block._numpy_mu_alpha(x)
        x[:, var] = n[:, var] * np.exp(alpha[:, var]) + mu[:, var]
    return x


class FlowModel:
    """Ordered stack of masked blocks composed into one bijection."""

    def __init__(self, blocks: list):
        if not blocks:
            raise ValueError("FlowModel needs at least one block")
        self.d = blocks[0].d
        self.blocks = blocks

    @classmethod
    def create(cls, d: int, num_blocks: int = 6, hidden_sizes=(100,), seed=0,
               alpha_bound: float = 8.0):
        rng = np.random.default_rng(seed)
        orderings = stack_orderings(num_blocks, d) if d > 1 else [(0,)] * num_blocks
        blocks = [MadeBlock.create(d, list(hidden_sizes), o, rng, alpha_bound)
                  for o in orderings]
        return cls(blocks)

    @property
    def orderings(self):
        return [b.ordering for b in self.blocks]

    def parameters(self) -> list:
        params = []
        for b in self.blocks:
            params.extend(b.parameters())
        return params

    def zero_parameters(self):
        """Reset to the identity map (mu = 0, alpha = 0); mainly for tests."""
        for p in self.parameters():
            p.data = np.zeros_like(p.data)

    def inverse(self, x):
        """Push data through every block's inverse; returns (n, total logdet)."""
        h = x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))
        total = None
        for k, block in enumerate(self.blocks):
            p = ad.block_forward_pass(block.spec, h)
            h, logdet = ad.noise_from_pass(p)
            if not np.isfinite(h.data).all():
                raise NonFiniteError(f"non-finite noise output in block {k}")
            total = logdet if total is None else ad.add(total, logdet)
        return h, total

    def inverse_with_jacobians(self, x):
        """Inverse pass that also assembles the composed per-sample Jacobian.

        Returns (n, total logdet, jac) with jac of shape (batch, d, d); all
        three stay differentiable w.r.t. the flow parameters.
        """
        h = x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))
        total = None
        jac = None
        for k, block in enumerate(self.blocks):
            p = ad.block_forward_pass(block.spec, h)
            block_jac = ad.jacobian_from_pass(block.spec, p)
            h, logdet = ad.noise_from_pass(p)
            if not np.isfinite(h.data).all():
                raise NonFiniteError(f"non-finite noise output in block {k}")
            total = logdet if total is None else ad.add(total, logdet)
            jac = block_jac if jac is None else ad.matmul(block_jac, jac)
        return h, total, jac

    def forward(self, n) -> np.ndarray:
        """Generate data from noise by inverting blocks last to first."""
        x = n.data if isinstance(n, Tensor) else np.asarray(n, dtype=np.float64)
        for block in reversed(self.blocks):
            x = block_forward(block, x)
        return x


def flow_log_likelihood(flow: FlowModel, x) -> Tensor:
    """Mean log density over the batch via change of variables."""
    n, logdet = flow.inverse(x)
    log_q = ad.tsum(ad.gaussian_logpdf(n), axis=-1)
    return ad.tmean(ad.add(log_q, logdet))


def save_checkpoint(flow: FlowModel, path) -> None:
    """Write a versioned npz with every array needed to rebuild the flow."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "d": np.array(flow.d),
        "num_blocks": np.array(len(flow.blocks)),
        "orderings": np.array([b.ordering for b in flow.blocks], dtype=np.int64),
        "alpha_bound": np.array(flow.blocks[0].alpha_bound),
        "hidden_sizes": np.array(flow.blocks[0].hidden_sizes, dtype=np.int64),
    }
    for k, block in enumerate(flow.blocks):
        for i, layer in enumerate(block.spec.trunk):
            arrays[f"block{k}_trunk{i}_w"] = layer.w.data
            arrays[f"block{k}_trunk{i}_b"] = layer.b.data
            arrays[f"block{k}_trunk{i}_mask"] = layer.mask
        for name in ("mu", "alpha"):
            layer = getattr(block.spec, name)
            arrays[f"block{k}_{name}_w"] = layer.w.data
            arrays[f"block{k}_{name}_b"] = layer.b.data
        arrays[f"block{k}_out_mask"] = block.spec.mu.mask
        for i, degs in enumerate(block.mask_set.hidden_degrees):
            arrays[f"block{k}_degrees{i}"] = degs
    np.savez(path, **arrays)


def load_checkpoint(path) -> FlowModel:
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        d = int(z["d"])
        num_blocks = int(z["num_blocks"])
        orderings = z["orderings"]
        alpha_bound = float(z["alpha_bound"])
        hidden_sizes = [int(h) for h in z["hidden_sizes"]]
        blocks = []
        for k in range(num_blocks):
            masks = [z[f"block{k}_trunk{i}_mask"] for i in range(len(hidden_sizes))]
            masks.append(z[f"block{k}_out_mask"])
            degrees = [z[f"block{k}_degrees{i}"] for i in range(len(hidden_sizes))]
            mask_set = MaskSet(ordering=tuple(int(v) for v in orderings[k]),
                               hidden_degrees=degrees, masks=masks)
            block = MadeBlock(mask_set, hidden_sizes, np.random.default_rng(0), alpha_bound)
            for i, layer in enumerate(block.spec.trunk):
                layer.w.data = z[f"block{k}_trunk{i}_w"]
                layer.b.data = z[f"block{k}_trunk{i}_b"]
            for name in ("mu", "alpha"):
                layer = getattr(block.spec, name)
                layer.w.data = z[f"block{k}_{name}_w"]
                layer.b.data = z[f"block{k}_{name}_b"]
            blocks.append(block)
    return FlowModel(blocks)
