"""Constrained training loop: Adam inside, augmented Lagrangian outside.

The inner solver minimizes
    NLL(batch) + lambda * h + (rho / 2) * h^2 + l1 * sum(W offdiag)
with lambda and rho frozen; h is the acyclicity value of the Jacobian-derived
adjacency on a per-step sub-batch. Between inner solves, h is re-evaluated on
the full dataset, the multiplier takes lambda += rho * h, and rho grows
tenfold whenever h failed to shrink below a quarter of its previous value.
The loop ends when h drops under the tolerance, rho exceeds its cap, or the
iteration budget runs out; the final adjacency is thresholded and repaired to
a DAG by deleting the weakest cycle edges.

Data is standardized column-wise before training (the flow targets a
standard-normal base); results are reported in the original column order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dag_constraint as dc
from . import graphio, linalg, made_flow
from .autodiff import Tape, Tensor
from .made_flow import FlowModel, NonFiniteError

__all__ = [
    "TrainConfig",
    "TrainState",
    "TrainResult",
    "OuterRecord",
    "Adam",
    "DivergenceError",
    "standardize",
    "init_state",
    "augmented_objective",
    "inner_minimize",
    "outer_loop",
    "schedule_step",
    "threshold_and_repair",
]

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    num_blocks: int = 6
    hidden_sizes: tuple = (100,)
    activation: str = "relu"
    learning_rate: float = 1e-3
    inner_steps: int = 3000
    batch_size: int = 256          # capped at the dataset size
    lambda_init: float = 0.0
    rho_init: float = 1.0
    rho_max: float = 1e16
    h_tolerance: float = 1e-8
    max_outer_iters: int = 20
    jacobian_batch: int = 256
    threshold: float = 0.3
    l1_weight: float = 0.0
    seed: int = 0
    constraint: str = "exp"        # "exp" or "poly"
    poly_alpha: float = 0.0        # 0 means 1/d
    alpha_bound: float = 8.0
    guard_every: int = 200         # divergence-guard cadence in steps

    def validate(self):
        if self.num_blocks < 1 or self.inner_steps < 0 or self.max_outer_iters < 1:
            raise ValueError("num_blocks, inner_steps, max_outer_iters must be positive")
        if min(self.learning_rate, self.batch_size, self.jacobian_batch) <= 0:
            raise ValueError("learning_rate, batch_size, jacobian_batch must be positive")
        if self.rho_init <= 0 or self.rho_init > self.rho_max:
            raise ValueError("need 0 < rho_init <= rho_max")
        if self.h_tolerance <= 0 or self.threshold < 0 or self.l1_weight < 0:
            raise ValueError("h_tolerance must be > 0; threshold and l1_weight >= 0")
        if self.activation != "relu":
            raise ValueError(f"only relu is supported, got {self.activation!r}")
        if self.constraint not in ("exp", "poly"):
            raise ValueError(f"constraint must be 'exp' or 'poly', got {self.constraint!r}")
        return self


@dataclass
class OuterRecord:
    k: int
    nll: float
    h: float
    lam: float
    rho: float
    edges: int


@dataclass
class TrainState:
    config: TrainConfig
    flow: FlowModel
    params: list
    lam: float
    rho: float
    optimizer: "Adam"
    rng: np.random.Generator
    outer_iter: int = 0
    history: list = field(default_factory=list)


@dataclass
class TrainResult:
    flow: FlowModel
    adjacency: np.ndarray
    graph: np.ndarray
    history: list
    converged: bool
    state: TrainState


class Adam:
    """Adam with bias correction; moments persist across outer iterations."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)


def standardize(data):
    """Center and scale each column to unit variance; constant columns get scale 1."""
    data = np.asarray(data, dtype=np.float64)
    mean = data.mean(axis=0)
    scale = data.std(axis=0)
    if (scale == 0).any():
        log.warning("constant columns at indices %s", list(np.flatnonzero(scale == 0)))
        scale = np.where(scale == 0, 1.0, scale)
    return (data - mean) / scale, mean, scale


def init_state(config: TrainConfig, d: int) -> TrainState:
    config.validate()
    flow = FlowModel.create(
        d,
        num_blocks=config.num_blocks,
        hidden_sizes=config.hidden_sizes,
        seed=config.seed,
        alpha_bound=config.alpha_bound,
    )
    params = flow.parameters()
    return TrainState(
        config=config,
        flow=flow,
        params=params,
        lam=config.lambda_init,
        rho=config.rho_init,
        optimizer=Adam(params, lr=config.learning_rate),
        rng=np.random.default_rng(config.seed),
    )


def _constraint_value(state: TrainState, w: Tensor) -> Tensor:
    cfg = state.config
    if cfg.constraint == "poly":
        alpha = cfg.poly_alpha if cfg.poly_alpha > 0 else 1.0 / w.data.shape[0]
        return dc.h_poly(w, alpha=alpha)
    return dc.h_exp(w)


def augmented_objective(state: TrainState, batch) -> Tensor:
    """Scalar training objective on the tape; see the module docstring."""
    cfg = state.config
    batch = np.asarray(batch, dtype=np.float64)
    jb = min(cfg.jacobian_batch, len(batch))
    if jb == len(batch):
        n, logdet, jac = state.flow.inverse_with_jacobians(batch)
        ll = ad.tmean(ad.add(ad.tsum(ad.gaussian_logpdf(n), axis=-1), logdet))
    else:
        ll = made_flow.flow_log_likelihood(state.flow, batch)
        _, _, jac = state.flow.inverse_with_jacobians(batch[:jb])
    nll = ad.neg(ll)
    w = dc.jacobian_to_adjacency(jac)
    h = _constraint_value(state, w)
    # |h|^2 written as h^2: both constraint forms are nonnegative
    objective = ad.add(nll, ad.add(ad.mul(h, state.lam),
                                   ad.mul(ad.square(h), 0.5 * state.rho)))
    if cfg.l1_weight > 0:
        objective = ad.add(objective, ad.mul(ad.tsum(w), cfg.l1_weight))
    for name, term in (("nll", nll), ("h", h), ("objective", objective)):
        if not np.isfinite(term.data):
            raise NonFiniteError(f"{name} term is non-finite (lam={state.lam}, rho={state.rho})")
    return objective


def inner_minimize(state: TrainState, data, objective_fn=None) -> TrainState:
    """Run ``inner_steps`` Adam updates with lambda and rho frozen.

    A fixed evaluation batch guards against divergence: if its objective ever
    exceeds the running best by more than 5%, training aborts with advice to
    lower the learning rate.
    """
    cfg = state.config
    objective_fn = objective_fn or augmented_objective
    data = np.asarray(data, dtype=np.float64)
    n = len(data)
    batch_size = min(cfg.batch_size, n)
    eval_batch = data[:batch_size]

    def eval_objective():
        return float(objective_fn(state, eval_batch).data)

    # the running best starts at the first checkpoint, after the transient
    # that follows a lambda/rho jump (stale Adam momentum) has settled; a
    # single noisy checkpoint above the 5% allowance is minibatch jitter,
    # three consecutive ones are divergence
    best = None
    violations = 0
    order = None
    cursor = n  # force a reshuffle on the first step
    for step in range(cfg.inner_steps):
        if cursor + batch_size > n:
            order = state.rng.permutation(n)
            cursor = 0
        batch = data[order[cursor:cursor + batch_size]]
        cursor += batch_size
        with Tape() as tape:
            objective = objective_fn(state, batch)
            grads = tape.backward(objective)
        state.optimizer.step(grads)
        if (step + 1) % cfg.guard_every == 0 or step + 1 == cfg.inner_steps:
            current = eval_objective()
            if best is not None and current > best + 0.05 * max(abs(best), 1.0):
                violations += 1
                if violations >= 3:
                    raise DivergenceError(
                        f"objective rose from {best:.6g} to {current:.6g} during the "
                        f"inner solve; try a smaller learning_rate than {cfg.learning_rate}"
                    )
            else:
                violations = 0
                best = current if best is None else min(best, current)
    return state


def evaluate_full(state: TrainState, data, chunk: int = 1024):
    """(mean NLL, h, adjacency) over the whole dataset, off the tape."""
    data = np.asarray(data, dtype=np.float64)
    total_ll = 0.0
    sum_sq = None
    for start in range(0, len(data), chunk):
        part = data[start:start + chunk]
        n, logdet, jac = state.flow.inverse_with_jacobians(part)
        log_q = -0.5 * (n.data**2).sum(axis=1) - 0.5 * n.data.shape[1] * ad.LOG_2PI
        total_ll += float((log_q + logdet.data).sum())
        piece = (jac.data**2).sum(axis=0)
        sum_sq = piece if sum_sq is None else sum_sq + piece
    d = data.shape[1]
    w = np.sqrt(sum_sq.T / len(data) + dc.SQRT_EPS) * (1.0 - np.eye(d))
    h = float(_constraint_value(state, ad.constant(w)).data)
    return -total_ll / len(data), h, w


def schedule_step(lam: float, rho: float, h: float, h_prev: float | None):
    """One multiplier/penalty update: lam += rho*h, then rho *= 10 on slow progress."""
    lam = lam + rho * h
    if h_prev is not None and abs(h) > 0.25 * abs(h_prev):
        rho = 10.0 * rho
    return lam, rho


def threshold_and_repair(w, omega: float) -> np.ndarray:
    """Edges with weight > omega, then drop weakest cycle edges until acyclic."""
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    w = np.asarray(w, dtype=np.float64)
    graph = w > omega
    np.fill_diagonal(graph, False)

    def reaches(src, dst, g):
        seen = {src}
        frontier = [src]
        while frontier:
            u = frontier.pop()
            if u == dst:
                return True
            for v in np.flatnonzero(g[u]):
                if v not in seen:
                    seen.add(int(v))
                    frontier.append(int(v))
        return dst in seen

    while not linalg.is_acyclic(graph):
        cycle_edges = [(w[i, j], i, j)
                       for i, j in zip(*np.nonzero(graph))
                       if reaches(j, i, graph)]
        weight, i, j = min(cycle_edges)
        graph[i, j] = False
    return graph


def outer_loop(config: TrainConfig, data, names=None, out_dir=None,
               state: TrainState | None = None) -> TrainResult:
    """Full training run on raw data; see the module docstring for the schedule.

    Pass ``state`` to resume or warm-start from an existing flow.
    """
    config.validate()
    data = np.asarray(data, dtype=np.float64)
    names = names or graphio.default_names(data.shape[1])
    std_data, _, _ = standardize(data)
    if state is None:
        state = init_state(config, data.shape[1])
    if out_dir is not None:
        out_dir = Path(out_dir)

    log_lines = []
    prev_graph = None
    h_prev = None
    converged = False
    w = np.zeros((data.shape[1], data.shape[1]))
    graph = w > 0
    for k in range(1, config.max_outer_iters + 1):
        state.outer_iter = k
        inner_minimize(state, std_data)
        nll, h, w = evaluate_full(state, std_data)
        graph = threshold_and_repair(w, config.threshold)
        record = OuterRecord(k=k, nll=nll, h=h, lam=state.lam, rho=state.rho,
                             edges=int(graph.sum()))
        state.history.append(record)
        line = (f"k={record.k} nll={record.nll:.6f} h={record.h:.6e} "
                f"lambda={record.lam:.6e} rho={record.rho:.6e} edges={record.edges}")
        log.info(line)
        log_lines.append(line)
        if out_dir is not None:
            snap = graphio.emit_dot(graph, names, prev_graph, include_removed=False)
            (out_dir / f"snapshot_{k}.dot").write_text(snap)
            diff = graphio.emit_dot(graph, names, prev_graph)
            (out_dir / f"snapshot_{k}_diff.dot").write_text(diff)
        prev_graph = graph
        if h < config.h_tolerance:
            converged = True
            break
        state.lam, state.rho = schedule_step(state.lam, state.rho, h, h_prev)
        h_prev = h
        if state.rho > config.rho_max:
            break

    if not converged:
        log.warning("did not reach h < %.1e (final h=%.3e, rho=%.3e)",
                    config.h_tolerance, state.history[-1].h, state.rho)
    if out_dir is not None:
        (out_dir / "train_log.txt").write_text("\n".join(log_lines) + "\n")
    return TrainResult(flow=state.flow, adjacency=w, graph=graph,
                       history=state.history, converged=converged, state=state)
