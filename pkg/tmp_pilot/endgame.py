"""Compare inner-solve stabilizers in the high-rho endgame on a fast rig."""
import sys, time
import numpy as np
from flowdag import synth, trainer, metrics
from flowdag.trainer import TrainConfig, init_state, inner_minimize, evaluate_full, schedule_step, threshold_and_repair, DivergenceError

variant = sys.argv[1]  # base | anneal | reset | anneal+reset
g = synth.sample_er_dag(5, 1, seed=3)
gt = synth.ground_truth_for(g, "gp")
data, _, _ = trainer.standardize(synth.simulate_sem(gt, 500, seed=3))

cfg = TrainConfig(num_blocks=6, hidden_sizes=(100,), inner_steps=1000,
                  batch_size=256, jacobian_batch=256, max_outer_iters=18, seed=0)
state = init_state(cfg, 5)
h_prev = None
t0 = time.time()
for k in range(1, cfg.max_outer_iters + 1):
    if "anneal" in variant:
        state.optimizer.lr = cfg.learning_rate / max(1.0, np.sqrt(state.rho / 1e6))
    if "reset" in variant and k > 1:
        state.optimizer.m = [np.zeros_like(p.data) for p in state.params]
        state.optimizer.v = [np.zeros_like(p.data) for p in state.params]
        state.optimizer.t = 0
    try:
        inner_minimize(state, data)
    except DivergenceError as e:
        print(f"k={k} TRIPPED: {e}")
        break
    nll, h, w = evaluate_full(state, data)
    edges = int(threshold_and_repair(w, cfg.threshold).sum())
    print(f"k={k} nll={nll:.3f} h={h:.3e} rho={state.rho:.0e} lr={state.optimizer.lr:.1e} edges={edges} t={time.time()-t0:.0f}s", flush=True)
    if h < cfg.h_tolerance:
        print("CONVERGED")
        break
    state.lam, state.rho = schedule_step(state.lam, state.rho, h, h_prev)
    h_prev = h
    if state.rho > cfg.rho_max:
        break
graph = threshold_and_repair(w, cfg.threshold)
print(metrics.metrics_report(graph, g))
