import numpy as np, time, logging, json
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s", datefmt="%H:%M:%S")
from flowdag import synth, metrics
from flowdag.trainer import TrainConfig, outer_loop

results = []
for seed in [0, 1]:
    g = synth.sample_er_dag(10, 1, seed=seed)
    gt = synth.ground_truth_for(g, "gp")
    data = synth.simulate_sem(gt, 1000, seed=seed)
    cfg = TrainConfig(seed=seed)
    t0 = time.time()
    res = outer_loop(cfg, data)
    dt = time.time() - t0
    rep = metrics.metrics_report(res.graph, g)
    rep.update(seed=seed, time_s=round(dt, 1), converged=res.converged,
               final_h=res.history[-1].h, outer_iters=len(res.history))
    results.append(rep)
    print("RESULT", json.dumps(rep))
print(json.dumps(results, indent=1))
