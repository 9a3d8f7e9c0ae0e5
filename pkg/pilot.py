"""Pilot run: pick epochs/widths for the benchmark criteria. Not part of the package."""
import sys, time
import numpy as np
from histocount.scenes import GenConfig, sample_dataset
from histocount.network import CountHistogramNet, ModelConfig
from histocount.training import train_network
from histocount.rng import stream
from histocount.estimators import CountHistogramRegressor, AverageBaseline, evaluate_estimator

n_train = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 6
dsn = len(sys.argv) > 3 and sys.argv[3] == "dsn"

gc = GenConfig.desk(64)
t0 = time.time()
train_scenes, train_images = sample_dataset(gc, n_train, 100)
test_scenes, test_images = sample_dataset(gc, 200, 200)
print(f"gen: {time.time()-t0:.1f}s; mean count {np.mean([s.count for s in train_scenes]):.2f}")

Xtr = np.asarray(train_images); Xte = np.asarray(test_images)
base = AverageBaseline().fit(Xtr, train_scenes)
rep_b = evaluate_estimator(base, Xte, test_scenes)
print("avg :", rep_b.to_json(), flush=True)

net = CountHistogramNet(ModelConfig.desk(dsn=dsn), stream(7, 0))
est = CountHistogramRegressor(seed=7).adopt(net, s_max=352.0)
for ep in range(epochs):
    t0 = time.time()
    train_network(net, train_images, train_scenes, epochs=1, s_max=352.0, seed=7 + 1000*ep, batch_size=4, lr=1e-3)
    dt = time.time() - t0
    rep = evaluate_estimator(est, Xte, test_scenes)
    print(f"ep{ep} ({dt:.0f}s): MAE={rep.mae:.3f} (x{rep.mae/rep_b.mae:.2f}) chi2={rep.chi2:.3f} "
          f"(x{rep.chi2/rep_b.chi2:.2f}) kld={rep.kld:.3f} wl1={rep.wt_l1:.3f} isec={rep.isec:.3f}", flush=True)
