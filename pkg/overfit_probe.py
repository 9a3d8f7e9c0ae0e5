"""Overfit lr probe. Not part of the package."""
import sys
import numpy as np
from histocount.scenes import GenConfig, sample_dataset
from histocount.network import CountHistogramNet, ModelConfig
from histocount.training import train_network, evaluate_loss
from histocount.rng import stream

lr = float(sys.argv[1])
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
gc = GenConfig.desk(64)
scenes, images = sample_dataset(gc, 8, 5)
net = CountHistogramNet(ModelConfig.desk(), stream(0, 0))
init = evaluate_loss(net, images, scenes, 352.0)["l_total"]
print(f"lr={lr} initial l_total={init:.2f}", flush=True)
done = 0
while done < steps:
    chunk = 100  # epochs of 2 steps each
    train_network(net, images, scenes, epochs=chunk // 2, s_max=352.0, seed=done,
                  augment_data=False, lr=lr)
    done += chunk
    cur = evaluate_loss(net, images, scenes, 352.0)["l_total"]
    print(f"steps={done} l_total={cur:.2f} ({cur/init*100:.1f}% of initial)", flush=True)
