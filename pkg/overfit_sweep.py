"""Overfit hyperparameter sweep. Not part of the package."""
import numpy as np
from histocount.scenes import GenConfig, sample_dataset
from histocount.network import CountHistogramNet, ModelConfig
from histocount.training import train_network, evaluate_loss
from histocount.rng import stream

gc = GenConfig.desk(64)
scenes, images = sample_dataset(gc, 8, 5)
for lr0, gamma in ((0.02, 0.9977), (0.01, 0.998), (0.03, 0.9965)):
    net = CountHistogramNet(ModelConfig.desk(), stream(0, 0))
    rep0 = evaluate_loss(net, images, scenes, 352.0)
    train_network(net, images, scenes, epochs=1000, s_max=352.0, seed=0,
                  augment_data=False, lr=lr0, lr_decay=gamma)
    rep = evaluate_loss(net, images, scenes, 352.0)
    print(f"lr0={lr0} gamma={gamma}: {rep0['l_total']:.1f} -> {rep['l_total']:.2f} "
          f"({rep['l_total']/rep0['l_total']*100:.2f}%) count={rep['l_count']:.2f}", flush=True)
