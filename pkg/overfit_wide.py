"""Does capacity fix the overfit plateau? Not part of the package."""
import sys
import numpy as np
from histocount.scenes import GenConfig, sample_dataset
from histocount.network import CountHistogramNet, ModelConfig
from histocount.training import train_network, evaluate_loss
from histocount.rng import stream

which = sys.argv[1]
gc = GenConfig.desk(64)
scenes, images = sample_dataset(gc, 8, 5)

wide = dict(shared=(12, 8), count_blocks=((16, 4), (16, 4), (16, 4)),
            hist_stages=((16, 2), (16, 2), (16, 2)), head_conv3=32,
            head_conv1=16, fc_hidden=64)

configs = {
    "wide": (wide, 0.02, 0.9977),
    "lean_hot": ({}, 0.05, 0.996),
    "wide_hot": (wide, 0.05, 0.996),
}
kwargs, lr0, gamma = configs[which]
cfg = ModelConfig.desk(**kwargs)
net = CountHistogramNet(cfg, stream(0, 0))
rep0 = evaluate_loss(net, images, scenes, 352.0)
print(f"{which}: params={net.n_params} lr0={lr0} gamma={gamma} init={rep0['l_total']:.1f}", flush=True)
for chunk in range(4):
    lr_here = lr0 * gamma ** (chunk * 250)
    train_network(net, images, scenes, epochs=250, s_max=352.0, seed=0 if chunk == 0 else 1000 + chunk,
                  augment_data=False, lr=lr_here, lr_decay=gamma)
    rep = evaluate_loss(net, images, scenes, 352.0)
    print(f"{which} steps={(chunk+1)*500}: l_total={rep['l_total']:.2f} "
          f"({rep['l_total']/rep0['l_total']*100:.2f}%) count={rep['l_count']:.2f}", flush=True)
