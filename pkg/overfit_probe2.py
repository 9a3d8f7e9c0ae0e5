"""Overfit probe with lr decay. Not part of the package."""
import numpy as np
from histocount.scenes import GenConfig, sample_dataset
from histocount.network import CountHistogramNet, ModelConfig
from histocount.training import train_network, evaluate_loss
from histocount.rng import stream

gc = GenConfig.desk(64)
scenes, images = sample_dataset(gc, 8, 5)

for lr0, gamma in ((0.02, 0.997), (0.03, 0.9955)):
    net = CountHistogramNet(ModelConfig.desk(), stream(0, 0))
    rep0 = evaluate_loss(net, images, scenes, 352.0)
    print(f"\nlr0={lr0} gamma={gamma} init={rep0['l_total']:.2f}", flush=True)
    for chunk in range(10):  # 10 x 100 epochs x 2 steps = 2000 steps
        lr_here = lr0 * gamma ** (chunk * 100)
        train_network(net, images, scenes, epochs=100, s_max=352.0,
                      seed=chunk, augment_data=False, lr=lr_here, lr_decay=gamma)
        rep = evaluate_loss(net, images, scenes, 352.0)
        print(f"steps={(chunk+1)*200}: l_total={rep['l_total']:.2f} "
              f"({rep['l_total']/rep0['l_total']*100:.1f}%) count={rep['l_count']:.2f}", flush=True)
EOF
