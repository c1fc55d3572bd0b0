"""The full cycle at toy scale: build a phantom dataset, train the GAN for a
few epochs, evaluate with all metrics, reconstruct one sample from its
X-rays alone.

Everything here also exists as CLI subcommands (phantom / train / eval /
reconstruct); this script is the same flow as library calls.

Run:  python3 demos/train_eval_cycle.py   (a few minutes on one core)
"""

import os

import numpy as np

from biplanarct.projection import synthesize_biplanar, write_xray_pair
from biplanarct.training import TrainConfig, evaluate, reconstruct, train
from biplanarct.volumes import PhantomSpec, clip_normalize, generate_phantom, write_volume

root = os.path.join(os.path.dirname(__file__), "out", "cycle")
data_dir = os.path.join(root, "data")
os.makedirs(data_dir, exist_ok=True)

# 8 paired samples: <id>.ctv holds the HU volume, <id>.bxr the X-ray pair.
for i in range(8):
    vol = generate_phantom(PhantomSpec(size=32, seed=i))
    write_volume(vol, os.path.join(data_dir, "sample_%04d.ctv" % i))
    pair = synthesize_biplanar(clip_normalize(vol))
    write_xray_pair(pair, os.path.join(data_dir, "sample_%04d.bxr" % i),
                    vol.dims)

# Short run; the config is a flat key = value text file in the real CLI flow.
cfg = TrainConfig(volume_size=32, levels=3, base_channels=16, batch_size=4,
                  epochs=5, seed=0, data_dir=data_dir,
                  out_dir=os.path.join(root, "run"))
print("training for %d epochs..." % cfg.epochs)
gen, disc, ckpt = train(cfg, log_fn=lambda s, c: s % 5 == 0 and print(
    "  step %d  vox %.4f  proj %.4f  adv %.4f  d %.4f"
    % (s, c["vox"], c["proj"], c["adv"], c["d"])))

# Evaluate on the training samples (toy scale; a held-out dir works the same).
report = evaluate(ckpt, data_dir, os.path.join(root, "metrics.csv"))
m = report.mean()
print("mean over %d samples: MAE %.4f  MSE %.5f  cosine %.4f  "
      "PSNR %.2f dB  SSIM %.4f"
      % (len(report.rows), m["mae"], m["mse"], m["cosine"], m["psnr_db"],
         m["ssim"]))

# Reconstruct one sample from its X-rays alone and compare to ground truth.
rec = reconstruct(ckpt, os.path.join(data_dir, "sample_0000.bxr"),
                  os.path.join(root, "rec_0000.ctv"))
gt = clip_normalize(generate_phantom(PhantomSpec(size=32, seed=0)))
err = np.abs(rec.values - gt.values)
print("reconstruction vs truth: mean |err| %.4f, max |err| %.4f"
      % (err.mean(), err.max()))
print("artifacts in %s" % root)
