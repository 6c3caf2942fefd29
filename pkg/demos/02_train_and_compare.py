"""
Training LDformer and comparing it with the baselines
=====================================================

Builds a 500 km/h desk-scale dataset, trains DLinear and LDformer, and scores
every predictor on the held-out test windows. Writes ldformer.ckpt (with its
.cfg description) and ordering.csv into the working directory.

Training takes roughly ten minutes on one CPU core. Pass a smaller epoch
count as the first argument for a quicker look: python3 demos/02_train_and_compare.py 3
"""

import sys
import time

from otfspredict import cli
from otfspredict.baselines import DLinear, LinearTrend, MovingAverage, RepeatLast, TimeLinear
from otfspredict.channel import MobilityProfile, eva_profile, generate_sequence
from otfspredict.dataset import normalize, split_dataset
from otfspredict.harness import evaluate, write_csv
from otfspredict.ldformer import LdformerConfig, parameter_breakdown, train
from otfspredict.otfs import OtfsDims

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 12

dims = OtfsDims(16, 4)
seq = generate_sequence(dims, MobilityProfile(500.0), eva_profile(), 1500, seed=7)

# chronological 70/15/15 split, history of 10 frames, one-step targets
split = normalize(split_dataset(seq, history_len=10, horizon=1))
print("windows: train %d  val %d  test %d   scale %.4f"
      % (len(split.train), len(split.val), len(split.test), split.norm_scale))

cfg = LdformerConfig(max_epochs=epochs, patience=4)
print("LDformer parameters by part:", parameter_breakdown(cfg))

t0 = time.perf_counter()
model, report = train(split, cfg, log=print)
print("trained in %.0f s, best validation loss %.3g at epoch %d" % (time.perf_counter() - t0, report.best_val, report.best_epoch))
cli.save_model(model, "ldformer.ckpt", split.norm_scale)

entries = 2 * dims.size ** 2
dlinear = DLinear(10, entries).fit(split, epochs=15, patience=4)
timelinear = TimeLinear(10).fit(split, epochs=15, patience=4)

predictors = [RepeatLast(), LinearTrend(), MovingAverage(), timelinear, dlinear, model]
reports = [evaluate(p, split.test, dims=dims, norm_scale=split.norm_scale) for p in predictors]
print()
print(write_csv(reports, "ordering.csv"))
