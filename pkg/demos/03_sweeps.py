"""
History, horizon and speed sweeps
=================================

Loads the model saved by 02_train_and_compare.py and repeats the three
experiment sweeps: shorter histories, longer autoregressive horizons, and
test channels at speeds the model was not trained on.
"""

from otfspredict import cli
from otfspredict.baselines import LinearTrend, MovingAverage, RepeatLast
from otfspredict.channel import MobilityProfile, eva_profile, generate_sequence
from otfspredict.dataset import normalize, split_dataset
from otfspredict.harness import sweep_history, sweep_horizon, sweep_speed, write_csv
from otfspredict.otfs import OtfsDims

dims = OtfsDims(16, 4)
model, scale = cli.load_predictor("ldformer.ckpt")

# the same sequence the model was trained on; only its test block is scored
seq = generate_sequence(dims, MobilityProfile(500.0), eva_profile(), 1500, seed=7)
split = normalize(split_dataset(seq, history_len=10, horizon=5))
assert abs(split.norm_scale - scale) < 1e-12 * scale

# 1. how much history does each predictor use?
res = sweep_history([model, RepeatLast(), MovingAverage()], split.test, [1, 2, 4, 6, 8, 10], dims=dims, norm_scale=scale)
print(write_csv(res.reports, "sweep_history.csv"))

# 2. autoregressive rollouts: error per step and total time over the test set
res = sweep_horizon([model, LinearTrend()], split.test, [1, 2, 3, 4, 5], dims=dims, norm_scale=scale)
print(write_csv(res.reports, "sweep_horizon.csv"))
for h in res.values:
    r = res.at(h, "ldformer")
    print("h=%d  rmse %.4f  total %.2f s" % (h, r.rmse, r.total_s))

# 3. trained at 500 km/h, tested on fresh channels at other speeds
res = sweep_speed([model, RepeatLast()], [100, 300, 500], dims=dims, norm_scale=scale, history_len=10, frames=300, seed=7)
print(write_csv(res.reports, "sweep_speed.csv", axis="speed_kmh", values=res.values))
