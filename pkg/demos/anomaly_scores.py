# Negative log-likelihood under a fitted mix-net as an anomaly score.
# Rows that break the x1/x2 pairing stand out even though each value is
# ordinary on its own.
import numpy as np

from mixnet.dataset import preprocess
from mixnet.gmm import EmConfig
from mixnet.harness import benchmark_dataset, fit_learner
from mixnet.mixtable import TableConfig
from mixnet.network import anomaly_scores
from mixnet.structure import SearchConfig

data = preprocess(benchmark_dataset(2000, seed=3), 1e-6, seed=3, relative=True)
config = SearchConfig(table=TableConfig(em=EmConfig(component_grid=(1, 2, 3, 5), restarts=2)))
net = fit_learner("mixnet", data, config, seed=0)

# x1 and x2 sit in opposite modes; move x2 of ten rows to the other mode
values = np.array(data.values)
rng = np.random.default_rng(1)
odd = rng.choice(data.n_rows, 10, replace=False)
j = data.schema.index("x2")
values[odd, j] = 1.0 - values[odd, j]
scored = data.with_values(values)

scores = anomaly_scores(net, scored)
top = np.argsort(-scores)[:10]
print("tampered rows:", sorted(odd.tolist()))
print("top-10 scores:", sorted(top.tolist()))
print("found %d of 10" % len(set(top) & set(odd)))
