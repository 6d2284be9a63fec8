# The two synthetic constructions: resampling inside equal-frequency
# buckets (which favours the histogram learner) and sampling from a
# fitted network (which a refit should recover).
from mixnet.dataset import preprocess
from mixnet.gmm import EmConfig
from mixnet.harness import benchmark_dataset, fit_learner, format_table, model_row_log_density, run_cv, synth_bucket_resample, synth_from_model
from mixnet.mixtable import TableConfig
from mixnet.structure import SearchConfig

config = SearchConfig(table=TableConfig(em=EmConfig(component_grid=(1, 2, 3), restarts=1, max_iterations=60)))
data = preprocess(benchmark_dataset(1500, seed=0), 1e-6, seed=0, relative=True)

resampled = synth_bucket_resample(data, 16, seed=5)
reports = {
    "original": run_cv(data, ["mixnet", "pseudo-discrete"], folds=3, seed=0, config=config),
    "resampled": run_cv(resampled, ["mixnet", "pseudo-discrete"], folds=3, seed=0, config=config),
}
print(format_table(reports))

generator = fit_learner("independent", data, config, seed=0)
sample = synth_from_model(generator, 3000, seed=1)
refit = fit_learner("independent", sample, config, seed=2)
fresh = synth_from_model(generator, 3000, seed=3)
print("clamped cells:", sample.meta["clamped"])
print("nats/row on fresh samples: generator %.4f, refit %.4f" % (
    model_row_log_density(generator, fresh).mean(), model_row_log_density(refit, fresh).mean()))
