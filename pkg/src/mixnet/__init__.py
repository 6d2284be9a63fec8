"""Mix-nets: Bayesian networks over mixed continuous/discrete variables whose
node distributions are mixture tables of Gaussian mixtures."""

from .dataset import Column, Dataset, DataError, Schema, load_dataset, preprocess
from .gmm import EmConfig, GaussianMixture, em_fit, select_mixture
from .mixtable import MixtureTable, TableConfig, fit_table, marginalize_out
from .network import MixNet, MixNetStructure, fit_parameters, log_likelihood, network_bic, sample_network
from .structure import SearchConfig, greedy_search, importance_matrix, learn_mixnet, max_spanning_forest

__version__ = "0.1.0"
