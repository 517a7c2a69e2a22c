"""Quantification of diversity and correlation shift between two labeled
environments, with synthetic generators, baseline metrics, and benchmark
ranking scores."""

from .data import LabeledDataset, Rng, load_csv, load_idx, save_csv, split_train_val
from .datagen import (
    ColoredSpec,
    LatentSpec,
    gen_colored,
    gen_latent,
    irm_colored_default,
    latent_spec_a,
    latent_spec_tv,
    random_latent_spec,
)
from .density import KdeModel, Standardizer, fit_standardizer, kde_fit, kde_logpdf, kde_pdf, kde_sample
from .discriminator import ExtractorModel, MlpConfig, extract, grad_check, train
from .estimator import (
    EstimatorConfig,
    ShiftEstimate,
    estimate,
    estimate_pipeline,
    oracle_shift,
    sweep,
)
from .baselines import MetricReport, compare_table, emd, mmd, ni
from .benchscore import (
    AccuracyTable,
    cell_score,
    cell_scores,
    load_accuracy_table,
    load_fixture,
    ranking_scores,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
