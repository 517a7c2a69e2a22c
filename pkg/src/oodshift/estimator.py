"""Diversity and correlation shift: exact oracle and Monte Carlo estimator.

The oracle sums Definition-style formulas exactly over a discrete latent
spec. The estimator fits KDEs over extracted features and evaluates the
same integrals by importance sampling from the pooled density, splitting
draws into a no-shared-support region (diversity) and a shared-support
region (correlation) by density thresholds.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Rng
from .datagen import gen_colored
from .density import fit_standardizer, kde_fit, kde_logpdf, kde_sample
from .discriminator import extract, train

_LOG_DENSITY_FLOOR = -745.0  # below this exp() underflows to 0


@dataclass(frozen=True)
class EstimatorConfig:
    n_mc_samples: int = 10000  # importance sampling size
    eps_div: float = 1e-12
    eps_cor: float = 5e-4
    n_runs: int = 5
    bandwidth_scale: float = 0.7
    resample_per_class: bool = False

    def validate(self):
        if self.n_mc_samples < 1:
            raise ValueError("n_mc_samples must be >= 1")
        if not 0.0 < self.eps_div < self.eps_cor:
            raise ValueError("need 0 < eps_div < eps_cor")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")


@dataclass
class ShiftEstimate:
    d_div: float
    d_cor: float
    per_run: list  # [(d_div, d_cor), ...]
    stderr_div: float
    stderr_cor: float
    over_one_flag: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def oracle_shift(spec):
    """Exact diversity/correlation shift of a discrete latent spec.

    Both values are provably in [0, 1]; the sums are clipped to that range
    to absorb float round-off (e.g. marginals that sum to 1 only within
    one ulp can push d_div to 1 + 2e-16).
    """
    p, q = spec.p_z, spec.q_z
    shared = p * q != 0.0
    d_div = 0.5 * np.abs(p[~shared] - q[~shared]).sum()
    cond_gap = np.abs(spec.p_y_given_z - spec.q_y_given_z).sum(axis=1)
    d_cor = 0.5 * (np.sqrt(p[shared] * q[shared]) * cond_gap[shared]).sum()
    return float(np.clip(d_div, 0.0, 1.0)), float(np.clip(d_cor, 0.0, 1.0))


def _check_label_balance(labels, n_classes, tol=0.02):
    freqs = np.bincount(labels, minlength=n_classes) / labels.size
    return bool(np.abs(freqs - 1.0 / n_classes).max() <= tol)


def estimate(F_tr, F_te, labels_tr, labels_te, cfg, rng):
    """One importance-sampling run of the shift estimator.

    Returns (d_div, d_cor, diagnostics). Estimates are reported raw and may
    exceed 1.
    """
    cfg.validate()
    F_tr = np.atleast_2d(np.asarray(F_tr, dtype=np.float64))
    F_te = np.atleast_2d(np.asarray(F_te, dtype=np.float64))
    if F_tr.ndim != 2 or F_te.ndim != 2 or F_tr.shape[1] != F_te.shape[1]:
        raise ValueError("feature matrices must share one dimensionality")
    if F_tr.shape[0] < 2 or F_te.shape[0] < 2:
        raise ValueError("need at least 2 rows per environment")
    labels_tr = np.asarray(labels_tr, dtype=np.int64)
    labels_te = np.asarray(labels_te, dtype=np.int64)
    classes = np.union1d(labels_tr, labels_te)
    n_classes = int(classes.max()) + 1
    for cls in classes:
        if (labels_tr == cls).sum() < 2 or (labels_te == cls).sum() < 2:
            raise ValueError(f"class {cls} underpopulated in one environment")

    pooled = np.concatenate([F_tr, F_te])
    standardizer = fit_standardizer(pooled)
    pooled_s = standardizer.apply(pooled)
    S_tr = pooled_s[: F_tr.shape[0]]
    S_te = pooled_s[F_tr.shape[0] :]

    # shared unit kernel scale: the pool is standardized, and giving both
    # environment fits the same per-dim scale keeps their densities comparable
    scale = cfg.bandwidth_scale
    w_hat = kde_fit(pooled_s, scale, std=1.0)
    p_hat = kde_fit(S_tr, scale, std=1.0)
    q_hat = kde_fit(S_te, scale, std=1.0)

    M = cfg.n_mc_samples
    draws = kde_sample(w_hat, M, rng)
    log_w = np.maximum(kde_logpdf(w_hat, draws), _LOG_DENSITY_FLOOR)
    log_p = kde_logpdf(p_hat, draws)
    log_q = kde_logpdf(q_hat, draws)
    p_vals = np.exp(log_p)
    q_vals = np.exp(log_q)
    w_vals = np.exp(log_w)

    div_mask = (p_vals < cfg.eps_div) | (q_vals < cfg.eps_div)
    d_div = float(
        (np.abs(p_vals - q_vals)[div_mask] / w_vals[div_mask]).sum() / (2.0 * M)
    )

    cor_mask = (p_vals > cfg.eps_cor) & (q_vals > cfg.eps_cor)
    half_ratio = 0.5 * (log_q - log_p)  # log sqrt(q/p)
    d_cor = 0.0
    for cls in classes:
        if cfg.resample_per_class:
            draws_y = kde_sample(w_hat, M, rng)
            log_w_y = np.maximum(kde_logpdf(w_hat, draws_y), _LOG_DENSITY_FLOOR)
            log_p_y_all = kde_logpdf(p_hat, draws_y)
            log_q_y_all = kde_logpdf(q_hat, draws_y)
            mask = (np.exp(log_p_y_all) > cfg.eps_cor) & (
                np.exp(log_q_y_all) > cfg.eps_cor
            )
            ratio = 0.5 * (log_q_y_all - log_p_y_all)
            wv = np.exp(log_w_y)
            pts = draws_y
        else:
            mask, ratio, wv, pts = cor_mask, half_ratio, w_vals, draws
        if not mask.any():
            continue
        p_y = kde_fit(S_tr[labels_tr == cls], scale, std=1.0)
        q_y = kde_fit(S_te[labels_te == cls], scale, std=1.0)
        log_py = kde_logpdf(p_y, pts[mask])
        log_qy = kde_logpdf(q_y, pts[mask])
        term = np.abs(
            np.exp(log_py + ratio[mask]) - np.exp(log_qy - ratio[mask])
        )
        d_cor += float((term / wv[mask]).sum())
    d_cor /= 2.0 * M * n_classes

    diagnostics = {
        "frac_div_region": float(div_mask.mean()),
        "frac_cor_region": float(cor_mask.mean()),
        "labels_uniform_tr": _check_label_balance(labels_tr, n_classes),
        "labels_uniform_te": _check_label_balance(labels_te, n_classes),
    }
    return d_div, d_cor, diagnostics


def _aggregate(per_run, diagnostics):
    arr = np.asarray(per_run, dtype=np.float64)
    n = arr.shape[0]
    mean = arr.mean(axis=0)
    if n > 1:
        stderr = arr.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        stderr = np.zeros(2)
    return ShiftEstimate(
        d_div=float(mean[0]),
        d_cor=float(mean[1]),
        per_run=[(float(a), float(b)) for a, b in arr],
        stderr_div=float(stderr[0]),
        stderr_cor=float(stderr[1]),
        over_one_flag=bool((arr > 1.0).any()),
        diagnostics=diagnostics,
    )


def estimate_pipeline(ds, mlp_cfg, est_cfg, base_seed):
    """Full pipeline: per run, train the discriminator, extract features and
    run the estimator; aggregate mean and standard error over runs."""
    est_cfg.validate()
    if not np.isin((0, 1), ds.envs).all():
        raise ValueError("dataset must contain both environments")
    per_run = []
    val_accs = []
    run_diags = []
    for run in range(est_cfg.n_runs):
        rng = Rng(base_seed + run)
        try:
            model = train(ds, mlp_cfg, rng)
            F = extract(model, ds.features)
            tr = ds.envs == 0
            d_div, d_cor, diag = estimate(
                F[tr], F[~tr], ds.labels[tr], ds.labels[~tr], est_cfg, rng
            )
        except Exception as exc:
            raise RuntimeError(f"run {run} (seed {base_seed + run}) failed: {exc}") from exc
        per_run.append((d_div, d_cor))
        val_accs.append(model.val_accuracy)
        run_diags.append(diag)
    diagnostics = {
        "val_accuracy_per_run": val_accs,
        "frac_div_region_per_run": [d["frac_div_region"] for d in run_diags],
        "frac_cor_region_per_run": [d["frac_cor_region"] for d in run_diags],
        "labels_uniform": bool(
            all(d["labels_uniform_tr"] and d["labels_uniform_te"] for d in run_diags)
        ),
    }
    return _aggregate(per_run, diagnostics)


def sweep(base_spec, axis1, values1, axis2, values2, mlp_cfg, est_cfg, base_seed,
          threads=1):
    """Grid of pipeline estimates over two ColoredSpec fields.

    Each cell regenerates the dataset and runs the pipeline with its own
    derived seed; cells are independent and may run in parallel. Returns a
    list of dicts, one per cell (row-major).
    """
    from concurrent.futures import ThreadPoolExecutor
    from dataclasses import replace

    cells = [
        (i, float(v1), float(v2))
        for i, (v1, v2) in enumerate(
            (a, b) for a in values1 for b in values2
        )
    ]

    def run_cell(cell):
        i, v1, v2 = cell
        spec = replace(base_spec, **{axis1: v1, axis2: v2})
        cell_seed = base_seed + 10000 * i
        ds = gen_colored(spec, Rng(cell_seed))
        result = estimate_pipeline(ds, mlp_cfg, est_cfg, cell_seed + 1)
        return {
            axis1: v1,
            axis2: v2,
            "d_div": result.d_div,
            "d_cor": result.d_cor,
            "stderr_div": result.stderr_div,
            "stderr_cor": result.stderr_cor,
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_cell, cells))
    else:
        records = [run_cell(c) for c in cells]
    assert len(records) == len(cells)
    return records
