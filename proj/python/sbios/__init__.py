"""Scalable Bayesian image-on-scalar regression.

Thin wrapper over the compiled core. The heavy lifting (memory-mapped
batch stores, SGLD/Gibbs chains, evaluation) lives in C++; this package
exposes the main operations plus a convenience pipeline.
"""

import json as _json

from ._sbios import (  # noqa: F401
    ConfigError,
    DataError,
    DivergenceError,
    bh_adjust,
    build_region_kernel,
    compare,
    eigenbasis,
    fdr_tpr_at_pip,
    gelman_rubin,
    load_pip,
    matern_cnu,
    modified_se_basis,
    mua_fit,
    observed_proportion,
    percentage_decline,
    report,
    step_size,
    tpr_at_fpr,
    tune_kernel_params,
)
from . import _sbios as _core

__version__ = "1.0.0"


def simulate(config, out_dir):
    """Generate a synthetic dataset. `config` is a dict or JSON string."""
    if isinstance(config, dict):
        config = _json.dumps(config)
    return dict(_core.simulate(config, out_dir))


def fit(manifest, out_dir, resume=False, **overrides):
    """Run chains against a store manifest (or run manifest).

    Keyword overrides mirror the CLI flags: algorithm, iterations, burn_in,
    subsample, eta_every, seed, chains, threads, basis, init, ...
    """
    summary = _core.fit(manifest, _json.dumps(overrides), out_dir, resume)
    return _json.loads(summary)


def evaluate(results, truth="", out_dir="eval", pip_cutoff=0.95,
             target_fpr=0.1, op_threshold=-1.0):
    """Posterior summaries and, when truth is given, selection metrics."""
    if isinstance(results, str):
        results = [results]
    metrics = _core.evaluate(results, truth, pip_cutoff, target_fpr,
                             op_threshold, out_dir)
    return _json.loads(metrics)
