"""Parameterized rational macromodels of scattering data with uniform passivity.

Typical use::

    data = load_dataset("manifest.json")
    fitted = fit(data, FitSplit.alternating(data.n_params), poles, pbasis).model
    report = adaptive_check(fitted)
    passive = enforce(fitted, data).model
"""

from .dataset import FitSplit, SampledDataset, export_report, load_dataset, rms_error, save_dataset
from .descriptor import DescriptorRealization, build_descriptor, eval_descriptor_tf, model_poles
from .enforce import (
    CostFactor,
    DecisionLayout,
    EnforceConfig,
    EnforceResult,
    QpConfig,
    build_constraint,
    build_cost,
    enforce,
    solve_qp,
)
from .gsk import GskConfig, GskResult, default_poles, fit, stability_sweep
from .model import (
    INF,
    CoeffPerturbation,
    ParamBasis,
    ParamModel,
    PoleSet,
    apply_perturbation,
    eval_freq_basis,
    eval_param_basis,
    eval_perturbation,
    eval_transfer,
    load_model,
    save_model,
)
from .oracle import OracleResult, dense_sweep_oracle
from .passivity import CheckConfig, ViolationReport, adaptive_check, build_shh_pencil, check_at, finite_pencil_eigs

__version__ = "0.1.0"
