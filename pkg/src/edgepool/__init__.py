"""Resource pooling for edge AI services: simulation, costing, and selection.

The package models a set of edge access points that jointly train a
classifier with federated averaging.  APs are clustered into sub-pools whose
aggregators host training on migrated data; resource-unit consumption is
accounted against reservations; and Gaussian-process surrogates over past
runs pick the cheapest pooling policy that meets an accuracy requirement.
"""

from .datasets import (
    LabeledDataset,
    load_dataset,
    load_idx_images,
    load_idx_labels,
    make_synthetic_digits,
    write_synthetic_digits,
)
from .fedsim import (
    MlpParameters,
    SimConfig,
    SimResult,
    TraceEvent,
    TrainingTrace,
    evaluate_accuracy,
    fedavg,
    forward,
    gradients,
    init_mlp,
    sgd_step,
    simulate,
)
from .pooling import FeatureVector, PoolingPolicy, form_subpools, kmeans
from .resources import CostLedger, CostModel, ReservationPlan, account, reserve, summarize
from .surrogate import (
    GprHyperparams,
    GprSurrogate,
    PolicyCandidate,
    PolicyObservation,
    gpr_fit,
    gpr_predict,
    loo_mean_absolute_error,
    select_policy,
)
from .topology import (
    ApNode,
    DataShard,
    NetworkTopology,
    generate_topology,
    partition_noniid,
    sample_arrival_rates,
)
from .experiment import (
    ExperimentConfig,
    RunRecord,
    fit_and_select,
    load_config,
    run_single,
    run_sweep,
)

__version__ = "0.1.0"
