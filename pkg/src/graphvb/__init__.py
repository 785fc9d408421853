"""graphvb: Bayesian recovery of graph signals sampled on a vertex subset,
with joint estimation of the (unknown) graph topology and the noise level.
"""

from .engine import (
    EdgeQuadratic,
    IterationRecord,
    NoisePosterior,
    SignalPosterior,
    VBConfig,
    VBState,
    extract_edge_quadratic,
    run_vb,
    update_edge,
    update_noise,
    update_signal,
)
from .gcch import (
    EdgeCaseTag,
    EdgePosteriorCase,
    GCCHParams,
    classify_edge_case,
    edge_posterior_mean,
    gcch_log_pdf,
    gcch_mean,
    gcch_mean_quadrature,
)
from .graphs import (
    LaplacianEstimate,
    PrecisionAssembly,
    SamplingOperator,
    StackedObservations,
    WeightedGraph,
    apply_sampling,
    assemble_precision,
    laplacian_from_weights,
)
from .datasets import (
    BandlimitedSpec,
    KroneckerSpec,
    SensorDataset,
    generate_bandlimited_signals,
    harary_graph,
    kronecker_probability_matrix,
    load_sensor_csv,
    random_sampling_operator,
    sample_adjacency,
)
from .metrics import ExperimentResult, empirical_snr_db, nmse_laplacian, nmse_signal
from .special import SeriesControl, h_normalizer, phi1, pochhammer
from .experiment import ExperimentConfig, emit_report, load_config, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BandlimitedSpec", "EdgeCaseTag", "EdgePosteriorCase", "EdgeQuadratic",
    "ExperimentConfig", "ExperimentResult", "GCCHParams", "IterationRecord",
    "KroneckerSpec", "LaplacianEstimate", "NoisePosterior", "PrecisionAssembly",
    "SamplingOperator", "SensorDataset", "SeriesControl", "SignalPosterior",
    "StackedObservations", "VBConfig", "VBState", "WeightedGraph",
    "apply_sampling", "assemble_precision", "classify_edge_case",
    "edge_posterior_mean", "emit_report", "empirical_snr_db",
    "extract_edge_quadratic", "generate_bandlimited_signals", "gcch_log_pdf",
    "gcch_mean", "gcch_mean_quadrature", "h_normalizer", "harary_graph",
    "kronecker_probability_matrix", "laplacian_from_weights", "load_config",
    "load_sensor_csv", "nmse_laplacian", "nmse_signal", "phi1", "pochhammer",
    "random_sampling_operator", "run_experiment", "run_vb", "sample_adjacency",
    "update_edge", "update_noise", "update_signal",
]
