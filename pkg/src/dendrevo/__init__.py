"""Neuroevolution of gated perceptrons on tuneable epistatic regression tasks.

The package splits into data generation (:mod:`dendrevo.nk`), the gated
network model (:mod:`dendrevo.net`), the steady-state evolutionary loop
(:mod:`dendrevo.evolve`), multi-run orchestration and statistics
(:mod:`dendrevo.harness`), and SVG reporting (:mod:`dendrevo.svgplot`).
"""

from .evolve import (
    EvalState,
    EvoConfig,
    GateChange,
    MutationRecord,
    RunTrace,
    TraceRecord,
    TrainEvaluator,
    Variant,
    WeightChange,
    describe_mutation,
    mutate,
    replace,
    run_evolution,
    seed_population,
    tournament_select,
)
from .harness import (
    AblationReport,
    ComparisonReport,
    ExperimentSpec,
    PairwiseResult,
    SweepPoint,
    SweepRow,
    VariantSummary,
    ablation_study,
    compare,
    derive_seed,
    gate_location_histogram,
    read_trace_rows,
    run_cell,
    run_experiment,
    summarize,
    sweep_n,
    welch_t_test,
    write_trace_csv,
)
from .net import (
    Connection,
    GateKind,
    GateState,
    Individual,
    Network,
    ablate_output_gates,
    count_active_gates,
    forward,
    gate_fraction,
    gate_passes,
    load_network,
    mse,
    predict,
    save_network,
)
from .nk import (
    Dataset,
    Encoding,
    NKLandscape,
    Sample,
    build_landscape,
    encode_features,
    evaluate_genome,
    evaluate_genomes,
    generate_dataset,
    save_landscape,
)

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "ComparisonReport",
    "Connection",
    "Dataset",
    "Encoding",
    "EvalState",
    "EvoConfig",
    "ExperimentSpec",
    "GateChange",
    "GateKind",
    "GateState",
    "Individual",
    "MutationRecord",
    "NKLandscape",
    "Network",
    "PairwiseResult",
    "RunTrace",
    "Sample",
    "SweepPoint",
    "SweepRow",
    "TraceRecord",
    "TrainEvaluator",
    "Variant",
    "VariantSummary",
    "WeightChange",
    "ablate_output_gates",
    "ablation_study",
    "build_landscape",
    "compare",
    "count_active_gates",
    "derive_seed",
    "describe_mutation",
    "encode_features",
    "evaluate_genome",
    "evaluate_genomes",
    "forward",
    "gate_fraction",
    "gate_location_histogram",
    "gate_passes",
    "generate_dataset",
    "load_network",
    "mse",
    "mutate",
    "predict",
    "read_trace_rows",
    "replace",
    "run_cell",
    "run_evolution",
    "run_experiment",
    "save_landscape",
    "save_network",
    "seed_population",
    "summarize",
    "sweep_n",
    "tournament_select",
    "welch_t_test",
    "write_trace_csv",
]
