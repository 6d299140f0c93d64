"""Cross-entropy decomposition by rank-based error, with scaling fits."""

from ._core import (
    CedecompError,
    Decomposition,
    PredictionRecord,
    __version__,
    component_shares,
    decode_record,
    decompose,
    encode_record,
    fit_power_law,
    gen_corpus,
    gen_scaling_series,
    harmonic_conf_bound,
    read_corpus,
    run_cli,
    solve_p_for_entropy,
    truncated_geometric_entropy,
    validate_record,
    write_corpus,
)

__all__ = [
    "CedecompError",
    "Decomposition",
    "PredictionRecord",
    "__version__",
    "component_shares",
    "decode_record",
    "decompose",
    "encode_record",
    "fit_power_law",
    "gen_corpus",
    "gen_scaling_series",
    "harmonic_conf_bound",
    "read_corpus",
    "run_cli",
    "solve_p_for_entropy",
    "truncated_geometric_entropy",
    "validate_record",
    "write_corpus",
]
