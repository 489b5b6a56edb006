"""Entity-linking toolkit: ontology building, corpus compilation, training and linking."""

from ._belforge import (
    ConfigError,
    DataError,
    Encoder,
    EncoderConfig,
    Error,
    IoError,
    LinkError,
    Linker,
    NetworkError,
    UnencodableError,
    default_config,
    evaluate,
    load_ontology,
    pretrain_pairs,
    run,
    set_quiet,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Encoder",
    "EncoderConfig",
    "Error",
    "IoError",
    "LinkError",
    "Linker",
    "NetworkError",
    "UnencodableError",
    "default_config",
    "evaluate",
    "load_ontology",
    "pretrain_pairs",
    "run",
    "set_quiet",
]
