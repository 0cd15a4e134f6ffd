"""Spiking-network symbolic music benchmark: MIDI I/O, compound tokens, a toy
spiking RNN, objective metrics, listening-study tooling and statistics."""

from ._core import (
    AnovaResult,
    CompoundToken,
    Error,
    LIFParams,
    Note,
    Score,
    TempoEvent,
    TimeSignature,
    ToySRNN,
    TukeyResult,
    Vocab,
    analyze,
    anova_oneway,
    atan_surrogate_grad,
    build_vocab,
    create_study,
    curate_synthetic,
    decode,
    encode,
    evaluate,
    export_responses,
    f_sf,
    lif_step,
    nltm_matrix,
    parse_midi,
    pitch_class_entropy,
    pitch_entropy,
    ptukey,
    render_wav,
    run_cli,
    simulate,
    train_toy,
    trim,
    tukey_hsd,
    write_midi,
)

__version__ = "0.1.0"
