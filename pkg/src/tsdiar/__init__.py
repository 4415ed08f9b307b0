"""tsdiar: target-speaker diarization decoding toolkit.

Timelines and frame grids, RTTM/UEM/transcript I/O, cross-system fusion,
DER/JER/cpWER scoring with optimal speaker mapping, an iterative
target-speaker decode harness around a pluggable posterior model, and a
synthetic session simulator for end-to-end testing.
"""

from .decode import (
    ArrangedProfiles,
    DecodeConfig,
    DecodeResult,
    OracleNoisyModel,
    PosteriorModel,
    arrange_profiles,
    decode,
    estimate_speaker_count,
    hypothesis_profiles,
    postprocess,
)
from .fusion import FusedActivity, SystemHypothesis, align_labels, fuse, select_mask
from .metrics import (
    CpWerReport,
    DerReport,
    JerReport,
    Mapping,
    cpwer,
    der,
    jer,
    optimal_speaker_mapping,
)
from .profiles import (
    DEFAULT_PROFILE_DIM,
    FeatureStream,
    ProfilePool,
    ProfileSource,
    SpeakerProfile,
    draw_dummies,
    estimate_profile,
    load_features,
    load_pool,
    make_synthetic_pool,
    save_features,
    save_pool,
    synth_embed,
)
from .rttm import (
    RttmParseError,
    SpeakerTranscript,
    parse_rttm,
    parse_transcripts,
    parse_uem,
    write_rttm,
    write_transcripts,
)
from .simulate import (
    CalibrationError,
    SessionSpec,
    SyntheticSession,
    batch,
    generate,
    measure_overlap_ratio,
    perturb,
    standard_conditions,
)
from .timeline import (
    ActivityMatrix,
    Diarization,
    FrameGrid,
    Turn,
    overlap_regions,
    rasterize,
    segmentize,
    speaking_durations,
)

__version__ = "0.1.0"
