"""Performance prediction and message-passing decoding for random linear
vector channels with rotationally invariant matrices."""

__version__ = "0.1.0"

from .spectra import (  # noqa: F401
    Spectrum,
    SpectrumError,
    average,
    make_delta,
    make_empirical,
    make_marchenko_pastur,
    make_wbes,
)
from .rmt import (  # noqa: F401
    FResult,
    SaddlePair,
    eval_F,
    gaussian_equivalent_variance,
    solve_hstep_saddle,
    solve_vstep_saddle,
)
from .models import (  # noqa: F401
    BinaryPrior,
    GaussianChannel,
    GaussianPrior,
    TabulatedChannel,
    TabulatedPrior,
    channel_denoise,
    prior_denoise,
    sample_channel,
    sample_prior,
)
from .replica import (  # noqa: F401
    RSFixedPoint,
    RSOptions,
    RSPrediction,
    predict,
    qfunc,
    solve_rs,
    solve_rs_branches,
    verify_annealed,
)
from .ensemble import (  # noqa: F401
    ChannelInstance,
    build_matrix,
    dump_instance,
    load_instance,
    make_instance,
    sample_haar_orthogonal,
)
from .decoder import (  # noqa: F401
    DecodeOptions,
    DecodeResult,
    DecoderState,
    decode,
    decode_wbes_gaussian,
)
