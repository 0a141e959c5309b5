"""Line spectral estimation and detection from few-bit quantized samples."""

from .quantizer import (
    QuantizedObservation,
    QuantizerSpec,
    SignedThresholdSpec,
    design_full_scale,
    make_quantizer,
    quantize_complex,
    signed_measurements,
)
from .likelihood import (
    CompressiveManifold,
    Manifold,
    SinusoidComponent,
    atom,
    log_likelihood,
    pseudo_measurements,
    synthesize,
)

__version__ = "0.1.0"
