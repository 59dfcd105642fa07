"""nngplab: NNGP kernels, multi-layer random features, and zonal spectra."""

from . import activation, features, kernel, rfm,spectrum, sphere, train2nn
from .activation import (
    ActivationSpec,
    BoundConstants,
    bound_constants,
    make_activation,
    parse_activation,
)
from .features import FeatureMap, NetworkShape, sample_feature_map
from .kernel import Cov2, KernelModel, gram, nngp_eval, sigma_bar
from .rfm import Dataset, RfmFit, fit, predict
from .spectrum import SpectrumReport, classify_activation, loglog_fit
from .sphere import (
    HarmonicTarget,
    barron_lower_bound,
    funk_hecke,
    gegenbauer,
    harmonic_dim,
    make_harmonic_target,
    sample_sphere,
)
from .train2nn import TwoLayerNet, train

__version__ = "0.1.0"
