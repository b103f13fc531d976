"""Online Hamiltonian parameter learning with sequential Monte Carlo and
Bayesian experiment design."""

from .bench import BenchmarkConfig, load_config, run_benchmark, run_trial
from .crb import InfoMatrix, bayes_info, bcrb_step, fisher_info, prior_info
from .design import (
    DesignConfig,
    estimate_adaptive,
    guess_control,
    optimize_local,
    reapprox,
    util_ig,
    util_nv,
)
from .errors import (
    DegenerateCloudError,
    InvalidArgumentError,
    PosteriorCollapseError,
    PriorSamplingError,
    UnsupportedModelError,
)
from .models import (
    MODELS,
    ExperimentControl,
    GaussianHyperModel,
    KnownT2Model,
    LorentzHyperModel,
    UnknownT2Model,
    make_model,
)
from .region import (
    RegionEstimate,
    ellipse_region,
    expected_normal_mass,
    hyper_to_param_region,
    region_mass,
    region_volume,
)
from .smc import (
    GaussianPrior,
    ParticleCloud,
    ResampleConfig,
    cov,
    effective_sample_size,
    init_cloud,
    mean,
    mean_fn,
    resample,
    update,
)

__version__ = "0.1.0"
