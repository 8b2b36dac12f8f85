from .convolution import jump_sum, kernel_convolution_derivative, step_jumps
from .lipschitz import DEFAULT_GRID, LipschitzEstimate, estimate_lip, lip_profile, sample_grid
from .piecewise import (
    GL_ORDER,
    PiecewiseConstantFn,
    gauss_nodes,
    l1_distance,
    merged_partition,
    total_variation,
    weighted_l1_distance,
)
from .presets import (
    Box,
    Burgers,
    ConstField,
    Field,
    GaussianKernel,
    LinearCongestion,
    LinearFlux,
    LWRFlux,
    MobilityFlux,
    ModelSpec,
    Mobility,
    OutsideValidityBox,
    ProductFlux,
    QuadraticKernel,
    ScalarFlux,
    SinField,
    UnitMobility,
    UnknownPreset,
    ZeroField,
    ZeroFlux,
    local_flux,
    make_model,
    make_preset,
    preset_model,
    preset_names,
)
