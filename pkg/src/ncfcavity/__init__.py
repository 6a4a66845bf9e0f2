"""One-sided photonic-crystal nanofibre cavity reduced to a 1D transfer-matrix model."""

__version__ = "0.1.0"

from .analysis import (
    CouplingRegime,
    DipGuess,
    FitError,
    FitNotConverged,
    GridLimitedFit,
    KappaScFit,
    NoDipFound,
    Regime,
    ResonanceFit,
    analyze_spectrum,
    classify_regime,
    find_dip,
    fit_kappa_sc,
    fit_lorentzian,
    kappa_from_width,
    lorentzian_dip,
)
from .cqed import (
    CalibrationError,
    CalibrationResult,
    CqedReport,
    build_report,
    calibrate_slat_loss,
    cavity_report,
    coupling_rate,
    cooperativity,
    finesse_sc,
    measure_resonance,
    one_pass_loss,
    q_sc,
    r0_on_resonance,
)
from .design import (
    CALIBRATION,
    CavityDesign,
    EffectiveIndexProfile,
    LayerStack,
    Polarization,
    build_stack,
    detune_design,
    effective_indices,
    load_design,
    save_design,
)
from .emitter import (
    DivergentResonance,
    EmissionResult,
    EmissionSpectrum,
    NoConfinedMode,
    OracleNotConverged,
    effective_length,
    emission_spectrum,
    emit,
    helmholtz_oracle,
    resonant_emission,
)
from .sweep import SweepRow, SweepTable, optimize_one_sided, sweep_n_in, sweep_n_out, sweep_reflection
from .tmm import (
    MirrorCoefficients,
    Spectrum,
    TransferMatrix,
    evaluate_spectrum,
    find_resonances,
    intensity_profile,
    mirror_coefficients,
    reflection_spectrum,
    rt_left_incidence,
    rt_right_incidence,
    stack_matrix,
)
