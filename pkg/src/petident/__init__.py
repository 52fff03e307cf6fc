"""Kinetic parameter identification for the irreversible two-tissue
compartment model from multi-region PET measurements."""

from .polyexp import (
    EQ_TOL,
    GenPolyExp,
    PolyExp,
    eval_genpolyexp,
    eval_polyexp,
    has_distinct_rate_regions,
    max_roots_bound,
    region_diversity_report,
)
from .kinetics import (
    DomainError,
    KineticParams,
    TissueCurves,
    free_concentration,
    integrate_compartments_rk4,
    integrate_compartments_rk4_grid,
    tissue_concentration,
    tissue_concentration_quadrature,
    tissue_curves,
)
from .plasma import (
    PlasmaFamily,
    PlasmaParams,
    family_degree,
    get_family,
    plasma_fraction,
    register_family,
)
from .forward import (
    MeasurementSet,
    ParamLayout,
    ParamVector,
    apply_forward,
    finite_difference_check,
    forward_vector,
    jacobian,
    pack,
    project_to_domain,
    tikhonov_objective,
    unpack,
)
from .solver import (
    IrgnmSettings,
    RunRecord,
    StepFailure,
    irgnm_step,
    rho_metrics,
    run_irgnm,
    solve_tikhonov,
)
from .experiments import (
    CampaignSpec,
    CampaignSummary,
    Scenario,
    add_noise,
    build_time_grid,
    default_scenario,
    emit_results,
    load_scenario,
    perturb_initial,
    run_campaign,
    scenario_from_dict,
    scenario_to_dict,
    simulate_ground_truth,
)

__version__ = "0.1.0"
