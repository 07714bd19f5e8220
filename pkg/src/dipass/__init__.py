"""Directional pinching-antenna system: channel model, placement, assignment and precoding."""

from dipass.assignment import (
    AssignmentResult,
    GainMatrix,
    assign,
    build_gain_matrix,
    marginal_gain,
    phase_fine_tune,
    project_feasible,
)
from dipass.beamforming import Precoder, RateReport, effective_channel, evaluate, wmmse_precoder, zf_precoder
from dipass.channel import (
    ChannelSet,
    GainEntry,
    assemble_channels,
    beam_field,
    composite_gain_sq,
    coupling_lengths,
    divergence_angles,
    half_power_footprint,
    pa_to_user,
    wg_to_pa,
)
from dipass.core import (
    ConfigError,
    DegenerateGeometryError,
    Orientation,
    PAState,
    SystemConfig,
    Vec3,
    atten_db_to_nat,
    from_local,
    to_local,
)
from dipass.harness import ExperimentSpec, Scenario, generate_scenario, run_experiment
from dipass.hungarian import hungarian
from dipass.pipeline import PipelineResult, run_pipeline
from dipass.single_pa import (
    PlacementSolution,
    interior_optimum_exists,
    offset_closed_form,
    optimal_offset_approx,
    optimal_orientation,
    oracle_max_gain,
    solve_placement,
    stationary_offset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
