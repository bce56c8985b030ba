"""Coordinated transmit beamforming for networked ISAC systems with
ToA-based multi-TMT target localization."""

__version__ = "0.1.0"

from .scenario import (Scenario, SystemParams, JacobianMatrix, ValidationError,
                       SingularGeometryError, aod, delay, jacobian,
                       load_scenario, load_scenario_file, dump_scenario,
                       scenario_hash, builtin_scenario_path)
from .channel import (ChannelRealization, array_response, draw_channels,
                      draw_comm_channels, draw_sensing_coeffs,
                      dump_realization, load_realization)
from .metrics import (BeamformerSet, CrlbEntry, FisherBlocks, SingularFimError,
                      all_crlbs, all_sinrs, beampattern, crlb, fisher_blocks,
                      fisher_scale, illumination_gain, per_bs_power, sinr,
                      uniform_mrt)
from .conic import (ConicProgram, ConicSettings, ConicSolution, embed_hermitian,
                    solve as conic_solve, trace_inverse_epigraph)
from .solvers import (InfeasibleError, SolveReport, SolveRequest, audit_solution,
                      extract_rank_one, feasible_init, run_request,
                      solve_comm_bisection, solve_comm_sca, solve_multi_target,
                      solve_power_min, solve_sensing_sca, solve_sensing_sdr)
from .baselines import (DirectionSet, allocate_power, beampattern_match,
                        mmse_directions, zf_directions)
