"""Two-stage surface-code decoding toolkit.

Belief propagation runs as a partial decoder in front of a minimum-weight
perfect matching stage; the package also ships the rotated surface code
circuit generator, detector error model extraction, Pauli-frame sampling
and the benchmarking pipeline around them.
"""

from .bench import (ExperimentConfig, MetricsReport, ThresholdFit, ThresholdPoint,
                    convergence_curve, estimate_threshold, run_experiment,
                    weight_histograms, wilson_interval)
from .bp import (BpResult, BpState, TannerGraph, bp_decode, bp_decode_batch,
                 bp_init, check_to_error_messages, error_to_check_messages,
                 posterior_and_decision)
from .circuit import Circuit, Instruction
from .dem import DetectorErrorModel, combine_probabilities, extract_dem, propagate_fault
from .errors import (BppdError, DecodeError, DecompositionError, EstimationError,
                     ParameterError, StructureError)
from .framesim import (Shot, ShotArray, read_shots, sample_dem_shots, sample_shots,
                       shots_for, write_shots)
from .graph import DecodingGraph, decompose_to_graph
from .matching import (Correction, MatchingProblem, belief_matching_decode,
                       belief_matching_decode_batch, build_matching_problem,
                       mwpm_decode, reweighted_mwpm, timed_batch_decode,
                       timed_reweighted_decode)
from .partial import (DecodeResult, PartialOutcome, partial_decode, two_stage_decode,
                      two_stage_decode_batch)
from .surface import RotatedSurfaceLayout, apply_noise_model, build_memory_circuit

__version__ = "0.1.0"
