"""Random unitary network model on Z^2 and its localization diagnostics."""

__version__ = "0.1.0"

from .lattice import (BOX, CCW, CW, STRIP, TORUS, BlockCoord, BoxSpec,
                      GeometryError, IndexMap, Site, block_anchor, block_of,
                      block_sites, boundary_of, ccw_successor, cw_successor,
                      interior_of, neighborhood, same_block)
from .operators import (COMPLEMENT_WALLS, CRITICAL_PHI, DECOUPLED, FULL_TORUS,
                        WALLS, CouplingOperator, DisorderField, NetworkOperator,
                        PhaseAngle, build_complement_s, build_decoupled,
                        build_operator, build_s, build_u, load_operator,
                        phi_from_energy, sample_disorder, save_operator,
                        unitarity_defect, wall_term)
from .spectral import (GapEvent, GapProbability, NumericalError, Spectrum,
                       arc_measure, block_determinants, diagonalize,
                       exact_miss_probability, gap_event, gap_probability_mc,
                       miss_lower_bound, phi0_spectrum, spectra_match)
from .resolvent import (ContractionReport, DecayFit, MomentRecord,
                        ResolventSolver, SpectralParameter, contraction_check,
                        correlator, correlator_row, fit_decay,
                        fractional_moment_mc, resolvent_element)
from .dynamics import (SpreadSeries, StateVector, evolve, position_moment,
                       rim_mass, spread_experiment)
from .ensemble import (ConfigError, ExperimentConfig, correlator_decay_experiment,
                       ray_pairs, run, strip_experiment, write_csv)
