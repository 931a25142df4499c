"""Monte Carlo simulation of exact open-system dynamics through a
pair-state Markovian jump process over total-system product states."""

from .engine import (BranchState, JumpChannel, MatrixChannel, MatrixPairModel,
                     RateSet, TrajectoryPair, advance_no_jump, apply_jump,
                     compute_rates, contribution, evolve_pair,
                     evolve_pair_thinning, sample_next_jump_thinning, step)
from .jc import (DiscretizedReservoir, JCBathState, JCModel,
                 LorentzianSpectrum, bath_correlation, discretize)
from .reference import (AmplitudeSolution, DenseModel, born_markov_p,
                        jc_exact, spin_block_exact, tcl2_jc_p,
                        von_neumann_dense, von_neumann_dense_mixed)
from .runner import (RunConfig, load_config, run_compare, run_pjm_table,
                     run_reference, run_simulate)
from .spinbath import (CollectiveLabel, LadderBathState, SpinBathModel,
                       SpinBathParams, pjm, sample_initial_label,
                       spin_initial_pair)
from .stats import (DensityEstimate, EnsembleAccumulator, accumulate,
                    estimate, merge, variance_growth)

__version__ = "0.1.0"
