"""Maximum-likelihood regression with a Gaussian random measurement matrix."""
from .baselines import CrbResult, crb, ls, oracle_ls, ridge_form, tls
from .estimator import (SolverOptions, bisect_dual, compute_S, decompose, g_of_nu,
                        g_prime_of_nu, neg_log_likelihood, solve)
from .model import (CaseTag, DualCertificate, MlSolution, Multiplicity, ProblemInstance,
                    SampledTruth, SpectralForm, load_instance, load_solution, save_instance,
                    save_solution)
from .montecarlo import (ExperimentConfig, preset_config, quantizer_noise_variance,
                         run_experiment, sample_trial)
from .verify import grid_minimize, kkt_check, lifted_hessian_psd, make_case_instance

__version__ = "0.1.0"
