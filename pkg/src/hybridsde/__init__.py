"""Monte Carlo simulation and diagnostics for regime-switching jump diffusions."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .model import (ModelSpec, HybridState, example1_model, zero_model, ctmc_model,  # noqa: E402
                    frozen_model, generator_matrix, geometric_rates_model, model_from_json)
from .integrator import (IntegratorConfig, PathRecord, BatchResult, EnsembleResult,  # noqa: E402
                         simulate_hybrid, simulate_segment, run_ensemble, ensemble,
                         regime_majorant)
from .diagnostics import (SmoothFunction, apply_generator, lyapunov_V, phi, modulus,  # noqa: E402
                          SamplePlan, CheckReport, check_assumption_2_1,
                          check_assumption_2_2_and_3_2, check_assumption_4_3_and_ellipticity,
                          supermartingale_test)
from .coupling import (couple_paths, estimate_Wf, bihari_bound, feller_bound,  # noqa: E402
                       metric_F, metric_f)
from .resolvent import (resolvent_G, killed_resolvent, series_terms, series_psi,  # noqa: E402
                        verify_series, remainder_bound, kill_bound_check)
