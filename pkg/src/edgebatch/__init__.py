"""Batch scheduling and epoch-slotted simulation for LLM inference at a
resource-constrained wireless edge node."""

from .baselines import (GpuPool, SchedulerDecision, nob_assign, static_batch_size,
                        stb_schedule)
from .catalog import (LlmSpec, QuantProfile, accuracy_admissible, builtin_models,
                      builtin_quant_profiles, delta_ppl, get_model, get_profile,
                      load_catalog)
from .costs import (BatchCost, BatchPlan, NodeCompute, batch_cost,
                    flops_autoregressive, flops_autoregressive_stepwise,
                    flops_initial, kv_bytes_autoregressive, kv_bytes_initial,
                    kv_cache_bytes_per_token, weight_bytes)
from .dftsp import (ClassPartition, SearchOutcome, SearchTables, dfs, dftsp,
                    exhaustive_optimal, partition, recover_subset)
from .feasibility import (EdgeContext, KnapsackCoefficients, Request,
                          WeightsDoNotFitError, check_direct, check_knapsack,
                          derive_coefficients, filter_admissible, leq)
from .radio import (RadioConfig, UserLink, dbm_to_watts, downlink_fraction_per_token,
                    min_downlink_fraction, min_uplink_fraction,
                    sample_channel_power, spectral_efficiency,
                    uplink_fraction_per_token)
from .sim import (ConfigError, Scenario, SimMetrics, complexity_reduction,
                  generate_workload, resolved_mapping, run)

__version__ = "0.1.0"
