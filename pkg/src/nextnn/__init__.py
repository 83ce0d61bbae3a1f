"""Fully distributed and block-parallel training of small neural networks.

Agents holding private data shards cooperate over a sparse, possibly
time-varying communication graph: each round they minimize a strongly
convex local surrogate of the shared training objective, take a convex-
combination step, and mix iterates and gradient trackers with their
neighbors under doubly stochastic weights. The package also ships the
diffusion and centralized baselines, block-parallel local solvers, and a
CLI experiment harness producing CSV traces.
"""

from .baselines import CentralizedState, centralized_run, centralized_step, distgrad_round, distgrad_run
from .blocks import BlockPartition, block_partition, block_solve_ridge
from .datasets import Dataset, PartitionedData, load_dataset, load_schema, split_and_partition, synthetic_regression
from .engine import (
    AgentState,
    RunConfig,
    RunResult,
    StepSizeSchedule,
    consensus_round,
    init_states,
    run,
    sca_local_update,
    step_size_next,
)
from .metrics import TraceRow, TraceSet, comm_account, disagreement, test_metric
from .mlp import NetArch, forward, init_weights, jacobian_matrix, local_cost, local_gradient, neuron_groups, weight_jacobian
from .objectives import GroupPenalty, L1Penalty, L2Penalty, Loss, global_cost, loss_value
from .surrogates import (
    InnerSettings,
    Linearization,
    QuadraticModel,
    SolveResult,
    SurrogateSpec,
    fl_direction,
    pl_quadratic_model,
    pl_solve_crossentropy,
    pl_solve_l1,
    pl_solve_ridge,
    soft_threshold,
    solve_surrogate,
    surrogate_smooth_value,
    surrogate_value,
)
from .topology import (
    Graph,
    MixingMatrix,
    TopologySchedule,
    metropolis_mixing,
    random_connected_graph,
    undirected_graph,
    validate_schedule,
)

__version__ = "0.1.0"
