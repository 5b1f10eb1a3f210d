"""Distributed best arm identification with Median Elimination."""
from .bandit_core import (
    LocalMedianElimination,
    PlayerState,
    UcbState,
    close_epoch,
    elimination_median,
    epoch_ready,
    local_me_step,
    next_action,
    pull_threshold,
    ucb_select,
    ucb_update,
    update_estimate,
)
from .edme import EdmeConfig, EdmeWorld, edme_event, edme_stopped, spawn_instances
from .env import (
    ArmSet,
    PlayerPopulation,
    RandomSource,
    draw_player,
    epsilon_optimal_set,
    make_population,
    make_problem,
    sample_reward,
)
from .harness import (
    ExperimentConfig,
    RegretTrace,
    RunStats,
    average_traces,
    empirical_speedup,
    run_suite,
    run_trial,
    write_csv,
)
from .protocol import (
    DmeWorld,
    EventRecord,
    MessageLedger,
    ProtocolParams,
    ServerState,
    apply_downward,
    dme_event,
    encode_action_index,
    exploit_action,
    stopped,
    submit_wish,
    total_bits,
)

__version__ = "0.1.0"
