"""Multi-asset portfolio pricing and P&L risk by neural-network least-squares
Monte Carlo.

A feed-forward network per exercise date regresses the continuation values
of every instrument in the portfolio at once; the fitted networks define an
exercise rule that is then applied on fresh paths to price the portfolio
and to sample its profit-and-loss distribution at future horizons.

Typical use::

    from nnlsm import LsmConfig, train_policy, price_with_policy
    policy = train_policy(portfolio, LsmConfig(seed=1))
    result = price_with_policy(policy, n_paths=1_000_000, seed=2)
"""

from .errors import ConfigError, ContractViolation, TrainingError
from .instruments import Instrument, Kind, Portfolio, american_put, call_on_max, call_on_min, european, every
from .lsm import LsmConfig, TrainedPolicy, load_policy, save_policy, train_policy
from .market import ModelParams, PathSet, TimeGrid, simulate_paths
from .network import Network, TrainConfig
from .pnl import PnlDistribution, build_pnl, quantile
from .pricing import PricingResult, backward_estimate, price_with_policy

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractViolation", "TrainingError",
    "Instrument", "Kind", "Portfolio", "american_put", "call_on_max", "call_on_min", "european", "every",
    "LsmConfig", "TrainedPolicy", "load_policy", "save_policy", "train_policy",
    "ModelParams", "PathSet", "TimeGrid", "simulate_paths",
    "Network", "TrainConfig",
    "PnlDistribution", "build_pnl", "quantile",
    "PricingResult", "backward_estimate", "price_with_policy",
]
