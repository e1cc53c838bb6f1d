"""Hierarchical self-organization of multi-RAT wireless mesh networks:
protocol library, discrete-event setup simulator, and exact linear-network
analysis."""

__version__ = "0.1.0"

from .channel import (  # noqa: F401
    ChannelParams,
    RatParams,
    default_channel_params,
    default_rats,
    link_prob,
    los_distance,
    mean_loss,
    outage_prob,
    q_function,
)
from .consensus import DeviceState, Role, RuleConfig  # noqa: F401
from .simengine import NonConvergenceError, RunMetrics, TimerConfig  # noqa: F401
from .topology import Deployment, DeploymentConfig, RatLinkGraph  # noqa: F401
