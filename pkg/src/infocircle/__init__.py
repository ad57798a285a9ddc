"""Multi-agent information diffusion in asymmetric open environments."""

from infocircle.attention import (
    AttentionInput,
    ReceivedMessage,
    WeightedMessage,
    compute_attention,
    set_entropy,
    text_entropy,
)
from infocircle.core import (
    ENV,
    NEW_AGENT,
    Action,
    AgentProfile,
    ContentKind,
    Mechanism,
    Message,
    PolicySpec,
    Recruit,
    RelationshipChange,
    RelationshipKind,
    ScenarioConfig,
    Send,
    SimilaritySpec,
    Topology,
    bundled_config,
    init_relationships,
    load_config,
    make_config,
    topology_edges,
    validate_config,
)
from infocircle.engine import RunLog, Simulation, SimulationState, run
from infocircle.metrics import MetricsReport, aggregate, compute_metrics
from infocircle.policy import DecisionRequest, make_policy
from infocircle.similarity import make_provider

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgentProfile",
    "AttentionInput",
    "ContentKind",
    "DecisionRequest",
    "ENV",
    "Mechanism",
    "Message",
    "MetricsReport",
    "NEW_AGENT",
    "PolicySpec",
    "ReceivedMessage",
    "Recruit",
    "RelationshipChange",
    "RelationshipKind",
    "RunLog",
    "ScenarioConfig",
    "Send",
    "SimilaritySpec",
    "Simulation",
    "SimulationState",
    "Topology",
    "WeightedMessage",
    "aggregate",
    "bundled_config",
    "compute_attention",
    "compute_metrics",
    "init_relationships",
    "load_config",
    "make_config",
    "make_policy",
    "make_provider",
    "run",
    "set_entropy",
    "text_entropy",
    "topology_edges",
    "validate_config",
]
