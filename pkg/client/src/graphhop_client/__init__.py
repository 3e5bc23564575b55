"""graphhop-client: SDK for driving rollout episodes over the v1 wire protocol."""

from .client import (
    PROTOCOL_VERSION,
    ClientError,
    ClientSession,
    ProtocolError,
    RolloutResult,
    TransportError,
    run_rollout,
)
from .masking import mask_to_token_indices

__version__ = "0.1.0"
