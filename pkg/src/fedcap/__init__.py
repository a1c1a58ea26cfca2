"""Federated capability-based access control.

Identity-bound capability tokens, a staged local authorization pipeline,
single-level delegation from a cloud policy decision center to domain
coordinators, and enforcement middleware for edge service providers.
"""

from .authz import Authorizer, Decision, RequestContext, Stage, authorize
from .capability import (
    compute_rnd0,
    compute_rnd_i,
    compute_vid,
    mint_external_cap,
    mint_internal_cap,
    owner_signature,
    verify_chain,
    verify_token_signature,
)
from .clock import Clock, ManualClock
from .coordinator import Coordinator, LocalPdcLink
from .crypto import SigningKey
from .delegation import Claim, DelegationAuthority, DelegationError, IdentityAuthority, KeyProof
from .errors import AuthorizationFailure, DuplicateEntity, FedcapError, NotFound, Rejected
from .model import (
    AccessRight,
    Action,
    CapabilityToken,
    Condition,
    DelegationCertificate,
    EntityKind,
    InternalCapability,
    Profile,
    RevocationCertificate,
    RevocationList,
    RevocationScope,
    VirtualIdentity,
)
from .pdc import PolicyDecisionCenter, SyncDelta
from .policy import CapabilityPool, PolicyRule
from .provider import TOKEN_HEADER, ProviderConfig, ServiceProvider

__version__ = "0.1.0"

__all__ = [
    "AccessRight",
    "Action",
    "AuthorizationFailure",
    "authorize",
    "Authorizer",
    "CapabilityPool",
    "CapabilityToken",
    "Claim",
    "Clock",
    "compute_rnd0",
    "compute_rnd_i",
    "compute_vid",
    "Condition",
    "Coordinator",
    "Decision",
    "DelegationAuthority",
    "DelegationCertificate",
    "DelegationError",
    "DuplicateEntity",
    "EntityKind",
    "FedcapError",
    "IdentityAuthority",
    "InternalCapability",
    "KeyProof",
    "LocalPdcLink",
    "ManualClock",
    "mint_external_cap",
    "mint_internal_cap",
    "NotFound",
    "owner_signature",
    "PolicyDecisionCenter",
    "PolicyRule",
    "Profile",
    "ProviderConfig",
    "Rejected",
    "RequestContext",
    "RevocationCertificate",
    "RevocationList",
    "RevocationScope",
    "ServiceProvider",
    "SigningKey",
    "Stage",
    "SyncDelta",
    "TOKEN_HEADER",
    "verify_chain",
    "verify_token_signature",
    "VirtualIdentity",
]
