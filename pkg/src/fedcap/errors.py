"""Exception hierarchy for service-level failures."""


class FedcapError(Exception):
    pass


class Rejected(FedcapError):
    """An access-right request (capability issuance) was refused."""


class NotFound(FedcapError):
    pass


class DuplicateEntity(FedcapError):
    pass


class AuthorizationFailure(FedcapError):
    """Caller is not entitled to the operation (e.g. revoked coordinator syncing)."""
