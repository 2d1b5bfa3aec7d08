from .service import (
    AnnotationSubmission,
    AnnotationTask,
    LedgerEntry,
    MissedBox,
    PortalConfig,
    PortalService,
    RevenueEvent,
    TREASURY,
    largest_remainder,
)
from .httpd import PortalApp, load_tokens, make_server

__all__ = [
    "AnnotationSubmission",
    "AnnotationTask",
    "LedgerEntry",
    "MissedBox",
    "PortalApp",
    "PortalConfig",
    "PortalService",
    "RevenueEvent",
    "TREASURY",
    "largest_remainder",
    "load_tokens",
    "make_server",
]
