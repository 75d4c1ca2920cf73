"""FastAPI application serving a scripted policy over the bridge protocol."""

import logging
from collections import OrderedDict
from typing import Optional

from fastapi import FastAPI

from app.api.routes import api_router
from app.core.config import settings
from app.services.policy_service import PolicyHandle, PolicyKind

logger = logging.getLogger(__name__)


def create_app(handle: PolicyHandle, max_connections: Optional[int] = None) -> FastAPI:
    if handle.kind is PolicyKind.REMOTE:
        raise ValueError("the mock server can only serve scripted policies")

    app = FastAPI(
        title="Mock Policy Server",
        description="Scripted action-chunk policy behind the websocket bridge",
        version="1.0.0",
    )
    app.state.policy_handle = handle
    app.state.connections = 0
    app.state.max_connections = max_connections or settings.BRIDGE_MAX_CONNECTIONS
    app.state.sessions = OrderedDict()
    app.include_router(api_router)
    logger.info(f"Serving {handle.kind.value} policy with {len(handle.waypoints)} waypoints")
    return app
