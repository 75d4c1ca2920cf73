from fastapi import APIRouter

from app.api.endpoints import policy

api_router = APIRouter()

# Mock policy endpoints: websocket stream and health check
api_router.include_router(policy.router, tags=["policy"])
