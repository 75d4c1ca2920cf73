import json
import logging
from collections import OrderedDict
from typing import Optional, Union

from fastapi import APIRouter, HTTPException, Request, WebSocket, WebSocketDisconnect, status

from app.core.errors import ProtocolError
from app.models.core_types import ActionChunk
from app.schemas.api_schemas import ErrorCode, HealthResponse
from app.services.bridge_service import (
    decode_observation,
    encode_action_chunk,
    encode_error,
)
from app.services.policy_service import Policy, ScriptedPolicy

logger = logging.getLogger(__name__)

router = APIRouter()

MAX_SESSIONS = 256


def _peek_seq(data: Union[bytes, str]) -> int:
    try:
        seq = json.loads(data).get("seq", 0)
    except Exception:
        return 0
    return seq if isinstance(seq, int) else 0


class PolicySession:
    """
    One policy stream, kept across reconnects of the same client.

    A frame repeating the last answered seq gets the cached reply, so a
    client retry never advances the policy twice.
    """

    def __init__(self, policy: Policy):
        self.policy = policy
        self.last_seq: Optional[int] = None
        self.last_reply: Optional[bytes] = None

    def answer(self, data: Union[bytes, str]) -> bytes:
        seq = 0
        try:
            obs, seq = decode_observation(data)
        except ProtocolError as e:
            logger.info(f"Rejecting malformed frame: {e}")
            return encode_error(_peek_seq(data), ErrorCode.BAD_REQUEST, str(e))
        if seq == self.last_seq and self.last_reply is not None:
            logger.debug(f"Replaying reply for repeated frame {seq}")
            return self.last_reply
        try:
            chunk = self.policy.next_chunk(obs)
        except Exception as e:
            logger.error(f"Policy failed on frame {seq}: {e}")
            return encode_error(seq, ErrorCode.INTERNAL, str(e))
        reply = encode_action_chunk(ActionChunk(seq=seq, actions=chunk.actions))
        self.last_seq, self.last_reply = seq, reply
        return reply


def _open_session(state, seed: Optional[int], session_id: Optional[str]) -> PolicySession:
    sessions: "OrderedDict[str, PolicySession]" = state.sessions
    if session_id and session_id in sessions:
        sessions.move_to_end(session_id)
        logger.info(f"Resuming policy session {session_id}")
        return sessions[session_id]
    policy = ScriptedPolicy(state.policy_handle)
    policy.reset(seed)
    session = PolicySession(policy)
    if session_id:
        sessions[session_id] = session
        while len(sessions) > MAX_SESSIONS:
            sessions.popitem(last=False)
    return session


@router.get("/health", response_model=HealthResponse)
async def health_check(request: Request):
    """Report the served policy and open connections."""
    state = request.app.state
    handle = getattr(state, "policy_handle", None)
    if handle is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No policy configured",
        )
    return HealthResponse(
        policy_kind=handle.kind.value,
        waypoints=len(handle.waypoints),
        connections=state.connections,
        max_connections=state.max_connections,
    )


@router.websocket("/ws")
async def policy_stream(
    websocket: WebSocket, seed: Optional[int] = None, session: Optional[str] = None
):
    """Every observation gets exactly one reply; a known ``session`` resumes its policy stream."""
    state = websocket.app.state
    await websocket.accept()
    if state.connections >= state.max_connections:
        detail = f"server limit of {state.max_connections} connections reached"
        await websocket.send_text(encode_error(0, ErrorCode.OVERLOADED, detail).decode("utf-8"))
        await websocket.close(code=1013)
        return

    state.connections += 1
    stream = _open_session(state, seed, session)
    logger.info(f"Policy connection opened (seed={stream.policy.seed}, open={state.connections})")
    try:
        while True:
            message = await websocket.receive()
            if message["type"] == "websocket.disconnect":
                break
            data = message.get("text")
            if data is None:
                data = message.get("bytes") or b""
            reply = stream.answer(data)
            await websocket.send_text(reply.decode("utf-8"))
    except WebSocketDisconnect:
        pass
    finally:
        state.connections -= 1
        logger.info(f"Policy connection closed (open={state.connections})")
