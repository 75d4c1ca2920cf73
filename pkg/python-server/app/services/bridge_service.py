"""
Observation/action bridge between the episode runner and a policy server.

Frames are UTF-8 JSON text; floats use Python's shortest round-trip repr so
an encode/decode cycle reproduces every number exactly.
"""

import base64
import json
import logging
import socket
import uuid
from typing import Optional, Tuple, Union

import uvicorn
from pydantic import ValidationError
from websockets.exceptions import WebSocketException
from websockets.sync.client import ClientConnection, connect

from app.core.config import settings
from app.core.errors import PolicyError, ProtocolError
from app.models.core_types import (
    ActionChunk,
    ActionCommand,
    ObservationFrame,
    Pose,
    Twist,
    Wrench,
)
from app.schemas.api_schemas import (
    ActionChunkMessage,
    ErrorCode,
    ErrorMessage,
    ObservationMessage,
    Proprio,
)
from app.services.policy_service import Policy, PolicyHandle

logger = logging.getLogger(__name__)

Frame = Union[bytes, str]


def _dumps(payload: dict) -> bytes:
    return json.dumps(payload, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _loads(data: Frame) -> dict:
    try:
        payload = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"frame is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ProtocolError("frame must be a JSON object")
    return payload


def encode_observation(obs: ObservationFrame, seq: int) -> bytes:
    images = None
    if obs.images:
        images = {name: base64.b64encode(data).decode("ascii") for name, data in obs.images.items()}
    message = ObservationMessage(
        seq=seq,
        timestamp=obs.timestamp,
        proprio=Proprio(
            pose=obs.pose.to_list(),
            twist=obs.twist.to_list(),
            wrench=obs.wrench.to_list(),
            gripper=obs.gripper,
        ),
        images=images,
    )
    return _dumps(message.model_dump(mode="json", exclude_none=True))


def decode_observation(data: Frame) -> Tuple[ObservationFrame, int]:
    payload = _loads(data)
    if payload.get("type") != "observation":
        raise ProtocolError(f"expected an observation frame, got type {payload.get('type')!r}")
    try:
        message = ObservationMessage.model_validate(payload)
        images = None
        if message.images:
            images = {name: base64.b64decode(text) for name, text in message.images.items()}
        frame = ObservationFrame(
            timestamp=message.timestamp,
            pose=Pose.from_list(message.proprio.pose),
            twist=Twist.from_list(message.proprio.twist),
            wrench=Wrench.from_list(message.proprio.wrench),
            gripper=message.proprio.gripper,
            images=images,
        )
    except (ValidationError, ValueError) as e:
        raise ProtocolError(f"invalid observation: {e}") from e
    return frame, message.seq


def encode_action_chunk(chunk: ActionChunk) -> bytes:
    message = ActionChunkMessage(
        seq=chunk.seq,
        actions=[action.to_list() for action in chunk.actions],
        horizon=chunk.horizon,
    )
    return _dumps(message.model_dump(mode="json"))


def decode_action_chunk(data: Frame) -> ActionChunk:
    payload = _loads(data)
    kind = payload.get("type")
    if kind == "error":
        raise ProtocolError(f"policy server error {payload.get('code')}: {payload.get('detail')}")
    if kind != "action_chunk":
        raise ProtocolError(f"expected an action_chunk frame, got type {kind!r}")
    try:
        message = ActionChunkMessage.model_validate(payload)
    except ValidationError as e:
        raise ProtocolError(f"invalid action chunk: {e}") from e
    return ActionChunk(
        seq=message.seq,
        actions=tuple(ActionCommand.from_list(action) for action in message.actions),
    )


def encode_error(seq: int, code: ErrorCode, detail: str) -> bytes:
    return _dumps(ErrorMessage(seq=seq, code=code, detail=detail).model_dump(mode="json"))


def default_server_url() -> str:
    return f"ws://{settings.BRIDGE_HOST}:{settings.BRIDGE_PORT}/ws"


class RemotePolicy(Policy):
    """Policy client speaking the bridge protocol over a websocket."""

    def __init__(self, handle: PolicyHandle):
        super().__init__(handle)
        self.url = handle.server_url or default_server_url()
        self._ws: Optional[ClientConnection] = None
        self._seq = 0
        self._session = uuid.uuid4().hex

    def _connect(self) -> ClientConnection:
        separator = "&" if "?" in self.url else "?"
        url = f"{self.url}{separator}seed={self.seed}&session={self._session}"
        logger.debug(f"Connecting to policy server {url}")
        return connect(url, open_timeout=self.handle.timeout, max_size=None)

    def _drop(self) -> None:
        if self._ws is not None:
            try:
                self._ws.close()
            except Exception as e:
                logger.debug(f"Ignoring error while closing policy connection: {e}")
            self._ws = None

    def reset(self, seed: Optional[int] = None) -> None:
        """A new session starts a fresh policy stream; reconnects within it resume the stream."""
        self._drop()
        self.seed = self.handle.seed if seed is None else seed
        self._seq = 0
        self._session = uuid.uuid4().hex

    def next_chunk(self, obs: ObservationFrame) -> ActionChunk:
        self._seq += 1
        frame = encode_observation(obs, self._seq).decode("utf-8")
        last_error: Optional[Exception] = None
        for attempt in range(1, self.handle.retries + 1):
            try:
                if self._ws is None:
                    self._ws = self._connect()
                self._ws.send(frame)
                reply = self._ws.recv(timeout=self.handle.timeout)
            except (TimeoutError, OSError, WebSocketException) as e:
                last_error = e
                logger.warning(
                    f"Policy request {self._seq} failed (attempt {attempt}/{self.handle.retries}): {e}"
                )
                self._drop()
                continue
            try:
                chunk = decode_action_chunk(reply)
            except ProtocolError as e:
                raise PolicyError(f"policy server replied with an unusable frame: {e}") from e
            if chunk.seq != self._seq:
                raise PolicyError(f"reply seq {chunk.seq} does not match request {self._seq}")
            return chunk
        raise PolicyError(f"policy server unreachable after {self.handle.retries} attempts: {last_error}")

    def close(self) -> None:
        self._drop()


def bind_socket(host: str, port: int) -> socket.socket:
    """Bind the listening socket up front so address conflicts surface immediately."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        sock.bind((host, port))
    except OSError:
        sock.close()
        raise
    sock.set_inheritable(True)
    return sock


def build_mock_server(sock: socket.socket, handle: PolicyHandle, log_level: str = "info") -> uvicorn.Server:
    from app.main import create_app

    host, port = sock.getsockname()[:2]
    config = uvicorn.Config(create_app(handle), host=host, port=port, log_level=log_level)
    return uvicorn.Server(config)


def serve_mock_policy(bind_address: Tuple[str, int], handle: PolicyHandle, log_level: str = "info") -> None:
    """
    Run the mock policy server until interrupted.

    Raises:
        OSError: the address cannot be bound
    """
    host, port = bind_address
    sock = bind_socket(host, port)
    server = build_mock_server(sock, handle, log_level)
    logger.info(f"Mock policy server listening on ws://{host}:{port}/ws")
    try:
        server.run(sockets=[sock])
    finally:
        sock.close()
    logger.info("Mock policy server stopped")
