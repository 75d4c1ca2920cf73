"""
Remote advisor backend over an OpenAI-compatible chat-completions API.

Each advice request issues two calls: a phase-recognition prompt, then an
impedance-generation prompt that carries the fused phase. Replies are parsed
and clamped before they leave this module.
"""

import hashlib
import logging
import time
from datetime import datetime, timedelta
from typing import Any, Dict, Optional

import httpx

from app.core.config import Settings, settings
from app.core.errors import AdvisorUnavailable
from app.services.advisor_service import (
    Advice,
    AdvisorBackend,
    AdvisorContext,
    AdviceSource,
    build_impedance_prompt,
    build_phase_prompt,
    parse_impedance_response,
    parse_phase_response,
)
from app.services.phase_detector import fuse

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are a robotics expert assisting a variable impedance controller. "
    "Answer in the exact output format requested."
)


class RemoteAdvisorBackend(AdvisorBackend):
    """Advisor backed by a hosted chat model."""

    name = "remote"

    def __init__(
        self,
        config: Optional[Settings] = None,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        """
        Initialize the backend from settings.

        Args:
            config: Settings to read endpoint, key and model from (defaults to env settings)
            transport: Optional httpx transport, used to stub the endpoint
        """
        config = config or settings
        if not config.ADVISOR_URL:
            raise ValueError("ADVISOR_URL environment variable is required for the remote advisor")

        self.base_url = config.ADVISOR_URL.rstrip("/")
        self.default_model = config.ADVISOR_MODEL
        self.fallback_model = config.ADVISOR_FALLBACK_MODEL
        self.max_tokens = config.ADVISOR_MAX_TOKENS
        self.cache_ttl_hours = config.ADVISOR_CACHE_TTL_HOURS
        self.temperature = 0.0

        self.headers = {"Content-Type": "application/json"}
        if config.ADVISOR_KEY:
            self.headers["Authorization"] = f"Bearer {config.ADVISOR_KEY}"

        self._client = httpx.Client(timeout=config.ADVISOR_TIMEOUT, transport=transport)
        self._cache: Dict[str, Dict[str, Any]] = {}

        logger.info(f"Remote advisor initialized with model: {self.default_model}")

    def close(self) -> None:
        self._client.close()

    def _get_cache_key(self, prompt: str, model: str) -> str:
        content = f"{prompt}:{model}:{self.temperature}:{self.max_tokens}"
        return hashlib.md5(content.encode()).hexdigest()

    def _is_cache_valid(self, timestamp: datetime) -> bool:
        return datetime.now() < timestamp + timedelta(hours=self.cache_ttl_hours)

    def _make_request(self, payload: Dict[str, Any], model: str) -> Dict[str, Any]:
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", headers=self.headers, json=payload
            )
            response.raise_for_status()
            return response.json()
        except httpx.HTTPStatusError as e:
            logger.error(f"Advisor API error ({e.response.status_code}): {e.response.text[:200]}")
            if model == self.default_model and model != self.fallback_model:
                logger.info(f"Falling back to {self.fallback_model}")
                payload = dict(payload, model=self.fallback_model)
                return self._make_request(payload, self.fallback_model)
            raise AdvisorUnavailable(f"advisor returned HTTP {e.response.status_code}") from e
        except (httpx.HTTPError, ValueError) as e:
            logger.error(f"Advisor request failed: {e}")
            raise AdvisorUnavailable(f"advisor request failed: {e}") from e

    def generate_response(self, prompt: str, use_cache: bool = True) -> str:
        """
        Send one prompt and return the reply text.

        Args:
            prompt: Rendered user prompt
            use_cache: Whether to reuse replies for identical prompts

        Returns:
            The model's reply content
        """
        model = self.default_model
        cache_key = self._get_cache_key(prompt, model)
        if use_cache and cache_key in self._cache:
            cached = self._cache[cache_key]
            if self._is_cache_valid(cached["timestamp"]):
                logger.debug(f"Using cached advisor reply for prompt: {prompt[:50]}...")
                return cached["response"]
            del self._cache[cache_key]

        payload = {
            "model": model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stream": False,
        }
        data = self._make_request(payload, model)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise AdvisorUnavailable("invalid response from advisor service") from e
        if not isinstance(text, str):
            raise AdvisorUnavailable("advisor reply content is not text")

        if use_cache:
            self._cache[cache_key] = {"response": text, "timestamp": datetime.now()}
        return text

    def advise(self, ctx: AdvisorContext) -> Advice:
        started = time.perf_counter()
        phase_text = self.generate_response(build_phase_prompt(ctx))
        semantic = parse_phase_response(phase_text)
        phase = fuse(semantic, ctx.phase)
        logger.debug(f"Advisor phase claim {semantic.value}, fused {phase.value}")

        impedance_ctx = AdvisorContext(
            task=ctx.task,
            phase=phase,
            velocity=ctx.velocity,
            wrench=ctx.wrench,
            range=ctx.range,
        )
        impedance_text = self.generate_response(build_impedance_prompt(impedance_ctx))
        advice = parse_impedance_response(impedance_text, ctx.range, AdviceSource.REMOTE)
        return Advice(
            k=advice.k,
            d=advice.d,
            phase_claim=semantic,
            source=AdviceSource.REMOTE,
            latency=time.perf_counter() - started,
            raw_text=impedance_text,
        )
