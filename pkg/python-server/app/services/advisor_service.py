"""
Impedance advisor.

Builds the phase and impedance prompts, parses model replies into clamped
advice, and provides the deterministic heuristic used both as a backend and
as the fallback whenever a remote backend fails.
"""

import logging
import re
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.core.errors import ParseError
from app.models.core_types import (
    Axis,
    ContactPhase,
    ImpedanceRange,
    TaskSpec,
    Twist,
    VecLike,
    Wrench,
)

logger = logging.getLogger(__name__)

PROMPT_DIR = Path(__file__).resolve().parent.parent / "prompts"
PHASE_TEMPLATE = "phase_recognition_v1.txt"
IMPEDANCE_TEMPLATE = "impedance_generation_v1.txt"

PHASE_LIST = ", ".join(phase.label for phase in ContactPhase)

# Heuristic anchors as fractions of the stiffness range
CONTACT_FRACTION = 0.1
PRIMARY_AXIS_FACTOR = 0.7
PERPENDICULAR_FACTOR = 1.2
ANISOTROPIC_PHASES = (ContactPhase.APPROACHING, ContactPhase.CONTACT, ContactPhase.RETREAT)


class AdviceSource(str, Enum):
    HEURISTIC = "heuristic"
    REMOTE = "remote"


@dataclass(frozen=True)
class AdvisorContext:
    task: TaskSpec
    phase: ContactPhase
    velocity: Twist
    wrench: Wrench
    range: ImpedanceRange


@dataclass(frozen=True, eq=False)
class Advice:
    k: np.ndarray
    d: np.ndarray
    phase_claim: Optional[ContactPhase] = None
    source: AdviceSource = AdviceSource.HEURISTIC
    latency: float = 0.0
    raw_text: Optional[str] = None
    fallback: bool = False


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (PROMPT_DIR / name).read_text(encoding="utf-8")


def _fmt_vec(values: VecLike, decimals: int) -> str:
    return "[" + ", ".join(f"{float(v):.{decimals}f}" for v in values) + "]"


def _fmt_number(value: float) -> str:
    return f"{float(value):g}"


def format_range(rng: ImpedanceRange) -> str:
    """Compact when every axis shares the same bounds, per axis otherwise."""
    if len(set(rng.k_min)) == 1 and len(set(rng.k_max)) == 1:
        return f"[{_fmt_number(rng.k_min[0])}, {_fmt_number(rng.k_max[0])}] per axis"
    parts = [
        f"{axis.value}: [{_fmt_number(lo)}, {_fmt_number(hi)}]"
        for axis, lo, hi in zip(Axis, rng.k_min, rng.k_max)
    ]
    return ", ".join(parts)


def build_phase_prompt(ctx: AdvisorContext) -> str:
    return load_template(PHASE_TEMPLATE).format(
        task_description=ctx.task.instruction,
        force=_fmt_vec(ctx.wrench.force, 2),
        torque=_fmt_vec(ctx.wrench.torque, 2),
        velocity=_fmt_vec(ctx.velocity.linear, 3),
        phase_list=PHASE_LIST,
    )


def build_impedance_prompt(ctx: AdvisorContext) -> str:
    return load_template(IMPEDANCE_TEMPLATE).format(
        task_description=ctx.task.instruction,
        phase=ctx.phase.label,
        axis=ctx.task.primary_motion_axis.value.upper(),
        velocity=_fmt_vec(ctx.velocity.linear, 3),
        force=_fmt_vec(ctx.wrench.force, 2),
        impedance_range=format_range(ctx.range),
    )


_NUMBER = re.compile(
    r"[-+]?(?:inf(?:inity)?|nan)|[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?",
    re.IGNORECASE,
)


def _triple_pattern(letter: str) -> "re.Pattern[str]":
    # tolerates markdown emphasis and inline code around the label
    return re.compile(
        rf"(?<![A-Za-z0-9_]){letter}[\s*`_]*[=:][\s*`]*\[([^\]]*)\]",
        re.IGNORECASE,
    )


_K_PATTERN = _triple_pattern("K")
_D_PATTERN = _triple_pattern("D")


def _find_triple(pattern: "re.Pattern[str]", text: str) -> Optional[np.ndarray]:
    for match in pattern.finditer(text):
        parts = match.group(1).split(",")
        if len(parts) != 3:
            continue
        numbers = []
        for part in parts:
            found = _NUMBER.findall(part)
            if len(found) != 1:
                break
            numbers.append(float(found[0]))
        else:
            values = np.array(numbers)
            if not np.all(np.isfinite(values)):
                raise ParseError(f"non-finite value in triple: {match.group(0)}")
            return values
    return None


def clamp_to_range(k: VecLike, d: VecLike, rng: ImpedanceRange) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clamp stiffness into range and damping into its fraction band.

    Damping is first rescaled by the stiffness correction so an advised
    damping ratio survives clamping of an out-of-range stiffness.
    """
    k = np.asarray(k, dtype=float)
    d = np.asarray(d, dtype=float)
    k_clamped = np.clip(k, rng.k_min_array, rng.k_max_array)
    ratio = np.divide(k_clamped, k, out=np.ones(3), where=k > 0.0)
    d_scaled = d * ratio
    d_clamped = np.clip(
        d_scaled,
        rng.damping_fraction_min * k_clamped,
        rng.damping_fraction_max * k_clamped,
    )
    return k_clamped, d_clamped


def parse_impedance_response(
    text: str, rng: ImpedanceRange, source: AdviceSource = AdviceSource.REMOTE
) -> Advice:
    """
    Extract ``K = [...]`` and ``D = [...]`` from a model reply.

    A missing damping triple is derived at the middle of the damping band.

    Raises:
        ParseError: no stiffness triple, or a non-finite number.
    """
    k = _find_triple(_K_PATTERN, text)
    if k is None:
        raise ParseError(f"no stiffness triple in response: {text[:80]!r}")
    d = _find_triple(_D_PATTERN, text)
    if d is None:
        d = rng.damping_fraction_mid * np.clip(k, rng.k_min_array, rng.k_max_array)
    k, d = clamp_to_range(k, d, rng)
    return Advice(k=k, d=d, source=source, raw_text=text)


_PHASE_PATTERN = re.compile(
    r"free[\s_\-]*motion|approaching|contact|retreat", re.IGNORECASE
)
_PHASE_ASSIGNMENT = re.compile(r"phase\s*[=:]\s*(.*)", re.IGNORECASE)


def _phase_from_token(token: str) -> ContactPhase:
    key = re.sub(r"[\s_\-]+", "", token.lower())
    return {
        "freemotion": ContactPhase.FREE_MOTION,
        "approaching": ContactPhase.APPROACHING,
        "contact": ContactPhase.CONTACT,
        "retreat": ContactPhase.RETREAT,
    }[key]


def parse_phase_response(text: str) -> ContactPhase:
    assignment = _PHASE_ASSIGNMENT.search(text)
    if assignment:
        match = _PHASE_PATTERN.search(assignment.group(1))
        if match:
            return _phase_from_token(match.group(0))
    match = _PHASE_PATTERN.search(text)
    if match is None:
        raise ParseError(f"no contact phase in response: {text[:80]!r}")
    return _phase_from_token(match.group(0))


def format_impedance_response(k: VecLike, d: VecLike) -> str:
    """Render advice in the output syntax the prompts ask for."""
    k_text = ", ".join(repr(float(v)) for v in k)
    d_text = ", ".join(repr(float(v)) for v in d)
    return f"K = [{k_text}], D = [{d_text}]"


def heuristic_advise(ctx: AdvisorContext) -> Advice:
    rng = ctx.range
    k_min, k_max = rng.k_min_array, rng.k_max_array
    if ctx.phase is ContactPhase.FREE_MOTION:
        base = k_max.copy()
    elif ctx.phase is ContactPhase.CONTACT:
        base = k_min + CONTACT_FRACTION * (k_max - k_min)
    else:
        base = 0.5 * (k_min + k_max)

    if ctx.phase in ANISOTROPIC_PHASES:
        factors = np.full(3, PERPENDICULAR_FACTOR)
        factors[ctx.task.primary_motion_axis.index] = PRIMARY_AXIS_FACTOR
        base = base * factors

    k = np.clip(base, k_min, k_max)
    k, d = clamp_to_range(k, rng.damping_fraction_mid * k, rng)
    return Advice(k=k, d=d, source=AdviceSource.HEURISTIC)


class AdvisorBackend:
    """Interface every advisor backend implements."""

    name = "backend"

    def advise(self, ctx: AdvisorContext) -> Advice:
        raise NotImplementedError

    def close(self) -> None:
        pass


class HeuristicBackend(AdvisorBackend):
    name = "heuristic"

    def advise(self, ctx: AdvisorContext) -> Advice:
        return heuristic_advise(ctx)


def advise(ctx: AdvisorContext, backend: AdvisorBackend) -> Advice:
    """Ask the backend; any failure degrades to heuristic advice flagged as a fallback."""
    started = time.perf_counter()
    try:
        advice = backend.advise(ctx)
    except Exception as e:
        logger.warning(f"Advisor backend '{backend.name}' failed, using heuristic: {e}")
        advice = replace(heuristic_advise(ctx), fallback=True)
    return replace(advice, latency=time.perf_counter() - started)


class LatestMailbox:
    """Single-slot mailbox: a new value replaces any unread one."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = None

    def put(self, value) -> None:
        with self._lock:
            self._value = value

    def take(self):
        with self._lock:
            value, self._value = self._value, None
            return value


class AdvisorWorker:
    """Runs advice requests on a background thread and posts results to a mailbox."""

    def __init__(self, backend: AdvisorBackend, mailbox: LatestMailbox):
        self.backend = backend
        self.mailbox = mailbox
        self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="advisor")

    def submit(self, ctx: AdvisorContext) -> "Future[Advice]":
        future = self._executor.submit(advise, ctx, self.backend)
        future.add_done_callback(lambda f: self.mailbox.put(f.result()))
        return future

    def close(self) -> None:
        self._executor.shutdown(wait=True)

