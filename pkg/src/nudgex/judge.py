"""Rubric-based caption gating: a second model scores, a deterministic rule decides.

Five fixed dimensions, each scored 1-5. A caption passes when the exact
average (stored as sum/divisor, no float drift) reaches the average
threshold and every dimension reaches the minimum threshold; both
comparisons are inclusive.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from .captioner import CaptionCandidate, CaptionStore
from .errors import JudgeFormatError, ValidationError
from .providers import ChatClient, ChatMessage, ChatRequest, with_retries

logger = logging.getLogger(__name__)

DIMENSIONS = (
    "environmental_focus",
    "specific_terminology",
    "pattern_observation",
    "constraint_adherence",
    "conciseness",
)

DIMENSION_DEFINITIONS = {
    "environmental_focus": "The caption concentrates on environmental conditions and impacts visible in the scene.",
    "specific_terminology": "The caption uses precise mining and remote-sensing vocabulary rather than generic wording.",
    "pattern_observation": "The caption points out concrete spatial patterns: pits, benches, ponds, staining, vegetation edges.",
    "constraint_adherence": "The caption stays within the supplied image, metadata and indicator evidence.",
    "conciseness": "The caption is a single tight paragraph without filler or repetition.",
}

SCALE_MIN = 1
SCALE_MAX = 5

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Rubric:
    theta_avg: float = 4.0
    theta_min: int = 3
    definitions: tuple[tuple[str, str], ...] = tuple(DIMENSION_DEFINITIONS.items())

    def __post_init__(self):
        names = tuple(name for name, _ in self.definitions)
        if names != DIMENSIONS:
            raise ValidationError(f"rubric dimensions must be exactly {DIMENSIONS}")
        if not SCALE_MIN <= self.theta_avg <= SCALE_MAX:
            raise ValidationError("theta_avg must be within the 1..5 scale")
        if not SCALE_MIN <= self.theta_min <= SCALE_MAX:
            raise ValidationError("theta_min must be within the 1..5 scale")
        if self.theta_min > self.theta_avg:
            raise ValidationError("theta_min must not exceed theta_avg")


DEFAULT_RUBRIC = Rubric()


def gate(scores: Sequence[int], rubric: Rubric = DEFAULT_RUBRIC) -> bool:
    """Inclusive decision rule: mean >= theta_avg and min >= theta_min."""
    if len(scores) != len(DIMENSIONS):
        raise ValidationError(f"expected {len(DIMENSIONS)} scores, got {len(scores)}")
    for score in scores:
        if not isinstance(score, int) or isinstance(score, bool) or not SCALE_MIN <= score <= SCALE_MAX:
            raise ValidationError(f"score {score!r} outside {SCALE_MIN}..{SCALE_MAX}")
    average = Fraction(sum(scores), len(scores))
    return average >= Fraction(rubric.theta_avg) and min(scores) >= rubric.theta_min


def _extract_json_objects(text: str):
    """Yield each balanced, string-aware top-level {...} substring."""
    depth = 0
    start = None
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start is not None:
                yield text[start: i + 1]
                start = None


def parse_judge_response(text: str) -> tuple[dict[str, int], str]:
    """Strict JSON first; otherwise the first balanced object embedded in prose.

    Returns (scores keyed by dimension, rationale) or raises JudgeFormatError.
    """
    candidates = []
    stripped = (text or "").strip()
    if stripped:
        try:
            obj = json.loads(stripped)
            if isinstance(obj, dict):
                candidates.append(obj)
        except ValueError:
            pass
        if not candidates:
            for fragment in _extract_json_objects(stripped):
                try:
                    obj = json.loads(fragment)
                except ValueError:
                    continue
                if isinstance(obj, dict):
                    candidates.append(obj)
                    break

    if not candidates:
        raise JudgeFormatError("no JSON object found in judge output")

    obj = candidates[0]
    raw_scores = obj.get("scores")
    if not isinstance(raw_scores, dict):
        raise JudgeFormatError("judge output missing 'scores' object")
    scores: dict[str, int] = {}
    for dim in DIMENSIONS:
        if dim not in raw_scores:
            raise JudgeFormatError(f"judge output missing dimension {dim!r}")
        value = raw_scores[dim]
        if isinstance(value, bool) or not isinstance(value, int):
            raise JudgeFormatError(f"score for {dim} is not an integer: {value!r}")
        if not SCALE_MIN <= value <= SCALE_MAX:
            raise JudgeFormatError(f"score for {dim} outside {SCALE_MIN}..{SCALE_MAX}: {value}")
        scores[dim] = value
    rationale = obj.get("rationale", "")
    if not isinstance(rationale, str):
        rationale = str(rationale)
    return scores, rationale


@dataclass(frozen=True)
class JudgeScore:
    caption_id: str
    scores: dict[str, int]
    score_sum: int
    score_divisor: int
    rationale: str
    passed: bool
    raw_response: str
    judge_model_id: str
    theta_avg: float
    theta_min: int
    created_at: datetime

    @property
    def average(self) -> Fraction:
        return Fraction(self.score_sum, self.score_divisor)

    def to_json(self) -> dict:
        return {
            "caption_id": self.caption_id,
            "scores": dict(self.scores),
            "score_sum": self.score_sum,
            "score_divisor": self.score_divisor,
            "average": self.score_sum / self.score_divisor,
            "rationale": self.rationale,
            "passed": self.passed,
            "raw_response": self.raw_response,
            "judge_model_id": self.judge_model_id,
            "theta_avg": self.theta_avg,
            "theta_min": self.theta_min,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JudgeScore":
        return cls(
            caption_id=obj["caption_id"],
            scores={k: int(v) for k, v in obj["scores"].items()},
            score_sum=obj["score_sum"],
            score_divisor=obj["score_divisor"],
            rationale=obj["rationale"],
            passed=obj["passed"],
            raw_response=obj["raw_response"],
            judge_model_id=obj["judge_model_id"],
            theta_avg=obj["theta_avg"],
            theta_min=obj["theta_min"],
            created_at=datetime.fromisoformat(obj["created_at"]),
        )


class JudgeScoreStore:
    """Verdicts appended to ``captions/scores.jsonl``."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._path = self.root / "captions" / "scores.jsonl"
        self._lock = threading.Lock()

    def add(self, score: JudgeScore) -> None:
        with self._lock:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(score.to_json(), sort_keys=True) + "\n")

    def list(self, caption_id: Optional[str] = None) -> list[JudgeScore]:
        if not self._path.exists():
            return []
        scores = []
        for line in self._path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                score = JudgeScore.from_json(json.loads(line))
                if caption_id is None or score.caption_id == caption_id:
                    scores.append(score)
        return scores


def build_judge_request(caption_text: str, rubric: Rubric, model_id: str) -> ChatRequest:
    lines = [
        "You evaluate captions that describe satellite views of mining sites.",
        "Score the caption from 1 (poor) to 5 (excellent) on each dimension:",
    ]
    for name, definition in rubric.definitions:
        lines.append(f"- {name}: {definition}")
    lines += [
        "",
        'Respond with ONLY a JSON object of the exact shape',
        '{"scores": {"' + '": int, "'.join(DIMENSIONS) + '": int}, "rationale": string}.',
    ]
    return ChatRequest(
        model=model_id,
        temperature=0.0,
        messages=(
            ChatMessage.text("system", "\n".join(lines)),
            ChatMessage.text("user", f"Caption to evaluate:\n{caption_text}"),
        ),
    )


def score_caption(
    caption: CaptionCandidate,
    rubric: Rubric,
    client: ChatClient,
    caption_store: CaptionStore,
    score_store: JudgeScoreStore,
    *,
    judge_model_id: str,
    parse_retries: int = 2,
    transport_retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    clock: Clock = utc_now,
) -> JudgeScore:
    """Score one candidate and gate it; format failures leave it retryable."""
    if caption.status != "candidate":
        raise ValidationError(f"caption {caption.caption_id} is {caption.status}, not a candidate")

    request = build_judge_request(caption.text, rubric, judge_model_id)
    raw = ""
    parsed: Optional[tuple[dict[str, int], str]] = None
    for attempt in range(1, parse_retries + 1):
        raw = with_retries(
            lambda: client.complete(request),
            attempts=transport_retries,
            base_delay=backoff_base,
            sleep=sleep,
        )
        try:
            parsed = parse_judge_response(raw)
            break
        except JudgeFormatError as exc:
            logger.warning(
                "judge output unparseable for %s (attempt %d/%d): %s",
                caption.caption_id, attempt, parse_retries, exc,
            )
    if parsed is None:
        raise JudgeFormatError(
            f"judge output unparseable after {parse_retries} attempts for {caption.caption_id}"
        )

    scores, rationale = parsed
    ordered = [scores[dim] for dim in DIMENSIONS]
    passed = gate(ordered, rubric)
    verdict = JudgeScore(
        caption_id=caption.caption_id,
        scores=scores,
        score_sum=sum(ordered),
        score_divisor=len(ordered),
        rationale=rationale,
        passed=passed,
        raw_response=raw,
        judge_model_id=judge_model_id,
        theta_avg=rubric.theta_avg,
        theta_min=rubric.theta_min,
        created_at=clock(),
    )
    # persist the verdict first so an accepted caption always has its score on disk
    score_store.add(verdict)
    caption_store.update_status(
        caption.caption_id,
        "accepted" if passed else "rejected_by_judge",
        expected_status="candidate",
    )
    return verdict
