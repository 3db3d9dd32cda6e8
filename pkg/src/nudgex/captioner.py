"""Prompt assembly and caption generation for the multimodal captioning model.

The prompt bundles the fixed system template, configured multi-shot
exemplars, the site dossier verbatim, one summary line per computed index,
and the rendered RGB view. Bundles serialize canonically so identical
inputs always produce the same prompt hash.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .catalog import MiningSite, SiteDossier
from .eo import SceneAsset
from .errors import ConflictError, EmptyResponseError, NotFoundError, ValidationError
from .providers import ChatClient, ChatMessage, ChatRequest, ImagePart, TextPart, with_retries
from .raster import IndexProduct, RasterGrid, index_summary, render_rgb

logger = logging.getLogger(__name__)

MAX_SHOTS = 8
DEFAULT_TEMPERATURE = 0.2  # low temperature suits the flat, factual register wanted here

CAPTION_STATUSES = ("candidate", "accepted", "rejected_by_judge", "rejected_by_human")

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def load_default_system_text() -> str:
    return resources.files("nudgex").joinpath("prompts/system.txt").read_text(encoding="utf-8")


def load_shots(path: Optional[Path] = None) -> tuple["PromptShot", ...]:
    if path is None:
        text = resources.files("nudgex").joinpath("prompts/shots.jsonl").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    shots = []
    for line in text.splitlines():
        if line.strip():
            obj = json.loads(line)
            shots.append(PromptShot(context=obj["context"], caption=obj["caption"]))
    return tuple(shots)


@dataclass(frozen=True)
class PromptShot:
    context: str
    caption: str


@dataclass(frozen=True)
class PromptBundle:
    site_id: str
    scene_id: str
    system_text: str
    shots: tuple[PromptShot, ...]
    dossier_text: str
    index_summaries: tuple[str, ...]
    image_png: bytes
    model_id: str
    temperature: float

    def __post_init__(self):
        if not 0 <= len(self.shots) <= MAX_SHOTS:
            raise ValidationError(f"shots count must be in [0, {MAX_SHOTS}]")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")

    def canonical_json(self) -> bytes:
        obj = {
            "site_id": self.site_id,
            "scene_id": self.scene_id,
            "system_text": self.system_text,
            "shots": [{"context": s.context, "caption": s.caption} for s in self.shots],
            "dossier_text": self.dossier_text,
            "index_summaries": list(self.index_summaries),
            "image_b64": base64.b64encode(self.image_png).decode("ascii"),
            "model_id": self.model_id,
            "temperature": self.temperature,
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.canonical_json()).hexdigest()


def dossier_to_prompt_text(dossier: Optional[SiteDossier]) -> str:
    if dossier is None:
        geology = history = controversies = ""
    else:
        geology, history, controversies = dossier.geology, dossier.history, dossier.controversies
    return (
        f"## geology\n{geology}\n"
        f"## history\n{history}\n"
        f"## controversies\n{controversies}"
    )


def assemble_prompt(
    site: MiningSite,
    dossier: Optional[SiteDossier],
    scene: SceneAsset,
    grid: RasterGrid,
    index_products: Sequence[IndexProduct],
    *,
    system_text: str,
    shots: Sequence[PromptShot],
    model_id: str,
    temperature: float = DEFAULT_TEMPERATURE,
) -> PromptBundle:
    """Build the full captioning prompt for one approved scene."""
    if scene.review_state != "approved":
        raise ValidationError(
            f"scene {scene.scene_id} is {scene.review_state}; captions need an approved scene"
        )
    if dossier is None:
        logger.warning("site %s has no dossier; captioning with empty sections", site.site_id)
    image_png = render_rgb(grid)
    return PromptBundle(
        site_id=site.site_id,
        scene_id=scene.scene_id,
        system_text=system_text,
        shots=tuple(shots),
        dossier_text=dossier_to_prompt_text(dossier),
        index_summaries=tuple(index_summary(p) for p in index_products),
        image_png=image_png,
        model_id=model_id,
        temperature=temperature,
    )


def build_chat_request(bundle: PromptBundle) -> ChatRequest:
    messages: list[ChatMessage] = [ChatMessage.text("system", bundle.system_text)]
    for shot in bundle.shots:
        messages.append(ChatMessage.text("user", shot.context))
        messages.append(ChatMessage.text("assistant", shot.caption))
    context = (
        f"Site: {bundle.site_id}\n"
        f"Scene: {bundle.scene_id}\n\n"
        f"{bundle.dossier_text}\n\n" + "\n".join(bundle.index_summaries)
    )
    messages.append(ChatMessage(role="user", parts=(TextPart(context), ImagePart(bundle.image_png))))
    return ChatRequest(model=bundle.model_id, temperature=bundle.temperature, messages=tuple(messages))


@dataclass(frozen=True)
class CaptionCandidate:
    caption_id: str
    site_id: str
    scene_id: str
    text: str
    model_id: str
    prompt_hash: str
    created_at: datetime
    status: str = "candidate"
    reviewer: Optional[str] = None
    reviewed_at: Optional[datetime] = None

    def to_json(self) -> dict:
        return {
            "caption_id": self.caption_id,
            "site_id": self.site_id,
            "scene_id": self.scene_id,
            "text": self.text,
            "model_id": self.model_id,
            "prompt_hash": self.prompt_hash,
            "created_at": self.created_at.isoformat(),
            "status": self.status,
            "reviewer": self.reviewer,
            "reviewed_at": self.reviewed_at.isoformat() if self.reviewed_at else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CaptionCandidate":
        return cls(
            caption_id=obj["caption_id"],
            site_id=obj["site_id"],
            scene_id=obj["scene_id"],
            text=obj["text"],
            model_id=obj["model_id"],
            prompt_hash=obj["prompt_hash"],
            created_at=datetime.fromisoformat(obj["created_at"]),
            status=obj["status"],
            reviewer=obj.get("reviewer"),
            reviewed_at=datetime.fromisoformat(obj["reviewed_at"]) if obj.get("reviewed_at") else None,
        )


def caption_id_for(bundle: PromptBundle) -> str:
    digest = hashlib.sha256(
        f"{bundle.site_id}|{bundle.scene_id}|{bundle.prompt_hash}|{bundle.model_id}".encode()
    ).hexdigest()
    return f"cap-{digest[:16]}"


class CaptionStore:
    """Candidates in ``captions/candidates.jsonl``; append on add, rewrite on update."""

    def __init__(self, root: Path | str, clock: Clock = utc_now):
        self.root = Path(root)
        self.clock = clock
        self._path = self.root / "captions" / "candidates.jsonl"
        self._lock = threading.Lock()
        self._captions: dict[str, CaptionCandidate] = {}
        self._load()

    def _load(self) -> None:
        if not self._path.exists():
            return
        for line in self._path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                candidate = CaptionCandidate.from_json(json.loads(line))
                self._captions[candidate.caption_id] = candidate

    def _rewrite(self) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self._path.with_suffix(".jsonl.tmp")
        lines = [json.dumps(c.to_json(), sort_keys=True) for c in self._captions.values()]
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp.replace(self._path)

    def add(self, candidate: CaptionCandidate) -> None:
        if not candidate.text:
            raise ValidationError("caption text must be non-empty")
        with self._lock:
            if candidate.caption_id in self._captions:
                self._captions[candidate.caption_id] = candidate
                self._rewrite()
            else:
                self._captions[candidate.caption_id] = candidate
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(candidate.to_json(), sort_keys=True) + "\n")

    def get(self, caption_id: str) -> CaptionCandidate:
        with self._lock:
            try:
                return self._captions[caption_id]
            except KeyError:
                raise NotFoundError(f"unknown caption: {caption_id}") from None

    def list(
        self,
        site_id: Optional[str] = None,
        scene_id: Optional[str] = None,
        status: Optional[str] = None,
    ) -> list[CaptionCandidate]:
        with self._lock:
            captions = list(self._captions.values())
        if site_id is not None:
            captions = [c for c in captions if c.site_id == site_id]
        if scene_id is not None:
            captions = [c for c in captions if c.scene_id == scene_id]
        if status is not None:
            captions = [c for c in captions if c.status == status]
        return sorted(captions, key=lambda c: c.caption_id)

    def update_status(
        self,
        caption_id: str,
        new_status: str,
        expected_status: str = "candidate",
        reviewer: Optional[str] = None,
    ) -> CaptionCandidate:
        """Compare-and-set transition; ConflictError when the expectation fails."""
        if new_status not in CAPTION_STATUSES:
            raise ValidationError(f"unknown caption status: {new_status}")
        with self._lock:
            current = self._captions.get(caption_id)
            if current is None:
                raise NotFoundError(f"unknown caption: {caption_id}")
            if current.status != expected_status:
                raise ConflictError(
                    f"caption {caption_id} is {current.status}, expected {expected_status}"
                )
            updated = replace(
                current,
                status=new_status,
                reviewer=reviewer if reviewer is not None else current.reviewer,
                reviewed_at=self.clock() if reviewer is not None else current.reviewed_at,
            )
            self._captions[caption_id] = updated
            self._rewrite()
            return updated

    def record_human_review(self, caption_id: str, verdict: str, reviewer: str) -> CaptionCandidate:
        """Human pass over judge-accepted captions: keep or reject."""
        if verdict not in ("approved", "rejected"):
            raise ValidationError(f"verdict must be approved or rejected, got {verdict!r}")
        if not reviewer:
            raise ValidationError("reviewer must be non-empty")
        with self._lock:
            current = self._captions.get(caption_id)
            if current is None:
                raise NotFoundError(f"unknown caption: {caption_id}")
            if current.status != "accepted" or current.reviewer is not None:
                raise ConflictError(
                    f"caption {caption_id} is not awaiting human review "
                    f"(status={current.status}, reviewer={current.reviewer})"
                )
            updated = replace(
                current,
                status="accepted" if verdict == "approved" else "rejected_by_human",
                reviewer=reviewer,
                reviewed_at=self.clock(),
            )
            self._captions[caption_id] = updated
            self._rewrite()
            return updated


def generate_caption(
    bundle: PromptBundle,
    client: ChatClient,
    store: Optional[CaptionStore],
    *,
    retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    clock: Clock = utc_now,
) -> CaptionCandidate:
    """One provider round-trip (with transport retries) producing a stored candidate.

    Pass ``store=None`` to defer persistence; the pipeline stage does this to
    keep concurrent generation results committed in a deterministic order.
    """
    request = build_chat_request(bundle)
    text = with_retries(
        lambda: client.complete(request), attempts=retries, base_delay=backoff_base, sleep=sleep
    )
    text = (text or "").strip()
    if not text:
        raise EmptyResponseError(
            f"model returned an empty caption for scene {bundle.scene_id}"
        )
    candidate = CaptionCandidate(
        caption_id=caption_id_for(bundle),
        site_id=bundle.site_id,
        scene_id=bundle.scene_id,
        text=text,
        model_id=bundle.model_id,
        prompt_hash=bundle.prompt_hash,
        created_at=clock(),
    )
    if store is not None:
        store.add(candidate)
    return candidate
