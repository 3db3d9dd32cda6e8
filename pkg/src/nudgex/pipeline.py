"""Stage orchestration shared by the HTTP API and the CLI.

Stages mirror the pipeline diagram one-to-one: ingest -> acquire ->
(human scene review) -> caption -> judge -> index, plus the RAG query
path. Every stage is idempotent per item: items already in a terminal
state are skipped, so re-running a stage on a completed data root writes
nothing.
"""

from __future__ import annotations

import json
import logging
import os
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .captioner import (
    CaptionCandidate,
    CaptionStore,
    PromptShot,
    assemble_prompt,
    generate_caption,
    load_default_system_text,
    load_shots,
)
from .catalog import CatalogStore, MiningSite
from .config import ApiConfig
from .eo import (
    FixtureProvider,
    HttpSearchProvider,
    SceneAsset,
    SceneStore,
    fetch_scenes,
    plan_acquisition,
)
from .errors import (
    BusyError,
    ConfigError,
    JudgeFormatError,
    NotFoundError,
    NudgexError,
    StageOrderError,
)
from .judge import JudgeScoreStore, Rubric, score_caption
from .providers import (
    HttpChatClient,
    HttpEmbeddingClient,
    StubCaptionClient,
    StubJudgeClient,
    StubRagChatClient,
)
from .ragstore import (
    ChunkRecord,
    RagAnswer,
    StubEmbeddingClient,
    VectorIndex,
    answer,
    embed_text,
    identity_chunker,
)
from .raster import (
    INDEX_REGISTRY,
    IndexDefinition,
    compute_index,
    register_index,
    render_index_png,
    render_rgb,
)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "acquire", "caption", "judge", "index")

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class ItemOutcome:
    item_id: str
    status: str  # ok | skip | error
    reason: str = ""


@dataclass
class PipelineRun:
    run_id: str
    stage: str
    scope: str
    started_at: datetime
    finished_at: Optional[datetime] = None
    items: list[ItemOutcome] = field(default_factory=list)

    def add(self, item_id: str, status: str, reason: str = "") -> None:
        self.items.append(ItemOutcome(item_id, status, reason))

    @property
    def ok_count(self) -> int:
        return sum(1 for i in self.items if i.status == "ok")

    @property
    def skip_count(self) -> int:
        return sum(1 for i in self.items if i.status == "skip")

    @property
    def error_count(self) -> int:
        return sum(1 for i in self.items if i.status == "error")

    @property
    def errored(self) -> bool:
        return self.error_count > 0

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "stage": self.stage,
            "scope": self.scope,
            "started_at": self.started_at.isoformat(),
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
            "items": [
                {"item_id": i.item_id, "status": i.status, "reason": i.reason}
                for i in self.items
            ],
            "ok": self.ok_count,
            "skip": self.skip_count,
            "error": self.error_count,
        }


class Pipeline:
    """Owns the stores and providers for one data root."""

    def __init__(
        self,
        config: ApiConfig,
        clock: Clock = utc_now,
        *,
        eo_provider=None,
        caption_client=None,
        judge_client=None,
        embed_client=None,
        rag_client=None,
        chunker: Callable[[str], list[str]] = identity_chunker,
    ):
        self.config = config
        self.clock = clock
        self.chunker = chunker
        self.data_root = Path(config.data_root)
        self.data_root.mkdir(parents=True, exist_ok=True)

        self.catalog = CatalogStore(self.data_root, clock=clock)
        self.scenes = SceneStore(self.data_root, clock=clock)
        self.captions = CaptionStore(self.data_root, clock=clock)
        self.scores = JudgeScoreStore(self.data_root)
        self.index = VectorIndex(self.data_root, dim=config.embedding.dim)

        for entry in config.extra_indices:
            register_index(IndexDefinition(
                entry.name, entry.expression, entry.valid_range, entry.threshold, entry.label,
            ))

        self.eo_provider = eo_provider or self._build_eo_provider()
        self.caption_client = caption_client or self._build_caption_client()
        self.judge_client = judge_client or self._build_judge_client()
        self.embed_client = embed_client or self._build_embed_client()
        self.rag_client = rag_client or self._build_rag_client()

        cap = config.captioner
        self.system_text = (
            Path(cap.system_prompt_path).read_text(encoding="utf-8")
            if cap.system_prompt_path else load_default_system_text()
        )
        self.shots: tuple[PromptShot, ...] = load_shots(cap.shots_path)
        self.rubric = Rubric(theta_avg=config.judge.theta_avg, theta_min=config.judge.theta_min)

    # -- provider construction -------------------------------------------

    def _build_eo_provider(self):
        eo = self.config.eo
        if eo.provider == "fixture":
            if eo.manifest is None:
                raise ConfigError("eo.provider = fixture requires eo.manifest")
            return FixtureProvider(eo.manifest)
        return HttpSearchProvider(eo.base_url)

    def _build_caption_client(self):
        cap = self.config.captioner
        if cap.provider == "stub":
            return StubCaptionClient()
        return HttpChatClient(cap.base_url, "NUDGEX_MLLM_API_KEY")

    def _build_judge_client(self):
        judge = self.config.judge
        if judge.provider == "stub":
            return StubJudgeClient()
        return HttpChatClient(judge.base_url, "NUDGEX_JUDGE_API_KEY")

    def _build_embed_client(self):
        emb = self.config.embedding
        if emb.provider == "stub":
            return StubEmbeddingClient(emb.dim)
        return HttpEmbeddingClient(emb.base_url, emb.model_id, "NUDGEX_EMBED_API_KEY")

    def _build_rag_client(self):
        rag = self.config.rag
        if rag.provider == "stub":
            return StubRagChatClient()
        return HttpChatClient(rag.base_url, "NUDGEX_RAG_API_KEY")

    # -- stage machinery ---------------------------------------------------

    @contextmanager
    def _stage_lock(self):
        """One stage run at a time per data root."""
        lock_path = self.data_root / ".stage.lock"
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise BusyError(f"another stage run holds {lock_path}") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            lock_path.unlink(missing_ok=True)

    def _new_run(self, stage: str, scope: str) -> PipelineRun:
        return PipelineRun(
            run_id=f"{stage}-{uuid.uuid4().hex[:8]}",
            stage=stage,
            scope=scope,
            started_at=self.clock(),
        )

    def run_stage(self, stage: str, **kwargs) -> PipelineRun:
        if stage not in STAGES:
            raise NudgexError(f"unknown stage {stage!r}; stages are {STAGES}")
        handler = {
            "ingest": self.ingest,
            "acquire": self.acquire,
            "caption": self.caption,
            "judge": self.judge,
            "index": self.rag_index,
        }[stage]
        return handler(**kwargs)

    # -- stages -------------------------------------------------------------

    def ingest(self, sites_path: Path | str, dossier_dir: Optional[Path | str] = None) -> PipelineRun:
        run = self._new_run("ingest", str(sites_path))
        with self._stage_lock():
            report = self.catalog.ingest_sites(sites_path)
            for n, reason in report.rejections:
                run.add(f"row-{n}", "error", reason)
            for n, site_id in report.duplicates:
                run.add(f"row-{n}", "skip", f"already ingested: {site_id}")
            for site_id in report.accepted_ids:
                run.add(f"site-{site_id}", "ok", "ingested")

            if dossier_dir is not None:
                dossier_dir = Path(dossier_dir)
                for doc in sorted(dossier_dir.glob("*.md")) + sorted(dossier_dir.glob("*.txt")):
                    site_id = doc.stem
                    try:
                        _dossier, warnings = self.catalog.ingest_dossier(site_id, doc)
                        reason = "; ".join(warnings) if warnings else "dossier ingested"
                        run.add(f"dossier-{site_id}", "ok", reason)
                    except NudgexError as exc:
                        run.add(f"dossier-{site_id}", "error", str(exc))
        run.finished_at = self.clock()
        return run

    def _acquisition_record_path(self, site_id: str) -> Path:
        return self.data_root / "acquisitions" / f"{site_id}.json"

    def acquire(self, site_id: Optional[str] = None) -> PipelineRun:
        run = self._new_run("acquire", site_id or "all")
        with self._stage_lock():
            sites = self._scoped_sites(site_id)
            if not sites:
                raise StageOrderError("catalog has no matching sites; run ingest first")
            for site in sites:
                record_path = self._acquisition_record_path(site.site_id)
                if record_path.exists():
                    run.add(site.site_id, "skip", "already acquired")
                    continue
                try:
                    plan = plan_acquisition(site, self.config.acquisition)
                    assets = fetch_scenes(plan, self.eo_provider, self.scenes)
                    record = {
                        "site_id": site.site_id,
                        "scene_ids": [a.scene_id for a in assets],
                        "window": [plan.date_start.isoformat(), plan.date_end.isoformat()],
                        "max_cloud_fraction": plan.max_cloud_fraction,
                        "allowed_months": sorted(plan.allowed_months),
                    }
                    record_path.parent.mkdir(parents=True, exist_ok=True)
                    tmp = record_path.with_suffix(".json.tmp")
                    tmp.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
                    tmp.replace(record_path)
                    run.add(site.site_id, "ok", f"{len(assets)} scene(s)")
                except NudgexError as exc:
                    run.add(site.site_id, "error", str(exc))
        run.finished_at = self.clock()
        return run

    def _scoped_sites(self, site_id: Optional[str]) -> list[MiningSite]:
        if site_id is None:
            return self.catalog.list_sites()
        try:
            return [self.catalog.get_site(site_id)]
        except NotFoundError:
            return []

    def _index_products(self, grid):
        products = []
        for name in self.config.captioner.indices:
            defn = INDEX_REGISTRY.get(name)
            if defn is None:
                continue
            try:
                products.append(compute_index(grid, name))
            except NudgexError:
                continue  # index needs a band this scene lacks
        return products

    def caption(self, site_id: Optional[str] = None) -> PipelineRun:
        run = self._new_run("caption", site_id or "all")
        with self._stage_lock():
            approved = self.scenes.list_scenes(site_id=site_id, review_state="approved")
            if not approved:
                raise StageOrderError(
                    "no approved scenes; run acquire and review scenes before captioning"
                )

            pending: list[SceneAsset] = []
            for scene in approved:
                if self.captions.list(scene_id=scene.scene_id):
                    run.add(scene.scene_id, "skip", "caption already generated")
                else:
                    pending.append(scene)

            def produce(scene: SceneAsset) -> CaptionCandidate:
                site = self.catalog.get_site(scene.site_id)
                dossier = self.catalog.get_dossier(scene.site_id)
                grid = self.scenes.load_grid(scene.scene_id)
                bundle = assemble_prompt(
                    site, dossier, scene, grid, self._index_products(grid),
                    system_text=self.system_text,
                    shots=self.shots,
                    model_id=self.config.captioner.model_id,
                    temperature=self.config.captioner.temperature,
                )
                return generate_caption(
                    bundle, self.caption_client, store=None,
                    retries=self.config.captioner.retries, clock=self.clock,
                )

            # bounded concurrency for provider calls; storage stays a serialized
            # append in scene order so output bytes are reproducible
            results: list[tuple[SceneAsset, CaptionCandidate | Exception]] = []
            with ThreadPoolExecutor(max_workers=self.config.captioner.concurrency) as pool:
                futures = [(scene, pool.submit(produce, scene)) for scene in pending]
                for scene, future in futures:
                    try:
                        results.append((scene, future.result()))
                    except Exception as exc:  # noqa: BLE001 - recorded per item
                        results.append((scene, exc))
            for scene, outcome in results:
                if isinstance(outcome, Exception):
                    run.add(scene.scene_id, "error", str(outcome))
                else:
                    self.captions.add(outcome)
                    run.add(scene.scene_id, "ok", outcome.caption_id)
        run.finished_at = self.clock()
        return run

    def _write_pair(self, caption: CaptionCandidate) -> None:
        """Terminal artifact: rendered RGB view next to its accepted caption."""
        pair_dir = self.data_root / "pairs" / caption.site_id / caption.scene_id
        pair_dir.mkdir(parents=True, exist_ok=True)
        grid = self.scenes.load_grid(caption.scene_id)
        (pair_dir / "image.png").write_bytes(render_rgb(grid))
        (pair_dir / "caption.txt").write_text(caption.text + "\n", encoding="utf-8")

    def judge(self, site_id: Optional[str] = None) -> PipelineRun:
        run = self._new_run("judge", site_id or "all")
        with self._stage_lock():
            candidates = self.captions.list(site_id=site_id, status="candidate")
            # zero candidates is a valid empty run, not a stage-order error
            for caption in candidates:
                try:
                    verdict = score_caption(
                        caption, self.rubric, self.judge_client,
                        self.captions, self.scores,
                        judge_model_id=self.config.judge.model_id,
                        parse_retries=self.config.judge.parse_retries,
                        transport_retries=self.config.judge.retries,
                        clock=self.clock,
                    )
                    if verdict.passed:
                        self._write_pair(self.captions.get(caption.caption_id))
                    run.add(caption.caption_id, "ok",
                            "accepted" if verdict.passed else "rejected_by_judge")
                except (JudgeFormatError, NudgexError) as exc:
                    run.add(caption.caption_id, "error", str(exc))
        run.finished_at = self.clock()
        return run

    def _chunks_for(self, caption: CaptionCandidate) -> list[tuple[str, str]]:
        pieces = self.chunker(caption.text) or [caption.text]
        return [
            (f"chunk-{caption.caption_id}" if i == 0 else f"chunk-{caption.caption_id}:{i}", piece)
            for i, piece in enumerate(pieces)
        ]

    def rag_index(self) -> PipelineRun:
        run = self._new_run("index", "all")
        with self._stage_lock():
            accepted = self.captions.list(status="accepted")
            existing = self.index.chunk_ids()
            wanted: list[tuple[CaptionCandidate, str, str]] = [
                (caption, chunk_id, piece)
                for caption in accepted
                for chunk_id, piece in self._chunks_for(caption)
            ]
            wanted_ids = {chunk_id for _c, chunk_id, _p in wanted}
            if not accepted and not existing:
                raise StageOrderError("no accepted captions; run caption and judge first")

            to_add: list[ChunkRecord] = []
            for caption, chunk_id, piece in wanted:
                if chunk_id in existing:
                    run.add(chunk_id, "skip", "already indexed")
                    continue
                try:
                    site = self.catalog.get_site(caption.site_id)
                    vector = embed_text(piece, self.embed_client, self.config.embedding.dim)
                    to_add.append(ChunkRecord(
                        chunk_id=chunk_id,
                        caption_id=caption.caption_id,
                        site_id=caption.site_id,
                        country=site.country,
                        site_name=site.name,
                        text=piece,
                        vector=vector,
                        payload={"scene_id": caption.scene_id, "model_id": caption.model_id},
                    ))
                    run.add(chunk_id, "ok", "indexed")
                except NudgexError as exc:
                    run.add(chunk_id, "error", str(exc))

            stale = sorted(existing - wanted_ids)
            for chunk_id in stale:
                run.add(chunk_id, "ok", "removed stale chunk")

            if to_add or stale:
                if stale:
                    self.index.remove(stale, persist=False)
                for record in to_add:
                    self.index.upsert(record, persist=False)
                self.index.save()
        run.finished_at = self.clock()
        return run

    # -- entity operations shared by API and CLI ----------------------------

    def review_scene(self, scene_id: str, verdict: str, reviewer: str) -> SceneAsset:
        return self.scenes.review(scene_id, verdict, reviewer)

    def review_caption(self, caption_id: str, verdict: str, reviewer: str) -> CaptionCandidate:
        return self.captions.record_human_review(caption_id, verdict, reviewer)

    def query(self, question: str, k: Optional[int] = None,
              country: Optional[str] = None) -> RagAnswer:
        filter_fn = None
        if country:
            code = country.upper()
            filter_fn = lambda record: record.country == code  # noqa: E731
        return answer(
            question,
            self.index,
            self.embed_client,
            self.rag_client,
            model_id=self.config.rag.model_id,
            k=k or self.config.rag.k,
            filter_fn=filter_fn,
        )

    def scene_rgb_png(self, scene_id: str) -> bytes:
        self.scenes.get_scene(scene_id)  # not-found check
        return render_rgb(self.scenes.load_grid(scene_id))

    def scene_index_png(self, scene_id: str, index_name: str) -> bytes:
        self.scenes.get_scene(scene_id)
        grid = self.scenes.load_grid(scene_id)
        return render_index_png(compute_index(grid, index_name))

    def accepted_caption_sites(self) -> set[str]:
        return {c.site_id for c in self.captions.list(status="accepted")}
