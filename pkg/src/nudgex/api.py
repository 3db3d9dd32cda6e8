"""HTTP API over the pipeline: JSON everywhere except the PNG image endpoints."""

from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .captioner import CaptionCandidate
from .catalog import MiningSite, SiteDossier
from .eo import SceneAsset
from .errors import (
    BusyError,
    ConfigError,
    ConflictError,
    FormatError,
    GroundingUnavailableError,
    NotFoundError,
    NudgexError,
    StageOrderError,
    TransportError,
    ValidationError,
)
from .pipeline import Pipeline
from .ragstore import RagAnswer

STATUS_BY_ERROR: tuple[tuple[type[Exception], int], ...] = (
    (NotFoundError, 404),
    (ConflictError, 409),
    (StageOrderError, 409),
    (BusyError, 423),
    (GroundingUnavailableError, 422),
    (TransportError, 502),
    (FormatError, 400),
    (ValidationError, 400),
    (ConfigError, 400),
    (NudgexError, 400),
)


class SiteOut(BaseModel):
    site_id: str
    name: str
    latitude: float
    longitude: float
    country: str
    commodities: list[str]
    created_at: datetime
    has_accepted_caption: bool

    @classmethod
    def build(cls, site: MiningSite, accepted_sites: set[str]) -> "SiteOut":
        return cls(
            site_id=site.site_id,
            name=site.name,
            latitude=site.latitude,
            longitude=site.longitude,
            country=site.country,
            commodities=list(site.commodities),
            created_at=site.created_at,
            has_accepted_caption=site.site_id in accepted_sites,
        )


class DossierOut(BaseModel):
    geology: str
    history: str
    controversies: str
    sources: list[str]

    @classmethod
    def build(cls, dossier: SiteDossier) -> "DossierOut":
        return cls(
            geology=dossier.geology,
            history=dossier.history,
            controversies=dossier.controversies,
            sources=list(dossier.sources),
        )


class SiteDetailOut(SiteOut):
    dossier: Optional[DossierOut] = None


class QualityOut(BaseModel):
    cloud_fraction: float
    valid_fraction: float
    contrast: float
    auto_pass: bool


class SceneOut(BaseModel):
    scene_id: str
    site_id: str
    sensed_at: datetime
    bands: list[str]
    resolution_m: float
    review_state: str
    reviewer: Optional[str] = None
    reviewed_at: Optional[datetime] = None
    quality: Optional[QualityOut] = None

    @classmethod
    def build(cls, scene: SceneAsset) -> "SceneOut":
        return cls(
            scene_id=scene.scene_id,
            site_id=scene.site_id,
            sensed_at=scene.sensed_at,
            bands=list(scene.bands),
            resolution_m=scene.resolution_m,
            review_state=scene.review_state,
            reviewer=scene.reviewer,
            reviewed_at=scene.reviewed_at,
            quality=QualityOut(**scene.quality.to_json()) if scene.quality else None,
        )


class CaptionOut(BaseModel):
    caption_id: str
    site_id: str
    scene_id: str
    text: str
    model_id: str
    prompt_hash: str
    created_at: datetime
    status: str
    reviewer: Optional[str] = None

    @classmethod
    def build(cls, caption: CaptionCandidate) -> "CaptionOut":
        return cls(
            caption_id=caption.caption_id,
            site_id=caption.site_id,
            scene_id=caption.scene_id,
            text=caption.text,
            model_id=caption.model_id,
            prompt_hash=caption.prompt_hash,
            created_at=caption.created_at,
            status=caption.status,
            reviewer=caption.reviewer,
        )


class ReviewIn(BaseModel):
    verdict: str = Field(pattern="^(approved|rejected)$")
    reviewer: str = Field(min_length=1)


class QueryIn(BaseModel):
    question: str = Field(min_length=1)
    k: Optional[int] = Field(default=None, ge=1)
    country: Optional[str] = Field(default=None, min_length=2, max_length=2)


class HitOut(BaseModel):
    chunk_id: str
    site_id: str
    site_name: str
    country: str
    score: float
    text: str


class RagAnswerOut(BaseModel):
    question: str
    answer_text: str
    cited_site_ids: list[str]
    hits_used: list[HitOut]

    @classmethod
    def build(cls, result: RagAnswer) -> "RagAnswerOut":
        return cls(
            question=result.question,
            answer_text=result.answer_text,
            cited_site_ids=list(result.cited_site_ids),
            hits_used=[
                HitOut(
                    chunk_id=hit.chunk.chunk_id,
                    site_id=hit.chunk.site_id,
                    site_name=hit.chunk.site_name,
                    country=hit.chunk.country,
                    score=hit.score,
                    text=hit.chunk.text,
                )
                for hit in result.hits_used
            ],
        )


def create_app(pipeline: Pipeline) -> FastAPI:
    app = FastAPI(title="nudgex", version="0.1.0")

    @app.exception_handler(NudgexError)
    async def domain_error_handler(_request, exc: NudgexError):
        status = 500
        for error_type, code in STATUS_BY_ERROR:
            if isinstance(exc, error_type):
                status = code
                break
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "data_root": str(pipeline.data_root)}

    @app.get("/api/sites", response_model=list[SiteOut])
    def list_sites(country: Optional[str] = None, commodity: Optional[str] = None):
        accepted = pipeline.accepted_caption_sites()
        sites = pipeline.catalog.list_sites(country=country, commodity=commodity)
        return [SiteOut.build(site, accepted) for site in sites]

    @app.get("/api/sites/{site_id}", response_model=SiteDetailOut)
    def get_site(site_id: str):
        site = pipeline.catalog.get_site(site_id)
        accepted = pipeline.accepted_caption_sites()
        dossier = pipeline.catalog.get_dossier(site_id)
        detail = SiteDetailOut(
            **SiteOut.build(site, accepted).model_dump(),
            dossier=DossierOut.build(dossier) if dossier else None,
        )
        return detail

    @app.get("/api/sites/{site_id}/scenes", response_model=list[SceneOut])
    def site_scenes(site_id: str):
        pipeline.catalog.get_site(site_id)
        return [SceneOut.build(s) for s in pipeline.scenes.list_scenes(site_id=site_id)]

    @app.get("/api/scenes/{scene_id}/rgb.png")
    def scene_rgb(scene_id: str):
        return Response(content=pipeline.scene_rgb_png(scene_id), media_type="image/png")

    @app.get("/api/scenes/{scene_id}/indices/{index_name}.png")
    def scene_index(scene_id: str, index_name: str):
        return Response(
            content=pipeline.scene_index_png(scene_id, index_name), media_type="image/png"
        )

    @app.post("/api/scenes/{scene_id}/review", response_model=SceneOut)
    def review_scene(scene_id: str, review: ReviewIn):
        return SceneOut.build(pipeline.review_scene(scene_id, review.verdict, review.reviewer))

    @app.get("/api/sites/{site_id}/captions", response_model=list[CaptionOut])
    def site_captions(site_id: str):
        pipeline.catalog.get_site(site_id)
        return [CaptionOut.build(c) for c in pipeline.captions.list(site_id=site_id)]

    @app.post("/api/captions/{caption_id}/review", response_model=CaptionOut)
    def review_caption(caption_id: str, review: ReviewIn):
        return CaptionOut.build(
            pipeline.review_caption(caption_id, review.verdict, review.reviewer)
        )

    @app.post("/api/rag/query", response_model=RagAnswerOut)
    def rag_query(query: QueryIn):
        result = pipeline.query(query.question, k=query.k, country=query.country)
        return RagAnswerOut.build(result)

    ui_dir = pipeline.config.service.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
