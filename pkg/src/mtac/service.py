"""HTTP service exposing corpus generation, training, evaluation, and reports.

Training runs synchronously inside the request; at the corpus sizes this
framework targets a whole run takes seconds, so job queues would be overkill.
Domain errors (bad configs, malformed manifests, shape mismatches) map to 400.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from . import __version__, reporting, trainer
from .manifest import ManifestError, load_manifest, write_manifest
from .schemas import (
    AuditRequest,
    AuditResponse,
    EvaluateRequest,
    EvaluateResponse,
    HealthResponse,
    ReportRequest,
    ReportResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
)
from .synth import generate, inject_label_noise, load_flip_mask, write_flip_mask

MANIFEST_FILENAME = "corpus.tsv"
MASK_FILENAME = "flip-mask.tsv"


def create_app() -> FastAPI:
    app = FastAPI(title="mtac", version=__version__)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        # covers ManifestError and config cross-validation too
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        manifest = generate(req.generator, req.n_per_class, req.n_test_per_class)
        mask = None
        if req.noise > 0.0:
            seed = req.noise_seed if req.noise_seed is not None else req.generator.seed
            manifest, mask = inject_label_noise(manifest, req.noise, seed)
        out_dir = Path(req.out_dir)
        manifest_path = out_dir / MANIFEST_FILENAME
        comments = [f"synthetic corpus, noise={req.noise}"]
        write_manifest(manifest, manifest_path, extra_comments=comments)
        mask_path = None
        if mask is not None:
            mask_path = out_dir / MASK_FILENAME
            write_flip_mask(mask, mask_path)
        return SynthResponse(
            manifest_path=str(manifest_path),
            mask_path=str(mask_path) if mask_path else None,
            n_train=len(manifest.train_records),
            n_test=len(manifest.test_records),
            n_flipped=len(mask) if mask else 0,
        )

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest):
        manifest = _load_manifest_400(req.manifest_path)
        if req.noise > 0.0 and req.mask_path:
            raise HTTPException(
                status_code=400,
                detail="pass either noise (inject here) or mask_path (pre-corrupted manifest), not both",
            )
        mask = _load_mask_400(req.mask_path) if req.mask_path else None
        out_dir = Path(req.out_dir)
        tags = {"noise": req.noise, **req.tags}
        if req.noise > 0.0:
            seed = req.noise_seed if req.noise_seed is not None else req.config.seed
            manifest, mask = inject_label_noise(manifest, req.noise, seed)
            write_flip_mask(mask, out_dir / MASK_FILENAME)
        chash = trainer.config_hash(req.config)
        stamp = [f"seed={req.config.seed} config_hash={chash} noise={req.noise}"]
        write_manifest(manifest, out_dir / MANIFEST_FILENAME, extra_comments=stamp)
        try:
            result = trainer.train(req.config, manifest, out_dir, flip_mask=mask, tags=tags)
        except trainer.TrainingDivergence as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return TrainResponse(
            out_dir=str(result.out_dir),
            config_hash=result.config_hash,
            checkpoint_path=str(result.checkpoint_path),
            epochs=req.config.epochs,
            final=result.final,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest):
        if not Path(req.checkpoint_path).exists():
            raise HTTPException(status_code=400, detail=f"no such checkpoint: {req.checkpoint_path}")
        manifest = _load_manifest_400(req.manifest_path)
        return EvaluateResponse(**trainer.evaluate(req.checkpoint_path, manifest, req.split))

    @app.post("/audit", response_model=AuditResponse)
    def audit(req: AuditRequest):
        if not Path(req.audit_path).exists():
            raise HTTPException(status_code=400, detail=f"no such audit log: {req.audit_path}")
        mask = _load_mask_400(req.mask_path) if req.mask_path else None
        return AuditResponse(**trainer.relabel_audit(req.audit_path, mask))

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest):
        table = reporting.report(req.roots, req.csv_path)
        return ReportResponse(table=table, csv_path=req.csv_path)

    return app


def _load_manifest_400(path: str):
    try:
        return load_manifest(path)
    except ManifestError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def _load_mask_400(path: str):
    if not Path(path).exists():
        raise HTTPException(status_code=400, detail=f"no such flip mask: {path}")
    return load_flip_mask(path)


app = create_app()
