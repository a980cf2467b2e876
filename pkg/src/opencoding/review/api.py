"""HTTP surface of the review service.

Bodies are plain JSON mirroring the on-disk document shapes. When the
project configures a token, every request must carry it in the
``X-Project-Token`` header. The decisions and labels endpoints accept a
single object or a batch under "decisions"/"labels".
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from ..errors import WorkbenchError
from ..metrics import render_reports
from ..project import Project, load_project
from .service import ReviewService

ERROR_STATUS = {
    "UnknownSession": 404,
    "UnknownReviewer": 404,
    "UnknownTarget": 404,
    "SampleTooLarge": 400,
    "IllegalValue": 400,
    "PrematureConsensus": 409,
    "RoundIncomplete": 409,
    "Empty": 400,
    "MissingConsensus": 409,
}

REPORT_KEYS = ("table2", "table4", "table5")


def create_app(project: Project | str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    if not isinstance(project, Project):
        project = load_project(project)
    service = ReviewService(project)
    app = FastAPI(title="opencoding review service")

    @app.exception_handler(WorkbenchError)
    async def workbench_error(_request: Request, exc: WorkbenchError):
        return JSONResponse(
            status_code=ERROR_STATUS.get(exc.code, 400), content=exc.payload()
        )

    def check_project(name: str, request: Request) -> None:
        if name != project.name:
            raise HTTPException(status_code=404, detail=f"unknown project {name!r}")
        if project.token and request.headers.get("X-Project-Token") != project.token:
            raise HTTPException(status_code=401, detail="missing or wrong project token")

    @app.post("/projects/{p}/sessions")
    async def create_session(p: str, request: Request):
        check_project(p, request)
        body = await request.json()
        session = service.create_session(
            sample_size=int(body["sample_size"]),
            seed=int(body["seed"]),
            blind=bool(body.get("blind", True)),
            reviewers=list(body.get("reviewers", [])),
            rounds=body.get("rounds"),
        )
        return _session_doc(session)

    @app.get("/projects/{p}/sessions/{s}")
    async def get_session(p: str, s: str, request: Request):
        check_project(p, request)
        session = service._session(s)
        return _session_doc(session)

    @app.get("/projects/{p}/sessions/{s}/items")
    async def get_items(p: str, s: str, request: Request, reviewer: str = Query(...)):
        check_project(p, request)
        return {"session_id": s, "reviewer": reviewer, "items": service.items_for(s, reviewer)}

    @app.post("/projects/{p}/sessions/{s}/decisions")
    async def post_decisions(p: str, s: str, request: Request):
        check_project(p, request)
        body = await request.json()
        rows = body["decisions"] if "decisions" in body else [body]
        stored = []
        for row in rows:
            record = service.record_decision(
                session_id=s,
                merged_code_id=row["merged_code_id"],
                reviewer=row["reviewer"],
                coder_id=row["coder_id"],
                covered=bool(row["covered"]),
                memo=row.get("memo", ""),
                is_consensus=bool(row.get("is_consensus", False)),
            )
            stored.append(_decision_doc(record))
        return {"stored": stored}

    @app.get("/projects/{p}/sessions/{s}/discrepancies")
    async def get_discrepancies(p: str, s: str, request: Request, round: int = Query(...)):
        check_project(p, request)
        return {
            "session_id": s,
            "round": round,
            "discrepancies": service.list_discrepancies(s, round),
        }

    @app.post("/projects/{p}/sessions/{s}/labels")
    async def post_labels(p: str, s: str, request: Request):
        check_project(p, request)
        body = await request.json()
        rows = body["labels"] if "labels" in body else [body]
        stored = []
        for row in rows:
            record = service.record_label(
                session_id=s,
                target_id=row["target_id"],
                dimension=row["dimension"],
                value=row["value"],
                reviewer=row["reviewer"],
                memo=row.get("memo", ""),
                is_consensus=bool(row.get("is_consensus", False)),
            )
            stored.append(_label_doc(record))
        return {"stored": stored}

    @app.get("/projects/{p}/sessions/{s}/kappa")
    async def get_kappa(p: str, s: str, request: Request, round: int | None = Query(None)):
        check_project(p, request)
        return service.kappa(s, round)

    @app.get("/projects/{p}/reports/{key}")
    async def get_report(p: str, key: str, request: Request, session: str | None = None):
        check_project(p, request)
        if key not in REPORT_KEYS:
            raise HTTPException(status_code=404, detail=f"unknown report {key!r}")
        tables = render_reports(project, session)
        table = tables[key]
        doc = table.to_doc()
        doc["text"] = table.to_text()
        return doc

    if ui_dir is not None and Path(ui_dir).is_dir():
        ui_path = Path(ui_dir)

        @app.get("/")
        async def index():
            return FileResponse(ui_path / "index.html")

        app.mount("/ui", StaticFiles(directory=str(ui_path), html=True), name="ui")

    return app


def _session_doc(session) -> dict:
    return {
        "id": session.id,
        "merged_code_ids": list(session.merged_code_ids),
        "seed": session.seed,
        "blind": session.blind,
        "reviewers": list(session.reviewers),
        "rounds": [[start + 1, end] for start, end in session.rounds],
        "size": len(session.merged_code_ids),
    }


def _decision_doc(record) -> dict:
    return {
        "session_id": record.session_id,
        "merged_code_id": record.merged_code_id,
        "reviewer": record.reviewer,
        "coder_id": record.coder_id,
        "covered": record.covered,
        "memo": record.memo,
        "round": record.round,
        "is_consensus": record.is_consensus,
        "recorded_at": record.recorded_at,
    }


def _label_doc(record) -> dict:
    return {
        "session_id": record.session_id,
        "target_id": record.target_id,
        "dimension": record.dimension,
        "value": record.value,
        "reviewer": record.reviewer,
        "memo": record.memo,
        "is_consensus": record.is_consensus,
        "recorded_at": record.recorded_at,
    }
