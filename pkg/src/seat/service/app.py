"""HTTP service exposing scenes, goal snapping and simulated execution."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from ..errors import (
    EmptyInputError,
    InvalidArgumentError,
    NotFoundError,
    OutOfBoundsError,
    SeatError,
    SessionBusyError,
)
from ..snap import SnapConfig
from .schemas import (
    CreateSessionRequest,
    ErrorPayload,
    GoalsRequest,
    GoalsResponse,
    KitDescriptor,
    ObjectDescriptor,
    PlanStatus,
    PoseModel,
    ScenePayload,
    SessionDescriptor,
    SnappedGoal,
)
from .sessions import Session, SessionStore

_STATUS = (
    (NotFoundError, 404, "not_found"),
    (SessionBusyError, 409, "busy"),
    (OutOfBoundsError, 400, "invalid_argument"),
    (InvalidArgumentError, 400, "invalid_argument"),
    (EmptyInputError, 400, "invalid_argument"),
    (SeatError, 500, "internal"),
)


def _error_response(exc: SeatError) -> JSONResponse:
    for etype, status, code in _STATUS:
        if isinstance(exc, etype):
            return JSONResponse(status_code=status,
                                content=ErrorPayload(code=code, message=str(exc)).model_dump())
    raise exc


def _scene_payload(session: Session) -> ScenePayload:
    with session.lock:
        scene = session.scene
        revision = session.revision
    objects = [
        ObjectDescriptor(
            id=o.object_id,
            mesh_url=session.meshes[o.object_id][0],
            pose=PoseModel.from_pose(o.pose),
            gt_start=PoseModel.from_pose(o.gt_start),
        )
        for o in scene.objects
    ]
    kit = KitDescriptor(mesh_url=session.kit_mesh_url, pose=PoseModel.from_pose(scene.assembly.base_frame))
    bounds = [[float(v) for v in b] for b in scene.bounds]
    return ScenePayload(revision=revision, objects=objects, kit=kit, bounds=bounds)


def create_app(dataset_dir=None, completion: str = "oracle",
               snap_config: SnapConfig | None = None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="seat teleoperation service", version="1.0")
    store = SessionStore(dataset_dir, completion, snap_config)
    app.state.store = store

    @app.exception_handler(SeatError)
    async def seat_error_handler(request: Request, exc: SeatError):
        return _error_response(exc)

    @app.post("/api/v1/sessions", response_model=SessionDescriptor)
    def create_session(req: CreateSessionRequest):
        session = store.create_session(req.dataset, req.seed, req.scene_seed, req.completion)
        payload = _scene_payload(session)
        return SessionDescriptor(
            session_id=session.session_id,
            revision=payload.revision,
            objects=payload.objects,
            kit=payload.kit,
            bounds=payload.bounds,
            completion=session.completion_mode,
        )

    @app.get("/api/v1/sessions/{session_id}/scene", response_model=ScenePayload)
    def get_scene(session_id: str):
        return _scene_payload(store.get(session_id))

    @app.post("/api/v1/sessions/{session_id}/goals", response_model=GoalsResponse)
    def post_goals(session_id: str, req: GoalsRequest):
        session = store.get(session_id)
        goals = [(g.object_id, g.pose.to_pose()) for g in req.goals]
        records = store.submit_goals(session, goals)
        with session.lock:
            revision = session.revision
        snapped = [
            SnappedGoal(
                object_id=r["object_id"],
                pose=PoseModel.from_pose(r["pose"]),
                position_score=r["position_score"],
                plan_id=r["plan_id"],
            )
            for r in records
        ]
        return GoalsResponse(snapped=snapped, plan_ids=[r["plan_id"] for r in records], revision=revision)

    @app.get("/api/v1/sessions/{session_id}/plans/{plan_id}", response_model=PlanStatus)
    def get_plan_status(session_id: str, plan_id: str):
        session = store.get(session_id)
        with session.lock:
            rec = session.plans.get(plan_id)
            if rec is None:
                raise NotFoundError(f"unknown plan {plan_id}")
            return PlanStatus(status=rec.status, reason=rec.reason, resulting_revision=rec.resulting_revision)

    @app.get("/api/v1/meshes/{mesh_name}")
    def get_mesh(mesh_name: str):
        if not mesh_name.endswith(".obj"):
            raise NotFoundError(f"unknown mesh {mesh_name}")
        data = store.get_mesh(mesh_name[:-4])
        return Response(content=data, media_type="text/plain")

    static_dir = Path(ui_dir) if ui_dir else Path(__file__).parent / "static"
    if static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
