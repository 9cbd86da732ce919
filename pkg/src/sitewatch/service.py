"""HTTP API over the core package and, when serving, the live engine."""
from __future__ import annotations

from typing import List, Optional

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import Response

from . import schemas
from .decision import Incident, StakeholderProfile, match_experts, resolve_assignments
from .engine import check
from .invariant import (
    AtomContext,
    ArityError,
    InvariantSyntaxError,
    OccupyBox,
    TimeInterval,
    holds_at,
    node_count,
    parse_invariant,
    serialize_invariant,
    simplify,
)
from .notification import (
    CommandLineError,
    CompositeImage,
    UnknownCommandType,
    XmlError,
    command_attributes,
    overlay_attributes,
    parse_command_lines,
    parse_xml,
    render_xml,
)
from .reasoning import (
    PreconditionError,
    SpatialSnapshot,
    UnsupportedForm,
    boxes_overlap,
    coverage,
    extract_snapshot,
    filter_by_owner,
    filter_by_time,
)
from .server import Runtime, event_reply, weather_reply

XML = "application/xml"


def _term(text: str):
    try:
        return parse_invariant(text)
    except (InvariantSyntaxError, ArityError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _term_response(inv) -> schemas.TermResponse:
    return schemas.TermResponse(canonical=serialize_invariant(inv), nodes=node_count(inv))


def _profile(p: schemas.ProfileModel) -> StakeholderProfile:
    try:
        return StakeholderProfile(
            p.id, frozenset(p.capabilities), tuple(TimeInterval(a, b) for a, b in p.availability),
            p.location, p.device,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _incident(i: schemas.IncidentModel) -> Incident:
    return Incident(i.event_id, i.location, i.required_capability, i.time)


def _snapshot(s: schemas.SnapshotResponse) -> SpatialSnapshot:
    return SpatialSnapshot(s.time, tuple((b.owner, OccupyBox(*b.box)) for b in s.boxes))


def _snapshot_response(s: SpatialSnapshot) -> schemas.SnapshotResponse:
    return schemas.SnapshotResponse(
        time=s.time, boxes=[schemas.OwnedBox(owner=o, box=b.corners) for o, b in s.owned_boxes]
    )


def create_app(runtime: Optional[Runtime] = None) -> FastAPI:
    app = FastAPI(title="sitewatch")
    app.state.runtime = runtime

    def live() -> Runtime:
        if app.state.runtime is None:
            raise HTTPException(status_code=503, detail="engine not running")
        return app.state.runtime

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/invariants/parse", response_model=schemas.TermResponse)
    def parse_term(req: schemas.TermRequest):
        return _term_response(_term(req.text))

    @app.post("/invariants/simplify", response_model=schemas.TermResponse)
    def simplify_term(req: schemas.TermRequest):
        return _term_response(simplify(_term(req.text)))

    @app.post("/invariants/holds", response_model=schemas.HoldsResponse)
    def holds(req: schemas.HoldsRequest):
        c = req.context
        ctx = AtomContext(c.time, c.point, frozenset(c.owners), frozenset(c.events))
        return schemas.HoldsResponse(truth=holds_at(_term(req.text), ctx).name.lower())

    @app.post("/reasoning/filter", response_model=schemas.TermResponse)
    def filter_term(req: schemas.FilterRequest):
        inv = filter_by_time(_term(req.text), req.time)
        if req.owner is not None:
            try:
                inv = filter_by_owner(inv, req.owner)
            except PreconditionError as exc:  # pragma: no cover - time filter ran first
                raise HTTPException(status_code=422, detail=str(exc))
        return _term_response(inv)

    @app.post("/reasoning/snapshot", response_model=schemas.SnapshotResponse)
    def snapshot(req: schemas.SnapshotRequest):
        try:
            snap = extract_snapshot([_term(t) for t in req.model], req.time)
        except UnsupportedForm as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _snapshot_response(snap)

    @app.post("/reasoning/coverage", response_model=schemas.CoverageResponse)
    def coverage_of(req: schemas.CoverageRequest):
        area = OccupyBox(*req.area)
        frac = coverage(_snapshot(req.snapshot), req.owner, area)
        covered = frac * area.lattice_size
        return schemas.CoverageResponse(covered=int(covered), total=area.lattice_size, value=float(frac))

    @app.post("/reasoning/overlap")
    def overlap(req: schemas.OverlapRequest):
        return {"overlap": boxes_overlap(OccupyBox(*req.a), OccupyBox(*req.b))}

    @app.post("/decision/match")
    def match(req: schemas.MatchRequest) -> List[str]:
        ranked = match_experts(_incident(req.incident), [_profile(p) for p in req.profiles])
        return [p.id for p in ranked]

    @app.post("/decision/assign")
    def assign(req: schemas.AssignRequest):
        out = resolve_assignments([_incident(i) for i in req.incidents], [_profile(p) for p in req.profiles])
        return {k: (v.id if v is not None else None) for k, v in out.items()}

    @app.post("/notifications/render")
    def render(req: schemas.RenderRequest):
        try:
            bindings = parse_command_lines(req.commands)
        except CommandLineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return Response(render_xml(bindings), media_type=XML)

    @app.post("/notifications/parse", response_model=List[schemas.BindingModel])
    def parse(xml: str = Body(..., media_type=XML)):
        try:
            bindings = parse_xml(xml)
        except (XmlError, UnknownCommandType) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        out = []
        for b in bindings:
            attrs = [(k, str(v)) for k, v in command_attributes(b.command)]
            overlays = []
            if isinstance(b.command, CompositeImage):
                overlays = [[(k, str(v)) for k, v in overlay_attributes(o)] for o in b.command.overlays]
            out.append(schemas.BindingModel(
                device=b.device, type=attrs[0][1], attributes=attrs[1:], overlays=overlays, extras=list(b.extras),
            ))
        return out

    @app.post("/events", response_model=schemas.LinesResponse)
    def events(req: schemas.LinesRequest):
        rt = live()
        return schemas.LinesResponse(replies=[event_reply(rt.engine, line) for line in req.lines])

    @app.post("/weather", response_model=schemas.LinesResponse)
    def weather(req: schemas.LinesRequest):
        rt = live()
        return schemas.LinesResponse(replies=[weather_reply(rt.engine, line) for line in req.lines])

    @app.post("/check", response_model=schemas.CheckResponse)
    def check_now(req: schemas.CheckRequest):
        rt = live()
        fired, bindings = check(rt.engine.knowledge, req.at)
        return schemas.CheckResponse(triggered=[r.rule_id for r in fired], xml=render_xml(bindings))

    @app.get("/status", response_model=schemas.StatusResponse)
    def status():
        rt = app.state.runtime
        if rt is None:
            return schemas.StatusResponse(running=False)
        eng = rt.engine
        return schemas.StatusResponse(
            running=True, now=eng.now, queued=len(eng.queue), pending_groups=eng.coalescer.pending,
            **vars(eng.stats),
        )

    return app


app = create_app()
