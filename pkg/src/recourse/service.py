"""HTTP facade over a trained model bundle.

Stateless endpoints for the what-if explorer: the schema (features, roles,
costs, bounds), single recommendations, and budget sweeps.  All numbers in
requests and responses are in raw feature units; identical requests produce
identical bodies.
"""

from __future__ import annotations

from typing import Literal

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from recourse.core import BoundPolicy, ConfigError, OptimizationError
from recourse.harness import ModelBundle, recommend_one
from recourse.metrics import SupportIndex


class RecommendRequest(BaseModel):
    values: dict[str, float]
    budget: float = Field(ge=0)
    optimizer: Literal["pgd", "sensitivity"] = "pgd"
    policy: Literal["hardline", "elastic"] | None = None
    cost_overrides: dict[str, dict[str, float]] | None = None


class SweepRequest(BaseModel):
    values: dict[str, float]
    budgets: list[float] = Field(min_length=1)
    optimizer: Literal["pgd", "sensitivity"] = "pgd"
    policy: Literal["hardline", "elastic"] | None = None
    cost_overrides: dict[str, dict[str, float]] | None = None


def schema_payload(bundle: ModelBundle) -> dict:
    schema = bundle.schema
    role_of = {}
    for i in bundle.partition.direct:
        role_of[i] = "direct"
    for i in bundle.partition.indirect:
        role_of[i] = "indirect"
    for i in bundle.partition.unchangeable:
        role_of[i] = "unchangeable"
    direct_pos = {idx: k for k, idx in enumerate(bundle.partition.direct)}
    features = []
    for i, name in enumerate(schema.feature_columns):
        entry = {
            "name": name,
            "role": role_of[i],
            "min": schema.mins[i],
            "max": schema.maxs[i],
            "mean": schema.means[i],
        }
        if i in direct_pos:
            k = direct_pos[i]
            entry.update(
                cost_up=float(bundle.cost_up[k]),
                cost_down=float(bundle.cost_down[k]),
                lower=float(bundle.raw_lower[k]),
                upper=float(bundle.raw_upper[k]),
            )
        features.append(entry)
    budget_hint = float(
        sum(
            max(u, d)
            for u, d in zip(bundle.cost_up.tolist(), bundle.cost_down.tolist())
        )
    )
    return {
        "features": features,
        "policy": bundle.policy.value,
        "support_k": bundle.support_k,
        "model_type": bundle.model.to_json()["type"],
        "budget_hint": budget_hint,
        "train_meta": bundle.train_meta,
    }


def create_app(bundle: ModelBundle) -> FastAPI:
    app = FastAPI(title="recourse", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    support_index = SupportIndex(bundle.X_train, bundle.model, bundle.support_k)

    @app.exception_handler(RequestValidationError)
    async def bad_request(request, exc):
        details = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": details})

    @app.exception_handler(ConfigError)
    async def config_error(request, exc):
        return JSONResponse(status_code=400, content={"errors": [{"message": str(exc)}]})

    @app.exception_handler(OptimizationError)
    async def optimizer_error(request, exc):
        tail = []
        if exc.trace is not None:
            tail = [
                {"t": r.t, "g": r.g, "cost": r.cost}
                for r in exc.trace.records[-5:]
            ]
        return JSONResponse(
            status_code=422,
            content={"errors": [{"message": str(exc)}], "trace_tail": tail},
        )

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/schema")
    async def schema():
        return schema_payload(bundle)

    @app.post("/recommend")
    async def recommend(req: RecommendRequest):
        report = recommend_one(
            bundle,
            req.values,
            req.budget,
            optimizer=req.optimizer,
            policy=BoundPolicy(req.policy) if req.policy else None,
            cost_overrides=req.cost_overrides,
            support_index=support_index,
        )
        return report.to_json()

    @app.post("/sweep")
    async def sweep(req: SweepRequest):
        reports = [
            recommend_one(
                bundle,
                req.values,
                b,
                optimizer=req.optimizer,
                policy=BoundPolicy(req.policy) if req.policy else None,
                cost_overrides=req.cost_overrides,
                support_index=support_index,
            ).to_json()
            for b in req.budgets
        ]
        return {"budgets": req.budgets, "reports": reports}

    return app
