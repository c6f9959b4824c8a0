"""Stateless HTTP suggestion service.

Every request carries the whole column, so the server holds no session
state; identical requests produce identical responses.  Bodies are
validated by hand because the error contract distinguishes malformed
requests (400) from well-formed requests with zero observed examples
(422) and oversized columns (413).
"""

from __future__ import annotations

import dataclasses
import os
from importlib import metadata
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from cfsynth.column import Column, Task, _cell_from_json
from cfsynth.config import EngineConfig, config_from_dict, config_hash
from cfsynth.dsl import RuleSyntaxError, parse_rule, print_rule, to_excel_formula
from cfsynth.engine import learn, simplify_against_column

DEFAULT_MAX_CELLS = 100_000


def _version() -> str:
    try:
        return metadata.version("cfsynth")
    except metadata.PackageNotFoundError:
        return "0.0.0"


class _BadRequest(ValueError):
    """Maps to HTTP 400."""


def _parse_cells(obj: object) -> Column:
    if not isinstance(obj, list) or not obj:
        raise _BadRequest("'column' must be a non-empty array of cell objects")
    try:
        return Column(tuple(_cell_from_json(c, i) for i, c in enumerate(obj)))
    except ValueError as e:
        raise _BadRequest(str(e)) from e


def _parse_observed(obj: object) -> tuple[int, ...]:
    if obj is None:
        return ()
    if not isinstance(obj, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in obj
    ):
        raise _BadRequest("'observed' must be an array of cell indices")
    return tuple(obj)


def _merge_config(base: EngineConfig, overrides: object, top_k: object) -> EngineConfig:
    merged = dataclasses.asdict(base)
    if overrides is not None:
        if not isinstance(overrides, dict):
            raise _BadRequest("'config' must be an object of engine settings")
        if "ranker_model" in overrides and overrides["ranker_model"] != base.ranker_model:
            # a server filesystem path; clients must not steer file access
            raise _BadRequest("'ranker_model' cannot be overridden per request")
        merged.update(overrides)
    if top_k is not None:
        if not isinstance(top_k, int) or isinstance(top_k, bool):
            raise _BadRequest("'top_k' must be an integer")
        merged["top_k"] = top_k
    try:
        return config_from_dict(merged)
    except (ValueError, TypeError) as e:
        raise _BadRequest(str(e)) from e


def _rule_features(rule, execution, n_cells: int) -> dict:
    matched = int(sum(1 for f in execution if f != 0))
    return {
        "literal_count": rule.literal_count(),
        "clause_count": sum(len(dnf.clauses) for dnf, _ in rule.branches),
        "negation_count": sum(
            1
            for dnf, _ in rule.branches
            for cl in dnf.clauses
            for lit in cl.literals
            if lit.negated
        ),
        "branch_count": len(rule.branches),
        "matched_cells": matched,
        "matched_fraction": matched / n_cells,
    }


def _excel(rule) -> str:
    if len(rule.branches) == 1:
        return to_excel_formula(rule.branches[0][0], "A1")
    return "\n".join(
        f"format {fmt}: {to_excel_formula(dnf, 'A1')}" for dnf, fmt in rule.branches
    )


def create_app(
    config: Optional[EngineConfig] = None,
    max_cells: Optional[int] = None,
) -> FastAPI:
    base_config = config or EngineConfig()
    cap = (
        max_cells
        if max_cells is not None
        else int(os.environ.get("CF_MAX_CELLS", DEFAULT_MAX_CELLS))
    )
    app = FastAPI(
        title="cf-synth suggestion service",
        version=_version(),
        description=(
            "Learns conditional-formatting rules for one spreadsheet column "
            "from a few formatted example cells."
        ),
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    async def _body(request: Request) -> dict:
        try:
            obj = await request.json()
        except Exception as e:
            raise _BadRequest(f"invalid JSON body: {e}") from e
        if not isinstance(obj, dict):
            raise _BadRequest("request body must be a JSON object")
        return obj

    @app.exception_handler(_BadRequest)
    async def _bad_request(_request, exc: _BadRequest):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/v1/suggest")
    async def suggest(request: Request):
        """Rank rule suggestions for a column plus observed example cells.

        Body: {column: [{value, type, format}], observed: [int],
        top_k?: int, config?: {engine settings}}.  See the shipped
        OpenAPI document for response fields.
        """
        obj = await _body(request)
        raw_column = obj.get("column")
        if isinstance(raw_column, list) and len(raw_column) > cap:
            return JSONResponse(
                status_code=413,
                content={"detail": f"column exceeds {cap} cell cap"},
            )
        column = _parse_cells(raw_column)
        observed = _parse_observed(obj.get("observed"))
        if not observed:
            return JSONResponse(
                status_code=422,
                content={"detail": "at least one observed example cell is required"},
            )
        cfg = _merge_config(base_config, obj.get("config"), obj.get("top_k"))
        try:
            task = Task(column, observed)
        except ValueError as e:
            raise _BadRequest(str(e)) from e
        result = learn(task, cfg)
        rules = [
            {
                "rule_text": print_rule(r.rule),
                "excel_formula": _excel(r.rule),
                "score": r.score,
                "per_cell_formats": [int(f) for f in r.execution],
                "features": _rule_features(r.rule, r.execution, len(column)),
            }
            for r in result.rules
        ]
        return {"rules": rules, "diagnostic": result.diagnostics.failure}

    @app.post("/v1/simplify")
    async def simplify(request: Request):
        """Shorten a rule while keeping its effect on the column identical."""
        obj = await _body(request)
        column = _parse_cells(obj.get("column"))
        rule_text = obj.get("rule_text")
        if not isinstance(rule_text, str):
            raise _BadRequest("'rule_text' must be a string")
        try:
            rule = parse_rule(rule_text)
        except RuleSyntaxError as e:
            raise _BadRequest(str(e)) from e
        simplified = simplify_against_column(rule, column, base_config)
        out = print_rule(simplified)
        return {"rule_text": out, "changed": out != print_rule(rule)}

    @app.get("/v1/health")
    async def health():
        return {
            "status": "ok",
            "version": _version(),
            "config_hash": config_hash(base_config),
        }

    return app


def build_openapi() -> dict:
    """The OpenAPI document for the service, with request/response schemas
    filled in by hand (bodies are parsed manually, so FastAPI cannot infer
    them).  `scripts/export_openapi.py` writes this to openapi.json."""
    spec = create_app().openapi()
    schemas = {
        "Cell": {
            "type": "object",
            "required": ["value", "type"],
            "properties": {
                "value": {
                    "description": "number for type=number; ISO string for date; text otherwise",
                    "oneOf": [{"type": "number"}, {"type": "string"}],
                },
                "type": {"type": "string", "enum": ["number", "date", "text"]},
                "format": {"type": "integer", "minimum": 0, "default": 0},
            },
        },
        "SuggestRequest": {
            "type": "object",
            "required": ["column", "observed"],
            "properties": {
                "column": {
                    "type": "array",
                    "items": {"$ref": "#/components/schemas/Cell"},
                    "minItems": 1,
                },
                "observed": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "description": "indices of formatted example cells; must be non-empty",
                },
                "top_k": {"type": "integer", "minimum": 1},
                "config": {
                    "type": "object",
                    "description": "engine setting overrides (ranker_model excluded)",
                },
            },
        },
        "SuggestedRule": {
            "type": "object",
            "required": [
                "rule_text",
                "excel_formula",
                "score",
                "per_cell_formats",
                "features",
            ],
            "properties": {
                "rule_text": {"type": "string"},
                "excel_formula": {
                    "type": "string",
                    "description": "one formula for single-branch rules; one line per format otherwise",
                },
                "score": {"type": "number"},
                "per_cell_formats": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "description": "execution preview, one format id per column cell",
                },
                "features": {"type": "object"},
            },
        },
        "SuggestResponse": {
            "type": "object",
            "required": ["rules", "diagnostic"],
            "properties": {
                "rules": {
                    "type": "array",
                    "items": {"$ref": "#/components/schemas/SuggestedRule"},
                },
                "diagnostic": {"type": ["string", "null"]},
            },
        },
        "SimplifyRequest": {
            "type": "object",
            "required": ["column", "rule_text"],
            "properties": {
                "column": {
                    "type": "array",
                    "items": {"$ref": "#/components/schemas/Cell"},
                    "minItems": 1,
                },
                "rule_text": {"type": "string"},
            },
        },
        "SimplifyResponse": {
            "type": "object",
            "required": ["rule_text", "changed"],
            "properties": {
                "rule_text": {"type": "string"},
                "changed": {"type": "boolean"},
            },
        },
        "Health": {
            "type": "object",
            "required": ["status", "version", "config_hash"],
            "properties": {
                "status": {"type": "string"},
                "version": {"type": "string"},
                "config_hash": {"type": "string"},
            },
        },
        "Error": {
            "type": "object",
            "required": ["detail"],
            "properties": {"detail": {"type": "string"}},
        },
    }
    spec.setdefault("components", {}).setdefault("schemas", {}).update(schemas)

    def body(name):
        return {
            "required": True,
            "content": {
                "application/json": {
                    "schema": {"$ref": f"#/components/schemas/{name}"}
                }
            },
        }

    def responses(ok_name, errors):
        out = {
            "200": {
                "description": "Success",
                "content": {
                    "application/json": {
                        "schema": {"$ref": f"#/components/schemas/{ok_name}"}
                    }
                },
            }
        }
        for code, description in errors.items():
            out[code] = {
                "description": description,
                "content": {
                    "application/json": {
                        "schema": {"$ref": "#/components/schemas/Error"}
                    }
                },
            }
        return out

    suggest = spec["paths"]["/v1/suggest"]["post"]
    suggest["requestBody"] = body("SuggestRequest")
    suggest["responses"] = responses(
        "SuggestResponse",
        {
            "400": "Malformed body or schema violation",
            "413": "Column exceeds the configured cell cap",
            "422": "Zero observed example cells",
        },
    )
    simplify = spec["paths"]["/v1/simplify"]["post"]
    simplify["requestBody"] = body("SimplifyRequest")
    simplify["responses"] = responses(
        "SimplifyResponse", {"400": "Malformed body or unparseable rule"}
    )
    spec["paths"]["/v1/health"]["get"]["responses"] = responses("Health", {})
    return spec
