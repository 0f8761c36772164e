//! Schema document for the HTTP API, mirrored in `docs/openapi.json`.

use serde_json::{json, Value};

fn error_response(description: &str) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}})
}

fn ok(description: &str, schema: Value) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": schema}}})
}

fn id_param() -> Value {
    json!({"name": "id", "in": "path", "required": true, "schema": {"type": "string"}})
}

pub fn openapi() -> Value {
    let currency = json!({"type": "integer", "description": "whole currency units"});
    let row = json!({
        "type": "object",
        "required": ["strategy", "trend", "consolidation", "visibility", "global_gain", "global_costs",
                     "production_cost", "inventory_cost", "backorder_cost", "purchasing_cost"],
        "properties": {
            "strategy": {"type": "string"},
            "trend": {"type": "string"},
            "consolidation": {"type": "string"},
            "visibility": {"type": "string"},
            "global_gain": currency,
            "global_costs": currency,
            "production_cost": currency,
            "inventory_cost": currency,
            "backorder_cost": currency,
            "purchasing_cost": currency
        }
    });
    json!({
        "openapi": "3.0.3",
        "info": {"title": "coplan", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/health": {"get": {"responses": {"200": ok("service is up", json!({"type": "object"}))}}},
            "/experiments": {"get": {
                "summary": "list experiments, oldest first",
                "responses": {"200": ok("experiments", json!({"type": "array", "items": {"$ref": "#/components/schemas/Experiment"}}))}
            }},
            "/experiments/{id}": {"get": {
                "parameters": [id_param()],
                "responses": {
                    "200": ok("experiment metadata and progress", json!({"$ref": "#/components/schemas/Experiment"})),
                    "404": error_response("unknown experiment")
                }
            }},
            "/experiments/{id}/results": {"get": {
                "parameters": [id_param()],
                "responses": {
                    "200": ok("results table", json!({"type": "object", "properties": {
                        "id": {"type": "string"},
                        "columns": {"type": "array", "items": {"type": "string"}},
                        "rows": {"type": "array", "items": {"$ref": "#/components/schemas/ResultRow"}},
                        "failures": {"type": "array", "items": {"type": "object"}}
                    }})),
                    "404": error_response("unknown experiment"),
                    "409": error_response("experiment not complete")
                }
            }},
            "/experiments/{id}/traces/{scenario}": {"get": {
                "parameters": [id_param(), {"name": "scenario", "in": "path", "required": true, "schema": {"type": "string"}}],
                "responses": {
                    "200": {"description": "JSON-lines event trace", "content": {"application/x-ndjson": {"schema": {"type": "string"}}}},
                    "404": error_response("unknown experiment or scenario")
                }
            }},
            "/experiments/{id}/risk": {"get": {
                "parameters": [
                    id_param(),
                    {"name": "actor", "in": "query", "required": true, "schema": {"type": "string", "enum": ["supplier", "customer"]}},
                    {"name": "penalties", "in": "query", "required": false, "schema": {"type": "string"}, "example": "V2=1000,V3=2000,V4=5000"}
                ],
                "responses": {
                    "200": ok("risk evaluation", json!({"$ref": "#/components/schemas/Risk"})),
                    "404": error_response("unknown experiment"),
                    "409": error_response("experiment not complete"),
                    "422": error_response("invalid actor or penalties")
                }
            }},
            "/experiments/{id}/decision": {
                "get": {
                    "parameters": [id_param()],
                    "responses": {"200": ok("decision history", json!({"type": "array", "items": {"$ref": "#/components/schemas/Decision"}})), "404": error_response("unknown experiment")}
                },
                "post": {
                    "parameters": [id_param()],
                    "requestBody": {"required": true, "content": {"application/json": {"schema": {
                        "type": "object",
                        "required": ["supplier_strategy", "visibility", "author"],
                        "properties": {"supplier_strategy": {"type": "string"}, "visibility": {"type": "string"}, "author": {"type": "string"}, "note": {"type": "string"}}
                    }}}},
                    "responses": {
                        "201": ok("recorded", json!({"$ref": "#/components/schemas/Decision"})),
                        "404": error_response("unknown experiment"),
                        "409": error_response("experiment not complete"),
                        "422": error_response("unknown labels")
                    }
                }
            },
            "/whatif": {"post": {
                "requestBody": {"required": true, "content": {"application/json": {"schema": {
                    "type": "object",
                    "required": ["base"],
                    "properties": {
                        "base": {"type": "string"},
                        "penalties": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                        "inventory_cap": {"type": "number", "minimum": 0},
                        "supplier_strategy": {"type": "string"},
                        "visibility": {"type": "string"}
                    }
                }}}},
                "responses": {
                    "200": ok("penalties re-aggregated without simulation", json!({"type": "object", "properties": {
                        "kind": {"type": "string", "enum": ["reaggregated"]},
                        "base": {"type": "string"},
                        "supplier": {"$ref": "#/components/schemas/Risk"},
                        "customer": {"$ref": "#/components/schemas/Risk"}
                    }})),
                    "202": ok("derived experiment created or already present", json!({"type": "object", "properties": {
                        "kind": {"type": "string", "enum": ["derived"]},
                        "base": {"type": "string"},
                        "experiment": {"type": "string"},
                        "progress": {"type": "string"}
                    }})),
                    "409": error_response("base experiment not complete"),
                    "422": error_response("validation failed")
                }
            }}
        },
        "components": {"schemas": {
            "Error": {"type": "object", "properties": {"error": {"type": "object", "properties": {
                "code": {"type": "string"},
                "message": {"type": "string"},
                "fields": {"type": "array", "items": {"type": "object", "properties": {"field": {"type": "string"}, "message": {"type": "string"}}}}
            }}}},
            "ResultRow": row,
            "Experiment": {"type": "object", "properties": {
                "id": {"type": "string"},
                "status": {"type": "string", "enum": ["running", "complete", "partial", "failed"]},
                "origin": {"type": "string", "enum": ["simulation", "import"]},
                "config_hash": {"type": "string"},
                "parent": {"type": "string"},
                "delta": {"type": "object"},
                "rows": {"type": "integer"},
                "failed": {"type": "integer"},
                "progress": {"type": "object", "properties": {"done": {"type": "integer"}, "total": {"type": "integer"}}}
            }},
            "Risk": {"type": "object", "properties": {
                "actor": {"type": "string"},
                "penalties": {"type": "object"},
                "strategies": {"type": "array", "items": {"type": "string"}},
                "scenarios": {"type": "array", "items": {"type": "string"}},
                "values": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                "diagram": {"type": "object", "description": "extremes, breakpoints (alpha, exact fraction), intervals (from, to, winners, recommended), laplace, wald, savage"},
                "regret": {"type": "object", "description": "cells[reference][used] = {min, max}"}
            }},
            "Decision": {"type": "object", "properties": {
                "supplier_strategy": {"type": "string"},
                "visibility": {"type": "string"},
                "author": {"type": "string"},
                "note": {"type": "string"},
                "recorded_unix": {"type": "integer"}
            }}
        }}
    })
}
