"""HTTP face of the collector: ingestion plus the dashboard's query API.

Thin by design. Parsing and persistence rules live in ``uploads`` and
``store``; this module maps their exceptions onto status codes and keeps
response shapes stable for the dashboard.
"""

from __future__ import annotations

import os
from typing import Literal, Optional

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .privacy import mac_to_bytes
from .store import Store
from .uploads import batch_from_dict


class LabelBody(BaseModel):
    name: str = ""
    category: str = ""
    vendor: str = ""


class MonitorBody(BaseModel):
    monitored: bool
    # proof-of-possession MAC for general-purpose overrides; validated for
    # shape, then discarded
    override_mac: Optional[str] = None


def create_app(store: Optional[Store] = None,
               frontend_dir: Optional[str] = None) -> FastAPI:
    store = store if store is not None else Store()
    app = FastAPI(title="lanlens collector", version=__version__)
    app.state.store = store

    @app.post("/v1/batch")
    def ingest_batch(payload: dict = Body(...)):
        try:
            batch = batch_from_dict(payload)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(400, detail=f"malformed batch: {exc}")
        try:
            ack = store.ingest(batch)
        except ValueError as exc:
            raise HTTPException(400, detail=str(exc))
        return {"accepted": ack.accepted, "rejected": ack.rejected,
                "duplicate": ack.duplicate}

    @app.get("/v1/devices")
    def devices():
        return {"devices": store.list_devices()}

    @app.get("/v1/devices/{device_id}/endpoints")
    def endpoints(device_id: str):
        try:
            rows = store.device_endpoints(device_id)
        except KeyError:
            raise HTTPException(404, detail="unknown device")
        return {"device_id": device_id, "endpoints": rows}

    @app.get("/v1/devices/{device_id}/bandwidth")
    def bandwidth(device_id: str, window: int = Query(5)):
        try:
            return store.bandwidth_series(device_id, window=window)
        except KeyError:
            raise HTTPException(404, detail="unknown device")
        except ValueError as exc:
            raise HTTPException(400, detail=str(exc))

    @app.post("/v1/devices/{device_id}/labels")
    def submit_label(device_id: str, body: LabelBody):
        if not (body.name or body.category or body.vendor):
            raise HTTPException(400, detail="empty label")
        try:
            return store.upsert_label(device_id, body.name, body.category,
                                      body.vendor)
        except KeyError:
            raise HTTPException(404, detail="unknown device")

    @app.post("/v1/devices/{device_id}/monitor")
    def set_monitor(device_id: str, body: MonitorBody):
        try:
            device = store.get_device(device_id)
        except KeyError:
            raise HTTPException(404, detail="unknown device")
        needs_override = (body.monitored
                          and device["classification"] == "general-purpose"
                          and not device["overridden"])
        if needs_override:
            try:
                mac_to_bytes(body.override_mac or "")
            except ValueError:
                raise HTTPException(
                    403, detail="monitoring a general-purpose device requires"
                                " owner confirmation with its MAC address")
            store.set_override(device_id)
        try:
            return store.set_monitor(device_id, body.monitored)
        except KeyError:
            raise HTTPException(404, detail="unknown device")

    @app.delete("/v1/devices/{device_id}")
    def delete_device(device_id: str,
                      only: Optional[Literal["dhcp", "ssdp"]] = Query(None)):
        try:
            if only is None:
                return {"deleted": store.delete_device(device_id)}
            return {"scope": only,
                    "deleted_hints": store.delete_hints(device_id, only)}
        except KeyError:
            raise HTTPException(404, detail="unknown device")

    @app.get("/v1/export")
    def export():
        return {"files": {name: blob.decode()
                          for name, blob in store.export_csv_bytes().items()}}

    @app.get("/v1/vocabulary")
    def vocabulary():
        return store.vocabulary()

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="dashboard")
    return app
