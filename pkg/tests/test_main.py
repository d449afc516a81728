import json

import pytest
from httpx import AsyncClient, ASGITransport
from app.main import app
from conftest import FIG1_FILE


def _fig1():
    with open(FIG1_FILE, encoding="utf-8") as f:
        return json.load(f)


@pytest.mark.asyncio
async def test_read_main():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.get("/")
    assert response.status_code == 200
    assert response.json()["service"] == "coflow-scheduler"


@pytest.mark.asyncio
async def test_solve_fig1():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.post("/api/v1/solve", json={"instance": _fig1()})
    assert response.status_code == 200
    body = response.json()
    assert body["mode"] == "paths-given"
    assert body["report"]["feasible"]
    assert body["report"]["lp_objective"] <= body["report"]["objective"]
    assert "schedule" in body


@pytest.mark.asyncio
async def test_simulate_fig1():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.post("/api/v1/simulate", json={"instance": _fig1(), "scheme": "schedule-only"})
    assert response.status_code == 200
    assert response.json()["report"]["objective"] == pytest.approx(8.0)


@pytest.mark.asyncio
async def test_list_schemes():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.get("/api/v1/schemes")
    assert response.json()["schemes"] == ["baseline", "lp-based", "route-only", "schedule-only"]


@pytest.mark.asyncio
async def test_bad_instance():
    doc = _fig1()
    doc["coflows"][0]["flows"][0]["size"] = -1
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.post("/api/v1/solve", json={"instance": doc})
    assert response.status_code == 400
    assert "size" in response.json()["detail"]


@pytest.mark.asyncio
async def test_bad_params():
    async with AsyncClient(transport=ASGITransport(app=app), base_url="http://test") as ac:
        response = await ac.post("/api/v1/solve", json={"instance": _fig1(), "alpha": 0.5, "displacement": 1})
    assert response.status_code == 400
