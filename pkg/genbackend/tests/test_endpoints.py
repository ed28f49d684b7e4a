import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from genbackend.app import create_app

from deda.imagecore import decode_png, encode_png


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def rgba_sprite(h=10, w=12, seed=0):
    rng = np.random.default_rng(seed)
    sprite = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
    sprite[:, :, 3] = 255
    return sprite


def object_image(h=20, w=24):
    image = np.full((h, w, 3), 200, dtype=np.uint8)
    image[5:15, 6:18] = (10, 10, 10)
    return image


@pytest.fixture
def client():
    return TestClient(create_app())


def invert_handle(client, class_id=0, steps=5, seed=0, sprites=None):
    sprites = sprites or [rgba_sprite(seed=1)]
    resp = client.post("/invert", json={
        "class_id": class_id, "cdp_pngs": [b64(encode_png(s)) for s in sprites],
        "strength": 0.4, "steps": steps, "lr": 1e-4, "batch": 32, "seed": seed})
    assert resp.status_code == 200, resp.text
    return resp.json()["handle"]


# ---------------------------------------------------------------------------
# health and error schema

def test_healthz(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"
    assert set(body["model_versions"]) == {"segmenter", "editor", "inversion"}


def test_unavailable_model_returns_503():
    degraded = TestClient(create_app(model_available=False))
    resp = degraded.post("/segment", json={"image": "xx", "prompt": "y"})
    assert resp.status_code == 503
    assert resp.json()["error"]["code"] == "model_unavailable"


def test_responses_echo_request_id(client):
    resp = client.post("/segment", json={
        "request_id": "req-1", "image": b64(encode_png(object_image())),
        "prompt": "blob"})
    assert resp.json()["request_id"] == "req-1"
    resp = client.post("/edit", json={
        "request_id": "req-2", "cdp_png": b64(encode_png(rgba_sprite())),
        "handle": "missing", "strength": 0.4, "seed": 0})
    assert resp.status_code == 404
    body = resp.json()
    assert body["request_id"] == "req-2"
    assert body["error"]["code"] == "unknown_handle"


# ---------------------------------------------------------------------------
# /segment

def test_segment_mask_dimensions_match_input(client):
    for h, w in ((16, 16), (30, 44)):
        image = np.full((h, w, 3), 220, dtype=np.uint8)
        image[2:h // 2, 3:w // 2] = 0
        resp = client.post("/segment", json={
            "image": b64(encode_png(image)), "prompt": "thing"})
        masks = [decode_png(base64.b64decode(m), "L")
                 for m in resp.json()["masks"]]
        assert masks
        assert all(m.shape == (h, w) for m in masks)


def test_segment_blank_image_gives_zero_masks(client):
    image = np.full((16, 16, 3), 99, dtype=np.uint8)
    resp = client.post("/segment", json={
        "image": b64(encode_png(image)), "prompt": "thing"})
    assert resp.status_code == 200
    assert resp.json()["masks"] == []


def test_segment_fixture_mask_served_verbatim():
    fixture = np.zeros((20, 24), dtype=np.uint8)
    fixture[4:9, 5:11] = 255
    client = TestClient(create_app(fixture_mask=fixture))
    resp = client.post("/segment", json={
        "image": b64(encode_png(object_image())), "prompt": "thing"})
    masks = resp.json()["masks"]
    assert len(masks) == 1
    assert np.array_equal(decode_png(base64.b64decode(masks[0]), "L"), fixture)


def test_segment_undecodable_is_422(client):
    resp = client.post("/segment", json={"image": "bm90IGEgcG5n", "prompt": "x"})
    assert resp.status_code == 422
    assert resp.json()["error"]["code"] == "undecodable"


# ---------------------------------------------------------------------------
# /invert

def test_invert_steps_zero_returns_init_embedding(client):
    handle = invert_handle(client, steps=0)
    body = client.get(f"/identifier/{handle}").json()
    assert body["embedding"] == [0.0, 0.0, 0.0, 0.0]


def test_invert_deterministic_under_seed(client):
    sprites = [rgba_sprite(seed=i) for i in range(3)]
    h1 = invert_handle(client, steps=40, seed=9, sprites=sprites)
    h2 = invert_handle(client, steps=40, seed=9, sprites=sprites)
    h3 = invert_handle(client, steps=40, seed=10, sprites=sprites)
    e1 = client.get(f"/identifier/{h1}").json()["embedding"]
    e2 = client.get(f"/identifier/{h2}").json()["embedding"]
    e3 = client.get(f"/identifier/{h3}").json()["embedding"]
    assert e1 == pytest.approx(e2, abs=1e-12)
    assert e1 != pytest.approx(e3, abs=1e-12)


def test_invert_rejects_empty_batch(client):
    resp = client.post("/invert", json={"class_id": 0, "cdp_pngs": [],
                                        "strength": 0.4, "steps": 1,
                                        "lr": 1e-4, "batch": 32, "seed": 0})
    assert resp.status_code == 422


def test_invert_moves_embedding_toward_mean_color(client):
    # solid orange, fully opaque: tensor-space target (r, g, b, a)
    sprite = np.zeros((12, 12, 4), dtype=np.uint8)
    sprite[:, :] = (255, 128, 0, 255)
    target = sprite.astype(np.float64)[0, 0] / 127.5 - 1.0
    handle = invert_handle(client, steps=400, seed=4, sprites=[sprite])
    emb = np.array(client.get(f"/identifier/{handle}").json()["embedding"])
    assert np.abs(emb - target).max() < 0.2


# ---------------------------------------------------------------------------
# /edit + identifier lifecycle

def test_edit_strength_zero_roundtrips_bytes(client):
    handle = invert_handle(client)
    png = encode_png(rgba_sprite(seed=7))
    resp = client.post("/edit", json={"cdp_png": b64(png), "handle": handle,
                                      "strength": 0.0, "seed": 3})
    assert base64.b64decode(resp.json()["cdp_png"]) == png


def test_edit_preserves_dimensions_and_is_seed_deterministic(client):
    handle = invert_handle(client)
    sprite = rgba_sprite(9, 17, seed=2)
    payload = {"cdp_png": b64(encode_png(sprite)), "handle": handle,
               "strength": 0.4, "seed": 11}
    a = client.post("/edit", json=payload).json()["cdp_png"]
    b = client.post("/edit", json=payload).json()["cdp_png"]
    c = client.post("/edit", json={**payload, "seed": 12}).json()["cdp_png"]
    assert a == b and a != c
    out = decode_png(base64.b64decode(a), "RGBA")
    assert out.shape == sprite.shape


def test_identifier_delete_lifecycle(client):
    handle = invert_handle(client)
    assert client.delete(f"/identifier/{handle}").json()["deleted"]
    assert client.get(f"/identifier/{handle}").status_code == 404
    resp = client.post("/edit", json={"cdp_png": b64(encode_png(rgba_sprite())),
                                      "handle": handle, "strength": 0.4,
                                      "seed": 0})
    assert resp.status_code == 404
