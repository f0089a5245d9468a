"""Scene directories: ``cameras.json`` + 8-bit PNG images + PFM depth maps.

::

    scene/
      cameras.json        version, intrinsics, per-view R (row-major), t, file names
      images/0000.png     ground-truth RGB
      renders/0000.png    degraded render (optional)
      depth/0000.pfm      single-channel float32, little-endian (scale -1.0)
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import LoadError
from .types import CameraPose, PinholeIntrinsics, PosedImage, SceneDataset, rotation_problem

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 2:
        kind = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        kind = b"PF"
    else:
        raise ValueError(f"PFM needs H x W or H x W x 3 data, got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(kind + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        # PFM rows run bottom to top
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def _read_token_line(f, path) -> str:
    line = f.readline()
    if not line.endswith(b"\n"):
        raise LoadError(path, "truncated PFM header")
    return line.decode("ascii").strip()


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise LoadError(path, "missing file") from exc
    with f:
        try:
            kind = _read_token_line(f, path)
            dims = _read_token_line(f, path).split()
            scale = float(_read_token_line(f, path))
            w, h = int(dims[0]), int(dims[1])
        except (ValueError, IndexError, UnicodeDecodeError) as exc:
            raise LoadError(path, "malformed PFM header") from exc
        if kind == "Pf":
            channels = 1
        elif kind == "PF":
            channels = 3
        else:
            raise LoadError(path, f"unknown PFM identifier {kind!r}")
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read()
    expected = w * h * channels * 4
    if len(raw) != expected:
        raise LoadError(path, f"expected {expected} data bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).reshape((h, w, channels) if channels == 3 else (h, w))
    return arr[::-1].astype(np.float32)


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

def quantize(rgb: np.ndarray) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, rgb: np.ndarray) -> None:
    Image.fromarray(quantize(rgb), mode="RGB").save(path, format="PNG", optimize=False, compress_level=6)


def read_png(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError as exc:
        raise LoadError(path, "missing file") from exc
    except OSError as exc:
        raise LoadError(path, f"unreadable PNG ({exc})") from exc
    return arr.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# scene directory
# ---------------------------------------------------------------------------

def save_scene(dataset: SceneDataset, path) -> None:
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(exist_ok=True)
    if dataset.renders is not None:
        (root / "renders").mkdir(exist_ok=True)
    K = dataset.intrinsics
    views = []
    for i, v in enumerate(dataset.views):
        if v.intrinsics != K:
            raise ValueError("all views in a scene must share intrinsics")
        entry = {
            "R": [float(x) for x in v.pose.R.reshape(-1)],
            "t": [float(x) for x in v.pose.t],
            "image": f"images/{i:04d}.png",
            "depth": f"depth/{i:04d}.pfm",
        }
        write_png(root / entry["image"], v.rgb)
        write_pfm(root / entry["depth"], v.depth)
        if dataset.renders is not None:
            entry["render"] = f"renders/{i:04d}.png"
            write_png(root / entry["render"], dataset.renders[i])
        views.append(entry)
    doc = {
        "version": FORMAT_VERSION,
        "intrinsics": {
            "fx": float(K.fx),
            "fy": float(K.fy),
            "cx": float(K.cx),
            "cy": float(K.cy),
            "width": int(K.width),
            "height": int(K.height),
        },
        "views": views,
        "meta": dataset.meta,
    }
    (root / "cameras.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_scene(path) -> SceneDataset:
    root = Path(path)
    cam_path = root / "cameras.json"
    try:
        doc = json.loads(cam_path.read_text())
    except FileNotFoundError as exc:
        raise LoadError(cam_path, "missing file") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(cam_path, f"malformed JSON ({exc.msg})") from exc
    if not isinstance(doc, dict) or doc.get("version") != FORMAT_VERSION:
        raise LoadError(cam_path, f"malformed header: unsupported version {doc.get('version') if isinstance(doc, dict) else None!r}")
    try:
        k = doc["intrinsics"]
        K = PinholeIntrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]), int(k["width"]), int(k["height"]))
        entries = doc["views"]
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(cam_path, f"malformed header ({exc})") from exc
    views, renders = [], []
    has_render = bool(entries) and all("render" in e for e in entries)
    for i, e in enumerate(entries):
        try:
            R = np.array(e["R"], dtype=np.float64).reshape(3, 3)
            t = np.array(e["t"], dtype=np.float64).reshape(3)
        except (KeyError, ValueError, TypeError) as exc:
            raise LoadError(cam_path, f"view {i}: malformed pose ({exc})") from exc
        problem = rotation_problem(R)
        if problem:
            raise LoadError(cam_path, f"view {i}: {problem}")
        rgb = read_png(root / e["image"])
        depth = read_pfm(root / e["depth"]).astype(np.float64)
        try:
            views.append(PosedImage(rgb, depth, CameraPose(R, t), K))
        except ValueError as exc:
            raise LoadError(root / e["image"], f"view {i}: {exc}") from exc
        if has_render:
            renders.append(read_png(root / e["render"]))
    return SceneDataset(views, renders if has_render else None, doc.get("meta", {}))
