"""Frame directory layout shared by synthetic and real inputs.

Per frame ``i``::

    frame_%06d.depth.bin   little-endian float32, row-major, metres (0 = invalid)
    frame_%06d.meta.json   intrinsics, pose (world->camera), detections
    frame_%06d.color.png   colour image, never decoded by fusion

Detection masks are run-length encoded over the row-major flattened image as
``[[start, length], ...]``.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import MalformedDocument
from .fusion import Detection2D, FrameObservation
from .geometry import CameraIntrinsics, Pose, nearest_rotation

_META = re.compile(r"^frame_(\d{6})\.meta\.json$")


def frame_stem(index: int) -> str:
    return f"frame_{index:06d}"


def encode_rle(mask_uv: np.ndarray, width: int) -> list[list[int]]:
    flat = np.sort(mask_uv[:, 1].astype(np.int64) * width + mask_uv[:, 0].astype(np.int64))
    runs: list[list[int]] = []
    for idx in flat.tolist():
        if runs and runs[-1][0] + runs[-1][1] == idx:
            runs[-1][1] += 1
        else:
            runs.append([idx, 1])
    return runs


def decode_rle(runs, width: int) -> np.ndarray:
    flat = np.concatenate([np.arange(s, s + n, dtype=np.int64) for s, n in runs]) if runs else np.zeros(0, np.int64)
    return np.stack([flat % width, flat // width], axis=1)


def write_frame(directory, obs: FrameObservation, color: np.ndarray | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = frame_stem(obs.frame_index)
    obs.depth.astype("<f4").tofile(d / f"{stem}.depth.bin")
    intr = obs.intrinsics
    meta = {
        "frame_index": obs.frame_index,
        "intrinsics": {
            "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height,
        },
        "pose": {"rotation": obs.pose_w_c.rotation.tolist(), "translation": obs.pose_w_c.translation.tolist()},
        "color": f"{stem}.color.png",
        "detections": [
            {
                "mask_rle": encode_rle(det.mask, intr.width),
                "score": float(det.score_mu),
                "feature": [float(x) for x in det.feature],
                "label": det.proposed_label,
                "description": det.proposed_description,
            }
            for det in obs.detections
        ],
    }
    (d / f"{stem}.meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    if color is not None:
        from PIL import Image

        Image.fromarray(np.asarray(color, dtype=np.uint8)).save(d / f"{stem}.color.png")


def read_frame(directory, index: int) -> FrameObservation:
    d = Path(directory)
    stem = frame_stem(index)
    try:
        meta = json.loads((d / f"{stem}.meta.json").read_text())
        k = meta["intrinsics"]
        intr = CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"], int(k["width"]), int(k["height"]))
        pose = Pose(nearest_rotation(meta["pose"]["rotation"]), meta["pose"]["translation"])
        depth = np.fromfile(d / f"{stem}.depth.bin", dtype="<f4")
        if depth.size != intr.width * intr.height:
            raise MalformedDocument(f"{stem}: depth file has {depth.size} values")
        dets = [
            Detection2D(
                decode_rle(raw["mask_rle"], intr.width),
                float(raw["score"]),
                np.asarray(raw["feature"], dtype=np.float64),
                raw.get("label"),
                raw.get("description"),
            )
            for raw in meta["detections"]
        ]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise MalformedDocument(f"{stem}: {exc}") from exc
    return FrameObservation(
        frame_index=int(meta["frame_index"]),
        intrinsics=intr,
        pose_w_c=pose,
        depth=depth.reshape(intr.height, intr.width),
        detections=tuple(dets),
        color_ref=meta.get("color", f"{stem}.color.png"),
    )


def frame_indices(directory) -> list[int]:
    out = []
    for p in Path(directory).iterdir():
        m = _META.match(p.name)
        if m:
            out.append(int(m.group(1)))
    return sorted(out)


def read_frames(directory):
    for i in frame_indices(directory):
        yield read_frame(directory, i)
