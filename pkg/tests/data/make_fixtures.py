"""Regenerates the committed test fixtures. Run from anywhere:

    python3 tests/data/make_fixtures.py

Golden array files are written by numpy itself so the package's codec is
checked against an independent producer. Everything is seeded.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

HERE = Path(__file__).resolve().parent


def golden():
    out = HERE / "golden"
    out.mkdir(exist_ok=True)
    np.save(out / "f4_2d.npy", (np.arange(12, dtype="<f4") * 0.5).reshape(3, 4))
    np.savez(
        out / "mixed.npz",
        depth=np.linspace(0.25, 8.0, 6, dtype="<f4").reshape(2, 3),
        volume=np.arange(24, dtype="<f8").reshape(2, 3, 4) / 8.0,
    )
    rng = np.random.default_rng(11)
    np.savez_compressed(out / "compressed.npz", depth=rng.uniform(0.5, 20.0, (5, 7)).astype("<f4"))
    with open(out / "v2_f8.npy", "wb") as fh:
        np.lib.format.write_array(fh, np.eye(3, 5, dtype="<f8") * 3.0, version=(2, 0))


# Six episodes, three scene classes, two per class. Frames are 72x128 and the
# tests run the pipeline at 36x64 with r=4, so the matrix is still 9x16.
EPISODES = [
    # id, scene, subtasks, target, [(action, pose)], max_steps
    ("farm-1", "farm", 2, [2.0, 1.0],
     [("FORWARD", [0, 0, 0]), ("FORWARD", [1, 0, 0]), ("STOP", [2, 0, 0])], 10),
    ("farm-2", "farm", 3, [3.0, 4.0],
     [("FORWARD", [0, 0, 0]), ("STOP", [0.5, 0, 0])], 10),
    ("forest-1", "forest", 2, [1.5, 1.5],
     [("FORWARD", [0, 0, 0]), ("FORWARD", [0.5, 0, 0]), ("FORWARD", [1.0, 0, 0]), ("STOP", [1.5, 0, 0])], 10),
    ("forest-2", "forest", 3, [2.0, 2.0],
     [("LEFT ROTATE", [1, 1, 0]), ("STOP", [1, 1, 354])], 10),
    ("village-1", "village", 2, [0.0, 1.2],
     [("RIGHT ROTATE", [0, 0, 84]), ("STOP", [0, 0, 90])], 10),
    ("village-2", "village", 3, [0.5, -0.5],
     [("FORWARD", [0, 0, 0]), ("STOP", [0.5, 0, 0])], 10),
]

# Mock replies per episode; the expected outcomes are spelled out in
# tests/test_metrics.py next to the hand-computed metrics.
SCRIPTS = {
    "farm-1": [
        '{"thought": "path ahead is clear", "action": "FORWARD"}',
        '{"thought": "still clear", "action": "FORWARD"}',
        '{"thought": "target reached", "action": "STOP"}',
    ],
    "farm-2": ['{"thought": "I think I am there", "action": "STOP"}'],
    "forest-1": ["FORWARD", "FORWARD", "Forward.", "```\nFORWARD\n```"],
    "forest-2": ["go forth", "go forth", "onward"],
    "village-1": [
        '{"thought": "the house is to my right", "action": "right_rotate"}',
        '{"thought": "facing it now", "action": "stop"}',
    ],
    "village-2": ["The road continues.\nAction: FORWARD", "Action: STOP"],
}


def corpus():
    root = HERE / "corpus"
    rng = np.random.default_rng(5)
    lines = []
    for ep_id, scene, subtasks, target, steps, max_steps in EPISODES:
        step_objs = []
        for t, (action, pose) in enumerate(steps):
            rel = f"frames/{ep_id}/{t:04d}.png"
            frame_path = root / rel
            frame_path.parent.mkdir(parents=True, exist_ok=True)
            img = rng.integers(0, 256, (72, 128, 3), dtype=np.uint8)
            Image.fromarray(img).save(frame_path)
            depth_path = root / "depth" / f"frames/{ep_id}/{t:04d}.npz"
            depth_path.parent.mkdir(parents=True, exist_ok=True)
            yy, xx = np.mgrid[0:36, 0:64]
            field = 1.0 + 0.1 * yy + 0.05 * xx + rng.uniform(0.0, 0.5, (36, 64))
            np.savez(depth_path, depth=field.astype("<f4"))
            step_objs.append({"frame": rel, "action": action, "pose": [float(v) for v in pose]})
        lines.append(
            json.dumps(
                {
                    "id": ep_id,
                    "scene": scene,
                    "subtask_count": subtasks,
                    "instruction": f"Walk to the marked spot in the {scene}.",
                    "dt": 0.2,
                    "max_steps": max_steps,
                    "target": target,
                    "steps": step_objs,
                },
                sort_keys=True,
            )
        )
    (root / "episodes.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (root / "scripts.json").write_text(json.dumps(SCRIPTS, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def full_frame():
    """A 360x640 frame with its 360x640 depth field, for default-size runs."""
    out = HERE / "full"
    out.mkdir(exist_ok=True)
    yy, xx = np.mgrid[0:360, 0:640]
    img = np.stack([(xx * 255) // 639, (yy * 255) // 359, np.full_like(xx, 96)], axis=-1).astype(np.uint8)
    Image.fromarray(img).save(out / "frame.png")
    # two decimals keep the compressed archive small
    depth = np.round(0.5 + 0.02 * yy + 0.01 * xx, 2).astype("<f4")
    np.savez_compressed(out / "frame.npz", depth=depth)


if __name__ == "__main__":
    golden()
    corpus()
    full_frame()
