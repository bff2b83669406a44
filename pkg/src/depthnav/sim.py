"""Synthetic 2.5-D worlds for closed-loop tests without external models.

Conventions, used everywhere in the package:

* World frame is x/y on the ground plane, z up. The ground itself is not a
  ray target; it only sets the base elevation of obstacles.
* Heading is in degrees, clockwise from +x when looking down with +y
  pointing "right" of +x, i.e. forward = (cos h, sin h) and the camera's
  right-hand direction is (-sin h, cos h). RIGHT ROTATE increases heading,
  LEFT ROTATE decreases it.
* Depth is z-depth: distance along the optical axis, not along the ray.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from depthnav import kernels
from depthnav.actions import Action
from depthnav.pipeline import DepthField, DepthMatrix, Unit


@dataclass(frozen=True)
class Box:
    """Vertical axis-aligned box standing on the ground."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    height: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin and self.height > 0):
            raise ValueError(f"box extents must be positive: {self}")


@dataclass(frozen=True)
class Cylinder:
    cx: float
    cy: float
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError(f"cylinder extents must be positive: {self}")


@dataclass(frozen=True)
class Scene:
    boxes: tuple[Box, ...] = ()
    cylinders: tuple[Cylinder, ...] = ()
    far_limit: float = 100.0

    def to_dict(self) -> dict:
        return {
            "boxes": [[b.xmin, b.xmax, b.ymin, b.ymax, b.height] for b in self.boxes],
            "cylinders": [[c.cx, c.cy, c.radius, c.height] for c in self.cylinders],
            "far_limit": self.far_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scene:
        return cls(
            boxes=tuple(Box(*map(float, b)) for b in d.get("boxes", [])),
            cylinders=tuple(Cylinder(*map(float, c)) for c in d.get("cylinders", [])),
            far_limit=float(d.get("far_limit", 100.0)),
        )


@dataclass(frozen=True)
class Camera:
    height: float = 0.5
    fov_deg: float = 90.0
    image_height: int = 360
    image_width: int = 640

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise ValueError("horizontal FOV must lie in (0, 180)")
        if self.image_height < 1 or self.image_width < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def focal(self) -> float:
        """Focal length in pixels (square pixels)."""
        return (self.image_width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass(frozen=True)
class Kinematics:
    forward_speed: float = 0.5
    rotate_speed: float = 30.0

    def __post_init__(self):
        if self.forward_speed <= 0 or self.rotate_speed <= 0:
            raise ValueError("speeds must be positive")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        h = float(self.heading) % 360.0
        # tiny negatives round up to exactly 360.0; -0.0 prints oddly
        object.__setattr__(self, "heading", 0.0 if h >= 360.0 or h == 0.0 else h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.heading]


def _cast(scene: Scene, pose: Pose, camera: Camera, rows, cols) -> np.ndarray:
    h = math.radians(pose.heading)
    boxes = np.array(
        [[b.xmin, b.xmax, b.ymin, b.ymax, b.height] for b in scene.boxes], dtype=np.float64
    ).reshape(-1, 5)
    cyls = np.array(
        [[c.cx, c.cy, c.radius, c.height] for c in scene.cylinders], dtype=np.float64
    ).reshape(-1, 4)
    # trig stays in Python so both kernel backends see identical inputs
    return kernels.raycast(
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(cols, dtype=np.int64),
        camera.image_height,
        camera.image_width,
        float(pose.x),
        float(pose.y),
        float(camera.height),
        math.cos(h),
        math.sin(h),
        camera.focal,
        boxes,
        cyls,
        float(scene.far_limit),
    )


def raycast_depth(scene: Scene, pose: Pose, camera: Camera) -> DepthField:
    values = _cast(
        scene, pose, camera, np.arange(camera.image_height), np.arange(camera.image_width)
    )
    return DepthField(values, Unit.METERS)


def raycast_matrix(scene: Scene, pose: Pose, camera: Camera, ratio: int) -> DepthMatrix:
    """Same values as downsampling ``raycast_depth``, casting only the sampled pixels."""
    if camera.image_height % ratio or camera.image_width % ratio:
        raise ValueError(f"ratio {ratio} does not divide {camera.image_height}x{camera.image_width}")
    rows = np.arange(camera.image_height // ratio) * ratio + ratio // 2
    cols = np.arange(camera.image_width // ratio) * ratio + ratio // 2
    return DepthMatrix(_cast(scene, pose, camera, rows, cols), Unit.METERS, ratio)


def advance(pose: Pose, action: Action, dt: float, kin: Kinematics | None = None) -> Pose:
    kin = kin or Kinematics()
    if action is Action.FORWARD:
        h = math.radians(pose.heading)
        step = kin.forward_speed * dt
        return Pose(pose.x + step * math.cos(h), pose.y + step * math.sin(h), pose.heading)
    if action is Action.LEFT_ROTATE:
        return Pose(pose.x, pose.y, pose.heading - kin.rotate_speed * dt)
    if action is Action.RIGHT_ROTATE:
        return Pose(pose.x, pose.y, pose.heading + kin.rotate_speed * dt)
    return pose


def bearing_to(pose: Pose, target: tuple[float, float]) -> float:
    """Clockwise-positive angle from the heading to the target, in (-180, 180]."""
    absolute = math.degrees(math.atan2(target[1] - pose.y, target[0] - pose.x))
    rel = (absolute - pose.heading) % 360.0
    return rel - 360.0 if rel > 180.0 else rel


def oracle_agent(
    matrix: DepthMatrix, bearing: float, stop_distance: float = 1.5, tolerance: float = 10.0
) -> Action:
    """Turn toward the goal, walk until the center column gets close, stop."""
    if abs(bearing) > tolerance:
        return Action.RIGHT_ROTATE if bearing > 0 else Action.LEFT_ROTATE
    center = matrix.values[:, matrix.cols // 2]
    if center.min() > stop_distance:
        return Action.FORWARD
    return Action.STOP


@dataclass(frozen=True)
class World:
    """Everything a synthetic episode needs beyond the episode schema."""

    scene: Scene
    camera_height: float = 0.5
    fov_deg: float = 90.0
    kinematics: Kinematics = field(default_factory=Kinematics)

    def camera(self, image_height: int, image_width: int) -> Camera:
        return Camera(self.camera_height, self.fov_deg, image_height, image_width)

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "camera_height": self.camera_height,
            "fov_deg": self.fov_deg,
            "kinematics": asdict(self.kinematics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> World:
        return cls(
            scene=Scene.from_dict(d["scene"]),
            camera_height=float(d.get("camera_height", 0.5)),
            fov_deg=float(d.get("fov_deg", 90.0)),
            kinematics=Kinematics(**d.get("kinematics", {})),
        )


@dataclass(frozen=True)
class Layout:
    """A preset: world, start pose and target."""

    name: str
    world: World
    start: Pose
    target: tuple[float, float]


def corridor(length: float, width: float = 3.0, wall_height: float = 3.0) -> Scene:
    """Straight corridor along +x from the origin, closed by an end wall."""
    half = width / 2.0
    return Scene(
        boxes=(
            Box(length, length + 0.5, -half - 0.5, half + 0.5, wall_height),
            Box(-1.0, length, -half - 0.25, -half, 1.0),
            Box(-1.0, length, half, half + 0.25, 1.0),
        )
    )


def corridor_suite(count: int = 10) -> list[Layout]:
    """Ten corridor / obstacle layouts with varying length and start heading."""
    lengths = [10.0, 8.0, 9.0, 7.0, 10.0, 6.0, 8.5, 9.5, 7.5, 10.0]
    headings = [0.0, 0.0, 30.0, -30.0, 60.0, -60.0, 0.0, 90.0, -15.0, 180.0]
    posts = [
        (),
        (),
        (),
        (Cylinder(3.5, -1.0, 0.2, 1.5),),
        (Cylinder(4.0, 1.0, 0.25, 2.0),),
        (Cylinder(3.0, 1.1, 0.2, 0.4),),
        (Cylinder(3.0, -1.0, 0.2, 1.5), Cylinder(6.0, 1.0, 0.2, 1.5)),
        (Cylinder(5.0, 1.1, 0.3, 2.5),),
        (Cylinder(2.5, -1.1, 0.15, 1.0), Box(4.0, 4.5, 0.9, 1.4, 0.8)),
        (Cylinder(7.0, 1.0, 0.2, 3.0), Cylinder(4.0, -1.0, 0.2, 3.0)),
    ]
    layouts = []
    for i in range(count):
        k = i % len(lengths)
        base = corridor(lengths[k])
        scene = Scene(base.boxes + tuple(p for p in posts[k] if isinstance(p, Box)),
                      tuple(p for p in posts[k] if isinstance(p, Cylinder)))
        layouts.append(
            Layout(
                name=f"corridor-{i:02d}",
                world=World(scene),
                start=Pose(0.0, 0.0, headings[k]),
                target=(lengths[k], 0.0),
            )
        )
    return layouts
