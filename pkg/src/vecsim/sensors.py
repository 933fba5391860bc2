"""Batched sensor suite: ray patterns, depth camera, tiled image packing,
contact bookkeeping, finite-difference IMU, and frame transforms.

Camera frames are stored internally in the *world* convention (x-forward,
z-up); ROS (z-forward, -y-up) and OpenGL (-z-forward, y-up) conversion
matrices are provided. Every sensor can run at its own update period via
:class:`SensorClock`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maths import Transform, compose, quat_mul, quat_rotate, quat_rotate_inverse, relative_pose

# rotation taking camera-frame vectors of each convention into the internal
# world convention (x-forward, y-left, z-up)
CAMERA_CONVENTIONS = {
    "world": np.eye(3),
    "ros": np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
    "opengl": np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
}


@dataclass
class RayPattern:
    """Local-frame ray origins and unit directions for one sensor."""

    kind: str
    origins: np.ndarray   # (R, 3)
    dirs: np.ndarray      # (R, 3)
    width: int = 0        # pinhole image width in px
    height: int = 0

    @property
    def num_rays(self) -> int:
        return len(self.dirs)


def _axis_count(size: float, resolution: float) -> int:
    # tolerate size/resolution landing just below an integer
    return int(np.floor(size / resolution + 1e-6)) + 1


def pattern_grid(size_x: float, size_y: float, resolution: float) -> RayPattern:
    """Regular grid of downward rays centered on the sensor frame.

    Produces ``(floor(size_x/res)+1) * (floor(size_y/res)+1)`` rays.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    nx = _axis_count(size_x, resolution)
    ny = _axis_count(size_y, resolution)
    xs = (np.arange(nx) - (nx - 1) / 2.0) * resolution
    ys = (np.arange(ny) - (ny - 1) / 2.0) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    origins = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    dirs = np.tile([0.0, 0.0, -1.0], (nx * ny, 1))
    return RayPattern("grid", origins, dirs, width=ny, height=nx)


def pattern_pinhole(width: int, height: int, focal_px: float,
                    principal: tuple[float, float] | None = None) -> RayPattern:
    """Pinhole camera rays in the world camera convention, row-major."""
    if width < 1 or height < 1:
        raise ValueError("image size must be at least 1x1")
    if focal_px <= 0:
        raise ValueError("focal length must be > 0")
    cx, cy = (width / 2.0, height / 2.0) if principal is None else principal
    u = np.arange(width) + 0.5
    v = np.arange(height) + 0.5
    uu, vv = np.meshgrid(u, v, indexing="xy")
    x_opt = (uu - cx) / focal_px
    y_opt = (vv - cy) / focal_px
    d_opt = np.stack([x_opt, y_opt, np.ones_like(x_opt)], axis=-1)
    d_opt /= np.linalg.norm(d_opt, axis=-1, keepdims=True)
    # optical (x-right, y-down, z-forward) -> world convention
    dirs = np.stack([d_opt[..., 2], -d_opt[..., 0], -d_opt[..., 1]], axis=-1)
    dirs = dirs.reshape(-1, 3)
    return RayPattern("pinhole", np.zeros_like(dirs), dirs,
                      width=width, height=height)


def pattern_lidar(horizontal_fov: float, horizontal_count: int,
                  vertical_angles) -> RayPattern:
    """Multi-channel lidar rays fanned around the sensor x-axis."""
    if horizontal_count < 1:
        raise ValueError("horizontal_count must be >= 1")
    va = np.asarray(vertical_angles, dtype=np.float64)
    ha = np.linspace(-horizontal_fov / 2, horizontal_fov / 2, horizontal_count)
    vv, hh = np.meshgrid(va, ha, indexing="ij")
    dirs = np.stack([np.cos(vv) * np.cos(hh), np.cos(vv) * np.sin(hh),
                     np.sin(vv)], axis=-1).reshape(-1, 3)
    return RayPattern("lidar", np.zeros_like(dirs), dirs,
                      width=horizontal_count, height=len(va))


def place_pattern(pattern: RayPattern, sensor_pose: Transform):
    """World-frame ray origins/directions for batched sensor poses."""
    pos = np.atleast_2d(sensor_pose.pos)
    quat = np.atleast_2d(sensor_pose.quat)
    origins = pos[:, None, :] + quat_rotate(quat[:, None, :], pattern.origins)
    dirs = quat_rotate(quat[:, None, :], np.broadcast_to(
        pattern.dirs, origins.shape))
    return origins, dirs


def depth_image(hits, pattern: RayPattern, mode: str = "distance") -> np.ndarray:
    """Depth image from pinhole-pattern hits.

    ``distance`` is the ray-travel distance; ``planar_z`` projects it onto
    the optical axis. Misses stay ``+inf``.
    """
    if pattern.kind != "pinhole":
        raise ValueError("depth images require a pinhole pattern")
    if mode not in ("distance", "planar_z"):
        raise ValueError(f"unknown depth mode {mode!r}")
    t = np.asarray(hits.t, dtype=np.float64)
    if mode == "planar_z":
        t = t * pattern.dirs[:, 0]  # forward component of each unit ray
    batch = t.shape[:-1]
    return t.reshape(batch + (pattern.height, pattern.width))


# ----------------------------------------------------------------- tiling


@dataclass
class TiledLayout:
    """Deterministic mapping of per-env images into one atlas."""

    tile_width: int
    tile_height: int
    tiles_per_row: int
    env_count: int
    channels: int = 0

    @property
    def rows(self) -> int:
        return -(-self.env_count // self.tiles_per_row)

    @property
    def atlas_shape(self) -> tuple[int, ...]:
        shape = (self.rows * self.tile_height, self.tiles_per_row * self.tile_width)
        return shape + ((self.channels,) if self.channels else ())

    def tile_of(self, env: int) -> tuple[int, int]:
        return env % self.tiles_per_row, env // self.tiles_per_row


def tile_pack(images: np.ndarray, tiles_per_row: int | None = None):
    """Pack env-indexed images ``(E, H, W[, C])`` into a single atlas.

    Environment ``e`` occupies tile column ``e % tiles_per_row`` and row
    ``e // tiles_per_row``. Returns ``(atlas, layout)``;
    :func:`tile_unpack` restores the input bitwise.
    """
    images = np.asarray(images)
    if images.ndim not in (3, 4):
        raise ValueError("images must be (E, H, W) or (E, H, W, C)")
    e, h, w = images.shape[:3]
    c = images.shape[3] if images.ndim == 4 else 0
    if tiles_per_row is None:
        tiles_per_row = int(np.ceil(np.sqrt(e)))
    layout = TiledLayout(w, h, tiles_per_row, e, c)
    atlas = np.zeros(layout.atlas_shape, dtype=images.dtype)
    for env in range(e):
        col, row = layout.tile_of(env)
        atlas[row * h:(row + 1) * h, col * w:(col + 1) * w] = images[env]
    return atlas, layout


def tile_unpack(atlas: np.ndarray, layout: TiledLayout) -> np.ndarray:
    """Inverse of :func:`tile_pack`."""
    h, w = layout.tile_height, layout.tile_width
    shape = (layout.env_count, h, w) + ((layout.channels,) if layout.channels else ())
    if atlas.shape != layout.atlas_shape:
        raise ValueError("atlas shape does not match layout")
    out = np.empty(shape, dtype=atlas.dtype)
    for env in range(layout.env_count):
        col, row = layout.tile_of(env)
        out[env] = atlas[row * h:(row + 1) * h, col * w:(col + 1) * w]
    return out


# ------------------------------------------------------------ sensor clock


@dataclass
class SensorClock:
    """Per-sensor update scheduling: recompute iff a period has elapsed.

    Marking advances the schedule by whole periods (drift-free), so over a
    horizon ``T`` the number of recomputes is ``floor(T / period) +- 1``
    even when the simulation step does not divide the period.
    """

    period: float
    last_update: float = -np.inf

    def due(self, sim_time: float) -> bool:
        return sim_time - self.last_update >= self.period - 1e-12

    def mark(self, sim_time: float) -> None:
        if np.isinf(self.last_update):
            self.last_update = sim_time
        else:
            self.last_update += self.period
            # never fall more than one period behind (no catch-up bursts)
            if sim_time - self.last_update >= self.period - 1e-12:
                self.last_update = sim_time

    def reset(self) -> None:
        self.last_update = -np.inf


# ---------------------------------------------------------- contact sensor


def aggregate_body_forces(probe_forces: np.ndarray, probe_link: np.ndarray,
                          body_ids, probe_mask=None) -> np.ndarray:
    """Sum per-probe forces onto bodies; ``probe_mask`` filters sources."""
    probe_forces = np.asarray(probe_forces)
    e = probe_forces.shape[0]
    body_ids = np.asarray(body_ids)
    out = np.zeros((e, len(body_ids), 3))
    for b, body in enumerate(body_ids):
        sel = probe_link == body
        if probe_mask is not None:
            sel = sel & probe_mask
        if sel.any():
            out[:, b] = probe_forces[:, sel].sum(axis=1)
    return out


class ContactSensor:
    """Net contact forces plus contact/air time bookkeeping per body.

    Keeps the current contact and air timers (never simultaneously
    positive), the last completed durations, and a short history ring of
    completed episodes.
    """

    def __init__(self, env_count: int, body_count: int, history_length: int = 3,
                 force_threshold: float = 1e-6):
        self.env_count = env_count
        self.body_count = body_count
        self.history_length = history_length
        self.force_threshold = force_threshold
        shape = (env_count, body_count)
        self.net_force = np.zeros(shape + (3,))
        self.in_contact = np.zeros(shape, dtype=bool)
        self.contact_time = np.zeros(shape)
        self.air_time = np.zeros(shape)
        self.last_contact_duration = np.zeros(shape)
        self.last_air_duration = np.zeros(shape)
        self.contact_history = np.zeros(shape + (history_length,))
        self.air_history = np.zeros(shape + (history_length,))

    def reset(self, env_ids=None) -> None:
        ids = slice(None) if env_ids is None else env_ids
        for arr in (self.net_force, self.contact_time, self.air_time,
                    self.last_contact_duration, self.last_air_duration,
                    self.contact_history, self.air_history):
            arr[ids] = 0.0
        self.in_contact[ids] = False

    def update(self, net_forces: np.ndarray, dt: float) -> None:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.net_force[:] = net_forces
        contact = np.linalg.norm(net_forces, axis=-1) > self.force_threshold
        touchdown = contact & (self.air_time > 0)
        liftoff = ~contact & (self.contact_time > 0)
        if touchdown.any():
            self.last_air_duration[touchdown] = self.air_time[touchdown]
            self.air_history[touchdown] = np.roll(
                self.air_history[touchdown], -1, axis=-1)
            self.air_history[touchdown, -1] = self.air_time[touchdown]
        if liftoff.any():
            self.last_contact_duration[liftoff] = self.contact_time[liftoff]
            self.contact_history[liftoff] = np.roll(
                self.contact_history[liftoff], -1, axis=-1)
            self.contact_history[liftoff, -1] = self.contact_time[liftoff]
        self.air_time[contact] = 0.0
        self.contact_time[~contact] = 0.0
        self.contact_time[contact] += dt
        self.air_time[~contact] += dt
        self.in_contact[:] = contact


# -------------------------------------------------------------------- IMU


@dataclass
class ImuModifiers:
    """Observation noise and bias random walk, enabled per-axis."""

    accel_noise_std: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias_walk_std: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_noise_std: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias_walk_std: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class ImuSample:
    """One batched IMU reading in the sensor frame."""

    orientation: np.ndarray          # (E, 4) sensor-in-world quaternion
    angular_velocity: np.ndarray     # (E, 3)
    linear_acceleration: np.ndarray  # (E, 3) proper acceleration
    gravity_projection: np.ndarray   # (E, 3) unit vector


class ImuSensor:
    """Finite-difference IMU attached to a body with a rigid offset.

    Reports proper acceleration: at rest the reading is ``-gravity``
    expressed in the sensor frame (magnitude ``g``), and zero in free fall.
    The first update after a reset outputs zero world acceleration.
    """

    def __init__(self, env_count: int, offset: Transform | None = None,
                 gravity=(0.0, 0.0, -9.81), modifiers: ImuModifiers | None = None,
                 rng: np.random.Generator | None = None):
        self.env_count = env_count
        self.offset = offset if offset is not None else Transform.identity()
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.modifiers = modifiers
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._prev_vel = np.zeros((env_count, 3))
        self._has_prev = np.zeros(env_count, dtype=bool)
        self._accel_bias = np.zeros((env_count, 3))
        self._gyro_bias = np.zeros((env_count, 3))

    def reset(self, env_ids=None) -> None:
        ids = slice(None) if env_ids is None else env_ids
        self._has_prev[ids] = False
        self._accel_bias[ids] = 0.0
        self._gyro_bias[ids] = 0.0

    def update(self, body_pose: Transform, body_lin_vel: np.ndarray,
               body_ang_vel: np.ndarray, dt: float) -> ImuSample:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        quat = np.atleast_2d(body_pose.quat)
        pos_offset_w = quat_rotate(quat, self.offset.pos)
        v_pt = body_lin_vel + np.cross(body_ang_vel, pos_offset_w)
        accel_w = np.where(self._has_prev[:, None],
                           (v_pt - self._prev_vel) / dt, 0.0)
        self._prev_vel[:] = v_pt
        self._has_prev[:] = True

        sensor_quat = quat_mul(quat, self.offset.quat)
        lin_acc = quat_rotate_inverse(sensor_quat, accel_w - self.gravity)
        ang_vel = quat_rotate_inverse(sensor_quat, body_ang_vel)
        g_norm = np.linalg.norm(self.gravity)
        g_unit = self.gravity / g_norm if g_norm > 0 else np.zeros(3)
        grav_proj = quat_rotate_inverse(sensor_quat, g_unit)
        if self.modifiers is not None:
            m = self.modifiers
            lin_acc = lin_acc + self.rng.normal(0.0, 1.0, lin_acc.shape) * m.accel_noise_std
            ang_vel = ang_vel + self.rng.normal(0.0, 1.0, ang_vel.shape) * m.gyro_noise_std
            self._accel_bias += self.rng.normal(0.0, 1.0, lin_acc.shape) * m.accel_bias_walk_std
            self._gyro_bias += self.rng.normal(0.0, 1.0, ang_vel.shape) * m.gyro_bias_walk_std
            lin_acc = lin_acc + self._accel_bias
            ang_vel = ang_vel + self._gyro_bias
        return ImuSample(sensor_quat, ang_vel, lin_acc, grav_proj)


# -------------------------------------------------------- frame transformer


def frame_transform(source_pose: Transform, source_offset: Transform,
                    targets: list[tuple[Transform, Transform]]) -> list[Transform]:
    """Poses of target frames relative to an offset source frame, batched.

    Each target is a ``(pose, offset)`` pair; offsets compose onto their
    frames before the relative pose is taken.
    """
    src = compose(source_pose, source_offset)
    return [relative_pose(src, compose(pose, offset)) for pose, offset in targets]
