"""Track geometry, surface reflectance and obstacles.

A track is an ordered chain of straight and circular-arc centerline segments
with a painted line of fixed width.  All lengths are metres and all angles
radians; :func:`lateral_error` is the one query reported in centimetres.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numba
import numpy as np

CONTINUITY_TOL = 1e-9
MIN_ARC_RADIUS = 0.15
OFF_TRACK_LIMIT = 1.0
CONE_HALF_ANGLE = math.radians(7.5)
EDGE_BLEND_WIDTH = 0.002

Point = tuple


class TrackError(ValueError):
    """Base class for track loading and validation failures."""


class TrackParseError(TrackError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class TrackContinuityError(TrackError):
    def __init__(self, index: int, gap: float):
        super().__init__(
            f"segment {index} starts {gap:.3g} m away from the end of segment {index - 1}"
        )
        self.index = index
        self.gap = gap


class TrackInvariantError(TrackError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Straight:
    start: Point
    end: Point

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def end_point(self) -> Point:
        return self.end

    def point_at(self, s: float) -> tuple[Point, float]:
        """Point and tangent heading at arc length ``s`` from the start."""
        L = self.length
        h = math.atan2(self.end[1] - self.start[1], self.end[0] - self.start[0])
        f = min(max(s / L, 0.0), 1.0)
        return (
            (self.start[0] + f * (self.end[0] - self.start[0]),
             self.start[1] + f * (self.end[1] - self.start[1])),
            h,
        )


@dataclass(frozen=True)
class Arc:
    """Circular arc swept from ``a0`` to ``a1``; ``a1 > a0`` iff counter-clockwise."""

    center: Point
    radius: float
    a0: float
    a1: float

    @property
    def ccw(self) -> bool:
        return self.a1 > self.a0

    @property
    def sweep(self) -> float:
        return self.a1 - self.a0

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    @property
    def start(self) -> Point:
        return (self.center[0] + self.radius * math.cos(self.a0),
                self.center[1] + self.radius * math.sin(self.a0))

    @property
    def end_point(self) -> Point:
        return (self.center[0] + self.radius * math.cos(self.a1),
                self.center[1] + self.radius * math.sin(self.a1))

    def point_at(self, s: float) -> tuple[Point, float]:
        f = min(max(s / self.length, 0.0), 1.0)
        a = self.a0 + f * self.sweep
        p = (self.center[0] + self.radius * math.cos(a),
             self.center[1] + self.radius * math.sin(a))
        return p, a + (math.pi / 2 if self.ccw else -math.pi / 2)


Segment = Union[Straight, Arc]


@dataclass(frozen=True)
class Obstacle:
    center: Point
    radius: float
    present_from: Optional[float] = None
    present_until: Optional[float] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise TrackInvariantError("obstacle.radius", f"must be > 0, got {self.radius}")
        if (self.present_from is not None and self.present_until is not None
                and not self.present_from < self.present_until):
            raise TrackInvariantError("obstacle.present_from",
                                      "must be earlier than present_until")

    def active(self, t: float) -> bool:
        if self.present_from is not None and t < self.present_from:
            return False
        if self.present_until is not None and t >= self.present_until:
            return False
        return True


@dataclass(frozen=True)
class Track:
    segments: tuple
    line_width: float = 0.02
    reflect_line: float = 0.08
    reflect_surface: float = 0.92
    obstacles: tuple = ()
    edge_blend: bool = False
    min_radius: float = MIN_ARC_RADIUS
    _flat: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        self._validate()
        # Flattened per-segment parameters for the hot nearest-point loop.
        flat = []
        for seg in self.segments:
            if isinstance(seg, Straight):
                (x0, y0), (x1, y1) = seg.start, seg.end
                dx, dy = x1 - x0, y1 - y0
                flat.append((0, x0, y0, dx, dy, dx * dx + dy * dy, 0.0))
            else:
                lo, hi = min(seg.a0, seg.a1), max(seg.a0, seg.a1)
                flat.append((1, seg.center[0], seg.center[1], seg.radius, lo, hi, 0.0))
        object.__setattr__(self, "_flat", tuple(flat))
        object.__setattr__(self, "_arr", np.array(flat, dtype=np.float64))

    def _validate(self):
        if not self.segments:
            raise TrackInvariantError("segments", "track needs at least one segment")
        if not self.line_width > 0:
            raise TrackInvariantError("line_width", f"must be > 0, got {self.line_width}")
        if not 0 <= self.reflect_line < self.reflect_surface <= 1:
            raise TrackInvariantError(
                "reflect_line",
                "need 0 <= reflect_line < reflect_surface <= 1 (dark line on light surface)")
        for i, seg in enumerate(self.segments):
            if seg.length <= 0:
                raise TrackInvariantError(f"segments[{i}]", "zero-length segment")
            if isinstance(seg, Arc):
                if seg.radius < self.min_radius:
                    raise TrackInvariantError(
                        f"segments[{i}].radius",
                        f"{seg.radius} m is below the minimum curve radius {self.min_radius} m")
                if abs(seg.sweep) > 2 * math.pi + 1e-12:
                    raise TrackInvariantError(f"segments[{i}].sweep", "sweep exceeds a full turn")
        for i in range(1, len(self.segments)):
            a = self.segments[i - 1].end_point
            b = self.segments[i].start
            gap = math.hypot(a[0] - b[0], a[1] - b[1])
            if gap > CONTINUITY_TOL:
                raise TrackContinuityError(i, gap)

    @property
    def length(self) -> float:
        return math.fsum(seg.length for seg in self.segments)

    @property
    def closed(self) -> bool:
        a = self.segments[-1].end_point
        b = self.segments[0].start
        return math.hypot(a[0] - b[0], a[1] - b[1]) <= CONTINUITY_TOL

    def start_pose(self) -> tuple[float, float, float]:
        """Start point and heading of the first segment."""
        (x, y), h = self.segments[0].point_at(0.0)
        return x, y, h

    def point_at(self, s: float) -> tuple[Point, float]:
        """Centerline point and tangent heading at path length ``s``."""
        for seg in self.segments:
            if s <= seg.length:
                return seg.point_at(s)
            s -= seg.length
        return self.segments[-1].point_at(self.segments[-1].length)

    def with_obstacles(self, obstacles: Sequence[Obstacle]) -> "Track":
        return Track(self.segments, self.line_width, self.reflect_line, self.reflect_surface,
                     tuple(obstacles), self.edge_blend, self.min_radius)

    def nearest(self, px: float, py: float) -> tuple[float, float, float]:
        """Distance to the centerline and the nearest centerline point."""
        return _nearest_jit(self._arr, px, py)

    def reflectance(self, px: float, py: float) -> float:
        return self._reflect(self.nearest(px, py)[0])

    def probe(self, mx: float, my: float, dx: float, dy: float) -> tuple:
        """One call for a sensor bar: ``(dist, qx, qy, refl_a, refl_b)``.

        ``dist, qx, qy`` is :meth:`nearest` at the midpoint ``(mx, my)``; the
        reflectances are under ``(mx + dx, my + dy)`` and ``(mx - dx, my - dy)``.
        """
        dist, qx, qy, da, db = _probe_jit(self._arr, mx, my, dx, dy)
        return dist, qx, qy, self._reflect(da), self._reflect(db)

    def _reflect(self, dist: float) -> float:
        half = self.line_width / 2
        if not self.edge_blend:
            return self.reflect_line if dist <= half else self.reflect_surface
        lo, hi = half - EDGE_BLEND_WIDTH / 2, half + EDGE_BLEND_WIDTH / 2
        if dist <= lo:
            return self.reflect_line
        if dist >= hi:
            return self.reflect_surface
        f = (dist - lo) / EDGE_BLEND_WIDTH
        return self.reflect_line + f * (self.reflect_surface - self.reflect_line)


@numba.njit(cache=True)
def _nearest_jit(flat, px, py):
    best = math.inf
    bx = by = 0.0
    for i in range(flat.shape[0]):
        a, b, c, d, e = flat[i, 1], flat[i, 2], flat[i, 3], flat[i, 4], flat[i, 5]
        if flat[i, 0] == 0.0:
            t = ((px - a) * c + (py - b) * d) / e
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx = a + t * c
            qy = b + t * d
        else:
            ang = math.atan2(py - b, px - a)
            # bring the angle into [lo, lo + 2pi) before clamping to the arc span
            ang = d + (ang - d) % (2 * math.pi)
            if ang > e:
                # outside the span: nearest point is one of the endpoints
                qx = a + c * math.cos(d)
                qy = b + c * math.sin(d)
                ex = a + c * math.cos(e)
                ey = b + c * math.sin(e)
                if math.hypot(px - ex, py - ey) < math.hypot(px - qx, py - qy):
                    qx, qy = ex, ey
            else:
                rx, ry = px - a, py - b
                rn = math.hypot(rx, ry)
                if rn == 0.0:
                    qx = a + c * math.cos(ang)
                    qy = b + c * math.sin(ang)
                else:
                    qx = a + c * rx / rn
                    qy = b + c * ry / rn
        dist = math.hypot(px - qx, py - qy)
        if dist < best:
            best, bx, by = dist, qx, qy
    return best, bx, by


@numba.njit(cache=True)
def _probe_jit(flat, mx, my, dx, dy):
    dist, qx, qy = _nearest_jit(flat, mx, my)
    da = _nearest_jit(flat, mx + dx, my + dy)[0]
    db = _nearest_jit(flat, mx - dx, my - dy)[0]
    return dist, qx, qy, da, db


def reflectance_at(track: Track, p: Point) -> float:
    """Surface reflectance under ``p``; the line edge is inclusive."""
    return track.reflectance(p[0], p[1])


def reference_point(pose) -> tuple[float, float]:
    """Midpoint between the two IR sensors for a robot pose."""
    f = pose.geometry.sensor_forward_offset
    return pose.x + f * math.cos(pose.heading), pose.y + f * math.sin(pose.heading)


def lateral_error(track: Track, pose) -> Optional[float]:
    """Signed lateral error in cm, positive when the line lies to the robot's left.

    Returns ``None`` when the sensor midpoint is more than 1 m from the path.
    """
    c = math.cos(pose.heading)
    s = math.sin(pose.heading)
    f = pose.geometry.sensor_forward_offset
    px, py = pose.x + f * c, pose.y + f * s
    dist, qx, qy = track.nearest(px, py)
    if dist > OFF_TRACK_LIMIT:
        return None
    cross = c * (qy - py) - s * (qx - px)
    return 100.0 * dist if cross >= 0 else -100.0 * dist


def _ray_circle(ox, oy, dx, dy, cx, cy, r) -> Optional[float]:
    fx, fy = ox - cx, oy - cy
    c = fx * fx + fy * fy - r * r
    if c <= 0.0:
        return 0.0
    b = fx * dx + fy * dy
    disc = b * b - c
    if disc < 0.0:
        return None
    t = -b - math.sqrt(disc)
    return t if t >= 0.0 else None


def raycast_obstacle(track: Track, pose, max_range: float, t: float) -> Optional[float]:
    """Range from the ultrasonic mount to the nearest active obstacle.

    The beam is three rays: boresight and +-7.5 degrees.  Returns ``None`` when
    nothing is hit within ``max_range``.
    """
    if not 0 < max_range <= 4.0:
        raise ValueError(f"max_range must be in (0, 4.0] m, got {max_range}")
    if not track.obstacles:
        return None
    u = pose.geometry.ultrasonic_forward_offset
    h = pose.heading
    ox, oy = pose.x + u * math.cos(h), pose.y + u * math.sin(h)
    best = None
    for ray in (h, h + CONE_HALF_ANGLE, h - CONE_HALF_ANGLE):
        dx, dy = math.cos(ray), math.sin(ray)
        for ob in track.obstacles:
            if not ob.active(t):
                continue
            hit = _ray_circle(ox, oy, dx, dy, ob.center[0], ob.center[1], ob.radius)
            if hit is not None and hit <= max_range and (best is None or hit < best):
                best = hit
    return best


# --- track file format -----------------------------------------------------

_PI_EXPR = re.compile(r"^([+-]?)(\d+(?:\.\d*)?\*)?pi(?:/(\d+(?:\.\d*)?))?$")


def _number(token: str, line: int, col: int) -> float:
    try:
        return float(token)
    except ValueError:
        pass
    m = _PI_EXPR.match(token)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        k = float(m.group(2)[:-1]) if m.group(2) else 1.0
        div = float(m.group(3)) if m.group(3) else 1.0
        return sign * k * math.pi / div
    raise TrackParseError(f"expected a number, got {token!r}", line, col)


def _tokens(text: str):
    for m in re.finditer(r"\S+", text):
        yield m.group(0), m.start() + 1


def parse_track(text: str, *, min_radius: float = MIN_ARC_RADIUS) -> Track:
    """Parse the line-oriented track format.

    Directives::

        line_width 0.02
        reflect line 0.08 surface 0.92
        straight x0 y0 x1 y1
        arc cx cy r a0 a1 ccw|cw
        obstacle x y r [t0 t1]
        edge_blend on|off

    ``#`` starts a comment.  Angles also accept ``pi`` forms such as ``-pi/2``.
    """
    segments = []
    obstacles = []
    opts = {"line_width": 0.02, "reflect_line": 0.08, "reflect_surface": 0.92,
            "edge_blend": False}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks = list(_tokens(body))
        if not toks:
            continue
        word, wcol = toks[0]
        args = toks[1:]

        def nums(count, optional=0):
            if not count <= len(args) <= count + optional:
                want = f"{count}" if not optional else f"{count} or {count + optional}"
                col = args[-1][1] if args else wcol
                raise TrackParseError(f"{word} takes {want} arguments, got {len(args)}",
                                      lineno, col)
            return [_number(tok, lineno, col) for tok, col in args]

        if word == "line_width":
            opts["line_width"] = nums(1)[0]
        elif word == "reflect":
            if len(args) != 4 or args[0][0] != "line" or args[2][0] != "surface":
                raise TrackParseError("expected: reflect line <r> surface <r>", lineno, wcol)
            opts["reflect_line"] = _number(args[1][0], lineno, args[1][1])
            opts["reflect_surface"] = _number(args[3][0], lineno, args[3][1])
        elif word == "straight":
            x0, y0, x1, y1 = nums(4)
            segments.append(Straight((x0, y0), (x1, y1)))
        elif word == "arc":
            if len(args) != 6:
                raise TrackParseError(f"arc takes 6 arguments, got {len(args)}", lineno, wcol)
            direction, dcol = args[5]
            if direction not in ("ccw", "cw"):
                raise TrackParseError(f"arc direction must be ccw or cw, got {direction!r}",
                                      lineno, dcol)
            cx, cy, r, a0, a1 = [_number(tok, lineno, col) for tok, col in args[:5]]
            if (a1 > a0) != (direction == "ccw") or a1 == a0:
                raise TrackParseError(
                    f"arc sweep {a0}->{a1} does not match direction {direction}", lineno, dcol)
            if not r > 0:
                raise TrackInvariantError(f"segments[{len(segments)}].radius", "must be > 0")
            segments.append(Arc((cx, cy), r, a0, a1))
        elif word == "obstacle":
            vals = nums(3, optional=2)
            if len(vals) == 4:
                raise TrackParseError("obstacle time window needs both t0 and t1",
                                      lineno, args[-1][1])
            t0, t1 = (vals[3], vals[4]) if len(vals) == 5 else (None, None)
            obstacles.append(Obstacle((vals[0], vals[1]), vals[2], t0, t1))
        elif word == "edge_blend":
            if len(args) != 1 or args[0][0] not in ("on", "off"):
                raise TrackParseError("expected: edge_blend on|off", lineno, wcol)
            opts["edge_blend"] = args[0][0] == "on"
        else:
            raise TrackParseError(f"unknown directive {word!r}", lineno, wcol)
    return Track(tuple(segments), obstacles=tuple(obstacles), min_radius=min_radius, **opts)


BUNDLED = ("evaluation", "curves", "tuning", "straight", "oval")


def load_track(source: Union[str, Path], *, min_radius: float = MIN_ARC_RADIUS) -> Track:
    """Load a track from a bundled name, a file path, or the document text itself."""
    if isinstance(source, Path):
        return parse_track(source.read_text(), min_radius=min_radius)
    if source in BUNDLED:
        text = resources.files("lfl.tracks").joinpath(f"{source}.trk").read_text()
        return parse_track(text, min_radius=min_radius)
    if "\n" not in source and Path(source).is_file():
        return parse_track(Path(source).read_text(), min_radius=min_radius)
    return parse_track(source, min_radius=min_radius)


def dumps_track(track: Track) -> str:
    """Serialize a track back into the text format (full float precision)."""
    out = [f"line_width {track.line_width!r}",
           f"reflect line {track.reflect_line!r} surface {track.reflect_surface!r}"]
    if track.edge_blend:
        out.append("edge_blend on")
    for seg in track.segments:
        if isinstance(seg, Straight):
            out.append("straight {!r} {!r} {!r} {!r}".format(*seg.start, *seg.end))
        else:
            out.append("arc {!r} {!r} {!r} {!r} {!r} {}".format(
                *seg.center, seg.radius, seg.a0, seg.a1, "ccw" if seg.ccw else "cw"))
    for ob in track.obstacles:
        extra = "" if ob.present_from is None else f" {ob.present_from!r} {ob.present_until!r}"
        out.append("obstacle {!r} {!r} {!r}{}".format(*ob.center, ob.radius, extra))
    return "\n".join(out) + "\n"
