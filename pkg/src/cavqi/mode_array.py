"""Spatial-mode array of the ring cavity and its paraxial ray-optics model.

The cavity carries six TEM00 modes C1..C6 laid out on a 3x2 grid (rows
along y, columns along x).  Flat mirrors reflect the array in the plane of
the ring, swapping the two columns; a confocal lens pair images with
magnification -1 and therefore point-inverts the grid.  Each spatial mode is
split by the beam displacers into an H and a V arm, so the interferometer
section holds 12 arms that all cross at the atomic focus z = 0.

Transverse coordinates follow the grid: column 0 sits at x = -pitch/2,
column 1 at x = +pitch/2, row 0 at y = +pitch, row 2 at y = -pitch.
Reflections are handled in the unfolded frame, i.e. a flat mirror maps
(x, theta_x) -> (-x, -theta_x) and leaves y alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, NonReproducingCavity, ParaxialViolation

LABELS = ("C1", "C2", "C3", "C4", "C5", "C6")
POLARIZATIONS = ("H", "V")
DEFAULT_PARAXIAL_BOUND = 0.01  # rad
PATH_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ModeArray:
    grid: tuple[tuple[str, str], ...]

    def __post_init__(self):
        grid = tuple(tuple(row) for row in self.grid)
        object.__setattr__(self, "grid", grid)
        if len(grid) != 3 or any(len(row) != 2 for row in grid):
            raise DomainError(f"mode array must be 3x2, got {grid!r}")
        if sorted(label for row in grid for label in row) != sorted(LABELS):
            raise DomainError(f"mode array must be a permutation of C1..C6, got {grid!r}")

    def position_of(self, label: str) -> tuple[int, int]:
        for r, row in enumerate(self.grid):
            for c, item in enumerate(row):
                if item == label:
                    return r, c
        raise KeyError(label)

    def labels(self) -> tuple[str, ...]:
        return tuple(label for row in self.grid for label in row)

    def __str__(self):
        return "\n".join(" ".join(row) for row in self.grid)


# cross-section just after the output coupler
A_1D = ModeArray((("C1", "C2"), ("C3", "C4"), ("C5", "C6")))


def apply_mirror(array: ModeArray) -> ModeArray:
    """In-plane reflection: swap the two columns."""
    return ModeArray(tuple((row[1], row[0]) for row in array.grid))


def apply_confocal(array: ModeArray) -> ModeArray:
    """Magnification -1 imaging: reverse both row and column order."""
    return ModeArray(tuple((row[1], row[0]) for row in reversed(array.grid)))


def cell_position(row: int, col: int, pitch: float) -> tuple[float, float]:
    return (col - 0.5) * pitch, (1 - row) * pitch


# ---------------------------------------------------------------------------
# rays and elements


@dataclass(frozen=True)
class Ray:
    x: float
    y: float
    theta_x: float
    theta_y: float
    path_length: float = 0.0
    pol: str | None = None
    label: str | None = None

    def check(self, bound: float = DEFAULT_PARAXIAL_BOUND, where: str = ""):
        if abs(self.theta_x) > bound or abs(self.theta_y) > bound:
            raise ParaxialViolation(
                f"ray angle ({self.theta_x:.3g}, {self.theta_y:.3g}) rad exceeds "
                f"paraxial bound {bound} rad{where}"
            )


def _lens(ray: Ray, f: float) -> Ray:
    # thin-lens optical thickness: -(x^2 + y^2) / 2f keeps Fermat's principle
    r2 = ray.x * ray.x + ray.y * ray.y
    return replace(
        ray,
        theta_x=ray.theta_x - ray.x / f,
        theta_y=ray.theta_y - ray.y / f,
        path_length=ray.path_length - r2 / (2.0 * f),
    )


def _propagate(ray: Ray, length: float) -> Ray:
    t2 = ray.theta_x * ray.theta_x + ray.theta_y * ray.theta_y
    return replace(
        ray,
        x=ray.x + ray.theta_x * length,
        y=ray.y + ray.theta_y * length,
        path_length=ray.path_length + length * (1.0 + 0.5 * t2),
    )


@dataclass(frozen=True)
class FreeSpace:
    length: float
    kind = "FreeSpace"

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError(f"FreeSpace length must be positive, got {self.length}")

    def act(self, array: ModeArray) -> ModeArray:
        return array

    def trace(self, ray: Ray) -> Ray:
        return _propagate(ray, self.length)


@dataclass(frozen=True)
class FlatMirror:
    name: str = ""
    kind = "FlatMirror"

    def act(self, array: ModeArray) -> ModeArray:
        return apply_mirror(array)

    def trace(self, ray: Ray) -> Ray:
        return replace(ray, x=-ray.x, theta_x=-ray.theta_x)


@dataclass(frozen=True)
class ThinLens:
    """A single lens; only meaningful for ray tracing (no grid action alone)."""

    focal_length: float
    name: str = ""
    kind = "ThinLens"

    def __post_init__(self):
        if not self.focal_length > 0:
            raise DomainError(f"focal length must be positive, got {self.focal_length}")

    def act(self, array: ModeArray) -> ModeArray:
        raise DomainError("a lone lens has no mode-array action; use ConfocalPair")

    def trace(self, ray: Ray) -> Ray:
        return _lens(ray, self.focal_length)


@dataclass(frozen=True)
class ConfocalPair:
    """Two lenses separated by f1 + f2.

    ``fold`` marks a flat mirror at the shared focus (L3/HR3/L4).  It is
    traced in the unfolded frame, so the pair still point-inverts the array.
    """

    f1: float
    f2: float
    spacing: float | None = None
    fold: bool = False
    name: str = ""
    kind = "ConfocalPair"

    def __post_init__(self):
        if not (self.f1 > 0 and self.f2 > 0):
            raise DomainError("confocal focal lengths must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.f1 + self.f2)
        elif not math.isclose(self.spacing, self.f1 + self.f2, rel_tol=1e-12, abs_tol=0.0):
            raise DomainError(
                f"confocal spacing {self.spacing} differs from f1 + f2 = {self.f1 + self.f2}"
            )

    def act(self, array: ModeArray) -> ModeArray:
        return apply_confocal(array)

    def trace(self, ray: Ray) -> Ray:
        ray = _lens(ray, self.f1)
        ray = _propagate(ray, self.spacing)
        return _lens(ray, self.f2)


def _arm_offset(pol: str | None, displacement: float) -> float:
    if pol is None:
        return 0.0
    return 0.5 * displacement if pol == "H" else -0.5 * displacement


@dataclass(frozen=True)
class BeamDisplacerSplit:
    """Separates H and V into parallel arms offset by +-displacement/2 in x.

    The sigma-minus rejection is treated as a perfect filter, and the two arms
    are taken as phase-compensated, so no optical path is added.
    """

    displacement: float = 0.0
    kind = "BeamDisplacerSplit"

    def act(self, array: ModeArray) -> ModeArray:
        return array

    def trace(self, ray: Ray) -> Ray:
        return replace(ray, x=ray.x + _arm_offset(ray.pol, self.displacement))


@dataclass(frozen=True)
class BeamDisplacerCombine:
    displacement: float = 0.0
    kind = "BeamDisplacerCombine"

    def act(self, array: ModeArray) -> ModeArray:
        return array

    def trace(self, ray: Ray) -> Ray:
        return replace(ray, x=ray.x - _arm_offset(ray.pol, self.displacement))


OpticalElement = FreeSpace | FlatMirror | ThinLens | ConfocalPair | BeamDisplacerSplit | BeamDisplacerCombine

_ELEMENT_TYPES = {
    cls.kind: cls
    for cls in (FreeSpace, FlatMirror, ThinLens, ConfocalPair, BeamDisplacerSplit, BeamDisplacerCombine)
}


def element_from_dict(spec: dict) -> OpticalElement:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _ELEMENT_TYPES:
        raise DomainError(f"unknown optical element kind {kind!r}")
    return _ELEMENT_TYPES[kind](**spec)


def element_to_dict(element: OpticalElement) -> dict:
    out = {"kind": element.kind}
    for name in element.__dataclass_fields__:
        out[name] = getattr(element, name)
    return out


# ---------------------------------------------------------------------------
# operations


def round_trip(array: ModeArray, elements: Sequence[OpticalElement]) -> ModeArray:
    """Compose the grid actions of ``elements``; the cavity must reproduce the array."""
    out = array
    for element in elements:
        out = element.act(out)
    if out != array:
        raise NonReproducingCavity(
            f"element sequence maps\n{array}\nonto\n{out}\ninstead of itself"
        )
    return out


def trace_ray(ray: Ray, elements: Sequence[OpticalElement], bound: float = DEFAULT_PARAXIAL_BOUND) -> Ray:
    ray.check(bound, " at launch")
    for i, element in enumerate(elements):
        ray = element.trace(ray)
        ray.check(bound, f" after element {i} ({element.kind})")
    return ray


@dataclass(frozen=True)
class PathReport:
    max_relative_spread: float
    per_mode_path_length: tuple[float, ...]
    labels: tuple[str, ...]
    tolerance: float = PATH_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_relative_spread <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "maxRelativeSpread": self.max_relative_spread,
            "perModePathLength": list(self.per_mode_path_length),
            "labels": list(self.labels),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }

    def to_text(self) -> str:
        lines = [f"{label:>5s}  {length:.15f} m" for label, length in zip(self.labels, self.per_mode_path_length)]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"max relative spread {self.max_relative_spread:.3e} (tolerance {self.tolerance:.0e}): {verdict}"
        )
        return "\n".join(lines)


def check_path_equality(
    geometry: Sequence[OpticalElement],
    launch_points: Sequence[Ray],
    bound: float = DEFAULT_PARAXIAL_BOUND,
) -> PathReport:
    """Trace every launch ray one round trip from the common focus and compare path lengths."""
    if not launch_points:
        raise DomainError("need at least one launch ray")
    for ray in launch_points:
        if ray.x != 0.0 or ray.y != 0.0:
            raise DomainError("launch rays must start at the common focus (x = y = 0)")
    lengths = np.array([trace_ray(ray, geometry, bound).path_length for ray in launch_points])
    if not lengths.mean() > 0:
        raise DomainError("element sequence has no optical length")
    spread = float((lengths.max() - lengths.min()) / lengths.mean())
    labels = tuple(ray.label or f"ray{i}" for i, ray in enumerate(launch_points))
    return PathReport(spread, tuple(float(v) for v in lengths), labels)


# ---------------------------------------------------------------------------
# the cavity of the experiment


@dataclass(frozen=True)
class CavityGeometry:
    """Concrete layout parameters (metres, radians).

    None of these are measured values; the focal length and arm lengths are
    configuration defaults.  The array pitch defaults to f * tan(theta_R) so
    that adjacent modes cross at the focus at theta_R.
    """

    focal_length: float = 0.150
    mode_pitch: float | None = None
    bd_displacement: float = 1.0e-3
    arm_lengths: tuple[float, ...] = (0.05, 0.10, 0.10, 0.30, 0.10, 0.05)
    theta_r_deg: float = 0.21
    divergence_deg: float = 0.05
    paraxial_bound: float = DEFAULT_PARAXIAL_BOUND
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "arm_lengths", tuple(float(v) for v in self.arm_lengths))
        if self.mode_pitch is None:
            object.__setattr__(
                self, "mode_pitch", self.focal_length * math.tan(math.radians(self.theta_r_deg))
            )
        problems = []
        if not self.focal_length > 0:
            problems.append("focal_length must be positive")
        if not self.mode_pitch > 0:
            problems.append("mode_pitch must be positive")
        if self.bd_displacement < 0:
            problems.append("bd_displacement must be non-negative")
        if len(self.arm_lengths) != 6 or any(v <= 0 for v in self.arm_lengths):
            problems.append("arm_lengths must be six positive lengths")
        if problems:
            raise DomainError("; ".join(problems))


def default_round_trip_elements(geom: CavityGeometry | None = None) -> list[OpticalElement]:
    """Grid-level round trip starting at cross-section d (just after OC).

    HR1 swap, BD1 split, L1/L2 inversion, BD2 combine, L3/HR3/L4 inversion,
    and the return leg through HR2/OC, which restores the column order.
    """
    geom = geom or CavityGeometry()
    f = geom.focal_length
    a = geom.arm_lengths
    return [
        FreeSpace(a[3]),
        FlatMirror("HR1"),
        FreeSpace(a[4]),
        BeamDisplacerSplit(geom.bd_displacement),
        FreeSpace(a[5]),
        ConfocalPair(f, f, name="L1/L2"),
        FreeSpace(a[0]),
        BeamDisplacerCombine(geom.bd_displacement),
        FreeSpace(a[1]),
        ConfocalPair(f, f, fold=True, name="L3/HR3/L4"),
        FreeSpace(a[2]),
        FlatMirror("OC"),
    ]


def default_trace_elements(geom: CavityGeometry | None = None) -> list[OpticalElement]:
    """Focus-to-focus round trip used for the optical path comparison.

    Starts at the atoms (midway inside L1/L2) and ends there, so L2 opens the
    sequence and L1 closes it.
    """
    geom = geom or CavityGeometry()
    f = geom.focal_length
    a = geom.arm_lengths
    return [
        FreeSpace(f),
        ThinLens(f, "L2"),
        FreeSpace(a[0]),
        BeamDisplacerCombine(geom.bd_displacement),
        FreeSpace(a[1]),
        ConfocalPair(f, f, fold=True, name="L3/HR3/L4"),
        FreeSpace(a[2]),
        FlatMirror("OC"),
        FreeSpace(a[3]),
        FlatMirror("HR1"),
        FreeSpace(a[4]),
        BeamDisplacerSplit(geom.bd_displacement),
        FreeSpace(a[5]),
        ThinLens(f, "L1"),
        FreeSpace(f),
    ]


def launch_rays(geom: CavityGeometry | None = None, array: ModeArray = A_1D) -> list[Ray]:
    """The 12 arms leaving the focus toward L2, one per (spatial mode, polarization)."""
    geom = geom or CavityGeometry()
    f = geom.focal_length
    # L1/L2 inverts the grid, so at L2 the array is the inverted cross-section
    at_l2 = apply_confocal(apply_mirror(array))
    rays = []
    for label in LABELS:
        r, c = at_l2.position_of(label)
        x, y = cell_position(r, c, geom.mode_pitch)
        for pol in POLARIZATIONS:
            arm_x = x + _arm_offset(pol, geom.bd_displacement)
            rays.append(Ray(0.0, 0.0, arm_x / f, y / f, 0.0, pol, f"{label}{pol}"))
    return rays


# ---------------------------------------------------------------------------
# phase matching


@dataclass(frozen=True)
class WaveVectorSet:
    k_w: np.ndarray
    k_r: np.ndarray
    k_S: np.ndarray
    k_aS: np.ndarray
    k_M: np.ndarray


def phase_match(k_w, k_S, k_r) -> WaveVectorSet:
    """Anti-Stokes wave vector k_aS = k_w - k_S + k_r and spin-wave vector k_M = k_w - k_S."""
    k_w, k_S, k_r = (np.asarray(v, dtype=float) for v in (k_w, k_S, k_r))
    for name, v in (("k_w", k_w), ("k_S", k_S), ("k_r", k_r)):
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise DomainError(f"{name} must be a finite 3-vector")
    k_M = k_w - k_S
    return WaveVectorSet(k_w, k_r, k_S, k_M + k_r, k_M)
