"""Display geometry: conversions between pixel offsets, physical extents and
visual angles for a given display profile.

All disparities elsewhere in the package are expressed through these
conversions, using the exact two-sided arctangent form (not the small-angle
approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

ARCSEC_PER_RADIAN = 3600.0 * 180.0 / math.pi


class GeometryError(ValueError):
    """Invalid display profile or out-of-domain conversion argument."""


@dataclass(frozen=True)
class DisplayProfile:
    """Physical/display geometry enabling pixel <-> arc-second conversion."""

    horizontal_resolution_px: int
    physical_width_mm: float
    viewing_distance_mm: float
    vertical_resolution_px: int

    def __post_init__(self):
        for name in (
            "horizontal_resolution_px",
            "physical_width_mm",
            "viewing_distance_mm",
            "vertical_resolution_px",
        ):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise GeometryError(f"{name} must be finite and positive, got {value!r}")

    @property
    def pixel_pitch_mm(self) -> float:
        return self.physical_width_mm / self.horizontal_resolution_px

    def to_json(self) -> dict:
        return {
            "h_px": self.horizontal_resolution_px,
            "v_px": self.vertical_resolution_px,
            "width_mm": self.physical_width_mm,
            "distance_mm": self.viewing_distance_mm,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DisplayProfile":
        try:
            return cls(
                horizontal_resolution_px=int(payload["h_px"]),
                physical_width_mm=float(payload["width_mm"]),
                viewing_distance_mm=float(payload["distance_mm"]),
                vertical_resolution_px=int(payload["v_px"]),
            )
        except KeyError as exc:
            raise GeometryError(f"display profile payload missing key {exc}") from exc


# 800x600 presentation over a 25.8 cm wide panel viewed at 40 cm; effective
# pitch 0.3225 mm/px.
DEFAULT_PROFILE = DisplayProfile(
    horizontal_resolution_px=800,
    physical_width_mm=258.0,
    viewing_distance_mm=400.0,
    vertical_resolution_px=600,
)


def pixels_to_arcsec(offset_px: float, profile: DisplayProfile) -> float:
    """Visual angle in arc-seconds subtended by a horizontal pixel offset."""
    if not math.isfinite(offset_px) or offset_px < 0:
        raise GeometryError(f"offset must be finite and >= 0, got {offset_px!r}")
    extent_mm = offset_px * profile.pixel_pitch_mm
    angle_rad = 2.0 * math.atan(extent_mm / (2.0 * profile.viewing_distance_mm))
    return angle_rad * ARCSEC_PER_RADIAN


def arcsec_to_pixels(arcsec: float, profile: DisplayProfile) -> float:
    """Pixel offset subtending the given disparity; inverse of pixels_to_arcsec."""
    if not math.isfinite(arcsec) or arcsec < 0:
        raise GeometryError(f"disparity must be finite and >= 0, got {arcsec!r}")
    angle_rad = arcsec / ARCSEC_PER_RADIAN
    extent_mm = 2.0 * profile.viewing_distance_mm * math.tan(angle_rad / 2.0)
    return extent_mm / profile.pixel_pitch_mm


def extent_to_visual_angle(extent_mm: float, profile: DisplayProfile) -> float:
    """Visual angle in degrees subtended by a physical extent on the screen."""
    if not math.isfinite(extent_mm) or extent_mm < 0:
        raise GeometryError(f"extent must be finite and >= 0, got {extent_mm!r}")
    return math.degrees(2.0 * math.atan(extent_mm / (2.0 * profile.viewing_distance_mm)))


def visual_angle_to_extent(angle_deg: float, profile: DisplayProfile) -> float:
    """Physical extent (mm) subtending the given visual angle; inverse of
    extent_to_visual_angle. Used to size on-screen textures from angular specs."""
    if not math.isfinite(angle_deg) or angle_deg < 0:
        raise GeometryError(f"angle must be finite and >= 0, got {angle_deg!r}")
    return 2.0 * profile.viewing_distance_mm * math.tan(math.radians(angle_deg) / 2.0)
