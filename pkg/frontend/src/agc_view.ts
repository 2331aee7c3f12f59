/**
 * Calibration scene: three adjacent textures on a white background.
 *
 * The side textures present alternating one-pixel lines of the trial's high
 * and low intensities; the middle texture is a uniform patch at the
 * adjustable intensity. Every gray (background included) passes through the
 * active gamma LUT.
 */

import type { AgcView, DisplayProfile } from "./api.js";
import type { GammaLut } from "./lut.js";
import type { PixelSurface } from "./surface.js";

/** Angular size of the middle patch, degrees of visual angle. */
export const MIDDLE_TEXTURE_EXTENT_DEG = 5.72;

export interface AgcLayout {
  /** Width of each striped side texture, px. */
  sideWidthPx: number;
  /** Number of alternating lines in a side texture. */
  lineCount: number;
  /** Height of each line, px. */
  lineWidthPx: number;
  /** Side length of the square middle patch, px. */
  middleSizePx: number;
  /** Horizontal gap between adjacent textures, px. */
  gapPx: number;
}

/**
 * Layout derived from the display profile: the middle patch subtends
 * MIDDLE_TEXTURE_EXTENT_DEG at the viewing distance; side textures are as
 * tall as their 128 one-pixel lines.
 */
export function defaultAgcLayout(profile: DisplayProfile): AgcLayout {
  const pitchMm = profile.width_mm / profile.h_px;
  const extentMm = 2 * profile.distance_mm * Math.tan(((MIDDLE_TEXTURE_EXTENT_DEG / 2) * Math.PI) / 180);
  return {
    sideWidthPx: 128,
    lineCount: 128,
    lineWidthPx: 1,
    middleSizePx: Math.round(extentMm / pitchMm),
    gapPx: 16,
  };
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface AgcRects {
  left: Rect;
  middle: Rect;
  right: Rect;
}

/** Positions of the three textures, centered as a group on the surface. */
export function agcRects(surfaceWidth: number, surfaceHeight: number, layout: AgcLayout): AgcRects {
  const sideH = layout.lineCount * layout.lineWidthPx;
  const totalW = 2 * layout.sideWidthPx + layout.middleSizePx + 2 * layout.gapPx;
  const x0 = Math.floor((surfaceWidth - totalW) / 2);
  const sideY = Math.floor((surfaceHeight - sideH) / 2);
  const midY = Math.floor((surfaceHeight - layout.middleSizePx) / 2);
  const left: Rect = { x: x0, y: sideY, w: layout.sideWidthPx, h: sideH };
  const middle: Rect = {
    x: x0 + layout.sideWidthPx + layout.gapPx,
    y: midY,
    w: layout.middleSizePx,
    h: layout.middleSizePx,
  };
  const right: Rect = {
    x: middle.x + layout.middleSizePx + layout.gapPx,
    y: sideY,
    w: layout.sideWidthPx,
    h: sideH,
  };
  return { left, middle, right };
}

/** Center pixel of the middle patch — the canonical readback probe. */
export function middleProbe(surface: PixelSurface, layout: AgcLayout): { x: number; y: number } {
  const { middle } = agcRects(surface.width, surface.height, layout);
  return { x: middle.x + Math.floor(middle.w / 2), y: middle.y + Math.floor(middle.h / 2) };
}

function drawStriped(surface: PixelSurface, rect: Rect, view: AgcView, layout: AgcLayout, lut: GammaLut): void {
  const high = lut.byteFor(view.i_high);
  const low = lut.byteFor(view.i_low);
  for (let line = 0; line < layout.lineCount; line++) {
    const v = line % 2 === 0 ? high : low;
    surface.fillRect(rect.x, rect.y + line * layout.lineWidthPx, rect.w, layout.lineWidthPx, v, v, v);
  }
}

export function renderAgcView(surface: PixelSurface, view: AgcView, lut: GammaLut, layout: AgcLayout): void {
  const white = lut.byteFor(1.0);
  surface.clear(white, white, white);
  const rects = agcRects(surface.width, surface.height, layout);
  drawStriped(surface, rects.left, view, layout, lut);
  drawStriped(surface, rects.right, view, layout, lut);
  const mid = lut.byteFor(view.i_current);
  surface.fillRect(rects.middle.x, rects.middle.y, rects.middle.w, rects.middle.h, mid, mid, mid);
}
