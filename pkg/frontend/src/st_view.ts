/**
 * Anaglyph dot-stimulus renderer.
 *
 * The payload carries two dot layers in texture coordinates with every
 * disparity shift already applied server-side; the client's whole job is to
 * composite them faithfully: red channel from the first layer, green+blue
 * from the second, additive triangle splats on a black background, texture
 * centered on the display, grays through the gamma LUT.
 */

import type { DisplayProfile, TrialPayload, WireStimulus } from "./api.js";
import type { GammaLut } from "./lut.js";
import type { PixelSurface } from "./surface.js";

/** Physical side length of each dot texture, mm. */
export const TEXTURE_SIZE_MM = 86;

export class StimulusFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "StimulusFormatError";
  }
}

function requireLayers(stimulus: WireStimulus): Map<string, number[][]> {
  if (!stimulus || !Array.isArray(stimulus.layers)) {
    throw new StimulusFormatError("stimulus payload has no layers array");
  }
  const byChannel = new Map<string, number[][]>();
  for (const layer of stimulus.layers) {
    if (!layer || typeof layer.channel !== "string" || !Array.isArray(layer.dots)) {
      throw new StimulusFormatError("stimulus layer missing channel or dots");
    }
    for (const dot of layer.dots) {
      if (!Array.isArray(dot) || dot.length < 3 || dot.slice(0, 3).some((v) => typeof v !== "number" || !Number.isFinite(v))) {
        throw new StimulusFormatError(`malformed dot in ${layer.channel} layer`);
      }
    }
    byChannel.set(layer.channel, layer.dots);
  }
  for (const channel of ["red", "cyan"]) {
    if (!byChannel.has(channel)) {
      throw new StimulusFormatError(`stimulus has no ${channel} layer`);
    }
  }
  return byChannel;
}

/**
 * Accumulate one layer into a per-pixel intensity field using separable
 * triangle splats (peak 1 at the dot center, reach = ceil(radius)).
 */
function splatLayer(
  field: Float64Array,
  width: number,
  height: number,
  dots: number[][],
  offsetX: number,
  offsetY: number,
  radius: number,
): void {
  const reach = Math.ceil(radius);
  const span = 2 * reach + 1;
  for (const dot of dots) {
    const x = dot[0] + offsetX;
    const y = dot[1] + offsetY;
    const intensity = dot[2];
    const px0 = Math.floor(x - radius);
    const py0 = Math.floor(y - radius);
    for (let j = 0; j < span; j++) {
      const yy = py0 + j;
      if (yy < 0 || yy >= height) continue;
      const wy = Math.max(0, 1 - Math.abs(yy - y) / radius);
      if (wy === 0) continue;
      for (let i = 0; i < span; i++) {
        const xx = px0 + i;
        if (xx < 0 || xx >= width) continue;
        const wx = Math.max(0, 1 - Math.abs(xx - x) / radius);
        const w = wx * wy * intensity;
        if (w > 0) field[yy * width + xx] += w;
      }
    }
  }
}

export function renderStimulus(
  surface: PixelSurface,
  payload: TrialPayload,
  lut: GammaLut,
  profile: DisplayProfile,
): void {
  if (!payload || typeof payload.dot_radius_px !== "number" || !(payload.dot_radius_px > 0)) {
    throw new StimulusFormatError(`dot_radius_px must be positive, got ${payload?.dot_radius_px}`);
  }
  const layers = requireLayers(payload.stimulus);

  const width = surface.width;
  const height = surface.height;
  const pitchMm = profile.width_mm / profile.h_px;
  const sizePx = TEXTURE_SIZE_MM / pitchMm;
  const ox = (width - sizePx) / 2;
  const oy = (height - sizePx) / 2;
  const radius = payload.dot_radius_px;

  const red = new Float64Array(width * height);
  const cyan = new Float64Array(width * height);
  splatLayer(red, width, height, layers.get("red")!, ox, oy, radius);
  splatLayer(cyan, width, height, layers.get("cyan")!, ox, oy, radius);

  const d = surface.data;
  for (let k = 0, i = 0; k < red.length; k++, i += 4) {
    d[i] = lut.byteFor(Math.min(1, red[k]));
    const c = lut.byteFor(Math.min(1, cyan[k]));
    d[i + 1] = c;
    d[i + 2] = c;
    d[i + 3] = 255;
  }
}

/** Summed channel bytes over the surface — the readback balance metric. */
export function channelEnergy(surface: PixelSurface): { red: number; cyan: number } {
  const d = surface.data;
  let red = 0;
  let cyan = 0;
  for (let i = 0; i < d.length; i += 4) {
    red += d[i];
    cyan += d[i + 1];
  }
  return { red, cyan };
}
