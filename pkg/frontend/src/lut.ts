/**
 * Client-side gamma lookup table.
 *
 * The session service fits a display gamma during calibration and hands the
 * client a 256-entry normalized output table; every gray the UI draws from
 * then on passes through this table. It is the only transformation the client
 * applies to intensities.
 */

const TABLE_SIZE = 256;

export class LutFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "LutFormatError";
  }
}

export class GammaLut {
  /** Normalized outputs in [0, 1], indexed by input gray 0..255. */
  readonly entries: Float64Array;
  /** Output bytes: round(entries * 255). */
  readonly bytes: Uint8Array;

  private constructor(entries: Float64Array) {
    this.entries = entries;
    this.bytes = new Uint8Array(TABLE_SIZE);
    for (let g = 0; g < TABLE_SIZE; g++) {
      this.bytes[g] = Math.round(entries[g] * 255);
    }
  }

  static identity(): GammaLut {
    const entries = new Float64Array(TABLE_SIZE);
    for (let g = 0; g < TABLE_SIZE; g++) entries[g] = g / 255;
    return new GammaLut(entries);
  }

  /** Build from the server's table; validates length and range. */
  static fromEntries(values: ArrayLike<number>): GammaLut {
    if (values.length !== TABLE_SIZE) {
      throw new LutFormatError(`LUT must have ${TABLE_SIZE} entries, got ${values.length}`);
    }
    const entries = new Float64Array(TABLE_SIZE);
    for (let g = 0; g < TABLE_SIZE; g++) {
      const v = values[g];
      if (typeof v !== "number" || !Number.isFinite(v) || v < 0 || v > 1) {
        throw new LutFormatError(`LUT entry ${g} out of range: ${v}`);
      }
      entries[g] = v;
    }
    return new GammaLut(entries);
  }

  /** Rebuild the table from a fitted gamma: entry[g] = (g/255)^gamma. */
  static fromGamma(gamma: number): GammaLut {
    if (!Number.isFinite(gamma) || gamma <= 0) {
      throw new LutFormatError(`gamma must be finite and positive, got ${gamma}`);
    }
    const entries = new Float64Array(TABLE_SIZE);
    for (let g = 0; g < TABLE_SIZE; g++) {
      entries[g] = Math.pow(g / 255, gamma);
    }
    return new GammaLut(entries);
  }

  /** Output byte for a normalized intensity in [0, 1] (clamped). */
  byteFor(intensity: number): number {
    const clamped = Math.min(1, Math.max(0, intensity));
    return this.bytes[Math.round(clamped * 255)];
  }
}
