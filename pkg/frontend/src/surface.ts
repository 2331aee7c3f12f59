/**
 * CPU-side RGBA pixel buffer.
 *
 * All scene rendering happens here so tests can read pixels back directly;
 * the browser entry point blits the finished buffer to a canvas in one call.
 */

export class PixelSurface {
  readonly width: number;
  readonly height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  readonly data: Uint8ClampedArray<ArrayBuffer>;

  constructor(width: number, height: number) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
      throw new RangeError(`surface dimensions must be positive integers, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  }

  /** Fill the whole surface with an opaque color. */
  clear(r: number, g: number, b: number): void {
    const d = this.data;
    for (let i = 0; i < d.length; i += 4) {
      d[i] = r;
      d[i + 1] = g;
      d[i + 2] = b;
      d[i + 3] = 255;
    }
  }

  /** Fill an axis-aligned rectangle, clipped to the surface. */
  fillRect(x: number, y: number, w: number, h: number, r: number, g: number, b: number): void {
    const x0 = Math.max(0, Math.floor(x));
    const y0 = Math.max(0, Math.floor(y));
    const x1 = Math.min(this.width, Math.floor(x + w));
    const y1 = Math.min(this.height, Math.floor(y + h));
    const d = this.data;
    for (let yy = y0; yy < y1; yy++) {
      let i = (yy * this.width + x0) * 4;
      for (let xx = x0; xx < x1; xx++, i += 4) {
        d[i] = r;
        d[i + 1] = g;
        d[i + 2] = b;
        d[i + 3] = 255;
      }
    }
  }

  /** Read one pixel as [r, g, b, a]. */
  pixel(x: number, y: number): [number, number, number, number] {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      throw new RangeError(`pixel (${x}, ${y}) outside ${this.width}x${this.height} surface`);
    }
    const i = (y * this.width + x) * 4;
    const d = this.data;
    return [d[i], d[i + 1], d[i + 2], d[i + 3]];
  }

  /** Copy the buffer to a 2D canvas context (browser only). */
  blitTo(ctx: CanvasRenderingContext2D): void {
    ctx.putImageData(new ImageData(this.data, this.width, this.height), 0, 0);
  }
}
