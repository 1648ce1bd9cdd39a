import type { LabelRun } from './types.js';
import { encodeLabelRuns } from './rle.js';

/**
 * Mask-constrained paint model. Pixels are image-flat indices; anything
 * outside the unit mask is clipped, so the submitted payload can never
 * fabricate labels beyond the unit.
 */
export class Painter {
  readonly maskOrder: number[]; // sorted, row-major: the payload order
  private readonly inMask: Set<number>;
  private painted = new Map<number, number>();
  private undoStack: Array<Array<[number, number | undefined]>> = [];

  constructor(maskPixels: number[]) {
    this.maskOrder = [...maskPixels].sort((a, b) => a - b);
    this.inMask = new Set(this.maskOrder);
  }

  get size(): number {
    return this.maskOrder.length;
  }

  get paintedCount(): number {
    return this.painted.size;
  }

  coverage(): number {
    return this.size === 0 ? 0 : this.painted.size / this.size;
  }

  classAt(pixel: number): number | undefined {
    return this.painted.get(pixel);
  }

  /** Apply one stroke; returns how many pixels actually changed. */
  stroke(pixels: Iterable<number>, classId: number): number {
    const entry: Array<[number, number | undefined]> = [];
    for (const p of pixels) {
      if (!this.inMask.has(p)) continue; // clip to the unit mask
      const prev = this.painted.get(p);
      if (prev === classId) continue;
      entry.push([p, prev]);
      this.painted.set(p, classId);
    }
    if (entry.length) this.undoStack.push(entry);
    return entry.length;
  }

  fill(classId: number): number {
    return this.stroke(this.maskOrder, classId);
  }

  undo(): boolean {
    const entry = this.undoStack.pop();
    if (!entry) return false;
    for (const [p, prev] of entry) {
      if (prev === undefined) this.painted.delete(p);
      else this.painted.set(p, prev);
    }
    return true;
  }

  /** Payload runs over the mask order; null until coverage is 100%. */
  toRuns(): LabelRun[] | null {
    if (this.painted.size !== this.size) return null;
    return encodeLabelRuns(this.maskOrder.map((p) => this.painted.get(p)!));
  }
}

/** Disc of image-flat indices around (row, col), clipped to the image. */
export function brushPixels(
  row: number,
  col: number,
  radius: number,
  height: number,
  width: number,
): number[] {
  const out: number[] = [];
  const r2 = radius * radius;
  const r0 = Math.max(0, Math.ceil(row - radius));
  const r1 = Math.min(height - 1, Math.floor(row + radius));
  for (let i = r0; i <= r1; i++) {
    const dr = i - row;
    const span = Math.sqrt(Math.max(r2 - dr * dr, 0));
    const c0 = Math.max(0, Math.ceil(col - span));
    const c1 = Math.min(width - 1, Math.floor(col + span));
    for (let j = c0; j <= c1; j++) out.push(i * width + j);
  }
  return out;
}
