import type { LabelRun } from './types.js';

/** Decode alternating skip/take runs into sorted flat pixel indices. */
export function decodeRle(runs: number[], totalPixels: number): number[] {
  if (runs.length % 2 !== 0) throw new Error('RLE must alternate skip/take pairs');
  const out: number[] = [];
  let pos = 0;
  for (let i = 0; i < runs.length; i += 2) {
    const skip = runs[i];
    const take = runs[i + 1];
    if (skip < 0 || take <= 0) throw new Error('bad RLE counts');
    pos += skip;
    for (let k = 0; k < take; k++) out.push(pos++);
  }
  if (pos > totalPixels) throw new Error('RLE runs past the end of the grid');
  return out;
}

/**
 * Compress per-pixel classes (aligned with the unit's mask order) into
 * [class, count] runs: the POST /api/labels payload.
 */
export function encodeLabelRuns(classes: number[]): LabelRun[] {
  const runs: LabelRun[] = [];
  for (const c of classes) {
    const last = runs[runs.length - 1];
    if (last && last[0] === c) last[1] += 1;
    else runs.push([c, 1]);
  }
  return runs;
}

export function runsTotal(runs: LabelRun[]): number {
  return runs.reduce((acc, [, n]) => acc + n, 0);
}
