import { describe, expect, it } from 'vitest';
import { barLayout, lineLayout, niceExtent, scale } from '../src/charts.js';
import { minClassIou } from '../src/dashboard.js';
import type { MetricRecord } from '../src/types.js';

describe('niceExtent', () => {
  it('pads the raw extent', () => {
    const e = niceExtent([0, 10]);
    expect(e.min).toBeLessThan(0);
    expect(e.max).toBeGreaterThan(10);
  });

  it('handles a single value', () => {
    const e = niceExtent([5]);
    expect(e.max).toBeGreaterThan(e.min);
  });

  it('empty input defaults to unit range', () => {
    expect(niceExtent([])).toEqual({ min: 0, max: 1 });
  });
});

describe('scale', () => {
  it('maps domain ends to range ends', () => {
    expect(scale(0, { min: 0, max: 1 }, 10, 110)).toBe(10);
    expect(scale(1, { min: 0, max: 1 }, 10, 110)).toBe(110);
  });

  it('supports inverted ranges for canvas y', () => {
    expect(scale(1, { min: 0, max: 1 }, 200, 0)).toBe(0);
  });
});

describe('lineLayout', () => {
  it('keeps points inside the canvas box', () => {
    const series = [[{ x: 0.05, y: 0.2 }, { x: 0.1, y: 0.6 }, { x: 0.2, y: 0.5 }]];
    const { polylines } = lineLayout(series, 320, 200);
    for (const [x, y] of polylines[0]) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(320);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(200);
    }
  });

  it('single record yields a single point per series', () => {
    const { polylines } = lineLayout([[{ x: 0.05, y: 0.3 }]], 320, 200);
    expect(polylines[0]).toHaveLength(1);
  });
});

describe('barLayout', () => {
  it('one bar per value, clamped to [0,1]', () => {
    const bars = barLayout([0.2, 1.5, -0.3], 320, 200);
    expect(bars).toHaveLength(3);
    expect(bars[1].height).toBeGreaterThan(bars[0].height);
    expect(bars[2].height).toBe(0);
  });

  it('bars stay inside the canvas', () => {
    const bars = barLayout(Array(6).fill(0.8), 320, 200);
    for (const b of bars) {
      expect(b.x).toBeGreaterThanOrEqual(0);
      expect(b.x + b.width).toBeLessThanOrEqual(320);
      expect(b.y).toBeGreaterThanOrEqual(0);
    }
  });

  it('empty input gives no bars', () => {
    expect(barLayout([], 320, 200)).toEqual([]);
  });
});

describe('minClassIou', () => {
  const record = (ious: number[]): MetricRecord => ({
    iteration: 0,
    budget_fraction: 0.05,
    per_class_iou: ious,
    miou: 0.5,
    mean_f1: 0.5,
    pseudo_pixel_counts: [],
    wall_time: 0,
  });

  it('ignores absent (zero) classes', () => {
    expect(minClassIou(record([0.4, 0, 0.8]))).toBeCloseTo(0.4);
  });

  it('all zero gives zero', () => {
    expect(minClassIou(record([0, 0]))).toBe(0);
  });
});
