export interface QueueItem {
  unit_id: string;
  image_id: string;
  kind: 'RECT' | 'EDGE';
  cost: number;
  bbox: [number, number, number, number];
  crop: [number, number, number, number];
  image_height: number;
  image_width: number;
}

export interface UnitMask {
  unit_id: string;
  height: number;
  width: number;
  rle: number[];
  bbox: [number, number, number, number];
  crop: [number, number, number, number];
}

export interface Status {
  phase: 'starting' | 'labeling' | 'training' | 'done';
  iteration: number;
  pending: number;
  labeled_pixels: number;
  total_pixels: number;
  budget_fraction: number;
  num_classes: number;
  class_names: string[];
  palette: [number, number, number][];
}

export interface MetricRecord {
  iteration: number;
  budget_fraction: number;
  per_class_iou: number[];
  miou: number;
  mean_f1: number;
  pseudo_pixel_counts: number[];
  wall_time: number;
}

export type LabelRun = [number, number];
