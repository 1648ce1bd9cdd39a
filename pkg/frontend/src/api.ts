import type { LabelRun, MetricRecord, QueueItem, Status, UnitMask } from './types.js';

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`${url}: ${resp.status}`);
  return (await resp.json()) as T;
}

export const api = {
  status: () => getJson<Status>('/api/status'),
  queue: () => getJson<QueueItem[]>('/api/queue'),
  unitMask: (unitId: string) => getJson<UnitMask>(`/api/unit/${encodeURIComponent(unitId)}/mask`),
  unitImageUrl: (unitId: string) => `/api/unit/${encodeURIComponent(unitId)}/image`,
  metrics: async () => (await getJson<{ records: MetricRecord[] }>('/api/metrics')).records,

  async submitLabels(unitId: string, runs: LabelRun[]): Promise<void> {
    const resp = await fetch('/api/labels', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ unit_id: unitId, rle_labels: runs }),
    });
    if (!resp.ok) {
      const detail = await resp.json().catch(() => ({ detail: resp.statusText }));
      throw new Error(`submit failed: ${JSON.stringify(detail)}`);
    }
  },

  async skip(unitId: string): Promise<void> {
    const resp = await fetch('/api/skip', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ unit_id: unitId }),
    });
    if (!resp.ok) throw new Error(`skip failed: ${resp.status}`);
  },
};
