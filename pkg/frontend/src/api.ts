import type { QueueItem, ReviewApi, Stats, VerdictAck, VerdictLabel } from "./types.js";

export class HttpApi implements ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    // Wrapped so the browser's fetch keeps its expected receiver.
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  async nextItem(): Promise<QueueItem | null> {
    const response = await this.fetchFn(`${this.baseUrl}/api/queue/next`);
    if (response.status === 204) return null;
    if (!response.ok) throw new Error(`queue/next returned ${response.status}`);
    return (await response.json()) as QueueItem;
  }

  async stats(): Promise<Stats> {
    const response = await this.fetchFn(`${this.baseUrl}/api/stats`);
    if (!response.ok) throw new Error(`stats returned ${response.status}`);
    return (await response.json()) as Stats;
  }

  async postVerdict(imageId: string, label: VerdictLabel, reviewer: string): Promise<VerdictAck> {
    const response = await this.fetchFn(`${this.baseUrl}/api/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, label, reviewer }),
    });
    if (!response.ok) throw new Error(`verdict returned ${response.status}`);
    return (await response.json()) as VerdictAck;
  }
}
