/** Wire types for the review API. */

export type VerdictLabel = "military" | "civilian" | "skip";

export interface SiteInfo {
  id: string;
  lon: number;
  lat: number;
  source: "sam_kmz" | "world_cities";
  name: string | null;
}

export interface CaptionInfo {
  kind: string;
  text: string;
}

export interface QueueItem {
  image_id: string;
  image_url: string;
  site: SiteInfo;
  captions: CaptionInfo[];
}

export interface Stats {
  reviewed: number;
  remaining: number;
  per_category: Record<string, number>;
}

export interface VerdictAck {
  ok: boolean;
  category_if_assigned: string | null;
}

/** What the controller needs from the backend. */
export interface ReviewApi {
  /** Next unreviewed candidate, or null when the queue is drained (204). */
  nextItem(): Promise<QueueItem | null>;
  stats(): Promise<Stats>;
  postVerdict(imageId: string, label: VerdictLabel, reviewer: string): Promise<VerdictAck>;
}

/** What the controller needs from the page. */
export interface ReviewView {
  showLoading(): void;
  /** Render one candidate; position/total drive the queue counter. */
  showItem(item: QueueItem, position: number, total: number): void;
  /** Disable verdict inputs while a POST is in flight. */
  setSubmitting(submitting: boolean): void;
  showComplete(stats: Stats): void;
  /** Blocking banner for an unreachable API; retry() re-enters the loop. */
  showBanner(message: string): void;
  hideBanner(): void;
  /** Transient notice: the verdict did not stick, the item stays. */
  showToast(message: string): void;
}
