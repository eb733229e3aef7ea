import type { QueueItem, ReviewApi, ReviewView, VerdictLabel } from "./types.js";

const KEY_LABELS: Record<string, VerdictLabel> = {
  m: "military",
  c: "civilian",
  s: "skip",
  arrowright: "skip",
};

/**
 * The review loop as a pure state machine.
 *
 * All state is derived from API responses (the position counter comes
 * from /api/stats, not a local tally), so a page refresh lands in the
 * same place. At most one verdict POST is ever in flight: keypresses and
 * clicks while submitting are dropped, and a failed POST leaves the
 * current item on screen untouched.
 */
export class ReviewController {
  private current: QueueItem | null = null;
  private submitting = false;

  constructor(
    private readonly api: ReviewApi,
    private readonly view: ReviewView,
    private readonly reviewer: string,
  ) {}

  get currentItem(): QueueItem | null {
    return this.current;
  }

  get isSubmitting(): boolean {
    return this.submitting;
  }

  /** Entry point and banner-retry target. */
  async start(): Promise<void> {
    this.view.hideBanner();
    this.view.showLoading();
    try {
      await this.advance();
    } catch (err) {
      this.view.showBanner(`Review service unreachable: ${describe(err)}`);
    }
  }

  /** Keyboard dispatch; unknown keys are ignored. */
  async handleKey(key: string): Promise<void> {
    const label = KEY_LABELS[key.toLowerCase()];
    if (label !== undefined) {
      await this.submit(label);
    }
  }

  /**
   * Record one verdict for the current item. No-op when nothing is on
   * screen or a POST is already in flight (idempotence guard).
   */
  async submit(label: VerdictLabel): Promise<void> {
    if (this.current === null || this.submitting) return;
    const item = this.current;
    this.submitting = true;
    this.view.setSubmitting(true);
    try {
      await this.api.postVerdict(item.image_id, label, this.reviewer);
    } catch (err) {
      // Not marked done locally: the same item stays on screen.
      this.view.showToast(`Verdict not recorded (${describe(err)}); try again.`);
      return;
    } finally {
      this.submitting = false;
      this.view.setSubmitting(false);
    }
    try {
      await this.advance();
    } catch (err) {
      this.view.showBanner(`Review service unreachable: ${describe(err)}`);
    }
  }

  private async advance(): Promise<void> {
    const stats = await this.api.stats();
    const item = await this.api.nextItem();
    this.current = item;
    if (item === null) {
      this.view.showComplete(stats);
      return;
    }
    this.view.showItem(item, stats.reviewed + 1, stats.reviewed + stats.remaining);
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
