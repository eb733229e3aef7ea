import type { QueueItem, ReviewView, Stats } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

/** Binds the controller's view contract onto the static page. */
export class DomView implements ReviewView {
  private readonly image = el<HTMLImageElement>("candidate-image");
  private readonly counter = el<HTMLElement>("queue-counter");
  private readonly siteLine = el<HTMLElement>("site-line");
  private readonly captions = el<HTMLElement>("caption-list");
  private readonly captionBox = el<HTMLDetailsElement>("caption-box");
  private readonly buttons = Array.from(
    document.querySelectorAll<HTMLButtonElement>("button[data-label]"),
  );
  private readonly reviewPane = el<HTMLElement>("review-pane");
  private readonly donePane = el<HTMLElement>("done-pane");
  private readonly doneSummary = el<HTMLElement>("done-summary");
  private readonly banner = el<HTMLElement>("error-banner");
  private readonly bannerText = el<HTMLElement>("error-text");
  private readonly toast = el<HTMLElement>("toast");
  private toastTimer: number | undefined;

  showLoading(): void {
    this.counter.textContent = "loading…";
  }

  showItem(item: QueueItem, position: number, total: number): void {
    this.reviewPane.hidden = false;
    this.donePane.hidden = true;
    this.image.src = item.image_url;
    this.image.alt = `candidate ${item.image_id}`;
    this.counter.textContent = `${position} / ${total}`;
    const name = item.site.name ? ` · ${item.site.name}` : "";
    this.siteLine.textContent =
      `${item.image_id} · ${item.site.source} · ` +
      `${item.site.lat.toFixed(4)}, ${item.site.lon.toFixed(4)}${name}`;
    // Collapsed by default: the expert judges pixels before model text.
    this.captionBox.open = false;
    this.captions.replaceChildren(
      ...item.captions.map((c) => {
        const li = document.createElement("li");
        li.textContent = `[${c.kind}] ${c.text}`;
        return li;
      }),
    );
  }

  setSubmitting(submitting: boolean): void {
    for (const button of this.buttons) button.disabled = submitting;
  }

  showComplete(stats: Stats): void {
    this.reviewPane.hidden = true;
    this.donePane.hidden = false;
    const cats = Object.entries(stats.per_category)
      .map(([k, v]) => `${k}: ${v}`)
      .join(" · ");
    this.doneSummary.textContent = `Reviewed ${stats.reviewed} images (${cats}). Nothing left in the queue.`;
  }

  showBanner(message: string): void {
    this.bannerText.textContent = message;
    this.banner.hidden = false;
  }

  hideBanner(): void {
    this.banner.hidden = true;
  }

  showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.hidden = false;
    window.clearTimeout(this.toastTimer);
    this.toastTimer = window.setTimeout(() => {
      this.toast.hidden = true;
    }, 4000);
  }
}
