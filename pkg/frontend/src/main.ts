import { HttpApi } from "./api.js";
import { ReviewController } from "./controller.js";
import { DomView } from "./dom.js";
import type { VerdictLabel } from "./types.js";

const reviewer =
  new URLSearchParams(window.location.search).get("reviewer") ?? "expert";

const controller = new ReviewController(new HttpApi(""), new DomView(), reviewer);

document.addEventListener("keydown", (event) => {
  if (event.altKey || event.ctrlKey || event.metaKey) return;
  void controller.handleKey(event.key);
});

for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-label]")) {
  button.addEventListener("click", () => {
    void controller.submit(button.dataset["label"] as VerdictLabel);
  });
}

document.getElementById("retry-button")?.addEventListener("click", () => {
  void controller.start();
});

void controller.start();
