// DOM wiring: render the triplet, the five rubric rows, and drive the
// session. Keyboard shortcuts 1-5 score the focused dimension and move
// focus down, which is what makes high-throughput rating sessions viable.

import { StudyApi } from "./client.js";
import { RatingSession } from "./state.js";
import { SCORE_VALUES } from "./types.js";

const app = document.getElementById("app") as HTMLElement;
const api = new StudyApi();

function raterToken(): string {
  const params = new URLSearchParams(window.location.search);
  const fromUrl = params.get("rater");
  if (fromUrl) {
    window.localStorage.setItem("rater", fromUrl);
    return fromUrl;
  }
  let stored = window.localStorage.getItem("rater");
  if (!stored) {
    stored = `r-${Math.random().toString(36).slice(2, 10)}`;
    window.localStorage.setItem("rater", stored);
  }
  return stored;
}

const session = new RatingSession(api, raterToken());
let focusedDimension = 0;

function imageFigure(label: string, url: string): string {
  return `
    <figure class="shot">
      <img src="${url}" alt="${label}" loading="lazy" data-zoom="${url}">
      <figcaption>${label}</figcaption>
    </figure>`;
}

function render(): void {
  if (session.phase === "loading") {
    app.innerHTML = `<p class="status">Loading next item…</p>`;
    return;
  }
  if (session.phase === "done") {
    app.innerHTML = `
      <div class="status">
        <h2>All done</h2>
        <p>You have rated everything available. Thank you!</p>
        <p>${session.completed} ratings submitted this session.</p>
      </div>`;
    return;
  }
  if (session.phase === "error" && session.task === null) {
    app.innerHTML = `
      <div class="banner">Connection problem: ${session.errorMessage}
        <button id="retry">Retry</button></div>`;
    document.getElementById("retry")?.addEventListener("click", () => {
      void session.loadNext().then(render);
    });
    return;
  }
  const task = session.task;
  if (task === null) {
    return;
  }
  const progress = task.progress;
  const percent = progress.items_total
    ? Math.round((100 * progress.items_fully_covered) / progress.items_total)
    : 0;
  const missing = new Set(session.missingDimensions());
  app.innerHTML = `
    ${session.retryBanner
      ? `<div class="banner">Could not reach the server; your selections are
         kept. <button id="retry-submit">Retry submit</button></div>`
      : ""}
    <div class="progress-bar" title="${progress.items_fully_covered} of
      ${progress.items_total} items fully covered">
      <div class="progress-fill" style="width:${percent}%"></div>
    </div>
    <div class="triplet">
      ${imageFigure("Garment", task.images.garment)}
      ${imageFigure("Reference photo", task.images.ground_truth)}
      ${imageFigure("Generated try-on", task.images.generated)}
    </div>
    <div class="rubrics">
      ${task.dimensions
        .map(
          (dim, index) => `
        <div class="rubric ${missing.has(index) ? "missing" : ""}
             ${index === focusedDimension ? "focused" : ""}"
             data-dim="${index}" tabindex="0">
          <div class="rubric-text">
            <strong>${dim.title}</strong>
            <span>${dim.question}</span>
          </div>
          <div class="scores">
            ${SCORE_VALUES.map(
              (score) => `
              <label class="${session.selections[index] === score ? "picked" : ""}">
                <input type="radio" name="dim-${index}" value="${score}"
                  ${session.selections[index] === score ? "checked" : ""}>
                ${score}
              </label>`,
            ).join("")}
          </div>
        </div>`,
        )
        .join("")}
    </div>
    <div class="actions">
      <span class="hint">Keys 1–5 score the highlighted row. 1 = failure, 5 = perfect.</span>
      <button id="submit" ${session.canSubmit() ? "" : "disabled"}>
        Submit &amp; next
      </button>
    </div>
    <div id="zoom" class="zoom hidden"><img alt="zoom"></div>`;
  bind();
}

function bind(): void {
  app.querySelectorAll<HTMLInputElement>("input[type=radio]").forEach((input) => {
    input.addEventListener("change", () => {
      const dim = Number(input.name.replace("dim-", ""));
      session.select(dim, Number(input.value));
      focusedDimension = Math.min(dim + 1, 4);
      render();
    });
  });
  app.querySelectorAll<HTMLElement>(".rubric").forEach((row) => {
    row.addEventListener("focus", () => {
      focusedDimension = Number(row.dataset.dim);
    });
  });
  document.getElementById("submit")?.addEventListener("click", () => {
    void session.submit().then(render);
  });
  document.getElementById("retry-submit")?.addEventListener("click", () => {
    void session.submit().then(render);
  });
  app.querySelectorAll<HTMLImageElement>("img[data-zoom]").forEach((img) => {
    img.addEventListener("click", () => {
      const zoom = document.getElementById("zoom") as HTMLElement;
      const zoomImg = zoom.querySelector("img") as HTMLImageElement;
      zoomImg.src = img.dataset.zoom ?? img.src;
      zoom.classList.remove("hidden");
    });
  });
  document.getElementById("zoom")?.addEventListener("click", (event) => {
    (event.currentTarget as HTMLElement).classList.add("hidden");
  });
}

document.addEventListener("keydown", (event) => {
  if (session.phase !== "rating") {
    return;
  }
  const score = Number(event.key);
  if (score >= 1 && score <= 5) {
    session.select(focusedDimension, score);
    focusedDimension = Math.min(focusedDimension + 1, 4);
    render();
  } else if (event.key === "Enter" && session.canSubmit()) {
    void session.submit().then(render);
  }
});

void session.start().then(render);
