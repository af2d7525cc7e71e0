// Renders a tutor response into the feedback column: every structured
// section gets its own block, the gate hint becomes an arrow over the
// image, and reflection mode restyles the whole entry.

import type { DirectionalHint, TutorResponsePayload } from "./types.js";
import { renderMasteryPanel } from "./mastery.js";

const ARROW_ANGLES: Record<DirectionalHint["direction"], number> = {
  E: 0,
  SE: 45,
  S: 90,
  SW: 135,
  W: 180,
  NW: 225,
  N: 270,
  NE: 315,
};

function section(title: string, className: string): HTMLElement {
  const el = document.createElement("section");
  el.className = `panel ${className}`;
  const heading = document.createElement("h3");
  heading.textContent = title;
  el.appendChild(heading);
  return el;
}

function list(items: string[]): HTMLUListElement {
  const ul = document.createElement("ul");
  for (const item of items) {
    const li = document.createElement("li");
    li.textContent = item;
    ul.appendChild(li);
  }
  return ul;
}

/** Arrow element for a failed gate, rotated toward the hint direction. */
export function hintArrow(hint: DirectionalHint): HTMLElement {
  const arrow = document.createElement("div");
  arrow.className = `hint-arrow hint-${hint.magnitude}`;
  arrow.dataset.direction = hint.direction;
  arrow.dataset.magnitude = hint.magnitude;
  arrow.textContent = "➜";
  arrow.style.transform = `rotate(${ARROW_ANGLES[hint.direction]}deg)`;
  return arrow;
}

export interface RenderContext {
  overlayUrl: (name: string) => string;
  /** host for the directional arrow, usually the image wrapper */
  imageOverlayHost: HTMLElement;
}

export function renderTutorResponse(
  container: HTMLElement,
  response: TutorResponsePayload,
  context: RenderContext,
): HTMLElement {
  const entry = document.createElement("article");
  entry.className = "tutor-entry";
  if (response.reflection_mode) {
    entry.classList.add("reflection");
  }

  // clear any previous arrow; draw a fresh one on gate failure
  context.imageOverlayHost
    .querySelectorAll(".hint-arrow")
    .forEach((node) => node.remove());
  if (response.focus && !response.focus.passed && response.focus.guidance) {
    const banner = section("Localization", "gate-banner");
    banner.appendChild(
      document.createTextNode(
        `Focus gate not passed (best IoU ${response.focus.best_iou.toFixed(2)}).`,
      ),
    );
    entry.appendChild(banner);
    context.imageOverlayHost.appendChild(hintArrow(response.focus.guidance));
  }

  const message = section("Tutor", "message");
  const text = document.createElement("p");
  text.textContent = response.message;
  message.appendChild(text);
  entry.appendChild(message);

  if (response.assessment) {
    const block = section("Assessment", "assessment");
    const parts: string[] = [];
    if (response.assessment.reinforcements.length) {
      parts.push(`Reinforced: ${response.assessment.reinforcements.join(", ")}`);
    }
    for (const [category, issue] of response.assessment.corrections) {
      parts.push(`Revisit ${category}: ${issue}`);
    }
    if (response.assessment.missing.length) {
      parts.push(`Not yet addressed: ${response.assessment.missing.join(", ")}`);
    }
    parts.push(`Impression: ${response.assessment.impression}`);
    block.appendChild(list(parts));
    entry.appendChild(block);
  }

  if (response.socratic && response.socratic.prompts.length) {
    const block = section("Think it through", "socratic");
    block.appendChild(list(response.socratic.prompts));
    entry.appendChild(block);
  }

  if (response.knowledge.length) {
    const block = section("From the literature", "knowledge");
    for (const snippet of response.knowledge) {
      const item = document.createElement("p");
      item.textContent = snippet.text;
      if (snippet.citation_id) {
        const cite = document.createElement("a");
        cite.href = `https://pubmed.ncbi.nlm.nih.gov/${snippet.citation_id}/`;
        cite.textContent = ` [PMID ${snippet.citation_id}]`;
        cite.className = "citation";
        item.appendChild(cite);
      }
      block.appendChild(item);
    }
    entry.appendChild(block);
  }

  if (response.gaze) {
    const block = section("Gaze", "gaze");
    const parts = [
      `Coverage ${(response.gaze.coverage_ratio * 100).toFixed(0)}%`,
      `In-region dwell ${(response.gaze.dwell_time_ratio * 100).toFixed(0)}%`,
      `Sequence score ${response.gaze.sequence_score.toFixed(2)}`,
    ];
    if (response.gaze.unvisited_regions.length) {
      parts.push(`Unvisited: ${response.gaze.unvisited_regions.join(", ")}`);
    }
    block.appendChild(list(parts));
    entry.appendChild(block);
  }

  if (response.reasoning_text) {
    const block = section("Guided reasoning", "reasoning");
    const pre = document.createElement("pre");
    pre.textContent = response.reasoning_text;
    block.appendChild(pre);
    entry.appendChild(block);
  }

  if (response.similar_cases.length) {
    const block = section("Similar cases", "similar");
    const strip = document.createElement("div");
    strip.className = "thumb-strip";
    for (const similar of response.similar_cases) {
      const figure = document.createElement("figure");
      const img = document.createElement("img");
      img.className = "similar-thumb";
      img.src = context.overlayUrl(similar.overlay_path);
      img.alt = `similar case ${similar.case_id}`;
      const caption = document.createElement("figcaption");
      caption.textContent = `${similar.case_id} (${similar.score.toFixed(2)})`;
      figure.append(img, caption);
      strip.appendChild(figure);
    }
    block.appendChild(strip);
    entry.appendChild(block);
  }

  container.appendChild(entry);
  return entry;
}

export { renderMasteryPanel };
