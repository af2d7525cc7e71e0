// Mastery side panel: one bar per skill with the engine's routing
// thresholds (0.2 reasoning, 0.3 knowledge, 0.8 resolution) marked.

import type { MasteryEntry } from "./types.js";

export const THRESHOLDS = [
  { value: 0.2, name: "reasoning" },
  { value: 0.3, name: "knowledge" },
  { value: 0.8, name: "resolution" },
] as const;

export function renderMasteryPanel(
  container: HTMLElement,
  mastery: Record<string, MasteryEntry>,
): void {
  container.replaceChildren();
  const skills = Object.keys(mastery).sort();
  for (const skill of skills) {
    const entry = mastery[skill]!;
    const row = document.createElement("div");
    row.className = "mastery-row";
    row.dataset.skill = skill;

    const label = document.createElement("span");
    label.className = "mastery-label";
    label.textContent = `${skill} (${entry.attempts})`;

    const track = document.createElement("div");
    track.className = "mastery-track";

    const bar = document.createElement("div");
    bar.className = "mastery-bar";
    bar.style.width = `${(entry.mastery * 100).toFixed(1)}%`;
    bar.dataset.mastery = entry.mastery.toFixed(4);
    if (entry.mastery >= 0.8) bar.classList.add("mastered");
    track.appendChild(bar);

    for (const threshold of THRESHOLDS) {
      const tick = document.createElement("div");
      tick.className = `mastery-tick tick-${threshold.name}`;
      tick.style.left = `${threshold.value * 100}%`;
      tick.title = `${threshold.name} threshold ${threshold.value}`;
      track.appendChild(tick);
    }

    row.append(label, track);
    container.appendChild(row);
  }
}
