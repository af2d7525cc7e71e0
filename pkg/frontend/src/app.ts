// Application wiring: case picker, annotated image canvas, turn panel,
// feedback column, mastery panel, gaze attach/replay.

import { TutorClient, ApiError } from "./api.js";
import { BoxEditor, imageToScreen } from "./boxes.js";
import { parseFixationFile, replaySchedule } from "./gaze.js";
import { renderMasteryPanel, renderTutorResponse } from "./panels.js";
import type { FixationPoint, RequestFlag, SessionCreated } from "./types.js";

const client = new TutorClient("");

interface AppState {
  session: SessionCreated | null;
  editor: BoxEditor | null;
  image: HTMLImageElement | null;
  attachedFixations: FixationPoint[];
  pending: boolean;
  completed: boolean;
}

const state: AppState = {
  session: null,
  editor: null,
  image: null,
  attachedFixations: [],
  pending: false,
  completed: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(text: string, kind: "error" | "info" = "error"): void {
  const host = el<HTMLDivElement>("banners");
  const note = document.createElement("div");
  note.className = `banner ${kind}`;
  note.textContent = text;
  host.appendChild(note);
  setTimeout(() => note.remove(), 6000);
}

function redraw(): void {
  const canvas = el<HTMLCanvasElement>("case-canvas");
  const ctx = canvas.getContext("2d");
  if (!ctx || !state.editor || !state.image) return;
  const { zoom, panX, panY } = state.editor.viewport;
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.setTransform(zoom, 0, 0, zoom, panX, panY);
  ctx.drawImage(state.image, 0, 0);
  ctx.lineWidth = 2 / zoom;
  ctx.strokeStyle = "#27c4f5";
  for (const box of state.editor.boxes) {
    ctx.strokeRect(box.xMin, box.yMin, box.xMax - box.xMin, box.yMax - box.yMin);
  }
}

function canvasPoint(event: MouseEvent): { x: number; y: number } {
  const canvas = el<HTMLCanvasElement>("case-canvas");
  const rect = canvas.getBoundingClientRect();
  return { x: event.clientX - rect.left, y: event.clientY - rect.top };
}

async function bootstrap(): Promise<void> {
  const picker = el<HTMLSelectElement>("case-picker");
  const cases = await client.listCases();
  picker.replaceChildren(
    ...cases.map((c) => {
      const option = document.createElement("option");
      option.value = c.case_id;
      option.textContent = c.case_id;
      return option;
    }),
  );
  el<HTMLButtonElement>("start-session").addEventListener("click", () => {
    void startSession(picker.value);
  });
  el<HTMLButtonElement>("submit-turn").addEventListener("click", () => {
    void submitTurn();
  });
  el<HTMLButtonElement>("clear-boxes").addEventListener("click", () => {
    state.editor?.clear();
    redraw();
  });
  el<HTMLInputElement>("zoom").addEventListener("input", (event) => {
    const zoom = Number((event.target as HTMLInputElement).value);
    if (state.editor) {
      state.editor.setViewport({ ...state.editor.viewport, zoom });
      redraw();
    }
  });
  el<HTMLInputElement>("confidence").addEventListener("input", (event) => {
    el<HTMLSpanElement>("confidence-value").textContent = Number(
      (event.target as HTMLInputElement).value,
    ).toFixed(2);
  });
  el<HTMLInputElement>("gaze-file").addEventListener("change", (event) => {
    void attachGaze((event.target as HTMLInputElement).files?.[0] ?? null);
  });
  el<HTMLButtonElement>("replay-gaze").addEventListener("click", () => {
    void replayGaze();
  });

  const canvas = el<HTMLCanvasElement>("case-canvas");
  canvas.addEventListener("mousedown", (event) => {
    if (!state.editor || state.pending) return;
    state.editor.pointerDown(canvasPoint(event));
  });
  canvas.addEventListener("mousemove", (event) => {
    if (!state.editor) return;
    state.editor.pointerMove(canvasPoint(event));
    redraw();
  });
  canvas.addEventListener("mouseup", () => {
    if (!state.editor) return;
    const committed = state.editor.pointerUp();
    if (committed === null) {
      banner("Box too small - draw a larger rectangle", "info");
    }
    redraw();
  });

  const restoreId = location.hash.slice(1);
  if (restoreId) {
    await restoreSession(restoreId);
  }
}

/** Rebuild the view for an existing session after a page refresh. */
async function restoreSession(sessionId: string): Promise<void> {
  let view;
  try {
    view = await client.sessionView(sessionId);
  } catch {
    location.hash = "";
    return;
  }
  state.session = { session_id: view.session_id, case: view.case };
  state.completed = view.completed;
  location.hash = view.session_id;
  el<HTMLSelectElement>("case-picker").value = view.case_id;

  const image = new Image();
  image.src = client.caseImageUrl(view.case_id);
  await image.decode();
  state.image = image;
  state.editor = new BoxEditor(view.case.image_width, view.case.image_height);
  const canvas = el<HTMLCanvasElement>("case-canvas");
  canvas.width = view.case.image_width;
  canvas.height = view.case.image_height;
  redraw();

  const feedbackHost = el<HTMLDivElement>("feedback");
  feedbackHost.replaceChildren();
  for (const entry of view.history) {
    renderTutorResponse(
      feedbackHost,
      { ...entry.tutor_response, turn_index: entry.student_turn.turn_index },
      {
        overlayUrl: (name) => client.overlayUrl(name),
        imageOverlayHost: el<HTMLDivElement>("image-wrap"),
      },
    );
  }
  renderMasteryPanel(el<HTMLDivElement>("mastery-panel"), view.mastery);
  el<HTMLDivElement>("case-meta").textContent =
    `${view.case_id}: resumed at turn ${view.turn_count}` +
    (view.completed ? " (complete)" : "");
}

async function startSession(caseId: string): Promise<void> {
  try {
    state.session = await client.createSession(caseId);
  } catch (err) {
    banner(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    return;
  }
  location.hash = state.session.session_id; // refresh-safe
  state.completed = false;
  state.attachedFixations = [];
  el<HTMLDivElement>("feedback").replaceChildren();
  el<HTMLSpanElement>("gaze-status").textContent = "no gaze attached";

  const image = new Image();
  image.src = client.caseImageUrl(caseId);
  await image.decode();
  state.image = image;
  state.editor = new BoxEditor(
    state.session.case.image_width,
    state.session.case.image_height,
  );
  const zoomInput = el<HTMLInputElement>("zoom");
  state.editor.setViewport({ zoom: Number(zoomInput.value), panX: 0, panY: 0 });

  const canvas = el<HTMLCanvasElement>("case-canvas");
  canvas.width = state.session.case.image_width;
  canvas.height = state.session.case.image_height;
  redraw();
  renderMasteryPanel(
    el<HTMLDivElement>("mastery-panel"),
    Object.fromEntries(
      state.session.case.skills.map((skill) => [skill, { mastery: 0.2, attempts: 0 }]),
    ),
  );
  el<HTMLDivElement>("case-meta").textContent =
    `${caseId}: ${state.session.case.finding_count} finding(s); themes: ` +
    state.session.case.categories.join(", ");
}

async function attachGaze(file: File | null): Promise<void> {
  if (!file) return;
  try {
    const content = await file.text();
    state.attachedFixations = parseFixationFile(content);
    el<HTMLSpanElement>("gaze-status").textContent =
      `gaze attached (${state.attachedFixations.length} fixations)`;
  } catch (err) {
    state.attachedFixations = []; // no partial attach
    el<HTMLSpanElement>("gaze-status").textContent = "no gaze attached";
    banner(String(err));
  }
}

async function replayGaze(): Promise<void> {
  if (!state.attachedFixations.length || !state.editor) {
    banner("Attach a fixation file first", "info");
    return;
  }
  const speed = Number(el<HTMLInputElement>("replay-speed").value) || 1;
  const host = el<HTMLDivElement>("image-wrap");
  const marker = document.createElement("div");
  marker.className = "gaze-marker";
  host.appendChild(marker);
  for (const frame of replaySchedule(state.attachedFixations, speed)) {
    const at = imageToScreen(
      { x: frame.fixation.x, y: frame.fixation.y },
      state.editor.viewport,
    );
    marker.style.left = `${at.x}px`;
    marker.style.top = `${at.y}px`;
    await new Promise((resolve) => setTimeout(resolve, Math.min(frame.holdMs, 1500)));
  }
  marker.remove();
}

function requestFlags(): RequestFlag[] {
  const flags: RequestFlag[] = [];
  if (el<HTMLInputElement>("req-reasoning").checked) flags.push("reasoning");
  if (el<HTMLInputElement>("req-knowledge").checked) flags.push("knowledge");
  if (el<HTMLInputElement>("req-similar").checked) flags.push("similar_cases");
  return flags;
}

async function submitTurn(): Promise<void> {
  if (!state.session || !state.editor || state.pending) return;
  if (state.completed) {
    banner("Case complete - start a new session", "info");
    return;
  }
  state.pending = true;
  const submitButton = el<HTMLButtonElement>("submit-turn");
  submitButton.disabled = true;
  try {
    const response = await client.submitTurn(state.session.session_id, {
      boxes: state.editor.toPayload(),
      fixations: state.attachedFixations,
      text: el<HTMLTextAreaElement>("turn-text").value,
      confidence: Number(el<HTMLInputElement>("confidence").value),
      requests: requestFlags(),
    });
    renderTutorResponse(el<HTMLDivElement>("feedback"), response, {
      overlayUrl: (name) => client.overlayUrl(name),
      imageOverlayHost: el<HTMLDivElement>("image-wrap"),
    });
    renderMasteryPanel(el<HTMLDivElement>("mastery-panel"), response.mastery);
    el<HTMLTextAreaElement>("turn-text").value = "";
    state.attachedFixations = [];
    el<HTMLSpanElement>("gaze-status").textContent = "no gaze attached";
    if (response.reflection_mode) {
      state.completed = true;
      banner("Case complete", "info");
    }
  } catch (err) {
    if (err instanceof ApiError && err.code === "turn_in_flight") {
      banner("A turn is already processing - try again shortly", "info");
    } else if (err instanceof ApiError) {
      banner(`${err.code}: ${err.message}`);
    } else {
      banner(String(err));
    }
  } finally {
    state.pending = false;
    submitButton.disabled = false;
  }
}

void bootstrap();
