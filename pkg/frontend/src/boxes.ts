// Bounding-box editor model.
//
// Boxes live in IMAGE pixel coordinates at all times; zoom and pan are a
// view transform applied on the way in (pointer events) and out (drawing).
// Whatever the on-screen scale, the payload sent to the API is the same
// pixel-space rectangle.

import type { Box } from "./types.js";

export interface Viewport {
  zoom: number;
  panX: number;
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export interface EditableBox {
  xMin: number;
  yMin: number;
  xMax: number;
  yMax: number;
}

export type Handle = "nw" | "ne" | "sw" | "se" | "move";

const MIN_SIZE_PX = 1; // image pixels; degenerate draws are discarded
const HANDLE_RADIUS_PX = 6; // screen pixels

export function screenToImage(point: Point, viewport: Viewport): Point {
  return {
    x: (point.x - viewport.panX) / viewport.zoom,
    y: (point.y - viewport.panY) / viewport.zoom,
  };
}

export function imageToScreen(point: Point, viewport: Viewport): Point {
  return {
    x: point.x * viewport.zoom + viewport.panX,
    y: point.y * viewport.zoom + viewport.panY,
  };
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

interface DrawDrag {
  kind: "draw";
  anchor: Point; // image coords
  current: Point;
}

interface EditDrag {
  kind: "edit";
  index: number;
  handle: Handle;
  start: Point; // image coords
  original: EditableBox;
}

export class BoxEditor {
  boxes: EditableBox[] = [];
  viewport: Viewport = { zoom: 1, panX: 0, panY: 0 };
  private drag: DrawDrag | EditDrag | null = null;

  constructor(
    readonly imageWidth: number,
    readonly imageHeight: number,
  ) {}

  setViewport(viewport: Viewport): void {
    if (viewport.zoom <= 0) {
      throw new Error("zoom must be positive");
    }
    this.viewport = { ...viewport };
  }

  private clampPoint(point: Point): Point {
    return {
      x: clamp(point.x, 0, this.imageWidth),
      y: clamp(point.y, 0, this.imageHeight),
    };
  }

  /** Start a pointer interaction; resizes/moves an existing box when the
   * pointer lands on one, otherwise begins drawing a new box. */
  pointerDown(screen: Point): void {
    const image = screenToImage(screen, this.viewport);
    const hit = this.hitTest(screen);
    if (hit) {
      this.drag = {
        kind: "edit",
        index: hit.index,
        handle: hit.handle,
        start: image,
        original: { ...this.boxes[hit.index]! },
      };
      return;
    }
    const anchor = this.clampPoint(image);
    this.drag = { kind: "draw", anchor, current: anchor };
  }

  pointerMove(screen: Point): void {
    if (!this.drag) return;
    const image = screenToImage(screen, this.viewport);
    if (this.drag.kind === "draw") {
      this.drag.current = this.clampPoint(image);
      return;
    }
    const { index, handle, start, original } = this.drag;
    const dx = image.x - start.x;
    const dy = image.y - start.y;
    const box = { ...original };
    if (handle === "move") {
      const width = original.xMax - original.xMin;
      const height = original.yMax - original.yMin;
      box.xMin = clamp(original.xMin + dx, 0, this.imageWidth - width);
      box.yMin = clamp(original.yMin + dy, 0, this.imageHeight - height);
      box.xMax = box.xMin + width;
      box.yMax = box.yMin + height;
    } else {
      if (handle.includes("w")) box.xMin = clamp(original.xMin + dx, 0, this.imageWidth);
      if (handle.includes("e")) box.xMax = clamp(original.xMax + dx, 0, this.imageWidth);
      if (handle.includes("n")) box.yMin = clamp(original.yMin + dy, 0, this.imageHeight);
      if (handle.includes("s")) box.yMax = clamp(original.yMax + dy, 0, this.imageHeight);
      if (box.xMin > box.xMax) [box.xMin, box.xMax] = [box.xMax, box.xMin];
      if (box.yMin > box.yMax) [box.yMin, box.yMax] = [box.yMax, box.yMin];
    }
    this.boxes[index] = box;
  }

  /** Finish the interaction. A fresh draw below the minimum size is
   * rejected (returns null); otherwise returns the affected box. */
  pointerUp(): EditableBox | null {
    const drag = this.drag;
    this.drag = null;
    if (!drag) return null;
    if (drag.kind === "edit") {
      const edited = this.boxes[drag.index]!;
      if (
        edited.xMax - edited.xMin < MIN_SIZE_PX ||
        edited.yMax - edited.yMin < MIN_SIZE_PX
      ) {
        this.boxes[drag.index] = drag.original; // revert degenerate resize
        return this.boxes[drag.index]!;
      }
      return edited;
    }
    const { anchor, current } = drag;
    const box: EditableBox = {
      xMin: Math.min(anchor.x, current.x),
      yMin: Math.min(anchor.y, current.y),
      xMax: Math.max(anchor.x, current.x),
      yMax: Math.max(anchor.y, current.y),
    };
    if (box.xMax - box.xMin < MIN_SIZE_PX || box.yMax - box.yMin < MIN_SIZE_PX) {
      return null; // zero-area draw rejected
    }
    this.boxes.push(box);
    return box;
  }

  /** Which box/handle sits under a screen point, if any. */
  hitTest(screen: Point): { index: number; handle: Handle } | null {
    for (let index = this.boxes.length - 1; index >= 0; index--) {
      const box = this.boxes[index]!;
      const corners: Array<[Handle, Point]> = [
        ["nw", { x: box.xMin, y: box.yMin }],
        ["ne", { x: box.xMax, y: box.yMin }],
        ["sw", { x: box.xMin, y: box.yMax }],
        ["se", { x: box.xMax, y: box.yMax }],
      ];
      for (const [handle, corner] of corners) {
        const at = imageToScreen(corner, this.viewport);
        if (Math.hypot(at.x - screen.x, at.y - screen.y) <= HANDLE_RADIUS_PX) {
          return { index, handle };
        }
      }
      const image = screenToImage(screen, this.viewport);
      if (
        image.x >= box.xMin &&
        image.x <= box.xMax &&
        image.y >= box.yMin &&
        image.y <= box.yMax
      ) {
        return { index, handle: "move" };
      }
    }
    return null;
  }

  deleteBox(index: number): void {
    this.boxes.splice(index, 1);
  }

  clear(): void {
    this.boxes = [];
    this.drag = null;
  }

  /** Pixel-coordinate payload exactly as the API schema requires;
   * independent of the current zoom/pan. */
  toPayload(): Box[] {
    return this.boxes.map((box) => ({
      x_min: box.xMin,
      y_min: box.yMin,
      x_max: box.xMax,
      y_max: box.yMax,
    }));
  }
}
