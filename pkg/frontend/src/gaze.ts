// Fixation file loading and replay animation.
//
// Files use the turn schema: either a JSON array of fixation objects or
// one JSON object per line. Replay is presentation-only; the submitted
// fixations are always the file's exact values.

import type { FixationPoint } from "./types.js";

export class FixationFileError extends Error {
  constructor(
    message: string,
    readonly line: number,
  ) {
    super(`line ${line}: ${message}`);
  }
}

function validateFixation(raw: unknown, line: number, seen: Set<number>): FixationPoint {
  if (typeof raw !== "object" || raw === null) {
    throw new FixationFileError("fixation must be an object", line);
  }
  const rec = raw as Record<string, unknown>;
  for (const field of ["x", "y", "duration", "order_index"]) {
    if (typeof rec[field] !== "number" || Number.isNaN(rec[field])) {
      throw new FixationFileError(`field ${field} must be a number`, line);
    }
  }
  const duration = rec.duration as number;
  const orderIndex = rec.order_index as number;
  if (duration <= 0) {
    throw new FixationFileError("duration must be positive", line);
  }
  if (!Number.isInteger(orderIndex) || orderIndex < 0) {
    throw new FixationFileError("order_index must be a non-negative integer", line);
  }
  if (seen.has(orderIndex)) {
    throw new FixationFileError(`duplicate order_index ${orderIndex}`, line);
  }
  seen.add(orderIndex);
  return {
    x: rec.x as number,
    y: rec.y as number,
    duration,
    order_index: orderIndex,
  };
}

/** Parse a fixation file; throws FixationFileError naming the offending
 * line. Nothing is attached on failure. */
export function parseFixationFile(content: string): FixationPoint[] {
  const trimmed = content.trim();
  if (!trimmed) {
    throw new FixationFileError("file is empty", 1);
  }
  const seen = new Set<number>();
  const fixations: FixationPoint[] = [];
  if (trimmed.startsWith("[")) {
    let parsed: unknown;
    try {
      parsed = JSON.parse(trimmed);
    } catch (err) {
      throw new FixationFileError(`invalid JSON: ${(err as Error).message}`, 1);
    }
    if (!Array.isArray(parsed)) {
      throw new FixationFileError("expected a JSON array", 1);
    }
    parsed.forEach((raw, i) => fixations.push(validateFixation(raw, i + 1, seen)));
  } else {
    content.split("\n").forEach((line, i) => {
      if (!line.trim()) return;
      let parsed: unknown;
      try {
        parsed = JSON.parse(line);
      } catch (err) {
        throw new FixationFileError(`invalid JSON: ${(err as Error).message}`, i + 1);
      }
      fixations.push(validateFixation(parsed, i + 1, seen));
    });
  }
  const ordered = [...seen].sort((a, b) => a - b);
  if (ordered.some((value, i) => value !== i)) {
    throw new FixationFileError("order_index values must be contiguous from 0", 1);
  }
  return fixations.sort((a, b) => a.order_index - b.order_index);
}

export interface ReplayFrame {
  fixation: FixationPoint;
  /** milliseconds from replay start at which this fixation appears */
  startMs: number;
  /** how long the marker stays highlighted */
  holdMs: number;
}

/** Animation schedule for the gaze replay overlay. `speed` compresses or
 * stretches presentation time only; the fixation data is untouched. */
export function replaySchedule(fixations: FixationPoint[], speed = 1): ReplayFrame[] {
  if (speed <= 0) {
    throw new Error("speed must be positive");
  }
  let clock = 0;
  return [...fixations]
    .sort((a, b) => a.order_index - b.order_index)
    .map((fixation) => {
      const frame: ReplayFrame = {
        fixation,
        startMs: clock / speed,
        holdMs: fixation.duration / speed,
      };
      clock += fixation.duration;
      return frame;
    });
}
