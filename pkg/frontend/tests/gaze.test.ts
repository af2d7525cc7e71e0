import { describe, expect, it } from "vitest";

import { FixationFileError, parseFixationFile, replaySchedule } from "../src/gaze.js";

const VALID = JSON.stringify([
  { x: 10, y: 20, duration: 250, order_index: 0 },
  { x: 30, y: 40, duration: 120, order_index: 1 },
]);

describe("parseFixationFile", () => {
  it("parses a JSON array file", () => {
    const fixations = parseFixationFile(VALID);
    expect(fixations).toHaveLength(2);
    expect(fixations[0]).toEqual({ x: 10, y: 20, duration: 250, order_index: 0 });
  });

  it("parses JSONL and sorts by order_index", () => {
    const content = [
      JSON.stringify({ x: 3, y: 4, duration: 80, order_index: 1 }),
      JSON.stringify({ x: 1, y: 2, duration: 90, order_index: 0 }),
    ].join("\n");
    const fixations = parseFixationFile(content);
    expect(fixations.map((f) => f.order_index)).toEqual([0, 1]);
  });

  it("reports the offending line for malformed JSONL", () => {
    const content = [
      JSON.stringify({ x: 1, y: 2, duration: 90, order_index: 0 }),
      "{not json",
    ].join("\n");
    try {
      parseFixationFile(content);
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(FixationFileError);
      expect((err as FixationFileError).line).toBe(2);
    }
  });

  it("rejects non-positive durations, gaps, and duplicates", () => {
    expect(() =>
      parseFixationFile(JSON.stringify([{ x: 1, y: 2, duration: 0, order_index: 0 }])),
    ).toThrow(/duration/);
    expect(() =>
      parseFixationFile(
        JSON.stringify([
          { x: 1, y: 2, duration: 10, order_index: 0 },
          { x: 1, y: 2, duration: 10, order_index: 2 },
        ]),
      ),
    ).toThrow(/contiguous/);
    expect(() =>
      parseFixationFile(
        JSON.stringify([
          { x: 1, y: 2, duration: 10, order_index: 0 },
          { x: 1, y: 2, duration: 10, order_index: 0 },
        ]),
      ),
    ).toThrow(/duplicate/);
  });

  it("rejects empty files with no partial result", () => {
    expect(() => parseFixationFile("   ")).toThrow(FixationFileError);
  });
});

describe("replaySchedule", () => {
  it("scales presentation timing without touching the data", () => {
    const fixations = parseFixationFile(VALID);
    const normal = replaySchedule(fixations, 1);
    const fast = replaySchedule(fixations, 4);
    expect(normal[1]!.startMs).toBe(250);
    expect(fast[1]!.startMs).toBe(62.5);
    expect(fast[0]!.holdMs).toBe(62.5);
    // the submitted fixation objects are the file's exact values
    expect(fast.map((f) => f.fixation)).toEqual(fixations);
  });

  it("rejects non-positive speeds", () => {
    expect(() => replaySchedule([], 0)).toThrow(/speed/);
  });
});
