import { describe, expect, it } from "vitest";

import { ResponseGate } from "../requestGate.js";

describe("ResponseGate", () => {
  it("accepts in-order responses", () => {
    const gate = new ResponseGate();
    const a = gate.next();
    const b = gate.next();
    expect(gate.accept(a)).toBe(true);
    expect(gate.accept(b)).toBe(true);
  });

  it("discards a stale response arriving after a newer one", () => {
    const gate = new ResponseGate();
    const older = gate.next();
    const newer = gate.next();
    expect(gate.accept(newer)).toBe(true);
    expect(gate.accept(older)).toBe(false);
  });

  it("discards duplicates", () => {
    const gate = new ResponseGate();
    const seq = gate.next();
    expect(gate.accept(seq)).toBe(true);
    expect(gate.accept(seq)).toBe(false);
  });

  it("the displayed frame always corresponds to the latest accepted edit", () => {
    const gate = new ResponseGate();
    const seqs = [gate.next(), gate.next(), gate.next(), gate.next()];
    // responses arrive shuffled: 2, 4, 1, 3
    const arrival = [seqs[1], seqs[3], seqs[0], seqs[2]];
    const rendered: number[] = [];
    for (const seq of arrival) {
      if (gate.accept(seq)) rendered.push(seq);
    }
    expect(rendered).toEqual([seqs[1], seqs[3]]);
    expect(rendered[rendered.length - 1]).toBe(gate.latest);
  });
});
