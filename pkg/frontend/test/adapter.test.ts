import { execSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { CrowdNavAdapter, type FlatObservation } from "../src/adapter.js";
import type { WireObservation } from "../src/protocol.js";

let crossingDir: string;
let emptyDir: string;

function synth(template: string, count: number, peds: number, seed: number): string {
  const dir = mkdtempSync(join(tmpdir(), "pednav-adapter-"));
  execSync(
    `python3 -m pednav synth --template ${template} --count ${count} ` +
      `--peds ${peds} --seed ${seed} --out ${dir}`,
    { stdio: "pipe" },
  );
  return dir;
}

function serveEndpoint(dir: string): string {
  return `cmd:python3 -m pednav serve --stdio --scenarios ${dir}`;
}

/** Deterministic float stream in [0, 1); mulberry32. */
function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

beforeAll(() => {
  crossingDir = synth("crossing", 10, 3, 5);
  emptyDir = synth("static_crowd", 2, 0, 1);
});

afterAll(() => {
  rmSync(crossingDir, { recursive: true, force: true });
  rmSync(emptyDir, { recursive: true, force: true });
});

function maskCount(obs: FlatObservation): number {
  return obs.mask.reduce((s, m) => s + m, 0);
}

/**
 * Every flattened value must be a served value copied verbatim. Checks the
 * ego block field by field, locates each served pedestrian in exactly one
 * slot by bit-exact match of its full slot content, and requires padding
 * slots to be all zero.
 */
function expectBitExact(
  adapter: CrowdNavAdapter,
  served: WireObservation,
  flat: FlatObservation,
): void {
  const av = served.av;
  const egoExpected = [
    av.px, av.py, av.vx, av.vy, av.theta, av.radius, av.v_pref, av.gx, av.gy,
  ];
  expect(flat.ego.length).toBe(9);
  egoExpected.forEach((v, i) => {
    expect(Object.is(flat.ego[i], v), `ego[${i}]`).toBe(true);
  });

  const width = adapter.slotWidth;
  expect(flat.peds.length).toBe(adapter.maxPeds * width);
  expect(maskCount(flat)).toBe(Math.min(served.peds.length, adapter.maxPeds));

  const slotValues = (slot: number) =>
    flat.peds.slice(slot * width, (slot + 1) * width);
  const matchedSlots = new Set<number>();
  if (served.peds.length <= adapter.maxPeds) {
    for (const ped of served.peds) {
      const wanted = [ped.px, ped.py];
      for (const g of ped.track) wanted.push(g.mx, g.my, g.sxx, g.sxy, g.syy);
      const hits = [];
      for (let s = 0; s < adapter.maxPeds; s++) {
        const got = slotValues(s);
        if (wanted.every((v, i) => Object.is(got[i], v))) hits.push(s);
      }
      expect(hits.length, `pedestrian ${ped.id} occupies one slot`).toBe(1);
      matchedSlots.add(hits[0]);
    }
  }
  for (let s = 0; s < adapter.maxPeds; s++) {
    if (flat.mask[s] === 0) {
      expect(slotValues(s).every((v) => v === 0), `slot ${s} is padding`).toBe(true);
      expect(matchedSlots.has(s)).toBe(false);
    }
  }
}

function servedObservation(adapter: CrowdNavAdapter): WireObservation {
  const parsed = JSON.parse(adapter.client.lastRaw);
  return parsed.observation as WireObservation;
}

describe("hello", () => {
  test("advertises the environment's action bounds", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(crossingDir),
      maxPeds: 8,
    });
    try {
      expect(Object.is(adapter.actionBounds.vMin, -1.0)).toBe(true);
      expect(Object.is(adapter.actionBounds.vMax, 4.167)).toBe(true);
      expect(Object.is(adapter.actionBounds.dthetaMax, 0.1)).toBe(true);
      expect(adapter.horizon).toBe(6);
      expect(adapter.scenarioIds.length).toBe(10);
    } finally {
      adapter.close();
    }
  });

  test("rejects a non-positive maxPeds", async () => {
    await expect(
      CrowdNavAdapter.connect({ endpoint: serveEndpoint(emptyDir), maxPeds: 0 }),
    ).rejects.toThrow(/maxPeds/);
  });
});

describe("episodes", () => {
  test("a random policy completes 10 episodes over a subprocess transport", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(crossingDir),
      maxPeds: 8,
    });
    const r = rng(2024);
    const { vMin, vMax, dthetaMax } = adapter.actionBounds;
    try {
      let finished = 0;
      for (let ep = 0; ep < 10; ep++) {
        await adapter.reset();
        for (let k = 0; k < 200; k++) {
          const v = vMin + r() * (vMax - vMin);
          const dtheta = (2 * r() - 1) * dthetaMax;
          const res = await adapter.step(v, dtheta);
          expect(Number.isFinite(res.reward)).toBe(true);
          if (res.done) {
            expect(res.info.terminalKind).toMatch(/^(goal|collision|timeout)$/);
            finished++;
            break;
          }
        }
      }
      expect(finished).toBe(10);
    } finally {
      adapter.close();
    }
  });

  test("reaching the goal serves +10 exactly", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(emptyDir),
      maxPeds: 4,
    });
    try {
      await adapter.reset();
      let last;
      do {
        last = await adapter.step(adapter.actionBounds.vMax, 0.0);
      } while (!last.done);
      expect(last.info.terminalKind).toBe("goal");
      expect(Object.is(last.reward, 10)).toBe(true);
    } finally {
      adapter.close();
    }
  });

  test("step after done mirrors the protocol error and reset recovers", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(emptyDir),
      maxPeds: 4,
    });
    try {
      await adapter.reset();
      let res;
      do {
        res = await adapter.step(adapter.actionBounds.vMax, 0.0);
      } while (!res.done);
      await expect(adapter.step(1.0, 0.0)).rejects.toThrow(/episode ended/);
      const obs = await adapter.reset();
      expect(obs.ego.length).toBe(9);
    } finally {
      adapter.close();
    }
  });

  test("an unknown scenario id rejects and the session stays usable", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(crossingDir),
      maxPeds: 8,
    });
    try {
      await expect(adapter.reset("no-such-scene")).rejects.toThrow(
        /unknown scenario/,
      );
      const obs = await adapter.reset(adapter.scenarioIds[0]);
      expect(obs.ego.length).toBe(9);
    } finally {
      adapter.close();
    }
  });
});

describe("flattening", () => {
  test("observations round-trip bit-exactly from the served JSON", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(crossingDir),
      maxPeds: 8,
    });
    try {
      let sawAllThree = false;
      for (const id of adapter.scenarioIds.slice(0, 3)) {
        let flat = await adapter.reset(id);
        expectBitExact(adapter, servedObservation(adapter), flat);
        for (let k = 0; k < 40; k++) {
          const res = await adapter.step(2.0, 0.01);
          const parsed = JSON.parse(adapter.client.lastRaw);
          expect(Object.is(res.reward, parsed.reward)).toBe(true);
          expectBitExact(adapter, parsed.observation, res.obs);
          if (maskCount(res.obs) === 3) sawAllThree = true;
          if (res.done) break;
        }
      }
      // the crossing template has 3 walkers; the drive must meet them
      expect(sawAllThree).toBe(true);
    } finally {
      adapter.close();
    }
  });

  test("an empty scene flattens to a zero pedestrian block", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(emptyDir),
      maxPeds: 4,
    });
    try {
      const flat = await adapter.reset();
      expect(flat.mask).toEqual([0, 0, 0, 0]);
      expect(flat.peds.every((v) => v === 0)).toBe(true);
      expectBitExact(adapter, servedObservation(adapter), flat);
    } finally {
      adapter.close();
    }
  });

  test("the nearest pedestrian wins the slot when the crowd exceeds maxPeds", async () => {
    const adapter = await CrowdNavAdapter.connect({
      endpoint: serveEndpoint(crossingDir),
      maxPeds: 1,
    });
    try {
      await adapter.reset();
      let checked = 0;
      for (let k = 0; k < 60; k++) {
        const res = await adapter.step(2.0, 0.0);
        const served = servedObservation(adapter);
        if (served.peds.length >= 2) {
          const av = served.av;
          let best = 0;
          let bestD2 = Infinity;
          served.peds.forEach((p, i) => {
            const d2 = (p.px - av.px) ** 2 + (p.py - av.py) ** 2;
            if (d2 < bestD2) {
              bestD2 = d2;
              best = i;
            }
          });
          expect(Object.is(res.obs.peds[0], served.peds[best].px)).toBe(true);
          expect(Object.is(res.obs.peds[1], served.peds[best].py)).toBe(true);
          expect(maskCount(res.obs)).toBe(1);
          checked++;
        }
        if (res.done) break;
      }
      expect(checked).toBeGreaterThan(0);
    } finally {
      adapter.close();
    }
  });
});
