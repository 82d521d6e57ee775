/**
 * Fixed-shape reset/step adapter over the environment protocol, for
 * trainers that need constant observation dimensions. Every value in a
 * flattened observation is either a served value copied verbatim or a
 * padding zero; the adapter does no numeric work beyond ordering.
 */

import {
  EnvClient,
  type StepInfo,
  type WireObservation,
} from "./protocol.js";

export interface AdapterConfig {
  /** "host:port" or "cmd:<command line>". */
  endpoint: string;
  /** Padding width of the pedestrian block; must be >= 1. */
  maxPeds: number;
  /** Scenario split served by reset() round-robin; default "all". */
  split?: string;
}

export interface FlatObservation {
  /** px, py, vx, vy, theta, radius, v_pref, gx, gy. */
  ego: number[];
  /**
   * maxPeds slots of (2 + K*5) values: current x, y, then K prediction
   * steps of (mx, my, sxx, sxy, syy). Unused slots are zero.
   */
  peds: number[];
  /** 1 for a real pedestrian in the slot, 0 for padding. */
  mask: number[];
}

export interface StepResult {
  obs: FlatObservation;
  reward: number;
  done: boolean;
  info: StepInfo & { terminalKind: string | null };
}

export class CrowdNavAdapter {
  private episodeIndex = 0;

  private constructor(
    readonly client: EnvClient,
    readonly maxPeds: number,
    /** Prediction steps per pedestrian slot (the server's horizon). */
    readonly horizon: number,
    readonly actionBounds: { vMin: number; vMax: number; dthetaMax: number },
    readonly scenarioIds: string[],
  ) {}

  static async connect(cfg: AdapterConfig): Promise<CrowdNavAdapter> {
    if (!Number.isInteger(cfg.maxPeds) || cfg.maxPeds < 1) {
      throw new RangeError(`maxPeds must be a positive integer, got ${cfg.maxPeds}`);
    }
    const client = await EnvClient.connect(cfg.endpoint);
    const hello = await client.hello();
    const horizon = hello.config.horizon;
    if (typeof horizon !== "number" || !Number.isInteger(horizon)) {
      throw new TypeError("server config is missing an integer horizon");
    }
    const ids = await client.listScenarios(cfg.split ?? "all");
    const b = hello.action_bounds;
    return new CrowdNavAdapter(client, cfg.maxPeds, horizon, {
      vMin: b.v_min,
      vMax: b.v_max,
      dthetaMax: b.dtheta_max,
    }, ids);
  }

  /** Width of one pedestrian slot. */
  get slotWidth(): number {
    return 2 + this.horizon * 5;
  }

  /**
   * Start an episode. Without an explicit scenario id, cycles through the
   * configured split in server order.
   */
  async reset(scenarioId?: string): Promise<FlatObservation> {
    const id =
      scenarioId ??
      this.scenarioIds[this.episodeIndex++ % this.scenarioIds.length];
    const reply = await this.client.reset(id);
    return this.flatten(reply.observation);
  }

  async step(v: number, dtheta: number): Promise<StepResult> {
    const reply = await this.client.step(v, dtheta);
    return {
      obs: this.flatten(reply.observation),
      reward: reply.reward,
      done: reply.done,
      info: { ...reply.info, terminalKind: reply.terminal_kind },
    };
  }

  close(): void {
    this.client.close();
  }

  private flatten(obs: WireObservation): FlatObservation {
    const av = obs.av;
    const ego = [
      av.px,
      av.py,
      av.vx,
      av.vy,
      av.theta,
      av.radius,
      av.v_pref,
      av.gx,
      av.gy,
    ];
    // nearest pedestrians first; sort is stable, ties keep served order
    const bySquaredDistance = obs.peds
      .map((ped, i) => {
        const dx = ped.px - av.px;
        const dy = ped.py - av.py;
        return { ped, i, d2: dx * dx + dy * dy };
      })
      .sort((a, b) => a.d2 - b.d2)
      .slice(0, this.maxPeds);

    const width = this.slotWidth;
    const peds = new Array<number>(this.maxPeds * width).fill(0);
    const mask = new Array<number>(this.maxPeds).fill(0);
    bySquaredDistance.forEach(({ ped }, slot) => {
      mask[slot] = 1;
      const base = slot * width;
      peds[base] = ped.px;
      peds[base + 1] = ped.py;
      const steps = Math.min(ped.track.length, this.horizon);
      for (let k = 0; k < steps; k++) {
        const g = ped.track[k];
        const off = base + 2 + k * 5;
        peds[off] = g.mx;
        peds[off + 1] = g.my;
        peds[off + 2] = g.sxx;
        peds[off + 3] = g.sxy;
        peds[off + 4] = g.syy;
      }
    });
    return { ego, peds, mask };
  }
}
